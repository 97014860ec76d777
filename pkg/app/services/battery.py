"""
Concurrent preset battery.

Presets share no state, so each one runs in the default executor. Results come
back in the order of ``ids`` whatever the completion order.
"""
from __future__ import annotations

import asyncio
import contextvars
import functools
from typing import Callable, Sequence, TypeVar

from app.core.config import settings
from app.core.logging import get_logger

logger = get_logger(__name__)

T = TypeVar("T")


class BatteryRunner:
    """Runs ``run_one(id)`` for many ids with at most ``max_workers`` in flight."""

    def __init__(self, run_one: Callable[[str], T], max_workers: int | None = None):
        self.run_one = run_one
        self.max_workers = max_workers or settings.MAX_WORKERS

    async def _run(self, preset_id: str, limit: asyncio.Semaphore) -> T:
        async with limit:
            loop = asyncio.get_running_loop()
            # worker threads log under the caller's run id
            ctx = contextvars.copy_context()
            func = functools.partial(ctx.run, self.run_one, preset_id)
            logger.debug(f"Dispatching preset {preset_id}")
            return await loop.run_in_executor(None, func)

    async def run(self, ids: Sequence[str]) -> list[T]:
        if not ids:
            return []
        limit = asyncio.Semaphore(self.max_workers)
        results = await asyncio.gather(*(self._run(i, limit) for i in ids))
        logger.info(f"Battery finished: {len(results)} presets")
        return list(results)


async def run_battery(ids: Sequence[str], run_one: Callable[[str], T], max_workers: int | None = None) -> list[T]:
    return await BatteryRunner(run_one, max_workers).run(ids)
