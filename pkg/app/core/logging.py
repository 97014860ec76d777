import contextlib
import contextvars
import logging
import sys
from typing import Iterator

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(run_id)s - %(message)s"

run_id_ctx_var: contextvars.ContextVar[str] = contextvars.ContextVar("run_id", default="-")


class RunIdFilter(logging.Filter):
    """Stamps each record with the id of the relforms run that produced it."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = run_id_ctx_var.get()
        return True


@contextlib.contextmanager
def run_scope(run_id: str) -> Iterator[str]:
    token = run_id_ctx_var.set(run_id)
    try:
        yield run_id
    finally:
        run_id_ctx_var.reset(token)


def setup_logging(log_level: str = "INFO") -> None:
    """
    Single stderr handler on the root logger.

    stdout carries CSV/JSON tables, so nothing else may write there.
    """
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.addFilter(RunIdFilter())

    root = logging.getLogger()
    root.setLevel(log_level)
    root.handlers = [handler]

    # executor hand-offs in the battery runner
    logging.getLogger("asyncio").setLevel("WARNING")


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
