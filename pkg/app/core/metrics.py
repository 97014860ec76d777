from __future__ import annotations

from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

# Experiment metrics
EXPERIMENTS_TOTAL = Counter(
    "relforms_experiments_total",
    "Experiments run by the CLI",
    ["kind", "outcome"],  # outcome: ok|failed_check|error
)

CHECKS_TOTAL = Counter(
    "relforms_checks_total",
    "Self-verification checks evaluated",
    ["outcome"],  # outcome: passed|failed
)

# Numerical stage latency
STAGE_LATENCY_SECONDS = Histogram(
    "relforms_stage_latency_seconds",
    "Latency per numerical stage (seconds)",
    ["stage"],
    buckets=(0.001, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1, 2.5, 5, 10, 30),
)


def normalize_preset_label(preset_id: str | None) -> str:
    """
    Map preset ids onto a low-cardinality label.

    Accepts the ``example-`` prefix used on the command line.
    """
    if not preset_id:
        return "custom"
    label = preset_id.strip().lower()
    if label.startswith("example-"):
        label = label[len("example-"):]
    return label


def export_metrics(path: str) -> None:
    """Write the default registry in Prometheus text format (textfile collector style)."""
    write_to_textfile(path, REGISTRY)
