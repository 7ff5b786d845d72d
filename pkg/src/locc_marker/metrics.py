"""Prometheus metrics definitions and update logic.

Metrics live on a dedicated registry and are written as a textfile by the
CLI (``--metrics-out``); there is no scrape endpoint.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Gauge, write_to_textfile

logger = logging.getLogger(__name__)

REGISTRY = CollectorRegistry()

# =============================================================================
# Search metrics
# =============================================================================
branches_enumerated = Counter(
    "locc_marker_branches_enumerated",
    "Constraint-assignment branches evaluated by exact product detection",
    registry=REGISTRY,
)

partitions_enumerated = Counter(
    "locc_marker_partitions_enumerated",
    "Bipartitions evaluated by the extendibility search",
    registry=REGISTRY,
)

heuristic_restarts = Counter(
    "locc_marker_heuristic_restarts",
    "Restarts run by the alternating detector search",
    registry=REGISTRY,
)

protocol_simulations = Counter(
    "locc_marker_protocol_simulations",
    "Protocol trees simulated against a hypothesis set",
    registry=REGISTRY,
)

# =============================================================================
# Claim metrics
# =============================================================================
claims_total = Counter(
    "locc_marker_claims",
    "Reproduced claims by outcome",
    ["status"],
    registry=REGISTRY,
)

claim_duration = Gauge(
    "locc_marker_claim_duration_seconds",
    "Wall time of the last run of each claim",
    ["claim"],
    registry=REGISTRY,
)

last_run_timestamp = Gauge(
    "locc_marker_last_run_timestamp_seconds",
    "Unix timestamp of the last completed command",
    registry=REGISTRY,
)


# =============================================================================
# Update functions
# =============================================================================
def record_branches(count: int) -> None:
    branches_enumerated.inc(count)


def record_partitions(count: int) -> None:
    partitions_enumerated.inc(count)


def record_restarts(count: int) -> None:
    heuristic_restarts.inc(count)


def record_simulation() -> None:
    protocol_simulations.inc()


def record_claim(claim_id: str, status: str, duration_seconds: float) -> None:
    """Count a claim outcome and keep its duration."""
    claims_total.labels(status=status).inc()
    claim_duration.labels(claim=claim_id).set(duration_seconds)
    if status == "fail":
        logger.warning(f"Claim '{claim_id}' failed after {duration_seconds:.2f}s")


def write_metrics(path: str | Path) -> None:
    """Stamp the run and write all metrics in textfile format."""
    last_run_timestamp.set(time.time())
    write_to_textfile(str(path), REGISTRY)
    logger.info(f"Wrote metrics to {path}")
