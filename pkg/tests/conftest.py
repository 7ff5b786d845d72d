"""Pytest configuration and shared fixtures."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from locc_marker.config import RunConfig
from locc_marker.ensembles import Ensemble, EnsembleMember, PartyStructure, build_named
from locc_marker.numkernel import StateVector

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def load_fixture(name: str) -> dict[str, Any]:
    """Load a JSON fixture file."""
    path = FIXTURES_DIR / name
    with open(path) as f:
        return json.load(f)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep LOCC_MARKER_* variables from the calling shell out of the tests."""
    for var in (
        "LOCC_MARKER_CONFIG",
        "LOCC_MARKER_SEED",
        "LOCC_MARKER_RESTARTS",
        "LOCC_MARKER_LOG_LEVEL",
    ):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def quick_config() -> RunConfig:
    """Run config with a small heuristic budget."""
    return RunConfig(restarts=20, max_iterations=100, max_concurrency=2)


@pytest.fixture
def bennett9() -> Ensemble:
    """Bennett's nine product states."""
    return build_named("bennett9")


@pytest.fixture
def duan4() -> Ensemble:
    """Four independent product states that are not locally identifiable."""
    return build_named("duan4")


@pytest.fixture
def pw_trine() -> Ensemble:
    """Double trine ensemble."""
    return build_named("pw_trine")


@pytest.fixture
def antiparallel_sic() -> Ensemble:
    """Anti-parallel double SIC UPB."""
    return build_named("double_sic_antiparallel")


@pytest.fixture
def upb_tiles() -> Ensemble:
    """Tiles UPB."""
    return build_named("upb_tiles")


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


AXIS_STATES = [
    StateVector.from_amplitudes(amps)
    for amps in ([1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j])
]


def random_axis_ensemble(rng: np.random.Generator, size: int) -> Ensemble:
    """Distinct two-qubit products of Pauli eigenstates, drawn without replacement."""
    picks = rng.choice(len(AXIS_STATES) ** 2, size=size, replace=False)
    members = []
    for k, pick in enumerate(picks):
        a, b = divmod(int(pick), len(AXIS_STATES))
        members.append(EnsembleMember.product(f"s{k}", [AXIS_STATES[a], AXIS_STATES[b]]))
    return Ensemble(f"axis{size}", PartyStructure.simple((2, 2)), tuple(members))


def bloch_grid_products(steps: int = 8) -> np.ndarray:
    """Rows a (x) b over a polar-angle grid on both Bloch spheres.

    With ``steps`` divisible by 4 the grid holds every Pauli eigenstate, so it
    contains every detector and extension a two-qubit axis ensemble can have.
    """
    kets = np.array(
        [
            [np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)]
            for theta in np.linspace(0.0, np.pi, steps + 1)
            for phi in 2 * np.pi * np.arange(steps) / steps
        ]
    )
    return np.einsum("ia,jb->ijab", kets, kets).reshape(-1, 4)
