"""Two-qutrit product ensembles: Bennett's nine states and the Tiles UPB."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

from locc_marker.ensembles.base import (
    Ensemble,
    EnsembleBuilder,
    EnsembleMember,
    PartyStructure,
)
from locc_marker.numkernel import StateVector


def qutrit(*amplitudes: complex) -> StateVector:
    """Normalized qutrit from (unnormalized) amplitudes."""
    return StateVector.from_amplitudes(list(amplitudes))


def _members(
    prefix: str, start: int, pairs: Sequence[tuple[StateVector, StateVector]]
) -> tuple[EnsembleMember, ...]:
    return tuple(
        EnsembleMember.product(f"{prefix}{i + start}", [a, b]) for i, (a, b) in enumerate(pairs)
    )


def bennett_pairs() -> list[tuple[StateVector, StateVector]]:
    """Local factors of the nine orthogonal product states."""
    k0, k1, k2 = qutrit(1, 0, 0), qutrit(0, 1, 0), qutrit(0, 0, 1)
    return [
        (k1, k1),
        (k0, qutrit(1, 1, 0)),
        (k0, qutrit(1, -1, 0)),
        (k2, qutrit(0, 1, 1)),
        (k2, qutrit(0, 1, -1)),
        (qutrit(0, 1, 1), k0),
        (qutrit(0, 1, -1), k0),
        (qutrit(1, 1, 0), k2),
        (qutrit(1, -1, 0), k2),
    ]


def tiles_pairs() -> list[tuple[StateVector, StateVector]]:
    """Local factors of the five-state Tiles UPB in C^3 x C^3."""
    k0, k2 = qutrit(1, 0, 0), qutrit(0, 0, 1)
    uniform = qutrit(1, 1, 1)
    return [
        (k0, qutrit(1, -1, 0)),
        (qutrit(1, -1, 0), k2),
        (k2, qutrit(0, 1, -1)),
        (qutrit(0, 1, -1), k0),
        (uniform, uniform),
    ]


class Bennett9Builder(EnsembleBuilder):
    """Nine orthogonal product states of C^3 x C^3."""

    @property
    def builder_id(self) -> str:
        return "bennett9"

    @property
    def description(self) -> str:
        return "Bennett's nine orthogonal product states in C^3 x C^3"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = _members("psi", 1, bennett_pairs())
        return Ensemble("bennett9", PartyStructure.simple((3, 3)), members)


class UpbTilesBuilder(EnsembleBuilder):
    """Tiles unextendible product basis."""

    @property
    def builder_id(self) -> str:
        return "upb_tiles"

    @property
    def description(self) -> str:
        return "Tiles UPB: five orthogonal product states in C^3 x C^3"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = _members("tile", 0, tiles_pairs())
        return Ensemble("upb_tiles", PartyStructure.simple((3, 3)), members)
