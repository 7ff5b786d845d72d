"""Mixed-state ensembles: Yu pair, UPB-based pair, and the Smolin state."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence

import numpy as np

from locc_marker.ensembles.base import (
    Ensemble,
    EnsembleBuilder,
    EnsembleMember,
    PartyStructure,
)
from locc_marker.ensembles.qubit_pairs import bell_states
from locc_marker.ensembles.qutrit import tiles_pairs
from locc_marker.errors import InvalidParameterError
from locc_marker.numkernel import (
    ComplexArray,
    Operator,
    StateVector,
    regroup_operator,
    tensor_all,
)

logger = logging.getLogger(__name__)

# (weight, i, j): weight * B^i (x) B^j with 0-based Bell indices
SmolinTerm = tuple[float, int, int]
SMOLIN_TERMS: tuple[SmolinTerm, ...] = tuple((0.25, i, i) for i in range(4))

# (A1, B1, A2, B2) -> (A1, A2, B1, B2)
PAIRED_TO_PARTY_ORDER = (0, 2, 1, 3)


def maximally_entangled(d: int) -> StateVector:
    """|Phi+_d> = sum_i |ii> / sqrt(d)."""
    amps = np.zeros(d * d, dtype=np.complex128)
    amps[:: d + 1] = 1.0
    return StateVector.from_amplitudes(amps, (d, d))


class YuBuilder(EnsembleBuilder):
    """rho = Phi+_d and sigma = (1 - Phi+_d) / (d^2 - 1)."""

    parameters = ("d",)

    @property
    def builder_id(self) -> str:
        return "yu"

    @property
    def description(self) -> str:
        return "Yu pair: maximally entangled projector and its normalized complement (needs d)"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        d = params.get("d")
        if d is None or d < 2:
            raise InvalidParameterError(f"yu needs integer d >= 2, got {d}")
        rho = maximally_entangled(d).projector()
        sigma = (np.eye(d * d) - rho) / (d * d - 1)
        members = (
            EnsembleMember("rho", Operator((d, d), rho, hermitian=True)),
            EnsembleMember("sigma", Operator((d, d), sigma, hermitian=True)),
        )
        return Ensemble(f"yu_d{d}", PartyStructure.simple((d, d)), members)


def tiles_projector() -> ComplexArray:
    """Projector onto the span of the Tiles UPB."""
    vectors = [tensor_all([a, b]) for a, b in tiles_pairs()]
    return Operator.span_projector(vectors).entries


class XbFromUpbBuilder(EnsembleBuilder):
    """Normalized UPB-span projector and normalized complement projector."""

    @property
    def builder_id(self) -> str:
        return "xb_from_upb"

    @property
    def description(self) -> str:
        return "UPB-based pair: sigma on the Tiles span, rho on its entangled complement"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        span = tiles_projector()
        rank = round(float(np.trace(span).real))
        complement = np.eye(9) - span
        members = (
            EnsembleMember("sigma_upb", Operator((3, 3), span / rank, hermitian=True)),
            EnsembleMember("rho_ent", Operator((3, 3), complement / (9 - rank), hermitian=True)),
        )
        return Ensemble("xb_from_upb", PartyStructure.simple((3, 3)), members)


def _bell_pair_sum(terms: Sequence[SmolinTerm]) -> ComplexArray:
    projectors = [b.projector() for b in bell_states()]
    total = np.zeros((16, 16), dtype=np.complex128)
    for weight, i, j in terms:
        total += weight * np.kron(projectors[i], projectors[j])
    return total


def smolin_density() -> ComplexArray:
    """Smolin state ordered (A1, A2, B1, B2)."""
    return _bell_pair_sum(SMOLIN_TERMS)


def smolin_identity_residual(
    paired_terms: Sequence[SmolinTerm] | None = None,
    party_terms: Sequence[SmolinTerm] | None = None,
) -> float:
    """Max-entry difference between the two Bell-pair decompositions.

    ``paired_terms`` pairs Bell states on (A1B1)(A2B2) and is regrouped to
    party order; ``party_terms`` pairs them on (A1A2)(B1B2) directly.
    """
    paired = Operator((2, 2, 2, 2), _bell_pair_sum(paired_terms or SMOLIN_TERMS))
    regrouped = regroup_operator(paired, PAIRED_TO_PARTY_ORDER).entries
    direct = _bell_pair_sum(party_terms or SMOLIN_TERMS)
    residual = float(np.max(np.abs(regrouped - direct)))
    logger.debug(f"Smolin identity residual: {residual:.3e}")
    return residual


class SmolinBuilder(EnsembleBuilder):
    """Smolin state as a single mixed member split A1A2 : B1B2."""

    @property
    def builder_id(self) -> str:
        return "smolin"

    @property
    def description(self) -> str:
        return "Smolin four-qubit state, parties A1A2 and B1B2"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        structure = PartyStructure((4, 4), (0, 0, 1, 1), (2, 2, 2, 2))
        density = Operator((2, 2, 2, 2), smolin_density(), hermitian=True)
        member = EnsembleMember("rho_smolin", density)
        return Ensemble("smolin", structure, (member,))
