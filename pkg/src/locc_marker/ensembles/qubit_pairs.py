"""Two-qubit ensembles: Bell basis, double trine, SIC pairs, and the Duan set."""

from __future__ import annotations

import cmath
import math
from collections.abc import Mapping

from locc_marker.ensembles.base import (
    Ensemble,
    EnsembleBuilder,
    EnsembleMember,
    PartyStructure,
)
from locc_marker.numkernel import StateVector

SQRT2 = math.sqrt(2.0)


def qubit(a: complex, b: complex) -> StateVector:
    """Normalized a|0> + b|1>."""
    return StateVector.from_amplitudes([a, b])


def perp(v: StateVector) -> StateVector:
    """The qubit state orthogonal to ``v``."""
    a, b = v.amplitudes
    return qubit(-b.conjugate(), a.conjugate())


def bell_states() -> list[StateVector]:
    """Phi+, Phi-, Psi+, Psi- on C^2 x C^2."""
    r = 1 / SQRT2
    return [
        StateVector((2, 2), [r, 0, 0, r]),
        StateVector((2, 2), [r, 0, 0, -r]),
        StateVector((2, 2), [0, r, r, 0]),
        StateVector((2, 2), [0, r, -r, 0]),
    ]


def trine_state(k: int) -> StateVector:
    """Real qubit rotated by k * pi/3 from |0>."""
    angle = k * math.pi / 3
    return qubit(math.cos(angle), math.sin(angle))


def sic_states() -> list[StateVector]:
    """Four qubit states with pairwise squared overlap 1/3."""
    states = [qubit(1, 0)]
    for j in range(2, 5):
        phase = cmath.exp(2j * math.pi * (j - 2) / 3)
        states.append(qubit(1, phase * SQRT2))
    return states


class BellBuilder(EnsembleBuilder):
    """The four Bell states."""

    @property
    def builder_id(self) -> str:
        return "bell"

    @property
    def description(self) -> str:
        return "Bell basis of two qubits (entangled, orthonormal)"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = tuple(
            EnsembleMember(f"B{i + 1}", state) for i, state in enumerate(bell_states())
        )
        return Ensemble("bell", PartyStructure.simple((2, 2)), members)


class PwTrineBuilder(EnsembleBuilder):
    """Double-trine ensemble w_k (x) w_k, k = 0, 1, 2."""

    @property
    def builder_id(self) -> str:
        return "pw_trine"

    @property
    def description(self) -> str:
        return "double trine: three parallel product states at 60 degree steps"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = tuple(
            EnsembleMember.product(f"w{k}w{k}", [trine_state(k), trine_state(k)])
            for k in range(3)
        )
        return Ensemble("pw_trine", PartyStructure.simple((2, 2)), members)


class SicQubitBuilder(EnsembleBuilder):
    """Single-party SIC ensemble."""

    @property
    def builder_id(self) -> str:
        return "sic_qubit"

    @property
    def description(self) -> str:
        return "four SIC qubit states on a single party"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = tuple(
            EnsembleMember.product(f"s{i + 1}", [s]) for i, s in enumerate(sic_states())
        )
        return Ensemble("sic_qubit", PartyStructure.simple((2,)), members)


class DoubleSicParallelBuilder(EnsembleBuilder):
    """s_i (x) s_i; spans only the symmetric subspace."""

    @property
    def builder_id(self) -> str:
        return "double_sic_parallel"

    @property
    def description(self) -> str:
        return "parallel double SIC: s_i x s_i (linearly dependent, rank 3)"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = tuple(
            EnsembleMember.product(f"s{i + 1}s{i + 1}", [s, s])
            for i, s in enumerate(sic_states())
        )
        return Ensemble("double_sic_parallel", PartyStructure.simple((2, 2)), members)


class DoubleSicAntiparallelBuilder(EnsembleBuilder):
    """s_i (x) s_i^perp."""

    @property
    def builder_id(self) -> str:
        return "double_sic_antiparallel"

    @property
    def description(self) -> str:
        return "anti-parallel double SIC: s_i x s_i-perp (a UPB spanning C^2 x C^2)"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        members = tuple(
            EnsembleMember.product(f"gamma{i + 1}", [s, perp(s)])
            for i, s in enumerate(sic_states())
        )
        return Ensemble("double_sic_antiparallel", PartyStructure.simple((2, 2)), members)


class Duan4Builder(EnsembleBuilder):
    """|00>, |11>, |++>, |i+>|i->."""

    @property
    def builder_id(self) -> str:
        return "duan4"

    @property
    def description(self) -> str:
        return "four linearly independent two-qubit product states, not locally identifiable"

    def build(self, params: Mapping[str, int]) -> Ensemble:
        zero, one = qubit(1, 0), qubit(0, 1)
        plus = qubit(1, 1)
        i_plus, i_minus = qubit(1, 1j), qubit(1, -1j)
        factors = [(zero, zero), (one, one), (plus, plus), (i_plus, i_minus)]
        members = tuple(
            EnsembleMember.product(f"D{i + 1}", list(pair)) for i, pair in enumerate(factors)
        )
        return Ensemble("duan4", PartyStructure.simple((2, 2)), members)
