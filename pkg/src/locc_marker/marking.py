"""Derived marking sets, linear independence, and dependence witnesses.

Marking m states drawn from an ensemble of N is recast as discriminating the
N!/(N-m)! ordered tuples of distinct members. Each tuple's state is the
tensor product of its members, regrouped so every party holds its own
factors from all m slots (slot-major within the party).
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.ensembles.base import Ensemble, EnsembleMember, PartyStructure
from locc_marker.ensembles.codec import serialize_ensemble
from locc_marker.errors import (
    DependentInputError,
    DimensionMismatchError,
    MarkingRangeError,
    MixedMemberError,
    NoAnchorTupleError,
    NotADependenceError,
    UnknownLabelError,
)
from locc_marker.numkernel import (
    ComplexArray,
    StateVector,
    numerical_rank,
    regroup_factors,
    stack_rows,
    tensor_all,
)

logger = logging.getLogger(__name__)

DEPENDENCE_TOL = 1e-9
COEFF_TOL = 1e-9

SlotTuple = tuple[int, ...]


def marking_permutation(structure: PartyStructure, m: int) -> tuple[int, ...]:
    """Factor permutation from slot-major (slot, factor) to party-major order."""
    per_slot = structure.num_factors
    return tuple(
        slot * per_slot + f
        for party in range(structure.num_parties)
        for slot in range(m)
        for f in structure.party_factors(party)
    )


def marking_structure(structure: PartyStructure, m: int) -> PartyStructure:
    """Party structure of m slots after regrouping."""
    perm = marking_permutation(structure, m)
    per_slot = structure.num_factors
    return PartyStructure(
        tuple(d**m for d in structure.party_dims),
        tuple(structure.factor_assignment[p % per_slot] for p in perm),
        tuple(structure.factor_dims[p % per_slot] for p in perm),
    )


def tuple_label(base: Ensemble, t: Sequence[int]) -> str:
    return ".".join(base.members[i].label for i in t)


@dataclass(frozen=True, eq=False)
class DerivedMarkingSet:
    """All ordered m-tuples of distinct members, as a regrouped ensemble."""

    base: Ensemble
    m: int
    tuples: tuple[SlotTuple, ...]
    derived: Ensemble

    def __len__(self) -> int:
        return len(self.tuples)

    def label_of(self, t: Sequence[int]) -> str:
        return tuple_label(self.base, t)

    def index_of_tuple(self, t: Sequence[int]) -> int:
        try:
            return self.tuples.index(tuple(t))
        except ValueError:
            raise UnknownLabelError(f"tuple {tuple(t)} is not in the marking set") from None

    def slot_factors(self, party: int, slot: int) -> tuple[int, ...]:
        """Derived factor indices holding ``party``'s share of ``slot``."""
        structure = self.base.structure
        offset = sum(self.m * len(structure.party_factors(q)) for q in range(party))
        width = len(structure.party_factors(party))
        start = offset + slot * width
        return tuple(range(start, start + width))

    def to_json(self) -> str:
        return serialize_ensemble(self.derived, (self.base.name, self.m, self.tuples))


def derive_marking_set(
    e: Ensemble, m: int, tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> DerivedMarkingSet:
    """Build the m-slot marking set of a pure ensemble.

    Raises:
        MarkingRangeError: m outside 1..N
        MixedMemberError: a member is mixed
    """
    n = len(e)
    if not 1 <= m <= n:
        raise MarkingRangeError(f"m={m} outside 1..{n} for ensemble '{e.name}'")
    for member in e.members:
        if not member.is_pure:
            raise MixedMemberError(
                f"member '{member.label}' is mixed; "
                "use the protocol module's mixed marking hypotheses"
            )

    structure = e.structure
    perm = marking_permutation(structure, m)
    tuples = tuple(itertools.permutations(range(n), m))
    slot_states = [StateVector(structure.factor_dims, mem.state.amplitudes) for mem in e.members]

    members: list[EnsembleMember] = []
    for t in tuples:
        raw = tensor_all([slot_states[i] for i in t])
        body = regroup_factors(raw, perm)
        factors = None
        if all(e.members[i].is_product for i in t):
            factors = tuple(
                tensor_all([e.members[i].product_factors[p] for i in t])  # type: ignore[index]
                for p in range(structure.num_parties)
            )
        members.append(EnsembleMember(tuple_label(e, t), body, factors))

    derived = Ensemble(f"{e.name}[m={m}]", marking_structure(structure, m), tuple(members))
    logger.info(f"Derived {len(tuples)} marking states of {e.name} for m={m}")
    return DerivedMarkingSet(e, m, tuples, derived)


@dataclass
class LinearIndependenceVerdict:
    independent: bool
    rank: int
    count: int


def check_linear_independence(
    vectors: Sequence[StateVector], tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> LinearIndependenceVerdict:
    """Independent iff the numerical rank equals the number of vectors."""
    if not vectors:
        raise DimensionMismatchError("linear independence needs at least one vector")
    rank = numerical_rank(vectors, tol)
    return LinearIndependenceVerdict(rank == len(vectors), rank, len(vectors))


def nullspace_coefficients(
    e: Ensemble, tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> ComplexArray | None:
    """A unit vector alpha with sum_i alpha_i |psi_i> = 0, or None if independent."""
    columns = stack_rows(e.vectors()).T
    null = scipy.linalg.null_space(columns, rcond=tol.rank_rel_tol)
    if null.shape[1] == 0:
        return None
    return null[:, 0].astype(np.complex128)


def _permutation_sign(perm: Sequence[int]) -> int:
    inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
    return -1 if inversions % 2 else 1


@dataclass
class DependenceWitness:
    """Nontrivial linear relation among derived marking states."""

    coefficients: dict[SlotTuple, complex]
    anchor_tuple: SlotTuple
    residual_norm: float
    m: int = 1

    @property
    def valid(self) -> bool:
        nontrivial = any(abs(c) > COEFF_TOL for c in self.coefficients.values())
        return nontrivial and self.residual_norm <= DEPENDENCE_TOL


def build_dependence_witness(
    e: Ensemble,
    base_coeffs: Sequence[complex] | ComplexArray,
    m: int,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> DependenceWitness:
    """Lift a base dependence to the m-slot marking set by antisymmetrization.

    Raises:
        NotADependenceError: the coefficients do not annihilate the ensemble
        NoAnchorTupleError: every anchor tuple swallows all nonzero coefficients
    """
    vectors = e.vectors()
    alpha = np.asarray(base_coeffs, dtype=np.complex128).reshape(-1)
    n = len(vectors)
    if alpha.size != n:
        raise DimensionMismatchError(f"{alpha.size} coefficients for {n} members")
    if not 1 <= m <= n:
        raise MarkingRangeError(f"m={m} outside 1..{n}")

    combination = stack_rows(vectors).T @ alpha
    base_residual = float(np.linalg.norm(combination))
    if base_residual > DEPENDENCE_TOL or not np.any(np.abs(alpha) > COEFF_TOL):
        raise NotADependenceError(
            f"coefficients leave residual {base_residual:.3e} on ensemble '{e.name}'"
        )

    if m == 1:
        coefficients = {(i,): complex(alpha[i]) for i in range(n)}
        return DependenceWitness(coefficients, (), base_residual, m)

    anchor: SlotTuple | None = None
    for candidate in itertools.permutations(range(n), m - 1):
        if any(abs(alpha[i]) > COEFF_TOL for i in range(n) if i not in candidate):
            anchor = candidate
            break
    if anchor is None:
        raise NoAnchorTupleError(f"no anchor tuple of size {m - 1} leaves a nonzero coefficient")

    coefficients = {}
    for i in range(n):
        if i in anchor or alpha[i] == 0:
            continue
        slots = (i,) + anchor
        for sigma in itertools.permutations(range(m)):
            t = tuple(slots[k] for k in sigma)
            coefficients[t] = _permutation_sign(sigma) * complex(alpha[i])

    derived = derive_marking_set(e, m, tol)
    total = np.zeros(derived.derived.structure.total_dim, dtype=np.complex128)
    for t, c in coefficients.items():
        total += c * derived.derived.members[derived.index_of_tuple(t)].state.amplitudes
    residual = float(np.linalg.norm(total))
    logger.info(
        f"Dependence witness for {e.name} at m={m}: {len(coefficients)} terms, "
        f"anchor {anchor}, residual {residual:.3e}"
    )
    return DependenceWitness(coefficients, anchor, residual, m)


@dataclass
class SlotGrouping:
    """Tuples grouped by the member in their first slot."""

    group_index: dict[SlotTuple, int] = field(default_factory=dict)

    def groups(self) -> dict[int, list[SlotTuple]]:
        result: dict[int, list[SlotTuple]] = {}
        for t, first in self.group_index.items():
            result.setdefault(first, []).append(t)
        return result


def group_by_first_slot(d: DerivedMarkingSet) -> SlotGrouping:
    return SlotGrouping({t: t[0] for t in d.tuples})


@dataclass
class GlobalDetectors:
    """Reciprocal-basis detectors for global conclusive discrimination."""

    labels: list[str]
    vectors: list[StateVector]
    target_overlaps: list[float]

    @property
    def min_target_overlap(self) -> float:
        return min(self.target_overlaps)


def global_detectors(e: Ensemble, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> GlobalDetectors:
    """Unit vectors phi_k with <psi_j|phi_k> = 0 for j != k.

    Raises:
        DependentInputError: the members are linearly dependent
    """
    vectors = e.vectors()
    verdict = check_linear_independence(vectors, tol)
    if not verdict.independent:
        raise DependentInputError(
            f"ensemble '{e.name}' has rank {verdict.rank} < {verdict.count}; no global detectors"
        )
    psi = stack_rows(vectors).T
    dual = psi @ np.linalg.inv(psi.conj().T @ psi)
    detectors: list[StateVector] = []
    overlaps: list[float] = []
    for k, v in enumerate(vectors):
        phi = StateVector.from_amplitudes(dual[:, k], v.dims)
        detectors.append(phi)
        overlaps.append(abs(complex(np.vdot(v.amplitudes, phi.amplitudes))))
    return GlobalDetectors(e.labels, detectors, overlaps)
