"""Extendibility of bipartite ensembles and UB/GUB/UPB/GUPB classification.

A bipartite product ensemble is extendible iff its members split into set_a
and set_b with the Alice factors of set_a and the Bob factors of set_b both
rank deficient: a product state orthogonal to set_a on Alice's side and to
set_b on Bob's side is then orthogonal to everything.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.detect import DEFAULT_BRANCH_CAP, CLSDVerdict, Overall, clsd_verdict
from locc_marker.ensembles.base import Ensemble
from locc_marker.errors import (
    CertificateVerificationError,
    DependentInputError,
    InvalidParameterError,
    NonBipartiteError,
    NonProductMemberError,
)
from locc_marker.marking import check_linear_independence
from locc_marker.metrics import record_partitions
from locc_marker.numkernel import (
    StateVector,
    matrix_rank,
    nullspace_of_rows,
    orthocomplement,
    schmidt_rank,
    stack_rows,
    tensor_product,
)

logger = logging.getLogger(__name__)

EXTENSION_TOL = 1e-9


class Side(str, Enum):
    A = "A"
    B = "B"


@dataclass
class PartitionWitness:
    """set_a is annihilated on Alice's factor, set_b on Bob's."""

    set_a_labels: list[str]
    set_b_labels: list[str]
    r_a: int
    r_b: int
    extension_state: StateVector | None = None


@dataclass
class EnumerationSummary:
    """Outcome of an exhaustive partition search that found nothing."""

    ensemble: str
    partitions_checked: int
    alice_deficient: int


class _LocalFactors:
    """Unit per-party factors of a bipartite product ensemble, with rank lookups."""

    def __init__(self, e: Ensemble, tol: ToleranceConfig) -> None:
        if e.structure.num_parties != 2:
            raise NonBipartiteError(f"{e.name} has {e.structure.num_parties} parties, need 2")
        for member in e.members:
            if not member.is_product:
                raise NonProductMemberError(f"member '{member.label}' is not a product state")
        self.ensemble = e
        self.tol = tol
        self.dims = e.structure.party_dims
        self.rows = [
            np.array(
                [
                    m.product_factors[p].amplitudes / m.product_factors[p].norm  # type: ignore[index]
                    for m in e.members
                ]
            )
            for p in range(2)
        ]

    def rank(self, party: int, indices: tuple[int, ...]) -> int:
        if not indices:
            return 0
        return matrix_rank(self.rows[party][list(indices)], self.tol)

    def extension(self, set_a: tuple[int, ...], set_b: tuple[int, ...]) -> StateVector:
        """Product state killing set_a on Alice and set_b on Bob, checked against all members."""
        local = []
        for party, indices in ((0, set_a), (1, set_b)):
            null = nullspace_of_rows(self.rows[party][list(indices)], self.dims[party], self.tol)
            local.append(StateVector((self.dims[party],), null[:, 0]))
        state = tensor_product(local[0], local[1])
        overlaps = np.abs(stack_rows(self.ensemble.vectors()).conj() @ state.amplitudes)
        norms = np.array([v.norm for v in self.ensemble.vectors()])
        worst = float(np.max(overlaps / norms))
        if worst > EXTENSION_TOL:
            raise CertificateVerificationError(
                f"extension state has overlap {worst:.3e} with a member"
            )
        return StateVector(self.ensemble.structure.factor_dims, state.amplitudes)

    def witness(self, set_a: tuple[int, ...], r_a: int, r_b: int) -> PartitionWitness:
        labels = self.ensemble.labels
        set_b = tuple(i for i in range(len(labels)) if i not in set_a)
        extension = None
        if r_a < self.dims[0] and r_b < self.dims[1]:
            extension = self.extension(set_a, set_b)
        return PartitionWitness(
            [labels[i] for i in set_a], [labels[i] for i in set_b], r_a, r_b, extension
        )


def find_orthogonal_product_state(
    e: Ensemble, tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> PartitionWitness | EnumerationSummary:
    """First partition (by bitmask of set_a) with both local ranks deficient.

    Raises:
        NonProductMemberError: a member has no product factorization
        NonBipartiteError: the ensemble has other than two parties
    """
    factors = _LocalFactors(e, tol)
    n = len(e)
    full = (1 << n) - 1
    deficient = 0
    for mask in range(1 << n):
        set_a = tuple(i for i in range(n) if mask >> i & 1)
        r_a = factors.rank(0, set_a)
        if r_a >= factors.dims[0]:
            continue
        deficient += 1
        set_b = tuple(i for i in range(n) if (full ^ mask) >> i & 1)
        r_b = factors.rank(1, set_b)
        if r_b < factors.dims[1]:
            record_partitions(mask + 1)
            logger.debug(f"{e.name} is extendible via partition mask {mask:#x}")
            return factors.witness(set_a, r_a, r_b)

    record_partitions(1 << n)
    logger.info(f"{e.name}: none of {1 << n} partitions is rank deficient on both sides")
    return EnumerationSummary(e.name, 1 << n, deficient)


def enumerate_low_rank_partitions(
    e: Ensemble,
    side: Side | str,
    rank_bound: int,
    subset_size: int | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> list[PartitionWitness]:
    """Subsets whose ``side`` factors have rank at most ``rank_bound``.

    The chosen subset is set_a for side A and set_b for side B; each witness
    carries the other side's rank of the complementary set. Subsets come in
    lexicographic order, smallest size first when no size is given.
    """
    factors = _LocalFactors(e, tol)
    n = len(e)
    chosen_side = Side(side)
    if subset_size is not None and not 0 <= subset_size <= n:
        raise InvalidParameterError(f"subset size {subset_size} outside 0..{n}")
    sizes = [subset_size] if subset_size is not None else list(range(1, n + 1))
    chosen, other = (0, 1) if chosen_side == Side.A else (1, 0)

    found: list[PartitionWitness] = []
    checked = 0
    for size in sizes:
        for subset in itertools.combinations(range(n), size):
            checked += 1
            r_chosen = factors.rank(chosen, subset)
            if r_chosen > rank_bound:
                continue
            rest = tuple(i for i in range(n) if i not in subset)
            r_other = factors.rank(other, rest)
            if chosen_side == Side.A:
                found.append(factors.witness(subset, r_chosen, r_other))
            else:
                found.append(factors.witness(rest, r_other, r_chosen))
    record_partitions(checked)
    logger.info(
        f"{e.name}: {len(found)} of {checked} subsets have "
        f"side-{chosen_side.value} rank <= {rank_bound}"
    )
    return found


# =============================================================================
# Classification
# =============================================================================
@dataclass
class SubsetReport:
    """Extendibility of the ensemble with one member removed."""

    removed_label: str
    extendible: bool | None
    method: str
    witness: PartitionWitness | None = None
    extension_state: StateVector | None = None


@dataclass
class UBClassification:
    ensemble: str
    is_ub: bool | None
    is_gub: bool | None
    is_upb: bool | None
    is_gupb: bool | None
    spans_full_space: bool
    complement_dim: int
    method: str
    maximal_subset_reports: dict[str, SubsetReport] = field(default_factory=dict)

    @property
    def decidable(self) -> bool:
        return self.is_ub is not None and (self.is_ub is False or self.is_gub is not None)


@dataclass
class _Extendibility:
    extendible: bool | None
    method: str
    witness: PartitionWitness | None = None
    extension_state: StateVector | None = None


def _extendibility(e: Ensemble, tol: ToleranceConfig) -> _Extendibility:
    """Decide extendibility exactly, or report that no exact fragment applies."""
    if e.is_product:
        outcome = find_orthogonal_product_state(e, tol)
        if isinstance(outcome, PartitionWitness):
            return _Extendibility(True, "partition", outcome, outcome.extension_state)
        return _Extendibility(False, "partition")

    d_a, d_b = e.structure.party_dims
    complement = orthocomplement(e.vectors(), e.structure.total_dim, tol)
    if not complement:
        return _Extendibility(False, "full_span")
    if len(complement) == 1:
        vector = complement[0]
        if schmidt_rank(vector, e.structure.party_factors(0), tol) == 1:
            return _Extendibility(True, "schmidt", extension_state=vector)
        return _Extendibility(False, "schmidt")
    if len(complement) > (d_a - 1) * (d_b - 1):
        return _Extendibility(True, "dimension_bound")
    return _Extendibility(None, "undecidable")


def classify_unextendible_basis(
    e: Ensemble, tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> UBClassification:
    """UB/GUB/UPB/GUPB flags with per-maximal-subset evidence.

    Genuineness only needs the maximal proper subsets: extendibility passes
    to subsets. Flags left as None could not be decided exactly.

    Raises:
        DependentInputError: the members are linearly dependent
        NonBipartiteError: the ensemble has other than two parties
    """
    vectors = e.vectors()
    if e.structure.num_parties != 2:
        raise NonBipartiteError(f"{e.name} has {e.structure.num_parties} parties, need 2")
    independence = check_linear_independence(vectors, tol)
    if not independence.independent:
        raise DependentInputError(
            f"ensemble '{e.name}' has rank {independence.rank} < {independence.count}"
        )

    complement_dim = e.structure.total_dim - independence.rank
    whole = _extendibility(e, tol)
    is_ub = None if whole.extendible is None else not whole.extendible
    result = UBClassification(
        ensemble=e.name,
        is_ub=is_ub,
        is_gub=None if is_ub is None else False,
        is_upb=None if is_ub is None else False,
        is_gupb=None if is_ub is None else False,
        spans_full_space=complement_dim == 0,
        complement_dim=complement_dim,
        method=whole.method,
    )
    if not is_ub:
        if is_ub is None:
            logger.warning(f"{e.name}: extendibility is undecidable with exact methods")
        return result

    undecided = False
    unextendible_subset = False
    for member in e.members:
        sub = _extendibility(e.without(member.label), tol)
        result.maximal_subset_reports[member.label] = SubsetReport(
            member.label, sub.extendible, sub.method, sub.witness, sub.extension_state
        )
        if sub.extendible is None:
            undecided = True
        elif not sub.extendible:
            unextendible_subset = True

    if unextendible_subset:
        result.is_gub = False
    elif undecided:
        result.is_gub = None
        logger.warning(f"{e.name}: genuineness is undecidable with exact methods")
    else:
        result.is_gub = True
    result.is_upb = e.is_product
    result.is_gupb = result.is_gub if e.is_product else False
    logger.info(
        f"{e.name}: UB={result.is_ub} GUB={result.is_gub} UPB={result.is_upb} GUPB={result.is_gupb}"
    )
    return result


@dataclass
class ConsistencyReport:
    """Whether genuineness agrees with conclusive local distinguishability."""

    ensemble: str
    is_gub: bool | None
    clsd_overall: str | None
    consistent: bool | None
    skipped_reason: str | None = None

    @property
    def passed(self) -> bool:
        return self.consistent is True


def crosscheck_lemma_gub(
    e: Ensemble,
    classification: UBClassification | None = None,
    verdict: CLSDVerdict | None = None,
    *,
    branch_cap: int = DEFAULT_BRANCH_CAP,
    restarts: int = 1000,
    seed: int = 42,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> ConsistencyReport:
    """Check that a UB is genuine exactly when it is conclusively locally distinguishable."""
    cls = classification or classify_unextendible_basis(e, tol)
    if cls.is_ub is not True:
        return ConsistencyReport(e.name, cls.is_gub, None, None, "not an unextendible basis")
    if cls.is_gub is None:
        return ConsistencyReport(e.name, None, None, None, "genuineness undecidable")

    verdict = verdict or clsd_verdict(
        e, branch_cap=branch_cap, restarts=restarts, seed=seed, heuristic_over_cap=True, tol=tol
    )
    if verdict.overall == Overall.UNDETERMINED:
        return ConsistencyReport(
            e.name, cls.is_gub, verdict.overall.value, None, "discrimination verdict undetermined"
        )
    consistent = cls.is_gub == (verdict.overall == Overall.DISTINGUISHABLE)
    if not consistent:
        logger.warning(f"{e.name}: GUB={cls.is_gub} but discrimination is {verdict.overall.value}")
    return ConsistencyReport(e.name, cls.is_gub, verdict.overall.value, consistent)
