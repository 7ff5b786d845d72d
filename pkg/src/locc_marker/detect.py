"""Product detecting states and conclusive local identifiability verdicts.

A member is conclusively identifiable by local measurements iff some product
vector is orthogonal to every other member and not orthogonal to it. For
product ensembles this is decided exactly: each orthogonality constraint
must be satisfied on at least one party, so the search enumerates which
party absorbs each constraint. Ensembles with entangled members only get a
seeded alternating search, whose failure is evidence, not proof.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.ensembles.base import Ensemble
from locc_marker.errors import (
    BranchCapExceededError,
    CertificateVerificationError,
    MissingCertificateError,
    MixedMemberError,
    NonBipartiteError,
    NonProductMemberError,
)
from locc_marker.marking import (
    DerivedMarkingSet,
    SlotTuple,
    check_linear_independence,
    derive_marking_set,
)
from locc_marker.metrics import record_branches, record_restarts
from locc_marker.numkernel import (
    ComplexArray,
    StateVector,
    nullspace_of_rows,
    numerical_rank,
    stack_rows,
    tensor_all,
)

logger = logging.getLogger(__name__)

OFFTARGET_TOL = 1e-9
TARGET_FLOOR = 1e-6
DEFAULT_BRANCH_CAP = 2**20
CONVERGENCE_TOL = 1e-12


@dataclass
class DetectingCertificate:
    """Product vector orthogonal to every non-target member."""

    target_label: str
    per_party_vectors: list[StateVector]
    max_offtarget_overlap: float
    target_overlap_modulus: float

    @property
    def valid(self) -> bool:
        return (
            self.max_offtarget_overlap <= OFFTARGET_TOL
            and self.target_overlap_modulus >= TARGET_FLOOR
        )

    def detector(self) -> StateVector:
        return tensor_all(self.per_party_vectors)


@dataclass
class BranchFailure:
    """Why one constraint-to-party assignment admits no detector.

    ``assignment`` encodes the party of constraint j as base-K digit j, the
    first constraint being the most significant digit.
    """

    assignment: int
    condition: str
    party: int


@dataclass
class ExactInfeasibilityReport:
    target_label: str
    branch_count: int
    constraint_labels: list[str]
    per_branch_failure: list[BranchFailure] = field(default_factory=list)


@dataclass
class SpanObstruction:
    """The target lies in the span of the other members."""

    target_label: str
    rank_without: int
    rank_with: int


@dataclass
class HeuristicSearchReport:
    target_label: str
    restarts: int
    seed: int
    best_target_overlap: float
    best_offtarget_residual: float
    best_absolute_residual: float
    verdict: str
    restarts_run: int = 0
    best_restart: int = 0
    certificate: DetectingCertificate | None = None


class StateStatus(str, Enum):
    IDENTIFIABLE = "identifiable"
    NOT_IDENTIFIABLE = "not_identifiable"
    UNKNOWN = "unknown"


class Overall(str, Enum):
    DISTINGUISHABLE = "distinguishable"
    INDISTINGUISHABLE = "indistinguishable"
    UNDETERMINED = "undetermined"


Evidence = DetectingCertificate | ExactInfeasibilityReport | SpanObstruction | HeuristicSearchReport


@dataclass
class StateVerdict:
    status: StateStatus
    method: str
    evidence: Evidence


@dataclass
class CLSDVerdict:
    ensemble: str
    per_state: dict[str, StateVerdict] = field(default_factory=dict)
    independent: bool = True
    rank: int = 0

    @property
    def overall(self) -> Overall:
        statuses = [v.status for v in self.per_state.values()]
        if any(s == StateStatus.NOT_IDENTIFIABLE for s in statuses):
            return Overall.INDISTINGUISHABLE
        if statuses and all(s == StateStatus.IDENTIFIABLE for s in statuses):
            return Overall.DISTINGUISHABLE
        return Overall.UNDETERMINED

    def certificates(self) -> dict[str, DetectingCertificate]:
        return {
            label: v.evidence
            for label, v in self.per_state.items()
            if isinstance(v.evidence, DetectingCertificate)
        }


# =============================================================================
# Certificate verification
# =============================================================================
class OverlapChecker:
    """Overlaps of a full-space vector with every normalized member."""

    def __init__(self, e: Ensemble) -> None:
        self.ensemble = e
        rows = stack_rows(e.vectors())
        self._rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)

    def overlaps(self, vector: ComplexArray) -> ComplexArray:
        return np.abs(self._rows.conj() @ vector)

    def certify(self, target_label: str, per_party: Sequence[StateVector]) -> DetectingCertificate:
        """Re-verify a candidate detector from scratch.

        Raises:
            CertificateVerificationError: the candidate breaks an overlap bound
        """
        parties = [StateVector.from_amplitudes(v.amplitudes) for v in per_party]
        joined = tensor_all(parties).amplitudes
        if joined.size != self._rows.shape[1]:
            raise CertificateVerificationError(
                f"detector of dim {joined.size} for members of dim {self._rows.shape[1]}"
            )
        overlaps = self.overlaps(joined)
        target = self.ensemble.index_of(target_label)
        others = np.delete(overlaps, target)
        cert = DetectingCertificate(
            target_label,
            parties,
            float(others.max()) if others.size else 0.0,
            float(overlaps[target]),
        )
        if not cert.valid:
            raise CertificateVerificationError(
                f"detector for '{target_label}' fails: "
                f"off-target {cert.max_offtarget_overlap:.3e}, "
                f"target {cert.target_overlap_modulus:.3e}"
            )
        return cert


def verify_certificate(e: Ensemble, cert: DetectingCertificate) -> DetectingCertificate:
    """Recompute a certificate's overlaps against ``e``."""
    return OverlapChecker(e).certify(cert.target_label, cert.per_party_vectors)


# =============================================================================
# Exact detection for product ensembles
# =============================================================================
def _unit(v: ComplexArray) -> ComplexArray:
    return v / np.linalg.norm(v)


def _parallel(a: ComplexArray, b: ComplexArray, tol: ToleranceConfig) -> bool:
    """Whether unit ``b`` lies within orth_tol of the ray through unit ``a``."""
    return bool(np.linalg.norm(b - np.vdot(a, b) * a) <= tol.orth_tol)


def _dedup_constraints(
    factors: list[list[ComplexArray]], labels: list[str], tol: ToleranceConfig
) -> tuple[list[list[ComplexArray]], list[str]]:
    """Drop constraints parallel to an earlier one on every party.

    Only whole constraints are merged, so the branch count stays K**n over the
    kept ones. Factors parallel on a single party are folded later, per party,
    by ``_party_representatives``.
    """
    kept: list[list[ComplexArray]] = []
    kept_labels: list[str] = []
    for fs, label in zip(factors, labels):
        duplicate = any(all(_parallel(a, b, tol) for a, b in zip(other, fs)) for other in kept)
        if duplicate:
            logger.debug(f"Constraint '{label}' duplicates an earlier one; merged")
            continue
        kept.append(fs)
        kept_labels.append(label)
    return kept, kept_labels


def _party_representatives(rows: ComplexArray, tol: ToleranceConfig) -> list[int]:
    """Index of the first row parallel to each row.

    A constraint whose factor on this party is parallel to one already assigned
    here leaves the nullspace unchanged, so masks are built from
    representatives and equal nullspaces share one cache entry.
    """
    reps: list[int] = []
    for j, row in enumerate(rows):
        parallel = (i for i in range(j) if reps[i] == i and _parallel(rows[i], row, tol))
        reps.append(next(parallel, j))
    return reps


def exact_product_detect(
    e: Ensemble,
    target: str,
    branch_cap: int = DEFAULT_BRANCH_CAP,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> DetectingCertificate | ExactInfeasibilityReport:
    """Decide whether a product detecting state exists for ``target``.

    Raises:
        NonProductMemberError: a member has no per-party factorization
        BranchCapExceededError: more than ``branch_cap`` assignments
    """
    for member in e.members:
        if not member.is_product:
            raise NonProductMemberError(f"member '{member.label}' is not a product state")

    t = e.index_of(target)
    parties = e.structure.num_parties
    party_dims = e.structure.party_dims
    target_factors = [_unit(f.amplitudes) for f in e.members[t].product_factors or ()]

    raw = [
        [_unit(f.amplitudes) for f in m.product_factors or ()]
        for j, m in enumerate(e.members)
        if j != t
    ]
    raw_labels = [m.label for j, m in enumerate(e.members) if j != t]
    constraints, labels = _dedup_constraints(raw, raw_labels, tol)
    n = len(constraints)
    branch_count = parties**n
    if branch_count > branch_cap:
        raise BranchCapExceededError(branch_count, branch_cap)

    checker = OverlapChecker(e)
    rows = [
        np.array([c[p] for c in constraints], dtype=np.complex128).reshape(n, party_dims[p])
        for p in range(parties)
    ]
    reps = [_party_representatives(rows[p], tol) for p in range(parties)]
    cache: dict[tuple[int, int], ComplexArray | str] = {}

    def local_detector(p: int, mask: int) -> ComplexArray | str:
        """Projection of the target factor onto the nullspace, or a failure reason."""
        key = (p, mask)
        if key not in cache:
            chosen = rows[p][[j for j in range(n) if mask >> j & 1]]
            null = nullspace_of_rows(chosen, party_dims[p], tol)
            if null.shape[1] == 0:
                cache[key] = "empty_nullspace"
            else:
                projection = null @ (null.conj().T @ target_factors[p])
                if np.linalg.norm(projection) <= tol.orth_tol:
                    cache[key] = f"target_killed_on_party_{p}"
                else:
                    cache[key] = projection
        return cache[key]

    failures: list[BranchFailure] = []
    for code, digits in enumerate(itertools.product(range(parties), repeat=n)):
        masks = [0] * parties
        for j, p in enumerate(digits):
            masks[p] |= 1 << reps[p][j]
        projections: list[ComplexArray] = []
        for p in range(parties):
            outcome = local_detector(p, masks[p])
            if isinstance(outcome, str):
                failures.append(BranchFailure(code, outcome, p))
                break
            projections.append(outcome)
        else:
            # normalized target overlap is the product of the projection norms
            norms = [float(np.linalg.norm(v)) for v in projections]
            weakest = int(np.argmin(norms))
            if float(np.prod(norms)) < TARGET_FLOOR:
                failures.append(BranchFailure(code, "target_overlap_below_floor", weakest))
                continue
            vectors = [StateVector.from_amplitudes(v) for v in projections]
            try:
                cert = checker.certify(target, vectors)
            except CertificateVerificationError as err:
                logger.warning(f"Branch {code} for '{target}' rejected on re-verification: {err}")
                failures.append(BranchFailure(code, "certificate_rejected", weakest))
                continue
            record_branches(code + 1)
            logger.debug(f"Detector for '{target}' found on branch {code} of {branch_count}")
            return cert

    record_branches(branch_count)
    logger.info(f"No product detector for '{target}' in {e.name}: all {branch_count} branches fail")
    return ExactInfeasibilityReport(target, branch_count, labels, failures)


def compositional_detect(
    d: DerivedMarkingSet,
    base_certificates: Mapping[str, DetectingCertificate],
) -> dict[SlotTuple, DetectingCertificate]:
    """Tensor slot detectors into detectors for every marking tuple.

    Raises:
        MissingCertificateError: some base member has no certificate
        CertificateVerificationError: a composed detector fails re-verification
    """
    base = d.base
    for label in base.labels:
        if label not in base_certificates:
            raise MissingCertificateError(f"no detecting certificate for base member '{label}'")

    if d.m == 1:
        return {t: base_certificates[base.members[t[0]].label] for t in d.tuples}

    checker = OverlapChecker(d.derived)
    result: dict[SlotTuple, DetectingCertificate] = {}
    for t in d.tuples:
        slot_certs = [base_certificates[base.members[i].label] for i in t]
        per_party = [
            tensor_all([c.per_party_vectors[p] for c in slot_certs])
            for p in range(base.structure.num_parties)
        ]
        result[t] = checker.certify(d.label_of(t), per_party)
    logger.info(f"Composed {len(result)} verified detectors for {d.derived.name}")
    return result


# =============================================================================
# Heuristic detection for bipartite pure ensembles
# =============================================================================
def _best_half_step(rows: ComplexArray, target: ComplexArray, tol: ToleranceConfig) -> ComplexArray:
    """Unit x maximizing |target . x|^2 / |rows x|^2."""
    wanted = target.conj()
    gram = rows.conj().T @ rows
    values, vectors = np.linalg.eigh(gram)
    coords = vectors.conj().T @ wanted
    floor = max(tol.rank_rel_tol**2 * max(values[-1], 0.0), 1e-300)
    null = values <= floor
    if np.any(null) and np.linalg.norm(coords[null]) > tol.orth_tol * np.linalg.norm(wanted):
        x = vectors[:, null] @ coords[null]
    else:
        x = vectors[:, ~null] @ (coords[~null] / values[~null])
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return vectors[:, 0]
    return x / norm


@dataclass
class _RestartResult:
    ratio: float
    absolute: float
    target: float
    alpha: ComplexArray
    beta: ComplexArray


def _random_unit(rng: np.random.Generator, dim: int) -> ComplexArray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def heuristic_detect(
    e: Ensemble,
    target: str,
    restarts: int = 1000,
    seed: int = 42,
    max_iterations: int = 200,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> HeuristicSearchReport:
    """Seeded alternating search for a product detector on a bipartite ensemble.

    Minimizes the off-target residual relative to the target overlap. A
    ``not_found`` verdict is evidence only.

    Raises:
        MixedMemberError: a member is mixed
        NonBipartiteError: the ensemble has other than two parties
    """
    if not e.is_pure:
        raise MixedMemberError(f"heuristic detection needs pure members ({e.name})")
    if e.structure.num_parties != 2:
        raise NonBipartiteError(
            f"heuristic detection needs two parties, {e.name} has {e.structure.num_parties}"
        )

    t = e.index_of(target)
    d_a, d_b = e.structure.party_dims
    conj = [e.party_matrix(j).conj() / e.members[j].state.norm for j in range(len(e))]
    off = np.array([c for j, c in enumerate(conj) if j != t]).reshape(-1, d_a, d_b)
    tgt = conj[t]

    def evaluate(alpha: ComplexArray, beta: ComplexArray) -> tuple[float, float]:
        absolute = float(np.linalg.norm(np.einsum("a,jab,b->j", alpha, off, beta)))
        return absolute, float(abs(alpha @ tgt @ beta))

    def run(restart: int) -> _RestartResult:
        rng = np.random.Generator(np.random.Philox(seed).jumped(restart))
        alpha = _random_unit(rng, d_a)
        beta = _random_unit(rng, d_b)
        previous = np.inf
        ratio, absolute, overlap = np.inf, np.inf, 0.0
        for _ in range(max_iterations):
            beta = _best_half_step(np.einsum("a,jab->jb", alpha, off), alpha @ tgt, tol)
            alpha = _best_half_step(np.einsum("jab,b->ja", off, beta), tgt @ beta, tol)
            absolute, overlap = evaluate(alpha, beta)
            ratio = absolute / overlap if overlap > 0 else np.inf
            if ratio == 0.0 or abs(previous - ratio) < CONVERGENCE_TOL:
                break
            previous = ratio
        return _RestartResult(ratio, absolute, overlap, alpha, beta)

    best: _RestartResult | None = None
    best_index = 0
    runs = 0
    for restart in range(restarts):
        result = run(restart)
        runs += 1
        if best is None or result.ratio < best.ratio:
            best, best_index = result, restart
        if result.absolute <= OFFTARGET_TOL and result.target >= TARGET_FLOOR:
            best, best_index = result, restart
            break
    record_restarts(runs)
    assert best is not None

    report = HeuristicSearchReport(
        target_label=target,
        restarts=restarts,
        seed=seed,
        best_target_overlap=best.target,
        best_offtarget_residual=float(best.ratio),
        best_absolute_residual=best.absolute,
        verdict="not_found",
        restarts_run=runs,
        best_restart=best_index,
    )
    if best.absolute <= OFFTARGET_TOL and best.target >= TARGET_FLOOR:
        vectors = [StateVector.from_amplitudes(best.alpha), StateVector.from_amplitudes(best.beta)]
        report.certificate = OverlapChecker(e).certify(target, vectors)
        report.verdict = "found"
    logger.info(
        f"Heuristic search for '{target}' in {e.name}: {report.verdict} after {runs} restarts "
        f"(relative residual {report.best_offtarget_residual:.3e})"
    )
    return report


# =============================================================================
# Verdicts
# =============================================================================
def _detect_one(
    e: Ensemble,
    label: str,
    *,
    branch_cap: int,
    restarts: int,
    seed: int,
    max_iterations: int,
    heuristic_over_cap: bool,
    tol: ToleranceConfig,
) -> StateVerdict:
    if e.is_product:
        try:
            outcome = exact_product_detect(e, label, branch_cap, tol)
        except BranchCapExceededError as exc:
            if not heuristic_over_cap or e.structure.num_parties != 2:
                raise
            logger.warning(f"{exc}; falling back to heuristic search for '{label}'")
        else:
            if isinstance(outcome, DetectingCertificate):
                return StateVerdict(StateStatus.IDENTIFIABLE, "exact", outcome)
            return StateVerdict(StateStatus.NOT_IDENTIFIABLE, "exact", outcome)

    report = heuristic_detect(e, label, restarts, seed, max_iterations, tol)
    if report.certificate is not None:
        return StateVerdict(StateStatus.IDENTIFIABLE, "heuristic", report.certificate)
    return StateVerdict(StateStatus.UNKNOWN, "heuristic", report)


def clsd_verdict(
    e: Ensemble,
    *,
    branch_cap: int = DEFAULT_BRANCH_CAP,
    restarts: int = 1000,
    seed: int = 42,
    max_iterations: int = 200,
    heuristic_over_cap: bool = False,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> CLSDVerdict:
    """Per-member conclusive local identifiability and the overall verdict.

    Members lying in the span of the others get a span obstruction, which no
    measurement can overcome. Product ensembles are decided exactly; others
    fall back to the heuristic and may stay undetermined.
    """
    vectors = e.vectors()
    independence = check_linear_independence(vectors, tol)
    verdict = CLSDVerdict(e.name, independent=independence.independent, rank=independence.rank)

    for k, member in enumerate(e.members):
        if not independence.independent:
            rank_without = numerical_rank(vectors[:k] + vectors[k + 1 :], tol)
            if rank_without == independence.rank:
                obstruction = SpanObstruction(member.label, rank_without, independence.rank)
                verdict.per_state[member.label] = StateVerdict(
                    StateStatus.NOT_IDENTIFIABLE, "span", obstruction
                )
                continue
        verdict.per_state[member.label] = _detect_one(
            e,
            member.label,
            branch_cap=branch_cap,
            restarts=restarts,
            seed=seed,
            max_iterations=max_iterations,
            heuristic_over_cap=heuristic_over_cap,
            tol=tol,
        )

    logger.info(f"Conclusive local discrimination of {e.name}: {verdict.overall.value}")
    return verdict


def clsm_verdict(
    e: Ensemble,
    m: int,
    *,
    branch_cap: int = DEFAULT_BRANCH_CAP,
    restarts: int = 1000,
    seed: int = 42,
    max_iterations: int = 200,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
    base_verdict: CLSDVerdict | None = None,
) -> CLSDVerdict:
    """Conclusive local marking of m members, as a verdict over the derived set.

    When every base member has a detector, slot-wise composition settles the
    question; otherwise the derived set is analyzed directly.
    """
    derived = derive_marking_set(e, m, tol)
    base = base_verdict or clsd_verdict(
        e,
        branch_cap=branch_cap,
        restarts=restarts,
        seed=seed,
        max_iterations=max_iterations,
        heuristic_over_cap=True,
        tol=tol,
    )

    if base.overall == Overall.DISTINGUISHABLE:
        composed = compositional_detect(derived, base.certificates())
        verdict = CLSDVerdict(derived.derived.name, independent=True, rank=len(derived))
        for t, cert in composed.items():
            verdict.per_state[derived.label_of(t)] = StateVerdict(
                StateStatus.IDENTIFIABLE, "composition", cert
            )
        logger.info(f"Marking m={m} of {e.name}: distinguishable by composing base detectors")
        return verdict

    return clsd_verdict(
        derived.derived,
        branch_cap=branch_cap,
        restarts=restarts,
        seed=seed,
        max_iterations=max_iterations,
        heuristic_over_cap=True,
        tol=tol,
    )
