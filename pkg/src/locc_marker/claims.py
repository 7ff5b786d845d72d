"""Registry of reproducible claims and the concurrent claim runner.

Every claim recomputes its observations from the library at run time and
compares them against fixed expected values.
"""

from __future__ import annotations

import asyncio
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from locc_marker.config import RunConfig
from locc_marker.detect import (
    DetectingCertificate,
    ExactInfeasibilityReport,
    Overall,
    clsd_verdict,
    clsm_verdict,
    exact_product_detect,
    heuristic_detect,
)
from locc_marker.ensembles.base import validate
from locc_marker.ensembles.mixed import smolin_identity_residual
from locc_marker.ensembles.registry import build_named
from locc_marker.errors import LoccMarkerError, UnknownClaimError
from locc_marker.marking import (
    build_dependence_witness,
    check_linear_independence,
    derive_marking_set,
    global_detectors,
    nullspace_coefficients,
)
from locc_marker.metrics import record_claim
from locc_marker.numkernel import numerical_rank, orthocomplement, schmidt_rank
from locc_marker.protocol import (
    build_sequential_marking_protocol,
    mixed_marking_hypotheses,
    povm_from_certificate,
    pw_conclusive,
    pw_conclusive_povm,
    simulate,
    upb_marking,
    verify_conclusive_condition,
    verify_povm,
    yu_marking,
)
from locc_marker.upb import (
    EnumerationSummary,
    Side,
    classify_unextendible_basis,
    crosscheck_lemma_gub,
    enumerate_low_rank_partitions,
    find_orthogonal_product_state,
)

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-9
HEURISTIC_GAP = 1e-3


class ClaimStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    HEURISTIC_PASS = "heuristic-pass"


@dataclass
class ClaimRecord:
    id: str
    description: str
    expected: dict[str, Any]
    observed: dict[str, Any]
    status: ClaimStatus
    duration_seconds: float = 0.0


CheckResult = tuple[dict[str, Any], dict[str, Any], bool]


@dataclass(frozen=True)
class Claim:
    claim_id: str
    description: str
    check: Callable[[RunConfig], CheckResult]
    heuristic: bool = False


CLAIMS: dict[str, Claim] = {}


def claim(claim_id: str, description: str, *, heuristic: bool = False) -> Callable[
    [Callable[[RunConfig], CheckResult]], Callable[[RunConfig], CheckResult]
]:
    """Register a claim check under ``claim_id``; registration order is run order."""

    def register(check: Callable[[RunConfig], CheckResult]) -> Callable[[RunConfig], CheckResult]:
        CLAIMS[claim_id] = Claim(claim_id, description, check, heuristic)
        return check

    return register


def _close(value: float, expected: float, tol: float = PROBABILITY_TOL) -> bool:
    return abs(value - expected) <= tol


# =============================================================================
# Claims
# =============================================================================
@claim("prop1", "double trine is conclusively distinguishable by LOCC, 9/16 per state")
def _prop1(config: RunConfig) -> CheckResult:
    e = build_named("pw_trine")
    verdict = clsd_verdict(e, branch_cap=config.branch_cap, tol=config.tolerances)
    successes = []
    zero_error = True
    for k in range(3):
        report = simulate(pw_conclusive(k), e)
        successes.append(report.per_hypothesis[f"w{k}w{k}"].success_probability)
        zero_error = zero_error and report.zero_error
    expected = {"overall": "distinguishable", "success": 9 / 16, "zero_error": True}
    observed = {"overall": verdict.overall.value, "success": successes, "zero_error": zero_error}
    passed = (
        verdict.overall == Overall.DISTINGUISHABLE
        and zero_error
        and all(_close(s, 9 / 16) for s in successes)
    )
    return expected, observed, passed


@claim("prop2", "dependent ensembles admit no m-marking: antisymmetrized witnesses annihilate")
def _prop2(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    e = build_named("double_sic_parallel")
    alpha = nullspace_coefficients(e, tol)
    residuals: dict[str, float] = {}
    valid = alpha is not None
    if alpha is not None:
        for m in (1, 2, 3):
            witness = build_dependence_witness(e, alpha, m, tol)
            residuals[str(m)] = witness.residual_norm
            valid = valid and witness.valid
    verdict = clsm_verdict(
        e, 2, branch_cap=config.branch_cap, restarts=config.restarts, seed=config.seed, tol=tol
    )
    expected = {"max_residual": 1e-9, "marking_m2": "indistinguishable"}
    observed = {"residuals": residuals, "marking_m2": verdict.overall.value}
    return expected, observed, valid and verdict.overall == Overall.INDISTINGUISHABLE


@claim(
    "prop3",
    "ranks of the qubit-pair ensembles; marking sets of independent ensembles stay independent",
)
def _prop3(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    expected_ranks = {"bell": 4, "double_sic_parallel": 3, "double_sic_antiparallel": 4}
    ranks = {name: numerical_rank(build_named(name).vectors(), tol) for name in expected_ranks}
    derived: dict[str, bool] = {}
    for name in ("bell", "bennett9", "pw_trine", "double_sic_antiparallel", "duan4", "upb_tiles"):
        e = build_named(name)
        if not check_linear_independence(e.vectors(), tol).independent:
            derived[name] = False
            continue
        for m in range(1, min(len(e), 3) + 1):
            d = derive_marking_set(e, m, tol)
            verdict = check_linear_independence(d.derived.vectors(), tol)
            derived[f"{name}[m={m}]"] = verdict.independent
    expected = {"ranks": expected_ranks, "derived_independent": True}
    observed = {"ranks": ranks, "derived_independent": derived}
    return expected, observed, ranks == expected_ranks and all(derived.values())


@claim("prop4", "anti-parallel double SIC: globally but not locally conclusively distinguishable")
def _prop4(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    e = build_named("double_sic_antiparallel")
    complements: dict[str, list[int]] = {}
    for label in e.labels:
        rest = e.without(label)
        basis = orthocomplement(rest.vectors(), e.structure.total_dim, tol)
        complements[label] = [len(basis)] + [schmidt_rank(v, (0,), tol) for v in basis]
    infeasible = {
        label: isinstance(
            exact_product_detect(e, label, config.branch_cap, tol), ExactInfeasibilityReport
        )
        for label in e.labels
    }
    independent = check_linear_independence(e.vectors(), tol).independent
    global_overlap = global_detectors(e, tol).min_target_overlap
    verdict = clsd_verdict(e, branch_cap=config.branch_cap, tol=tol)
    expected = {
        "complement": [1, 2],
        "exact_infeasible": True,
        "independent": True,
        "overall": "indistinguishable",
    }
    observed = {
        "complement": complements,
        "exact_infeasible": infeasible,
        "independent": independent,
        "global_min_overlap": global_overlap,
        "overall": verdict.overall.value,
    }
    passed = (
        all(c == [1, 2] for c in complements.values())
        and all(infeasible.values())
        and independent
        and global_overlap > 0
        and verdict.overall == Overall.INDISTINGUISHABLE
    )
    return expected, observed, passed


@claim("prop5", "UPB-based pair is conclusively markable by local tests")
def _prop5(config: RunConfig) -> CheckResult:
    hypotheses = mixed_marking_hypotheses(build_named("xb_from_upb"), 2)
    report = simulate(upb_marking("tile0"), hypotheses)
    successes = {k: v.success_probability for k, v in report.per_hypothesis.items()}
    expected = {"zero_error": True, "success": 0.2}
    observed = {"zero_error": report.zero_error, "success": successes}
    passed = report.zero_error and all(_close(s, 0.2) for s in successes.values())
    return expected, observed, passed


@claim("prop6", "Bell 2-marking: no product detector found for B1.B2", heuristic=True)
def _prop6(config: RunConfig) -> CheckResult:
    d = derive_marking_set(build_named("bell"), 2, config.tolerances)
    report = heuristic_detect(
        d.derived,
        "B1.B2",
        restarts=config.restarts,
        seed=config.seed,
        max_iterations=config.max_iterations,
        tol=config.tolerances,
    )
    expected = {"verdict": "not_found", "min_relative_residual": HEURISTIC_GAP}
    observed = {
        "verdict": report.verdict,
        "best_offtarget_residual": report.best_offtarget_residual,
        "best_absolute_residual": report.best_absolute_residual,
        "best_target_overlap": report.best_target_overlap,
        "restarts": report.restarts_run,
        "seed": report.seed,
    }
    gap = report.best_offtarget_residual >= HEURISTIC_GAP
    return expected, observed, report.verdict == "not_found" and gap


@claim("thm1", "Bennett's nine states: base detectors compose into a zero-error 2-marking protocol")
def _thm1(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    e = build_named("bennett9")
    verdict = clsd_verdict(e, branch_cap=config.branch_cap, tol=tol)
    certs = verdict.certificates()
    psi1 = certs.get("psi1")
    matches_11 = False
    if isinstance(psi1, DetectingCertificate):
        matches_11 = all(
            abs(v.amplitudes[1]) >= 1 - PROBABILITY_TOL for v in psi1.per_party_vectors
        )

    d = derive_marking_set(e, 2, tol)
    marking = clsm_verdict(e, 2, base_verdict=verdict, tol=tol)
    report = simulate(build_sequential_marking_protocol(d, certs), d)
    successes = [o.success_probability for o in report.per_hypothesis.values()]
    expected = {"certificates": 9, "psi1_detector": "|1>|1>", "hypotheses": 72, "zero_error": True}
    observed = {
        "certificates": len(certs),
        "psi1_detector_is_11": matches_11,
        "hypotheses": len(report.per_hypothesis),
        "zero_error": report.zero_error,
        "min_success": min(successes),
        "marking_m2": marking.overall.value,
    }
    passed = (
        len(certs) == 9
        and matches_11
        and len(successes) == 72
        and report.zero_error
        and min(successes) > 0
        and marking.overall == Overall.DISTINGUISHABLE
    )
    return expected, observed, passed


@claim("thm2", "anti-parallel double SIC admits no 2-marking: its marking set is a non-genuine UPB")
def _thm2(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    e = build_named("double_sic_antiparallel")
    d = derive_marking_set(e, 2, tol)
    span = numerical_rank(d.derived.vectors(), tol)
    unextendible = isinstance(find_orthogonal_product_state(d.derived, tol), EnumerationSummary)
    classification = classify_unextendible_basis(d.derived, tol)
    verdict = clsm_verdict(
        e, 2, branch_cap=config.branch_cap, restarts=config.restarts, seed=config.seed, tol=tol
    )
    expected = {
        "span": 12,
        "unextendible": True,
        "is_upb": True,
        "is_gupb": False,
        "overall": "indistinguishable",
    }
    observed = {
        "span": span,
        "unextendible": unextendible,
        "is_upb": classification.is_upb,
        "is_gupb": classification.is_gupb,
        "overall": verdict.overall.value,
    }
    passed = (
        span == 12
        and unextendible
        and classification.is_upb is True
        and classification.is_gupb is False
        and verdict.overall == Overall.INDISTINGUISHABLE
    )
    return expected, observed, passed


@claim("thm3", "Duan's four states admit no 2-marking")
def _thm3(config: RunConfig) -> CheckResult:
    verdict = clsm_verdict(
        build_named("duan4"),
        2,
        branch_cap=config.branch_cap,
        restarts=config.restarts,
        seed=config.seed,
        tol=config.tolerances,
    )
    target = verdict.per_state["D1.D2"].evidence
    branches = target.branch_count if isinstance(target, ExactInfeasibilityReport) else None
    expected = {"overall": "indistinguishable", "D1.D2_branches": 2048}
    observed = {"overall": verdict.overall.value, "D1.D2_branches": branches}
    return expected, observed, verdict.overall == Overall.INDISTINGUISHABLE and branches == 2048


@claim("thm4", "Yu pair is conclusively markable although not conclusively distinguishable")
def _thm4(config: RunConfig) -> CheckResult:
    observed: dict[str, Any] = {}
    expected: dict[str, Any] = {}
    passed = True
    for d in (2, 3):
        hypotheses = mixed_marking_hypotheses(build_named("yu", d=d), 2)
        for mode, value in (("strict01", 1 / (d * d - 1)), ("any_anticorrelated", d / (d + 1))):
            report = simulate(yu_marking(d, mode), hypotheses)
            key = f"d{d}_{mode}"
            successes = [o.success_probability for o in report.per_hypothesis.values()]
            expected[key] = value
            observed[key] = {"success": successes, "zero_error": report.zero_error}
            passed = passed and report.zero_error and all(_close(s, value) for s in successes)
    return expected, observed, passed


@claim(
    "lemma3_crosscheck",
    "unextendible bases are locally conclusively distinguishable iff genuine",
)
def _lemma3(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    antiparallel = build_named("double_sic_antiparallel")
    cases = {
        "pw_trine": build_named("pw_trine"),
        "double_sic_antiparallel": antiparallel,
        "double_sic_antiparallel[m=2]": derive_marking_set(antiparallel, 2, tol).derived,
    }
    observed = {}
    for name, e in cases.items():
        report = crosscheck_lemma_gub(
            e, branch_cap=config.branch_cap, restarts=config.restarts, seed=config.seed, tol=tol
        )
        observed[name] = {
            "is_gub": report.is_gub,
            "clsd": report.clsd_overall,
            "consistent": report.consistent,
        }
    expected = {name: {"consistent": True} for name in cases}
    return expected, observed, all(v["consistent"] is True for v in observed.values())


@claim("eq1_trine", "product-basis POVM satisfies the conclusive condition for w0w0 with 9/16")
def _eq1(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    e = build_named("pw_trine")
    povm = pw_conclusive_povm(0)
    povm_report = verify_povm(povm, tol)
    conclusive = verify_conclusive_condition(povm, e, {"E0": "w0w0"})
    cert = exact_product_detect(e, "w0w0", config.branch_cap, tol)
    induced = False
    if isinstance(cert, DetectingCertificate):
        cert_povm = povm_from_certificate(cert, e.structure)
        induced = verify_conclusive_condition(cert_povm, e, {"hit": "w0w0"}).passed
    expected = {"povm": True, "conclusive": True, "success": 9 / 16, "certificate_povm": True}
    observed = {
        "povm": povm_report.passed,
        "conclusive": conclusive.passed,
        "success": conclusive.success["E0"],
        "max_offdiagonal": conclusive.max_offdiagonal,
        "certificate_povm": induced,
    }
    success = _close(conclusive.success["E0"], 9 / 16)
    passed = povm_report.passed and conclusive.passed and success and induced
    return expected, observed, passed


@claim("eq2_smolin", "Smolin state has the same Bell-pair form across both pairings")
def _eq2(config: RunConfig) -> CheckResult:
    residual = smolin_identity_residual()
    valid = validate(build_named("smolin"), config.tolerances).valid
    expected = {"max_residual": 1e-12, "valid": True}
    observed = {"residual": residual, "valid": valid}
    return expected, observed, residual <= 1e-12 and valid


@claim("appD_counts", "low-rank partition counts of the anti-parallel 2-marking set")
def _appd(config: RunConfig) -> CheckResult:
    tol = config.tolerances
    derived = derive_marking_set(build_named("double_sic_antiparallel"), 2, tol).derived
    reduced = derived.without("gamma1.gamma2")
    full6 = enumerate_low_rank_partitions(derived, Side.A, 3, 6, tol)
    t5 = enumerate_low_rank_partitions(reduced, Side.A, 3, 5, tol)
    t6 = enumerate_low_rank_partitions(reduced, Side.A, 3, 6, tol)
    smaller = [
        w
        for size in range(1, 5)
        for e in (derived, reduced)
        for w in enumerate_low_rank_partitions(e, Side.A, 3, size, tol)
    ]
    found = {"full_size6": full6, "reduced_size5": t5, "reduced_size6": t6}
    expected = {"full_size6": 4, "reduced_size5": 21, "reduced_size6": 2, "complement_rank": 4}
    observed: dict[str, Any] = {k: len(v) for k, v in found.items()}
    observed["complement_ranks"] = sorted({w.r_b for v in found.values() for w in v})
    observed["smaller_complement_ranks"] = sorted({w.r_b for w in smaller})
    passed = (
        [len(full6), len(t5), len(t6)] == [4, 21, 2]
        and observed["complement_ranks"] == [4]
        and observed["smaller_complement_ranks"] in ([], [4])
    )
    return expected, observed, passed


@claim("appE_branches", "Duan 2-marking target D1.D2: every branch of the exact search fails")
def _appe(config: RunConfig) -> CheckResult:
    d = derive_marking_set(build_named("duan4"), 2, config.tolerances)
    outcome = exact_product_detect(d.derived, "D1.D2", config.branch_cap, config.tolerances)
    expected = {"branches": 2048, "failed": 2048}
    if not isinstance(outcome, ExactInfeasibilityReport):
        return expected, {"branches": None, "failed": 0}, False
    conditions: dict[str, int] = {}
    for failure in outcome.per_branch_failure:
        conditions[failure.condition] = conditions.get(failure.condition, 0) + 1
    observed = {
        "branches": outcome.branch_count,
        "failed": len(outcome.per_branch_failure),
        "conditions": conditions,
    }
    all_failed = len(outcome.per_branch_failure) == 2048
    return expected, observed, outcome.branch_count == 2048 and all_failed


# =============================================================================
# Runner
# =============================================================================
def resolve_claims(ids: Sequence[str]) -> list[str]:
    """Expand ``all`` and check every id, keeping registry order.

    Raises:
        UnknownClaimError: an id is not registered
    """
    if not ids or "all" in ids:
        return list(CLAIMS)
    unknown = [i for i in ids if i not in CLAIMS]
    if unknown:
        raise UnknownClaimError(f"Unknown claim(s) {unknown} (known: {', '.join(CLAIMS)})")
    return [i for i in CLAIMS if i in ids]


def run_claim(claim_id: str, config: RunConfig) -> ClaimRecord:
    """Run one claim; library errors count as a failure of that claim."""
    entry = CLAIMS[claim_id]
    started = time.perf_counter()
    try:
        expected, observed, passed = entry.check(config)
    except LoccMarkerError as e:
        logger.error(f"Claim '{claim_id}' raised {type(e).__name__}: {e}")
        expected, observed, passed = {}, {"error": f"{type(e).__name__}: {e}"}, False
    if not passed:
        status = ClaimStatus.FAIL
    elif entry.heuristic:
        status = ClaimStatus.HEURISTIC_PASS
    else:
        status = ClaimStatus.PASS
    duration = time.perf_counter() - started
    record_claim(claim_id, status.value, duration)
    logger.info(f"Claim {claim_id}: {status.value} ({duration:.2f}s)")
    return ClaimRecord(claim_id, entry.description, expected, _finite(observed), status, duration)


def _finite(value: Any) -> Any:
    """Replace non-finite floats so observations stay valid JSON."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return str(float(value))
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass
class ClaimRun:
    records: list[ClaimRecord] = field(default_factory=list)

    @property
    def failed(self) -> list[str]:
        return [r.id for r in self.records if r.status == ClaimStatus.FAIL]


async def run_claims(ids: Sequence[str], config: RunConfig) -> ClaimRun:
    """Run claims on worker threads, at most ``max_concurrency`` at a time.

    Records come back in registry order regardless of completion order.
    """
    selected = resolve_claims(ids)
    semaphore = asyncio.Semaphore(config.max_concurrency)

    async def run_bounded(claim_id: str) -> ClaimRecord:
        async with semaphore:
            return await asyncio.to_thread(run_claim, claim_id, config)

    logger.info(f"Running {len(selected)} claim(s) with concurrency {config.max_concurrency}")
    records = await asyncio.gather(*(run_bounded(i) for i in selected))
    return ClaimRun(list(records))
