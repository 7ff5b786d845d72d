"""Tests for product detectors and identifiability verdicts."""

from __future__ import annotations

import numpy as np
import pytest

from locc_marker.config import DEFAULT_TOLERANCES
from locc_marker.detect import (
    DetectingCertificate,
    ExactInfeasibilityReport,
    Overall,
    SpanObstruction,
    StateStatus,
    _party_representatives,
    clsd_verdict,
    clsm_verdict,
    compositional_detect,
    exact_product_detect,
    heuristic_detect,
    verify_certificate,
)
from locc_marker.ensembles import Ensemble, EnsembleMember, PartyStructure, build_named
from locc_marker.errors import (
    BranchCapExceededError,
    CertificateVerificationError,
    MissingCertificateError,
    MixedMemberError,
    NonBipartiteError,
    NonProductMemberError,
)
from locc_marker.marking import derive_marking_set
from locc_marker.numkernel import StateVector, hermitian_inner
from tests.conftest import bloch_grid_products, random_axis_ensemble


def entangled_pair() -> Ensemble:
    """Phi+ and |01>: |00> detects Phi+."""
    phi = StateVector.from_amplitudes([1, 0, 0, 1], (2, 2))
    return Ensemble(
        "phi_and_01",
        PartyStructure.simple((2, 2)),
        (EnsembleMember("phi", phi), EnsembleMember("p01", StateVector.basis(1, (2, 2)))),
    )


def tilted_pair(eps: float) -> Ensemble:
    """|00> and (cos eps, sin eps) (x) |1>."""
    zero, one = StateVector.basis(0, (2,)), StateVector.basis(1, (2,))
    tilt = StateVector.from_amplitudes([np.cos(eps), np.sin(eps)])
    return Ensemble(
        "tilted_pair",
        PartyStructure.simple((2, 2)),
        (EnsembleMember.product("t", [zero, zero]), EnsembleMember.product("c", [tilt, one])),
    )


def rescaled(e: Ensemble, rng: np.random.Generator) -> Ensemble:
    """Rebuild product members from factors times random nonzero complex scalars."""
    members = []
    for m in e.members:
        factors = [
            StateVector.from_amplitudes(
                f.amplitudes * rng.uniform(0.1, 10.0) * np.exp(2j * np.pi * rng.uniform()), f.dims
            )
            for f in m.product_factors or ()
        ]
        members.append(EnsembleMember.product(m.label, factors))
    return Ensemble(e.name, e.structure, tuple(members))


class TestExactDetection:
    """Tests for the exact branch search over product ensembles."""

    def test_bennett_all_identifiable(self, bennett9: Ensemble) -> None:
        """Test every Bennett state has a verified exact detector."""
        verdict = clsd_verdict(bennett9)
        assert verdict.overall == Overall.DISTINGUISHABLE
        certs = verdict.certificates()
        assert len(certs) == 9
        for cert in certs.values():
            assert cert.valid
            assert cert.max_offtarget_overlap <= 1e-9
        assert all(v.method == "exact" for v in verdict.per_state.values())

    def test_bennett_psi1_detector(self, bennett9: Ensemble) -> None:
        """Test the psi1 detector is |1>|1> up to phase."""
        cert = exact_product_detect(bennett9, "psi1")
        assert isinstance(cert, DetectingCertificate)
        overlap = hermitian_inner(cert.detector(), bennett9.member("psi1").state)
        assert abs(overlap) == pytest.approx(1.0)

    def test_pw_trine_identifiable(self, pw_trine: Ensemble) -> None:
        """Test the double trine is conclusively locally distinguishable."""
        assert clsd_verdict(pw_trine).overall == Overall.DISTINGUISHABLE

    def test_duan_member_infeasible(self, duan4: Ensemble) -> None:
        """Test D1 has no detector: all 8 branches fail."""
        report = exact_product_detect(duan4, "D1")
        assert isinstance(report, ExactInfeasibilityReport)
        assert report.branch_count == 8
        assert len(report.per_branch_failure) == 8
        assert report.constraint_labels == ["D2", "D3", "D4"]

    def test_duan_indistinguishable(self, duan4: Ensemble) -> None:
        """Test the Duan set is independent yet not locally distinguishable."""
        verdict = clsd_verdict(duan4)
        assert verdict.independent
        assert verdict.overall == Overall.INDISTINGUISHABLE
        assert all(v.status == StateStatus.NOT_IDENTIFIABLE for v in verdict.per_state.values())

    def test_antiparallel_infeasible(self, antiparallel_sic: Ensemble) -> None:
        """Test no anti-parallel SIC member has a product detector."""
        for label in antiparallel_sic.labels:
            outcome = exact_product_detect(antiparallel_sic, label)
            assert isinstance(outcome, ExactInfeasibilityReport)

    def test_duan_marking_branches(self, duan4: Ensemble) -> None:
        """Test D1.D2 in the 2-marking set fails on all 2048 branches."""
        d = derive_marking_set(duan4, 2)
        report = exact_product_detect(d.derived, "D1.D2")
        assert isinstance(report, ExactInfeasibilityReport)
        assert report.branch_count == 2048
        assert len(report.per_branch_failure) == 2048
        conditions = {f.condition for f in report.per_branch_failure}
        assert conditions <= {
            "empty_nullspace",
            "target_killed_on_party_0",
            "target_killed_on_party_1",
            "target_overlap_below_floor",
        }

    def test_weak_branch_skipped(self) -> None:
        """Test a branch under the target floor gives way to a later valid one."""
        cert = exact_product_detect(tilted_pair(1e-7), "t")
        assert isinstance(cert, DetectingCertificate)
        assert cert.target_overlap_modulus == pytest.approx(1.0)
        assert cert.max_offtarget_overlap <= 1e-9

    def test_weak_branch_verdict(self) -> None:
        """Test the verdict on the tilted pair is distinguishable, not an error."""
        verdict = clsd_verdict(tilted_pair(1e-7))
        assert verdict.overall == Overall.DISTINGUISHABLE
        assert all(v.method == "exact" for v in verdict.per_state.values())

    def test_only_weak_branches(self) -> None:
        """Test detectors below the target floor count as infeasible."""
        eps = 1e-7
        zero = StateVector.basis(0, (2,))
        plus = StateVector.from_amplitudes([1, 1])
        tilt = StateVector.from_amplitudes([np.cos(eps), np.sin(eps)])
        e = Ensemble(
            "two_tilts",
            PartyStructure.simple((2, 2)),
            (
                EnsembleMember.product("t", [zero, zero]),
                EnsembleMember.product("c1", [tilt, zero]),
                EnsembleMember.product("c2", [plus, tilt]),
            ),
        )
        report = exact_product_detect(e, "t")
        assert isinstance(report, ExactInfeasibilityReport)
        assert report.branch_count == 4
        conditions = [f.condition for f in report.per_branch_failure]
        assert len(conditions) == 4
        assert conditions.count("target_overlap_below_floor") == 1

    def test_factors_folded_per_party(self) -> None:
        """Test rows equal up to phase share a representative; near-parallel rows do not."""
        rows = np.array([[1, 0], [0, 1], [np.exp(0.3j), 0], [0, 1j]], dtype=complex)
        assert _party_representatives(rows, DEFAULT_TOLERANCES) == [0, 1, 0, 1]
        tilted = np.array([[1, 0], [np.cos(1e-7), np.sin(1e-7)]], dtype=complex)
        assert _party_representatives(tilted, DEFAULT_TOLERANCES) == [0, 1]

    def test_branch_cap(self, duan4: Ensemble) -> None:
        """Test searches above the cap raise instead of running."""
        d = derive_marking_set(duan4, 2)
        with pytest.raises(BranchCapExceededError):
            exact_product_detect(d.derived, "D1.D2", branch_cap=100)

    def test_clsd_propagates_cap(self, duan4: Ensemble) -> None:
        """Test the verdict does not silently fall back when over the cap."""
        d = derive_marking_set(duan4, 2)
        with pytest.raises(BranchCapExceededError):
            clsd_verdict(d.derived, branch_cap=100)

    def test_non_product_rejected(self) -> None:
        """Test exact detection needs product members."""
        with pytest.raises(NonProductMemberError):
            exact_product_detect(build_named("bell"), "B1")


class TestSpanObstruction:
    """Tests for dependent ensembles."""

    def test_parallel_sic(self) -> None:
        """Test every parallel double SIC member lies in the span of the rest."""
        verdict = clsd_verdict(build_named("double_sic_parallel"))
        assert not verdict.independent
        assert verdict.rank == 3
        assert verdict.overall == Overall.INDISTINGUISHABLE
        for state in verdict.per_state.values():
            assert state.method == "span"
            assert isinstance(state.evidence, SpanObstruction)
            assert state.evidence.rank_without == 3


class TestCertificates:
    """Tests for certificate verification and composition."""

    def test_verify_roundtrip(self, bennett9: Ensemble) -> None:
        """Test a produced certificate re-verifies."""
        cert = exact_product_detect(bennett9, "psi3")
        assert isinstance(cert, DetectingCertificate)
        assert verify_certificate(bennett9, cert).valid

    def test_verify_rejects_wrong_target(self, bennett9: Ensemble) -> None:
        """Test a detector relabelled to another member fails verification."""
        cert = exact_product_detect(bennett9, "psi1")
        assert isinstance(cert, DetectingCertificate)
        forged = DetectingCertificate("psi2", cert.per_party_vectors, 0.0, 1.0)
        with pytest.raises(CertificateVerificationError):
            verify_certificate(bennett9, forged)

    def test_composition(self, bennett9: Ensemble) -> None:
        """Test slot-wise composition yields 72 verified detectors."""
        certs = clsd_verdict(bennett9).certificates()
        composed = compositional_detect(derive_marking_set(bennett9, 2), certs)
        assert len(composed) == 72
        assert all(c.valid for c in composed.values())

    def test_composition_needs_every_member(self, bennett9: Ensemble) -> None:
        """Test a missing base certificate is an error."""
        certs = clsd_verdict(bennett9).certificates()
        certs.pop("psi5")
        with pytest.raises(MissingCertificateError):
            compositional_detect(derive_marking_set(bennett9, 2), certs)


class TestMarkingVerdicts:
    """Tests for m-marking verdicts."""

    def test_bennett_marking_by_composition(self, bennett9: Ensemble) -> None:
        """Test Bennett 2-marking is settled by composing base detectors."""
        verdict = clsm_verdict(bennett9, 2)
        assert verdict.overall == Overall.DISTINGUISHABLE
        assert verdict.ensemble == "bennett9[m=2]"
        assert {v.method for v in verdict.per_state.values()} == {"composition"}

    def test_duan_marking_impossible(self, duan4: Ensemble) -> None:
        """Test Duan 2-marking is exactly infeasible for D1.D2."""
        verdict = clsm_verdict(duan4, 2)
        assert verdict.overall == Overall.INDISTINGUISHABLE
        evidence = verdict.per_state["D1.D2"].evidence
        assert isinstance(evidence, ExactInfeasibilityReport)
        assert evidence.branch_count == 2048


class TestHeuristicDetection:
    """Tests for the seeded alternating search."""

    def test_finds_simple_detector(self) -> None:
        """Test a detector is found when one exists."""
        report = heuristic_detect(entangled_pair(), "phi", restarts=5, seed=1)
        assert report.verdict == "found"
        assert report.certificate is not None
        assert report.certificate.valid

    def test_bell_not_found(self) -> None:
        """Test Bell states have no product detector; relative residual stays at least 1."""
        report = heuristic_detect(build_named("bell"), "B1", restarts=5, seed=3, max_iterations=50)
        assert report.verdict == "not_found"
        assert report.certificate is None
        assert report.best_offtarget_residual >= 1.0 - 1e-6
        assert report.restarts_run == 5

    def test_deterministic(self) -> None:
        """Test the same seed reproduces the same report."""
        first = heuristic_detect(build_named("bell"), "B2", restarts=4, seed=9, max_iterations=30)
        second = heuristic_detect(build_named("bell"), "B2", restarts=4, seed=9, max_iterations=30)
        assert first.best_restart == second.best_restart
        assert first.best_offtarget_residual == second.best_offtarget_residual

    def test_bell_undetermined(self) -> None:
        """Test entangled ensembles without detectors stay undetermined."""
        verdict = clsd_verdict(build_named("bell"), restarts=3, max_iterations=20)
        assert verdict.overall == Overall.UNDETERMINED
        assert all(v.status == StateStatus.UNKNOWN for v in verdict.per_state.values())

    def test_mixed_rejected(self) -> None:
        """Test the heuristic needs pure members."""
        with pytest.raises(MixedMemberError):
            heuristic_detect(build_named("yu", d=2), "rho")

    def test_tripartite_rejected(self) -> None:
        """Test the heuristic needs exactly two parties."""
        ghz = StateVector.from_amplitudes(np.eye(8)[0] + np.eye(8)[7], (2, 2, 2))
        e = Ensemble("ghz", PartyStructure.simple((2, 2, 2)), (EnsembleMember("ghz", ghz),))
        with pytest.raises(NonBipartiteError):
            heuristic_detect(e, "ghz")


class TestScaleInvariance:
    """Tests that rescaling members changes no verdict."""

    @pytest.mark.parametrize(
        "name", ["bennett9", "duan4", "pw_trine", "double_sic_antiparallel", "double_sic_parallel"]
    )
    def test_rescaled_members(self, name: str) -> None:
        """Test per-state statuses and methods survive random complex rescaling."""
        e = build_named(name)
        expected = clsd_verdict(e)
        rng = np.random.default_rng(17)
        for _ in range(3):
            verdict = clsd_verdict(rescaled(e, rng))
            assert verdict.overall == expected.overall
            assert {k: (v.status, v.method) for k, v in verdict.per_state.items()} == {
                k: (v.status, v.method) for k, v in expected.per_state.items()
            }


def grid_detects(grid: np.ndarray, amplitudes: np.ndarray, target: int) -> bool:
    """Some grid product vector is orthogonal to every other member but not to the target."""
    overlaps = np.abs(grid @ amplitudes.conj().T)
    others = np.delete(overlaps, target, axis=1).max(axis=1)
    return bool(np.any((others <= 1e-9) & (overlaps[:, target] >= 1e-6)))


class TestOracleEquivalence:
    """Tests the exact search against a grid over both Bloch spheres."""

    def test_random_axis_ensembles(self) -> None:
        """Test 50 random two-qubit product ensembles agree target by target."""
        rng = np.random.default_rng(2024)
        grid = bloch_grid_products()
        seen = set()
        for trial in range(50):
            e = random_axis_ensemble(rng, int(rng.integers(2, 6)))
            amplitudes = np.array([v.amplitudes for v in e.vectors()])
            for t, label in enumerate(e.labels):
                found = isinstance(exact_product_detect(e, label), DetectingCertificate)
                assert found == grid_detects(grid, amplitudes, t), f"trial {trial}, {label}"
                seen.add(found)
        assert seen == {True, False}
