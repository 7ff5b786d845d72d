"""Tests for POVMs, protocol trees and their simulation."""

from __future__ import annotations

import numpy as np
import pytest

from locc_marker.detect import DetectingCertificate, clsd_verdict, exact_product_detect
from locc_marker.ensembles import Ensemble, build_named
from locc_marker.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    MalformedProtocolError,
    MissingCertificateError,
    UnknownLabelError,
    UnknownProtocolError,
)
from locc_marker.marking import derive_marking_set
from locc_marker.numkernel import StateVector
from locc_marker.protocol import (
    INCONCLUSIVE,
    INCONCLUSIVE_DECLARATION,
    NAMED_PROTOCOLS,
    POVM,
    Declaration,
    ProtocolNode,
    build_named_protocol,
    build_sequential_marking_protocol,
    count_nodes,
    mixed_marking_hypotheses,
    named_protocol_hypotheses,
    povm_from_certificate,
    protocol_to_dict,
    pw_conclusive,
    pw_conclusive_povm,
    simulate,
    upb_marking,
    verify_conclusive_condition,
    verify_povm,
    yu_marking,
)


class TestPOVM:
    """Tests for POVM construction and verification."""

    def test_binary_test_is_valid(self) -> None:
        """Test a projective test is positive and complete."""
        p = POVM.binary_test(0, (0,), (2,), StateVector.from_amplitudes([1, 1]), "hit", "miss")
        report = verify_povm(p)
        assert report.passed
        assert report.completeness_residual <= 1e-12

    def test_incomplete_povm(self) -> None:
        """Test effects that do not sum to the identity fail verification."""
        p = POVM.from_effects(0, (0,), (2,), {"only": np.diag([1.0, 0.0])})
        report = verify_povm(p)
        assert not report.passed
        assert report.failures

    def test_negative_effect(self) -> None:
        """Test an effect with a negative eigenvalue fails verification."""
        p = POVM.from_effects(0, (0,), (2,), {"a": np.diag([1.5, 0.5]), "b": np.diag([-0.5, 0.5])})
        assert not verify_povm(p).passed

    def test_duplicate_labels(self) -> None:
        """Test outcome labels must be unique."""
        with pytest.raises(MalformedProtocolError):
            POVM(0, (0,), (2,), ("a", "a"), (np.eye(2), np.zeros((2, 2))))

    def test_effect_shape(self) -> None:
        """Test effects must match the subsystem dimension."""
        with pytest.raises(DimensionMismatchError):
            POVM.from_effects(0, (0,), (2,), {"a": np.eye(3)})

    def test_unknown_effect(self) -> None:
        """Test looking up a missing outcome."""
        with pytest.raises(UnknownLabelError):
            POVM.computational(0, (0,), (2,), "k").effect("x")


class TestConclusiveCondition:
    """Tests for whole-space conclusive measurements."""

    def test_trine_product_basis(self, pw_trine: Ensemble) -> None:
        """Test E0 identifies w0w0 with probability 9/16 and never fires elsewhere."""
        report = verify_conclusive_condition(pw_conclusive_povm(0), pw_trine, {"E0": "w0w0"})
        assert report.passed
        assert report.success["E0"] == pytest.approx(9 / 16)
        assert report.max_offdiagonal <= 1e-12

    def test_trine_povm_complete(self) -> None:
        """Test the four product-basis effects form a POVM."""
        assert verify_povm(pw_conclusive_povm(0)).passed

    def test_wrong_effect_fails(self, pw_trine: Ensemble) -> None:
        """Test an effect that fires on other members is reported."""
        report = verify_conclusive_condition(pw_conclusive_povm(0), pw_trine, {"E?": "w0w0"})
        assert not report.passed

    def test_certificate_povm(self, pw_trine: Ensemble) -> None:
        """Test a detecting certificate induces a conclusive measurement."""
        cert = exact_product_detect(pw_trine, "w1w1")
        assert isinstance(cert, DetectingCertificate)
        povm = povm_from_certificate(cert, pw_trine.structure)
        assert verify_povm(povm).passed
        assert verify_conclusive_condition(povm, pw_trine, {"hit": "w1w1"}).passed

    def test_dimension_checked(self, bennett9: Ensemble) -> None:
        """Test the POVM must act on the ensemble's space."""
        with pytest.raises(DimensionMismatchError):
            verify_conclusive_condition(pw_conclusive_povm(0), bennett9, {"E0": "psi1"})


class TestSimulation:
    """Tests for exact protocol simulation."""

    @pytest.mark.parametrize("target", [0, 1, 2])
    def test_pw_conclusive(self, pw_trine: Ensemble, target: int) -> None:
        """Test the local trine protocol succeeds with 9/16 and never errs."""
        report = simulate(pw_conclusive(target), pw_trine)
        label = f"w{target}w{target}"
        assert report.per_hypothesis[label].success_probability == pytest.approx(9 / 16)
        assert report.zero_error
        assert report.conserved
        for other, outcome in report.per_hypothesis.items():
            if other != label:
                assert outcome.distribution.get(INCONCLUSIVE, 0.0) == pytest.approx(1.0)

    def test_sequential_bennett_marking(self, bennett9: Ensemble) -> None:
        """Test composed base detectors mark two Bennett states without error."""
        d = derive_marking_set(bennett9, 2)
        root = build_sequential_marking_protocol(d, clsd_verdict(bennett9).certificates())
        report = simulate(root, d)
        assert len(report.per_hypothesis) == 72
        assert report.zero_error
        assert report.conserved
        assert min(o.success_probability for o in report.per_hypothesis.values()) > 0

    def test_sequential_needs_certificates(self, bennett9: Ensemble) -> None:
        """Test the sequential protocol needs a detector for every member."""
        with pytest.raises(MissingCertificateError):
            build_sequential_marking_protocol(derive_marking_set(bennett9, 2), {})

    @pytest.mark.parametrize("d", [2, 3])
    def test_yu_strict(self, d: int) -> None:
        """Test the strict (0, 1) rule marks the Yu pair with 1/(d^2-1)."""
        hypotheses = mixed_marking_hypotheses(build_named("yu", d=d), 2)
        report = simulate(yu_marking(d, "strict01"), hypotheses)
        assert report.zero_error
        for outcome in report.per_hypothesis.values():
            assert outcome.success_probability == pytest.approx(1 / (d * d - 1))

    @pytest.mark.parametrize("d", [2, 3])
    def test_yu_any_anticorrelated(self, d: int) -> None:
        """Test any unequal pair marks the Yu pair with d/(d+1)."""
        report = simulate(yu_marking(d), mixed_marking_hypotheses(build_named("yu", d=d), 2))
        assert report.zero_error
        assert set(report.per_hypothesis) == {"rho.sigma", "sigma.rho"}
        for outcome in report.per_hypothesis.values():
            assert outcome.success_probability == pytest.approx(d / (d + 1))

    def test_upb_marking(self) -> None:
        """Test local Tiles tests mark the UPB-based pair with 1/5."""
        report = simulate(upb_marking(), mixed_marking_hypotheses(build_named("xb_from_upb"), 2))
        assert report.zero_error
        for outcome in report.per_hypothesis.values():
            assert outcome.success_probability == pytest.approx(0.2)


class TestMalformedTrees:
    """Tests for protocol tree validation."""

    def test_nonlocal_subsystem(self, pw_trine: Ensemble) -> None:
        """Test a party cannot measure another party's factor."""
        p = POVM.computational(0, (1,), (2,), "k")
        root = ProtocolNode(p, {"k0": INCONCLUSIVE_DECLARATION, "k1": INCONCLUSIVE_DECLARATION})
        with pytest.raises(MalformedProtocolError):
            simulate(root, pw_trine)

    def test_missing_branch(self, pw_trine: Ensemble) -> None:
        """Test every outcome needs a branch."""
        povm = POVM.computational(0, (0,), (2,), "k")
        root = ProtocolNode(povm, {"k0": INCONCLUSIVE_DECLARATION})
        with pytest.raises(MalformedProtocolError):
            simulate(root, pw_trine)

    def test_unknown_declaration(self, pw_trine: Ensemble) -> None:
        """Test declarations must name a hypothesis."""
        root = ProtocolNode(
            POVM.computational(0, (0,), (2,), "k"),
            {"k0": Declaration("nobody"), "k1": INCONCLUSIVE_DECLARATION},
        )
        with pytest.raises(MalformedProtocolError):
            simulate(root, pw_trine)

    def test_global_node(self, pw_trine: Ensemble) -> None:
        """Test whole-space measurements cannot be protocol nodes."""
        branches = {k: INCONCLUSIVE_DECLARATION for k in ("E0", "E?", "E??", "E???")}
        root = ProtocolNode(pw_conclusive_povm(0), branches)
        with pytest.raises(MalformedProtocolError):
            simulate(root, pw_trine)


class TestNamedProtocols:
    """Tests for the named protocol table."""

    def test_table(self) -> None:
        """Test the registered protocol names."""
        assert list(NAMED_PROTOCOLS) == ["pw_conclusive", "yu_marking", "upb_marking"]

    def test_build_with_parameters(self) -> None:
        """Test parameters reach the builder and None means default."""
        root = build_named_protocol("yu_marking", d=3, mode="strict01", member=None)
        hypotheses = named_protocol_hypotheses("yu_marking", d=3)
        outcome = simulate(root, hypotheses).per_hypothesis["sigma.rho"]
        assert outcome.success_probability == pytest.approx(1 / 8)

    def test_unknown(self) -> None:
        """Test unknown protocol names."""
        with pytest.raises(UnknownProtocolError):
            build_named_protocol("teleport")

    @pytest.mark.parametrize(
        ("builder", "kwargs"),
        [
            (pw_conclusive, {"target": 3}),
            (yu_marking, {"d": 2, "mode": "sometimes"}),
            (upb_marking, {"member": "tile9"}),
        ],
    )
    def test_bad_parameters(self, builder: object, kwargs: dict[str, object]) -> None:
        """Test invalid protocol parameters are rejected."""
        with pytest.raises(InvalidParameterError):
            builder(**kwargs)  # type: ignore[operator]

    def test_serialize(self) -> None:
        """Test the tree serializes to nested mappings."""
        root = pw_conclusive(0)
        doc = protocol_to_dict(root)
        assert doc["party"] == 0
        assert doc["branches"]["parallel"] == {"declare": None}
        assert doc["branches"]["perp"]["branches"]["perp"] == {"declare": "w0w0"}
        assert count_nodes(root) == 2
