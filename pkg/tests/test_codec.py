"""Tests for ensemble JSON documents."""

from __future__ import annotations

import json

import numpy as np
import pytest

from locc_marker.ensembles import Ensemble, build_named, parse_ensemble, serialize_ensemble
from locc_marker.errors import InvariantViolationError, SchemaError
from locc_marker.marking import derive_marking_set
from tests.conftest import FIXTURES_DIR, load_fixture


class TestParseEnsemble:
    """Tests for parsing valid documents."""

    def test_minimal_single(self) -> None:
        """Test a one-member single-party document."""
        e = parse_ensemble(load_fixture("minimal_single.json"))
        assert e.name == "minimal_single"
        assert e.labels == ["zero"]
        assert e.structure.party_dims == (2,)

    def test_product_factors_kept(self) -> None:
        """Test declared product factors become the members' factorization."""
        e = parse_ensemble((FIXTURES_DIR / "product_pair.json").read_text())
        assert e.is_product
        assert e.members[1].product_factors[0].allclose(e.members[1].product_factors[1])

    def test_mixed_member(self) -> None:
        """Test a mixed member is read as a density matrix."""
        e = parse_ensemble(load_fixture("mixed_maximally.json"))
        assert not e.is_pure
        assert np.allclose(e.members[0].density_matrix(), np.eye(2) / 2)


class TestRejectedDocuments:
    """Tests for schema and invariant failures."""

    def test_invalid_json(self) -> None:
        """Test malformed JSON is a schema error."""
        with pytest.raises(SchemaError):
            parse_ensemble("{not json")

    def test_mismatched_dims(self) -> None:
        """Test amplitude count is checked against party dims with a path."""
        with pytest.raises(SchemaError, match="members.0.amplitudes"):
            parse_ensemble(load_fixture("mismatched_dims.json"))

    def test_empty_members(self) -> None:
        """Test an ensemble needs at least one member."""
        with pytest.raises(SchemaError, match="members"):
            parse_ensemble(load_fixture("empty_members.json"))

    def test_bad_norm(self) -> None:
        """Test unnormalized pure members break the norm invariant."""
        with pytest.raises(InvariantViolationError, match="norm") as exc_info:
            parse_ensemble(load_fixture("bad_norm.json"))
        assert exc_info.value.violations[0].label == "long"

    def test_factor_mismatch(self) -> None:
        """Test product factors must tensor to the declared amplitudes."""
        with pytest.raises(InvariantViolationError) as exc_info:
            parse_ensemble(load_fixture("factor_mismatch.json"))
        assert exc_info.value.violations[0].label == "liar"

    def test_unknown_field(self) -> None:
        """Test unknown top-level fields are rejected."""
        doc = load_fixture("minimal_single.json")
        doc["colour"] = "blue"
        with pytest.raises(SchemaError):
            parse_ensemble(doc)


class TestSerialize:
    """Tests for writing documents."""

    def test_named_ensemble_survives(self, duan4: Ensemble) -> None:
        """Test a serialized builder output parses back to the same states."""
        parsed = parse_ensemble(serialize_ensemble(duan4))
        assert parsed.labels == duan4.labels
        assert parsed.is_product
        for a, b in zip(parsed.vectors(), duan4.vectors()):
            assert a.allclose(b, atol=1e-15)

    def test_grouped_structure_written(self) -> None:
        """Test multi-factor parties write factor_dims."""
        doc = json.loads(serialize_ensemble(build_named("smolin")))
        assert doc["factor_dims"] == [2, 2, 2, 2]
        assert doc["factor_assignment"] == [0, 0, 1, 1]
        assert doc["members"][0]["kind"] == "mixed"

    def test_derived_from_recorded(self) -> None:
        """Test derived marking sets record their base, m and tuples."""
        derived = derive_marking_set(build_named("bell"), 2)
        doc = json.loads(derived.to_json())
        assert doc["name"] == "bell[m=2]"
        assert doc["derived_from"]["base"] == "bell"
        assert doc["derived_from"]["m"] == 2
        assert len(doc["derived_from"]["tuples"]) == 12
