"""JSON ensemble documents: schema models, parsing and serialization.

Complex numbers are two-element ``[re, im]`` arrays.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.ensembles.base import (
    Ensemble,
    EnsembleMember,
    PartyStructure,
    Violation,
    validate,
)
from locc_marker.errors import InvariantViolationError, LoccMarkerError, SchemaError
from locc_marker.numkernel import ComplexArray, Operator, StateVector

logger = logging.getLogger(__name__)

ComplexPair = Annotated[list[float], Field(min_length=2, max_length=2)]


class MemberDocument(BaseModel):
    """One ensemble member as it appears in a document."""

    model_config = ConfigDict(extra="forbid")

    label: str
    kind: Literal["pure", "mixed"]
    amplitudes: list[ComplexPair] | None = None
    matrix: list[list[ComplexPair]] | None = None
    product_factors: list[list[ComplexPair]] | None = None

    @model_validator(mode="after")
    def check_body(self) -> MemberDocument:
        """Pure members carry amplitudes, mixed members a matrix."""
        if self.kind == "pure" and (self.amplitudes is None or self.matrix is not None):
            raise ValueError("pure member needs 'amplitudes' and no 'matrix'")
        if self.kind == "mixed" and (self.matrix is None or self.amplitudes is not None):
            raise ValueError("mixed member needs 'matrix' and no 'amplitudes'")
        if self.kind == "mixed" and self.product_factors is not None:
            raise ValueError("mixed member cannot carry 'product_factors'")
        return self


class DerivedFromDocument(BaseModel):
    """Provenance of a derived marking set."""

    base: str
    m: int = Field(ge=1)
    tuples: list[list[int]]


class EnsembleDocument(BaseModel):
    """Top-level ensemble document."""

    model_config = ConfigDict(extra="forbid")

    name: str
    party_dims: list[Annotated[int, Field(gt=0)]] = Field(min_length=1)
    factor_assignment: list[Annotated[int, Field(ge=0)]]
    factor_dims: list[Annotated[int, Field(gt=0)]] | None = None
    members: list[MemberDocument] = Field(min_length=1)
    derived_from: DerivedFromDocument | None = None

    @model_validator(mode="after")
    def check_dims(self) -> EnsembleDocument:
        """Every length in the document must agree with the declared dims."""
        if self.factor_dims is None:
            if self.factor_assignment != list(range(len(self.party_dims))):
                raise ValueError("factor_dims: required when a party has several factors")
            factor_dims = list(self.party_dims)
        else:
            factor_dims = self.factor_dims
        if len(factor_dims) != len(self.factor_assignment):
            raise ValueError("factor_assignment: length differs from factor_dims")
        for party, dim in enumerate(self.party_dims):
            owned = zip(factor_dims, self.factor_assignment)
            product = math.prod(d for d, p in owned if p == party)
            if product != dim:
                raise ValueError(
                    f"party_dims.{party}: {dim} does not match its factors ({product})"
                )

        total = math.prod(self.party_dims)
        for i, member in enumerate(self.members):
            path = f"members.{i}"
            if member.amplitudes is not None and len(member.amplitudes) != total:
                raise ValueError(
                    f"{path}.amplitudes: {len(member.amplitudes)} entries, expected {total}"
                )
            if member.matrix is not None and (
                len(member.matrix) != total or any(len(row) != total for row in member.matrix)
            ):
                raise ValueError(f"{path}.matrix: expected a {total}x{total} matrix")
            if member.product_factors is not None:
                if len(member.product_factors) != len(self.party_dims):
                    raise ValueError(f"{path}.product_factors: one factor per party required")
                for p, factor in enumerate(member.product_factors):
                    if len(factor) != self.party_dims[p]:
                        raise ValueError(
                            f"{path}.product_factors.{p}: {len(factor)} entries, "
                            f"expected {self.party_dims[p]}"
                        )
        return self


def _to_complex(pairs: Sequence[Sequence[float]]) -> ComplexArray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def to_pairs(values: ComplexArray) -> Any:
    """Nested lists with each complex entry as ``[re, im]``."""
    arr = np.asarray(values, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        path = ".".join(str(p) for p in item["loc"]) or "$"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def ensemble_from_document(doc: EnsembleDocument) -> Ensemble:
    """Build an ensemble from an already schema-checked document."""
    factor_dims = tuple(doc.factor_dims or doc.party_dims)
    structure = PartyStructure(tuple(doc.party_dims), tuple(doc.factor_assignment), factor_dims)
    members = []
    for m in doc.members:
        body: StateVector | Operator
        try:
            if m.kind == "pure":
                body = StateVector(factor_dims, _to_complex(m.amplitudes or []))
            else:
                body = Operator(factor_dims, _to_complex(m.matrix or []))
            factors = None
            if m.product_factors is not None:
                factors = tuple(
                    StateVector((d,), _to_complex(f))
                    for d, f in zip(doc.party_dims, m.product_factors)
                )
        except InvariantViolationError as e:
            raise InvariantViolationError(
                f"member '{m.label}': {e}", [Violation(m.label, str(e))]
            ) from e
        members.append(EnsembleMember(m.label, body, factors))
    return Ensemble(doc.name, structure, tuple(members))


def parse_ensemble(
    document: str | bytes | dict[str, Any], tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> Ensemble:
    """Parse and validate an ensemble document.

    Raises:
        SchemaError: malformed JSON or schema violation (path-addressed)
        InvariantViolationError: the ensemble breaks a member invariant
    """
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"$: invalid JSON ({e})") from e
    else:
        data = document

    try:
        doc = EnsembleDocument.model_validate(data)
    except ValidationError as e:
        raise SchemaError(_format_validation_error(e)) from e

    try:
        ensemble = ensemble_from_document(doc)
    except InvariantViolationError:
        raise
    except LoccMarkerError as e:
        raise SchemaError(f"$: {e}") from e

    report = validate(ensemble, tol)
    if not report.valid:
        details = "; ".join(f"{v.label}: {v.message}" for v in report.violations)
        raise InvariantViolationError(
            f"ensemble '{ensemble.name}' is invalid: {details}", report.violations
        )

    logger.debug(f"Parsed ensemble {ensemble.name} with {len(ensemble)} members")
    return ensemble


def ensemble_to_document(
    e: Ensemble,
    derived_from: tuple[str, int, Sequence[Sequence[int]]] | None = None,
) -> dict[str, Any]:
    structure = e.structure
    members: list[dict[str, Any]] = []
    for m in e.members:
        entry: dict[str, Any] = {"label": m.label}
        if isinstance(m.body, StateVector):
            entry["kind"] = "pure"
            entry["amplitudes"] = to_pairs(m.body.amplitudes)
        else:
            entry["kind"] = "mixed"
            entry["matrix"] = to_pairs(m.body.entries)
        if m.product_factors is not None:
            entry["product_factors"] = [to_pairs(f.amplitudes) for f in m.product_factors]
        members.append(entry)

    doc: dict[str, Any] = {
        "name": e.name,
        "party_dims": list(structure.party_dims),
        "factor_assignment": list(structure.factor_assignment),
        "members": members,
    }
    if not structure.is_simple():
        doc["factor_dims"] = list(structure.factor_dims)
    if derived_from is not None:
        base, m_slots, tuples = derived_from
        doc["derived_from"] = {"base": base, "m": m_slots, "tuples": [list(t) for t in tuples]}
    return doc


def serialize_ensemble(
    e: Ensemble,
    derived_from: tuple[str, int, Sequence[Sequence[int]]] | None = None,
) -> str:
    """Serialize to the JSON ensemble schema."""
    return json.dumps(ensemble_to_document(e, derived_from), indent=2)
