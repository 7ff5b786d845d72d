"""Ensemble data model, validation, and the named-builder interface."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    InvariantViolationError,
    MixedMemberError,
    UnknownLabelError,
)
from locc_marker.numkernel import ComplexArray, Operator, StateVector, tensor_all

TRACE_TOL = 1e-9
PSD_TOL = 1e-9


@dataclass(frozen=True)
class PartyStructure:
    """Assignment of tensor factors to spatially separated parties.

    Factors of one party are contiguous and parties appear in index order, so
    a state's amplitudes reshape directly to ``party_dims``.
    """

    party_dims: tuple[int, ...]
    factor_assignment: tuple[int, ...]
    factor_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        party_dims = tuple(int(d) for d in self.party_dims)
        assignment = tuple(int(p) for p in self.factor_assignment)
        factor_dims = tuple(int(d) for d in self.factor_dims)
        object.__setattr__(self, "party_dims", party_dims)
        object.__setattr__(self, "factor_assignment", assignment)
        object.__setattr__(self, "factor_dims", factor_dims)

        if not party_dims or any(d <= 0 for d in party_dims + factor_dims):
            raise DimensionMismatchError("party and factor dims must be positive")
        if len(assignment) != len(factor_dims):
            raise DimensionMismatchError(
                f"{len(assignment)} factor assignments for {len(factor_dims)} factors"
            )
        if any(p < 0 or p >= len(party_dims) for p in assignment):
            raise DimensionMismatchError(
                f"factor_assignment {list(assignment)} names unknown party"
            )
        if list(assignment) != sorted(assignment):
            raise DimensionMismatchError(
                "factors of each party must be contiguous and in party order"
            )
        for party, dim in enumerate(party_dims):
            factors = self.party_factors(party)
            if not factors:
                raise DimensionMismatchError(f"party {party} has no tensor factor")
            product = math.prod(factor_dims[f] for f in factors)
            if product != dim:
                raise DimensionMismatchError(
                    f"party {party} has dim {dim} but its factors multiply to {product}"
                )

    @classmethod
    def simple(cls, party_dims: Sequence[int]) -> PartyStructure:
        """One tensor factor per party."""
        return cls(tuple(party_dims), tuple(range(len(party_dims))), tuple(party_dims))

    @property
    def num_parties(self) -> int:
        return len(self.party_dims)

    @property
    def num_factors(self) -> int:
        return len(self.factor_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.party_dims)

    def party_factors(self, party: int) -> tuple[int, ...]:
        return tuple(f for f, p in enumerate(self.factor_assignment) if p == party)

    def is_simple(self) -> bool:
        return self.factor_dims == self.party_dims


@dataclass(frozen=True, eq=False)
class EnsembleMember:
    """A labelled pure or mixed state, optionally with per-party factors."""

    label: str
    body: StateVector | Operator
    product_factors: tuple[StateVector, ...] | None = None

    def __post_init__(self) -> None:
        if self.product_factors is not None:
            object.__setattr__(self, "product_factors", tuple(self.product_factors))

    @classmethod
    def product(cls, label: str, factors: Sequence[StateVector]) -> EnsembleMember:
        """Pure product member whose body is the tensor of ``factors``."""
        return cls(label, tensor_all(list(factors)), tuple(factors))

    @property
    def is_pure(self) -> bool:
        return isinstance(self.body, StateVector)

    @property
    def is_product(self) -> bool:
        return self.is_pure and self.product_factors is not None

    @property
    def dim(self) -> int:
        return self.body.dim

    @property
    def state(self) -> StateVector:
        if not isinstance(self.body, StateVector):
            raise MixedMemberError(f"member '{self.label}' is mixed")
        return self.body

    def density_matrix(self) -> ComplexArray:
        if isinstance(self.body, StateVector):
            return self.body.projector()
        return self.body.entries


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Ordered, uniquely labelled states over one party structure."""

    name: str
    structure: PartyStructure
    members: tuple[EnsembleMember, ...]

    def __post_init__(self) -> None:
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        for member in members:
            if member.dim != self.structure.total_dim:
                raise DimensionMismatchError(
                    f"member '{member.label}' has dim {member.dim}, "
                    f"structure has {self.structure.total_dim}"
                )
        labels = [m.label for m in members]
        if len(set(labels)) != len(labels):
            raise InvariantViolationError(f"duplicate member labels in ensemble '{self.name}'")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.members]

    @property
    def is_pure(self) -> bool:
        return all(m.is_pure for m in self.members)

    @property
    def is_product(self) -> bool:
        return all(m.is_product for m in self.members)

    def index_of(self, label: str) -> int:
        for index, member in enumerate(self.members):
            if member.label == label:
                return index
        raise UnknownLabelError(f"ensemble '{self.name}' has no member '{label}'")

    def member(self, label: str) -> EnsembleMember:
        return self.members[self.index_of(label)]

    def vectors(self) -> list[StateVector]:
        """State vectors of all members; all must be pure."""
        return [m.state for m in self.members]

    def party_matrix(self, index: int) -> ComplexArray:
        """Bipartite member amplitudes reshaped to a d_A x d_B matrix."""
        return self.members[index].state.amplitudes.reshape(self.structure.party_dims)

    def subset(self, labels: Iterable[str], name: str | None = None) -> Ensemble:
        wanted = set(labels)
        kept = tuple(m for m in self.members if m.label in wanted)
        return Ensemble(name or self.name, self.structure, kept)

    def without(self, label: str) -> Ensemble:
        self.index_of(label)
        kept = tuple(m for m in self.members if m.label != label)
        return Ensemble(f"{self.name} without {label}", self.structure, kept)


@dataclass
class Violation:
    """One broken invariant, tied to a member label when applicable."""

    label: str | None
    message: str


@dataclass
class ValidationReport:
    ensemble: str
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def add(self, label: str | None, message: str) -> None:
        self.violations.append(Violation(label, message))


def validate(e: Ensemble, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> ValidationReport:
    """Check every member invariant; failures are collected, never raised."""
    report = ValidationReport(ensemble=e.name)
    structure = e.structure

    for member in e.members:
        body = member.body
        if isinstance(body, Operator):
            entries = body.entries
            if float(np.max(np.abs(entries - entries.conj().T))) > tol.identity_tol:
                report.add(member.label, "mixed body is not Hermitian")
            trace = body.trace()
            if abs(trace - 1.0) > TRACE_TOL:
                report.add(member.label, f"trace out of tolerance ({trace.real:.12g})")
            if body.min_eigenvalue() < -PSD_TOL:
                report.add(member.label, "mixed body is not positive semidefinite")

        factors = member.product_factors
        if factors is None:
            continue
        if not isinstance(body, StateVector):
            report.add(member.label, "product factors given for a mixed member")
            continue
        if len(factors) != structure.num_parties:
            report.add(
                member.label,
                f"{len(factors)} product factors for {structure.num_parties} parties",
            )
            continue
        if any(f.dim != d for f, d in zip(factors, structure.party_dims)):
            report.add(member.label, "product factor dims do not match party dims")
            continue
        joined = tensor_all(list(factors)).amplitudes
        if float(np.max(np.abs(joined - body.amplitudes))) > tol.orth_tol:
            report.add(member.label, "factorization mismatch")

    return report


class EnsembleBuilder(ABC):
    """Base class for named ensemble constructions."""

    parameters: tuple[str, ...] = ()

    @property
    @abstractmethod
    def builder_id(self) -> str:
        """Registry name, e.g. 'bennett9'."""
        ...

    @property
    @abstractmethod
    def description(self) -> str:
        """One-line human readable description."""
        ...

    @abstractmethod
    def build(self, params: Mapping[str, int]) -> Ensemble:
        """Construct the ensemble for already-checked parameters."""
        ...

    def check_params(self, params: Mapping[str, int | None]) -> dict[str, int]:
        """Drop unset values and reject parameters this builder does not take."""
        given = {k: v for k, v in params.items() if v is not None}
        unknown = set(given) - set(self.parameters)
        if unknown:
            raise InvalidParameterError(
                f"'{self.builder_id}' does not take parameters {sorted(unknown)}"
            )
        return given
