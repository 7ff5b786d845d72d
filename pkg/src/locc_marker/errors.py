"""Exception hierarchy shared by the analysis modules."""

from __future__ import annotations

from typing import Any


class LoccMarkerError(Exception):
    """Base exception for all locc-marker errors."""

    pass


class DimensionMismatchError(LoccMarkerError):
    """Vectors or operators live in incompatible spaces."""

    pass


class InvalidPermutationError(LoccMarkerError):
    """A factor permutation or split is not valid for the given dims."""

    pass


class SchemaError(LoccMarkerError):
    """An ensemble document does not conform to the JSON schema."""

    pass


class InvariantViolationError(LoccMarkerError):
    """A constructed or parsed value breaks a type invariant."""

    def __init__(self, message: str, violations: list[Any] | None = None) -> None:
        super().__init__(message)
        self.violations = violations or []


class UnknownEnsembleError(LoccMarkerError):
    """No named ensemble builder is registered under this name."""

    pass


class UnknownProtocolError(LoccMarkerError):
    """No named protocol exists under this name."""

    pass


class UnknownClaimError(LoccMarkerError):
    """No reproducible claim is registered under this id."""

    pass


class MarkingRangeError(LoccMarkerError):
    """Marking size m is outside 1..N."""

    pass


class MixedMemberError(LoccMarkerError):
    """The operation needs pure members but got a mixed one."""

    pass


class NonProductMemberError(LoccMarkerError):
    """The operation needs product members but one has no factorization."""

    pass


class NonBipartiteError(LoccMarkerError):
    """The operation is only defined for two parties."""

    pass


class NotADependenceError(LoccMarkerError):
    """Coefficients do not annihilate the ensemble."""

    pass


class NoAnchorTupleError(LoccMarkerError):
    """No anchor tuple leaves a nonzero coefficient outside it."""

    pass


class MissingCertificateError(LoccMarkerError):
    """A base member has no detecting certificate."""

    pass


class CertificateVerificationError(LoccMarkerError):
    """A certificate failed independent re-verification."""

    pass


class BranchCapExceededError(LoccMarkerError):
    """Exact enumeration would need more branches than allowed."""

    def __init__(self, branches: int, cap: int) -> None:
        super().__init__(f"Exact enumeration needs {branches} branches, cap is {cap}")
        self.branches = branches
        self.cap = cap


class DependentInputError(LoccMarkerError):
    """Unextendibility classification needs linearly independent members."""

    pass


class UndecidableFragmentError(LoccMarkerError):
    """Extendibility is outside the fragment decidable with exact methods."""

    pass


class MalformedProtocolError(LoccMarkerError):
    """A protocol tree is structurally invalid."""

    pass


class NoProtocolError(LoccMarkerError):
    """No marking protocol can be constructed for the input."""

    pass


class UnknownLabelError(LoccMarkerError):
    """No ensemble member carries this label."""

    pass


class InvalidParameterError(LoccMarkerError):
    """A named builder received a missing or out-of-range parameter."""

    pass
