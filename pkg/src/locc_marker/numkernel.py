"""Dense complex linear algebra over small composite spaces.

Amplitudes are stored row-major with the first tensor factor varying slowest,
so a state on dims (d0, d1, ...) reshapes directly to an array of that shape.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.errors import (
    DimensionMismatchError,
    InvalidPermutationError,
    InvariantViolationError,
)

logger = logging.getLogger(__name__)

ComplexArray = NDArray[np.complex128]
ComplexScalar = complex

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-9


def _readonly(values: Any) -> ComplexArray:
    arr = np.array(values, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    checked = tuple(int(d) for d in dims)
    if not checked or any(d <= 0 for d in checked):
        raise DimensionMismatchError(f"dims must be positive integers, got {list(dims)}")
    return checked


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit ket on a tensor product of factors with the given dims.

    Construction rejects norms further than NORM_TOL from 1; build from
    unnormalized amplitudes with ``from_amplitudes``.
    """

    dims: tuple[int, ...]
    amplitudes: ComplexArray

    def __post_init__(self) -> None:
        dims = _check_dims(self.dims)
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != math.prod(dims):
            raise DimensionMismatchError(
                f"{amps.size} amplitudes do not match dims {list(dims)}"
            )
        if not np.all(np.isfinite(amps)):
            raise InvariantViolationError("state amplitudes must be finite")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise InvariantViolationError(
                f"state norm {norm:.12g} outside 1 ± {NORM_TOL:g}; "
                "use from_amplitudes to normalize"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @classmethod
    def from_amplitudes(
        cls,
        amplitudes: Sequence[complex] | ComplexArray,
        dims: Sequence[int] | None = None,
        *,
        normalize: bool = True,
    ) -> StateVector:
        """Build a state, normalizing unless told otherwise."""
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if dims is None:
            dims = (amps.size,)
        if normalize:
            norm = float(np.linalg.norm(amps))
            if norm == 0.0:
                raise InvariantViolationError("cannot normalize the zero vector")
            amps = amps / norm
        return cls(tuple(dims), amps)

    @classmethod
    def basis(cls, index: int, dims: Sequence[int]) -> StateVector:
        """Computational basis ket with flat index ``index``."""
        amps = np.zeros(math.prod(dims), dtype=np.complex128)
        amps[index] = 1.0
        return cls(tuple(dims), amps)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> StateVector:
        return StateVector.from_amplitudes(self.amplitudes, self.dims)

    def as_tensor(self) -> ComplexArray:
        """Amplitudes reshaped to one axis per factor."""
        return self.amplitudes.reshape(self.dims)

    def projector(self) -> ComplexArray:
        """Return |psi><psi| as a dense matrix."""
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def allclose(self, other: StateVector, atol: float = 1e-9) -> bool:
        return self.dims == other.dims and bool(
            np.allclose(self.amplitudes, other.amplitudes, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class Operator:
    """Square matrix on a composite space; optionally verified Hermitian."""

    dims: tuple[int, ...]
    entries: ComplexArray
    hermitian: bool = False

    def __post_init__(self) -> None:
        dims = _check_dims(self.dims)
        dim = math.prod(dims)
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.shape != (dim, dim):
            raise DimensionMismatchError(
                f"operator of shape {entries.shape} does not match dims {list(dims)}"
            )
        if not np.all(np.isfinite(entries)):
            raise InvariantViolationError("operator entries must be finite")
        if self.hermitian:
            skew = float(np.max(np.abs(entries - entries.conj().T))) if dim else 0.0
            if skew > HERMITIAN_TOL:
                raise InvariantViolationError(f"operator claimed Hermitian but |M - M^+| = {skew}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "entries", _readonly(entries))

    @classmethod
    def from_matrix(
        cls,
        matrix: Sequence[Sequence[complex]] | ComplexArray,
        dims: Sequence[int] | None = None,
        *,
        hermitian: bool = False,
    ) -> Operator:
        entries = np.asarray(matrix, dtype=np.complex128)
        if dims is None:
            dims = (entries.shape[0],)
        return cls(tuple(dims), entries, hermitian)

    @classmethod
    def span_projector(
        cls, vectors: Sequence[StateVector], tol: ToleranceConfig = DEFAULT_TOLERANCES
    ) -> Operator:
        """Orthogonal projector onto the span of ``vectors``."""
        basis = orthonormal_basis(vectors, tol)
        matrix = sum((b.projector() for b in basis), np.zeros((vectors[0].dim,) * 2, complex))
        return cls(vectors[0].dims, matrix, hermitian=True)

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def min_eigenvalue(self) -> float:
        hermitian_part = (self.entries + self.entries.conj().T) / 2
        return float(np.linalg.eigvalsh(hermitian_part)[0])

    def normalized_trace(self) -> Operator:
        """Scale to unit trace."""
        return Operator(self.dims, self.entries / self.trace().real, self.hermitian)


def hermitian_inner(u: StateVector, v: StateVector) -> complex:
    """Return <u|v>, conjugate-linear in ``u``."""
    if u.dim != v.dim:
        raise DimensionMismatchError(f"inner product of dims {u.dim} and {v.dim}")
    return complex(np.vdot(u.amplitudes, v.amplitudes))


def tensor_product(u: StateVector, v: StateVector) -> StateVector:
    return StateVector(u.dims + v.dims, np.kron(u.amplitudes, v.amplitudes))


def tensor_all(vectors: Sequence[StateVector]) -> StateVector:
    """Tensor a nonempty sequence of states in order."""
    if not vectors:
        raise DimensionMismatchError("tensor_all needs at least one state")
    result = vectors[0]
    for v in vectors[1:]:
        result = tensor_product(result, v)
    return result


def check_permutation(perm: Sequence[int], n: int) -> tuple[int, ...]:
    checked = tuple(int(p) for p in perm)
    if sorted(checked) != list(range(n)):
        raise InvalidPermutationError(f"{list(perm)} is not a permutation of 0..{n - 1}")
    return checked


def invert_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    inverse = [0] * len(perm)
    for position, source in enumerate(perm):
        inverse[source] = position
    return tuple(inverse)


def regroup_factors(s: StateVector, perm: Sequence[int]) -> StateVector:
    """Reorder tensor factors: new factor k is old factor ``perm[k]``."""
    order = check_permutation(perm, len(s.dims))
    moved = np.transpose(s.as_tensor(), order)
    return StateVector(tuple(s.dims[p] for p in order), moved.reshape(-1))


def regroup_operator(op: Operator, perm: Sequence[int]) -> Operator:
    """Reorder tensor factors of an operator, same convention as regroup_factors."""
    n = len(op.dims)
    order = check_permutation(perm, n)
    tensor = op.entries.reshape(op.dims + op.dims)
    moved = np.transpose(tensor, order + tuple(n + p for p in order))
    dim = op.dim
    return Operator(tuple(op.dims[p] for p in order), moved.reshape(dim, dim), op.hermitian)


def stack_rows(vectors: Sequence[StateVector]) -> ComplexArray:
    """Stack amplitudes as rows, checking that all dimensions agree."""
    if not vectors:
        return np.zeros((0, 0), dtype=np.complex128)
    dim = vectors[0].dim
    for v in vectors:
        if v.dim != dim:
            raise DimensionMismatchError(f"mixed dimensions {dim} and {v.dim}")
    return np.vstack([v.amplitudes for v in vectors])


def matrix_rank(matrix: ComplexArray, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> int:
    """Singular values above rank_rel_tol times the largest one."""
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[0] == 0.0:
        return 0
    return int(np.sum(singular > tol.rank_rel_tol * singular[0]))


def numerical_rank(
    vectors: Sequence[StateVector], tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> int:
    return matrix_rank(stack_rows(vectors), tol)


def nullspace_of_rows(
    rows: ComplexArray, dim: int, tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> ComplexArray:
    """Orthonormal columns spanning {x : <r|x> = 0 for every row r}."""
    if rows.size == 0:
        return np.eye(dim, dtype=np.complex128)
    return scipy.linalg.null_space(rows.conj(), rcond=tol.rank_rel_tol).astype(np.complex128)


def orthonormal_basis(
    vectors: Sequence[StateVector], tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> list[StateVector]:
    """Orthonormal basis of the span of ``vectors``."""
    matrix = stack_rows(vectors)
    if matrix.size == 0:
        return []
    columns = scipy.linalg.orth(matrix.T, rcond=tol.rank_rel_tol)
    dims = vectors[0].dims
    return [StateVector(dims, columns[:, k]) for k in range(columns.shape[1])]


def orthocomplement(
    vectors: Sequence[StateVector],
    within_dim: int,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> list[StateVector]:
    """Orthonormal basis of the orthogonal complement of span(vectors)."""
    for v in vectors:
        if v.dim != within_dim:
            raise DimensionMismatchError(f"vector of dim {v.dim} is not in C^{within_dim}")
    dims = vectors[0].dims if vectors else (within_dim,)
    columns = nullspace_of_rows(stack_rows(vectors), within_dim, tol)
    complement = [StateVector(dims, columns[:, k]) for k in range(columns.shape[1])]
    logger.debug(f"Orthocomplement of {len(vectors)} vectors in C^{within_dim}: {len(complement)}")
    return complement


def schmidt_rank(
    s: StateVector, split: Sequence[int], tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> int:
    """Schmidt rank across the cut ``split`` : rest."""
    n = len(s.dims)
    left = sorted(set(int(i) for i in split))
    if len(left) != len(list(split)) or not left or len(left) >= n or left[0] < 0 or left[-1] >= n:
        raise InvalidPermutationError(f"{list(split)} is not a proper split of {n} factors")
    right = [i for i in range(n) if i not in left]
    regrouped = regroup_factors(s, left + right)
    rows = math.prod(s.dims[i] for i in left)
    return matrix_rank(regrouped.amplitudes.reshape(rows, -1), tol)


def psd_sqrt(matrix: ComplexArray) -> ComplexArray:
    """Principal square root of a positive semidefinite matrix."""
    values, vectors = np.linalg.eigh((matrix + matrix.conj().T) / 2)
    roots = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * roots) @ vectors.conj().T
