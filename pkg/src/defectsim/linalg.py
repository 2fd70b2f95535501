"""Small dense linear algebra: span bases, complement projection, rank tests.

Spans here are tiny (at most one vector per agent), so modified Gram-Schmidt
with a single re-orthogonalization pass is accurate and dependency-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import InvalidInputError, NonFiniteOracleError, Point

DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True)
class SpanBasis:
    """An orthonormal basis (rows of ``vectors``) for the span of some inputs."""

    vectors: np.ndarray  # shape (k, d); k == 0 encodes the trivial span
    tol: float

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _stack(vectors: Sequence[Point]) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros((0, 0))
    mat = np.array([np.asarray(v, dtype=np.float64) for v in vectors])
    if mat.ndim != 2:
        raise InvalidInputError("all vectors must share one dimension")
    return mat


def orthonormal_basis(vectors: Sequence[Point], tol: float = DEFAULT_RANK_TOL) -> SpanBasis:
    """Orthonormal basis of span(vectors) via re-orthogonalized Gram-Schmidt.

    A candidate is admitted iff its residual after projection onto the
    current basis exceeds ``tol`` times the largest input norm (or 1 when
    every input is zero). Empty input yields an empty basis.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be > 0")
    mat = _stack(vectors)
    if mat.shape[0] == 0:
        return SpanBasis(mat, tol)
    scale = float(np.max(np.linalg.norm(mat, axis=1)))
    if scale == 0.0:
        scale = 1.0
    basis: list[np.ndarray] = []
    for row in mat:
        residual = row.copy()
        for _ in range(2):  # second pass restores orthogonality lost to cancellation
            for q in basis:
                residual -= np.dot(residual, q) * q
        norm = float(np.linalg.norm(residual))
        if norm > tol * scale:
            basis.append(residual / norm)
    out = np.array(basis) if basis else np.zeros((0, mat.shape[1]))
    out.setflags(write=False)
    return SpanBasis(out, tol)


def project_complement(v: Point, span_vectors: Sequence[Point],
                       tol: float = DEFAULT_RANK_TOL) -> Point:
    """Component of ``v`` orthogonal to span(span_vectors).

    Returns v - proj_U(v) for U = span(span_vectors); with an empty span the
    input comes back unchanged (as a copy).
    """
    v = np.asarray(v, dtype=np.float64)
    basis = orthonormal_basis(span_vectors, tol)
    if len(basis) == 0:
        return v.copy()
    q = basis.vectors
    if q.shape[1] != v.size:
        raise InvalidInputError(
            f"vector dimension {v.size} does not match span dimension {q.shape[1]}")
    out = v - q.T @ (q @ v)
    out -= q.T @ (q @ out)
    return out


def linearly_independent(vectors: Sequence[Point], tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff the nonzero inputs are linearly independent.

    Zero vectors (norm at most ``tol`` times the largest input norm) are
    excluded before the test, so {0, e_1} counts as independent.
    """
    mat = _stack(vectors)
    if mat.shape[0] == 0:
        return True
    norms = np.linalg.norm(mat, axis=1)
    scale = float(np.max(norms))
    if scale == 0.0:
        return True
    nonzero = mat[norms > tol * scale]
    basis = orthonormal_basis(list(nonzero), tol)
    return len(basis) == nonzero.shape[0]


def finite_diff_gradient(f: Callable[[Point], float], w: Point, h: float) -> Point:
    """Central-difference gradient: (f(w + h e_i) - f(w - h e_i)) / (2h)."""
    if h <= 0:
        raise InvalidInputError("h must be > 0")
    w = np.asarray(w, dtype=np.float64)
    grad = np.empty_like(w)
    for i in range(w.size):
        forward = w.copy()
        backward = w.copy()
        forward[i] += h
        backward[i] -= h
        f_plus = float(f(forward))
        f_minus = float(f(backward))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteOracleError("non-finite value in finite differences")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
