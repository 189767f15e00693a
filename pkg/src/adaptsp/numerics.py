"""Deterministic numerical kernels.

Everything downstream (residual statistics, subspace fitting, adjustment)
reduces to the primitives in this module, so determinism is enforced here
once: dot products and norms go through ``math.fsum`` (exactly rounded,
machine independent), row reductions use Kahan compensated summation in a
fixed order, and the eigensolver is a cyclic Jacobi sweep built from scalar
and elementwise operations only. No BLAS reduction is reachable from any of
these paths, so results do not depend on library builds or thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from adaptsp.errors import DegenerateError, UndefinedCosineError, ValidationError

MAX_JACOBI_SWEEPS = 100
JACOBI_TOL_FACTOR = 1e-14


def fsum_dot(a: np.ndarray, b: np.ndarray) -> float:
    """Exactly rounded inner product of two equal-length 1-D arrays."""
    return math.fsum(np.multiply(a, b).tolist())


def fsum_sqnorm(a: np.ndarray) -> float:
    return math.fsum(np.multiply(a, a).tolist())


def fsum_norm(a: np.ndarray) -> float:
    return math.sqrt(fsum_sqnorm(a))


def cosine_core(dot: float, na2: float, nb2: float) -> float:
    """Clamped cosine from a dot product and squared norms.

    The denominator is sqrt(na2 * nb2) when that product stays in range:
    one rounding instead of two, which keeps exactly collinear inputs at
    exactly +-1.0.
    """
    prod = na2 * nb2
    if prod > 0.0 and math.isfinite(prod):
        denom = math.sqrt(prod)
    else:
        denom = math.sqrt(na2) * math.sqrt(nb2)
    return min(1.0, max(-1.0, dot / denom))


def compensated_mean(rows) -> np.ndarray:
    """Elementwise mean over rows via Kahan summation, in row order.

    Accepts an (n, d) array or a sequence of d-vectors. Bitwise deterministic:
    the summation order is the canonical row order, and each step is a fixed
    chain of elementwise IEEE operations.
    """
    mat = np.asarray(rows, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValidationError("compensated_mean: empty input")
    total = compensated_rowsum(mat)
    return total / float(mat.shape[0])


def compensated_rowsum(mat: np.ndarray) -> np.ndarray:
    """Kahan-compensated sum over axis 0 of an (n, d) matrix."""
    s = np.zeros(mat.shape[1], dtype=np.float64)
    c = np.zeros(mat.shape[1], dtype=np.float64)
    for i in range(mat.shape[0]):
        y = mat[i] - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def compensated_weighted_rowsum(weights, mat: np.ndarray) -> np.ndarray:
    """Kahan-compensated sum of weights[i] * mat[i] over rows."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape[0] != mat.shape[0]:
        raise ValidationError("weight count does not match row count")
    s = np.zeros(mat.shape[1], dtype=np.float64)
    c = np.zeros(mat.shape[1], dtype=np.float64)
    for i in range(mat.shape[0]):
        y = w[i] * mat[i] - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def cosine(a, b) -> float:
    """Cosine similarity clamped into [-1, 1].

    Raises UndefinedCosineError on a zero-norm operand; the caller decides
    whether that is an error or an exclusion.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise ValidationError("cosine expects two equal-length vectors")
    na2 = fsum_sqnorm(av)
    nb2 = fsum_sqnorm(bv)
    if na2 == 0.0 or nb2 == 0.0:
        raise UndefinedCosineError("undefined cosine: zero-norm input")
    return cosine_core(fsum_dot(av, bv), na2, nb2)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # column j pairs with eigenvalues[j]
    order: int
    sweeps: int


def sym_eigendecomp(G) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix via cyclic Jacobi.

    Sweep order is fixed (row-major over the upper triangle); convergence is
    declared when the off-diagonal Frobenius norm drops to 1e-14 times the
    Frobenius norm of the input, with a hard cap of 100 sweeps. Eigenvalues
    come out sorted descending (stable under ties) and each eigenvector is
    signed so its largest-magnitude element is non-negative, first index
    winning ties. All of this makes the output a pure function of the input
    bytes.
    """
    A = np.array(G, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("sym_eigendecomp expects a square matrix")
    m = A.shape[0]
    if m == 0:
        raise ValidationError("sym_eigendecomp: empty matrix")
    if not np.all(np.isfinite(A)):
        raise ValidationError("sym_eigendecomp: non-finite entries")
    scale = float(np.max(np.abs(A))) if m else 0.0
    defect = float(np.max(np.abs(A - A.T)))
    if defect > 1e-9 * max(scale, 1e-300):
        raise ValidationError(
            "matrix is not symmetric (defect %.3e vs scale %.3e)" % (defect, scale)
        )
    A = (A + A.T) / 2.0

    V = np.eye(m, dtype=np.float64)
    fro = math.sqrt(math.fsum(np.multiply(A, A).ravel().tolist()))
    tol = JACOBI_TOL_FACTOR * fro
    sweeps = 0
    off = _offdiag_frobenius(A)
    while off > tol:
        if sweeps >= MAX_JACOBI_SWEEPS:
            raise DegenerateError(
                "eigensolver did not converge in %d sweeps (off-diagonal residual %.3e)"
                % (MAX_JACOBI_SWEEPS, off)
            )
        for p in range(m - 1):
            for q in range(p + 1, m):
                _rotate(A, V, p, q)
        sweeps += 1
        off = _offdiag_frobenius(A)

    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = V[:, order].copy()
    for j in range(m):
        col = vecs[:, j]
        lead = int(np.argmax(np.abs(col)))  # ties: lowest index
        if col[lead] < 0.0:
            vecs[:, j] = -col
    return EigenDecomposition(eigenvalues=vals, eigenvectors=vecs, order=m, sweeps=sweeps)


def _offdiag_frobenius(A: np.ndarray) -> float:
    m = A.shape[0]
    if m < 2:
        return 0.0
    sq = [A[i, j] ** 2 for i in range(m - 1) for j in range(i + 1, m)]
    return math.sqrt(2.0 * math.fsum(sq))


def _rotate(A: np.ndarray, V: np.ndarray, p: int, q: int) -> None:
    apq = A[p, q]
    if apq == 0.0:
        return
    app = A[p, p]
    aqq = A[q, q]
    theta = 0.5 * (aqq - app) / apq
    if abs(theta) > 1e153:
        t = 0.5 / theta  # avoids overflow in theta**2; limit of the closed form
    else:
        t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c

    rowp = A[p, :].copy()
    rowq = A[q, :].copy()
    A[p, :] = c * rowp - s * rowq
    A[q, :] = s * rowp + c * rowq
    colp = A[:, p].copy()
    colq = A[:, q].copy()
    A[:, p] = c * colp - s * colq
    A[:, q] = s * colp + c * colq
    # analytic values for the transformed 2x2 block: cheaper and less roundoff
    A[p, p] = app - t * apq
    A[q, q] = aqq + t * apq
    A[p, q] = 0.0
    A[q, p] = 0.0

    vcolp = V[:, p].copy()
    vcolq = V[:, q].copy()
    V[:, p] = c * vcolp - s * vcolq
    V[:, q] = s * vcolp + c * vcolq
