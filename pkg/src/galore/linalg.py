"""Dense linear-algebra kernel: thin SVD, symmetric eigendecomposition,
Kronecker/vec identities, norms and stable rank.

Everything operates on plain float64 numpy arrays. Decompositions are wrapped
so that results are deterministic on a given machine: singular/eigen vectors
carry a fixed sign convention (largest-magnitude entry of each column made
non-negative, ties broken by lowest index).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SizeLimitError, UndefinedQuantityError

KRON_DIM_CAP = 4096


def as_matrix(a, name="matrix"):
    """Validate and return ``a`` as a 2-D, finite, float64, C-ordered array.

    Raises InvalidInputError for wrong dimensionality, empty axes, or
    non-finite entries.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must have positive dimensions, got {m.shape}")
    if not np.isfinite(m).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(m)


def as_vector(v, name="vector"):
    """Validate and return ``v`` as a 1-D finite float64 array."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def _fix_column_signs(U, V=None):
    """Flip column signs so each column of U has its largest-magnitude entry
    non-negative (first occurrence wins ties); V columns flip in lockstep."""
    U = U.copy()
    V = None if V is None else V.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        lead = col[np.argmax(np.abs(col))]
        if lead < 0:
            U[:, j] = -col
            if V is not None:
                V[:, j] = -V[:, j]
    return U if V is None else (U, V)


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``A = U @ diag(S) @ V.T`` with k = min(m, n) columns.

    U is m x k and V is n x k, both column-orthonormal; S is non-increasing
    and non-negative.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.S) @ self.V.T

    def truncate(self, r):
        """Best rank-r approximation (Frobenius), as a matrix."""
        r = int(r)
        return (self.U[:, :r] * self.S[:r]) @ self.V[:, :r].T


@dataclass(frozen=True)
class EigResult:
    """Symmetric eigendecomposition with eigenvalues in ascending order and
    orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def svd_thin(A):
    """Thin SVD with the deterministic sign convention.

    Returns an SvdResult; singular values sorted non-increasing.
    """
    A = as_matrix(A, "A")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    U, V = _fix_column_signs(U, Vt.T)
    return SvdResult(U=U, S=S, V=V)


def sym_eig(S):
    """Eigendecomposition of a symmetric (PSD in intended use) matrix.

    The input is symmetrized as (S + S.T)/2 after checking that the
    asymmetry is within tolerance. Eigenvalues come back ascending.
    """
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"sym_eig needs a square matrix, got {S.shape}")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise InvalidInputError("matrix is not symmetric within 1e-10")
    sym = (S + S.T) / 2.0
    values, vectors = np.linalg.eigh(sym)
    vectors = _fix_column_signs(vectors)
    return EigResult(values=values, vectors=vectors)


def kron(B, C, dim_cap=KRON_DIM_CAP):
    """Kronecker product B (x) C with a result-dimension cap.

    The (i,j) block of the result is B[i,j] * C. Raises SizeLimitError if
    either result dimension would exceed ``dim_cap``.
    """
    B = as_matrix(B, "B")
    C = as_matrix(C, "C")
    rows = B.shape[0] * C.shape[0]
    cols = B.shape[1] * C.shape[1]
    if rows > dim_cap or cols > dim_cap:
        raise SizeLimitError(
            f"Kronecker result {rows}x{cols} exceeds the {dim_cap} dimension cap"
        )
    return np.kron(B, C)


def vec(A):
    """Column-major stacking of A into a 1-D vector."""
    A = as_matrix(A, "A")
    return A.reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`: reshape a length rows*cols vector column-major."""
    v = as_vector(v, "v")
    if v.size != rows * cols:
        raise InvalidInputError(
            f"cannot unvec length {v.size} into {rows}x{cols}"
        )
    return v.reshape((rows, cols), order="F")


def fro_norm(A):
    return float(np.linalg.norm(A, "fro"))


def spectral_norm(A):
    """Largest singular value."""
    A = as_matrix(A, "A")
    return float(np.linalg.svd(A, compute_uv=False)[0])


def stable_rank(A):
    """||A||_F^2 / ||A||_2^2; lies in [1, min(m, n)] for nonzero A.

    Raises UndefinedQuantityError for the zero matrix.
    """
    A = as_matrix(A, "A")
    f2 = float(np.sum(A * A))
    if f2 == 0.0:
        raise UndefinedQuantityError("stable rank of the zero matrix is undefined")
    s2 = spectral_norm(A) ** 2
    return f2 / s2


def matrix_rank_by_sv(A, rtol=1e-10):
    """Rank as the number of singular values above rtol * s_max."""
    s = np.linalg.svd(as_matrix(A, "A"), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_column_orthonormal(Q, tol=1e-8):
    Q = np.asarray(Q)
    return bool(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() <= tol)
