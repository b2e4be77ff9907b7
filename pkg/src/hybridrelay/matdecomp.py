"""Complex-matrix decompositions shared by every design stage.

All functions are pure: they never modify their inputs and keep no state.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError, NotPSDError, RankError

__all__ = [
    "OrderedSvd",
    "GmdFactors",
    "as_matrix",
    "ordered_svd",
    "hermitian_sqrt",
    "hermitian_inv_sqrt",
    "gmd",
    "cholesky_lower",
    "dft_matrix",
    "phase_project",
    "procrustes",
    "waterfill",
]


class OrderedSvd(NamedTuple):
    """SVD ``m = u @ diag(s) @ v^H`` with ``s`` descending and full unitary factors."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        k = self.s.size
        return (self.u[:, :k] * self.s) @ self.v[:, :k].conj().T


class GmdFactors(NamedTuple):
    """Geometric mean decomposition ``m = q @ r @ p^H`` with lower-triangular ``r``."""

    q: np.ndarray
    r: np.ndarray
    p: np.ndarray


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array, raising otherwise."""
    a = np.asarray(m, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def ordered_svd(m) -> OrderedSvd:
    """Full SVD with a deterministic phase convention.

    Singular values come out descending. Each left singular vector is rotated
    so that its first largest-modulus entry is real and positive; the paired
    right singular vector absorbs the same phase, so the product is unchanged.
    """
    a = as_matrix(m)
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    v = vh.conj().T
    for i in range(u.shape[1]):
        j = int(np.argmax(np.abs(u[:, i])))
        mag = abs(u[j, i])
        if mag == 0.0:
            continue
        ph = u[j, i] / mag
        u[:, i] /= ph
        if i < s.size:
            v[:, i] /= ph
    return OrderedSvd(u, s, v)


def _hermitian_eig(a: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-10 * scale:
        raise InvalidInputError(f"{name} is not Hermitian")
    w, e = np.linalg.eigh(0.5 * (a + a.conj().T))
    if w.size and w[0] < -1e-6 * max(1.0, float(w[-1])):
        raise NotPSDError(f"{name} has eigenvalue {w[0]:.3e} < 0")
    return np.clip(w, 0.0, None), e


def hermitian_sqrt(a) -> np.ndarray:
    """Hermitian PSD square root ``a^{1/2}``."""
    w, e = _hermitian_eig(as_matrix(a), "a")
    return (e * np.sqrt(w)) @ e.conj().T


def hermitian_inv_sqrt(a, rtol: float = 1e-12, floor: float | None = None) -> np.ndarray:
    """Hermitian ``a^{-1/2}``.

    Eigenvalues below ``rtol * max_eigenvalue`` are treated as zero
    (pseudo-inverse). When ``floor`` is given, eigenvalues are instead clamped
    from below at ``floor`` before inversion.
    """
    w, e = _hermitian_eig(as_matrix(a), "a")
    if floor is not None:
        inv = 1.0 / np.sqrt(np.maximum(w, floor))
    else:
        cut = rtol * (w[-1] if w.size else 0.0)
        inv = np.zeros_like(w)
        keep = w > cut
        inv[keep] = 1.0 / np.sqrt(w[keep])
    return (e * inv) @ e.conj().T


def cholesky_lower(a) -> np.ndarray:
    """Lower-triangular ``L`` with real positive diagonal and ``a = L L^H``."""
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InvalidInputError(f"expected a square matrix, got {a.shape}")
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    tr = float(np.real(np.trace(a)))
    if n == 0 or w[0] <= 1e-12 * max(tr, 0.0) / n or tr <= 0:
        raise NotPSDError("matrix is not positive definite")
    return np.linalg.cholesky(0.5 * (a + a.conj().T))


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2 pi i j l / n) / sqrt(n)``."""
    if n < 1:
        raise InvalidInputError("DFT size must be >= 1")
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)


def phase_project(m) -> np.ndarray:
    """Entry-wise angle projection onto the unit circle; zero entries map to 1."""
    a = np.asarray(m, dtype=complex)
    mag = np.abs(a)
    out = np.ones_like(a)
    nz = mag > 0
    out[nz] = a[nz] / mag[nz]
    return out


def procrustes(b, a) -> np.ndarray:
    """Unitary (semi-unitary when rectangular) ``Q`` minimizing ``||b Q - a||_F``."""
    b = as_matrix(b, "b")
    a = as_matrix(a, "a")
    if b.shape[0] != a.shape[0]:
        raise InvalidInputError(f"row mismatch: {b.shape} vs {a.shape}")
    u, _, vh = np.linalg.svd(b.conj().T @ a, full_matrices=False)
    return u @ vh


def gmd(m, k: int | None = None) -> GmdFactors:
    """Geometric mean decomposition over the ``k`` dominant singular values.

    Returns ``q`` (rows x k), lower-triangular ``r`` (k x k) whose diagonal
    entries all equal the geometric mean of the top ``k`` singular values, and
    ``p`` (cols x k), both with orthonormal columns. Built from the SVD by
    successive 2x2 rotations, each of which fixes one diagonal entry at the
    mean while keeping the product of the remaining ones.
    """
    a = as_matrix(m)
    svd = ordered_svd(a)
    if k is None:
        k = int(np.sum(svd.s > 1e-12 * (svd.s[0] if svd.s.size else 0.0)))
    if k < 1 or k > svd.s.size:
        raise RankError(f"invalid GMD order k={k}")
    sig = svd.s[:k]
    if sig[-1] <= 1e-12 * sig[0]:
        raise RankError(f"matrix rank is below k={k}")
    target = float(np.exp(np.mean(np.log(sig))))

    # Upper-triangular GMD of diag(sig): diag(sig) = qq @ rr @ pp^T.
    rr = np.diag(sig.astype(float))
    qq = np.eye(k)
    pp = np.eye(k)
    for i in range(k - 1):
        d = np.diag(rr)[i:]
        di = d[0]
        if abs(di - target) <= 1e-15 * target:
            continue
        if di > target:
            cand = np.nonzero(d[1:] <= target)[0]
        else:
            cand = np.nonzero(d[1:] >= target)[0]
        j = i + 1 + int(cand[0])
        if j != i + 1:
            perm = np.arange(k)
            perm[[i + 1, j]] = perm[[j, i + 1]]
            rr = rr[np.ix_(perm, perm)]
            qq = qq[:, perm]
            pp = pp[:, perm]
        d1, d2 = rr[i, i], rr[i + 1, i + 1]
        if abs(d1 - d2) <= 1e-15 * target:
            continue
        c = np.sqrt(np.clip((target**2 - d2**2) / (d1**2 - d2**2), 0.0, 1.0))
        s = np.sqrt(1.0 - c * c)
        g_right = np.array([[c, -s], [s, c]])
        g_left = np.array([[c * d1, -s * d2], [s * d2, c * d1]]) / target
        idx = [i, i + 1]
        rr[:, idx] = rr[:, idx] @ g_right
        rr[idx, :] = g_left.T @ rr[idx, :]
        qq[:, idx] = qq[:, idx] @ g_left
        pp[:, idx] = pp[:, idx] @ g_right
        rr[i + 1, i] = 0.0
    # Transposing the upper factor of a real diagonal gives the lower form:
    # diag(sig) = pp @ rr^T @ qq^T.
    q = svd.u[:, :k] @ pp
    p = svd.v[:, :k] @ qq
    return GmdFactors(q, rr.T.astype(complex), p)


def waterfill(gains, budget: float) -> np.ndarray:
    """Capacity water-filling ``p_i = (mu - 1/g_i)^+`` with ``sum(p) = budget``."""
    g = np.asarray(gains, dtype=float).ravel()
    if g.size == 0:
        raise InvalidInputError("water-filling needs at least one gain")
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise InvalidInputError("gains must be finite and positive")
    if not budget > 0:
        raise InvalidInputError("budget must be positive")
    order = np.argsort(-g, kind="stable")
    inv = 1.0 / g[order]
    p_sorted = np.zeros_like(inv)
    # Largest active set whose water level stays above every floor in it.
    for m in range(g.size, 0, -1):
        mu = (budget + inv[:m].sum()) / m
        if mu > inv[m - 1]:
            p_sorted[:m] = mu - inv[:m]
            break
    else:
        p_sorted[0] = budget
    p = np.zeros_like(g)
    p[order] = p_sorted
    return p
