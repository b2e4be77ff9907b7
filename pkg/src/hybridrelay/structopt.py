"""Optimal digital structures for each hop and the unitary rotations between them.

Every hop is designed in a whitened domain. With ``D = (sigma^2 I + P Psi)^{1/2}``
and a tight power budget the equivalent noise is ``Tr(F R F^H D^2) / P``, so
the hop behaves like the channel ``Hw = H_hat D^{-1}`` with unit noise. For an
analog precoder ``F_AL`` the reachable transmit directions are the columns of
the semi-unitary projector ``Pi_L = D F_AL (F_AL^H D^2 F_AL)^{-1/2}``; at the
destination the analog equalizer restricts the receive side to
``Pi_G = (G_A G_A^H)^{-1/2} G_A``. The digital forward matrix then diagonalizes
``Pi_G Hw Pi_L``, allocates power over its singular values, and is rescaled so
the budget holds with equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .channel import HopChannel
from .errors import ConfigError, InvalidInputError, NotPSDError
from .matdecomp import (
    OrderedSvd,
    dft_matrix,
    gmd,
    hermitian_inv_sqrt,
    hermitian_sqrt,
    ordered_svd,
    waterfill,
)

__all__ = [
    "FAMILIES",
    "CONCRETE",
    "ObjectiveSpec",
    "WhitenedHop",
    "HopDigitalSolution",
    "whiten_hop",
    "power_allocation",
    "transmit_projector",
    "receive_projector",
    "destination_projector",
    "design_hop",
    "design_first_hop",
    "design_intermediate_hop",
    "design_final_hop",
    "inner_rotations",
    "source_rotation",
]

FAMILIES = ("add_schur_convex", "add_schur_concave", "mult_schur_convex", "mult_schur_concave")
CONCRETE = ("sum_capacity", "sum_mse")
_DEFAULT_FAMILY = {"sum_capacity": "add_schur_concave", "sum_mse": "add_schur_convex"}
GRAM_FLOOR = 1e-10


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective family (decides the source rotation) and its concrete metric."""

    concrete: Literal["sum_capacity", "sum_mse"] = "sum_capacity"
    family: str | None = None

    def __post_init__(self):
        if self.concrete not in CONCRETE:
            raise ConfigError(f"unknown objective {self.concrete!r}; choose from {CONCRETE}")
        if self.family is None:
            object.__setattr__(self, "family", _DEFAULT_FAMILY[self.concrete])
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown objective family {self.family!r}; choose from {FAMILIES}")

    @property
    def nonlinear(self) -> bool:
        return self.family.startswith("mult_")


@dataclass
class WhitenedHop:
    effective: np.ndarray
    svd: OrderedSvd
    whitener: np.ndarray
    whitener_inv: np.ndarray


@dataclass
class HopDigitalSolution:
    """Digital forward matrix of one hop and the factors it was built from.

    ``f_d = scale * C^{-1/2} v_pi diag(lambda_fd) u_tilde^H G^{-1/2}``, where
    ``C`` is the whitened transmit Gram matrix and ``G`` the post-combiner
    receive covariance.
    """

    f_d: np.ndarray
    alpha: float
    lambda_fd: np.ndarray
    u_tilde: np.ndarray
    v_pi: np.ndarray
    lambda_pi: np.ndarray
    flags: list = field(default_factory=list)


def whiten_hop(hop: HopChannel, power: float, noise_power: float) -> WhitenedHop:
    """Whitened channel ``H_hat (sigma^2 I + P Psi)^{-1/2}`` and its ordered SVD."""
    n_t = hop.n_t
    d2 = noise_power * np.eye(n_t) + power * hop.psi
    w = np.linalg.eigvalsh(0.5 * (d2 + d2.conj().T))
    if w[0] <= 0:
        raise NotPSDError("noise-plus-error whitener is not positive definite")
    d = hermitian_sqrt(d2)
    d_inv = hermitian_inv_sqrt(d2)
    eff = hop.h_hat @ d_inv
    return WhitenedHop(eff, ordered_svd(eff), d, d_inv)


def power_allocation(lambda_pi, power: float, concrete: str = "sum_capacity") -> np.ndarray:
    """Per-stream powers over the whitened singular values ``lambda_pi``.

    ``sum_capacity`` water-fills on ``lambda^2``; ``sum_mse`` uses
    ``p_i = (mu / lambda_i - 1 / lambda_i^2)^+`` with ``sum(p) = power``.
    """
    lam = np.asarray(lambda_pi, dtype=float).ravel()
    if concrete == "sum_capacity":
        return waterfill(lam**2, power)
    if concrete != "sum_mse":
        raise InvalidInputError(f"unknown objective {concrete!r}")
    if lam.size == 0 or np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise InvalidInputError("singular values must be finite and positive")
    if not power > 0:
        raise InvalidInputError("budget must be positive")
    order = np.argsort(-lam, kind="stable")
    ls = lam[order]
    p_sorted = np.zeros_like(ls)
    for m in range(ls.size, 0, -1):
        mu = (power + np.sum(1.0 / ls[:m] ** 2)) / np.sum(1.0 / ls[:m])
        if mu / ls[m - 1] - 1.0 / ls[m - 1] ** 2 > 0:
            p_sorted[:m] = mu / ls[:m] - 1.0 / ls[:m] ** 2
            break
    else:
        p_sorted[0] = power
    p = np.zeros_like(lam)
    p[order] = p_sorted
    return p


def _gram_inv_sqrt(a: np.ndarray) -> tuple[np.ndarray, bool]:
    """``a^{-1/2}`` with eigenvalues floored at ``GRAM_FLOOR * trace / n``."""
    n = a.shape[0]
    tr = float(np.real(np.trace(a)))
    floor = GRAM_FLOOR * max(tr, 1e-300) / n
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    return hermitian_inv_sqrt(a, floor=floor), bool(w[0] < floor)


def transmit_projector(whitener: np.ndarray, f_al: np.ndarray | None):
    """``Pi_L`` plus the factor ``C^{-1/2}`` and a flag raised when ``C`` was floored."""
    if f_al is None:
        n = whitener.shape[0]
        return np.eye(n, dtype=complex), hermitian_inv_sqrt(whitener @ whitener), False
    df = whitener @ f_al
    c_is, floored = _gram_inv_sqrt(df.conj().T @ df)
    return df @ c_is, c_is, floored


def receive_projector(f_ar: np.ndarray | None, r_x: np.ndarray) -> np.ndarray:
    """``(F_AR R F_AR^H)^{-1/2} F_AR R^{1/2}``; rows are orthonormal."""
    r_half = hermitian_sqrt(r_x)
    if f_ar is None:
        return np.eye(r_x.shape[0], dtype=complex)
    g_is, _ = _gram_inv_sqrt(f_ar @ r_x @ f_ar.conj().T)
    return g_is @ f_ar @ r_half


def destination_projector(g_a: np.ndarray | None, n_r: int | None = None) -> np.ndarray:
    """``(G_A G_A^H)^{-1/2} G_A``; rows are orthonormal."""
    if g_a is None:
        return np.eye(n_r, dtype=complex)
    g_is, _ = _gram_inv_sqrt(g_a @ g_a.conj().T)
    return g_is @ g_a


def design_hop(wh: WhitenedHop, f_al: np.ndarray | None, power: float, n_streams: int,
               concrete: str = "sum_capacity", *, r_in: np.ndarray | None = None,
               f_ar: np.ndarray | None = None, signal_cov: np.ndarray | None = None,
               g_a: np.ndarray | None = None) -> HopDigitalSolution:
    """Digital forward matrix for one hop.

    Parameters
    ----------
    wh : WhitenedHop
        Whitened channel of this hop.
    f_al : ndarray or None
        Analog precoder of the transmitting node (``None`` for fully digital).
    power : float
        Budget ``P_k``; met with equality.
    n_streams : int
        Number of forwarded streams ``N``.
    concrete : str
        Power-allocation rule, see :func:`power_allocation`.
    r_in : ndarray, optional
        Covariance of the signal arriving at this node; ``None`` means the
        source with ``R = I`` (scaled afterwards by the power rescaling).
    f_ar : ndarray, optional
        Analog receive combiner of this node.
    signal_cov : ndarray, optional
        Covariance of the source-signal component inside ``r_in``. Its
        whitened eigenvectors define ``u_tilde``, the receive directions that
        get paired with the strongest transmit directions.
    g_a : ndarray, optional
        Destination analog equalizer; supplied only for the last hop.
    """
    flags: list[str] = []
    pi_l, c_is, floored = transmit_projector(wh.whitener, f_al)
    if floored:
        flags.append("transmit_gram_floored")
    eff = wh.effective @ pi_l
    if g_a is not None:
        eff = destination_projector(g_a) @ eff
    svd = ordered_svd(eff)
    n = n_streams
    lam = np.zeros(n)
    k = min(n, svd.s.size)
    lam[:k] = svd.s[:k]
    active = lam > 1e-12 * max(lam[0], 1e-300)
    p = np.zeros(n)
    if not np.all(active):
        flags.append("rank_deficient")
    if np.any(active):
        p[active] = power_allocation(lam[active], power, concrete)
    v_pi = svd.v[:, :n]
    if v_pi.shape[1] < n:
        raise ConfigError("fewer transmit directions than streams")

    if r_in is None:
        g_is = np.eye(n, dtype=complex)
        u_tilde = np.eye(n, dtype=complex)
        r_in = np.eye(n, dtype=complex)
    else:
        g = r_in if f_ar is None else f_ar @ r_in @ f_ar.conj().T
        g_is, g_floor = _gram_inv_sqrt(g)
        if g_floor:
            flags.append("receive_gram_floored")
        if signal_cov is None:
            u_tilde = np.eye(g.shape[0], n, dtype=complex)
        else:
            s = signal_cov if f_ar is None else f_ar @ signal_cov @ f_ar.conj().T
            s_w = g_is @ s @ g_is
            w, e = np.linalg.eigh(0.5 * (s_w + s_w.conj().T))
            u_tilde = e[:, ::-1][:, :n]

    x = (v_pi * np.sqrt(p)) @ u_tilde.conj().T
    f_d = c_is @ x @ g_is
    f = f_d if f_al is None else f_al @ f_d
    if f_ar is not None:
        f = f @ f_ar
    tx = float(np.real(np.trace(f @ r_in @ f.conj().T)))
    if tx <= 0:
        raise ConfigError("designed forward matrix carries no power")
    alpha = power / tx
    return HopDigitalSolution(np.sqrt(alpha) * f_d, alpha, np.sqrt(p), u_tilde, v_pi,
                              lam, flags)


def design_first_hop(wh, f_al, power, n_streams, concrete="sum_capacity", source_power=1.0):
    """Source-node digital precoder; the input covariance is ``source_power * I``."""
    return design_hop(wh, f_al, power, n_streams, concrete,
                      r_in=source_power * np.eye(n_streams, dtype=complex))


def design_intermediate_hop(wh, f_al, f_ar, r_in, signal_cov, power, n_streams,
                            concrete="sum_capacity"):
    return design_hop(wh, f_al, power, n_streams, concrete, r_in=r_in, f_ar=f_ar,
                      signal_cov=signal_cov)


def design_final_hop(wh, f_al, f_ar, g_a, r_in, signal_cov, power, n_streams,
                     concrete="sum_capacity"):
    return design_hop(wh, f_al, power, n_streams, concrete, r_in=r_in, f_ar=f_ar,
                      signal_cov=signal_cov, g_a=g_a)


def inner_rotations(hop_svds) -> list[np.ndarray]:
    """``Q_k = V_{k+1} U_k^H`` between consecutive hops (full square unitaries)."""
    out = []
    for a, b in zip(hop_svds[:-1], hop_svds[1:]):
        if b.v.shape[0] != a.u.shape[0]:
            raise InvalidInputError("adjacent hop dimensions do not chain")
        out.append(b.v @ a.u.conj().T)
    return out


def source_rotation(family: str, basis: np.ndarray, n: int, mse_eigs=None) -> np.ndarray:
    """Source rotation ``Q_0`` for the given objective family.

    ``basis`` holds the eigenvectors of the MSE matrix obtained without
    rotation (the right singular basis of the cascade); ``mse_eigs`` are the
    matching eigenvalues, needed only for ``mult_schur_convex``.

    * ``add_schur_convex``: ``basis @ DFT^H`` makes every MSE equal.
    * ``mult_schur_convex``: ``basis @ Q_gmd`` gives a Cholesky factor with an
      equal diagonal.
    * concave families: ``basis`` itself.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown objective family {family!r}")
    basis = np.asarray(basis, dtype=complex)
    if basis.shape[1] < n:
        raise InvalidInputError("basis has fewer than n columns")
    v = basis[:, :n]
    if family == "add_schur_convex":
        return v @ dft_matrix(n).conj().T
    if family == "mult_schur_convex":
        if mse_eigs is None:
            raise InvalidInputError("mult_schur_convex needs the MSE eigenvalues")
        m = np.asarray(mse_eigs, dtype=float)[:n]
        if np.any(m <= 0):
            raise NotPSDError("MSE eigenvalues must be positive")
        return v @ gmd(np.diag(np.sqrt(m)), n).q
    return v
