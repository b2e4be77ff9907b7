"""Unit-modulus analog beamformer design.

The matching problem is::

    min  || W^{1/2} (V Sigma V_L^H - D F) ||_F^2
    over Sigma (block diagonal), unitary V_L, unit-modulus F

with ``V`` the first ``n_rf`` target singular vectors of a channel and ``D`` an
invertible whitener. Block-coordinate descent alternates the closed-form
``Sigma`` update, an orthogonal-Procrustes step for ``V_L`` and an angle
projection for ``F``. A block result is kept only when it does not raise the
objective, so the recorded residuals never increase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWeightError, InvalidInputError
from .matdecomp import as_matrix, hermitian_sqrt, phase_project, procrustes

__all__ = [
    "AnalogDesignProblem",
    "AnalogSolution",
    "objective",
    "sigma_update",
    "unitary_update",
    "run_alg1",
    "matching_residual",
    "uma_analog",
    "combiner_problem",
    "DEFAULT_EPS",
    "DEFAULT_MAX_ITERS",
]

DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITERS = 100


@dataclass
class AnalogDesignProblem:
    """Inputs of the matching problem.

    Parameters
    ----------
    v_target : ndarray, shape (n, m)
        Target singular vectors, ``m >= n_rf`` (only the first ``n_rf`` are used).
    w : ndarray, shape (n, n)
        Hermitian PSD weight; ``None`` means identity.
    d : ndarray, shape (n, n)
        Invertible whitener; ``None`` means identity.
    n_rf : int
        Number of RF chains (columns of the analog matrix).
    n_streams : int
        Streams ``N``; splits ``Sigma`` into an ``N x N`` real diagonal block
        and an ``(n_rf - N) x (n_rf - N)`` complex block.
    """

    v_target: np.ndarray
    n_rf: int
    n_streams: int
    w: np.ndarray | None = None
    d: np.ndarray | None = None
    eps: float = DEFAULT_EPS
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        self.v_target = as_matrix(self.v_target, "v_target")
        n, m = self.v_target.shape
        if not 1 <= self.n_streams <= self.n_rf <= min(n, m):
            raise InvalidInputError(
                f"need 1 <= n_streams <= n_rf <= {min(n, m)}, got {self.n_streams}, {self.n_rf}"
            )
        self.w = np.eye(n, dtype=complex) if self.w is None else as_matrix(self.w, "w")
        self.d = np.eye(n, dtype=complex) if self.d is None else as_matrix(self.d, "d")
        if self.w.shape != (n, n) or self.d.shape != (n, n):
            raise InvalidInputError("w and d must be n x n")
        if np.linalg.eigvalsh(0.5 * (self.w + self.w.conj().T))[0] < -1e-10:
            raise InvalidInputError("weight matrix is not PSD")
        if not np.isfinite(np.linalg.cond(self.d)):
            raise InvalidInputError("whitener is singular")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be >= 0")
        self._d_inv = np.linalg.inv(self.d)
        self._w_half = hermitian_sqrt(self.w)

    @property
    def v(self) -> np.ndarray:
        return self.v_target[:, : self.n_rf]

    @property
    def d_inv(self) -> np.ndarray:
        return self._d_inv

    @property
    def w_half(self) -> np.ndarray:
        return self._w_half


@dataclass
class AnalogSolution:
    f_a: np.ndarray
    sigma_l: np.ndarray
    v_l: np.ndarray
    residual: float
    iters: int
    history: list = field(default_factory=list)
    converged: bool = True


def objective(problem: AnalogDesignProblem, f_a, sigma_l, v_l) -> float:
    """``|| W^{1/2} (V Sigma V_L^H - D F) ||_F^2``."""
    e = problem.w_half @ (problem.v @ sigma_l @ v_l.conj().T - problem.d @ f_a)
    return float(np.real(np.vdot(e, e)))


def sigma_update(problem: AnalogDesignProblem, f_a, v_l) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(Sigma_tilde, Sigma_hat)`` for fixed ``F`` and ``V_L``.

    ``Sigma_tilde`` is real diagonal (``N x N``); ``Sigma_hat`` is the full
    complex least-squares block for the remaining ``n_rf - N`` directions.
    """
    n = problem.n_streams
    v = problem.v
    vt, vh = v[:, :n], v[:, n:]
    w = problem.w
    wdf = w @ problem.d @ f_a
    norm = np.real(np.diag(vt.conj().T @ w @ vt))
    if np.any(np.abs(norm) <= 1e-14):
        raise DegenerateWeightError("weight annihilates a target direction")
    s_t = np.diag(np.real(np.diag(vt.conj().T @ wdf @ v_l[:, :n])) / norm)
    if vh.shape[1] == 0:
        return s_t, np.zeros((0, 0), dtype=complex)
    gram = vh.conj().T @ w @ vh
    s_h = np.linalg.solve(gram, vh.conj().T @ wdf @ v_l[:, n:])
    return s_t, s_h


def _block(s_t, s_h) -> np.ndarray:
    n, r = s_t.shape[0], s_h.shape[0]
    out = np.zeros((n + r, n + r), dtype=complex)
    out[:n, :n] = s_t
    out[n:, n:] = s_h
    return out


def unitary_update(problem: AnalogDesignProblem, f_a, sigma_l) -> np.ndarray:
    """Procrustes step: ``V_L^H`` is the unitary closest to mapping ``W^{1/2} V Sigma`` onto ``W^{1/2} D F``."""
    wh = problem.w_half
    q = procrustes(wh @ problem.v @ sigma_l, wh @ problem.d @ f_a)
    return q.conj().T


def uma_analog(d, v_target) -> np.ndarray:
    """Unit-modulus alignment: ``phase_project(d^{-1} v_target)``."""
    d = as_matrix(d, "d")
    return phase_project(np.linalg.solve(d, as_matrix(v_target, "v_target")))


def _initial(problem: AnalogDesignProblem):
    f_a = uma_analog(problem.d, problem.v)
    # V_L from the Procrustes fit with Sigma = I.
    v_l = unitary_update(problem, f_a, np.eye(problem.n_rf, dtype=complex))
    return f_a, v_l


def _block_pass(problem, f_a, v_l):
    s_t, s_h = sigma_update(problem, f_a, v_l)
    sig = _block(s_t, s_h)
    v_l = unitary_update(problem, f_a, sig)
    return sig, v_l


def matching_residual(problem: AnalogDesignProblem, f_a) -> float:
    """Residual of a fixed analog matrix after one Sigma/V_L pass from the standard start."""
    _, v_l = _initial(problem)
    sig, v_l = _block_pass(problem, f_a, v_l)
    return objective(problem, f_a, sig, v_l)


def run_alg1(problem: AnalogDesignProblem) -> AnalogSolution:
    """Block-coordinate descent on the matching problem.

    Starts from ``F = phase_project(D^{-1} V)``. A pass updates ``Sigma``,
    then ``V_L``, then ``F = phase_project(D^{-1} V Sigma V_L^H)``; each block
    result is accepted only if the objective does not grow. Iteration stops
    once the decrease drops to ``eps`` or below, or after ``max_iters``
    passes.
    """
    f_a, v_l = _initial(problem)
    sig, v_l = _block_pass(problem, f_a, v_l)
    delta = objective(problem, f_a, sig, v_l)
    history = [delta]
    change = problem.eps + 1.0 if np.isfinite(problem.eps) else -np.inf
    iters = 0
    d_inv = problem.d_inv
    while change > problem.eps and iters < problem.max_iters:
        iters += 1
        prev = delta
        f_new = phase_project(d_inv @ problem.v @ sig @ v_l.conj().T)
        val = objective(problem, f_new, sig, v_l)
        if val <= delta:
            f_a, delta = f_new, val
        s_t, s_h = sigma_update(problem, f_a, v_l)
        sig_new = _block(s_t, s_h)
        val = objective(problem, f_a, sig_new, v_l)
        if val <= delta:
            sig, delta = sig_new, val
        vl_new = unitary_update(problem, f_a, sig)
        val = objective(problem, f_a, sig, vl_new)
        if val <= delta:
            v_l, delta = vl_new, val
        history.append(delta)
        change = prev - delta
    converged = not (iters >= problem.max_iters and change > problem.eps)
    return AnalogSolution(f_a, sig, v_l, delta, iters, history, converged)


def combiner_problem(r_x_half, u_target, n_rf: int, n_streams: int, w=None,
                     eps: float = DEFAULT_EPS, max_iters: int = DEFAULT_MAX_ITERS
                     ) -> AnalogDesignProblem:
    """Receive-combiner design cast as a precoder-form matching problem.

    Conjugate-transposing ``F_AR R^{1/2}`` gives ``R^{1/2} F_AR^H``, so the
    solution ``f_a`` of the returned problem yields ``F_AR = f_a^H``.
    """
    return AnalogDesignProblem(u_target, n_rf, n_streams, w=w, d=r_x_half,
                               eps=eps, max_iters=max_iters)
