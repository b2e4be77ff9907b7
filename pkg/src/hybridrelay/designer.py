"""End-to-end hybrid designs for a relay chain, plus the comparison baselines.

Algorithms
----------
``proposed``
    Analog stages matched with the block-coordinate algorithm, per-hop
    digital structures, then a refinement loop that re-fits every relay
    combiner to its latest received covariance.
``uma``
    Analog stages by plain phase projection of the target singular vectors,
    no refinement.
``full_digital``
    No analog stage; the benchmark.
``fd_omp`` / ``svd_omp``
    Orthogonal matching pursuit over a steering (or channel-phase) codebook,
    approximating the fully digital design or the channel singular vectors.
``non_robust``
    ``proposed`` run as if the channel estimates were exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analogdesign import (
    DEFAULT_EPS,
    DEFAULT_MAX_ITERS,
    AnalogDesignProblem,
    combiner_problem,
    run_alg1,
    uma_analog,
)
from .channel import ChannelSet
from .errors import ConfigError
from .matdecomp import as_matrix, ordered_svd, phase_project
from .structopt import ObjectiveSpec, design_hop, source_rotation, whiten_hop
from .sysmodel import (
    HybridDesign,
    NetworkConfig,
    linear_mse,
    nonlinear_feedback,
    optimal_equalizer,
    propagate,
)

__all__ = [
    "ALGORITHMS",
    "DesignRequest",
    "Codebook",
    "design",
    "full_digital",
    "non_robust",
    "omp_hybrid",
    "default_codebooks",
]

ALGORITHMS = ("proposed", "uma", "full_digital", "fd_omp", "svd_omp", "non_robust")
DEFAULT_REPEAT_LIMIT = 3
DEFAULT_TOLERANCE = 1e-6


@dataclass
class DesignRequest:
    cfg: NetworkConfig
    channels: ChannelSet
    obj: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    algorithm: str = "proposed"
    repeat_limit: int = DEFAULT_REPEAT_LIMIT
    tolerance: float = DEFAULT_TOLERANCE
    alg1_eps: float = DEFAULT_EPS
    alg1_max_iters: int = DEFAULT_MAX_ITERS
    codebooks: list | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.repeat_limit < 0:
            raise ConfigError("repeat_limit must be >= 0")
        if len(self.channels) != self.cfg.n_hops:
            raise ConfigError("channel set and network disagree on the hop count")
        if tuple(self.channels.antennas) != tuple(self.cfg.antennas):
            raise ConfigError("channel set and network disagree on antenna counts")


@dataclass
class Codebook:
    """Unit-modulus candidate columns for OMP."""

    columns: np.ndarray

    def __post_init__(self):
        self.columns = as_matrix(self.columns, "columns")
        if np.max(np.abs(np.abs(self.columns) - 1.0), initial=0.0) > 1e-12:
            raise ConfigError("codebook entries must have unit modulus")

    @property
    def size(self) -> int:
        return self.columns.shape[1]


# ---------------------------------------------------------------- helpers


class _Chain:
    """Incremental covariance bookkeeping while hops are designed in order."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self.r = cfg.source_power * np.eye(cfg.n_streams, dtype=complex)
        self.m = np.eye(cfg.n_streams, dtype=complex)
        self.first = True

    @property
    def signal_cov(self):
        return None if self.first else self.cfg.source_power * self.m @ self.m.conj().T

    def advance(self, hop, f, noise):
        t = f @ self.r @ f.conj().T
        eta = noise + float(np.real(np.trace(t @ hop.psi)))
        r = hop.h_hat @ t @ hop.h_hat.conj().T + eta * np.eye(hop.n_r)
        self.r = 0.5 * (r + r.conj().T)
        self.m = hop.h_hat @ f @ self.m
        self.first = False


def _compose(f_al, f_d, f_ar):
    f = f_d if f_al is None else f_al @ f_d
    return f if f_ar is None else f @ f_ar


def _analog(mode, target, d, n_rf, n_streams, req):
    if mode == "uma":
        return uma_analog(d, target[:, :n_rf])
    prob = AnalogDesignProblem(target, n_rf, n_streams, d=d, eps=req.alg1_eps,
                               max_iters=req.alg1_max_iters)
    return run_alg1(prob).f_a


def _combiner(mode, target, r_half, n_rf, n_streams, req):
    if mode == "uma":
        return uma_analog(r_half, target[:, :n_rf]).conj().T
    prob = combiner_problem(r_half, target, n_rf, n_streams, eps=req.alg1_eps,
                            max_iters=req.alg1_max_iters)
    return run_alg1(prob).f_a.conj().T


def _trace_phi(cfg, design, channels):
    return float(np.real(np.trace(linear_mse(cfg, design, channels).phi)))


def _digital_pass(cfg, chans, whs, design, concrete, start=0):
    """Recompute digital matrices for hops ``start..K-1`` given the analog stages."""
    chain = _Chain(cfg)
    flags = []
    k_hops = cfg.n_hops
    for k in range(k_hops):
        hop = chans[k]
        if k >= start:
            sol = design_hop(
                whs[k], design.f_al[k], cfg.power[k], cfg.n_streams, concrete,
                r_in=chain.r, f_ar=design.f_ar[k], signal_cov=chain.signal_cov,
                g_a=design.g_a if k == k_hops - 1 else None,
            )
            design.f_d[k] = sol.f_d
            flags.extend(f"hop{k}:{f}" for f in sol.flags)
        chain.advance(hop, _compose(design.f_al[k], design.f_d[k], design.f_ar[k]),
                      cfg.noise_power[k])
    return flags


def _finish(cfg, chans, design, obj):
    """Source rotation for the objective family, equalizer and optional feedback."""
    rep = linear_mse(cfg, design, chans)
    w, e = np.linalg.eigh(rep.phi)
    q0 = source_rotation(obj.family, e, cfg.n_streams, mse_eigs=w)
    design.f_d[0] = design.f_d[0] @ q0
    design.g_d = optimal_equalizer(cfg, design, chans)
    if obj.nonlinear:
        design.b, _ = nonlinear_feedback(linear_mse(cfg, design, chans).phi)
    return design


def _hybrid(req: DesignRequest, chans: ChannelSet, mode: str, refine: int) -> HybridDesign:
    cfg = req.cfg
    k_hops = cfg.n_hops
    n = cfg.n_streams
    whs = [whiten_hop(chans[k], cfg.power[k], cfg.noise_power[k]) for k in range(k_hops)]
    f_al, f_ar = [], [None]
    for k in range(k_hops):
        f_al.append(_analog(mode, whs[k].svd.v, whs[k].whitener, cfg.rf_chains[k], n, req))
    for k in range(1, k_hops):
        eye = np.eye(cfg.antennas[k], dtype=complex)
        f_ar.append(_combiner(mode, whs[k - 1].svd.u, eye, cfg.rf_chains[k], n, req))
    eye = np.eye(cfg.antennas[k_hops], dtype=complex)
    g_a = _combiner(mode, whs[-1].svd.u, eye, cfg.rf_chains[k_hops], n, req)
    design = HybridDesign(f_al, [None] * k_hops, f_ar, g_a, algorithm=req.algorithm)
    flags = _digital_pass(cfg, chans, whs, design, req.obj.concrete)

    # Refinement: re-fit each relay combiner to the eigenvectors of its latest
    # received covariance and redo the downstream digital matrices. A pass that
    # raises Tr(phi) is rolled back and ends the loop.
    trace = [_trace_phi(cfg, design, chans)]
    attempted = [trace[0]]
    passes = rejected = 0
    for _ in range(refine if k_hops > 1 else 0):
        passes += 1
        saved = (list(design.f_ar), list(design.f_d), flags)
        for k in range(1, k_hops):
            r_k = propagate(cfg, design, chans).r_x[k]
            _, e = np.linalg.eigh(r_k)
            eye = np.eye(r_k.shape[0], dtype=complex)
            design.f_ar[k] = _combiner(mode, e[:, ::-1], eye, cfg.rf_chains[k], n, req)
            flags = _digital_pass(cfg, chans, whs, design, req.obj.concrete, start=k)
        val = _trace_phi(cfg, design, chans)
        attempted.append(val)
        if val > trace[-1]:
            design.f_ar, design.f_d, flags = list(saved[0]), list(saved[1]), saved[2]
            rejected += 1
            break
        trace.append(val)
        if trace[-2] - trace[-1] <= req.tolerance * trace[-2]:
            break
    design.info.update(trace=trace, attempted_trace=attempted, iters=passes,
                       rejected_passes=rejected, flags=sorted(set(flags)))
    return _finish(cfg, chans, design, req.obj)


def full_digital(req: DesignRequest, chans: ChannelSet | None = None) -> HybridDesign:
    """Per-hop whitened water-filled design without analog stages."""
    cfg = req.cfg
    chans = req.channels if chans is None else chans
    k_hops = cfg.n_hops
    whs = [whiten_hop(chans[k], cfg.power[k], cfg.noise_power[k]) for k in range(k_hops)]
    design = HybridDesign([None] * k_hops, [None] * k_hops, [None] * k_hops, None,
                          algorithm="full_digital")
    flags = _digital_pass(cfg, chans, whs, design, req.obj.concrete)
    design.info.update(trace=[], iters=0, flags=sorted(set(flags)))
    return _finish(cfg, chans, design, req.obj)


def non_robust(req: DesignRequest) -> HybridDesign:
    """``proposed`` designed on the estimates with every error correlation set to zero."""
    chans = req.channels.estimated(drop_error=True)
    d = _hybrid(req, chans, "alg1", req.repeat_limit)
    d.algorithm = "non_robust"
    return d


# -------------------------------------------------------------------- OMP


def omp_hybrid(target, codebook: Codebook, n_rf: int) -> tuple[np.ndarray, np.ndarray]:
    """Greedy sparse approximation ``target ~ A @ B`` with ``A`` drawn from the codebook.

    Each round picks the column most correlated with the residual, refits the
    digital part by least squares and updates the residual.
    """
    target = as_matrix(target, "target")
    cols = codebook.columns
    if cols.shape[0] != target.shape[0]:
        raise ConfigError("codebook and target dimensions differ")
    if codebook.size < n_rf:
        raise ConfigError(f"codebook has {codebook.size} columns, need >= {n_rf}")
    chosen: list[int] = []
    res = target
    b = np.zeros((0, target.shape[1]), dtype=complex)
    for _ in range(n_rf):
        corr = np.sum(np.abs(cols.conj().T @ res) ** 2, axis=1)
        corr[chosen] = -1.0
        chosen.append(int(np.argmax(corr)))
        a = cols[:, chosen]
        b = np.linalg.lstsq(a, target, rcond=None)[0]
        res = target - a @ b
        nrm = np.linalg.norm(res)
        if nrm > 0:
            res = res / nrm
    return cols[:, chosen], b


def default_codebooks(chans: ChannelSet) -> list[tuple[Codebook, Codebook | None]]:
    """Per-hop ``(transmit, receive)`` codebooks.

    mmWave hops use the path steering vectors of their estimate (scaled to
    unit modulus); otherwise the entry-phase matrix of the channel is used.
    The receive codebook of hop ``k`` belongs to node ``k`` and comes from hop
    ``k - 1``; the destination's comes from the last hop.
    """
    tx, rx = [], []
    for hop in chans:
        if hop.paths is not None:
            tx.append(Codebook(phase_project(hop.paths.a_t)))
            rx.append(Codebook(phase_project(hop.paths.a_r)))
        else:
            tx.append(Codebook(phase_project(hop.h_hat.conj().T)))
            rx.append(Codebook(phase_project(hop.h_hat)))
    out = [(tx[0], None)]
    out += [(tx[k], rx[k - 1]) for k in range(1, len(chans))]
    out.append((None, rx[-1]))
    return out


def _omp_design(req: DesignRequest, variant: str) -> HybridDesign:
    cfg = req.cfg
    chans = req.channels
    k_hops = cfg.n_hops
    n = cfg.n_streams
    books = req.codebooks or default_codebooks(chans)
    if variant == "fd_omp":
        ref = full_digital(req)
        f_in = [_compose(ref.f_al[k], ref.f_d[k], ref.f_ar[k]) for k in range(k_hops)]
        g_in = ref.g_d
    else:
        svds = [ordered_svd(h.h_hat) for h in chans]
        f_in = [svds[0].v[:, :n]]
        f_in += [svds[k].v[:, :n] @ svds[k - 1].u[:, :n].conj().T for k in range(1, k_hops)]
        g_in = svds[-1].u[:, :n].conj().T
    f_al, f_d, f_ar = [], [], []
    chain = _Chain(cfg)
    for k in range(k_hops):
        tx_book, rx_book = books[k]
        a_t, _ = omp_hybrid(f_in[k], tx_book, cfg.rf_chains[k])
        if k == 0:
            a_r = None
            dig = np.linalg.pinv(a_t) @ f_in[k]
        else:
            a_rx, _ = omp_hybrid(f_in[k].conj().T, rx_book, cfg.rf_chains[k])
            a_r = a_rx.conj().T
            dig = np.linalg.pinv(a_t) @ f_in[k] @ np.linalg.pinv(a_r)
        f = _compose(a_t, dig, a_r)
        tx = float(np.real(np.trace(f @ chain.r @ f.conj().T)))
        if tx <= 0:
            raise ConfigError(f"OMP forward matrix of hop {k} carries no power")
        dig = dig * np.sqrt(cfg.power[k] / tx)
        f_al.append(a_t)
        f_d.append(dig)
        f_ar.append(a_r)
        chain.advance(chans[k], _compose(a_t, dig, a_r), cfg.noise_power[k])
    g_rx, _ = omp_hybrid(g_in.conj().T, books[-1][1], cfg.rf_chains[k_hops])
    design = HybridDesign(f_al, f_d, f_ar, g_rx.conj().T, algorithm=variant)
    design.g_d = optimal_equalizer(cfg, design, chans)
    if req.obj.nonlinear:
        design.b, _ = nonlinear_feedback(linear_mse(cfg, design, chans).phi)
    design.info.update(trace=[], iters=0, flags=[])
    return design


# -------------------------------------------------------------- dispatch


def design(req: DesignRequest) -> HybridDesign:
    """Build the design named by ``req.algorithm``."""
    algo = req.algorithm
    if algo == "proposed":
        return _hybrid(req, req.channels, "alg1", req.repeat_limit)
    if algo == "uma":
        return _hybrid(req, req.channels, "uma", 0)
    if algo == "full_digital":
        return full_digital(req)
    if algo == "non_robust":
        return non_robust(req)
    return _omp_design(req, algo)
