"""Link evaluation for a K-hop amplify-and-forward chain with hybrid transceivers.

Indexing is zero-based: node ``k`` transmits over hop ``k`` (``k = 0`` is the
source) and node ``K`` is the destination. Hop ``k`` carries the estimated
channel ``h_hat`` of shape ``antennas[k + 1] x antennas[k]``.

Node ``k`` forwards ``F_k = f_al[k] @ f_d[k] @ f_ar[k]``; any factor stored as
``None`` is an identity placeholder (the source has no receive combiner and
fully digital designs have no analog stages).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .errors import ConfigError, InvalidInputError, NotPSDError, ShapeError
from .matdecomp import cholesky_lower

__all__ = [
    "NetworkConfig",
    "HybridDesign",
    "LinkState",
    "MseReport",
    "forward_matrices",
    "transmit_powers",
    "validate_design",
    "propagate",
    "cascade",
    "destination_noise",
    "linear_mse",
    "optimal_equalizer",
    "equalizer_mse",
    "nonlinear_feedback",
    "spectral_efficiency",
    "evaluate",
    "save_design",
    "load_design",
]

POWER_RTOL = 1e-9
UNIT_MODULUS_TOL = 1e-12


@dataclass(frozen=True)
class NetworkConfig:
    """Topology and budgets of a K-hop chain.

    Parameters
    ----------
    antennas : tuple of int
        Antenna count per node, length ``K + 1`` (source first).
    rf_chains : tuple of int
        RF-chain count per node, length ``K + 1``.
    n_streams : int
        Number of data streams ``N``.
    power : tuple of float
        Transmit power budget of nodes ``0 .. K-1``.
    noise_power : tuple of float
        Noise power at nodes ``1 .. K``.
    source_power : float
        Per-stream source signal power.
    """

    antennas: tuple
    rf_chains: tuple
    n_streams: int
    power: tuple
    noise_power: tuple
    source_power: float = 1.0

    def __post_init__(self):
        for name in ("antennas", "rf_chains", "power", "noise_power"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        k = len(self.antennas) - 1
        if k < 1:
            raise ConfigError("need at least two nodes (one hop)")
        if len(self.rf_chains) != k + 1:
            raise ConfigError("rf_chains must list one count per node")
        if len(self.power) != k or len(self.noise_power) != k:
            raise ConfigError("power and noise_power must list one value per hop")
        n = self.n_streams
        if n < 1:
            raise ConfigError("n_streams must be >= 1")
        for i, (a, r) in enumerate(zip(self.antennas, self.rf_chains)):
            if not n <= r <= a:
                raise ConfigError(
                    f"node {i}: need n_streams <= rf_chains <= antennas, got {n}, {r}, {a}"
                )
        if min(self.power) <= 0 or min(self.noise_power) <= 0 or self.source_power <= 0:
            raise ConfigError("all powers must be positive")

    @property
    def n_hops(self) -> int:
        return len(self.antennas) - 1

    @classmethod
    def uniform(cls, antennas, rf_chains, n_streams: int, snr_db: float,
                tx_power: float = 1.0, source_power: float = 1.0) -> "NetworkConfig":
        """Equal budgets ``P_k = tx_power`` and noise ``tx_power / SNR`` at every node."""
        antennas = tuple(antennas)
        k = len(antennas) - 1
        if np.isscalar(rf_chains):
            rf_chains = (int(rf_chains),) * (k + 1)
        noise = tx_power / 10.0 ** (snr_db / 10.0)
        return cls(antennas, tuple(rf_chains), n_streams, (tx_power,) * k, (noise,) * k,
                   source_power)

    def with_noise(self, noise_power) -> "NetworkConfig":
        return NetworkConfig(self.antennas, self.rf_chains, self.n_streams, self.power,
                             tuple(noise_power), self.source_power)


@dataclass
class HybridDesign:
    """Per-node analog/digital factors plus the destination equalizer.

    ``f_al[k]``, ``f_d[k]`` and ``f_ar[k]`` belong to transmitting node ``k``;
    ``g_a`` and ``g_d`` form the destination equalizer ``g_d @ g_a``; ``b`` is
    an optional strictly lower-triangular feedback matrix for THP/DFE.
    """

    f_al: list
    f_d: list
    f_ar: list
    g_a: np.ndarray | None
    g_d: np.ndarray | None = None
    b: np.ndarray | None = None
    algorithm: str = ""
    info: dict = field(default_factory=dict)

    @property
    def n_hops(self) -> int:
        return len(self.f_d)

    def analog_matrices(self):
        """Every stored (non-placeholder) analog matrix, with a label."""
        out = []
        for k in range(self.n_hops):
            if self.f_al[k] is not None:
                out.append((f"f_al[{k}]", self.f_al[k]))
            if self.f_ar[k] is not None:
                out.append((f"f_ar[{k}]", self.f_ar[k]))
        if self.g_a is not None:
            out.append(("g_a", self.g_a))
        return out


@dataclass
class LinkState:
    """Covariances along the chain; ``r_x[k]`` is the covariance at node ``k``."""

    r_x: list
    eta: list
    k_n: list
    tx_cov: list


@dataclass
class MseReport:
    phi: np.ndarray
    per_stream_mse: np.ndarray
    spectral_efficiency: float
    nonlinear_per_stream_mse: np.ndarray | None = None
    regularized: bool = False

    @property
    def sum_mse(self) -> float:
        return float(np.sum(self.per_stream_mse))

    @property
    def nonlinear_sum_mse(self) -> float:
        if self.nonlinear_per_stream_mse is None:
            return float("nan")
        return float(np.sum(self.nonlinear_per_stream_mse))


def _mul(*mats):
    """Product that skips ``None`` identity placeholders."""
    out = None
    for m in mats:
        if m is None:
            continue
        out = m if out is None else out @ m
    return out


def forward_matrices(design: HybridDesign) -> list[np.ndarray]:
    return [_mul(design.f_al[k], design.f_d[k], design.f_ar[k]) for k in range(design.n_hops)]


def _check_shapes(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet):
    if len(channels) != cfg.n_hops or design.n_hops != cfg.n_hops:
        raise ShapeError("configuration, design and channels disagree on the hop count")
    if tuple(channels.antennas) != tuple(cfg.antennas):
        raise ShapeError(f"channel antennas {channels.antennas} do not match {cfg.antennas}")
    fs = forward_matrices(design)
    for k, f in enumerate(fs):
        want_cols = cfg.n_streams if k == 0 else cfg.antennas[k]
        if f.shape != (cfg.antennas[k], want_cols):
            raise ShapeError(f"F[{k}] has shape {f.shape}, expected {(cfg.antennas[k], want_cols)}")
    return fs


def transmit_powers(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet) -> np.ndarray:
    """``Tr(F_k R_{x,k} F_k^H)`` per transmitting node."""
    state = propagate(cfg, design, channels)
    return np.array([np.real(np.trace(c)) for c in state.tx_cov])


def propagate(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet) -> LinkState:
    """Covariance recursion with channel error folded into white noise.

    ``R_{x,k+1} = H_k F_k R_{x,k} F_k^H H_k^H + eta_k I`` with
    ``eta_k = sigma_k^2 + Tr(F_k R_{x,k} F_k^H Psi_k)``, starting from
    ``R_{x,0} = sigma_0^2 I``.
    """
    fs = _check_shapes(cfg, design, channels)
    r = cfg.source_power * np.eye(cfg.n_streams, dtype=complex)
    r_x, etas, k_ns, tx = [r], [], [], []
    for k, (hop, f) in enumerate(zip(channels, fs)):
        t = f @ r @ f.conj().T
        eta = cfg.noise_power[k] + float(np.real(np.trace(t @ hop.psi)))
        k_n = eta * np.eye(hop.n_r, dtype=complex)
        r = hop.h_hat @ t @ hop.h_hat.conj().T + k_n
        r = 0.5 * (r + r.conj().T)
        tx.append(t)
        etas.append(eta)
        k_ns.append(k_n)
        r_x.append(r)
    return LinkState(r_x, etas, k_ns, tx)


def cascade(design: HybridDesign, channels: ChannelSet) -> np.ndarray:
    """Estimated end-to-end map ``H_{K-1} F_{K-1} ... H_0 F_0`` (no equalizer)."""
    m = None
    for hop, f in zip(channels, forward_matrices(design)):
        m = hop.h_hat @ (f if m is None else f @ m)
    return m


def destination_noise(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet,
                      state: LinkState | None = None, form: str = "split") -> np.ndarray:
    """Equivalent destination noise after the analog equalizer.

    ``form="split"`` adds the thermal part ``G_A (sigma^2 I) G_A^H`` and the
    channel-error part ``Tr(F R F^H Psi) G_A G_A^H`` separately;
    ``form="eta"`` uses the single scalar ``eta_K G_A G_A^H``. The two agree
    by construction.
    """
    state = state or propagate(cfg, design, channels)
    g = design.g_a if design.g_a is not None else np.eye(cfg.antennas[-1])
    gg = g @ g.conj().T
    if form == "eta":
        return state.eta[-1] * gg
    if form != "split":
        raise InvalidInputError(f"unknown form {form!r}")
    thermal = g @ (cfg.noise_power[-1] * np.eye(cfg.antennas[-1])) @ g.conj().T
    err = float(np.real(np.trace(state.tx_cov[-1] @ channels[-1].psi)))
    return thermal + err * gg


def _inner(cfg, design, channels, state):
    """``J = G_A R_{x,K} G_A^H`` and ``A = G_A M``, with ridge regularization if needed."""
    g = design.g_a
    m = cascade(design, channels)
    r = state.r_x[-1]
    if g is not None:
        j = g @ r @ g.conj().T
        a = g @ m
    else:
        j, a = r, m
    j = 0.5 * (j + j.conj().T)
    n = j.shape[0]
    w = np.linalg.eigvalsh(j)
    tr = float(np.real(np.trace(j)))
    regularized = False
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        j = j + 1e-12 * max(tr, 1e-300) / n * np.eye(n)
        regularized = True
        warnings.warn("near-singular receive covariance; ridge added", RuntimeWarning, stacklevel=3)
    return j, a, regularized


def optimal_equalizer(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet,
                      state: LinkState | None = None) -> np.ndarray:
    """MMSE digital equalizer ``G_D = sigma_0^2 A^H J^{-1}``."""
    state = state or propagate(cfg, design, channels)
    j, a, _ = _inner(cfg, design, channels, state)
    return cfg.source_power * np.linalg.solve(j, a).conj().T


def equalizer_mse(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet,
                  g_d: np.ndarray | None = None, state: LinkState | None = None) -> np.ndarray:
    """MSE matrix ``E[(G x_K - s)(G x_K - s)^H]`` for an explicit equalizer ``G = G_D G_A``."""
    state = state or propagate(cfg, design, channels)
    g_d = design.g_d if g_d is None else g_d
    if g_d is None:
        raise InvalidInputError("design carries no digital equalizer")
    g = g_d if design.g_a is None else g_d @ design.g_a
    m = cascade(design, channels)
    s2 = cfg.source_power
    gm = g @ m
    phi = g @ state.r_x[-1] @ g.conj().T - s2 * gm - s2 * gm.conj().T + s2 * np.eye(m.shape[1])
    return 0.5 * (phi + phi.conj().T)


def linear_mse(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet,
               state: LinkState | None = None) -> MseReport:
    """MSE matrix of the optimal linear digital equalizer."""
    state = state or propagate(cfg, design, channels)
    j, a, reg = _inner(cfg, design, channels, state)
    s2 = cfg.source_power
    phi = s2 * np.eye(a.shape[1]) - s2 * s2 * a.conj().T @ np.linalg.solve(j, a)
    phi = 0.5 * (phi + phi.conj().T)
    diag = np.clip(np.real(np.diag(phi)), 0.0, s2)
    se = spectral_efficiency(phi, s2)
    return MseReport(phi, diag, se, regularized=reg)


def nonlinear_feedback(phi) -> tuple[np.ndarray, np.ndarray]:
    """THP/DFE feedback from ``phi = L L^H``: ``B = diag(L) L^{-1} - I``.

    Returns ``(b, d)`` where ``d`` holds the per-stream MSEs ``|L_ii|^2`` that
    remain after feedback.
    """
    lo = cholesky_lower(phi)
    d = np.real(np.diag(lo))
    b = np.diag(d) @ np.linalg.inv(lo) - np.eye(lo.shape[0])
    b = np.tril(b, -1)
    return b, d * d


def spectral_efficiency(phi, sigma_02: float = 1.0) -> float:
    """``log2 det(sigma_0^2 phi^{-1})`` in bits/s/Hz."""
    phi = np.asarray(phi, dtype=complex)
    w = np.linalg.eigvalsh(0.5 * (phi + phi.conj().T))
    if w.size == 0 or w[0] <= 0:
        raise NotPSDError("MSE matrix is not positive definite")
    return float(max(0.0, np.sum(np.log2(sigma_02 / w))))


def validate_design(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet,
                    tight: bool = True) -> None:
    """Raise if an analog entry leaves the unit circle or a power budget is broken."""
    for name, m in design.analog_matrices():
        dev = np.max(np.abs(np.abs(m) - 1.0), initial=0.0)
        if dev > UNIT_MODULUS_TOL:
            raise InvalidInputError(f"{name} violates unit modulus by {dev:.2e}")
    p = transmit_powers(cfg, design, channels)
    budget = np.asarray(cfg.power)
    if np.any(p > budget * (1 + POWER_RTOL)):
        raise InvalidInputError(f"power budget exceeded: {p} > {budget}")
    if tight and np.any(np.abs(p - budget) > POWER_RTOL * budget):
        raise InvalidInputError(f"power budget not tight: {p} vs {budget}")


def evaluate(cfg: NetworkConfig, design: HybridDesign, channels: ChannelSet) -> dict:
    """Metrics of a design on given channels.

    ``spectral_efficiency`` and ``nonlinear_sum_mse`` use the optimal linear
    receiver for these channels; ``sum_mse`` uses the design's own ``g_d``
    when present (so a mismatched equalizer is charged for its mismatch).
    """
    state = propagate(cfg, design, channels)
    rep = linear_mse(cfg, design, channels, state)
    if design.g_d is not None:
        sum_mse = float(np.real(np.trace(equalizer_mse(cfg, design, channels, state=state))))
    else:
        sum_mse = rep.sum_mse
    try:
        _, d2 = nonlinear_feedback(rep.phi)
        nl = float(np.sum(d2))
    except NotPSDError:
        nl = float("nan")
    return {
        "spectral_efficiency": rep.spectral_efficiency,
        "sum_mse": sum_mse,
        "nonlinear_sum_mse": nl,
        "regularized": rep.regularized,
    }


def save_design(path, design: HybridDesign) -> None:
    from . import matio

    blocks = []
    for k in range(design.n_hops):
        for name in ("f_al", "f_d", "f_ar"):
            m = getattr(design, name)[k]
            if m is not None:
                blocks.append((f"{name}[{k}]", m))
    for name in ("g_a", "g_d", "b"):
        m = getattr(design, name)
        if m is not None:
            blocks.append((name, m))
    meta = {"hops": design.n_hops, "algorithm": design.algorithm or "-"}
    matio.write_blocks(path, "design", blocks, meta)


def load_design(path) -> HybridDesign:
    from . import matio

    kind, meta, blocks = matio.read_blocks(path)
    if kind != "design":
        raise InvalidInputError(f"expected a design file, got {kind!r}")
    by = dict(blocks)
    k = int(meta["hops"])
    algo = meta.get("algorithm", "")
    return HybridDesign(
        f_al=[by.get(f"f_al[{i}]") for i in range(k)],
        f_d=[by[f"f_d[{i}]"] for i in range(k)],
        f_ar=[by.get(f"f_ar[{i}]") for i in range(k)],
        g_a=by.get("g_a"),
        g_d=by.get("g_d"),
        b=by.get("b"),
        algorithm="" if algo == "-" else algo,
    )

