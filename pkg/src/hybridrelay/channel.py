"""Channel generation: estimated channels, error correlation and realizations.

Randomness always flows through an explicit :class:`numpy.random.Generator`.
Experiments split streams with :class:`numpy.random.SeedSequence`: one child
per trial, and inside a trial one child for the estimated channels and one
for the error realizations, each split again per hop (see
:func:`trial_streams`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import matio
from .errors import InvalidInputError, ShapeError
from .matdecomp import as_matrix, hermitian_sqrt

__all__ = [
    "ChannelModelSpec",
    "MmwavePaths",
    "HopChannel",
    "ChannelSet",
    "rayleigh_channel",
    "mmwave_channel",
    "steering_vector",
    "error_correlation",
    "realize_channel",
    "draw_channel_set",
    "trial_streams",
    "child_sequence",
    "save_channels",
    "load_channels",
]


@dataclass(frozen=True)
class ChannelModelSpec:
    kind: Literal["mmwave", "rayleigh"] = "mmwave"
    n_paths: int = 10

    def __post_init__(self):
        if self.kind not in ("mmwave", "rayleigh"):
            raise InvalidInputError(f"unknown channel kind {self.kind!r}")
        if self.kind == "mmwave" and self.n_paths < 1:
            raise InvalidInputError("mmWave channels need n_paths >= 1")


@dataclass(frozen=True)
class MmwavePaths:
    """Geometry behind one mmWave draw; steering columns are unit-norm."""

    gains: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray
    a_r: np.ndarray
    a_t: np.ndarray


@dataclass
class HopChannel:
    """One hop: estimate ``h_hat`` (n_r x n_t), error correlation ``psi`` (n_t x n_t)."""

    h_hat: np.ndarray
    psi: np.ndarray
    h_true: np.ndarray | None = None
    paths: MmwavePaths | None = field(default=None, repr=False)

    def __post_init__(self):
        self.h_hat = as_matrix(self.h_hat, "h_hat")
        self.psi = as_matrix(self.psi, "psi")
        n_r, n_t = self.h_hat.shape
        if self.psi.shape != (n_t, n_t):
            raise ShapeError(f"psi must be {n_t}x{n_t}, got {self.psi.shape}")
        if np.max(np.abs(self.psi - self.psi.conj().T), initial=0.0) > 1e-10:
            raise InvalidInputError("psi is not Hermitian")
        if self.psi.size and np.linalg.eigvalsh(self.psi)[0] < -1e-10:
            raise InvalidInputError("psi is not positive semidefinite")
        if self.h_true is not None:
            self.h_true = as_matrix(self.h_true, "h_true")
            if self.h_true.shape != self.h_hat.shape:
                raise ShapeError("h_true and h_hat differ in shape")

    @property
    def n_r(self) -> int:
        return self.h_hat.shape[0]

    @property
    def n_t(self) -> int:
        return self.h_hat.shape[1]


@dataclass
class ChannelSet:
    hops: list[HopChannel]

    def __post_init__(self):
        if not self.hops:
            raise InvalidInputError("a channel set needs at least one hop")
        for k in range(1, len(self.hops)):
            if self.hops[k].n_t != self.hops[k - 1].n_r:
                raise ShapeError(
                    f"hop {k + 1} expects {self.hops[k].n_t} antennas at its transmitter, "
                    f"hop {k} delivers {self.hops[k - 1].n_r}"
                )

    def __len__(self) -> int:
        return len(self.hops)

    def __iter__(self):
        return iter(self.hops)

    def __getitem__(self, k) -> HopChannel:
        return self.hops[k]

    @property
    def antennas(self) -> tuple[int, ...]:
        return (self.hops[0].n_t,) + tuple(h.n_r for h in self.hops)

    def estimated(self, drop_error: bool = False) -> "ChannelSet":
        """Copy with the estimates; ``drop_error`` zeroes every ``psi``."""
        return ChannelSet([
            HopChannel(h.h_hat, np.zeros_like(h.psi) if drop_error else h.psi, paths=h.paths)
            for h in self.hops
        ])

    def true_channels(self) -> "ChannelSet":
        """Realized channels as error-free 'estimates', for evaluation."""
        if any(h.h_true is None for h in self.hops):
            raise InvalidInputError("channel set has no true realization")
        return ChannelSet([HopChannel(h.h_true, np.zeros_like(h.psi)) for h in self.hops])


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rayleigh_channel(n_r: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. CN(0, 1) entries."""
    if n_r < 1 or n_t < 1:
        raise InvalidInputError("antenna counts must be >= 1")
    return _cn(rng, (n_r, n_t))


def steering_vector(n: int, angles) -> np.ndarray:
    """Half-wavelength ULA response, unit norm, one column per angle."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return np.exp(1j * np.pi * np.outer(np.arange(n), np.sin(angles))) / np.sqrt(n)


def mmwave_channel(n_r: int, n_t: int, n_paths: int, rng: np.random.Generator,
                   return_paths: bool = False):
    """Narrowband clustered channel ``sqrt(n_t n_r / L) sum_p alpha_p a_r a_t^H``.

    Path gains are CN(0, 1); arrival and departure angles are uniform on
    ``[0, 2 pi)``.
    """
    if n_r < 1 or n_t < 1 or n_paths < 1:
        raise InvalidInputError("antenna counts and n_paths must be >= 1")
    gains = _cn(rng, n_paths)
    aoa = rng.uniform(0.0, 2 * np.pi, n_paths)
    aod = rng.uniform(0.0, 2 * np.pi, n_paths)
    a_r = steering_vector(n_r, aoa)
    a_t = steering_vector(n_t, aod)
    h = np.sqrt(n_t * n_r / n_paths) * (a_r * gains) @ a_t.conj().T
    if return_paths:
        return h, MmwavePaths(gains, aoa, aod, a_r, a_t)
    return h


def error_correlation(n: int, sigma_e: float, alpha_e: float) -> np.ndarray:
    """Exponential model ``[psi]_{il} = sigma_e * alpha_e^{|i - l|}``."""
    if not 0.0 <= alpha_e < 1.0:
        raise InvalidInputError("alpha_e must lie in [0, 1)")
    if sigma_e < 0:
        raise InvalidInputError("sigma_e must be non-negative")
    idx = np.arange(n)
    return (sigma_e * alpha_e ** np.abs(idx[:, None] - idx[None, :])).astype(complex)


def realize_channel(hop: HopChannel, rng: np.random.Generator) -> np.ndarray:
    """Draw ``H = H_hat + H_W psi^{1/2}`` with ``H_W`` i.i.d. CN(0, 1)."""
    h_w = _cn(rng, hop.h_hat.shape)
    return hop.h_hat + h_w @ hermitian_sqrt(hop.psi)


def child_sequence(seq: np.random.SeedSequence, i: int) -> np.random.SeedSequence:
    """The ``i``-th child of ``seq`` without advancing its spawn counter."""
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (i,),
                                  pool_size=seq.pool_size)


def trial_streams(seed: int, trials: int) -> list[tuple[np.random.SeedSequence, np.random.SeedSequence]]:
    """Per-trial (estimate, error) seed sequences; independent of run order."""
    root = np.random.SeedSequence(seed)
    out = []
    for t in range(trials):
        child = child_sequence(root, t)
        out.append((child_sequence(child, 0), child_sequence(child, 1)))
    return out


def draw_channel_set(antennas, model: ChannelModelSpec, sigma_e: float, alpha_e: float,
                     est_seq: np.random.SeedSequence,
                     err_seq: np.random.SeedSequence | None = None) -> ChannelSet:
    """Estimated channel per hop, its error correlation, and (optionally) a realization.

    Each hop uses its own spawned stream, so the estimates do not change when
    ``sigma_e`` changes and the error draws ``H_W`` are shared across
    ``sigma_e`` values (common random numbers).
    """
    antennas = list(antennas)
    k_hops = len(antennas) - 1
    est_rngs = [np.random.default_rng(child_sequence(est_seq, k)) for k in range(k_hops)]
    err_rngs = ([np.random.default_rng(child_sequence(err_seq, k)) for k in range(k_hops)]
                if err_seq is not None else [None] * k_hops)
    hops = []
    for k in range(k_hops):
        n_t, n_r = antennas[k], antennas[k + 1]
        paths = None
        if model.kind == "mmwave":
            h_hat, paths = mmwave_channel(n_r, n_t, model.n_paths, est_rngs[k], return_paths=True)
        else:
            h_hat = rayleigh_channel(n_r, n_t, est_rngs[k])
        hop = HopChannel(h_hat, error_correlation(n_t, sigma_e, alpha_e), paths=paths)
        if err_rngs[k] is not None:
            hop.h_true = realize_channel(hop, err_rngs[k])
        hops.append(hop)
    return ChannelSet(hops)


def save_channels(path, channels: ChannelSet, seed: int | None = None) -> None:
    blocks = []
    for k, hop in enumerate(channels, start=1):
        blocks.append((f"h_hat[{k}]", hop.h_hat))
        blocks.append((f"psi[{k}]", hop.psi))
        if hop.h_true is not None:
            blocks.append((f"h_true[{k}]", hop.h_true))
    meta = {"hops": len(channels), "antennas": "/".join(map(str, channels.antennas))}
    if seed is not None:
        meta["seed"] = seed
    matio.write_blocks(path, "channels", blocks, meta)


def load_channels(path) -> ChannelSet:
    kind, meta, blocks = matio.read_blocks(path)
    if kind != "channels":
        raise InvalidInputError(f"expected a channels file, got {kind!r}")
    by_name = dict(blocks)
    hops = []
    for k in range(1, int(meta["hops"]) + 1):
        hops.append(HopChannel(by_name[f"h_hat[{k}]"], by_name[f"psi[{k}]"],
                               by_name.get(f"h_true[{k}]")))
    return ChannelSet(hops)
