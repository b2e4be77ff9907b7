import numpy as np
import pytest

from hybridrelay.channel import ChannelModelSpec, draw_channel_set, trial_streams


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_unitary(rng, n, m=None):
    """Haar-distributed ``n x m`` matrix with orthonormal columns."""
    m = n if m is None else m
    q, r = np.linalg.qr(crandn(rng, n, n))
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return q[:, :m]


def random_psd(rng, n, rank=None):
    b = crandn(rng, rank or n, n)
    return b.conj().T @ b


def make_channels(antennas, seed=0, kind="mmwave", sigma_e=0.0, alpha_e=0.6, trial=0,
                  n_paths=10):
    est, err = trial_streams(seed, trial + 1)[trial]
    return draw_channel_set(antennas, ChannelModelSpec(kind, n_paths), sigma_e, alpha_e, est, err)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; the lines are printed at the end of the session."""

    def _report(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
