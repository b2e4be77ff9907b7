import numpy as np
import pytest
from conftest import crandn, random_psd, random_unitary
from scipy.optimize import minimize

from hybridrelay.channel import ChannelSet, HopChannel, error_correlation
from hybridrelay.designer import DesignRequest, design
from hybridrelay.errors import ConfigError, InvalidInputError, NotPSDError
from hybridrelay.matdecomp import cholesky_lower, hermitian_inv_sqrt, ordered_svd, phase_project
from hybridrelay.structopt import (
    ObjectiveSpec,
    design_final_hop,
    design_first_hop,
    design_hop,
    design_intermediate_hop,
    destination_projector,
    inner_rotations,
    power_allocation,
    receive_projector,
    source_rotation,
    transmit_projector,
    whiten_hop,
)
from hybridrelay.sysmodel import HybridDesign, NetworkConfig, linear_mse


def _hop(rng, n_r=3, n_t=3, sigma_e=0.1):
    return HopChannel(crandn(rng, n_r, n_t), error_correlation(n_t, sigma_e, 0.6))


def test_objective_spec_defaults():
    assert ObjectiveSpec().family == "add_schur_concave"
    assert ObjectiveSpec("sum_mse").family == "add_schur_convex"
    assert ObjectiveSpec("sum_mse", "mult_schur_convex").nonlinear
    with pytest.raises(ConfigError):
        ObjectiveSpec("ber")
    with pytest.raises(ConfigError):
        ObjectiveSpec("sum_mse", "convex")


def test_whiten_hop_without_error():
    rng = np.random.default_rng(0)
    hop = HopChannel(crandn(rng, 3, 2), np.zeros((2, 2)))
    wh = whiten_hop(hop, 2.0, 0.25)
    assert np.allclose(wh.effective, hop.h_hat / 0.5)
    assert np.allclose(wh.whitener, 0.5 * np.eye(2))
    assert np.allclose(wh.svd.reconstruct(), wh.effective)


def test_whiten_hop_with_error():
    rng = np.random.default_rng(1)
    hop = _hop(rng, sigma_e=0.3)
    wh = whiten_hop(hop, 2.0, 0.5)
    d2 = 0.5 * np.eye(3) + 2.0 * hop.psi
    assert np.allclose(wh.whitener @ wh.whitener, d2)
    assert np.allclose(wh.whitener @ wh.whitener_inv, np.eye(3))
    assert np.allclose(wh.effective @ wh.whitener, hop.h_hat)


def test_whiten_hop_rejects_zero_noise():
    hop = HopChannel(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(NotPSDError):
        whiten_hop(hop, 1.0, 0.0)


def _grid_best(fun, lam, power, n=20001):
    p1 = np.linspace(0.0, power, n)
    vals = np.array([fun(np.array([a, power - a]), lam) for a in p1])
    return vals


def test_power_allocation_capacity_grid_oracle():
    lam, power = np.array([2.0, 1.0]), 1.0
    cap = lambda p, l: np.sum(np.log2(1 + l**2 * p))
    vals = _grid_best(cap, lam, power)
    p = power_allocation(lam, power, "sum_capacity")
    assert p.sum() == pytest.approx(power, rel=1e-14)
    assert cap(p, lam) >= vals.max() - 1e-9
    assert cap(p, lam) - vals.max() <= 1e-6


def test_power_allocation_mse_grid_oracle():
    lam, power = np.array([2.0, 1.0]), 1.0
    mse = lambda p, l: np.sum(1.0 / (1 + l**2 * p))
    vals = _grid_best(mse, lam, power)
    p = power_allocation(lam, power, "sum_mse")
    assert p.sum() == pytest.approx(power, rel=1e-14)
    assert mse(p, lam) <= vals.min() + 1e-9
    assert vals.min() - mse(p, lam) <= 1e-6


def test_power_allocation_inactive_streams():
    lam = np.array([2.0, 1.0])
    assert np.allclose(power_allocation(lam, 0.1, "sum_capacity"), [0.1, 0.0])
    # MSE rule: second stream active iff mu > lam_2, mu = (P + 1/4) / (1/2) for one stream.
    assert power_allocation(lam, 0.2, "sum_mse")[1] == 0.0
    assert power_allocation(lam, 2.0, "sum_mse")[1] > 0.0


def test_power_allocation_mse_kkt():
    rng = np.random.default_rng(2)
    for _ in range(50):
        lam = rng.uniform(0.1, 3.0, 4)
        p = power_allocation(lam, rng.uniform(0.1, 5.0), "sum_mse")
        on = p > 0
        # Active streams share the multiplier lam^2 / (1 + lam^2 p)^2; inactive ones sit below it.
        grad = lam**2 / (1 + lam**2 * p) ** 2
        assert np.ptp(grad[on]) <= 1e-9 * grad[on].max()
        if np.any(~on):
            assert grad[~on].max() <= grad[on].min() + 1e-12


def test_power_allocation_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        power_allocation([1.0, 0.0], 1.0, "sum_mse")
    with pytest.raises(InvalidInputError):
        power_allocation([1.0], 1.0, "ber")


def test_first_hop_is_classical_waterfilling():
    rng = np.random.default_rng(3)
    for _ in range(10):
        hop = HopChannel(crandn(rng, 4, 4), np.zeros((4, 4)))
        wh = whiten_hop(hop, 2.0, 0.5)
        sol = design_first_hop(wh, None, 2.0, 3)
        f = sol.f_d
        assert np.real(np.trace(f @ f.conj().T)) == pytest.approx(2.0, rel=1e-12)
        s = np.linalg.svd(hop.h_hat, compute_uv=False)[:3]
        p = power_allocation(s / np.sqrt(0.5), 2.0)
        cap = np.sum(np.log2(1 + s**2 * p / 0.5))
        got = np.real(np.log2(np.linalg.det(
            np.eye(4) + hop.h_hat @ f @ f.conj().T @ hop.h_hat.conj().T / 0.5)))
        assert got == pytest.approx(cap, abs=1e-10)


def test_transmit_projector_orthonormal_and_invariant():
    rng = np.random.default_rng(4)
    d = hermitian_inv_sqrt(random_psd(rng, 5) + np.eye(5))
    f_al = phase_project(crandn(rng, 5, 3))
    pi, c_is, floored = transmit_projector(d, f_al)
    assert not floored
    assert np.allclose(pi.conj().T @ pi, np.eye(3))
    t = crandn(rng, 3, 3)
    pi2, _, _ = transmit_projector(d, f_al @ t)
    assert np.allclose(pi @ pi.conj().T, pi2 @ pi2.conj().T)


def test_transmit_projector_floors_rank_deficient_analog():
    rng = np.random.default_rng(5)
    col = phase_project(crandn(rng, 4, 1))
    _, _, floored = transmit_projector(np.eye(4), np.hstack([col, col]))
    assert floored


def test_receive_and_destination_projectors_orthonormal():
    rng = np.random.default_rng(6)
    r = random_psd(rng, 5) + 0.1 * np.eye(5)
    f_ar = phase_project(crandn(rng, 3, 5))
    p = receive_projector(f_ar, r)
    assert np.allclose(p @ p.conj().T, np.eye(3))
    g = destination_projector(f_ar)
    assert np.allclose(g @ g.conj().T, np.eye(3))
    assert np.allclose(destination_projector(None, 4), np.eye(4))


def test_digital_design_invariant_to_analog_basis():
    rng = np.random.default_rng(7)
    hop = _hop(rng, 4, 5)
    wh = whiten_hop(hop, 1.0, 0.2)
    f_al = phase_project(crandn(rng, 5, 3))
    t = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 3))) * 2.0
    a = design_first_hop(wh, f_al, 1.0, 2)
    b = design_first_hop(wh, f_al @ t, 1.0, 2)
    fa, fb = f_al @ a.f_d, f_al @ t @ b.f_d
    assert np.allclose(fa @ fa.conj().T, fb @ fb.conj().T, atol=1e-10)


def test_final_hop_with_square_equalizer_reduces():
    rng = np.random.default_rng(8)
    hop = _hop(rng, 3, 3)
    wh = whiten_hop(hop, 1.0, 0.2)
    r_in = random_psd(rng, 3) + np.eye(3)
    sig = random_psd(rng, 3, rank=2)
    a = design_intermediate_hop(wh, None, None, r_in, sig, 1.0, 2)
    b = design_final_hop(wh, None, None, np.eye(3), r_in, sig, 1.0, 2)
    assert np.allclose(a.f_d, b.f_d)
    # Any invertible square equalizer spans the same receive space.
    c = design_final_hop(wh, None, None, crandn(rng, 3, 3), r_in, sig, 1.0, 2)
    assert np.allclose(a.lambda_pi, c.lambda_pi)
    assert np.allclose(a.lambda_fd, c.lambda_fd)


def test_intermediate_hop_power_is_tight():
    rng = np.random.default_rng(9)
    hop = _hop(rng, 4, 4)
    wh = whiten_hop(hop, 3.0, 0.2)
    r_in = random_psd(rng, 4) + np.eye(4)
    f_al = phase_project(crandn(rng, 4, 3))
    f_ar = phase_project(crandn(rng, 3, 4))
    sol = design_hop(wh, f_al, 3.0, 2, r_in=r_in, f_ar=f_ar, signal_cov=random_psd(rng, 4, 2))
    f = f_al @ sol.f_d @ f_ar
    assert np.real(np.trace(f @ r_in @ f.conj().T)) == pytest.approx(3.0, rel=1e-12)


def _two_hop(rng, sigma_e=0.1, n=2, ant=(3, 3, 3)):
    hops = [HopChannel(crandn(rng, ant[i + 1], ant[i]), error_correlation(ant[i], sigma_e, 0.6))
            for i in range(2)]
    cfg = NetworkConfig(ant, ant, n, (1.0, 1.0), (0.3, 0.3))
    return cfg, ChannelSet(hops)


def test_receive_pairing_beats_random_pairing():
    rng = np.random.default_rng(10)
    for _ in range(30):
        cfg, chans = _two_hop(rng)
        d = design(DesignRequest(cfg, chans, algorithm="full_digital"))
        best = linear_mse(cfg, d, chans)
        f0 = d.f_d[0]
        r1 = chans[0].h_hat @ f0 @ f0.conj().T @ chans[0].h_hat.conj().T
        eta = 0.3 + np.real(np.trace(f0 @ f0.conj().T @ chans[0].psi))
        g_is = hermitian_inv_sqrt(r1 + eta * np.eye(3))
        base = d.f_d[1] @ np.linalg.inv(g_is)
        # Orthonormal basis of the paired receive directions.
        paired = np.linalg.svd(base)[2][:2].conj().T
        left = base @ paired
        for _ in range(20):
            # Same transmit side, random receive directions.
            u = random_unitary(rng, 3, 2)
            f_alt = left @ u.conj().T @ g_is
            trial = HybridDesign([None, None], [f0, f_alt], [None, None], None)
            tx = np.real(np.trace(f_alt @ (r1 + eta * np.eye(3)) @ f_alt.conj().T))
            trial.f_d[1] = f_alt * np.sqrt(1.0 / tx)
            rep = linear_mse(cfg, trial, chans)
            assert rep.spectral_efficiency <= best.spectral_efficiency + 1e-9
            assert np.trace(rep.phi).real >= np.trace(best.phi).real - 1e-9


def test_inner_rotations_unitary():
    rng = np.random.default_rng(11)
    svds = [ordered_svd(crandn(rng, 4, 3)), ordered_svd(crandn(rng, 2, 4))]
    (q,) = inner_rotations(svds)
    assert np.allclose(q @ q.conj().T, np.eye(4))
    assert np.allclose(q @ svds[0].u, svds[1].v)
    with pytest.raises(InvalidInputError):
        inner_rotations([svds[1], svds[1]])


def test_source_rotations():
    rng = np.random.default_rng(12)
    basis = random_unitary(rng, 4)
    m = np.array([0.5, 0.3, 0.1, 0.05])
    phi = basis @ np.diag(m) @ basis.conj().T
    q = source_rotation("add_schur_convex", basis, 4)
    rot = q.conj().T @ phi @ q
    assert np.ptp(np.real(np.diag(rot))) <= 1e-12
    q = source_rotation("mult_schur_convex", basis, 4, mse_eigs=m)
    l_diag = np.abs(np.diag(cholesky_lower(q.conj().T @ phi @ q)))
    assert np.ptp(l_diag) <= 1e-12
    assert np.allclose(l_diag, np.prod(m) ** (1 / 8))
    assert np.allclose(source_rotation("add_schur_concave", basis, 3), basis[:, :3])
    with pytest.raises(ConfigError):
        source_rotation("other", basis, 4)
    with pytest.raises(InvalidInputError):
        source_rotation("mult_schur_convex", basis, 4)


def _unit(t, p):
    return np.array([np.cos(t), np.sin(t) * np.exp(1j * p)])


@pytest.mark.parametrize("hybrid", [False, True])
def test_single_hop_toy_grid_oracle(hybrid):
    rng = np.random.default_rng(13 + hybrid)
    for _ in range(3):
        hop = _hop(rng, 2, 2, sigma_e=0.2)
        power, noise = 1.0, 0.3
        f_al = phase_project(crandn(rng, 2, 2)) if hybrid else None
        sol = design_first_hop(whiten_hop(hop, power, noise), f_al, power, 1)
        f = sol.f_d if f_al is None else f_al @ sol.f_d

        def rate(x):
            g = _unit(*x)[:, None]
            g = g * np.sqrt(power) / np.linalg.norm(g)
            eta = noise + np.real(g.conj().T @ hop.psi @ g).item()
            return np.log2(1 + np.linalg.norm(hop.h_hat @ g) ** 2 / eta)

        grid = [(rate((t, p)), t, p) for t in np.linspace(0, np.pi / 2, 32)
                for p in np.linspace(0, 2 * np.pi, 32, endpoint=False)]
        start = max(grid)[1:]
        polished = -minimize(lambda x: -rate(x), start, method="Nelder-Mead",
                             options=dict(xatol=1e-10, fatol=1e-14)).fun
        eta = noise + np.real(f.conj().T @ hop.psi @ f).item()
        got = np.log2(1 + np.linalg.norm(hop.h_hat @ f) ** 2 / eta)
        assert got >= max(grid)[0] - 1e-12
        assert abs(got - polished) <= 1e-6
