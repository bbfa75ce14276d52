import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from chiralcurrent import chirality as ch
from chiralcurrent import dynamics as dy
from chiralcurrent import floquet as fq
from chiralcurrent import hilbert as hb
from chiralcurrent import model as md
from chiralcurrent.hilbert import SpaceLayout

TP = 2 * math.pi
KAPPA = 0.04341659518874279
IDEAL = math.sqrt(5) - 2


def random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


# -- containers and helpers ------------------------------------------------------


def test_subspace_basis_checks_orthonormality():
    with pytest.raises(ValueError):
        dy.SubspaceBasis(["a", "b"], np.array([[1, 0], [1, 1]]))
    b = dy.SubspaceBasis(["a"], np.array([[0, 1]]))
    big = b.embed(np.array([3, 5]), 8)
    assert big.vectors[0, 5] == 1 and big.space_dim == 8


def test_reachability_is_directed():
    L = np.zeros((3, 3))
    L[0, 2] = 1  # 2 -> 0 only
    assert list(dy.reachable_indices([L], [2])) == [0, 2]
    assert list(dy.reachable_indices([L], [0])) == [0]


def test_fidelity():
    a = np.array([1, 0, 0], dtype=complex)
    b = np.array([0, 1, 0], dtype=complex)
    assert dy.fidelity(a, a * np.exp(0.7j)) == pytest.approx(1.0)
    assert dy.fidelity(a, b) == 0.0
    rho = np.diag([0.25, 0.75, 0]).astype(complex)
    assert dy.fidelity(rho, b) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        dy.fidelity(np.ones(4) / 2, a)
    assert dy.fidelity(np.array([0, 0, 0, 1.0]), np.array([0, 1.0]), embedding=np.array([0, 3])) == 1.0


# -- Schrodinger ----------------------------------------------------------------


def test_constant_h_matches_expm():
    rng = np.random.default_rng(1)
    H = random_hermitian(rng, 6)
    psi0 = np.zeros(6, complex)
    psi0[2] = 1
    tg = np.linspace(0, 3, 7)
    ref = np.array([expm(-1j * H * t) @ psi0 for t in tg])
    for method in ("expm", "adaptive"):
        res = dy.propagate_schrodinger(md.TimeDependentHamiltonian(H) if method == "adaptive" else H,
                                       psi0, tg, method=method, tol=1e-12)
        assert np.abs(res.full_states() - ref).max() <= 1e-9
    assert "max_norm_drift" in res.diagnostics


def test_effective_model_returns_after_one_period(params3, drive3):
    H = fq.effective_spin_hamiltonian(params3, drive3)
    sc = ch.build_scenario("n3", "g")
    T = math.pi / (math.sqrt(3) * KAPPA)
    res = dy.propagate_schrodinger(H, sc.psi0, [0.0, T])
    assert dy.fidelity(res.states[-1], sc.psi0) >= 1 - 1e-8


def test_rejects_unnormalised_state():
    with pytest.raises(ValueError):
        dy.propagate_schrodinger(np.eye(2), np.array([1.0, 1.0]), [0, 1])


def test_time_dependent_dual_integrators():
    """Periodic two-level drive: adaptive, stroboscopic DOP853 and Magnus agree."""
    sx = np.array([[0, 1], [1, 0]], complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    nu = 2.0
    H = md.TimeDependentHamiltonian(0.5 * sz, [(lambda t: 0.3 * math.cos(nu * t), sx, False)],
                                    period=TP / nu)
    psi0 = np.array([1, 0], complex)
    tg = np.linspace(0, 60, 31)
    a = dy.propagate_schrodinger(H, psi0, tg, method="adaptive", tol=1e-12).full_states()
    f = dy.propagate_schrodinger(H, psi0, tg, method="floquet", tol=1e-12).full_states()
    m = dy.propagate_schrodinger(H, psi0, tg, method="magnus", magnus_steps=256).full_states()
    assert np.abs(a - f).max() <= 1e-8
    assert np.abs(a - m).max() <= 1e-8


@pytest.mark.slow
def test_full_model_dual_integrator_cross_check(params3, drive3):
    """Rotating-frame three-atom model: DOP853 period map vs sixth-order Magnus."""
    lay = SpaceLayout(3, 4)
    psi0 = hb.product_state(lay, "gss")
    H = md.rotating_terms(params3, drive3, lay, periodic_frame=True)
    T = math.pi / (math.sqrt(3) * KAPPA)
    tg = np.linspace(0, T, 41)
    f = dy.propagate_schrodinger(H, psi0, tg, method="floquet").full_states()
    m = dy.propagate_schrodinger(H, psi0, tg, method="magnus", magnus_steps=1024).full_states()
    assert np.abs(f - m).max() <= 1e-7


# -- Lindblad -------------------------------------------------------------------


def _small_cavity_model(gamma):
    p = md.default_params(2, gamma=gamma)
    d = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [TP / 3, 2 * TP / 3])
    lay = SpaceLayout(2, 2)
    return p, d, lay, md.rotating_terms(p, d, lay, periodic_frame=True)


def test_master_closed_limit_matches_pure_state():
    p, d, lay, H = _small_cavity_model(0.0)
    psi0 = hb.product_state(lay, "gs")
    tau = H.period
    tg = tau * np.array([0, 40, 160, 400])
    pure = dy.propagate_schrodinger(H, psi0, tg, method="magnus", magnus_steps=512)
    mixed = dy.propagate_master(H, md.lindblad_dissipators(p, lay), psi0, tg, magnus_steps=512)
    pp = np.abs(pure.full_states()) ** 2
    pm = np.real(np.einsum("tii->ti", mixed.full_states()))
    assert np.abs(pp - pm).max() <= 1e-7


def test_master_trace_and_positivity():
    p, d, lay, H = _small_cavity_model(md.DEFAULT_GAMMA * 50)
    psi0 = hb.product_state(lay, "gs")
    tg = H.period * np.arange(0, 401, 100)
    res = dy.propagate_master(H, md.lindblad_dissipators(p, lay), psi0, tg, magnus_steps=256)
    assert res.diagnostics["max_trace_drift"] <= 1e-8
    assert res.diagnostics["min_eigenvalue"] >= -1e-8
    assert res.diagnostics["max_hermiticity_defect"] <= 1e-10
    assert np.allclose(res.times, tg)


def test_master_constant_h_decay():
    # two-level decay e -> g at rate gamma: population exp(-gamma t)
    gam = 0.7
    L = math.sqrt(gam) * np.array([[0, 1], [0, 0]], complex)
    res = dy.propagate_master(np.zeros((2, 2), complex), [L], np.array([0, 1], complex), [0.0, 1.0, 2.0])
    pe = np.real(res.full_states()[:, 1, 1])
    assert np.allclose(pe, np.exp(-gam * np.array([0, 1, 2])), atol=1e-12)


# -- analytic propagators -----------------------------------------------------------


def test_u3_identity_and_first_hop():
    assert np.allclose(dy.analytic_u3(0.0, KAPPA), np.eye(3), atol=1e-15)
    U = dy.analytic_u3(math.pi / (3 * math.sqrt(3) * KAPPA), KAPPA)
    assert abs(U[1, 0]) ** 2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        dy.analytic_u3(1.0, 0.0)


def test_u3_matches_expm_and_subspace_form(params3, drive3):
    H = fq.effective_spin_hamiltonian(params3, drive3)
    M = dy.subspace_matrix(H, ch.tracked_basis(ch.SCENARIOS["n3"], "g"))
    assert np.abs(M - dy.ring3_subspace_matrix(KAPPA)).max() <= 1e-12
    rng = np.random.default_rng(2)
    for t in rng.uniform(0, 200, 100):
        assert np.abs(dy.analytic_u3(t, KAPPA) - expm(-1j * M * t)).max() <= 1e-10
    ev = np.sort(np.linalg.eigvalsh(M))
    w = 2 * math.sqrt(3) * KAPPA
    assert np.allclose(ev, [-w, 0, w], atol=1e-12)


def test_u5_identity_skip_and_expm():
    k1 = 0.09
    k2 = IDEAL * k1
    assert np.allclose(dy.analytic_u5(0.0, k1, k2), np.eye(5), atol=1e-15)
    w = dy.ring5_frequency(k1)
    U = dy.analytic_u5(TP / (5 * w), k1, k2)
    assert abs(U[2, 0]) ** 2 == pytest.approx(1.0, abs=1e-12)
    M = dy.ring5_subspace_matrix(k1, k2)
    rng = np.random.default_rng(3)
    for t in rng.uniform(0, 500, 100):
        assert np.abs(dy.analytic_u5(t, k1, k2) - expm(-1j * M * t)).max() <= 1e-10
    ev = np.sort(np.linalg.eigvalsh(M))
    assert np.allclose(ev, np.sort([0, w, -w, 3 * w, -3 * w]), atol=1e-12)
    assert w / k1 == pytest.approx(0.3633, abs=1e-4)


def test_u5_rejects_physical_ratio():
    with pytest.raises(ValueError, match="sqrt"):
        dy.analytic_u5(1.0, 0.1, 0.027)


@given(st.floats(0, 300), st.floats(0, 300))
@settings(max_examples=50, deadline=None)
def test_analytic_unitarity_composition_and_row_sums(t1, t2):
    for U in (lambda t: dy.analytic_u3(t, KAPPA), lambda t: dy.analytic_u5(t, 0.1, 0.1 * IDEAL)):
        A, B, C = U(t1), U(t2), U(t1 + t2)
        assert dy.unitarity_defect(A) <= 1e-12
        assert np.abs(A @ B - C).max() <= 1e-10
        assert np.allclose(A.sum(axis=0), 1.0, atol=1e-12)


def test_five_ring_block_factor(params3):
    """The Pauli-operator five-ring block is the literal (i/2) circulant at 4 kappa1, 4 kappa2."""
    p = md.default_params(5)
    d = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [-TP * k / 5 for k in range(1, 6)])
    c = fq.coupling_constants(p, d)
    H = fq.effective_spin_hamiltonian(p, d)
    M = dy.subspace_matrix(H, ch.tracked_basis(ch.SCENARIOS["n5t3"], "g"))
    assert np.abs(M - dy.ring5_subspace_matrix(4 * c.kappa1, 4 * c.kappa2)).max() <= 1e-12
    assert np.abs(M - ch.five_ring_block(c.kappa1, c.kappa2)).max() <= 1e-12
