import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import jv

from chiralcurrent import floquet as fq
from chiralcurrent import hilbert as hb
from chiralcurrent import model as md
from chiralcurrent.hilbert import SpaceLayout

TP = 2 * math.pi

# frozen from an independent scipy.special.jv summation (199 terms) at the default parameters
KAPPA = 0.04341659518874279
KAPPA1 = 0.08549009525620256
KAPPA2 = 0.02310464687267627


def series_j(n, x, terms=60):
    """Ascending power series, the test-side oracle for the recurrence."""
    return sum((-1) ** m * (x / 2) ** (2 * m + n) / (math.factorial(m) * math.factorial(m + n))
               for m in range(terms))


# -- Bessel ---------------------------------------------------------------------


def test_bessel_spot_values():
    assert abs(fq.bessel_j(0, 2.404826)) < 1e-6
    assert fq.bessel_j(1, 2.4048) == pytest.approx(0.519147, abs=1e-5)
    assert fq.bessel_j(1, 2.4048) == pytest.approx(series_j(1, 2.4048), abs=1e-14)
    assert fq.bessel_j(0, 0.0) == 1.0
    assert all(fq.bessel_j(n, 0.0) == 0.0 for n in range(1, 6))


@given(st.integers(0, 12), st.floats(-6.0, 6.0))
@settings(max_examples=200, deadline=None)
def test_bessel_vs_power_series(n, x):
    assert abs(fq.bessel_j(n, x) - series_j(n, x)) <= 1e-12


@given(st.integers(0, 60), st.floats(-50.0, 50.0))
@settings(max_examples=200, deadline=None)
def test_bessel_vs_scipy_large_argument(n, x):
    # the power series cancels catastrophically at large |x|; scipy is the oracle there
    assert abs(fq.bessel_j(n, x) - jv(n, x)) <= 1e-12


def test_bessel_tiny_arguments():
    # the recurrence factor 2k/x overflows here; a short ascending series takes over
    for x in (5e-324, 1e-300, 1e-126, 3e-5, 9.99e-5, 1.01e-4):
        for n in (0, 1, 2, 7):
            assert fq.bessel_j(n, x) == pytest.approx(jv(n, x), rel=1e-12, abs=1e-300)
            assert fq.bessel_j(n, -x) == pytest.approx(jv(n, -x), rel=1e-12, abs=1e-300)


def test_bessel_symmetries():
    for n in range(6):
        assert fq.bessel_j(-n, 1.7) == pytest.approx((-1) ** n * fq.bessel_j(n, 1.7), abs=1e-15)
        assert fq.bessel_j(n, -1.7) == pytest.approx((-1) ** n * fq.bessel_j(n, 1.7), abs=1e-15)


def test_bessel_range():
    with pytest.raises(ValueError):
        fq.bessel_j(0, 50.5)
    with pytest.raises(ValueError):
        fq.bessel_j_orders(-1, 1.0)


# -- Fourier components ---------------------------------------------------------


@pytest.fixture
def setup3(params3, drive3):
    return params3, drive3, SpaceLayout(3, 2, 2)


def test_reconstruction(setup3):
    p, d, lay = setup3
    comps = fq.fourier_components(p, d, lay, 25)
    rng = np.random.default_rng(4)
    for t in rng.uniform(0, 100, 20):
        H = md.interaction_hamiltonian(p, d, lay, t, gauge_beta=True)
        assert np.abs(fq.reconstruct(comps, d.frequency, t) - H).max() <= 1e-8


def test_components_adjoint_pairs(setup3):
    p, d, lay = setup3
    by_n = {c.n: c.H for c in fq.fourier_components(p, d, lay, 10)}
    for n in range(1, 11):
        assert np.abs(by_n[-n] - by_n[n].conj().T).max() <= 1e-14


def test_static_component_vanishes(setup3):
    p, d, lay = setup3
    by_n = {c.n: c.H for c in fq.fourier_components(p, d, lay, 3)}
    assert np.linalg.norm(by_n[0]) < 1e-4 * np.linalg.norm(by_n[1])


def test_phase_periodicity(setup3):
    p, d, lay = setup3
    d2 = md.DriveProtocol.uniform(d.ratio, d.frequency, np.asarray(d.phi) + TP)
    a = fq.fourier_components(p, d, lay, 5)
    b = fq.fourier_components(p, d2, lay, 5)
    assert all(np.abs(x.H - y.H).max() < 1e-12 for x, y in zip(a, b))


def test_components_require_resonance():
    pattern = [1, math.sqrt(0.5), math.sqrt(0.5), 1]
    p = md.solve_delta_prime(md.SystemParams.from_detunings(4, TP * 8100, TP * 405 * np.array(pattern), TP * 90),
                             "common")
    d = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [0.0] * 4)
    with pytest.raises(ValueError, match="delta_k"):
        fq.fourier_components(p, d, SpaceLayout(4, 1, 2))


# -- effective Hamiltonian ------------------------------------------------------


def test_hf_limit_equals_dmi(setup3):
    p, d, lay = setup3
    Heff = fq.effective_hamiltonian_hf(fq.fourier_components(p, d, lay), d.frequency)
    assert hb.is_hermitian(Heff, 1e-12)
    idx = hb.ground_vacuum_indices(lay)
    H_dmi = fq.effective_spin_hamiltonian(p, d)
    assert np.abs(Heff[np.ix_(idx, idx)] - H_dmi).max() <= 1e-10


def test_hf_single_atom_has_no_spin_coupling():
    p = md.default_params(1)
    d = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [0.3])
    lay = SpaceLayout(1, 1, 2)
    Heff = fq.effective_hamiltonian_hf(fq.fourier_components(p, d, lay), d.frequency)
    idx = hb.ground_vacuum_indices(lay)
    block = Heff[np.ix_(idx, idx)]
    assert np.abs(block - np.diag(np.diag(block))).max() < 1e-15


def test_equal_phases_give_no_dmi():
    H = fq.dmi_spin_hamiltonian([1.0, 2.0, 0.5], [0.7] * 3, md.DEFAULT_NU, 2.4048)
    assert np.abs(H).max() == 0.0


def test_three_ring_form(params3, drive3):
    H = fq.effective_spin_hamiltonian(params3, drive3)
    lay = SpaceLayout(3, None, 2)
    ring = sum(fq.dmi_operator(k, (k + 1) % 3, lay) for k in range(3))
    assert np.abs(H - (-KAPPA) * ring).max() <= 1e-12


def test_five_ring_form(params3):
    p = md.default_params(5)
    d = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [-TP * k / 5 for k in range(1, 6)])
    H = fq.effective_spin_hamiltonian(p, d)
    lay = SpaceLayout(5, None, 2)
    o1 = sum(fq.dmi_operator(k, (k + 1) % 5, lay) for k in range(5))
    o2 = sum(fq.dmi_operator(k, (k + 2) % 5, lay) for k in range(5))
    assert np.abs(H - (KAPPA1 * o1 + KAPPA2 * o2)).max() <= 1e-12
    assert np.abs(fq.ring_dmi_hamiltonian(5, [KAPPA1, KAPPA2]) - H).max() <= 1e-12


def test_off_zero_warning():
    with pytest.warns(UserWarning, match="first zero"):
        fq.dmi_spin_hamiltonian([1.0, 1.0], [0.0, 1.0], 10.0, 1.0)


@given(st.lists(st.floats(0.1, 3.0), min_size=3, max_size=4), st.lists(st.floats(0, TP), min_size=4, max_size=4))
@settings(max_examples=30, deadline=None)
def test_pair_couplings_antisymmetric_and_swap(weights, phases):
    n = len(weights)
    D = fq.pair_couplings(weights, phases[:n], md.DEFAULT_NU, 2.4048)
    assert np.abs(D + D.T).max() <= 1e-15
    perm = [1, 0] + list(range(2, n))
    Dp = fq.pair_couplings(np.asarray(weights)[perm], np.asarray(phases[:n])[perm], md.DEFAULT_NU, 2.4048)
    assert Dp[0, 1] == pytest.approx(-D[0, 1], abs=1e-15)


@given(st.lists(st.floats(0, TP), min_size=3, max_size=4))
@settings(max_examples=30, deadline=None)
def test_global_spin_flip_negates(phases):
    n = len(phases)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        H = fq.dmi_spin_hamiltonian([1.0] * n, phases, 10.0, 2.4048)
    lay = SpaceLayout(n, None, 2)
    X = np.eye(lay.dim, dtype=complex)
    for k in range(n):
        X = X @ hb.ground_pauli(k, "x", lay)
    assert np.abs(X @ H @ X + H).max() <= 1e-14
    ev = np.linalg.eigvalsh(H)
    assert np.allclose(np.sort(ev), np.sort(-ev), atol=1e-12)


def test_excitation_number_conserved(params3, drive3):
    H = fq.effective_spin_hamiltonian(params3, drive3)
    lay = SpaceLayout(3, None, 2)
    Ng = sum(hb.atomic_transition(k, "g", "g", lay) for k in range(3))
    assert np.abs(hb.commutator(H, Ng)).max() <= 1e-15


# -- coupling constants ----------------------------------------------------------


def test_coupling_constants_frozen(params3, drive3):
    c = fq.coupling_constants(params3, drive3)
    assert c.kappa == pytest.approx(KAPPA, rel=1e-12)
    assert c.kappa1 == pytest.approx(KAPPA1, rel=1e-12)
    assert c.kappa2 == pytest.approx(KAPPA2, rel=1e-12)
    assert c.period == pytest.approx(41.79, rel=5e-3)
    assert c.ratio == pytest.approx(0.2702, abs=1e-3)
    J = fq.bessel_j_orders(c.n_trunc, 2.4048)
    assert J[-1] ** 2 / c.n_trunc <= 1e-12 * c.kappa2 * md.DEFAULT_NU / params3.raman_weights[0] ** 2


def test_truncation_stability(params3, drive3):
    a = fq.coupling_constants(params3, drive3, n_trunc=20)
    b = fq.coupling_constants(params3, drive3, n_trunc=50)
    for x, y in ((a.kappa, b.kappa), (a.kappa1, b.kappa1), (a.kappa2, b.kappa2)):
        assert abs(x / y - 1) < 1e-10


def test_zero_rabi_gives_zero_coupling(drive3):
    p = md.SystemParams.from_detunings(3, TP * 8100, 0.0, TP * 90)
    c = fq.coupling_constants(p, drive3)
    assert c.kappa == 0.0


def test_ideal_five_ring_ratio():
    assert fq.IDEAL_FIVE_RING_RATIO == pytest.approx(0.2360679774997897, abs=1e-15)
    assert fq.IDEAL_FIVE_RING_RATIO**2 + 4 * fq.IDEAL_FIVE_RING_RATIO - 1 == pytest.approx(0.0, abs=1e-15)
