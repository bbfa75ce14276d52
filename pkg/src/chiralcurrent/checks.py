"""Fast invariant suite behind ``chiralcurrent check``.

Each check compares a library result with an independent route (power
series, scipy Bessel functions, matrix exponentials, direct construction).
``mutate="kappa"`` scales the three-state coupling by 2% before the
comparisons so the suite's sensitivity can be confirmed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm
from scipy.special import jv

from . import chirality as ch
from . import dynamics as dy
from . import floquet as fq
from . import hilbert as hb
from . import model as md
from . import toggling as tg

PUBLISHED_PERIOD_US = 41.79
MUTATION_SCALE = 1.02


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def power_series_j(n: int, x: float, terms: int = 60) -> float:
    """``sum_m (-1)^m (x/2)^(2m+n) / (m! (m+n)!)``, accurate for small ``|x|``."""
    return float(sum((-1) ** m * (x / 2) ** (2 * m + n) / (math.factorial(m) * math.factorial(m + n))
                     for m in range(terms)))


def _independent_kappa(params: md.SystemParams, drive: md.DriveProtocol, angle: float) -> float:
    n = np.arange(1, 81)
    w = params.raman_weights.max()
    return float(w**2 / drive.frequency * np.sum(jv(n, drive.ratio) ** 2 / n * np.sin(angle * n)))


def run_checks(mutate: str | None = None, seed: int = 7) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out: list[CheckResult] = []

    def add(name, ok, detail):
        out.append(CheckResult(name, bool(ok), detail))

    # Bessel values
    r0 = fq.bessel_j(0, 2.4048)
    add("bessel J0(2.4048) residual", abs(r0) < 1e-4, f"J0(2.4048) = {r0:.3e}")
    err = max(abs(fq.bessel_j(n, x) - power_series_j(n, x)) for n in range(6) for x in (0.3, 1.3, 2.4048, 4.0))
    add("bessel vs power series", err < 1e-13, f"max error {err:.2e}")
    err = max(abs(fq.bessel_j(n, x) - jv(n, x)) for n in (0, 1, 7, 20) for x in (-12.5, 0.9, 33.0))
    add("bessel vs scipy.special.jv", err < 1e-12, f"max error {err:.2e}")

    # couplings
    params = md.default_params(3)
    drive = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [2 * math.pi * k / 3 for k in (1, 2, 3)])
    c = fq.coupling_constants(params, drive)
    if mutate == "kappa":
        c = replace(c, kappa=c.kappa * MUTATION_SCALE)
    rel = abs(c.period / PUBLISHED_PERIOD_US - 1)
    add("period pi/(sqrt3 kappa) near 41.79 us", rel < 5e-3, f"T = {c.period:.5f} us ({rel:.2%} off)")
    ind = _independent_kappa(params, drive, 2 * math.pi / 3)
    add("kappa vs scipy Bessel sum", abs(c.kappa / ind - 1) < 1e-10, f"{c.kappa:.12g} vs {ind:.12g}")
    add("kappa2/kappa1 near 0.2702", abs(c.ratio - 0.2702) < 1e-3, f"{c.ratio:.6f}")

    # Hermiticity of every model tier
    p2 = md.default_params(2)
    d2 = md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [0.4, 2.1])
    lay3, lay2 = hb.SpaceLayout(2, 2, 3), hb.SpaceLayout(2, 2, 2)
    t = float(rng.uniform(0, 10))
    mats = {
        "lab": md.lab_hamiltonian(p2, d2, lay3, t),
        "rotating": md.rotating_hamiltonian(p2, d2, lay3, t),
        "projected": md.projected_hamiltonian(p2, d2, lay2, t),
        "interaction": md.interaction_hamiltonian(p2, d2, lay2, t),
    }
    bad = [k for k, H in mats.items() if not hb.is_hermitian(H, 1e-9 * max(1.0, np.abs(H).max()))]
    add("Hamiltonians Hermitian", not bad, "all tiers" if not bad else f"not Hermitian: {bad}")

    # effective model vs closed-form three-state propagator
    H_eff = fq.effective_spin_hamiltonian(params, drive)
    basis = ch.tracked_basis(ch.SCENARIOS["n3"], "g")
    M = dy.subspace_matrix(H_eff, basis)
    err = max(np.abs(dy.analytic_u3(s, c.kappa) - expm(-1j * M * s)).max() for s in rng.uniform(0, 100, 10))
    add("analytic U3 vs expm of effective block", err < 1e-10, f"max error {err:.2e}")
    U = dy.analytic_u3(17.3, c.kappa)
    add("analytic U3 unitary", dy.unitarity_defect(U) < 1e-12, f"defect {dy.unitarity_defect(U):.1e}")

    k1 = 0.1
    k2 = fq.IDEAL_FIVE_RING_RATIO * k1
    M5 = dy.ring5_subspace_matrix(k1, k2)
    err = max(np.abs(dy.analytic_u5(s, k1, k2) - expm(-1j * M5 * s)).max() for s in rng.uniform(0, 200, 10))
    add("analytic U5 vs expm at ideal ratio", err < 1e-10, f"max error {err:.2e}")

    # adiabatic elimination
    lay = hb.SpaceLayout(2, 1, 3)
    P, Q = md.elimination_projectors(lay)
    D = md.detuning_operator(p2, lay)
    err = 0.0
    for s in rng.uniform(0, 5, 3):
        H = md.rotating_hamiltonian(p2, d2, lay, s)
        err = max(err, np.abs(md.adiabatic_eliminate(H, P, Q, D) - P @ md.projected_hamiltonian(p2, d2, lay, s) @ P).max())
    add("elimination vs closed form", err < 1e-10, f"max entry error {err:.2e}")

    # high-frequency expansion vs DMI construction
    lay = hb.SpaceLayout(3, 1, 2)
    comps = fq.fourier_components(params, drive, lay)
    Heff = fq.effective_hamiltonian_hf(comps, drive.frequency)
    idx = hb.ground_vacuum_indices(lay)
    err = np.abs(Heff[np.ix_(idx, idx)] - H_eff).max()
    add("Floquet HF limit equals DMI Hamiltonian", err < 1e-10, f"max error {err:.2e}")
    err = np.abs(fq.reconstruct(comps, drive.frequency, 0.123)
                 - md.interaction_hamiltonian(params, drive, lay, 0.123, gauge_beta=True)).max()
    add("harmonic components re-sum", err < 1e-8, f"max error {err:.2e}")

    # toggling frames
    seq = tg.dmi_sequence(H_eff, 1.0)
    add("pulse closure up to phase", seq.closure_residual() < 1e-12, f"residual {seq.closure_residual():.1e}")
    lay1 = hb.SpaceLayout(1, None, 2)
    Pp = tg.frame_pulse(0, lay1)
    cyc = {"x": "y", "y": "z", "z": "x"}
    err = max(np.abs(Pp.conj().T @ hb.local_pauli(a, 2) @ Pp - hb.local_pauli(b, 2)).max() for a, b in cyc.items())
    add("conjugation cycle x->y->z->x", err < 1e-12, f"max error {err:.2e}")
    return out
