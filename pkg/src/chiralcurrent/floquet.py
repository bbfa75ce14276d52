"""Harmonic decomposition of the modulated Raman coupling and its
first-order high-frequency effective Hamiltonian.

Sign conventions: ``J_n(-x) = (-1)**n J_n(x)`` and ``J_{-n} = (-1)**n J_n``.
The coupling sums only contain ``J_n**2``, so any sign ambiguity between
``J_n(x)`` and ``J_n(-x)`` drops out of them; the harmonic components carry
the ``(-1)**n`` explicitly and are pinned by the reconstruction test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import hilbert as hb
from .hilbert import SpaceLayout
from .model import DriveProtocol, SystemParams, J0_FIRST_ZERO, _ops

BESSEL_MAX_ARG = 50.0
SMALL_ARG = 1e-4
DEFAULT_TRUNCATION = 40
MAX_TRUNCATION = 200


class ConvergenceError(ArithmeticError):
    pass


def bessel_j_orders(n_max: int, x: float) -> np.ndarray:
    """``[J_0(x), ..., J_{n_max}(x)]`` by Miller's downward recurrence.

    The recurrence starts well above ``max(n_max, |x|)`` from an arbitrary
    seed and is normalised with ``J_0 + 2 sum_k J_2k = 1``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    x = float(x)
    if not abs(x) <= BESSEL_MAX_ARG:
        raise ValueError(f"|x| = {abs(x)} outside the supported range {BESSEL_MAX_ARG}")
    out = np.zeros(n_max + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    ax = abs(x)
    if ax < SMALL_ARG:
        # 2k/x would overflow the recurrence; three ascending-series terms are exact here
        h2 = (ax / 2) ** 2
        lead = 1.0
        for n in range(n_max + 1):
            if n:
                lead *= ax / 2 / n
            out[n] = lead * (1 - h2 / (n + 1) + h2 * h2 / (2 * (n + 1) * (n + 2)))
        if x < 0:
            out[1::2] *= -1
        return out
    start = 2 * ((max(n_max, int(ax)) + 40 + int(math.sqrt(40 * max(n_max, ax, 1.0)))) // 2)
    j_next, j_cur = 0.0, 1e-300
    norm = 0.0
    vals = np.zeros(start + 1)
    vals[start] = j_cur
    for k in range(start, 0, -1):
        j_prev = 2 * k / ax * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        vals[k - 1] = j_cur
        if abs(j_cur) > 1e250:  # rescale to stay finite
            vals[k - 1 :] *= 1e-250
            j_next *= 1e-250
            j_cur *= 1e-250
    norm = vals[0] + 2 * vals[2::2].sum()
    out[:] = vals[: n_max + 1] / norm
    if x < 0:
        out[1::2] *= -1
    return out


def bessel_j(n: int, x: float) -> float:
    """Bessel function of the first kind for integer order; negative n via ``(-1)**n J_|n|``."""
    j = float(bessel_j_orders(abs(n), x)[abs(n)])
    return -j if (n < 0 and n % 2) else j


@dataclass(frozen=True)
class FourierComponent:
    n: int
    H: np.ndarray


def fourier_components(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout,
                       n_max_harmonic: int = 25) -> list[FourierComponent]:
    """``H_I(t) = sum_n H_n exp(i n nu t)`` for the gauged interaction Hamiltonian.

    ``H_n = -sum_k w_k J_n(eps/nu) exp(-i n phi_k) [(-1)**n a s_k^sg + a^dag s_k^gs]``.
    """
    if np.max(np.abs(params.delta), initial=0.0) > 1e-9:
        raise ValueError(
            f"harmonic expansion needs delta_k = 0 on every site, got {np.round(params.delta, 6)}"
        )
    if not drive.is_uniform:
        raise ValueError("harmonic expansion needs a single drive frequency")
    a, sig, _ = _ops(layout)
    J = bessel_j_orders(n_max_harmonic, drive.ratio)
    w = params.raman_weights
    lower = [a @ sig["s", "g"][k] for k in range(params.n_atoms)]
    comps = []
    for n in range(-n_max_harmonic, n_max_harmonic + 1):
        jn = J[abs(n)] * (-1) ** (n % 2 if n < 0 else 0)
        H = np.zeros((layout.dim, layout.dim), dtype=complex)
        for k in range(params.n_atoms):
            c = -w[k] * jn * np.exp(-1j * n * drive.phi[k])
            H += c * ((-1) ** (n % 2) * lower[k] + lower[k].conj().T)
        comps.append(FourierComponent(n, H))
    return comps


def reconstruct(components: Sequence[FourierComponent], nu: float, t: float) -> np.ndarray:
    return sum(c.H * np.exp(1j * c.n * nu * t) for c in components)


def effective_hamiltonian_hf(components: Sequence[FourierComponent], nu: float) -> np.ndarray:
    """``H_0 + sum_{n>=1} [H_n, H_-n] / (n nu)``."""
    by_n = {c.n: c.H for c in components}
    H = by_n[0].copy()
    for n in sorted(k for k in by_n if k > 0):
        if -n in by_n:
            H += hb.commutator(by_n[n], by_n[-n]) / (n * nu)
    return H


def pair_couplings(weights, phases, nu: float, ratio: float,
                   n_trunc: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """Antisymmetric matrix ``D[l, k] = w_l w_k / nu * sum_n J_n**2 sin(n(phi_l - phi_k)) / n``."""
    w = np.asarray(weights, dtype=float)
    phi = np.asarray(phases, dtype=float)
    J = bessel_j_orders(n_trunc, ratio)
    n = np.arange(1, n_trunc + 1)
    dphi = phi[:, None] - phi[None, :]
    s = np.einsum("n,lkn->lk", J[1:] ** 2 / n, np.sin(dphi[..., None] * n))
    return np.outer(w, w) / nu * s


def dmi_operator(l: int, k: int, layout: SpaceLayout) -> np.ndarray:
    """``sigma_l^x sigma_k^y - sigma_l^y sigma_k^x`` (the z-component of ``sigma_l x sigma_k``)."""
    X = [hb.ground_pauli(i, "x", layout) for i in (l, k)]
    Y = [hb.ground_pauli(i, "y", layout) for i in (l, k)]
    return X[0] @ Y[1] - Y[0] @ X[1]


def dmi_spin_hamiltonian(weights, phases, nu: float, ratio: float,
                         n_trunc: int = DEFAULT_TRUNCATION,
                         layout: SpaceLayout | None = None) -> np.ndarray:
    """z-DMI spin Hamiltonian ``sum_{k>l} D_lk (s_l^x s_k^y - s_l^y s_k^x)`` on ``2**N`` spins."""
    n = len(weights)
    if abs(ratio - J0_FIRST_ZERO) > 1e-3:
        warnings.warn(f"drive ratio {ratio} is not at the first zero of J0; the static "
                      "Raman term is ignored here", stacklevel=2)
    layout = layout or SpaceLayout(n, None, 2)
    D = pair_couplings(weights, phases, nu, ratio, n_trunc)
    H = np.zeros((layout.dim, layout.dim), dtype=complex)
    for l in range(n):
        for k in range(l + 1, n):
            if D[l, k] != 0.0:
                H += D[l, k] * dmi_operator(l, k, layout)
    return H


def effective_spin_hamiltonian(params: SystemParams, drive: DriveProtocol,
                               n_trunc: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """z-DMI Hamiltonian with the weights and phases of an actual parameter set."""
    return dmi_spin_hamiltonian(params.raman_weights, drive.phi, drive.frequency, drive.ratio, n_trunc)


@dataclass(frozen=True)
class EffectiveCouplings:
    kappa: float
    kappa1: float
    kappa2: float
    n_trunc: int

    @property
    def ratio(self) -> float:
        return self.kappa2 / self.kappa1

    @property
    def period(self) -> float:
        """``pi / (sqrt(3) kappa)``: return time of the three-state current."""
        return math.pi / (math.sqrt(3) * self.kappa)


def _bessel_sum(J2_over_n: np.ndarray, angle: float) -> float:
    n = np.arange(1, len(J2_over_n) + 1)
    return float(np.sum(J2_over_n * np.sin(angle * n)))


def coupling_constants(params: SystemParams, drive: DriveProtocol,
                       n_trunc: int = DEFAULT_TRUNCATION, rel_tol: float = 1e-12) -> EffectiveCouplings:
    """Ring couplings ``kappa`` (phase step 2pi/3), ``kappa1``, ``kappa2`` (steps 2pi/5, 4pi/5).

    Uses the largest-Omega site as the uniform reference. The truncation is
    raised until the magnitude bound ``J_n**2 / n`` of the last term is below
    ``rel_tol`` of each running total.
    """
    k = int(np.argmax(params.Omega))
    w2 = params.raman_weights[k] ** 2
    ratio, nu = drive.ratio, drive.frequency
    for n in range(n_trunc, MAX_TRUNCATION + 1):
        J = bessel_j_orders(n, ratio)
        J2n = J[1:] ** 2 / np.arange(1, n + 1)
        sums = [_bessel_sum(J2n, a) for a in (2 * math.pi / 3, 2 * math.pi / 5, 4 * math.pi / 5)]
        bound = J2n[-1]
        if all(bound <= rel_tol * abs(s) for s in sums if s != 0.0) or w2 == 0.0:
            kap, k1, k2 = (float(w2 / nu * s) for s in sums)
            return EffectiveCouplings(kap, k1, k2, n)
    raise ConvergenceError(f"coupling sums not converged by n = {MAX_TRUNCATION} (ratio {ratio})")


IDEAL_FIVE_RING_RATIO = math.sqrt(5) - 2


def ring_dmi_hamiltonian(n_atoms: int, kappas: Sequence[float]) -> np.ndarray:
    """``sum_d kappas[d-1] sum_k e_z . (sigma_k x sigma_{k+d})`` on a periodic ring."""
    layout = SpaceLayout(n_atoms, None, 2)
    H = np.zeros((layout.dim, layout.dim), dtype=complex)
    for d, kap in enumerate(kappas, start=1):
        for k in range(n_atoms):
            H += kap * dmi_operator(k, (k + d) % n_atoms, layout)
    return H
