"""Hamiltonians of the reduction chain and the atomic dissipators.

Units: time in microseconds, every frequency in rad/us (so "2pi x 405 MHz"
is ``2*pi*405``).

The chain is

    lab frame  ->  rotating frame  ->  adiabatic elimination of |e>
               ->  interaction picture (drive and light shifts removed)
               ->  gauge removal of the constant drive phases beta_k

Each stage has a builder returning a :class:`TimeDependentHamiltonian`, i.e.
a static part plus a few scalar-modulated terms. The ``*_hamiltonian``
functions evaluate a stage at a single time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import hilbert as hb
from .hilbert import SpaceLayout

TWO_PI = 2.0 * math.pi
J0_FIRST_ZERO = 2.404825557695773


class EliminationError(ArithmeticError):
    """The fast block cannot be inverted on its range."""


class InfeasibleDetuning(ValueError):
    pass


def _per_site(value, n: int, name: str) -> tuple[float, ...]:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be scalar or have {n} entries")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the atom-cavity system (rad/us).

    Detunings are stored directly; the absolute laser and cavity frequencies
    are derived from them. Going the other way would subtract numbers of
    order 4e8 rad/us and lose about eight digits of every detuning.
    ``delta_k = Delta' - Delta_k - Omega_k**2 / (4 Delta_k)`` is stored per site.
    """

    Delta: tuple[float, ...]
    Delta_prime: float
    Omega: tuple[float, ...]
    g: float
    gamma: float = 0.0
    omega_e: float = TWO_PI * 61.171e6
    omega_g: float = TWO_PI * 1087.773
    dispersive: bool = True
    delta: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        n = len(self.Delta)
        object.__setattr__(self, "Delta", tuple(float(x) for x in self.Delta))
        object.__setattr__(self, "Omega", tuple(float(x) for x in self.Omega))
        if len(self.Omega) != n:
            raise ValueError("Delta and Omega must have one entry per site")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        D = np.asarray(self.Delta)
        delta = self.Delta_prime - D - np.asarray(self.Omega) ** 2 / (4.0 * D)
        object.__setattr__(self, "delta", tuple(float(x) for x in delta))
        if self.dispersive:
            bad = [k for k in range(n) if abs(D[k]) < 10 * abs(self.Omega[k])]
            if bad or abs(self.Delta_prime) < 10 * abs(self.g):
                raise ValueError(
                    "dispersive regime requires |Delta_k| >= 10 Omega_k and "
                    f"|Delta'| >= 10 g (failing sites: {bad})"
                )

    @property
    def n_atoms(self) -> int:
        return len(self.Delta)

    @property
    def omega_L(self) -> np.ndarray:
        return self.omega_e - np.asarray(self.Delta)

    @property
    def omega_c(self) -> float:
        return self.omega_e - self.omega_g - self.Delta_prime

    @property
    def raman_weights(self) -> np.ndarray:
        """``Omega_k g / (2 Delta_k)``: the cavity-assisted Raman amplitude per site."""
        return np.asarray(self.Omega) * self.g / (2.0 * np.asarray(self.Delta))

    @property
    def light_shift(self) -> np.ndarray:
        """``Omega_k**2 / (4 Delta_k)``, the pump-induced shift of ``|s>``."""
        return np.asarray(self.Omega) ** 2 / (4.0 * np.asarray(self.Delta))

    @property
    def photon_stark(self) -> np.ndarray:
        """``g**2 / Delta_k``, dispersive shift of ``|g>`` per cavity photon."""
        return self.g**2 / np.asarray(self.Delta)

    @classmethod
    def from_detunings(cls, n_atoms: int, Delta, Omega, g: float,
                       Delta_prime: float | None = None, **kw) -> "SystemParams":
        """Broadcast scalar detunings and Rabi frequencies over the sites.

        ``Delta_prime`` defaults to the value making ``delta_k = 0`` on the
        site(s) with the largest Rabi frequency.
        """
        D = np.asarray(_per_site(Delta, n_atoms, "Delta"))
        Om = np.asarray(_per_site(Omega, n_atoms, "Omega"))
        if Delta_prime is None:
            k = int(np.argmax(Om))
            Delta_prime = D[k] + Om[k] ** 2 / (4 * D[k])
        return cls(tuple(D), float(Delta_prime), tuple(Om), g, **kw)

    @classmethod
    def from_frequencies(cls, omega_c: float, omega_e: float, omega_g: float, omega_L, Omega,
                         g: float, **kw) -> "SystemParams":
        """Build from absolute frequencies (suffers the cancellation noted above)."""
        oL = np.atleast_1d(np.asarray(omega_L, dtype=float))
        Om = _per_site(Omega, len(oL), "Omega")
        return cls(tuple(omega_e - oL), omega_e - omega_g - omega_c, Om, g,
                   omega_e=omega_e, omega_g=omega_g, **kw)


@dataclass(frozen=True)
class DriveProtocol:
    """Ground-level modulation ``omega_g(t) = omega_g + eps_k cos(nu_k t - phi_k)``."""

    eps: tuple[float, ...]
    nu: tuple[float, ...]
    phi: tuple[float, ...]

    def __post_init__(self):
        if not len(self.eps) == len(self.nu) == len(self.phi):
            raise ValueError("eps, nu, phi must have one entry per site")

    @classmethod
    def uniform(cls, ratio: float, nu: float, phases: Sequence[float]) -> "DriveProtocol":
        n = len(phases)
        return cls((ratio * nu,) * n, (float(nu),) * n, tuple(float(p) for p in phases))

    @property
    def n_atoms(self) -> int:
        return len(self.phi)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.eps)) == 1 and len(set(self.nu)) == 1

    def _require_uniform(self):
        if not self.is_uniform:
            raise ValueError("operation needs uniform drive amplitude and frequency")

    @property
    def ratio(self) -> float:
        self._require_uniform()
        return self.eps[0] / self.nu[0]

    @property
    def frequency(self) -> float:
        self._require_uniform()
        return self.nu[0]

    @property
    def at_j0_zero(self) -> bool:
        return self.is_uniform and abs(self.ratio - J0_FIRST_ZERO) < 1e-3

    @property
    def beta(self) -> np.ndarray:
        """Constant phase offsets ``(eps/nu) sin(phi_k)``, removed by the gauge."""
        return np.asarray(self.eps) / np.asarray(self.nu) * np.sin(self.phi)

    def detuning_integral(self, t: float) -> np.ndarray:
        """``int_0^t eps_k cos(nu_k t' - phi_k) dt'`` per site."""
        eps, nu, phi = map(np.asarray, (self.eps, self.nu, self.phi))
        return eps / nu * (np.sin(nu * t - phi) + np.sin(phi))


def default_params(n_atoms: int = 3, omega_pattern: Sequence[float] | None = None,
                   gamma: float = 0.0) -> SystemParams:
    """Rb-87 numbers: Delta = 2pi 8.1 GHz, Omega = 2pi 405 MHz, g = 2pi 90 MHz.

    ``omega_pattern`` scales Omega per site (e.g. ``[1, 2**-0.5, 2**-0.5, 1]``).
    """
    pattern = np.ones(n_atoms) if omega_pattern is None else np.asarray(omega_pattern, float)
    return SystemParams.from_detunings(
        n_atoms, Delta=TWO_PI * 8100.0, Omega=TWO_PI * 405.0 * pattern, g=TWO_PI * 90.0,
        gamma=gamma,
    )


DEFAULT_NU = TWO_PI * 112.5
DEFAULT_GAMMA = TWO_PI * 0.005


def solve_delta_prime(params: SystemParams, mode: str = "exact",
                      Delta_prime: float | None = None) -> SystemParams:
    """Tune detunings so the Raman transitions are resonant.

    ``mode="exact"`` keeps ``Delta'`` and picks a per-site ``Delta_k`` (larger
    root of ``D**2 - Delta' D + Omega_k**2/4 = 0``) so every ``delta_k = 0``.
    ``mode="common"`` keeps a single ``Delta`` for all sites and leaves the
    residual ``delta_k`` in ``params.delta``.
    """
    Dp = params.Delta_prime if Delta_prime is None else float(Delta_prime)
    Om = np.asarray(params.Omega)
    if mode == "exact":
        disc = Dp**2 - Om**2
        if np.any(disc < 0):
            raise InfeasibleDetuning(f"Delta'^2 < Omega_k^2 on sites {np.flatnonzero(disc < 0)}")
        D = (Dp + np.sign(Dp) * np.sqrt(disc)) / 2.0
    elif mode == "common":
        D = np.full(params.n_atoms, float(params.Delta[int(np.argmax(Om))]))
    else:
        raise ValueError(f"unknown detuning mode {mode!r}")
    return replace(params, Delta=tuple(D), Delta_prime=Dp)


def nu_for_ratio(params: SystemParams, ratio: float) -> float:
    """Drive frequency with ``nu / (Omega g / |Delta|) = ratio`` (largest-Omega site)."""
    k = int(np.argmax(params.Omega))
    return ratio * params.Omega[k] * params.g / abs(params.Delta[k])


# -- time-dependent operators -------------------------------------------------


class TimeDependentHamiltonian:
    """``H(t) = H0 + sum_j [c_j(t) A_j + conj(c_j(t)) A_j^dag]`` or real-coefficient terms.

    ``terms`` holds ``(coefficient_fn, A, hermitian_pair)``. With
    ``hermitian_pair`` the conjugate partner is added automatically.
    """

    def __init__(self, static: np.ndarray,
                 terms: Sequence[tuple[Callable[[float], complex], np.ndarray, bool]] = (),
                 period: float | None = None):
        self.static = np.asarray(static, dtype=complex)
        self.terms = [(f, np.asarray(A, dtype=complex), bool(pair)) for f, A, pair in terms]
        self.period = period

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        H = self.static.copy()
        for f, A, pair in self.terms:
            c = f(t)
            if c == 0:
                continue
            H += c * A
            if pair:
                H += np.conj(c) * A.conj().T
        return H

    def restrict(self, idx) -> "TimeDependentHamiltonian":
        ix = np.ix_(idx, idx)
        return TimeDependentHamiltonian(
            self.static[ix], [(f, A[ix], p) for f, A, p in self.terms], self.period
        )

    def __add__(self, other: "TimeDependentHamiltonian") -> "TimeDependentHamiltonian":
        return TimeDependentHamiltonian(self.static + other.static, self.terms + other.terms,
                                        self.period if self.period == other.period else None)


@lru_cache(maxsize=32)
def _ops(layout: SpaceLayout):
    """Cached embedded operators for a layout."""
    n = layout.n_atoms
    a = hb.cavity_annihilation(layout) if layout.has_cavity else None
    sig = {
        (x, y): [hb.atomic_transition(k, x, y, layout) for k in range(n)]
        for x in hb.LEVELS[: layout.levels]
        for y in hb.LEVELS[: layout.levels]
    }
    num = hb.cavity_number(layout) if layout.has_cavity else None
    return a, sig, num


def _require(layout: SpaceLayout, params_n: int, *, cavity=True, excited=True):
    if layout.n_atoms != params_n:
        raise ValueError(f"layout has {layout.n_atoms} atoms, parameters have {params_n}")
    if cavity and not layout.has_cavity:
        raise ValueError("this Hamiltonian needs a cavity factor in the layout")
    if excited and layout.levels != 3:
        raise ValueError("this Hamiltonian needs the excited level (levels=3)")


def _cos_drive(eps, nu, phi):
    return lambda t: eps * math.cos(nu * t - phi)


def _phase(rate, scale=1.0):
    return lambda t: scale * complex(math.cos(rate * t), math.sin(rate * t))


def _longdouble_phase(rate, scale=1.0):
    # optical carriers (~4e8 rad/us) lose all phase digits in float64 at t ~ 100 us
    r = np.longdouble(rate)
    two_pi = 2 * np.pi * np.longdouble(1)

    def f(t):
        arg = float(np.fmod(r * np.longdouble(t), two_pi))
        return scale * complex(math.cos(arg), math.sin(arg))

    return f


def lab_terms(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout) -> TimeDependentHamiltonian:
    _require(layout, params.n_atoms)
    a, sig, num = _ops(layout)
    H0 = params.omega_c * num
    terms = []
    for k in range(params.n_atoms):
        H0 = H0 + params.omega_e * sig["e", "e"][k] + params.omega_g * sig["g", "g"][k]
        H0 = H0 + params.g * (a @ sig["e", "g"][k]) + params.g * (a @ sig["e", "g"][k]).conj().T
        terms.append((_cos_drive(drive.eps[k], drive.nu[k], drive.phi[k]), sig["g", "g"][k], False))
        terms.append((_longdouble_phase(params.omega_L[k], params.Omega[k] / 2), sig["s", "e"][k], True))
    return TimeDependentHamiltonian(H0, terms)


def lab_hamiltonian(params, drive, layout, t: float) -> np.ndarray:
    """``H_C + H_A(t) + H_LM + H_P(t)`` in the laboratory frame."""
    return lab_terms(params, drive, layout)(t)


def rotating_frame_unitary(params: SystemParams, layout: SpaceLayout, t: float) -> np.ndarray:
    """``exp(-i sum_k (omega_L^k s^ee + omega_g s^gg) t) exp(-i omega_c a^dag a t)`` (diagonal)."""
    _require(layout, params.n_atoms)
    a, sig, num = _ops(layout)
    gen = params.omega_c * num
    for k in range(params.n_atoms):
        gen = gen + params.omega_L[k] * sig["e", "e"][k] + params.omega_g * sig["g", "g"][k]
    phase = np.fmod(np.diag(gen).real.astype(np.longdouble) * np.longdouble(t), 2 * np.pi)
    return np.diag(np.exp(-1j * phase.astype(float)))


def rotating_terms(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout,
                   periodic_frame: bool = False) -> TimeDependentHamiltonian:
    """Rotating-frame Hamiltonian.

    With ``periodic_frame`` the cavity phases ``exp(i(Delta'-Delta_k)t)`` are
    moved onto ``|g>`` (frame :func:`periodic_frame_unitary`), which makes the
    Hamiltonian exactly periodic in the drive period.
    """
    _require(layout, params.n_atoms)
    a, sig, _ = _ops(layout)
    D = params.Delta
    H0 = np.zeros((layout.dim, layout.dim), dtype=complex)
    terms = []
    for k in range(params.n_atoms):
        H0 += D[k] * sig["e", "e"][k]
        H0 += params.Omega[k] / 2 * (sig["s", "e"][k] + sig["e", "s"][k])
        terms.append((_cos_drive(drive.eps[k], drive.nu[k], drive.phi[k]), sig["g", "g"][k], False))
        lm = params.g * (a @ sig["e", "g"][k])
        shift = params.Delta_prime - D[k]
        if periodic_frame:
            H0 += lm + lm.conj().T - shift * sig["g", "g"][k]
        else:
            terms.append((_phase(shift), lm, True))
    period = TWO_PI / drive.frequency if (periodic_frame and drive.is_uniform) else None
    return TimeDependentHamiltonian(H0, terms, period)


def rotating_hamiltonian(params, drive, layout, t: float) -> np.ndarray:
    return rotating_terms(params, drive, layout)(t)


def periodic_frame_unitary(params: SystemParams, layout: SpaceLayout, t: float) -> np.ndarray:
    """``W(t) = exp(-i sum_k (Delta' - Delta_k) s_k^gg t)``; rotating state = W @ periodic state."""
    _, sig, _ = _ops(layout)
    gen = sum((params.Delta_prime - params.Delta[k]) * sig["g", "g"][k] for k in range(params.n_atoms))
    return np.diag(np.exp(-1j * np.diag(gen).real * t))


# -- adiabatic elimination ----------------------------------------------------


def elimination_projectors(layout: SpaceLayout) -> tuple[np.ndarray, np.ndarray]:
    """``P`` onto no excited atom, ``Q`` onto exactly one excited atom.

    States with two or more excitations are only reached at higher order and
    belong to neither block.
    """
    n_e = np.array([cfg.count("e") for _, cfg in hb.basis_labels(layout)])
    return np.diag((n_e == 0).astype(complex)), np.diag((n_e == 1).astype(complex))


def _range_basis(Q: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    w, v = np.linalg.eigh((Q + Q.conj().T) / 2)
    return v[:, w > 1 - tol]


def adiabatic_eliminate(H: np.ndarray, P: np.ndarray, Q: np.ndarray,
                        denominator: np.ndarray | None = None) -> np.ndarray:
    """``PHP - PHQ (QHQ)^-1 QHP`` with the inverse taken on range(Q).

    ``denominator`` replaces ``H`` inside the inverse; passing the static
    detuning operator gives the leading order of the large-detuning expansion.
    """
    H = np.asarray(H, dtype=complex)
    B = _range_basis(Q)
    if B.shape[1] == 0:
        return P @ H @ P
    K = H if denominator is None else np.asarray(denominator, dtype=complex)
    M = B.conj().T @ K @ B
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        s = np.linalg.svd(M, compute_uv=False)
        raise EliminationError(
            f"fast block QHQ is singular on range(Q) (dim {B.shape[1]}, cond {cond:.3g}, "
            f"smallest singular value {s[-1]:.3g})"
        )
    coupling_in = B.conj().T @ H @ P
    coupling_out = P @ H @ B
    return P @ H @ P - coupling_out @ np.linalg.solve(M, coupling_in)


def detuning_operator(params: SystemParams, layout: SpaceLayout) -> np.ndarray:
    """``sum_k Delta_k s_k^ee``: the fast block at leading order."""
    _, sig, _ = _ops(layout)
    return sum(params.Delta[k] * sig["e", "e"][k] for k in range(params.n_atoms))


def _require_dispersive(params: SystemParams):
    if not params.dispersive:
        raise ValueError("adiabatic elimination needs parameters in the dispersive regime")


def projected_terms(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout,
                    drop_photon_stark: bool = False) -> TimeDependentHamiltonian:
    """Closed-form ground-manifold Hamiltonian after eliminating ``|e>``.

    Works on two- or three-level layouts (on the latter it lives in the P block).
    """
    _require(layout, params.n_atoms, excited=False)
    _require_dispersive(params)
    a, sig, num = _ops(layout)
    w = params.raman_weights
    H0 = np.zeros((layout.dim, layout.dim), dtype=complex)
    terms = []
    for k in range(params.n_atoms):
        H0 -= params.light_shift[k] * sig["s", "s"][k]
        if not drop_photon_stark:
            H0 -= params.photon_stark[k] * (num @ sig["g", "g"][k])
        terms.append((_cos_drive(drive.eps[k], drive.nu[k], drive.phi[k]), sig["g", "g"][k], False))
        shift = params.Delta_prime - params.Delta[k]
        terms.append((_phase(-shift, -w[k]), a.conj().T @ sig["g", "s"][k], True))
    return TimeDependentHamiltonian(H0, terms)


def projected_hamiltonian(params, drive, layout, t: float, drop_photon_stark: bool = False) -> np.ndarray:
    return projected_terms(params, drive, layout, drop_photon_stark)(t)


def interaction_frame_unitary(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout,
                              t: float) -> np.ndarray:
    """``U_0(t)``, generated by the drive and the ``|s>`` light shift (diagonal)."""
    _, sig, _ = _ops(layout)
    theta = drive.detuning_integral(t)
    gen = np.zeros(layout.dim)
    for k in range(params.n_atoms):
        gen += theta[k] * np.diag(sig["g", "g"][k]).real
        gen -= params.light_shift[k] * t * np.diag(sig["s", "s"][k]).real
    return np.diag(np.exp(-1j * gen))


def gauge_unitary(drive: DriveProtocol, layout: SpaceLayout) -> np.ndarray:
    """``R = prod_k exp(i beta_k sigma_k^z / 2)`` with ``sigma^z = gg - ss``."""
    _, sig, _ = _ops(layout)
    gen = np.zeros(layout.dim)
    for k, b in enumerate(drive.beta):
        gen += b / 2 * np.diag(sig["g", "g"][k] - sig["s", "s"][k]).real
    return np.diag(np.exp(1j * gen))


def interaction_terms(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout,
                      gauge_beta: bool = False,
                      drop_photon_stark: bool = True) -> TimeDependentHamiltonian:
    """Interaction-picture Hamiltonian; ``gauge_beta`` conjugates by the gauge ``R``.

    The photon-number Stark term is diagonal, so it passes through ``U_0``
    unchanged; it is kept only when ``drop_photon_stark`` is false.
    """
    _require(layout, params.n_atoms, excited=False)
    _require_dispersive(params)
    a, sig, num = _ops(layout)
    w = params.raman_weights
    H0 = np.zeros((layout.dim, layout.dim), dtype=complex)
    terms = []
    beta = drive.beta
    for k in range(params.n_atoms):
        if not drop_photon_stark:
            H0 -= params.photon_stark[k] * (num @ sig["g", "g"][k])
        eps, nu, phi, dk = drive.eps[k], drive.nu[k], drive.phi[k], params.delta[k]
        offset = 0.0 if gauge_beta else beta[k]

        def coeff(t, eps=eps, nu=nu, phi=phi, dk=dk, offset=offset, wk=w[k]):
            arg = dk * t - (eps / nu * math.sin(nu * t - phi) + offset)
            return -wk * complex(math.cos(arg), math.sin(arg))

        terms.append((coeff, a @ sig["s", "g"][k], True))
    period = None
    if drive.is_uniform and np.allclose(params.delta, 0.0, atol=1e-9):
        period = TWO_PI / drive.frequency
    return TimeDependentHamiltonian(H0, terms, period)


def interaction_hamiltonian(params, drive, layout, t: float, gauge_beta: bool = False,
                            drop_photon_stark: bool = True) -> np.ndarray:
    return interaction_terms(params, drive, layout, gauge_beta, drop_photon_stark)(t)


def to_gauged_frame(params: SystemParams, drive: DriveProtocol, layout: SpaceLayout, t: float,
                    source: str) -> np.ndarray:
    """Diagonal map from a model frame into the gauged interaction frame.

    ``source`` is one of ``"periodic"`` (:func:`rotating_terms` with
    ``periodic_frame=True``), ``"rotating"``, ``"projected"``,
    ``"interaction"`` or ``"gauged"``. Excited-state amplitudes pass through
    with the same phases; callers project them out.
    """
    m = np.ones(layout.dim, dtype=complex)
    if source == "gauged":
        return np.diag(m)
    if source == "periodic":
        m *= np.diag(periodic_frame_unitary(params, layout, t))
        source = "rotating"
    if source in ("rotating", "projected"):
        m *= np.diag(interaction_frame_unitary(params, drive, layout, t)).conj()
        source = "interaction"
    if source != "interaction":
        raise ValueError(f"unknown frame {source!r}")
    m *= np.diag(gauge_unitary(drive, layout)).conj()
    return np.diag(m)


# -- dissipation --------------------------------------------------------------


def lindblad_dissipators(params: SystemParams, layout: SpaceLayout) -> list[np.ndarray]:
    """Spontaneous decay ``e -> g`` and ``e -> s`` at rate ``gamma/2`` each, per atom."""
    _require(layout, params.n_atoms, cavity=False)
    if params.gamma < 0:
        raise ValueError("gamma must be non-negative")
    _, sig, _ = _ops(layout)
    amp = math.sqrt(params.gamma / 2)
    ops = []
    for k in range(params.n_atoms):
        ops.append(amp * sig["g", "e"][k])
        ops.append(amp * sig["s", "e"][k])
    return ops


def check_j0_zero(drive: DriveProtocol, tol: float = 1e-3) -> None:
    if not drive.at_j0_zero:
        warnings.warn(
            f"drive ratio {drive.ratio:.6f} is not at the first zero of J0; the static "
            "cavity-assisted term survives", stacklevel=3,
        )
