"""Toggling-frame pulse sequences: building the x and y DMI components out
of the z component with ideal instantaneous pulses, and Trotter products.

A sequence is a list of segments ``(R_j, tau_j, H_j)``: free evolution under
``H_j`` for ``tau_j`` followed by the pulse ``R_j``. In the toggling frame the
segment Hamiltonians become ``H'_j = Q_{j-1}^dag H_j Q_{j-1}`` with
``Q_j = R_j ... R_1``.

The frame-cycling pulse ``R = P_1 P_2 ... P_N`` with
``P_k = exp(i pi/4 sigma_k^y) exp(i pi/4 sigma_k^x)`` satisfies ``R**3 = -1``.
Closure is therefore checked up to a global phase, which no observable sees.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import hilbert as hb
from .hilbert import SpaceLayout


class SequenceError(ValueError):
    pass


def _spin_layout(dim: int) -> SpaceLayout:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return SpaceLayout(n, None, 2)


def frame_pulse(site: int, layout: SpaceLayout) -> np.ndarray:
    """``P_k``: conjugation ``P^dag s P`` sends ``x -> y``, ``y -> z``, ``z -> x`` on site ``k``."""
    x = hb.local_pauli("x", 2)
    y = hb.local_pauli("y", 2)
    local = expm(1j * math.pi / 4 * y) @ expm(1j * math.pi / 4 * x)
    return hb.embed_product([(site, local)], layout)


def frame_rotation(layout: SpaceLayout) -> np.ndarray:
    """``R = P_1 P_2 ... P_N`` (the factors act on different sites and commute)."""
    R = hb.identity(layout)
    for k in range(layout.n_atoms):
        R = R @ frame_pulse(k, layout)
    return R


def pulse_from_name(name: str, layout: SpaceLayout) -> np.ndarray:
    """Registry: ``identity``, ``P<k>`` (1-based site), ``R`` and ``Rdag``."""
    if name == "identity":
        return hb.identity(layout)
    if name == "R":
        return frame_rotation(layout)
    if name == "Rdag":
        return frame_rotation(layout).conj().T
    m = re.fullmatch(r"P(\d+)", name)
    if m and 1 <= int(m.group(1)) <= layout.n_atoms:
        return frame_pulse(int(m.group(1)) - 1, layout)
    raise ValueError(f"unknown pulse {name!r}")


def phase_free_distance(U: np.ndarray, V: np.ndarray) -> float:
    """``min_alpha max|U - exp(i alpha) V|`` with the optimal phase from the overlap."""
    ov = np.vdot(V, U)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.max(np.abs(U - ph * V)))


@dataclass
class Segment:
    H: np.ndarray
    tau: float
    pulse: np.ndarray


@dataclass
class PulseSequence:
    segments: list[Segment]
    cycles: int = 1
    closure_tol: float = 1e-12
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.segments:
            raise SequenceError("empty pulse sequence")
        if any(s.tau <= 0 for s in self.segments):
            raise SequenceError("segment durations must be positive")
        if self.cycles < 1:
            raise SequenceError("cycles must be >= 1")

    @property
    def period(self) -> float:
        return float(sum(s.tau for s in self.segments))

    @property
    def dim(self) -> int:
        return self.segments[0].H.shape[0]

    def frame_product(self) -> np.ndarray:
        Q = np.eye(self.dim, dtype=complex)
        for s in self.segments:
            Q = s.pulse @ Q
        return Q

    def closure_residual(self) -> float:
        return phase_free_distance(self.frame_product(), np.eye(self.dim))

    def check_closure(self):
        res = self.closure_residual()
        if res > self.closure_tol:
            raise SequenceError(f"pulses do not close to the identity: residual {res:.3g}")


def toggled_hamiltonians(seq: PulseSequence) -> list[np.ndarray]:
    seq.check_closure()
    out = []
    Q = np.eye(seq.dim, dtype=complex)
    for s in seq.segments:
        out.append(Q.conj().T @ s.H @ Q)
        Q = s.pulse @ Q
    return out


def average_hamiltonian(seq: PulseSequence) -> np.ndarray:
    Hs = toggled_hamiltonians(seq)
    return sum(H * s.tau for H, s in zip(Hs, seq.segments)) / seq.period


def cycle_propagator(seq: PulseSequence, order: int = 1) -> np.ndarray:
    """One cycle: ``prod_{j=n..1} exp(-i H'_j tau_j)`` or its palindromic half-step form."""
    Hs = toggled_hamiltonians(seq)
    taus = [s.tau for s in seq.segments]
    if order == 1:
        U = np.eye(seq.dim, dtype=complex)
        for H, tau in zip(Hs, taus):
            U = expm(-1j * H * tau) @ U
        return U
    if order == 2:
        halves = [expm(-1j * H * tau / 2) for H, tau in zip(Hs, taus)]
        U = np.eye(seq.dim, dtype=complex)
        for E in halves:  # applied first: H'_1 ... H'_n
            U = E @ U
        for E in reversed(halves):  # then H'_n ... H'_1
            U = E @ U
        return U
    raise ValueError(f"Trotter order must be 1 or 2, got {order}")


def trotter_propagator(seq: PulseSequence, order: int = 1, m: int | None = None) -> np.ndarray:
    m = seq.cycles if m is None else m
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.linalg.matrix_power(cycle_propagator(seq, order), m)


def cycle_defect(seq: PulseSequence, order: int = 1) -> float:
    """Spectral-norm distance of one cycle from ``exp(-i Hbar T)``."""
    target = expm(-1j * average_hamiltonian(seq) * seq.period)
    return float(np.linalg.norm(cycle_propagator(seq, order) - target, 2))


def dmi_xyz(H_Z: np.ndarray, component: str) -> np.ndarray:
    """x or y DMI component by conjugating with ``R`` once or twice."""
    layout = _spin_layout(H_Z.shape[0])
    R = frame_rotation(layout)
    if component == "z":
        return H_Z.copy()
    if component == "x":
        return R.conj().T @ H_Z @ R
    if component == "y":
        R2 = R @ R
        return R2.conj().T @ H_Z @ R2
    raise ValueError(f"unknown component {component!r}")


def dmi_sequence(H_Z: np.ndarray, period: float, weights: Sequence[float] = (1, 1, 1),
                 cycles: int = 1) -> PulseSequence:
    """Three segments under ``H_Z`` separated by ``R`` pulses; toggled frames give ``Z, X, Y``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    layout = _spin_layout(H_Z.shape[0])
    R = frame_rotation(layout)
    taus = period * w / w.sum()
    segs = [Segment(H_Z, float(t), R) for t in taus if t > 0]
    if len(segs) != 3:
        raise ValueError("use positive weights; a zero weight drops its toggling frame")
    return PulseSequence(segs, cycles, names=["R"] * 3)


def convergence_study(H_Z: np.ndarray, total_time: float, order: int,
                      ms: Sequence[int] = (4, 8, 16, 32)) -> tuple[np.ndarray, float]:
    """Errors ``||U_trotter - exp(-i Hbar t)||`` at fixed total time and their log-log slope."""
    errs = []
    for m in ms:
        seq = dmi_sequence(H_Z, total_time / m, cycles=m)
        target = expm(-1j * average_hamiltonian(seq) * total_time)
        errs.append(np.linalg.norm(trotter_propagator(seq, order) - target, 2))
    errs = np.array(errs)
    slope = -np.polyfit(np.log(ms), np.log(errs), 1)[0]
    return errs, float(slope)
