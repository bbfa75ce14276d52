"""Time propagation (Schrodinger and Lindblad), closed-form ring propagators
and fidelities.

Time-periodic Hamiltonians are propagated stroboscopically: the propagator
over one drive period ``U_F`` is computed once, and a sample at
``t = m tau + s`` is ``U(s) U_F**m psi0``. The rotating-frame models oscillate
on the nanosecond drive scale while the chiral dynamics takes ~40 us, so
this replaces ~5000 periods of integration by one.

Both propagators accept a :class:`~chiralcurrent.model.TimeDependentHamiltonian`
and, by default, restrict it to the states reachable from the initial state
(the Hamiltonians conserve ``n_photons - n_g``, which keeps the blocks small).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .model import TimeDependentHamiltonian

SQRT15 = math.sqrt(15.0)
GAUSS3 = (0.5 - SQRT15 / 10, 0.5, 0.5 + SQRT15 / 10)
GAUSS2 = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


class StiffnessError(RuntimeError):
    pass


class PositivityError(ArithmeticError):
    pass


# -- containers ---------------------------------------------------------------


@dataclass
class SubspaceBasis:
    """Ordered, labelled orthonormal kets (rows of ``vectors``)."""

    labels: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if len(self.labels) != self.vectors.shape[0]:
            raise ValueError("one label per basis vector required")
        gram = self.vectors.conj() @ self.vectors.T
        if np.max(np.abs(gram - np.eye(len(self.labels))), initial=0.0) > 1e-10:
            raise ValueError("basis vectors are not orthonormal")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def space_dim(self) -> int:
        return self.vectors.shape[1]

    def embed(self, indices: np.ndarray, dim: int) -> "SubspaceBasis":
        """Place every vector into a larger space at ``indices`` (e.g. cavity vacuum)."""
        big = np.zeros((len(self), dim), dtype=complex)
        big[:, indices] = self.vectors
        return SubspaceBasis(list(self.labels), big)


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: np.ndarray  # (n_t, d) kets or (n_t, d, d) density matrices
    mixed: bool = False
    diagnostics: dict = field(default_factory=dict)
    populations: dict | None = None
    fidelity: np.ndarray | None = None
    support: np.ndarray | None = None  # indices of the full space kept in ``states``
    full_dim: int | None = None

    def full_states(self) -> np.ndarray:
        """States embedded back into the full space when a reduction was used."""
        if self.support is None:
            return self.states
        d = self.full_dim
        if self.mixed:
            out = np.zeros((len(self.times), d, d), dtype=complex)
            out[:, self.support[:, None], self.support[None, :]] = self.states
        else:
            out = np.zeros((len(self.times), d), dtype=complex)
            out[:, self.support] = self.states
        return out


# -- helpers ------------------------------------------------------------------


def reachable_indices(generators: Sequence[np.ndarray], start, tol: float = 0.0) -> np.ndarray:
    """States reachable from ``start``: ``i -> j`` whenever some ``G[j, i] != 0``.

    Directed, so one-way jump operators only lead downhill.
    """
    adj = np.zeros(generators[0].shape, dtype=bool)
    for G in generators:
        adj |= np.abs(G) > tol
    seen = np.zeros(adj.shape[0], dtype=bool)
    frontier = np.asarray(sorted(set(int(i) for i in start)), dtype=int)
    seen[frontier] = True
    while frontier.size:
        nxt = np.flatnonzero(adj[:, frontier].any(axis=1) & ~seen)
        seen[nxt] = True
        frontier = nxt
    return np.flatnonzero(seen)


def _support(v: np.ndarray, tol=0.0) -> np.ndarray:
    return np.flatnonzero(np.abs(v) > tol)


def _hamiltonian_generators(H: TimeDependentHamiltonian) -> list[np.ndarray]:
    gens = [H.static]
    for _, A, pair in H.terms:
        gens += [A, A.conj().T] if pair else [A]
    return gens


def _exp_antihermitian(Omega: np.ndarray) -> np.ndarray:
    """``exp(Omega)`` for anti-Hermitian ``Omega`` through a Hermitian eigensolve (exactly unitary)."""
    w, v = np.linalg.eigh(1j * Omega)
    return (v * np.exp(-1j * w)) @ v.conj().T


def _magnus_step(A: Callable[[float], np.ndarray], t: float, h: float, order: int) -> np.ndarray:
    """Magnus exponent of ``y' = A(t) y`` over ``[t, t+h]``; fourth or sixth order."""
    if order == 4:
        A1, A2 = (A(t + c * h) for c in GAUSS2)
        return h / 2 * (A1 + A2) + math.sqrt(3) / 12 * h * h * (A2 @ A1 - A1 @ A2)
    if order == 6:
        A1, A2, A3 = (A(t + c * h) for c in GAUSS3)
        a1 = h * A2
        a2 = SQRT15 / 3 * h * (A3 - A1)
        a3 = 10.0 / 3 * h * (A3 - 2 * A2 + A1)
        C1 = a1 @ a2 - a2 @ a1
        X = 2 * a3 + C1
        C2 = -(a1 @ X - X @ a1) / 60
        L, R = -20 * a1 - a3 + C1, a2 + C2
        return a1 + a3 / 12 + (L @ R - R @ L) / 240
    raise ValueError(f"Magnus order must be 4 or 6, got {order}")


def _march(A: Callable[[float], np.ndarray], expo: Callable[[np.ndarray], np.ndarray], Y0: np.ndarray,
           targets: np.ndarray, h: float, order: int, t0: float = 0.0) -> list[np.ndarray]:
    """Fixed-step Magnus march returning ``Y(target)`` for sorted targets.

    The march runs on the uniform grid ``t0 + j h``; each target is reached
    from the preceding grid point with one partial step.
    """
    out = []
    Y, t = Y0, t0
    for tgt in targets:
        n_full = int(math.floor((tgt - t) / h + 1e-9))
        for _ in range(max(n_full, 0)):
            Y = expo(_magnus_step(A, t, h, order)) @ Y
            t += h
        rem = tgt - t
        out.append(expo(_magnus_step(A, t, rem, order)) @ Y if rem > 1e-15 * max(1.0, abs(tgt)) else Y)
    return out


def _dominant_frequency(Hf, t: float) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(Hf(t)))))


def _adaptive(Hf, Y0: np.ndarray, t_eval: np.ndarray, rtol: float, atol: float, t0: float = 0.0):
    shape = Y0.shape

    def rhs(t, y):
        return (-1j * (Hf(t) @ y.reshape(shape))).ravel()

    sol = solve_ivp(rhs, (t0, float(t_eval[-1])), Y0.ravel().astype(complex), method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        f = _dominant_frequency(Hf, float(sol.t[-1]) if sol.t.size else t0)
        raise StiffnessError(
            f"integrator failed at t = {sol.t[-1] if sol.t.size else t0:.6g} us ({sol.message}); "
            f"dominant frequency {f:.4g} rad/us ({f / (2 * math.pi):.4g} MHz)"
        )
    return [sol.y[:, i].reshape(shape) for i in range(len(t_eval))]


def _stroboscopic_split(t_grid: np.ndarray, tau: float):
    m = np.floor(t_grid / tau + 1e-12).astype(np.int64)
    s = t_grid - m * tau
    s[s < 0] = 0.0
    near = s > tau * (1 - 1e-12)
    m[near] += 1
    s[near] = 0.0
    return m, s


def unitarity_defect(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def _unitary_powers(UF: np.ndarray):
    """Return ``f(m, v) = UF**m v`` via the Schur form of the polar factor of ``UF``."""
    Upolar, _ = sla.polar(UF)
    T, Z = sla.schur(Upolar, output="complex")
    lam = np.diag(T)
    lam = lam / np.abs(lam)
    Zh = Z.conj().T

    def apply(m: int, v: np.ndarray) -> np.ndarray:
        return Z @ (lam**m * (Zh @ v))

    return apply


# -- Schrodinger --------------------------------------------------------------


def propagate_schrodinger(H, psi0, t_grid, tol: float = 1e-13, method: str = "auto",
                          reduce: bool = True, magnus_steps: int = 1024,
                          magnus_order: int = 6) -> EvolutionResult:
    """Solve ``i d psi/dt = H(t) psi`` on ``t_grid`` (starting at ``t_grid[0]``).

    ``H`` is a constant matrix, a ``TimeDependentHamiltonian`` or any callable.
    Methods:

    ``"expm"``      constant ``H``, exact spectral propagation;
    ``"adaptive"``  DOP853 (order 8 with embedded 5/3 error estimate);
    ``"floquet"``   stroboscopic, one-period propagator from DOP853;
    ``"magnus"``    stroboscopic with a fixed-step Magnus one-period propagator
                    (``magnus_steps`` per period), or a plain fixed-step march
                    for non-periodic ``H``.

    ``"auto"`` picks ``expm``, ``floquet`` (periodic ``H`` spanning more than
    20 periods) or ``adaptive``. States are never renormalised; the norm
    drift is reported in ``diagnostics``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("initial state must be normalised")
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be non-decreasing")
    full_dim = psi0.size
    support = None
    diag: dict = {}

    if isinstance(H, np.ndarray):
        method = "expm" if method == "auto" else method
    if method == "expm":
        Hc = np.asarray(H(t_grid[0]) if callable(H) else H, dtype=complex)
        w, v = np.linalg.eigh(Hc)
        c = v.conj().T @ psi0
        states = np.array([v @ (np.exp(-1j * w * (t - t_grid[0])) * c) for t in t_grid])
        return _finish(t_grid, states, diag, None, full_dim)

    if isinstance(H, TimeDependentHamiltonian) and reduce:
        support = reachable_indices(_hamiltonian_generators(H), _support(psi0))
        H = H.restrict(support)
        psi0 = psi0[support]
    Hf = H
    if not np.allclose(Hf(t_grid[0]), Hf(t_grid[0]).conj().T, atol=1e-9, rtol=0):
        raise ValueError("H(t) is not Hermitian")
    period = getattr(H, "period", None)
    t0 = float(t_grid[0])
    if method == "auto":
        method = "floquet" if period and (t_grid[-1] - t0) > 20 * period else "adaptive"
    diag["method"] = method
    atol = tol * 1e-2

    if method == "adaptive":
        states = np.array(_adaptive(Hf, psi0, t_grid, tol, atol, t0))
    elif method in ("floquet", "magnus") and period:
        if t0 != 0.0:
            raise ValueError("stroboscopic propagation starts at t = 0")
        m, s = _stroboscopic_split(t_grid, period)
        phases = np.unique(np.append(s, period))
        I = np.eye(psi0.size, dtype=complex)
        if method == "floquet":
            Us = _adaptive(Hf, I, phases, tol, atol)
        else:
            A = lambda t: -1j * Hf(t)
            Us = _march(A, _exp_antihermitian, I, phases, period / magnus_steps, magnus_order)
            diag["magnus_steps"] = magnus_steps
            diag["magnus_order"] = magnus_order
        lookup = dict(zip(phases, Us))
        UF = lookup[period]
        diag["period"] = period
        diag["period_unitarity_defect"] = unitarity_defect(UF)
        power = _unitary_powers(UF)
        cache: dict[int, np.ndarray] = {}
        states = np.empty((len(t_grid), psi0.size), dtype=complex)
        for i, (mi, si) in enumerate(zip(m, s)):
            if mi not in cache:
                cache[mi] = power(int(mi), psi0)
            states[i] = lookup[si] @ cache[mi]
    elif method == "magnus":
        span = t_grid[-1] - t0
        h = span / magnus_steps if span > 0 else 1.0
        A = lambda t: -1j * Hf(t)
        states = np.array(_march(A, _exp_antihermitian, psi0, t_grid, h, magnus_order, t0))
        diag["magnus_steps"] = magnus_steps
    else:
        raise ValueError(f"unknown method {method!r}")
    return _finish(t_grid, states, diag, support, full_dim)


def _finish(t_grid, states, diag, support, full_dim) -> EvolutionResult:
    norms = np.linalg.norm(states, axis=1)
    diag["max_norm_drift"] = float(np.max(np.abs(norms - 1)))
    return EvolutionResult(t_grid, states, False, diag, support=support,
                           full_dim=full_dim if support is not None else None)


# -- Lindblad -----------------------------------------------------------------


def _pair_reachable(Hgens: Sequence[np.ndarray], Ls: Sequence[np.ndarray], start_pairs,
                    n: int) -> np.ndarray:
    """Density-matrix entries ``(i, j)`` reachable under the Lindbladian, as flat ``i*n+j``."""
    Hadj = np.zeros((n, n), dtype=bool)
    for G in Hgens:
        Hadj |= np.abs(G) > 0
    Hadj |= Hadj.T
    for L in Ls:
        Hadj |= (np.abs(L.conj().T @ L) > 0)
    jumps = [np.abs(L) > 0 for L in Ls]
    nbr = [np.flatnonzero(Hadj[:, i]) for i in range(n)]
    seen = np.zeros((n, n), dtype=bool)
    stack = list(start_pairs)
    for i, j in stack:
        seen[i, j] = True
    while stack:
        i, j = stack.pop()
        cand = [(a, j) for a in nbr[i]] + [(i, b) for b in nbr[j]]
        for J in jumps:
            for a in np.flatnonzero(J[:, i]):
                for b in np.flatnonzero(J[:, j]):
                    cand.append((a, b))
        for a, b in cand:
            if not seen[a, b]:
                seen[a, b] = True
                stack.append((a, b))
    return np.flatnonzero(seen.ravel())


def _commutator_superop(A: np.ndarray) -> np.ndarray:
    """Row-major ``vec(-i[A, rho])``."""
    I = np.eye(A.shape[0])
    return -1j * (np.kron(A, I) - np.kron(I, A.T))


def dissipator_superop(Ls: Sequence[np.ndarray], n: int) -> np.ndarray:
    I = np.eye(n)
    D = np.zeros((n * n, n * n), dtype=complex)
    for L in Ls:
        LdL = L.conj().T @ L
        D += np.kron(L, L.conj()) - 0.5 * np.kron(LdL, I) - 0.5 * np.kron(I, LdL.T)
    return D


class _SuperGenerator:
    def __init__(self, static, terms):
        self.static = static
        self.terms = terms

    def __call__(self, t):
        G = self.static.copy()
        for f, S in self.terms:
            c = f(t)
            if c != 0:
                G += c * S
        return G


def lindblad_generator(H: TimeDependentHamiltonian, Ls: Sequence[np.ndarray],
                       keep: np.ndarray | None = None) -> _SuperGenerator:
    """Row-major Lindbladian ``L(t)``, optionally restricted to flat entries ``keep``."""
    n = H.dim
    sl = (lambda S: S[np.ix_(keep, keep)]) if keep is not None else (lambda S: S)
    static = sl(_commutator_superop(H.static) + dissipator_superop(Ls, n))
    terms = []
    for f, A, pair in H.terms:
        terms.append((f, sl(_commutator_superop(A))))
        if pair:
            terms.append((lambda t, f=f: np.conj(f(t)), sl(_commutator_superop(A.conj().T))))
    return _SuperGenerator(static, terms)


def propagate_master(H, dissipators: Sequence[np.ndarray], rho0, t_grid, tol: float = 1e-8,
                     reduce: bool = True, magnus_steps: int = 512,
                     snap_to_period: bool = True) -> EvolutionResult:
    """Lindblad evolution ``d rho/dt = -i[H, rho] + sum_k L rho L^dag - {L^dag L, rho}/2``.

    Constant ``H``: exact exponential of the Lindbladian. Periodic ``H``: the
    one-period propagator is assembled from sixth-order Magnus steps and
    samples are taken at whole periods (``t_grid`` is snapped to the nearest
    multiple of the period; the returned ``times`` are the snapped ones).
    Non-periodic time-dependent ``H``: fixed-step Magnus march.

    ``tol`` bounds the trace drift and the Hermiticity defect; positivity
    violations below ``-1e-6`` raise :class:`PositivityError`.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    n_full = rho0.shape[0]
    if abs(np.trace(rho0) - 1) > 1e-10 or np.min(np.linalg.eigvalsh(rho0)) < -1e-12:
        raise ValueError("rho0 must be a unit-trace positive matrix")
    Ls = [np.asarray(L, dtype=complex) for L in dissipators]
    if isinstance(H, np.ndarray):
        H = TimeDependentHamiltonian(H)
    diag: dict = {}
    support = None
    if reduce:
        gens = _hamiltonian_generators(H) + Ls
        support = reachable_indices(gens, np.flatnonzero(np.abs(rho0).sum(axis=1) > 0))
        H = H.restrict(support)
        Ls = [L[np.ix_(support, support)] for L in Ls]
        rho0 = rho0[np.ix_(support, support)]
    n = rho0.shape[0]
    start = [tuple(p) for p in np.argwhere(np.abs(rho0) > 0)]
    keep = _pair_reachable(_hamiltonian_generators(H), Ls, start, n) if reduce else np.arange(n * n)
    G = lindblad_generator(H, Ls, keep)
    v0 = rho0.ravel()[keep]
    diag["vec_dim"] = int(len(keep))

    def unvec(v):
        full = np.zeros(n * n, dtype=complex)
        full[keep] = v
        return full.reshape(n, n)

    period = H.period
    t0 = float(t_grid[0])
    if not H.terms:
        S = [sla.expm(G.static * (t - t0)) for t in t_grid]
        vs = [Si @ v0 for Si in S]
        times = t_grid
    elif period:
        if t0 != 0.0:
            raise ValueError("stroboscopic propagation starts at t = 0")
        m = np.rint(t_grid / period).astype(np.int64) if snap_to_period else None
        if m is None:
            raise ValueError("periodic master-equation runs sample at whole periods")
        SF = _march(G, sla.expm, np.eye(len(keep), dtype=complex), np.array([period]),
                    period / magnus_steps, 6)[0]
        diag["period"] = period
        diag["magnus_steps"] = magnus_steps
        vs, cur, m_cur = [], v0, 0
        for mi in m:
            while m_cur < mi:
                cur = SF @ cur
                m_cur += 1
            vs.append(cur)
        times = m * period
    else:
        span = t_grid[-1] - t0
        vs = _march(G, sla.expm, v0, t_grid, span / magnus_steps if span > 0 else 1.0, 6, t0)
        times = t_grid
    rhos = np.array([unvec(v) for v in vs])
    traces = np.real(np.einsum("tii->t", rhos))
    herm = float(np.max(np.abs(rhos - np.conj(np.transpose(rhos, (0, 2, 1))))))
    mins = np.array([np.min(np.linalg.eigvalsh((r + r.conj().T) / 2)) for r in rhos])
    diag.update(max_trace_drift=float(np.max(np.abs(traces - 1))), max_hermiticity_defect=herm,
                min_eigenvalue=float(np.min(mins)))
    if diag["min_eigenvalue"] < -1e-6:
        k = int(np.argmin(mins))
        raise PositivityError(f"density matrix lost positivity at t = {times[k]:.6g} us "
                              f"(eigenvalue {mins[k]:.3g})")
    return EvolutionResult(np.asarray(times, dtype=float), rhos, True, diag, support=support,
                           full_dim=n_full if support is not None else None)


# -- closed-form ring propagators ---------------------------------------------

RING3_PATTERN = np.array([[0, -1, 1], [1, 0, -1], [-1, 1, 0]], dtype=float)


def ring3_subspace_matrix(kappa: float) -> np.ndarray:
    """``2 i kappa C`` on ``{|gss>, |sgs>, |ssg>}``."""
    return 2j * kappa * RING3_PATTERN


def ring5_subspace_matrix(kappa1: float, kappa2: float) -> np.ndarray:
    """``(i/2)`` times the antisymmetric circulant with first row ``(0, k1, k2, -k2, -k1)``."""
    row = np.array([0.0, kappa1, kappa2, -kappa2, -kappa1])
    return 0.5j * np.array([np.roll(row, i) for i in range(5)])


def _circulant(first_col: np.ndarray) -> np.ndarray:
    n = len(first_col)
    i, j = np.indices((n, n))
    return first_col[(i - j) % n]


def analytic_u3(t: float, kappa: float) -> np.ndarray:
    """Real circulant ``x_1, x_2, x_3`` with ``x_j = [1 + 2 cos(w t - 2 pi (j-1)/3)] / 3``, ``w = 2 sqrt(3) kappa``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    w = 2 * math.sqrt(3) * kappa
    x = np.array([(1 + 2 * math.cos(w * t - 2 * math.pi * j / 3)) / 3 for j in range(3)])
    return _circulant(x).astype(complex)


def ring5_frequency(kappa1: float) -> float:
    """``sqrt(5 - 2 sqrt 5) kappa1 / 2``: base frequency of the ideal five-ring."""
    return math.sqrt(5 - 2 * math.sqrt(5)) * kappa1 / 2


def analytic_u5(t: float, kappa1: float, kappa2: float) -> np.ndarray:
    """Closed-form five-ring propagator, valid only at ``kappa2/kappa1 = sqrt(5) - 2``."""
    if kappa1 <= 0:
        raise ValueError("kappa1 must be positive")
    if abs(kappa2 / kappa1 - (math.sqrt(5) - 2)) > 1e-9:
        raise ValueError(
            f"closed form needs kappa2/kappa1 = sqrt(5) - 2, got {kappa2 / kappa1:.12g}; "
            "use expm of ring5_subspace_matrix instead"
        )
    w = ring5_frequency(kappa1)
    p = math.pi
    y = np.array([
        1 + 4 * math.cos(2 * w * t) * math.cos(w * t),
        1 + 4 * math.cos(2 * w * t + 3 * p / 5) * math.cos(w * t - p / 5),
        1 + 4 * math.cos(2 * w * t + p / 5) * math.cos(w * t + 3 * p / 5),
        1 + 4 * math.cos(2 * w * t + 4 * p / 5) * math.cos(w * t + 2 * p / 5),
        1 + 4 * math.cos(2 * w * t + 7 * p / 5) * math.cos(w * t + p / 5),
    ]) / 5
    return _circulant(y).astype(complex)


def subspace_matrix(H: np.ndarray, basis: SubspaceBasis) -> np.ndarray:
    """``<b_i|H|b_j>``."""
    if basis.space_dim != H.shape[0]:
        raise ValueError(f"basis lives in dimension {basis.space_dim}, H in {H.shape[0]}")
    V = basis.vectors
    return V.conj() @ H @ V.T


def fidelity(a: np.ndarray, b: np.ndarray, embedding: np.ndarray | None = None) -> float:
    """``|<b|a>|**2`` for a ket ``a`` or ``<b|a|b>`` for a density matrix ``a``.

    ``b`` is a pure reference. When ``b`` lives in a smaller space (an
    effective-spin state), ``embedding`` gives the indices of that space inside
    ``a``'s space (see :func:`hilbert.ground_vacuum_indices`).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    da = a.shape[0]
    if b.shape[0] != da:
        if embedding is None:
            raise ValueError(f"dimension mismatch ({da} vs {b.shape[0]}) and no embedding given")
        bb = np.zeros(da, dtype=complex)
        bb[np.asarray(embedding)] = b
        b = bb
    if a.ndim == 1:
        val = abs(np.vdot(b, a)) ** 2
    else:
        val = float(np.real(b.conj() @ a @ b))
    return float(min(max(val, 0.0), 1.0))
