"""Ring scenarios, composite-spin bases, population series and detection of
the cyclic visiting order.

A scenario is a ring of *nodes*; a node is one atom or a symmetric group of
atoms acting as one larger spin. The tracked basis of a scenario has one ket
per node: the injected level (``g`` or ``s``) sits on that node and every
other atom holds the opposite level. For a composite node the single
injected excitation is spread symmetrically (``T0``, ``Q-1/2`` or ``Q+1/2``).

Ket labels are ASCII: ``Tm T0 Tp`` for the triplet and ``Qm3 Qm1 Qp1 Qp3``
for the quartet, e.g. ``gTms`` is ``|g T- s>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Sequence

import numpy as np

from . import hilbert as hb
from .dynamics import SubspaceBasis, ring5_frequency, ring5_subspace_matrix

SQ2 = math.sqrt(0.5)
SQ3 = math.sqrt(1.0 / 3.0)


@dataclass(frozen=True)
class RingSpec:
    """Phase and Rabi pattern of a named ring; ``nodes`` group atom indices."""

    name: str
    phases: tuple[float, ...]
    omega_pattern: tuple[float, ...]
    nodes: tuple[tuple[int, ...], ...]

    @property
    def n_atoms(self) -> int:
        return len(self.phases)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


TAU = 2 * math.pi
SCENARIOS: dict[str, RingSpec] = {
    "n3": RingSpec("n3", tuple(TAU * k / 3 for k in (1, 2, 3)), (1.0, 1.0, 1.0), ((0,), (1,), (2,))),
    "n4": RingSpec("n4", (TAU / 3, 2 * TAU / 3, 2 * TAU / 3, TAU), (1.0, SQ2, SQ2, 1.0),
                   ((0,), (1, 2), (3,))),
    "n5t1": RingSpec("n5t1", (TAU / 3, 2 * TAU / 3, 2 * TAU / 3, TAU, TAU), (1.0, SQ2, SQ2, SQ2, SQ2),
                     ((0,), (1, 2), (3, 4))),
    "n5t2": RingSpec("n5t2", (TAU / 3, 2 * TAU / 3, TAU, TAU, TAU), (1.0, 1.0, SQ3, SQ3, SQ3),
                     ((0,), (1,), (2, 3, 4))),
    "n5t3": RingSpec("n5t3", tuple(-TAU * k / 5 for k in range(1, 6)), (1.0,) * 5,
                     tuple((k,) for k in range(5))),
}
INJECTIONS = ("g", "s")

# one excitation spread over a group, and the group with none
_NODE_TOKENS = {
    ("g", 1, True): "g", ("g", 1, False): "s",
    ("s", 1, True): "s", ("s", 1, False): "g",
    ("g", 2, True): "T0", ("g", 2, False): "Tm",
    ("s", 2, True): "T0", ("s", 2, False): "Tp",
    ("g", 3, True): "Qm1", ("g", 3, False): "Qm3",
    ("s", 3, True): "Qp1", ("s", 3, False): "Qp3",
}
_TOKEN_LEVELS = {
    "g": (1, "g"), "s": (1, "s"),
    "Tm": (2, 0), "T0": (2, 1), "Tp": (2, 2),
    "Qm3": (3, 0), "Qm1": (3, 1), "Qp1": (3, 2), "Qp3": (3, 3),
}


def _dicke(n_sites: int, n_g: int) -> dict[str, float]:
    """Symmetric state of ``n_sites`` spins with ``n_g`` atoms in ``g``, as configuration -> amplitude."""
    cfgs = sorted(set(permutations("g" * n_g + "s" * (n_sites - n_g))))
    amp = 1.0 / math.sqrt(len(cfgs))
    return {"".join(c): amp for c in cfgs}


def node_tokens(spec: RingSpec, injection: str, node: int) -> list[str]:
    if injection not in INJECTIONS:
        raise ValueError(f"injection must be 'g' or 's', got {injection!r}")
    return [_NODE_TOKENS[injection, len(group), j == node] for j, group in enumerate(spec.nodes)]


def composite_ket(tokens: Sequence[str], spec: RingSpec) -> np.ndarray:
    """Ket on the ``2**N`` spin space for one token per node."""
    layout = hb.SpaceLayout(spec.n_atoms, None, 2)
    parts: list[dict[str, float]] = []
    for tok, group in zip(tokens, spec.nodes):
        size, lev = _TOKEN_LEVELS[tok]
        if size != len(group):
            raise ValueError(f"token {tok} does not fit a node of {len(group)} atoms")
        parts.append({lev: 1.0} if size == 1 else _dicke(size, lev))
    combos: list[tuple[list, float]] = [([None] * spec.n_atoms, 1.0)]
    for part, group in zip(parts, spec.nodes):
        new = []
        for cfg, amp in combos:
            for sub, a in part.items():
                c = list(cfg)
                for site, lev in zip(group, sub):
                    c[site] = lev
                new.append((c, amp * a))
        combos = new
    psi = np.zeros(layout.dim, dtype=complex)
    for cfg, amp in combos:
        psi[hb.basis_index(layout, cfg)] += amp
    return psi


def tracked_basis(spec: RingSpec, injection: str) -> SubspaceBasis:
    """One ket per ring node, in ring order."""
    labels, vecs = [], []
    for node in range(spec.n_nodes):
        toks = node_tokens(spec, injection, node)
        labels.append("".join(toks))
        vecs.append(composite_ket(toks, spec))
    return SubspaceBasis(labels, np.array(vecs))


@dataclass
class Scenario:
    spec: RingSpec
    injection: str
    basis: SubspaceBasis
    psi0: np.ndarray  # on the 2**N spin space

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def initial_label(self) -> str:
        return self.basis.labels[0]

    @property
    def n_atoms(self) -> int:
        return self.spec.n_atoms


def parse_scenario_name(name: str) -> tuple[str, str]:
    """``"n4"``, ``"n4/s"`` or ``"n4-s"`` -> ``("n4", injection)``."""
    base, _, inj = name.replace("-", "/").partition("/")
    return base, inj or "g"


def build_scenario(name: str, injection: str | None = None) -> Scenario:
    base, inj = parse_scenario_name(name)
    inj = injection or inj
    if base not in SCENARIOS:
        raise ValueError(f"unknown scenario {base!r}; known: {sorted(SCENARIOS)}")
    spec = SCENARIOS[base]
    basis = tracked_basis(spec, inj)
    return Scenario(spec, inj, basis, basis.vectors[0].copy())


# -- populations --------------------------------------------------------------


def population_series(states: np.ndarray, basis: SubspaceBasis, mixed: bool | None = None,
                      embedding: np.ndarray | None = None) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """``p_i(t) = |<b_i|psi(t)>|**2`` (or ``<b_i|rho|b_i>``) and leakage ``1 - sum_i p_i``.

    ``embedding`` places the basis (spin space) inside a larger model space.
    """
    states = np.asarray(states)
    mixed = states.ndim == 3 if mixed is None else mixed
    d = states.shape[-1]
    B = basis.vectors
    if B.shape[1] != d:
        if embedding is None:
            raise ValueError(f"basis dimension {B.shape[1]} does not match state dimension {d}")
        big = np.zeros((len(basis), d), dtype=complex)
        big[:, np.asarray(embedding)] = B
        B = big
    if mixed:
        pops = np.real(np.einsum("bi,tij,bj->tb", B.conj(), states, B))
    else:
        pops = np.abs(states @ B.conj().T) ** 2
    pops = np.clip(pops, 0.0, 1.0)
    out = {lab: pops[:, i] for i, lab in enumerate(basis.labels)}
    return out, 1.0 - pops.sum(axis=1)


# -- detection ----------------------------------------------------------------


@dataclass
class ChiralReport:
    schedule: list[tuple[str, float]]
    direction: str
    peaks: list[float] = field(default_factory=list)
    period: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def labels(self) -> list[str]:
        return [lab for lab, _ in self.schedule]

    def to_dict(self) -> dict:
        return {
            "schedule": [{"label": l, "time_us": t} for l, t in self.schedule],
            "direction": self.direction,
            "peaks": list(self.peaks),
            "period_us": self.period,
            "diagnostics": self.diagnostics,
        }


def _refine_peak(t: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex of the parabola through samples ``i-1, i, i+1``."""
    if i <= 0 or i >= len(y) - 1:
        return float(t[i]), float(y[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return float(t[i]), float(y1)
    off = 0.5 * (y0 - y2) / den
    h = t[i + 1] - t[i]
    return float(t[i] + off * h), float(y1 - 0.25 * (y0 - y2) * off)


def direction_of(step: int, n_nodes: int) -> str:
    step %= n_nodes
    if step == 0:
        return "none"
    return "counterclockwise" if step < n_nodes / 2 else "clockwise"


def detect_chiral_order(times, populations: dict[str, np.ndarray], threshold: float = 0.9,
                        initial: str | None = None) -> ChiralReport:
    """Ordered schedule of populations peaking above ``threshold``.

    ``populations`` must be in ring order. A visit is a maximal run of
    samples where one state dominates above ``threshold``; its time is the
    interpolated peak. The period is the first return of the initial state.
    """
    t = np.asarray(times, dtype=float)
    labels = list(populations)
    P = np.array([populations[l] for l in labels])
    initial = initial or labels[0]
    n = len(labels)
    top = np.argmax(P, axis=0)
    above = P[top, np.arange(len(t))] >= threshold
    visits: list[tuple[int, float, float]] = []
    i = 0
    while i < len(t):
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(t) and above[j + 1] and top[j + 1] == top[i]:
            j += 1
        node = int(top[i])
        k = i + int(np.argmax(P[node, i:j + 1]))
        tp, yp = _refine_peak(t, P[node], k)
        visits.append((node, tp, min(yp, 1.0)))
        i = j + 1
    if not visits:
        return ChiralReport([], "none", [], None,
                            {"max_population": float(P.max(initial=0.0)), "threshold": threshold})
    schedule = [(labels[v[0]], v[1]) for v in visits]
    steps = [(b[0] - a[0]) % n for a, b in zip(visits, visits[1:])]
    dirs = {direction_of(s, n) for s in steps}
    direction = dirs.pop() if len(dirs) == 1 else "none"
    i0 = labels.index(initial)
    period = next((tp for node, tp, _ in visits if node == i0 and tp > t[0] + 1e-12), None)
    diag = {"threshold": threshold, "steps": steps, "consistent": len(set(steps)) <= 1}
    return ChiralReport(schedule, direction, [v[2] for v in visits], period, diag)


def ring_step(spec: RingSpec, injection: str) -> int:
    """Node increment per visit: the g-injected current moves forward, the s-injected one backward."""
    forward = 1 if spec.n_nodes == 3 else 2
    return forward if injection == "g" else spec.n_nodes - forward


def predicted_schedule(name: str, injection: str | None = None,
                       period: float | None = None) -> ChiralReport:
    """Expected visiting order over one period, at times ``period * j / n_nodes``.

    Three-node rings: ``period = pi / (sqrt(3) kappa)``. The five-ring skips
    one site per visit with ``period = 2 pi / omega``.
    """
    sc = build_scenario(name, injection)
    spec = sc.spec
    n = spec.n_nodes
    step = ring_step(spec, sc.injection)
    order = [(j * step) % n for j in range(n + 1)]
    times = [period * j / n if period is not None else float("nan") for j in range(n + 1)]
    schedule = [(sc.basis.labels[node], tj) for node, tj in zip(order, times)]
    return ChiralReport(schedule, direction_of(step, n), [1.0] * (n + 1), period)


def five_ring_frequency(kappa1: float) -> float:
    """Base frequency of the single-excitation block of ``kappa1 o1 + kappa2 o2``.

    The block of the Pauli-operator Hamiltonian equals
    ``ring5_subspace_matrix(4 kappa1, 4 kappa2)``.
    """
    return ring5_frequency(4 * kappa1)


def five_ring_block(kappa1: float, kappa2: float) -> np.ndarray:
    return ring5_subspace_matrix(4 * kappa1, 4 * kappa2)
