"""Scenario execution across model tiers and the table generators.

Tiers, from most to least reduced:

``analytic``   closed-form ring propagators on the tracked basis
``effective``  z-DMI spin Hamiltonian (high-frequency limit)
``projected``  ground manifold plus cavity after eliminating ``|e>``
``full``       three-level atoms plus cavity in the rotating frame
``master``     ``full`` with spontaneous emission
``toggling``   pulse-sequence synthesis of the isotropic DMI (three atoms)

All non-spin tiers are compared with the effective model in the gauged
interaction frame. The maps between frames are diagonal phases, so the
populations of product states do not depend on the frame.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from . import chirality as ch
from . import dynamics as dy
from . import floquet as fq
from . import hilbert as hb
from . import model as md
from . import toggling as tg

TIERS = ("analytic", "effective", "projected", "full", "master", "toggling")
TWO_PI = 2 * math.pi


@dataclass
class RunConfig:
    """Every knob of a run; frequencies in rad/us, times in us."""

    scenario: str = "n3"
    injection: str = "g"
    tier: str = "effective"
    Delta: float = TWO_PI * 8100.0
    Omega: float = TWO_PI * 405.0
    g: float = TWO_PI * 90.0
    nu: float = TWO_PI * 112.5
    nu_ratio: float | None = None
    drive_ratio: float = 2.4048
    gamma: float = 0.0
    omega_e: float = TWO_PI * 61.171e6
    omega_g: float = TWO_PI * 1087.773
    detuning_mode: str = "exact"
    drop_photon_stark: bool = False
    ideal_ratio: bool = False
    fock_cutoff: int = 4
    fock_check: bool = False
    method: str = "auto"
    tolerance: float = 1e-13
    magnus_steps: int = 512
    periods: float = 1.0
    points_per_period: int = 2001
    threshold: float = 0.9
    toggling_order: int = 1
    toggling_cycles: int = 16
    toggling_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    toggling_segments: tuple[tuple[str, float], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}; choose from {TIERS}")
        if self.toggling_order not in (1, 2):
            raise ValueError(f"toggling order must be 1 or 2, got {self.toggling_order}")


@dataclass
class RunOutput:
    config: RunConfig
    times: np.ndarray
    populations: dict[str, np.ndarray]
    leakage: np.ndarray
    fidelity: np.ndarray
    photon_number: np.ndarray
    summary: dict = field(default_factory=dict)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"time_us": self.times}
        cols.update({f"pop_{k}": v for k, v in self.populations.items()})
        cols.update(leakage=self.leakage, fidelity_vs_effective=self.fidelity,
                    photon_number=self.photon_number)
        return cols


# -- set-up -------------------------------------------------------------------


def build_params(cfg: RunConfig, spec: ch.RingSpec) -> md.SystemParams:
    p = md.SystemParams.from_detunings(
        spec.n_atoms, cfg.Delta, cfg.Omega * np.asarray(spec.omega_pattern), cfg.g,
        gamma=cfg.gamma, omega_e=cfg.omega_e, omega_g=cfg.omega_g,
    )
    return md.solve_delta_prime(p, cfg.detuning_mode)


def build_drive(cfg: RunConfig, params: md.SystemParams, spec: ch.RingSpec) -> md.DriveProtocol:
    nu = md.nu_for_ratio(params, cfg.nu_ratio) if cfg.nu_ratio else cfg.nu
    return md.DriveProtocol.uniform(cfg.drive_ratio, nu, spec.phases)


def effective_model(cfg: RunConfig, params, drive, couplings) -> np.ndarray:
    if cfg.ideal_ratio:
        if cfg.scenario.split("/")[0] != "n5t3":
            raise ValueError("ideal_ratio only applies to the n5t3 ring")
        return fq.ring_dmi_hamiltonian(5, [couplings.kappa1, fq.IDEAL_FIVE_RING_RATIO * couplings.kappa1])
    return fq.dmi_spin_hamiltonian(params.raman_weights, drive.phi, drive.frequency, drive.ratio)


def chiral_period(spec: ch.RingSpec, couplings: fq.EffectiveCouplings) -> float:
    if spec.n_nodes == 5:
        return TWO_PI / ch.five_ring_frequency(couplings.kappa1)
    return couplings.period


def time_grid(cfg: RunConfig, period: float) -> np.ndarray:
    n = int(round(cfg.periods * (cfg.points_per_period - 1)))
    return np.linspace(0.0, cfg.periods * period, n + 1)


# -- tiers --------------------------------------------------------------------


def _photon_numbers(layout: hb.SpaceLayout) -> np.ndarray:
    return np.array([n for n, _ in hb.basis_labels(layout)], dtype=float)


def _cavity_run(cfg: RunConfig, params, drive, sc: ch.Scenario, t_grid: np.ndarray,
                fock_cutoff: int):
    """Propagate a cavity tier; return times, gauged-frame full states and diagnostics."""
    levels = 2 if cfg.tier == "projected" else 3
    layout = hb.SpaceLayout(sc.n_atoms, fock_cutoff, levels)
    idx = hb.ground_vacuum_indices(layout)
    psi0 = np.zeros(layout.dim, dtype=complex)
    psi0[idx] = sc.psi0
    if cfg.tier == "projected":
        H = md.interaction_terms(params, drive, layout, gauge_beta=True,
                                 drop_photon_stark=cfg.drop_photon_stark)
        frame = "gauged"
    else:
        H = md.rotating_terms(params, drive, layout, periodic_frame=True)
        frame = "periodic"
    if cfg.tier == "master":
        res = dy.propagate_master(H, md.lindblad_dissipators(params, layout), psi0, t_grid,
                                  magnus_steps=cfg.magnus_steps)
    else:
        res = dy.propagate_schrodinger(H, psi0, t_grid, tol=cfg.tolerance, method=cfg.method,
                                       magnus_steps=cfg.magnus_steps)
    states = res.full_states()
    times = res.times
    if frame != "gauged":
        for i, t in enumerate(times):
            ph = np.diag(md.to_gauged_frame(params, drive, layout, t, frame))
            states[i] = (ph[:, None] * states[i] * ph.conj()[None, :]) if res.mixed else ph * states[i]
    return layout, times, states, res


def _effective_states(H_eff: np.ndarray, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
    return dy.propagate_schrodinger(H_eff, psi0, times, method="expm").states


def _analytic_states(sc: ch.Scenario, couplings, times, ideal: bool) -> tuple[np.ndarray, str]:
    """Basis-coordinate trajectory from the closed forms (or the exact block exponential)."""
    e0 = np.zeros(len(sc.basis), dtype=complex)
    e0[0] = 1.0
    flip = sc.injection == "s"
    out = []
    if sc.spec.n_nodes == 3:
        route = "closed-form"
        for t in times:
            U = dy.analytic_u3(t, couplings.kappa)
            out.append((U.conj().T if flip else U) @ e0)
        return np.array(out), route
    k1 = couplings.kappa1
    k2 = fq.IDEAL_FIVE_RING_RATIO * k1 if ideal else couplings.kappa2
    closed = abs(k2 / k1 - fq.IDEAL_FIVE_RING_RATIO) <= 1e-9
    M = ch.five_ring_block(k1, k2)
    for t in times:
        U = dy.analytic_u5(t, 4 * k1, 4 * k2) if closed else expm(-1j * M * t)
        out.append((U.conj().T if flip else U) @ e0)
    return np.array(out), "closed-form" if closed else "matrix-exponential fallback"


def run(cfg: RunConfig) -> RunOutput:
    if cfg.tier == "toggling":
        return run_toggling(cfg)
    sc = ch.build_scenario(cfg.scenario, cfg.injection)
    spec = sc.spec
    params = build_params(cfg, spec)
    drive = build_drive(cfg, params, spec)
    couplings = fq.coupling_constants(params, drive)
    period = chiral_period(spec, couplings)
    t_grid = time_grid(cfg, period)
    H_eff = effective_model(cfg, params, drive, couplings)
    diag: dict = {}

    if cfg.tier in ("effective", "analytic"):
        times = t_grid
        ref = _effective_states(H_eff, sc.psi0, times)
        if cfg.tier == "effective":
            states = ref
        else:
            coords, route = _analytic_states(sc, couplings, times, cfg.ideal_ratio)
            states = coords @ sc.basis.vectors
            diag["analytic_route"] = route
        pops, leak = ch.population_series(states, sc.basis)
        fid = np.array([dy.fidelity(s, r) for s, r in zip(states, ref)])
        photons = np.zeros(len(times))
    else:
        layout, times, states, res = _cavity_run(cfg, params, drive, sc, t_grid, cfg.fock_cutoff)
        diag.update(res.diagnostics)
        idx = hb.ground_vacuum_indices(layout)
        ref = _effective_states(H_eff, sc.psi0, times)
        pops, leak = ch.population_series(states, sc.basis, res.mixed, embedding=idx)
        fid = np.array([dy.fidelity(s, r, idx) for s, r in zip(states, ref)])
        nph = _photon_numbers(layout)
        if res.mixed:
            photons = np.real(np.einsum("tii,i->t", states, nph))
        else:
            photons = np.abs(states) ** 2 @ nph
        if cfg.fock_check:
            _, _, states2, res2 = _cavity_run(cfg, params, drive, sc, t_grid, cfg.fock_cutoff + 2)
            lay2 = hb.SpaceLayout(sc.n_atoms, cfg.fock_cutoff + 2, layout.levels)
            pops2, _ = ch.population_series(states2, sc.basis, res2.mixed,
                                            embedding=hb.ground_vacuum_indices(lay2))
            shift = max(float(np.max(np.abs(pops[k] - pops2[k]))) for k in pops)
            diag["fock_convergence"] = {"fock_cutoff": cfg.fock_cutoff,
                                        "compared_with": cfg.fock_cutoff + 2,
                                        "max_population_shift": shift, "passed": shift < 1e-4}
        diag["max_photon_number"] = float(np.max(photons))
        diag["photon_number_ok"] = bool(np.max(photons) < 1e-2)

    report = ch.detect_chiral_order(times, pops, cfg.threshold, sc.initial_label)
    summary = _summary(cfg, params, drive, couplings, period, sc, report, times, fid, leak, diag)
    return RunOutput(cfg, times, pops, leak, fid, photons, summary)


def _fidelity_at(times, fid, t) -> float | None:
    if t > times[-1] * (1 + 1e-12) + 1e-12:
        return None
    return float(fid[int(np.argmin(np.abs(times - t)))])


def _summary(cfg, params, drive, couplings, period, sc, report, times, fid, leak, diag) -> dict:
    pred = ch.predicted_schedule(cfg.scenario, cfg.injection, period)
    n_per = int(math.floor(cfg.periods + 1e-9))
    return {
        "scenario": sc.name,
        "injection": sc.injection,
        "tier": cfg.tier,
        "params": {
            "Delta_k": list(params.Delta),
            "Delta_prime": params.Delta_prime,
            "Omega_k": list(params.Omega),
            "g": params.g,
            "gamma": params.gamma,
            "omega_e": params.omega_e,
            "omega_g": params.omega_g,
            "omega_c": params.omega_c,
            "omega_L": list(params.omega_L),
            "delta_residuals": list(params.delta),
            "detuning_mode": cfg.detuning_mode,
            "units": "rad/us",
        },
        "drive": {"eps": drive.eps[0], "nu": drive.frequency, "ratio": drive.ratio,
                  "phases": list(drive.phi), "beta": list(drive.beta),
                  "at_j0_zero": drive.at_j0_zero},
        "couplings": {"kappa": couplings.kappa, "kappa1": couplings.kappa1,
                      "kappa2": couplings.kappa2, "kappa2_over_kappa1": couplings.ratio,
                      "n_trunc": couplings.n_trunc},
        "period_us": period,
        "fidelity_at_periods": {f"{k}T": _fidelity_at(times, fid, k * period) for k in range(1, n_per + 1)},
        "min_fidelity": float(np.min(fid)),
        "max_leakage": float(np.max(leak)),
        "chiral_report": report.to_dict(),
        "predicted_schedule": pred.to_dict(),
        "schedule_matches_prediction": report.labels()[: len(pred.labels())] == pred.labels(),
        "diagnostics": diag,
    }


# -- toggling -----------------------------------------------------------------


def segment_sequence(H: np.ndarray, cycle_time: float, segments, cycles: int = 1) -> tg.PulseSequence:
    """Sequence from ``(pulse name, weight)`` pairs; every segment evolves under ``H``."""
    layout = hb.SpaceLayout(int(round(math.log2(H.shape[0]))), None, 2)
    w = np.array([float(wt) for _, wt in segments])
    if np.any(w <= 0):
        raise tg.SequenceError("segment weights must be positive")
    taus = cycle_time * w / w.sum()
    segs = [tg.Segment(H, float(t), tg.pulse_from_name(name, layout)) for (name, _), t in zip(segments, taus)]
    return tg.PulseSequence(segs, cycles, names=[name for name, _ in segments])


def run_toggling(cfg: RunConfig) -> RunOutput:
    """Stroboscopic trajectory of the three-atom ring under the DMI pulse sequence."""
    sc = ch.build_scenario("n3", cfg.injection)
    params = build_params(cfg, sc.spec)
    drive = build_drive(cfg, params, sc.spec)
    couplings = fq.coupling_constants(params, drive)
    H_Z = effective_model(cfg, params, drive, couplings)
    total = cfg.periods * couplings.period
    m = cfg.toggling_cycles
    if cfg.toggling_segments:
        seq = segment_sequence(H_Z, total / m, cfg.toggling_segments, cycles=m)
    else:
        seq = tg.dmi_sequence(H_Z, total / m, cfg.toggling_weights, cycles=m)
    Hbar = tg.average_hamiltonian(seq)
    Uc = tg.cycle_propagator(seq, cfg.toggling_order)
    times = np.arange(m + 1) * seq.period
    states, psi = [], sc.psi0.copy()
    for _ in range(m + 1):
        states.append(psi)
        psi = Uc @ psi
    states = np.array(states)
    ref = np.array([expm(-1j * Hbar * t) @ sc.psi0 for t in times])
    pops, leak = ch.population_series(states, sc.basis)
    fid = np.array([dy.fidelity(s, r) for s, r in zip(states, ref)])
    errs1, slope1 = tg.convergence_study(H_Z, total, 1)
    errs2, slope2 = tg.convergence_study(H_Z, total, 2)
    summary = {
        "scenario": "n3", "injection": cfg.injection, "tier": "toggling",
        "couplings": {"kappa": couplings.kappa},
        "sequence": {"order": cfg.toggling_order, "cycles": m, "cycle_time_us": seq.period,
                     "weights": list(cfg.toggling_weights),
                     "pulses": seq.names,
                     "closure_residual": seq.closure_residual()},
        "cycle_defect": tg.cycle_defect(seq, cfg.toggling_order),
        "final_error": float(np.linalg.norm(
            np.linalg.matrix_power(Uc, m) - expm(-1j * Hbar * total), 2)),
        "convergence": {"m": [4, 8, 16, 32], "order1_errors": errs1.tolist(), "order1_slope": slope1,
                        "order2_errors": errs2.tolist(), "order2_slope": slope2},
        "min_fidelity": float(np.min(fid)),
    }
    return RunOutput(cfg, times, pops, leak, fid, np.zeros(len(times)), summary)


# -- tables -------------------------------------------------------------------

FIDELITY_ROWS = [("n3", "g"), ("n3", "s"), ("n4", "g"), ("n4", "s"),
                 ("n5t1", "g"), ("n5t1", "s"), ("n5t2", "g"), ("n5t2", "s")]
PUBLISHED_FIDELITY = {
    ("n3", "g"): (0.9901, 0.9655), ("n3", "s"): (0.9812, 0.9266),
    ("n4", "g"): (0.9905, 0.9662), ("n4", "s"): (0.9672, 0.8717),
    ("n5t1", "g"): (0.9905, 0.9662), ("n5t1", "s"): (0.9489, 0.8059),
    ("n5t2", "g"): (0.9908, 0.9662), ("n5t2", "s"): (0.9489, 0.8059),
}
NU_RATIOS = (10.0, 15.0, 20.0, 25.0)
PUBLISHED_NU_SWEEP = (0.8032, 0.9087, 0.9486, 0.9667)


def _fidelity_at_TT(cfg: RunConfig, n_periods: int) -> tuple[list[float], RunOutput]:
    out = run(replace(cfg, periods=float(n_periods), points_per_period=3))
    per = out.summary["period_us"]
    return [_fidelity_at(out.times, out.fidelity, k * per) for k in range(1, n_periods + 1)], out


def fidelity_table(base: RunConfig | None = None) -> list[dict]:
    """Fidelity of the projected model against the effective model at ``T`` and ``2T``."""
    base = base or RunConfig(tier="projected")
    rows = []
    for name, inj in FIDELITY_ROWS:
        (fT, f2T), out = _fidelity_at_TT(replace(base, scenario=name, injection=inj), 2)
        pub = PUBLISHED_FIDELITY[name, inj]
        rows.append({"scenario": name, "injection": inj, "initial_state": out.summary["chiral_report"]
                     ["schedule"][0]["label"] if out.summary["chiral_report"]["schedule"] else "",
                     "fidelity_T": fT, "fidelity_2T": f2T,
                     "published_T": pub[0], "published_2T": pub[1]})
    return rows


def nu_sweep_table(base: RunConfig | None = None, ratios=NU_RATIOS) -> list[dict]:
    """Fidelity at ``T`` for the s-injected four-atom ring versus ``nu / (Omega g / |Delta|)``."""
    base = base or RunConfig(tier="projected")
    rows = []
    for r, pub in zip(ratios, PUBLISHED_NU_SWEEP + (None,) * max(0, len(ratios) - 4)):
        (fT,), _ = _fidelity_at_TT(replace(base, scenario="n4", injection="s", nu_ratio=float(r)), 1)
        rows.append({"nu_ratio": float(r), "fidelity_T": fT, "published": pub})
    return rows


def schedule_table(base: RunConfig | None = None) -> list[dict]:
    """Population of each predicted ket at the predicted times (effective model)."""
    base = base or RunConfig(tier="effective")
    rows = []
    for name in ch.SCENARIOS:
        for inj in ch.INJECTIONS:
            cfg = replace(base, scenario=name, injection=inj, ideal_ratio=(name == "n5t3"))
            sc = ch.build_scenario(name, inj)
            params = build_params(cfg, sc.spec)
            drive = build_drive(cfg, params, sc.spec)
            couplings = fq.coupling_constants(params, drive)
            period = chiral_period(sc.spec, couplings)
            pred = ch.predicted_schedule(name, inj, period)
            H = effective_model(cfg, params, drive, couplings)
            times = np.array([t for _, t in pred.schedule])
            states = _effective_states(H, sc.psi0, times)
            pops, _ = ch.population_series(states, sc.basis)
            for (lab, t), i in zip(pred.schedule, range(len(times))):
                rows.append({"scenario": name, "injection": inj, "time_us": float(t),
                             "expected": lab, "population": float(pops[lab][i]),
                             "passed": bool(pops[lab][i] >= 0.999)})
    return rows
