import math

import numpy as np
import pytest

from chiralcurrent import chirality as ch
from chiralcurrent import dynamics as dy
from chiralcurrent import runner as rn

KAPPA = 0.04341659518874279

EXPECTED_LABELS = {
    ("n3", "g"): ["gss", "sgs", "ssg"],
    ("n3", "s"): ["sgg", "gsg", "ggs"],
    ("n4", "g"): ["gTms", "sT0s", "sTmg"],
    ("n4", "s"): ["sTpg", "gT0g", "gTps"],
    ("n5t1", "g"): ["gTmTm", "sT0Tm", "sTmT0"],
    ("n5t1", "s"): ["sTpTp", "gT0Tp", "gTpT0"],
    ("n5t2", "g"): ["gsQm3", "sgQm3", "ssQm1"],
    ("n5t2", "s"): ["sgQp3", "gsQp3", "ggQp1"],
    ("n5t3", "g"): ["gssss", "sgsss", "ssgss", "sssgs", "ssssg"],
    ("n5t3", "s"): ["sgggg", "gsggg", "ggsgg", "gggsg", "ggggs"],
}


@pytest.mark.parametrize("name,inj", sorted(EXPECTED_LABELS))
def test_scenario_bases(name, inj):
    sc = ch.build_scenario(name, inj)
    assert sc.basis.labels == EXPECTED_LABELS[name, inj]
    B = sc.basis.vectors
    assert np.allclose(B.conj() @ B.T, np.eye(len(B)), atol=1e-14)
    assert np.array_equal(sc.psi0, B[0])
    pops, leak = ch.population_series(sc.psi0[None, :], sc.basis)
    assert pops[sc.initial_label][0] == pytest.approx(1.0)
    assert sum(p[0] for p in pops.values()) == pytest.approx(1.0)
    assert abs(leak[0]) <= 1e-14


def test_triplet_and_quartet_amplitudes():
    sc = ch.build_scenario("n5t2", "g")
    v = sc.basis.vectors[2]  # ssQm1: one g spread over atoms 3..5
    nz = np.flatnonzero(np.abs(v) > 0)
    assert len(nz) == 3 and np.allclose(np.abs(v[nz]), 1 / math.sqrt(3))
    sc = ch.build_scenario("n4", "g")
    v = sc.basis.vectors[1]  # sT0s
    assert np.allclose(np.sort(np.abs(v[np.abs(v) > 0])), [1 / math.sqrt(2)] * 2)


def test_scenario_name_parsing():
    assert ch.parse_scenario_name("n4/s") == ("n4", "s")
    assert ch.parse_scenario_name("n4-s") == ("n4", "s")
    assert ch.parse_scenario_name("n3") == ("n3", "g")
    with pytest.raises(ValueError, match="unknown scenario"):
        ch.build_scenario("n6")
    with pytest.raises(ValueError):
        ch.build_scenario("n3", "e")


def test_population_series_mixed_and_embedding():
    sc = ch.build_scenario("n3", "g")
    rho = np.outer(sc.psi0, sc.psi0.conj())[None]
    pops, _ = ch.population_series(rho, sc.basis)
    assert pops["gss"][0] == pytest.approx(1.0)
    big = np.zeros((1, 16), complex)
    idx = np.arange(8) * 2
    big[0, idx] = sc.psi0
    pops, leak = ch.population_series(big, sc.basis, embedding=idx)
    assert pops["gss"][0] == pytest.approx(1.0) and abs(leak[0]) < 1e-14
    with pytest.raises(ValueError):
        ch.population_series(big, sc.basis)


@pytest.mark.parametrize("inj", ["g", "s"])
def test_three_ring_populations_are_shifted_squares(inj):
    T = math.pi / (math.sqrt(3) * KAPPA)
    out = rn.run(rn.RunConfig(scenario="n3", injection=inj, tier="effective", periods=1.0,
                              points_per_period=121))
    t = out.times
    wt = 2 * math.sqrt(3) * KAPPA * t
    x = [(1 + 2 * np.cos(wt + 2 * math.pi * j / 3)) / 3 for j in (0, 1, 2)]
    # g hops 1 -> 2 -> 3, s hops 1 -> 3 -> 2
    order = [0, 2, 1] if inj == "g" else [0, 1, 2]
    labels = EXPECTED_LABELS["n3", inj]
    for lab, j in zip(labels, order):
        assert np.abs(out.populations[lab] - x[j] ** 2).max() <= 1e-10
    assert out.summary["period_us"] == pytest.approx(T, rel=1e-12)


@pytest.mark.parametrize("name", ["n3", "n4", "n5t1", "n5t2", "n5t3"])
@pytest.mark.parametrize("inj", ["g", "s"])
def test_effective_dynamics_stay_in_tracked_subspace(name, inj):
    out = rn.run(rn.RunConfig(scenario=name, injection=inj, tier="effective", periods=1.0,
                              points_per_period=41))
    assert np.abs(out.leakage).max() <= 1e-10
    assert out.summary["max_leakage"] <= 1e-10


def test_detection_on_synthetic_rotation():
    t = np.linspace(0, 3, 301)
    pops = {lab: np.cos(math.pi / 3 * (t - j)) ** 8 for j, lab in enumerate("abc")}
    rep = ch.detect_chiral_order(t, pops, 0.9)
    assert rep.labels() == ["a", "b", "c", "a"]
    assert rep.direction == "counterclockwise"
    assert rep.period == pytest.approx(3.0, abs=1e-6)
    assert [s for _, s in rep.schedule] == pytest.approx([0, 1, 2, 3], abs=1e-6)
    rev = {"a": pops["a"], "b": pops["c"], "c": pops["b"]}
    assert ch.detect_chiral_order(t, rev, 0.9).direction == "clockwise"


def test_detection_without_peaks():
    t = np.linspace(0, 1, 11)
    rep = ch.detect_chiral_order(t, {"a": np.full(11, 0.5), "b": np.full(11, 0.5)}, 0.9)
    assert rep.schedule == [] and rep.direction == "none" and rep.period is None


def test_direction_labels():
    assert ch.direction_of(1, 3) == "counterclockwise"
    assert ch.direction_of(2, 3) == "clockwise"
    assert ch.direction_of(2, 5) == "counterclockwise"
    assert ch.direction_of(3, 5) == "clockwise"
    assert ch.direction_of(5, 5) == "none"


def test_predicted_schedules():
    rep = ch.predicted_schedule("n4", "g", period=3.0)
    assert rep.labels() == ["gTms", "sT0s", "sTmg", "gTms"]
    assert [s for _, s in rep.schedule] == [0.0, 1.0, 2.0, 3.0]
    assert rep.direction == "counterclockwise"
    rep = ch.predicted_schedule("n5t2/s")
    assert rep.labels() == ["sgQp3", "ggQp1", "gsQp3", "sgQp3"]
    assert rep.direction == "clockwise"
    rep = ch.predicted_schedule("n5t3", "g")
    assert rep.labels() == ["gssss", "ssgss", "ssssg", "sgsss", "sssgs", "gssss"]


@pytest.mark.parametrize("name", ["n3", "n4", "n5t1", "n5t2", "n5t3"])
def test_injection_flip_reverses_order(name):
    sc = ch.SCENARIOS[name]
    n = sc.n_nodes
    g = ch.ring_step(sc, "g")
    s = ch.ring_step(sc, "s")
    assert (g + s) % n == 0
    assert ch.predicted_schedule(name, "g").direction != ch.predicted_schedule(name, "s").direction


def test_five_ring_helpers():
    assert ch.five_ring_frequency(1.0) == pytest.approx(4 * 0.3632712640026804)
    assert np.array_equal(ch.five_ring_block(0.1, 0.02), dy.ring5_subspace_matrix(0.4, 0.08))
