import math

import numpy as np
import pytest

from conftest import load
from foldover.design import ModelSpec
from foldover.exceptions import ConfigurationError
from foldover.sim import SimScenario, format_result, generate_truth, run_simulation


def test_zero_counts_give_zero_truth(rng):
    truth = generate_truth(SimScenario(), 5, rng)
    assert not truth.beta.any()
    assert not (truth.main or truth.tfi or truth.quad)


def test_fixed_magnitudes(rng):
    sc = SimScenario(5, 4, 3, "fixed", {"main": 1.5, "tfi": 2.5, "quad": 3.0}, effect_scale=2.0)
    spec = ModelSpec("quad", tuple(range(1, 8)))
    truth = generate_truth(sc, 7, rng, spec)
    names = spec.term_names(7)
    nz = {names[k]: abs(b) for k, b in enumerate(truth.beta) if b}
    assert len(nz) == 12
    assert all(v == 3.0 for k, v in nz.items() if k.count("d") == 1 and "^" not in k)
    assert all(v == 5.0 for k, v in nz.items() if k.count("d") == 2)
    assert all(v == 6.0 for k, v in nz.items() if "^" in k)
    # strong heredity
    for t in truth.tfi:
        i, j = (int(x) for x in t.split("d")[1:])
        assert {i, j} <= truth.main
    assert all(int(q[1:q.index("^")]) in truth.main for q in truth.quad)


def test_offset_magnitudes_exceed_offset():
    rng = np.random.default_rng(3)
    sc = SimScenario(3, 2, 0, "offset", {"main": 2.0, "tfi": 1.0})
    for _ in range(50):
        t = generate_truth(sc, 6, rng)
        b = np.abs(t.beta)
        assert np.count_nonzero(b) == 5
        assert np.sort(b[b > 0])[0] >= 1.0
        assert sum(b[j] >= 2.0 for j in t.main) == 3


@pytest.mark.parametrize("counts, m", [((6, 0, 0), 5), ((2, 2, 0), 5), ((2, 0, 3), 5)])
def test_infeasible_counts(counts, m, rng):
    with pytest.raises(ConfigurationError):
        generate_truth(SimScenario(*counts), m, rng, ModelSpec("quad", tuple(range(1, m + 1))))


def test_scenario_validation_and_round_trip():
    with pytest.raises(ConfigurationError):
        SimScenario(mode="uniform")
    with pytest.raises(ConfigurationError):
        SimScenario(sigma=0.0)
    sc = SimScenario(3, 2, 1, "fixed", {"main": 1.5}, reps=20, seed=4)
    assert SimScenario.from_dict(sc.to_dict()) == sc


def test_determinism_across_workers():
    design = load("r1_a05_n16")
    sc = SimScenario(3, 2, 0, "offset", {"main": 2.0, "tfi": 1.0}, reps=40, seed=9)
    a = run_simulation(design, sc, n_jobs=1).to_dict()
    b = run_simulation(design, sc, n_jobs=2).to_dict()
    assert a == b


def test_vanishing_noise_finds_every_main_effect():
    design = load("r1_a05_n16")
    sc = SimScenario(3, 2, 0, "offset", {"main": 2.0, "tfi": 1.0}, sigma=1e-6, reps=100, seed=1)
    res = run_simulation(design, sc, alpha=0.05)
    assert res.rates["main"].tpr == 1.0
    assert res.rates["main"].fpr <= 0.05 + 0.03


def test_global_null_false_positive_rate():
    design = load("adsd_n24")
    alpha = 0.10
    res = run_simulation(design, SimScenario(reps=400, seed=2), alpha=alpha)
    r = res.rates["main"]
    assert math.isnan(r.tpr)
    mcse = math.sqrt(alpha * (1 - alpha) / (400 * 7))
    # per-factor tests are correlated within a replication, so allow for it
    assert abs(r.fpr - alpha) <= 3 * max(mcse, r.fpr_se)


def test_power_increases_with_signal():
    design = load("r1_a05_n16")
    tprs = []
    for off in (0.75, 2.0):
        sc = SimScenario(3, 0, 0, "offset", {"main": off}, reps=150, seed=5)
        tprs.append(run_simulation(design, sc).rates["main"].tpr)
    assert tprs[0] < tprs[1]


def test_rates_undefined_when_no_false_effects():
    design = load("c3_n14")
    res = run_simulation(design, SimScenario(5, 0, 0, "offset", {"main": 3.0}, reps=20, seed=0))
    d = res.to_dict()
    assert d["rates"]["main"]["fpr"] is None
    assert d["rates"]["main"]["tpr"] is not None
    text = format_result(res, "C3")
    assert "TPR" in text and "C3" in text and "    -" in text
