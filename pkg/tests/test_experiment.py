import io

import numpy as np
import pytest

from dtfl import experiment, fl
from dtfl import reputation as rep
from dtfl.cost import ClientProfile, ServerProfile
from dtfl.game import make_instance
from dtfl.scenario import Scenario, load_scenario, parse_overrides, read_config

FAST = dict(rounds=3, n_clients=6, n_selected=3, samples_per_client=200, n_val=200, n_test=300)


def test_defaults_follow_table_one():
    sc = Scenario()
    assert (sc.n_clients, sc.n_selected, sc.radius) == (20, 5, 500.0)
    assert (sc.bandwidth, sc.path_loss_exponent, sc.noise_density_dbm) == (1e6, 3.76, -174.0)
    assert (sc.p_min, sc.p_max, sc.cycles_per_sample) == (0.01, 0.1, 1e7)
    assert (sc.f_min, sc.f_max, sc.f_server, sc.t_max) == (1e9, 10e9, 100e9, 10.0)
    assert (sc.payload_bits, sc.lr, sc.kappa) == (1e6, 0.01, 2e-28)
    assert sc.noise_power == pytest.approx(3.981071705534986e-15, rel=1e-12)


def test_config_file_then_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nseed = 4\nroni = false\nweights = 0.5, 0.5, 0\nbandwidth=2e6\n")
    sc = load_scenario(cfg, ["seed=9"])
    assert sc.seed == 9 and sc.roni is False
    assert sc.weights == (0.5, 0.5, 0.0) and sc.bandwidth == 2e6


def test_config_round_trip(tmp_path):
    sc = Scenario(seed=3, poison_ratio=0.3, weights=(0.5, 0.5, 0.0))
    path = tmp_path / "a.cfg"
    path.write_text(sc.to_text())
    assert load_scenario(path) == sc
    assert read_config(path)["seed"] == "3"


@pytest.mark.parametrize("pairs", [["nope=1"], ["seed=1.5"], ["roni=maybe"], ["seed"]])
def test_bad_overrides(pairs):
    with pytest.raises(ValueError):
        parse_overrides(pairs)


@pytest.mark.parametrize("bad", [dict(n_selected=30), dict(scheme="x"), dict(p_min=0.5),
                                 dict(weights=(0.5, 0.5, 0.5)), dict(bandwidth=0.0),
                                 dict(poison_ratio=1.5), dict(rounds=-1)])
def test_scenario_validation(bad):
    with pytest.raises(ValueError):
        Scenario(**bad)


def test_zero_rounds_gives_header_only():
    text = experiment.simulation_csv(Scenario(rounds=0))
    assert text == ",".join(experiment.MetricsRow.columns()) + "\n"


def test_same_seed_same_bytes():
    sc = Scenario(**FAST, poison_ratio=0.3)
    a = experiment.simulation_csv(sc)
    assert a == experiment.simulation_csv(sc)
    assert a != experiment.simulation_csv(sc.replace(seed=1))
    assert len(a.splitlines()) == 1 + FAST["rounds"]


def test_rows_have_finite_costs_and_valid_selection():
    sc = Scenario(**FAST)
    for rec, cost, row in experiment.simulate_rounds(sc):
        assert len(rec.selected) == sc.n_selected
        assert np.isfinite([row.T, row.E, row.total, row.accuracy]).all()
        assert row.total == pytest.approx(row.T + row.E)
        assert row.T <= sc.t_max * (1 + 1e-9) or cost.t_dt.max() > sc.t_max


def test_poisoners_count():
    w = experiment.build_world(Scenario(poison_ratio=0.3), with_data=False)
    assert len(w.poisoners) == 6
    assert all(not w.profiles[c].honest for c in w.poisoners)


def test_round_gains_reproducible():
    w = experiment.build_world(Scenario(), with_data=False)
    np.testing.assert_array_equal(experiment.round_gains(w, 2), experiment.round_gains(w, 2))
    assert not np.array_equal(experiment.round_gains(w, 2), experiment.round_gains(w, 3))


def test_random_scheme_respects_boxes():
    pr = [ClientProfile(1000, id=i) for i in range(3)]
    inst = make_instance(pr, ServerProfile(), [1e-9, 5e-10, 2e-10])
    rng = np.random.default_rng(0)
    for _ in range(1000):
        d, cost = experiment.random_allocate(inst, rng)
        assert np.all((d.p >= 0.01) & (d.p <= 0.1))
        assert np.all((d.f >= 1e9) & (d.f <= 10e9))
        assert np.all((d.v >= 0) & (d.v <= 0.5))
        assert d.alpha.sum() == pytest.approx(1.0)
        assert np.all(d.t_cmp + d.t_com <= 10.0)


def test_no_dt_and_ideal_baselines():
    sc = Scenario()
    world = experiment.build_world(sc, with_data=False)
    gains = experiment.round_gains(world, 0)
    sel = (0, 1, 2)
    d, _ = experiment.baseline_allocate(world, "no_dt", sel, gains)
    assert np.all(d.v == 0)
    _, cost = experiment.baseline_allocate(world, "ideal", sel, gains)
    assert np.all(cost.e_cmp == 0) and np.all(cost.t_cmp == 0)
    with pytest.raises(ValueError):
        experiment.baseline_allocate(world, "proposed", sel, gains)


def test_reselection_never_reuses_dropped_client():
    # a deadline so tight that the weakest channels cannot upload in time
    sc = Scenario(t_max=0.8)
    world = experiment.build_world(sc, with_data=False)
    state = rep.ReputationState.initial([world.profiles[c] for c in range(sc.n_clients)])
    seen_drop = False
    for t in range(10):
        gains = experiment.round_gains(world, t)
        selected, _, cost, dropped = experiment.select_and_allocate(
            world, state, gains, "proposed", np.random.default_rng(t))
        assert not set(selected) & set(dropped)
        seen_drop |= bool(dropped)
    assert seen_drop


def test_sweep_rows_and_invalid_value():
    rows = list(experiment.sweep(Scenario(), "n", [2, 2.5, 30], schemes=("proposed", "oma"),
                                 seeds=range(2)))
    invalid = [r for r in rows if r["status"] == "invalid"]
    assert [r["value"] for r in invalid] == [2.5, 30]
    ok = [r for r in rows if r["status"] == "ok"]
    assert len(ok) == 4
    assert all(np.isfinite(r["total"]) for r in ok)
    buf = io.StringIO()
    experiment.write_csv(rows, buf, experiment.SWEEP_COLUMNS)
    assert buf.getvalue().splitlines()[0] == ",".join(experiment.SWEEP_COLUMNS)
    with pytest.raises(ValueError):
        list(experiment.sweep(Scenario(), "zz", [1]))
    with pytest.raises(ValueError):
        list(experiment.sweep(Scenario(), "dn", []))


def test_cost_point_orderings_at_defaults():
    E = {s: [] for s in ("ideal", "proposed", "no_dt")}
    for seed in range(20):
        for s in E:
            status, cost = experiment.cost_point(Scenario(), s, seed)
            assert status == "ok"
            E[s].append(cost.E)
    med = {s: np.median(v) for s, v in E.items()}
    assert med["ideal"] <= med["proposed"] <= med["no_dt"]


def test_twin_is_fixed_across_rounds():
    sc = Scenario(**FAST, dt_deviation=0.3)
    w1 = experiment.build_world(sc)
    w2 = experiment.build_world(sc)
    np.testing.assert_array_equal(w1.twins[0], w2.twins[0])
    X, _ = w1.data.client(0)
    assert 0 < np.abs(w1.twins[0] - X).max() <= 0.3


def test_honest_round_weights():
    sc = Scenario(**FAST)
    for rec, _, _ in experiment.simulate_rounds(sc):
        total = rec.weights_local.sum() + rec.weight_twin
        assert total == pytest.approx(rec.gamma, abs=1e-12)
        assert isinstance(rec.model, np.ndarray)
        assert rec.model.shape == (fl.n_params(20, 10),)
