import numpy as np
import pytest

from dtfl import game
from dtfl.cost import ClientProfile, ServerProfile
from dtfl.game import make_instance, stackelberg_solve
from dtfl.oracle import (GridSpec, grid_min_energy, grid_min_makespan_alpha,
                         grid_min_upload_energy, ratio_grid_max)


def _single(gain=1e-9, data=1000, v_max=0.5, t_max=10.0):
    pr = ClientProfile(data, v_max=v_max)
    return make_instance([pr], ServerProfile(t_max=t_max), [gain])


def test_single_client_grid_agrees_with_solver():
    inst = _single()
    ref = grid_min_energy(inst)
    d, cost = stackelberg_solve(inst)
    assert ref.feasible
    assert ref.point["v"][0] == pytest.approx(d.v[0])
    assert ref.point["p"][0] == pytest.approx(d.p[0])
    # one f cell is (10 - 1) GHz / 63
    assert abs(ref.point["f"][0] - d.f[0]) <= 9e9 / 63
    assert cost.E <= ref.value + 2 * ref.spread


def test_one_point_grid_reproduces_solver_energy():
    inst = _single(gain=3e-12, data=3000)
    d, cost = stackelberg_solve(inst)
    spec = GridSpec(steps={"p": 1, "f": 1, "v": 1},
                    bounds={"p": (d.p[0],) * 2, "f": (d.f[0],) * 2, "v": (d.v[0],) * 2})
    ref = grid_min_energy(inst, spec)
    assert ref.feasible
    assert ref.value == pytest.approx(cost.E, rel=1e-12)


def test_infeasible_deadline_gives_empty_result():
    inst = _single(gain=1e-16, t_max=0.01)
    ref = grid_min_energy(inst)
    assert not ref.feasible
    assert ref.point is None


def test_grid_is_deterministic():
    inst = _single(gain=2e-12)
    a = grid_min_energy(inst)
    b = grid_min_energy(inst)
    assert a.point == b.point and a.value == b.value


def test_oracle_ignores_solver_constants(monkeypatch):
    inst = _single(gain=2e-12)
    before = grid_min_energy(inst)
    monkeypatch.setattr(game, "DINKELBACH_DELTA", 1.0)
    monkeypatch.setattr(game, "STACKELBERG_TOL", 0.5)
    monkeypatch.setattr(game, "LN2", 1.0)
    after = grid_min_energy(inst)
    assert before.value == after.value and before.point == after.point


def test_grid_too_large():
    pr = [ClientProfile(1000, id=i) for i in range(4)]
    inst = make_instance(pr, ServerProfile(), [1e-10] * 4)
    with pytest.raises(ValueError):
        grid_min_energy(inst)


def test_makespan_symmetric_clients_uniform_split():
    pr = [ClientProfile(1000, id=i) for i in range(3)]
    inst = make_instance(pr, ServerProfile(f_server=1e9), [1e-10] * 3)
    res = grid_min_makespan_alpha(inst, [0.5] * 3, 1.0, resolution=60)
    np.testing.assert_allclose(res.point["alpha"], [1 / 3] * 3, atol=1 / 60)


def test_makespan_budget_boundary_uses_whole_server():
    pr = [ClientProfile(1000, id=0), ClientProfile(3000, id=1)]
    inst = make_instance(pr, ServerProfile(f_server=1e9), [1e-10] * 2)
    res = grid_min_makespan_alpha(inst, [0.5, 0.5], 1.0, resolution=64)
    assert sum(res.point["alpha"]) == pytest.approx(1.0)
    # exact split is (0.25, 0.75)
    np.testing.assert_allclose(res.point["alpha"], [0.25, 0.75], atol=1 / 64)


def test_ratio_grid_validation():
    with pytest.raises(ValueError):
        ratio_grid_max(1e4, 1e6, 1e6, 2.0, 0.01, 0.1, resolution=1e-3)


def test_upload_grid_two_clients():
    noise = 4e-15
    powers, e = grid_min_upload_energy([5e-12, 1e-12], noise, 1e6, (1e6, 1e6), 1.0,
                                       [(0.01, 0.1)] * 2)
    assert powers is not None and np.isfinite(e)
    none, inf = grid_min_upload_energy([1e-17, 1e-17], noise, 1e6, (1e6, 1e6), 0.01,
                                       [(0.01, 0.1)] * 2)
    assert none is None and inf == np.inf
