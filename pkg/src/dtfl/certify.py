"""Seeded certification runs pitting the game solver against the brute-force
oracles. Used by ``dtfl selftest`` and by the acceptance tests."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from dtfl.cost import ClientProfile, ServerProfile, dt_workload, local_cost
from dtfl.errors import InfeasibleError
from dtfl.game import (DINKELBACH_DELTA, PowerProblem, balance_alpha, dinkelbach_power,
                       follower_alpha, kkt_power, kkt_residual, make_instance,
                       stackelberg_solve, successive_power, transmit_times)
from dtfl.channel import PATH_LOSS_EXPONENT, noise_power
from dtfl.oracle import (GridSpec, grid_min_energy, grid_min_makespan_alpha,
                         grid_min_upload_energy, ratio_grid_max)


@dataclass
class Certificate:
    name: str
    passed: bool
    checked: int
    failures: list = field(default_factory=list)
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.stats.items())
        return f"{verdict} {self.name}: {self.checked} checked, {len(self.failures)} failed, " \
               f"{self.seconds:.2f}s {extra}".rstrip()


def _gain(rng, lo=20.0, hi=500.0):
    dist = rng.uniform(lo, hi)
    return rng.exponential() * dist ** -PATH_LOSS_EXPONENT


def random_single_instance(rng):
    """One client with Table-I bounds and randomised data size, mapping cap and channel."""
    pr = ClientProfile(int(rng.integers(200, 8000)), v_max=float(rng.uniform(0.0, 0.9)), id=0)
    return make_instance([pr], ServerProfile(), [_gain(rng)])


def closed_form(n_instances=200, seed=0, grid=None) -> Certificate:
    """Solver energy against the (p, f, v) grid on single-client instances."""
    rng = np.random.default_rng(seed)
    grid = grid or GridSpec()
    t0 = time.perf_counter()
    failures, checked, solver_time = [], 0, 0.0
    dinkel = []
    worst = 0.0
    for k in range(n_instances):
        inst = random_single_instance(rng)
        ref = grid_min_energy(inst, grid)
        a = time.perf_counter()
        try:
            decision, cost = stackelberg_solve(inst)
        except InfeasibleError as exc:
            solver_time += time.perf_counter() - a
            if ref.feasible:
                failures.append((k, f"solver infeasible ({exc}) but grid feasible"))
            checked += 1
            continue
        solver_time += time.perf_counter() - a
        checked += 1
        dinkel.extend(t for t in decision.traces if t is not None)
        if not ref.feasible:
            failures.append((k, "grid infeasible but solver returned a point"))
            continue
        gap = abs(cost.E - ref.value)
        worst = max(worst, gap / max(ref.spread, 1e-300))
        if gap > ref.spread:
            failures.append((k, f"E {cost.E:.6g} vs grid {ref.value:.6g} (spread {ref.spread:.3g})"))
    secs = time.perf_counter() - t0
    cert = Certificate("closed-form vs grid", not failures and secs < 10.0, checked, failures, secs,
                       {"solver_s": solver_time, "worst_gap_over_spread": worst})
    cert.traces = dinkel
    return cert


def follower(n_instances=200, seed=1, resolution=64) -> Certificate:
    """Server shares equalise twin finishing times and no simplex point does better."""
    rng = np.random.default_rng(seed)
    srv = ServerProfile()
    t0 = time.perf_counter()
    failures = []
    worst_spread = 0.0
    for k in range(n_instances):
        profiles = [ClientProfile(int(rng.integers(100, 5000)), v_max=1.0, id=i) for i in range(3)]
        v = rng.uniform(0.05, 1.0, size=3)
        t_total = float(rng.uniform(0.5, 10.0))
        alpha = follower_alpha(profiles, srv, v, t_total)
        cycles = np.array([dt_workload(p, vi, srv.epsilon) for p, vi in zip(profiles, v)])
        t_s = cycles / (alpha * srv.f_server)
        rel = float((t_s.max() - t_s.min()) / t_s.max())
        worst_spread = max(worst_spread, rel)
        over = cycles.sum() > t_total * srv.f_server
        if rel > 1e-9:
            failures.append((k, f"finishing times differ by {rel:.3g}"))
        if alpha.sum() > 1 + 1e-12 or (over and abs(alpha.sum() - 1) > 1e-12):
            failures.append((k, f"sum alpha = {alpha.sum():.15g}"))
        inst = make_instance(profiles, srv, [1e-10] * 3)
        ref = grid_min_makespan_alpha(inst, v, t_total, resolution)
        mine = max(t_total, float(t_s.max()))
        if ref.value < mine * (1 - 1e-9):
            failures.append((k, f"grid makespan {ref.value:.6g} beats {mine:.6g}"))
    secs = time.perf_counter() - t0
    return Certificate("follower shares", not failures, n_instances, failures, secs,
                       {"worst_rel_spread": worst_spread})


def dinkelbach(traces, max_iterations=20) -> Certificate:
    """Every recorded Dinkelbach run: q nondecreasing, final |W| small, few iterations."""
    failures = []
    most = 0
    for k, tr in enumerate(traces):
        if len(tr.q) == 0:
            continue
        most = max(most, tr.iterations)
        if np.any(np.diff(tr.q) < 0):
            failures.append((k, "q decreased"))
        if not tr.converged or abs(tr.W[-1]) > DINKELBACH_DELTA:
            failures.append((k, f"|W| = {abs(tr.W[-1]):.3g}"))
        if tr.iterations > max_iterations:
            failures.append((k, f"{tr.iterations} iterations"))
    return Certificate("Dinkelbach traces", not failures, len(traces), failures,
                       stats={"max_iterations": most})


def dinkelbach_vs_grid(n_instances=50, seed=2, resolution=1e-6) -> Certificate:
    """Single power problems against the 1e-6 W ratio lattice."""
    rng = np.random.default_rng(seed)
    failures = []
    t0 = time.perf_counter()
    for k in range(n_instances):
        F = _gain(rng) / noise_power(1e6)
        G = float(rng.uniform(0.05, 10.0))
        prob = PowerProblem(F, 1e6, 1e6, G, 0.01, 0.1)
        try:
            p, tr = dinkelbach_power(prob)
        except InfeasibleError:
            if ratio_grid_max(F, 1e6, 1e6, G, 0.01, 0.1, resolution) is not None:
                failures.append((k, "solver infeasible but lattice feasible"))
            continue
        ref = ratio_grid_max(F, 1e6, 1e6, G, 0.01, 0.1, resolution)
        if ref is None or abs(p - ref) > resolution:
            failures.append((k, f"p {p:.9g} vs lattice {ref}"))
    return Certificate("Dinkelbach vs ratio lattice", not failures, n_instances, failures,
                       time.perf_counter() - t0)


def successive_vs_grid(n_instances=100, seed=3, rel_tol=1e-3) -> Certificate:
    """Two-client SIC upload energy against the 2-D power grid."""
    rng = np.random.default_rng(seed)
    noise = noise_power(1e6)
    failures, checked = [], 0
    worst = 0.0
    t0 = time.perf_counter()
    while checked < n_instances:
        g = sorted((_gain(rng, 20, 300) for _ in range(2)), reverse=True)
        bits = [1e6, 1e6]
        G = float(rng.uniform(0.2, 5.0))
        bounds = [(0.01, 0.1)] * 2
        ref_p, ref_e = grid_min_upload_energy(g, noise, 1e6, bits, G, bounds)
        try:
            p, _ = successive_power(g, noise, 1e6, bits, G, bounds)
        except InfeasibleError:
            if ref_p is not None:
                failures.append((checked, "solver infeasible but grid feasible"))
                checked += 1
            continue
        checked += 1
        if ref_p is None:
            failures.append((checked, "grid infeasible but solver returned powers"))
            continue
        interf = p[1] * g[1]
        r = 1e6 * np.log2(1 + np.array([p[0] * g[0] / (interf + noise), p[1] * g[1] / noise]))
        energy = float(np.sum(p * np.asarray(bits) / r))
        rel = (energy - ref_e) / ref_e
        worst = max(worst, rel)
        if rel > rel_tol:
            failures.append((checked, f"E {energy:.6g} vs grid {ref_e:.6g}"))
    return Certificate("successive power vs 2-D grid", not failures, checked, failures,
                       time.perf_counter() - t0, {"worst_rel": worst})


def _random_equilibrium_instance(rng, n=3):
    profiles = [ClientProfile(int(rng.integers(300, 3000)), v_max=float(rng.uniform(0.2, 0.8)), id=i)
                for i in range(n)]
    return make_instance(profiles, ServerProfile(), [_gain(rng, 20, 300) for _ in range(n)])


def _leader_energy(inst, p, f, v):
    t_com = transmit_times(inst, p)
    e, t = 0.0, []
    for pr, pi, fi, vi, tc in zip(inst.profiles, p, f, v, t_com):
        t_c, e_c = local_cost(pr, vi, fi, inst.server.kappa, check=False)
        e += e_c + pi * tc
        t.append(t_c + tc)
    return e, max(t)


def equilibrium(n_instances=50, deviations=100, seed=4, tol=1e-6) -> Certificate:
    """Random feasible unilateral deviations never pay off for the deviator."""
    rng = np.random.default_rng(seed)
    failures = []
    t0 = time.perf_counter()
    done = 0
    best_gain = -math.inf
    while done < n_instances:
        inst = _random_equilibrium_instance(rng)
        try:
            d, cost = stackelberg_solve(inst)
        except InfeasibleError:
            continue
        done += 1
        srv = inst.server
        cycles = np.array([dt_workload(pr, vi, srv.epsilon) for pr, vi in zip(inst.profiles, d.v)])
        t_local = d.t_total
        T_eq = max(t_local, float(np.max(d.t_dt)))
        E_eq, _ = _leader_energy(inst, d.p, d.f, d.v)
        # follower: any other split of the server
        for _ in range(deviations):
            a = rng.dirichlet(np.ones(len(cycles))) * rng.uniform(0.2, 1.0)
            T_dev = max(t_local, float(np.max(cycles / (a * srv.f_server))))
            best_gain = max(best_gain, T_eq - T_dev)
            if T_dev < T_eq - tol:
                failures.append((done, f"follower gains {T_eq - T_dev:.3g} s"))
        # leader: perturbations of (p, f, v) that keep every deadline
        lo_p = np.array([pr.p_bounds[0] for pr in inst.profiles])
        hi_p = np.array([pr.p_bounds[1] for pr in inst.profiles])
        lo_f = np.array([pr.f_bounds[0] for pr in inst.profiles])
        hi_f = np.array([pr.f_bounds[1] for pr in inst.profiles])
        hi_v = np.array([pr.v_max for pr in inst.profiles])
        tried = 0
        accepted = 0
        while accepted < deviations and tried < 50 * deviations:
            tried += 1
            if tried % 2:
                scale = 10.0 ** rng.uniform(-6, -1)
                p = np.clip(d.p * (1 + scale * rng.normal(size=len(d.p))), lo_p, hi_p)
                f = np.clip(d.f * (1 + scale * rng.normal(size=len(d.f))), lo_f, hi_f)
                v = np.clip(d.v + scale * rng.normal(size=len(d.v)), 0.0, hi_v)
            else:
                p = rng.uniform(lo_p, hi_p)
                f = rng.uniform(lo_f, hi_f)
                v = rng.uniform(0.0, hi_v)
            E_dev, t_dev = _leader_energy(inst, p, f, v)
            if t_dev > srv.t_max:
                continue
            accepted += 1
            if E_dev < E_eq - tol:
                failures.append((done, f"leader gains {E_eq - E_dev:.3g} J"))
    secs = time.perf_counter() - t0
    return Certificate("equilibrium stability", not failures, n_instances, failures, secs,
                       {"best_follower_gain": best_gain})


def kkt_interior(n_instances=100, seed=5, tol=1e-6) -> Certificate:
    """Residual of the exact inner solver at interior maximisers of R - qU."""
    rng = np.random.default_rng(seed)
    failures, checked = [], 0
    worst = 0.0
    while checked < n_instances:
        F = _gain(rng) / noise_power(1e6)
        prob = PowerProblem(F, 1e6, 1e6, 10.0, 0.01, 0.1)
        p_target = rng.uniform(0.02, 0.09)
        # the q at which p_target is the unconstrained maximiser
        q = prob.bandwidth * F / (math.log(2) * (1 + p_target * F) * prob.bits)
        try:
            lo, hi = prob.feasible_interval()
        except InfeasibleError:
            continue
        if not lo < p_target < hi:
            continue
        p, duals = kkt_power(q, prob)
        res = kkt_residual(q, prob, p, duals)
        worst = max(worst, res)
        checked += 1
        if res > tol:
            failures.append((checked, f"residual {res:.3g}"))
    return Certificate("KKT residual at interior optima", not failures, checked, failures,
                       stats={"worst": worst})


def run_all(quick=False):
    n = 40 if quick else 200
    cf = closed_form(n)
    certs = [cf, follower(n), dinkelbach(cf.traces), dinkelbach_vs_grid(10 if quick else 50),
             successive_vs_grid(20 if quick else 100), equilibrium(10 if quick else 50),
             kkt_interior()]
    return certs
