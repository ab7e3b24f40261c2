"""Two-level resource allocation game between clients (leader) and server (follower).

The follower splits the server CPU among the twins of the selected clients so
that the round makespan is minimal. The leader (all selected clients) picks
mapping ratio ``v``, CPU frequency ``f`` and transmit power ``p`` to minimise
the total energy under the round deadline.

Leader sub-steps:

* ``v`` and ``f`` have closed forms given the time left for computing.
* ``p`` is found client by client in reverse decoding order; each client's
  energy-efficiency ratio ``B log2(1 + pF) / (p d)`` is maximised by
  Dinkelbach's method, whose parametric sub-problem is solved through its KKT
  conditions.

The power sub-problem is posed with the rate constraint
``B log2(1 + pF) >= d / G`` (the upload must finish within the time left
after local computing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from dtfl.channel import ChannelState, decoding_order, noise_power
from dtfl.cost import (ClientProfile, CostReport, ServerProfile, dt_workload,
                       local_cost)
from dtfl.errors import ConvergenceError, InfeasibleError

LN2 = math.log(2.0)

DINKELBACH_DELTA = 1e-6
DINKELBACH_MAX_ITER = 100
SUBGRADIENT_STEP = 0.1
SUBGRADIENT_MAX_ITER = 500
SUBGRADIENT_TOL = 1e-8
STACKELBERG_TOL = 1e-4
STACKELBERG_MAX_ITER = 50


# ---------------------------------------------------------------------------
# follower

def balance_alpha(cycles, f_server: float, t_total: float):
    """Server shares for twin workloads ``cycles`` (CPU cycles per client).

    Returns ``(alpha, t_dt, over_budget)``. Within budget every twin finishes
    exactly at ``t_total``; over budget the whole server is split so that all
    twins finish together, later than ``t_total``.
    """
    cycles = np.asarray(cycles, dtype=float)
    if np.any(cycles < 0):
        raise ValueError("negative twin workload")
    if t_total <= 0:
        raise ValueError("t_total must be positive")
    alpha = cycles / (t_total * f_server)
    over = alpha.sum() > 1.0
    if over:
        alpha = cycles / cycles.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        t_dt = np.where(cycles > 0, cycles / (alpha * f_server), 0.0)
    return alpha, t_dt, bool(over)


def follower_alpha(profiles: Sequence[ClientProfile], server: ServerProfile, v, t_total: float):
    """Best response of the server: per-client CPU share of the twin network."""
    cycles = [dt_workload(p, vi, server.epsilon) for p, vi in zip(profiles, v)]
    if any(c < 0 for c in cycles):
        raise ValueError("twin data size must be >= 0")
    alpha, _, _ = balance_alpha(cycles, server.f_server, t_total)
    return alpha


# ---------------------------------------------------------------------------
# leader closed forms

def _check_budget(profile, budget):
    if budget <= 0:
        raise InfeasibleError(f"client {profile.id}: no time left for computing",
                              client=profile.id, constraint="deadline")


def leader_v(profile: ClientProfile, budget: float) -> float:
    """Mapping ratio: the largest allowed, provided local work still fits ``budget``."""
    _check_budget(profile, budget)
    f_needed = profile.workload(profile.v_max) / budget
    if f_needed > profile.f_bounds[1] * (1 + 1e-12):
        raise InfeasibleError(
            f"client {profile.id}: needs {f_needed:.4g} Hz > f_max even at v_max",
            client=profile.id, constraint="f_max")
    return profile.v_max


def leader_f(profile: ClientProfile, v: float, budget: float) -> float:
    """Slowest frequency that finishes the local share within ``budget``."""
    _check_budget(profile, budget)
    f_lo, f_hi = profile.f_bounds
    f_tilde = profile.workload(v) / budget
    if f_tilde > f_hi * (1 + 1e-12):
        raise InfeasibleError(f"client {profile.id}: needs {f_tilde:.4g} Hz > f_max",
                              client=profile.id, constraint="f_max")
    return min(max(f_tilde, f_lo), f_hi)


# ---------------------------------------------------------------------------
# power sub-problem

@dataclass(frozen=True)
class PowerProblem:
    """max  B log2(1 + pF) / (p d)  s.t.  B log2(1 + pF) >= d / G,  p_min <= p <= p_max."""

    F: float
    bits: float
    bandwidth: float
    G: float
    p_min: float
    p_max: float

    def __post_init__(self):
        if self.F <= 0 or self.G <= 0 or self.bandwidth <= 0:
            raise ValueError("F, G and bandwidth must be positive")
        if not 0 < self.p_min <= self.p_max:
            raise ValueError("bad power bounds")

    def rate(self, p):
        return self.bandwidth * np.log2(1.0 + p * self.F)

    def usage(self, p):
        return p * self.bits

    def required_rate(self) -> float:
        return self.bits / self.G

    def required_power(self) -> float:
        return math.expm1(LN2 * self.required_rate() / self.bandwidth) / self.F

    def feasible_interval(self) -> tuple:
        p_req = self.required_power()
        if p_req > self.p_max * (1 + 1e-12):
            raise InfeasibleError(
                f"rate {self.required_rate():.4g} b/s needs {p_req:.4g} W > p_max",
                constraint="p_max")
        return max(self.p_min, min(p_req, self.p_max)), self.p_max

    def slacks(self, p) -> np.ndarray:
        """Constraint margins (>= 0 when satisfied); the rate one relative to the requirement."""
        r_req = self.required_rate()
        rate_margin = self.rate(p) / r_req - 1.0 if r_req > 0 else 1.0
        return np.array([rate_margin, p - self.p_min, self.p_max - p])


@dataclass(frozen=True)
class DualState:
    """Multipliers of (rate, p_min, p_max) and their base step sizes."""

    lambdas: tuple = (0.0, 0.0, 0.0)
    steps: tuple = (SUBGRADIENT_STEP,) * 3
    iteration: int = 0

    def __post_init__(self):
        if any(x < 0 for x in self.lambdas):
            raise ValueError("multipliers must be nonnegative")


@dataclass
class DinkelbachTrace:
    q: list = field(default_factory=list)
    W: list = field(default_factory=list)
    p: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.q)

    def append(self, q, w, p):
        self.q.append(float(q))
        self.W.append(float(w))
        self.p.append(float(p))


def _parametric_value(problem, q, p):
    return problem.rate(p) - q * problem.usage(p)


def kkt_stationary_power(q: float, problem: PowerProblem, duals: DualState) -> float:
    """Zero of dL/dp for L = R - qU + l1 (R - d/G) + l2 (p - p_min) + l3 (p_max - p).

    The result is clipped to the power box. When ``q d - l2 + l3 <= 0`` the
    Lagrangian has no interior stationary point; the better feasible bound wins.
    """
    l1, l2, l3 = duals.lambdas
    denom = LN2 * (q * problem.bits - l2 + l3)
    if denom <= 0:
        try:
            lo, hi = problem.feasible_interval()
        except InfeasibleError:
            lo, hi = problem.p_min, problem.p_max
        return lo if _parametric_value(problem, q, lo) > _parametric_value(problem, q, hi) else hi
    p = problem.bandwidth * (1.0 + l1) / denom - 1.0 / problem.F
    return min(max(p, problem.p_min), problem.p_max)


def kkt_power(q: float, problem: PowerProblem):
    """Exact maximiser of R - qU over the feasible set, with its KKT multipliers."""
    lo, hi = problem.feasible_interval()
    p_free = math.inf if q <= 0 or problem.bits == 0 else (
        problem.bandwidth / (LN2 * q * problem.bits) - 1.0 / problem.F)
    p = min(max(p_free, lo), hi)
    slope = problem.bandwidth * problem.F / (LN2 * (1.0 + p * problem.F))
    grad = slope - q * problem.bits
    lam = [0.0, 0.0, 0.0]
    if p == hi and grad > 0:
        lam[2] = grad
    elif p == lo and grad < 0:
        if lo > problem.p_min:
            lam[0] = -grad / slope
        else:
            lam[1] = -grad
    return p, DualState(tuple(lam))


def kkt_residual(q: float, problem: PowerProblem, p: float, duals: DualState) -> float:
    """Largest violation among stationarity (relative to q d), complementary
    slackness and primal feasibility at ``(p, duals)``."""
    l1, l2, l3 = duals.lambdas
    slope = problem.bandwidth * problem.F / (LN2 * (1.0 + p * problem.F))
    scale = max(q * problem.bits, slope, 1e-300)
    stationarity = abs(slope * (1.0 + l1) - q * problem.bits + l2 - l3) / scale
    s = problem.slacks(p)
    return float(max(stationarity, *(abs(l * si) for l, si in zip((l1, l2 / scale, l3 / scale), s)),
                     *(max(0.0, -si) for si in s)))


def subgradient_duals(duals: DualState, slacks) -> DualState:
    """One projected step  l <- max(0, l - mu / sqrt(l + 1) * slack)."""
    scale = 1.0 / math.sqrt(duals.iteration + 1)
    lam = tuple(max(0.0, l - mu * scale * s)
                for l, mu, s in zip(duals.lambdas, duals.steps, slacks))
    return DualState(lam, duals.steps, duals.iteration + 1)


def subgradient_power(q: float, problem: PowerProblem, duals: DualState = None,
                      max_iter=SUBGRADIENT_MAX_ITER, tol=SUBGRADIENT_TOL):
    """Maximise R - qU by alternating the stationary point with dual subgradient steps.

    Returns ``(p, duals)``. Slower and less precise than :func:`kkt_power`;
    kept as the dual-decomposition route to the same point.
    """
    if q <= 0 or problem.bits == 0:
        duals = duals or DualState()
        return kkt_stationary_power(q, problem, DualState()), duals
    # Steps run on the Lagrangian divided by q d, with power margins relative
    # to p_max; there all multipliers are O(1) whatever the magnitude of q.
    qd = q * problem.bits
    unit = np.array([qd / problem.required_rate(), qd / problem.p_max, qd / problem.p_max])
    scaled = duals or DualState()

    def stationary(state):
        return kkt_stationary_power(q, problem, DualState(tuple(unit * state.lambdas)))

    def margins(p):
        s = problem.slacks(p)
        return s[0], s[1] / problem.p_max, s[2] / problem.p_max

    p = stationary(scaled)
    for _ in range(max_iter):
        nxt = subgradient_duals(scaled, margins(p))
        moved = max(abs(a - b) for a, b in zip(nxt.lambdas, scaled.lambdas))
        scaled = nxt
        p = stationary(scaled)
        if moved < tol:
            break
    # diminishing steps leave the primal iterate only near the optimum: pull it
    # into the feasible interval and keep whichever of it and the two ends is best
    lo, hi = problem.feasible_interval()
    p = max((min(max(p, lo), hi), lo, hi), key=lambda x: _parametric_value(problem, q, x))
    return p, DualState(tuple(unit * scaled.lambdas), scaled.steps, scaled.iteration)


def dinkelbach_power(problem: PowerProblem, delta=DINKELBACH_DELTA,
                     max_iter=DINKELBACH_MAX_ITER, inner=kkt_power):
    """Most energy-efficient feasible power. Returns ``(p, trace)``."""
    trace = DinkelbachTrace()
    problem.feasible_interval()
    if problem.bits == 0:
        trace.converged = True
        return problem.p_min, trace
    q = 0.0
    for _ in range(max_iter):
        p, _ = inner(q, problem)
        w = _parametric_value(problem, q, p)
        trace.append(q, w, p)
        if abs(w) <= delta:
            trace.converged = True
            return p, trace
        q = problem.rate(p) / problem.usage(p)
    raise ConvergenceError(f"Dinkelbach did not reach |W| <= {delta} in {max_iter} iterations",
                           trace)


def successive_power(gains, noise: float, bandwidth: float, bits, G, p_bounds, ids=None,
                     solver=dinkelbach_power):
    """Powers for clients listed in decoding order, optimised from last to first.

    Client ``k`` sees interference only from clients decoded after it, whose
    powers are already fixed. Returns ``(powers, traces)`` in input order.
    """
    gains = np.asarray(gains, dtype=float)
    n = len(gains)
    bits = np.broadcast_to(np.asarray(bits, dtype=float), (n,))
    G = np.broadcast_to(np.asarray(G, dtype=float), (n,))
    bounds = list(p_bounds) if np.ndim(p_bounds) == 2 else [tuple(p_bounds)] * n
    ids = list(range(n)) if ids is None else list(ids)
    p = np.zeros(n)
    traces = [None] * n
    for k in reversed(range(n)):
        interf = float(np.dot(p[k + 1:], gains[k + 1:]))
        prob = PowerProblem(gains[k] / (interf + noise), bits[k], bandwidth, G[k], *bounds[k])
        try:
            p[k], traces[k] = solver(prob)
        except InfeasibleError as exc:
            raise InfeasibleError(f"client {ids[k]}: {exc}", client=ids[k],
                                  constraint=exc.constraint or "p_max") from exc
    return p, traces


def sic_rates(gains, powers, noise: float, bandwidth: float) -> np.ndarray:
    """Rates of clients listed in decoding order."""
    rx = np.asarray(gains) * np.asarray(powers)
    after = np.concatenate([np.cumsum(rx[::-1])[::-1][1:], [0.0]])
    return bandwidth * np.log2(1.0 + rx / (after + noise))


# ---------------------------------------------------------------------------
# the game

@dataclass(frozen=True)
class GameInstance:
    """Selected clients, the server and the channel they share.

    ``access`` is ``"noma"`` (one band, SIC) or ``"oma"`` (band split evenly).
    ``compute_free`` zeroes local computing cost (clients with unbounded CPU).
    """

    profiles: tuple
    server: ServerProfile
    channel: ChannelState
    payload_bits: np.ndarray
    access: str = "noma"
    compute_free: bool = False

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if not self.profiles:
            raise ValueError("empty selection")
        bits = np.broadcast_to(np.asarray(self.payload_bits, dtype=float),
                               (len(self.profiles),)).copy()
        object.__setattr__(self, "payload_bits", bits)
        ids = tuple(p.id for p in self.profiles)
        if tuple(self.channel.ids) != ids:
            object.__setattr__(self, "channel", self.channel.subset(ids))
        if self.access not in ("noma", "oma"):
            raise ValueError(f"unknown access scheme {self.access!r}")

    @property
    def ids(self) -> tuple:
        return tuple(p.id for p in self.profiles)

    def order(self) -> np.ndarray:
        """Positions of clients in SIC decoding order."""
        pos = {c: i for i, c in enumerate(self.ids)}
        return np.array([pos[c] for c in decoding_order(self.channel)])

    def band(self):
        """(bandwidth, noise power) seen by one client."""
        ch = self.channel
        if self.access == "oma":
            share = ch.bandwidth / len(self.profiles)
            return share, ch.noise_power * share / ch.bandwidth
        return ch.bandwidth, ch.noise_power

    def rates(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        bw, noise = self.band()
        g = self.channel.gains
        if self.access == "oma":
            return bw * np.log2(1.0 + p * g / noise)
        order = self.order()
        r = np.empty(len(p))
        r[order] = sic_rates(g[order], p[order], noise, bw)
        return r


@dataclass
class AllocationDecision:
    ids: tuple
    p: np.ndarray
    f: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    t_cmp: np.ndarray
    t_com: np.ndarray
    t_dt: np.ndarray
    traces: list = field(default_factory=list)
    history: list = field(default_factory=list)
    over_budget: bool = False

    @property
    def t_total(self) -> float:
        """Time by which every selected client has computed and uploaded."""
        return float(np.max(self.t_cmp + self.t_com))

    def as_rows(self):
        for i, c in enumerate(self.ids):
            yield {"client": c, "p": self.p[i], "f": self.f[i], "v": self.v[i],
                   "alpha": self.alpha[i], "t_cmp": self.t_cmp[i],
                   "t_com": self.t_com[i], "t_dt": self.t_dt[i]}


def transmit_times(inst: GameInstance, p) -> np.ndarray:
    """Upload time of every client at powers ``p``."""
    bits = inst.payload_bits
    r = inst.rates(p)
    if np.any((r <= 0) & (bits > 0)):
        raise InfeasibleError("zero rate", constraint="rate")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(bits > 0, bits / r, 0.0)


def transmit_time(inst: GameInstance, p) -> float:
    return float(transmit_times(inst, p).max())


def _min_powers(inst: GameInstance, deadline: float) -> np.ndarray:
    """Smallest powers meeting ``deadline`` for every upload (constraint boundary)."""
    bw, noise = inst.band()
    g = inst.channel.gains
    need = np.expm1(LN2 * inst.payload_bits / (deadline * bw))
    p = np.empty(len(g))
    lo = np.array([pr.p_bounds[0] for pr in inst.profiles])
    hi = np.array([pr.p_bounds[1] for pr in inst.profiles])
    if inst.access == "oma":
        p = np.maximum(need * noise / g, lo)
    else:
        interf = 0.0
        for k in reversed(inst.order()):
            p[k] = max(need[k] * (interf + noise) / g[k], lo[k])
            interf += p[k] * g[k]
    if np.any(p > hi * (1 + 1e-12)):
        return None
    return np.minimum(p, hi)


def _solve_powers(inst: GameInstance, deadline: float):
    bw, noise = inst.band()
    g = inst.channel.gains
    bounds = [pr.p_bounds for pr in inst.profiles]
    deadline = np.broadcast_to(np.asarray(deadline, dtype=float), (len(g),))
    if inst.access == "oma":
        p = np.empty(len(g))
        traces = []
        for k in range(len(g)):
            prob = PowerProblem(g[k] / noise, inst.payload_bits[k], bw, deadline[k], *bounds[k])
            try:
                p[k], tr = dinkelbach_power(prob)
            except InfeasibleError as exc:
                raise InfeasibleError(f"client {inst.ids[k]}: {exc}", client=inst.ids[k],
                                      constraint=exc.constraint) from exc
            traces.append(tr)
        return p, traces
    order = inst.order()
    p_sorted, tr_sorted = successive_power(
        g[order], noise, bw, inst.payload_bits[order], deadline[order],
        [bounds[k] for k in order], ids=[inst.ids[k] for k in order])
    p = np.empty(len(g))
    p[order] = p_sorted
    traces = [None] * len(g)
    for j, k in enumerate(order):
        traces[k] = tr_sorted[j]
    return p, traces


def _compute_side(inst: GameInstance, t_com):
    """(v, f, t_cmp, local energy) per client given the upload times."""
    n = len(inst.profiles)
    budget = inst.server.t_max - np.broadcast_to(np.asarray(t_com, dtype=float), (n,))
    if inst.compute_free:
        f = np.array([pr.f_bounds[1] for pr in inst.profiles])
        return np.zeros(n), f, np.zeros(n), np.zeros(n)
    v = np.empty(n)
    f = np.empty(n)
    t = np.empty(n)
    e = np.empty(n)
    for i, pr in enumerate(inst.profiles):
        v[i] = leader_v(pr, budget[i])
        f[i] = leader_f(pr, v[i], budget[i])
        t[i], e[i] = local_cost(pr, v[i], f[i], inst.server.kappa, check=False)
    return v, f, t, e


def _min_powers_batch(inst: GameInstance, deadlines):
    """Vectorised :func:`_min_powers` over an array of deadlines: ``(p, feasible)``."""
    T = np.asarray(deadlines, dtype=float)[:, None]
    bw, noise = inst.band()
    g = inst.channel.gains
    lo = np.array([pr.p_bounds[0] for pr in inst.profiles])
    hi = np.array([pr.p_bounds[1] for pr in inst.profiles])
    need = np.expm1(LN2 * inst.payload_bits / (T * bw))
    if inst.access == "oma":
        p = np.maximum(need * noise / g, lo)
    else:
        p = np.empty(need.shape)
        interf = np.zeros(len(T))
        for k in reversed(inst.order()):
            p[:, k] = np.maximum(need[:, k] * (interf + noise) / g[k], lo[k])
            interf = interf + p[:, k] * g[k]
    ok = np.all(p <= hi * (1 + 1e-12), axis=1)
    return np.minimum(p, hi), ok


def _rates_batch(inst: GameInstance, p):
    bw, noise = inst.band()
    g = inst.channel.gains
    rx = p * g
    if inst.access == "oma":
        return bw * np.log2(1.0 + rx / noise)
    r = np.empty(p.shape)
    interf = np.zeros(len(p))
    for k in reversed(inst.order()):
        r[:, k] = bw * np.log2(1.0 + rx[:, k] / (interf + noise))
        interf = interf + rx[:, k]
    return r


def _energy_curve(inst: GameInstance, deadlines) -> np.ndarray:
    """Least client energy when every upload finishes by each candidate deadline
    (inf where no power/frequency choice fits)."""
    p, ok = _min_powers_batch(inst, deadlines)
    bits = inst.payload_bits
    with np.errstate(divide="ignore", invalid="ignore"):
        t_com = np.where(bits > 0, bits / _rates_batch(inst, p), 0.0)
    energy = (p * t_com).sum(axis=1)
    if not inst.compute_free:
        budget = inst.server.t_max - t_com
        ok &= np.all(budget > 0, axis=1)
        safe = np.where(budget > 0, budget, 1.0)
        for i, pr in enumerate(inst.profiles):
            w = pr.workload(pr.v_max)
            f_tilde = w / safe[:, i]
            ok &= f_tilde <= pr.f_bounds[1] * (1 + 1e-12)
            f = np.clip(f_tilde, *pr.f_bounds)
            energy = energy + 0.5 * inst.server.kappa * w * f * f
    return np.where(ok, energy, np.inf)


def _energy_at(inst: GameInstance, deadline: float) -> float:
    return float(_energy_curve(inst, [deadline])[0])


def _deadline_range(inst: GameInstance):
    """Interval of upload deadlines worth searching, or InfeasibleError."""
    lo_p = [pr.p_bounds[0] for pr in inst.profiles]
    t_floor = transmit_time(inst, lo_p)
    if inst.compute_free:
        t_cap = inst.server.t_max
    else:
        t_cap = inst.server.t_max - max(pr.workload(pr.v_max) / pr.f_bounds[1]
                                        for pr in inst.profiles)
    hi = min(t_floor, t_cap)
    if hi <= 0 or not _min_powers_batch(inst, [hi])[1][0]:
        raise InfeasibleError("no power/frequency choice meets the round deadline",
                              constraint="deadline")
    bw, _ = inst.band()
    lo = float(np.max(inst.payload_bits)) / (bw * 64.0) if np.any(inst.payload_bits > 0) else hi
    lo = min(lo, hi)
    if not _min_powers_batch(inst, [lo])[1][0]:
        # feasibility is monotone in the deadline: shrink the bracket 64-fold per pass
        a, b = lo, hi
        while b / a - 1 > 1e-12:
            pts = np.geomspace(a, b, 66)[1:-1]
            ok = _min_powers_batch(inst, pts)[1]
            j = int(np.argmax(ok)) if ok.any() else len(pts)
            a = pts[j - 1] if j > 0 else a
            b = pts[j] if j < len(pts) else b
        lo = b
    return lo, hi


def _best_deadline(inst: GameInstance) -> float:
    lo, hi = _deadline_range(inst)
    if hi - lo <= 1e-15 * hi:
        return hi
    grid = np.unique(np.concatenate([np.geomspace(lo, hi, 48), np.linspace(lo, hi, 16)]))
    energies = _energy_curve(inst, grid)
    if not np.isfinite(energies).any():
        raise InfeasibleError("no deadline split is feasible", constraint="f_max")
    # zoom in around the best scan point; the curve is smooth near its minimum
    for _ in range(4):
        k = int(np.argmin(energies))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        if b - a <= 1e-12 * b:
            break
        grid = np.linspace(a, b, 33)
        energies = _energy_curve(inst, grid)
    return float(grid[int(np.argmin(energies))])


def leader_response(inst: GameInstance, max_rounds: int = 20):
    """Energy-minimising (v, f, p) plus per-client phase times and power traces.

    Scans a common upload deadline, then alternates power (given the time each
    client has left after computing) and frequency (given its upload time)
    until the energy settles.
    """
    p, traces = _solve_powers(inst, _best_deadline(inst))
    t_com = transmit_times(inst, p)
    v, f, t_cmp, e_cmp = _compute_side(inst, t_com)
    energy = e_cmp.sum() + np.dot(p, t_com)
    for _ in range(max_rounds):
        try:
            p_new, traces_new = _solve_powers(inst, inst.server.t_max - t_cmp)
            t_new = transmit_times(inst, p_new)
            v_new, f_new, t_cmp_new, e_new = _compute_side(inst, t_new)
        except InfeasibleError:
            break
        energy_new = e_new.sum() + np.dot(p_new, t_new)
        if energy_new > energy * (1 - 1e-12):
            break
        p, traces, t_com, v, f, t_cmp, energy = (p_new, traces_new, t_new, v_new, f_new,
                                                 t_cmp_new, energy_new)
    return v, f, p, t_cmp, t_com, traces


def _follower(inst: GameInstance, v, t_total):
    cycles = [dt_workload(pr, vi, inst.server.epsilon) for pr, vi in zip(inst.profiles, v)]
    return balance_alpha(cycles, inst.server.f_server, t_total)


def stackelberg_solve(inst: GameInstance, tol=STACKELBERG_TOL, max_iter=STACKELBERG_MAX_ITER):
    """Alternate follower and leader best responses until the energy settles.

    Returns ``(AllocationDecision, CostReport)``. Raises
    :class:`~dtfl.errors.InfeasibleError` naming the client and the binding
    constraint, or :class:`~dtfl.errors.ConvergenceError` with the history.
    """
    v = np.array([pr.v_max for pr in inst.profiles])
    f = np.array([pr.f_bounds[1] for pr in inst.profiles])
    p = np.array([pr.p_bounds[1] for pr in inst.profiles])
    t_cmp = np.array([0.0 if inst.compute_free else pr.workload(vi) / fi
                      for pr, vi, fi in zip(inst.profiles, v, f)])
    t_com = transmit_times(inst, p)
    history = []
    energy_prev = math.inf
    # the leader's problem does not involve the server shares, so its best
    # response is the same in every pass; compute it once
    leader = None
    for it in range(max_iter):
        t_total = float(np.max(t_cmp + t_com))
        alpha, _, _ = _follower(inst, v, t_total)
        leader = leader or leader_response(inst)
        v, f, p, t_cmp, t_com, traces = leader
        energy = _leader_energy(inst, v, f, p, t_com)
        history.append({"iteration": it, "E": energy, "t_total": t_total,
                        "alpha_sum": float(alpha.sum())})
        if abs(energy - energy_prev) <= tol * max(abs(energy), 1e-300):
            break
        energy_prev = energy
    else:
        raise ConvergenceError("game did not settle", history)

    alpha, t_dt, over = _follower(inst, v, float(np.max(t_cmp + t_com)))
    decision = AllocationDecision(inst.ids, p, f, v, alpha, t_cmp, t_com, t_dt, traces,
                                  history, over)
    return decision, decision_cost(inst, decision)


def _leader_energy(inst, v, f, p, t_com) -> float:
    e_cmp = 0.0 if inst.compute_free else sum(
        local_cost(pr, vi, fi, inst.server.kappa, check=False)[1]
        for pr, vi, fi in zip(inst.profiles, v, f))
    return float(e_cmp + np.dot(p, t_com))


def decision_cost(inst: GameInstance, d: AllocationDecision) -> CostReport:
    n = len(inst.profiles)
    if inst.compute_free:
        t_cmp = np.zeros(n)
        e_cmp = np.zeros(n)
    else:
        pairs = [local_cost(pr, vi, fi, inst.server.kappa, check=False)
                 for pr, vi, fi in zip(inst.profiles, d.v, d.f)]
        t_cmp = np.array([a for a, _ in pairs])
        e_cmp = np.array([b for _, b in pairs])
    t_com = np.asarray(d.t_com, dtype=float)
    return CostReport(inst.ids, t_cmp, e_cmp, t_com, np.asarray(d.p) * t_com, d.t_dt)


def with_access(inst: GameInstance, access: str) -> GameInstance:
    return replace(inst, access=access)


def make_instance(profiles, server, gains, bandwidth=1e6, payload_bits=1e6, access="noma",
                  compute_free=False, noise=None) -> GameInstance:
    """Convenience constructor from raw gains (aligned with ``profiles``)."""
    ids = tuple(p.id for p in profiles)
    noise = noise_power(bandwidth) if noise is None else noise
    channel = ChannelState(np.asarray(gains, dtype=float), noise, bandwidth, ids)
    return GameInstance(tuple(profiles), server, channel, payload_bits, access, compute_free)
