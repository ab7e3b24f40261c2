"""Exhaustive-search certifiers for the game solver.

Nothing here imports from :mod:`dtfl.game`; rates, latencies and energies are
recomputed from the raw instance fields so that a bug in the solver cannot
leak into its own certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_GRID_POINTS = 20_000_000


@dataclass(frozen=True)
class GridSpec:
    """Steps per axis; ``bounds`` overrides the per-client box for an axis."""

    steps: dict = field(default_factory=lambda: {"p": 64, "f": 64, "v": 64})
    bounds: dict = field(default_factory=dict)
    tolerance_cells: int = 2
    seed: int = 0

    def __post_init__(self):
        for name, s in self.steps.items():
            if s < 1:
                raise ValueError(f"axis {name} needs at least one step")
        for name, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ValueError(f"axis {name}: lo > hi")

    def axis(self, name, lo, hi):
        lo, hi = self.bounds.get(name, (lo, hi))
        s = self.steps[name]
        return np.array([lo]) if s == 1 else np.linspace(lo, hi, s)


@dataclass
class GridResult:
    feasible: bool
    point: dict = None
    value: float = math.inf
    spread: float = 0.0
    evaluated: int = 0


def _noise_and_band(inst):
    ch = inst.channel
    n = len(inst.profiles)
    if inst.access == "oma":
        return ch.bandwidth / n, ch.noise_power / n
    return ch.bandwidth, ch.noise_power


def _rates(gains, powers, noise, band, access):
    """Rates for a batch: ``powers`` has shape (..., N), clients in instance order."""
    rx = powers * gains
    if access == "oma":
        return band * np.log2(1.0 + rx / noise)
    out = np.empty_like(rx)
    # strongest gain decoded first; equal gains keep input order
    rank = sorted(range(len(gains)), key=lambda i: (-gains[i], i))
    for pos, i in enumerate(rank):
        later = rank[pos + 1:]
        interf = rx[..., later].sum(axis=-1) if later else 0.0
        out[..., i] = band * np.log2(1.0 + rx[..., i] / (interf + noise))
    return out


def _client_axes(inst, grid):
    axes = []
    for pr in inst.profiles:
        p = grid.axis("p", *pr.p_bounds)
        f = grid.axis("f", *pr.f_bounds)
        v = grid.axis("v", 0.0, pr.v_max)
        axes.append((p, f, v))
    return axes


def grid_min_energy(inst, grid: GridSpec = None) -> GridResult:
    """Lowest total client energy over a (p, f, v) grid for every selected client.

    Feasibility: each client's computing plus its own upload time within
    the deadline, and the twin workloads schedulable on the server within
    the deadline. ``spread`` is the largest energy gap between the minimiser
    and feasible points within ``tolerance_cells`` grid cells of it.
    """
    grid = grid or GridSpec()
    srv = inst.server
    n = len(inst.profiles)
    axes = _client_axes(inst, grid)
    shape = []
    for a in axes:
        shape.extend(len(x) for x in a)
    total = math.prod(shape)
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid of {total} points is too large")

    mesh = np.meshgrid(*[x for a in axes for x in a], indexing="ij", sparse=True)
    P = [mesh[3 * i] for i in range(n)]
    Fq = [mesh[3 * i + 1] for i in range(n)]
    V = [mesh[3 * i + 2] for i in range(n)]

    e_cmp = 0.0
    t_cmp = []
    dt_cycles = 0.0
    for i, pr in enumerate(inst.profiles):
        work = pr.cycles_per_sample * (1.0 - V[i]) * pr.data_size
        if inst.compute_free:
            t_cmp.append(np.zeros_like(work))
        else:
            t_cmp.append(work / Fq[i])
            e_cmp = e_cmp + 0.5 * srv.kappa * work * Fq[i] ** 2
        dt_cycles = dt_cycles + pr.cycles_per_sample * (V[i] * pr.data_size + srv.epsilon)

    band, noise = _noise_and_band(inst)
    gains = np.asarray(inst.channel.gains, dtype=float)
    powers = np.stack(np.broadcast_arrays(*P), axis=-1)
    rates = _rates(gains, powers, noise, band, inst.access)
    bits = np.asarray(inst.payload_bits, dtype=float)
    with np.errstate(divide="ignore"):
        t_up = np.where(bits > 0, bits / rates, 0.0)
    energy = e_cmp + (powers * t_up).sum(axis=-1)
    ok = np.ones(energy.shape, dtype=bool)
    for i, t in enumerate(t_cmp):
        ok &= (t + t_up[..., i]) <= srv.t_max * (1 + 1e-12)
    if not inst.compute_free:
        ok &= dt_cycles <= srv.t_max * srv.f_server
    energy = np.broadcast_to(energy, tuple(shape))
    ok = np.broadcast_to(ok, tuple(shape))
    if not ok.any():
        return GridResult(False, evaluated=total)

    masked = np.where(ok, energy, np.inf)
    flat = int(np.argmin(masked))          # first minimiser = lexicographically smallest
    idx = np.unravel_index(flat, masked.shape)
    best = float(masked[idx])
    k = grid.tolerance_cells
    window = tuple(slice(max(j - k, 0), j + k + 1) for j in idx)
    local = masked[window]
    spread = float(np.max(np.abs(local[np.isfinite(local)] - best)))
    point = {"p": [], "f": [], "v": []}
    for i, (p, f, v) in enumerate(axes):
        point["p"].append(float(p[idx[3 * i]]))
        point["f"].append(float(f[idx[3 * i + 1]]))
        point["v"].append(float(v[idx[3 * i + 2]]))
    return GridResult(True, point, best, spread, total)


def _simplex_points(n, resolution):
    """Integer points ``k`` with ``sum(k) <= resolution``, in lexicographic order."""
    ks = np.indices((resolution + 1,) * n).reshape(n, -1).T
    return ks[ks.sum(axis=1) <= resolution]


def grid_min_makespan_alpha(inst, v, t_total: float, resolution: int = 64) -> GridResult:
    """Best server split on the simplex lattice ``alpha = k / resolution``.

    Objective: ``max(t_total, max_n t_dt_n)``. Ties go to the
    lexicographically smallest ``k``.
    """
    srv = inst.server
    cycles = np.array([pr.cycles_per_sample * (vi * pr.data_size + srv.epsilon)
                       for pr, vi in zip(inst.profiles, v)])
    ks = _simplex_points(len(cycles), resolution).astype(float)
    alpha = ks / resolution
    with np.errstate(divide="ignore", invalid="ignore"):
        t_dt = np.where(cycles > 0, cycles / (alpha * srv.f_server), 0.0)
    makespan = np.maximum(t_total, t_dt.max(axis=1))
    j = int(np.argmin(makespan))
    best = float(makespan[j])
    near = np.abs(ks - ks[j]).max(axis=1) <= 1
    finite = makespan[near][np.isfinite(makespan[near])]
    spread = float(np.max(finite - best)) if finite.size else 0.0
    return GridResult(True, {"alpha": alpha[j].tolist()}, best, spread, len(ks))


def ratio_grid_max(F, bits, bandwidth, G, p_min, p_max, resolution=1e-6):
    """Argmax of ``B log2(1 + pF) / (p d)`` on a uniform power lattice, or None."""
    if resolution > 1e-6:
        raise ValueError("resolution must be <= 1e-6 W")
    steps = int(math.floor((p_max - p_min) / resolution + 1e-9))
    p = p_min + resolution * np.arange(steps + 1)
    if p[-1] < p_max:
        p = np.append(p, p_max)
    r = bandwidth * np.log2(1.0 + p * F)
    ok = r >= bits / G
    if not ok.any():
        return None
    ratio = np.where(ok, r / (p * bits), -np.inf)
    return float(p[int(np.argmax(ratio))])


def grid_min_upload_energy(gains, noise, bandwidth, bits, G, p_bounds, steps=801, zoom=2):
    """Least ``sum_n p_n d_n / R_n`` for two SIC clients (gains in decoding order).

    Every client must finish its upload within ``G``. A second lattice of the
    same size is laid over the ``zoom`` cells around the coarse minimiser.
    Returns ``(powers, energy)`` or ``(None, inf)``.
    """
    g1, g2 = gains
    d1, d2 = bits
    (lo1, hi1), (lo2, hi2) = p_bounds

    def search(a1, b1, a2, b2):
        p1 = np.linspace(a1, b1, steps)[:, None]
        p2 = np.linspace(a2, b2, steps)[None, :]
        r1 = bandwidth * np.log2(1.0 + p1 * g1 / (p2 * g2 + noise))
        r2 = bandwidth * np.log2(1.0 + p2 * g2 / noise)
        e = p1 * d1 / r1 + p2 * d2 / r2
        ok = (d1 / r1 <= G) & (d2 / r2 <= G)
        e = np.where(ok, e, np.inf)
        i, j = np.unravel_index(int(np.argmin(e)), e.shape)
        return p1[i, 0], p2[0, j], float(e[i, j])

    x1, x2, best = search(lo1, hi1, lo2, hi2)
    if not np.isfinite(best):
        return None, math.inf
    h1 = (hi1 - lo1) / (steps - 1) * zoom
    h2 = (hi2 - lo2) / (steps - 1) * zoom
    y1, y2, fine = search(max(lo1, x1 - h1), min(hi1, x1 + h1), max(lo2, x2 - h2), min(hi2, x2 + h2))
    if fine < best:
        x1, x2, best = y1, y2, fine
    return (float(x1), float(x2)), best
