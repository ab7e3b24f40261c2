"""Simulation scenario: physical constants, learning setup and scheme choice.

Scenarios load from a flat ``key = value`` text file (``#`` starts a
comment); every key is optional and defaults to the values below. Keys
match the :class:`Scenario` field names.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from dtfl.channel import noise_power

SCHEMES = ("proposed", "no_dt", "oma", "ideal", "random")
DATASETS = ("synthetic", "mnist")
DISTRIBUTIONS = ("iid", "noniid")


@dataclass(frozen=True)
class Scenario:
    # deployment
    n_clients: int = 20
    n_selected: int = 5
    radius: float = 500.0
    # radio
    bandwidth: float = 1e6
    path_loss_exponent: float = 3.76
    noise_density_dbm: float = -174.0
    p_min: float = 0.01
    p_max: float = 0.1
    payload_bits: float = 1e6
    # computing
    cycles_per_sample: float = 1e7
    f_min: float = 1e9
    f_max: float = 10e9
    f_server: float = 100e9
    t_max: float = 10.0
    kappa: float = 2e-28
    v_max: float = 0.5
    samples_per_client: int = 1000
    # learning
    lr: float = 0.01
    epochs: int = 1
    batch_size: int = 32
    rounds: int = 50
    dataset: str = "synthetic"
    separation: float = 0.5          # spread of the synthetic class means
    feature_noise: float = 1.0       # within-class standard deviation
    distribution: str = "iid"
    labels_per_client: int = 5
    mnist_dir: str = ""
    n_val: int = 1000
    n_test: int = 2000
    # trust and twin
    weights: tuple = (0.3, 0.5, 0.2)
    roni: bool = True
    roni_threshold: float = 0.02
    pi_prior: float = 0.5            # PI degree of a client with no screened update yet
    poison_ratio: float = 0.0
    dt_deviation: float = 0.0
    epsilon: float = 0.0
    # run
    scheme: str = "proposed"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_selected <= self.n_clients:
            raise ValueError(f"need 1 <= n_selected <= n_clients, got {self.n_selected}/{self.n_clients}")
        if not 0.0 <= self.poison_ratio <= 1.0:
            raise ValueError("poison_ratio must lie in [0, 1]")
        if not 0.0 <= self.pi_prior <= 1.0:
            raise ValueError("pi_prior must lie in [0, 1]")
        positive = ("radius", "bandwidth", "path_loss_exponent", "p_min", "p_max", "cycles_per_sample",
                    "f_min", "f_max", "f_server", "t_max", "kappa", "samples_per_client",
                    "separation", "feature_noise")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p_min > self.p_max or self.f_min > self.f_max:
            raise ValueError("lower bound above upper bound")
        if self.payload_bits < 0 or self.epsilon < 0 or self.dt_deviation < 0:
            raise ValueError("payload, epsilon and dt_deviation must be >= 0")
        if not 0.0 <= self.v_max <= 1.0:
            raise ValueError("v_max must lie in [0, 1]")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if len(self.weights) != 3 or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must be three numbers summing to 1")

    @property
    def noise_power(self) -> float:
        return noise_power(self.bandwidth, self.noise_density_dbm)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(repr(x) for x in val)
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str):
    kind = {f.name: f.default for f in dataclasses.fields(Scenario)}[name]
    raw = raw.strip()
    if isinstance(kind, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(kind, int):
        val = float(raw)
        if not val.is_integer():
            raise ValueError(f"{name}: expected an integer, got {raw!r}")
        return int(val)
    if isinstance(kind, float):
        return float(raw)
    if isinstance(kind, tuple):
        return tuple(float(x) for x in raw.split(","))
    return raw


def parse_overrides(pairs) -> dict:
    """``["key=value", ...]`` (or a mapping of raw strings) to typed field values."""
    known = {f.name for f in dataclasses.fields(Scenario)}
    items = pairs.items() if isinstance(pairs, dict) else (p.split("=", 1) for p in pairs)
    out = {}
    for item in items:
        if len(item) != 2:
            raise ValueError(f"expected key=value, got {item!r}")
        key, raw = item[0].strip(), item[1]
        if key not in known:
            raise ValueError(f"unknown scenario key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def read_config(path) -> dict:
    """Raw ``key -> value`` strings from a config file."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def load_scenario(path=None, overrides=None) -> Scenario:
    """Defaults, then the file (if any), then ``overrides``.

    ``overrides`` is either a list of ``key=value`` strings or a dict of
    already-typed field values.
    """
    values = {}
    if path is not None:
        values.update(parse_overrides(read_config(path)))
    if isinstance(overrides, dict):
        values.update(overrides)
    elif overrides:
        values.update(parse_overrides(list(overrides)))
    return Scenario(**values)
