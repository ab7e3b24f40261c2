"""Federated training with a digital twin, label-flipping clients and RONI screening.

The learner is multinomial logistic regression; parameters live in one flat
vector ``[W.ravel(), b]`` with ``W`` of shape (features, classes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Features, labels, client partition and the server's held-out splits."""

    X: np.ndarray
    y: np.ndarray
    partition: dict
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    def __post_init__(self):
        seen = set()
        for idx in self.partition.values():
            s = set(np.asarray(idx).tolist())
            if seen & s:
                raise ValueError("client partitions overlap")
            seen |= s
        for labels in (self.y, self.y_val, self.y_test):
            if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
                raise ValueError("label out of range")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def client(self, cid):
        idx = self.partition[cid]
        return self.X[idx], self.y[idx]


def n_params(n_features: int, n_classes: int) -> int:
    return n_features * n_classes + n_classes


def init_params(n_features: int, n_classes: int) -> np.ndarray:
    return np.zeros(n_params(n_features, n_classes))


def _unpack(w, n_features, n_classes):
    k = n_features * n_classes
    return w[:k].reshape(n_features, n_classes), w[k:]


def logits(w, X, n_classes):
    W, b = _unpack(w, X.shape[1], n_classes)
    return X @ W + b


def loss(w, X, y, n_classes) -> float:
    """Mean cross-entropy over the given samples."""
    z = logits(w, X, n_classes)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def gradient(w, X, y, n_classes) -> np.ndarray:
    z = logits(w, X, n_classes)
    z -= z.max(axis=1, keepdims=True)
    prob = np.exp(z)
    prob /= prob.sum(axis=1, keepdims=True)
    prob[np.arange(len(y)), y] -= 1.0
    prob /= len(y)
    return np.concatenate([(X.T @ prob).ravel(), prob.sum(axis=0)])


def accuracy(w, X, y, n_classes) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits(w, X, n_classes), axis=1) == y))


def sgd(w, X, y, n_classes, epochs, lr, rng, batch_size=None):
    w = w.copy()
    if len(y) == 0 or lr == 0:
        return w
    bs = len(y) if batch_size is None else batch_size
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), bs):
            sl = order[start:start + bs]
            w -= lr * gradient(w, X[sl], y[sl], n_classes)
    return w


# ---------------------------------------------------------------------------
# data

def split_mapped(n_samples: int, v: float) -> int:
    """Number of a client's samples mirrored by its twin (the leading ones)."""
    return int(round(v * n_samples))


def poison(labels: np.ndarray, n_classes: int, honest: bool = True) -> np.ndarray:
    """Label flip ``y -> C - 1 - y`` for a dishonest client; honest labels pass through."""
    return labels.copy() if honest else (n_classes - 1 - labels)


def local_train(w, X, y, v, epochs, lr, rng, n_classes, batch_size=None):
    """Train on the share kept on the device. Returns None when that share is empty."""
    start = split_mapped(len(y), v)
    if len(y) - start < 1:
        return None
    return sgd(w, X[start:], y[start:], n_classes, epochs, lr, rng, batch_size)


def map_to_twin(X, deviation, rng):
    """The twin's replica of a client's features: built once, every entry off
    by ``deviation * U(-1, 1)``."""
    if deviation == 0:
        return X.copy()
    return X + deviation * rng.uniform(-1.0, 1.0, size=X.shape)


def twin_copy(X_twin, y, v, epsilon, rng):
    """Samples the twin trains on this round: the mapped (leading) share plus
    ``epsilon`` extra ones resampled from the replica."""
    m = split_mapped(len(y), v)
    idx = np.arange(m)
    if epsilon > 0 and len(y) > 0:
        idx = np.concatenate([idx, rng.integers(0, len(y), size=int(epsilon))])
    return X_twin[idx], y[idx]


def dt_train(w, X_mapped, y_mapped, epochs, lr, rng, n_classes, batch_size=None):
    """Server-side training on twin data; no data leaves the model unchanged."""
    return sgd(w, X_mapped, y_mapped, n_classes, epochs, lr, rng, batch_size)


# ---------------------------------------------------------------------------
# aggregation and screening

def convergence_factor(epsilon: float, n_selected: int, total_data: float) -> float:
    if total_data <= 0:
        raise ValueError("total data must be positive")
    return 1.0 + epsilon * n_selected / total_data


@dataclass
class Contribution:
    client: int
    weights: np.ndarray      # local model, or None for twin-only clients
    data_size: int
    v: float


def aggregation_weights(contribs, epsilon: float):
    """Weights on (each local model, the twin model); they sum to the convergence factor."""
    total = float(sum(c.data_size for c in contribs))
    if total <= 0:
        raise ValueError("no data among contributors")
    local = np.array([(1.0 - c.v) * c.data_size / total if c.weights is not None else 0.0
                      for c in contribs])
    twin = sum((c.v * c.data_size + epsilon) / total for c in contribs)
    twin += sum((1.0 - c.v) * c.data_size / total for c in contribs if c.weights is None)
    return local, twin


def aggregate(contribs, w_twin, epsilon: float = 0.0) -> np.ndarray:
    if not contribs:
        raise ValueError("empty selection")
    local, twin = aggregation_weights(contribs, epsilon)
    out = twin * w_twin
    for a, c in zip(local, contribs):
        if c.weights is not None:
            out = out + a * c.weights
    return out


def roni_screen(reference, candidate, X_val, y_val, threshold, n_classes) -> bool:
    """True (positive interaction) unless ``candidate`` loses more than
    ``threshold`` validation accuracy relative to ``reference``."""
    if len(y_val) == 0:
        raise ValueError("empty validation set")
    drop = accuracy(reference, X_val, y_val, n_classes) - accuracy(candidate, X_val, y_val, n_classes)
    return not drop > threshold


def roni_round(reference, contribs, X_val, y_val, threshold, n_classes):
    """Screen every local update of the round against the current global model.

    Returns ``{client: bool}``; twin-only clients are not screened.
    """
    return {c.client: roni_screen(reference, c.weights, X_val, y_val, threshold, n_classes)
            for c in contribs if c.weights is not None}


@dataclass
class FlRound:
    round: int
    selected: tuple
    verdicts: dict
    accepted: tuple
    weights_local: np.ndarray
    weight_twin: float
    gamma: float
    accuracy: float
    model: np.ndarray = field(repr=False, default=None)
    contributions: tuple = field(repr=False, default=())
    twin_model: np.ndarray = field(repr=False, default=None)
    staleness: np.ndarray = field(repr=False, default=None)   # normalised, after the round


# ---------------------------------------------------------------------------
# data sets

def partition_indices(labels, n_clients, per_client, rng, labels_per_client=None):
    """Disjoint index sets of ``per_client`` samples each.

    With ``labels_per_client`` set, every client draws only from that many
    classes (chosen at random); otherwise draws are uniform over all samples.
    """
    labels = np.asarray(labels)
    if labels_per_client is None:
        if n_clients * per_client > len(labels):
            raise ValueError("not enough samples")
        order = rng.permutation(len(labels))
        return {c: order[c * per_client:(c + 1) * per_client] for c in range(n_clients)}
    pools = {k: list(rng.permutation(np.flatnonzero(labels == k))) for k in np.unique(labels)}
    classes = np.array(sorted(pools))
    out = {}
    for c in range(n_clients):
        chosen = rng.choice(classes, size=labels_per_client, replace=False)
        take = []
        for j, k in enumerate(chosen):
            want = per_client // labels_per_client + (j < per_client % labels_per_client)
            if len(pools[k]) < want:
                raise ValueError(f"class {k} ran out of samples")
            take.extend(pools[k][:want])
            del pools[k][:want]
        out[c] = np.array(take)
    return out


def gaussian_mixture(n_clients, samples_per_client, n_classes=10, n_features=20, *,
                     separation=1.0, noise_scales=None, n_val=1000, n_test=2000,
                     distribution="iid", labels_per_client=5, seed=0) -> Dataset:
    """Class-conditional Gaussians; ``separation`` (spread of the class means)
    and ``noise_scales`` may be given per feature.

    ``distribution="noniid"`` gives each client ``labels_per_client`` classes.
    """
    rng = np.random.default_rng(seed)
    separation = np.broadcast_to(np.asarray(separation, dtype=float), (n_features,))
    means = rng.normal(size=(n_classes, n_features)) * separation
    if noise_scales is None:
        noise_scales = np.ones(n_features)
    noise_scales = np.asarray(noise_scales, dtype=float)

    def draw(labels):
        return means[labels] + rng.normal(size=(len(labels), n_features)) * noise_scales

    partition = {}
    xs, ys = [], []
    offset = 0
    for c in range(n_clients):
        if distribution == "iid":
            lab = rng.integers(0, n_classes, size=samples_per_client)
        else:
            allowed = rng.choice(n_classes, size=labels_per_client, replace=False)
            lab = rng.choice(allowed, size=samples_per_client)
        xs.append(draw(lab))
        ys.append(lab)
        partition[c] = np.arange(offset, offset + samples_per_client)
        offset += samples_per_client
    y_val = rng.integers(0, n_classes, size=n_val)
    y_test = rng.integers(0, n_classes, size=n_test)
    return Dataset(np.vstack(xs), np.concatenate(ys), partition, draw(y_val), y_val,
                   draw(y_test), y_test, n_classes)
