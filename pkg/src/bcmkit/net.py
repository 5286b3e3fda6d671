"""Fully connected feedforward binary classifier trained by backpropagation.

ReLU hidden layers, a single sigmoid output, binary cross-entropy loss, and
minibatch SGD with optional momentum. Weight matrices are stored source-major:
``weights[i][a, b]`` is the link from neuron ``a`` of layer ``i`` to neuron
``b`` of layer ``i + 1``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from bcmkit.data import EncodedDataset, FoldAssignment


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkStructure:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 4:
            raise ShapeError(f"need at least 4 layers, got {self.layer_sizes}")
        if any(n < 1 for n in self.layer_sizes):
            raise ShapeError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ShapeError("output layer must have exactly one neuron")
        if self.hidden_activation != "relu" or self.output_activation != "sigmoid":
            raise ShapeError("only relu hidden / sigmoid output activations are supported")

    @classmethod
    def for_inputs(cls, n_inputs: int, hidden) -> "NetworkStructure":
        return cls((n_inputs, *hidden, 1))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]


@dataclass(frozen=True, eq=False)
class Network:
    structure: NetworkStructure
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int | None = None

    def __post_init__(self):
        sizes = self.structure.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("one weight matrix and bias vector per adjacent layer pair expected")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=float)
            b = np.array(b, dtype=float).reshape(-1)
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeError(f"layer {i}: weights {w.shape} / bias {b.shape} do not match {sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    def same_parameters(self, other: "Network") -> bool:
        return (self.structure == other.structure
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "momentum"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
        if self.optimizer not in ("sgd", "momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    n_correct: int
    n_total: int


@dataclass(frozen=True, eq=False)
class CVResult:
    mean_accuracy: float
    per_fold: tuple[EvalResult, ...]
    final_net: Network | None


def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def init_network(structure: NetworkStructure, seed: int) -> Network:
    """He-style normal init (std sqrt(2 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = structure.layer_sizes
    weights = [rng.normal(0.0, np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)]
    biases = [np.zeros(n) for n in sizes[1:]]
    return Network(structure, tuple(weights), tuple(biases), seed)


def _forward(weights, biases, X):
    """Pre-activations and activations for a batch; the last pre-activation is the logit."""
    acts, pres = [X], []
    a = X
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        pres.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return pres, acts


def _bce(logits, y):
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def loss_and_grads(weights, biases, X, y):
    """Mean binary cross-entropy and its gradients w.r.t. every weight and bias."""
    pres, acts = _forward(weights, biases, X)
    logits = pres[-1][:, 0]
    loss = _bce(logits, y)
    delta = ((sigmoid(logits) - y) / len(y))[:, None]
    gw, gb = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i].T) * (pres[i - 1] > 0)
    return loss, gw, gb


def _check_width(net: Network, n_columns: int):
    if n_columns != net.structure.n_inputs:
        raise ShapeError(f"input has {n_columns} columns, network expects {net.structure.n_inputs}")


def forward(net: Network, input_row):
    """Output probability and per-layer activations for one input row.

    Activations are post-ReLU for hidden layers; the final entry is the
    sigmoid output.
    """
    x = np.asarray(input_row, dtype=float).reshape(-1)
    _check_width(net, x.size)
    pres, acts = _forward(net.weights, net.biases, x[None, :])
    out = float(sigmoid(pres[-1])[0, 0])
    activations = [a[0] for a in acts[:-1]] + [np.array([out])]
    return out, activations


def predict_proba(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    _check_width(net, X.shape[1])
    pres, _ = _forward(net.weights, net.biases, X)
    return sigmoid(pres[-1][:, 0])


def dataset_loss(net: Network, data: EncodedDataset) -> float:
    _check_width(net, data.n_columns)
    pres, _ = _forward(net.weights, net.biases, data.matrix)
    return _bce(pres[-1][:, 0], data.labels)


def train(net: Network, data: EncodedDataset, cfg: TrainConfig, loss_history: list | None = None) -> Network:
    """Minibatch gradient descent on binary cross-entropy.

    The shuffle order comes from ``cfg.seed`` alone, so the result is a pure
    function of (net, data, cfg). If ``loss_history`` is given, the full-data
    loss before training and after every epoch is appended to it.
    """
    _check_width(net, data.n_columns)
    y = data.labels.astype(float)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise TrainingError("training data must contain both classes")
    if cfg.epochs == 0:
        return net

    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    mu = cfg.momentum if cfg.optimizer == "momentum" else 0.0
    lr = cfg.learning_rate
    rng = np.random.default_rng(cfg.seed)
    X = data.matrix
    n = len(y)
    if loss_history is not None:
        loss_history.append(_bce(_forward(weights, biases, X)[0][-1][:, 0], y))

    # overflow shows up as a non-finite loss, reported below with its position
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                loss, gw, gb = loss_and_grads(weights, biases, X[idx], y[idx])
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
                for i in range(len(weights)):
                    vel_w[i] = mu * vel_w[i] - lr * gw[i]
                    vel_b[i] = mu * vel_b[i] - lr * gb[i]
                    weights[i] += vel_w[i]
                    biases[i] += vel_b[i]
            if loss_history is not None:
                loss_history.append(_bce(_forward(weights, biases, X)[0][-1][:, 0], y))

    if not all(np.all(np.isfinite(w)) for w in weights):
        raise TrainingError("training produced non-finite weights")
    return Network(net.structure, tuple(weights), tuple(biases), net.seed)


def evaluate(net: Network, data: EncodedDataset) -> EvalResult:
    if data.n_rows == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = (predict_proba(net, data.matrix) >= 0.5).astype(np.int64)
    correct = int(np.sum(pred == data.labels))
    return EvalResult(accuracy=correct / data.n_rows, n_correct=correct, n_total=data.n_rows)


def fit_full(structure: NetworkStructure, data: EncodedDataset, cfg: TrainConfig, k: int) -> Network:
    """Network trained on every row; seeded ``cfg.seed + k`` so it never collides with a fold."""
    seed = cfg.seed + k
    return train(init_network(structure, seed), data, replace(cfg, seed=seed))


def cross_validate(structure: NetworkStructure, data: EncodedDataset, folds: FoldAssignment, cfg: TrainConfig,
                   with_final: bool = True, workers: int = 1) -> CVResult:
    """Train on k-1 folds, test on the held-out fold, for every fold.

    Fold ``i`` uses seed ``cfg.seed + i`` for both initialisation and shuffling,
    so results do not depend on ``workers``.
    """
    if len(folds.assignment) != data.n_rows:
        raise ShapeError("fold assignment does not cover the dataset")

    def run(i):
        train_rows = data.rows(folds.train_index(i))
        if len(np.unique(train_rows.labels)) < 2:
            raise TrainingError(f"training split for fold {i} contains a single class")
        seed = cfg.seed + i
        net = train(init_network(structure, seed), train_rows, replace(cfg, seed=seed))
        return evaluate(net, data.rows(folds.test_index(i)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_fold = list(pool.map(run, range(folds.k)))
    else:
        per_fold = [run(i) for i in range(folds.k)]
    final = fit_full(structure, data, cfg, folds.k) if with_final else None
    mean = float(np.mean([r.accuracy for r in per_fold]))
    return CVResult(mean_accuracy=mean, per_fold=tuple(per_fold), final_net=final)


def _relu_pattern(weights, biases, x):
    pres, _ = _forward(weights, biases, x)
    return [z > 0 for z in pres[:-1]]


def gradient_check(net: Network, data_row, epsilon: float = 1e-5, n_samples: int = 50, seed: int = 0,
                   grad_fn=None, atol: float = 1e-7) -> float:
    """Worst relative error between analytic and central-difference weight gradients.

    ``data_row`` is ``(x, y)``. Weights whose +/- epsilon perturbation changes
    any ReLU's on/off state are skipped, since the loss is not differentiable
    across the kink. The error for one weight is
    ``|a - n| / max(|a|, |n|, atol)``, which falls back to an absolute
    comparison when both gradients are near zero. ``grad_fn`` replaces the
    analytic gradient (same signature as ``loss_and_grads``).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x, y = data_row
    X = np.asarray(x, dtype=float).reshape(1, -1)
    _check_width(net, X.shape[1])
    Y = np.array([float(y)])
    grad_fn = grad_fn or loss_and_grads
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    _, gw, _ = grad_fn(weights, biases, X, Y)

    base = _relu_pattern(weights, biases, X)
    candidates = [(layer, a, b) for layer, w in enumerate(weights) for a in range(w.shape[0]) for b in range(w.shape[1])]
    order = np.random.default_rng(seed).permutation(len(candidates))

    worst, checked = 0.0, 0
    for c in order:
        if checked >= n_samples:
            break
        layer, a, b = candidates[c]
        w = weights[layer]
        orig = w[a, b]
        w[a, b] = orig + epsilon
        plus_pattern = _relu_pattern(weights, biases, X)
        lp = _bce(_forward(weights, biases, X)[0][-1][:, 0], Y)
        w[a, b] = orig - epsilon
        minus_pattern = _relu_pattern(weights, biases, X)
        lm = _bce(_forward(weights, biases, X)[0][-1][:, 0], Y)
        w[a, b] = orig
        kinked = any(not np.array_equal(p, q) for p, q in zip(base, plus_pattern)) or \
            any(not np.array_equal(p, q) for p, q in zip(base, minus_pattern))
        if kinked:
            continue
        numeric = (lp - lm) / (2 * epsilon)
        analytic = gw[layer][a, b]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), atol)
        worst = max(worst, err)
        checked += 1
    return worst


def network_to_dict(net: Network) -> dict:
    return {
        "layer_sizes": list(net.structure.layer_sizes),
        "hidden_activation": net.structure.hidden_activation,
        "output_activation": net.structure.output_activation,
        "seed": net.seed,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_dict(doc: dict) -> Network:
    structure = NetworkStructure(tuple(doc["layer_sizes"]), doc.get("hidden_activation", "relu"),
                                 doc.get("output_activation", "sigmoid"))
    return Network(structure, tuple(np.array(w, dtype=float).reshape(structure.layer_sizes[i], structure.layer_sizes[i + 1])
                                    for i, w in enumerate(doc["weights"])),
                   tuple(np.array(b, dtype=float) for b in doc["biases"]), doc.get("seed"))


def save_network(net: Network, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly.
    from bcmkit.reports import atomic_write_text

    atomic_write_text(path, json.dumps(network_to_dict(net), indent=1) + "\n")


def load_network(path) -> Network:
    with open(Path(path), encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))
