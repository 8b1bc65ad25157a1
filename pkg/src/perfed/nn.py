"""Dense feed-forward networks with analytic gradients and seeded SGD.

Every client owns a private architecture (:class:`ModelSpec`) and weights
(:class:`Params`). Networks are fully connected with ReLU hidden layers
and a linear output; classification uses softmax cross-entropy, optionally
plus a proximal pull ``(mu/2) * ||w - anchor||^2``. All operations are
pure functions of their inputs: training returns new :class:`Params` and
never mutates anything, so concurrent use needs no locking.

Arithmetic is float64 throughout. Identical inputs (including seeds)
produce bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericDivergenceError

__all__ = [
    "ModelSpec",
    "Params",
    "TrainOpts",
    "ArchSpace",
    "sample_architecture",
    "init_params",
    "forward_logits",
    "train_classifier",
    "evaluate_accuracy",
    "evaluate_per_class",
    "finite_diff_grad",
    "cross_entropy_loss",
    "loss_and_gradients",
    "dense_forward",
    "dense_backward",
    "params_equal",
    "params_allclose",
    "params_sq_distance",
]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one client's classifier.

    ``hidden_widths`` lists the hidden layer sizes in order (1 to 3
    layers). The only supported activation is ReLU.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    num_classes: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if not 1 <= len(self.hidden_widths) <= 3:
            raise ConfigError(
                f"hidden_widths must have 1 to 3 entries, got {len(self.hidden_widths)}"
            )
        if any(w < 1 for w in self.hidden_widths):
            raise ConfigError(f"hidden widths must be >= 1, got {self.hidden_widths}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.num_classes)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Params:
    """Per-layer weight matrices and bias vectors.

    Weight ``l`` has shape (fan_in, fan_out); bias ``l`` has shape
    (fan_out,). Shapes must chain. Also used as the container for
    gradient values, which share the same layout. Entries must be finite;
    arrays are stored read-only.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(_freeze(w) for w in self.weights)
        bs = tuple(_freeze(b) for b in self.biases)
        if len(ws) != len(bs) or not ws:
            raise ContractError("weights and biases must be non-empty and aligned")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ContractError(f"layer {i}: weight {w.shape} and bias {b.shape} mismatch")
            if i > 0 and ws[i - 1].shape[1] != w.shape[0]:
                raise ContractError(
                    f"layer {i}: fan_in {w.shape[0]} does not chain from {ws[i - 1].shape[1]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericDivergenceError(f"layer {i}: non-finite entries")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def matches(self, spec: ModelSpec) -> bool:
        dims = spec.layer_dims
        actual = (self.input_dim,) + tuple(w.shape[1] for w in self.weights)
        return dims == actual


def params_equal(a: Params, b: Params) -> bool:
    return len(a.weights) == len(b.weights) and all(
        np.array_equal(x, y) for x, y in zip(a.weights + a.biases, b.weights + b.biases)
    )


def params_allclose(a: Params, b: Params, rtol=1e-9, atol=1e-12) -> bool:
    return len(a.weights) == len(b.weights) and all(
        x.shape == y.shape and np.allclose(x, y, rtol=rtol, atol=atol)
        for x, y in zip(a.weights + a.biases, b.weights + b.biases)
    )


def params_sq_distance(a: Params, b: Params) -> float:
    """Squared Euclidean distance between two same-shaped parameter sets."""
    total = 0.0
    for x, y in zip(a.weights + a.biases, b.weights + b.biases):
        if x.shape != y.shape:
            raise ContractError(f"shape mismatch {x.shape} vs {y.shape}")
        d = x - y
        total += float(np.dot(d.ravel(), d.ravel()))
    return total


@dataclass(frozen=True)
class TrainOpts:
    """SGD options. ``prox_mu > 0`` adds (mu/2)*||w - anchor||^2 to the loss."""

    learning_rate: float
    epochs: int
    batch_size: int
    prox_mu: float = 0.0
    prox_anchor: Params | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.prox_mu < 0:
            raise ConfigError(f"prox_mu must be >= 0, got {self.prox_mu}")
        if self.prox_mu > 0 and self.prox_anchor is None:
            raise ConfigError("prox_mu > 0 requires prox_anchor")


@dataclass(frozen=True)
class ArchSpace:
    """Menu of depths and hidden widths to sample client architectures from."""

    depths: tuple[int, ...]
    widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(sorted(set(int(d) for d in self.depths))))
        object.__setattr__(self, "widths", tuple(sorted(set(int(w) for w in self.widths))))
        if not self.depths:
            raise ConfigError("depth menu is empty")
        if not set(self.depths) <= {1, 2, 3}:
            raise ConfigError(f"depth choices must be within {{1,2,3}}, got {self.depths}")
        if not self.widths:
            raise ConfigError("width menu is empty")
        if any(w < 1 for w in self.widths):
            raise ConfigError(f"widths must be >= 1, got {self.widths}")


def sample_architecture(space: ArchSpace, input_dim: int, num_classes: int, seed: int) -> ModelSpec:
    """Draw a random architecture: depth from the depth menu, widths from
    the width menu (with replacement), listed in ascending order.

    Deterministic in (space, seed); menus are treated as sets.
    """
    rng = np.random.default_rng(seed)
    depth = int(rng.choice(np.asarray(space.depths)))
    widths = sorted(int(w) for w in rng.choice(np.asarray(space.widths), size=depth, replace=True))
    return ModelSpec(input_dim=input_dim, hidden_widths=tuple(widths), num_classes=num_classes)


def init_params(spec: ModelSpec, seed: int) -> Params:
    """Initialize weights and biases uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, size=fan_out))
    return Params(tuple(ws), tuple(bs))


# ---------------------------------------------------------------------------
# Dense engine: shared by the classifier, the discriminator, and the
# generator (all are ReLU nets with a linear output layer).
# ---------------------------------------------------------------------------


def dense_forward(weights, biases, inputs: np.ndarray):
    """Forward pass through ReLU hidden layers and a linear output.

    Returns (outputs, cache) where cache feeds :func:`dense_backward`.
    """
    h = inputs
    activations = [inputs]
    pre_acts = []
    for w, b in zip(weights[:-1], biases[:-1]):
        z = h @ w + b
        h = np.maximum(z, 0.0)
        pre_acts.append(z)
        activations.append(h)
    out = h @ weights[-1] + biases[-1]
    return out, (activations, pre_acts)


def dense_backward(weights, cache, dout: np.ndarray):
    """Backpropagate ``dout`` (gradient w.r.t. the outputs).

    Returns (weight grads, bias grads, input grads).
    """
    activations, pre_acts = cache
    n_layers = len(weights)
    dws = [None] * n_layers
    dbs = [None] * n_layers
    dws[-1] = activations[-1].T @ dout
    dbs[-1] = dout.sum(axis=0)
    dh = dout @ weights[-1].T
    for layer in range(n_layers - 2, -1, -1):
        dz = dh * (pre_acts[layer] > 0)
        dws[layer] = activations[layer].T @ dz
        dbs[layer] = dz.sum(axis=0)
        dh = dz @ weights[layer].T
    return dws, dbs, dh


def _as_batch(params: Params, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ContractError(
            f"input dimension {x.shape[-1] if x.ndim else '?'} does not match "
            f"model input_dim {params.input_dim}"
        )
    return x


def forward_logits(params: Params, inputs) -> np.ndarray:
    """Logits for a batch of input vectors, one row per input."""
    x = _as_batch(params, inputs)
    out, _ = dense_forward(params.weights, params.biases, x)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _dataset_arrays(dataset):
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.int64)
    return x, y


def cross_entropy_loss(params: Params, features, labels, prox_mu=0.0, prox_anchor=None) -> float:
    """Mean softmax cross-entropy, plus the proximal term when mu > 0."""
    x = _as_batch(params, features)
    y = np.asarray(labels, dtype=np.int64)
    logp = _log_softmax(forward_logits(params, x))
    loss = float(-logp[np.arange(len(y)), y].mean())
    if prox_mu > 0:
        loss += 0.5 * prox_mu * params_sq_distance(params, prox_anchor)
    return loss


def loss_and_gradients(params: Params, features, labels, prox_mu=0.0, prox_anchor=None):
    """Loss plus analytic gradients, returned as a Params-shaped bundle."""
    x = _as_batch(params, features)
    y = np.asarray(labels, dtype=np.int64)
    n = len(y)
    logits, cache = dense_forward(params.weights, params.biases, x)
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(n), y].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dws, dbs, _ = dense_backward(params.weights, cache, dlogits)
    if prox_mu > 0:
        loss += 0.5 * prox_mu * params_sq_distance(params, prox_anchor)
        dws = [dw + prox_mu * (w - a) for dw, w, a in zip(dws, params.weights, prox_anchor.weights)]
        dbs = [db + prox_mu * (b - a) for db, b, a in zip(dbs, params.biases, prox_anchor.biases)]
    return loss, Params(tuple(dws), tuple(dbs))


def _check_labels(y: np.ndarray, num_classes: int):
    if len(y) and (y.min() < 0 or y.max() >= num_classes):
        raise ContractError(
            f"labels must lie in [0, {num_classes}), got range [{y.min()}, {y.max()}]"
        )


def train_classifier(params: Params, dataset, opts: TrainOpts, seed: int) -> Params:
    """Mini-batch SGD on softmax cross-entropy (plus proximal term).

    Batch order is a seeded per-epoch permutation, so the result is a
    deterministic function of (params, dataset order, opts, seed).
    ``epochs=0`` returns ``params`` unchanged.
    """
    x, y = _dataset_arrays(dataset)
    if len(y) == 0:
        raise ContractError("training dataset is empty")
    _check_labels(y, params.output_dim)
    anchor = opts.prox_anchor
    if opts.prox_mu > 0:
        for w, a in zip(params.weights, anchor.weights):
            if w.shape != a.shape:
                raise ContractError(
                    f"prox_anchor shape {a.shape} does not match params shape {w.shape}"
                )
    if opts.epochs == 0:
        return params

    rng = np.random.default_rng(seed)
    ws = [w.copy() for w in params.weights]
    bs = [b.copy() for b in params.biases]
    n = len(y)
    lr = opts.learning_rate
    for epoch in range(opts.epochs):
        order = rng.permutation(n)
        for start in range(0, n, opts.batch_size):
            idx = order[start : start + opts.batch_size]
            xb, yb = x[idx], y[idx]
            m = len(yb)
            logits, cache = dense_forward(ws, bs, xb)
            logp = _log_softmax(logits)
            loss = -logp[np.arange(m), yb].mean()
            if not np.isfinite(loss):
                raise NumericDivergenceError(f"training loss diverged at epoch {epoch}")
            dlogits = np.exp(logp)
            dlogits[np.arange(m), yb] -= 1.0
            dlogits /= m
            dws, dbs, _ = dense_backward(ws, cache, dlogits)
            if opts.prox_mu > 0:
                for layer in range(len(ws)):
                    dws[layer] = dws[layer] + opts.prox_mu * (ws[layer] - anchor.weights[layer])
                    dbs[layer] = dbs[layer] + opts.prox_mu * (bs[layer] - anchor.biases[layer])
            for layer in range(len(ws)):
                ws[layer] -= lr * dws[layer]
                bs[layer] -= lr * dbs[layer]
            for layer in range(len(ws)):
                if not (np.isfinite(ws[layer]).all() and np.isfinite(bs[layer]).all()):
                    raise NumericDivergenceError(f"parameters diverged at epoch {epoch}")
    return Params(tuple(ws), tuple(bs))


def evaluate_accuracy(params: Params, dataset) -> float:
    """Fraction of samples whose argmax logit equals the label.

    Ties break toward the lowest class index.
    """
    x, y = _dataset_arrays(dataset)
    if len(y) == 0:
        raise ContractError("evaluation dataset is empty")
    _check_labels(y, params.output_dim)
    preds = np.argmax(forward_logits(params, x), axis=1)
    return float(np.mean(preds == y))


def evaluate_per_class(params: Params, dataset) -> dict[int, float]:
    """Accuracy per class, over the classes present in the dataset."""
    x, y = _dataset_arrays(dataset)
    if len(y) == 0:
        raise ContractError("evaluation dataset is empty")
    preds = np.argmax(forward_logits(params, x), axis=1)
    out = {}
    for c in np.unique(y):
        mask = y == c
        out[int(c)] = float(np.mean(preds[mask] == c))
    return out


def finite_diff_grad(params: Params, dataset, epsilon: float) -> Params:
    """Central-difference estimate of the cross-entropy gradient.

    Entry-by-entry oracle: independent of the backpropagation path, it
    only evaluates the loss, so it serves as a gradient check.
    """
    if not epsilon > 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    x, y = _dataset_arrays(dataset)

    ws = [w.copy() for w in params.weights]
    bs = [b.copy() for b in params.biases]

    def loss_at() -> float:
        logits, _ = dense_forward(ws, bs, x)
        logp = _log_softmax(logits)
        return float(-logp[np.arange(len(y)), y].mean())

    grads_w, grads_b = [], []
    for arrs, grads in ((ws, grads_w), (bs, grads_b)):
        for arr in arrs:
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss_at()
                flat[i] = orig - epsilon
                down = loss_at()
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * epsilon)
            grads.append(g)
    return Params(tuple(grads_w), tuple(grads_b))
