"""Class-conditional generators trained against each client's classifier.

The discriminator reuses the client's own network: its hidden layers (the
trunk) are copied in, a label-conditioning block and a fresh scalar
real/fake head are added, and the whole thing is a plain dense net over
the concatenated input (sample, one-hot label). After adversarial
training the updated trunk is written back into the returned classifier
parameters, so GAN training updates both the generator and the client
model. The generator is a dense net over (latent noise, one-hot label)
whose hidden widths mirror the client's in reverse.

Training alternates one discriminator step (real batch scored as real,
generated batch as fake) with one non-saturating generator step. Three
stabilizers keep the tiny nets on track at this scale:

* an auxiliary classification term routed through the client's own
  (frozen) output head, so conditioned samples are pulled into their
  class's region; its weight decays linearly to zero over the run,
* a linearly decaying generator learning rate,
* an exponential moving average of the generator weights, which is what
  gets returned and sampled from.

An optional privacy mechanism clips each per-batch discriminator gradient
to a norm bound and adds Gaussian noise. It is the mechanism only; no
privacy budget is tracked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericDivergenceError
from .nn import ModelSpec, Params, dense_backward, dense_forward
from .seeds import derive_seed

__all__ = [
    "GeneratorSpec",
    "GanOpts",
    "DpOpts",
    "GeneratedBatch",
    "generator_spec_for",
    "init_generator",
    "build_discriminator",
    "train_cgan",
    "generate_labeled",
    "dp_clip_noise",
]


@dataclass(frozen=True)
class GeneratorSpec:
    """Architecture of a class-conditional generator.

    Input is latent noise concatenated with a one-hot class; output is a
    feature vector of the task dimension.
    """

    latent_dim: int
    class_count: int
    hidden_widths: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if self.output_dim < 1:
            raise ConfigError(f"output_dim must be >= 1, got {self.output_dim}")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ConfigError(f"hidden_widths must be positive, got {self.hidden_widths}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.latent_dim + self.class_count, *self.hidden_widths, self.output_dim)


def generator_spec_for(model_spec: ModelSpec, latent_dim: int = 8) -> GeneratorSpec:
    """Mirror a classifier: generator hidden widths are the client's reversed."""
    return GeneratorSpec(
        latent_dim=latent_dim,
        class_count=model_spec.num_classes,
        hidden_widths=tuple(reversed(model_spec.hidden_widths)),
        output_dim=model_spec.input_dim,
    )


def init_generator(spec: GeneratorSpec, seed: int) -> Params:
    """Scaled-uniform initialization, same scheme as the classifiers."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, size=fan_out))
    return Params(tuple(ws), tuple(bs))


@dataclass(frozen=True)
class DpOpts:
    clip_norm: float
    noise_multiplier: float

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.noise_multiplier < 0:
            raise ConfigError(f"noise_multiplier must be >= 0, got {self.noise_multiplier}")


@dataclass(frozen=True)
class GanOpts:
    """Adversarial training options. ``steps=0`` skips training entirely."""

    steps: int
    gen_lr: float
    disc_lr: float
    batch_size: int
    dp: DpOpts | None = None

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if not (self.gen_lr > 0 and self.disc_lr > 0):
            raise ConfigError("gen_lr and disc_lr must be positive")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True, eq=False)
class GeneratedBatch:
    """Generated samples with their conditioning labels and origin client.

    Labels are the classes the generator was asked for, never anything a
    model predicted afterwards.
    """

    features: np.ndarray
    labels: np.ndarray
    origins: np.ndarray
    class_count: int

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        origins = np.array(self.origins, dtype=np.int64, copy=True)
        if feats.ndim != 2 or labels.shape != (len(feats),) or origins.shape != labels.shape:
            raise ContractError("features, labels, origins must align")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ContractError(f"labels must lie in [0, {self.class_count})")
        if not np.isfinite(feats).all():
            raise NumericDivergenceError("generated features contain non-finite values")
        for arr in (feats, labels, origins):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "origins", origins)

    def __len__(self) -> int:
        return len(self.labels)


def _one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((len(labels), class_count), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def build_discriminator(client_spec: ModelSpec, client_params: Params, seed: int) -> Params:
    """Assemble the discriminator from a client classifier.

    The returned net takes (sample, one-hot label) concatenated. Its first
    layer stacks the client's first weight matrix over a fresh
    label-conditioning block; deeper hidden layers are exact copies; the
    output is a freshly initialized scalar head. Fresh parts are
    deterministic in ``seed``.
    """
    if not client_params.matches(client_spec):
        raise ContractError("client params do not match the given spec")
    rng = np.random.default_rng(seed)
    k = client_spec.num_classes
    h_first = client_spec.hidden_widths[0]
    h_last = client_spec.hidden_widths[-1]
    label_block = rng.uniform(-1.0 / np.sqrt(k), 1.0 / np.sqrt(k), size=(k, h_first))
    head_w = rng.uniform(-1.0 / np.sqrt(h_last), 1.0 / np.sqrt(h_last), size=(h_last, 1))
    head_b = rng.uniform(-1.0 / np.sqrt(h_last), 1.0 / np.sqrt(h_last), size=1)

    first = np.vstack([client_params.weights[0], label_block])
    hidden_n = len(client_spec.hidden_widths)
    ws = (first, *client_params.weights[1:hidden_n], head_w)
    bs = (*client_params.biases[:hidden_n], head_b)
    return Params(ws, bs)


def _write_back_trunk(disc: Params, client_spec: ModelSpec, client_params: Params) -> Params:
    """Copy the trained trunk back into the classifier, keeping its output layer."""
    d = client_spec.input_dim
    hidden_n = len(client_spec.hidden_widths)
    ws = (disc.weights[0][:d], *disc.weights[1:hidden_n], client_params.weights[-1])
    bs = (*disc.biases[:hidden_n], client_params.biases[-1])
    return Params(ws, bs)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _flat_norm(arrays) -> float:
    return float(np.sqrt(sum(float(np.dot(a.ravel(), a.ravel())) for a in arrays)))


def _clip_noise_lists(dws, dbs, clip_norm, noise_multiplier, rng):
    norm = _flat_norm(dws + dbs)
    if norm > clip_norm:
        scale = clip_norm / norm
        dws = [g * scale for g in dws]
        dbs = [g * scale for g in dbs]
    if noise_multiplier > 0:
        sigma = noise_multiplier * clip_norm
        dws = [g + sigma * rng.standard_normal(g.shape) for g in dws]
        dbs = [g + sigma * rng.standard_normal(g.shape) for g in dbs]
    return dws, dbs


def dp_clip_noise(grad: Params, clip_norm: float, noise_multiplier: float, seed: int) -> Params:
    """Clip a gradient bundle to ``clip_norm`` (global L2) and add Gaussian
    noise of scale ``noise_multiplier * clip_norm`` entrywise."""
    if not clip_norm > 0:
        raise ContractError(f"clip_norm must be positive, got {clip_norm}")
    if noise_multiplier < 0:
        raise ContractError(f"noise_multiplier must be >= 0, got {noise_multiplier}")
    rng = np.random.default_rng(seed)
    dws, dbs = _clip_noise_lists(
        list(grad.weights), list(grad.biases), clip_norm, noise_multiplier, rng
    )
    return Params(tuple(dws), tuple(dbs))


# stabilizer constants (see the module docstring)
AUX_CLASS_WEIGHT = 1.0
GEN_EMA_DECAY = 0.995


def _class_output_grad(trunk_out, labels, head_w, head_b, weight):
    """Gradient of the mean class cross-entropy (through the frozen head)
    w.r.t. the trunk output."""
    n = len(labels)
    logits = trunk_out @ head_w + head_b
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(n), labels] -= 1.0
    return (probs / n) @ head_w.T * weight


def _disc_fused_backward(disc_w, cache, head_grad, trunk_grad, want_params=True):
    """Backward through the discriminator for the combined loss: the
    adversarial gradient enters at the scalar head, the class gradient at
    the trunk output. Returns (weight grads, bias grads, input grad)."""
    activations, pre_acts = cache
    n_layers = len(disc_w)
    dws = [None] * n_layers
    dbs = [None] * n_layers
    if want_params:
        dws[-1] = activations[-1].T @ head_grad
        dbs[-1] = head_grad.sum(axis=0)
    dh = head_grad @ disc_w[-1].T + trunk_grad
    for layer in range(n_layers - 2, -1, -1):
        dz = dh * (pre_acts[layer] > 0)
        if want_params:
            dws[layer] = activations[layer].T @ dz
            dbs[layer] = dz.sum(axis=0)
        dh = dz @ disc_w[layer].T
    return dws, dbs, dh


def train_cgan(
    client_params: Params,
    client_spec: ModelSpec,
    gen: Params,
    train_set,
    opts: GanOpts,
    seed: int,
):
    """Alternating adversarial training of (discriminator, generator).

    Returns the classifier with its trunk updated (output head untouched)
    and the updated generator. ``steps=0`` returns both inputs untouched.
    The whole trajectory is a deterministic function of the inputs and
    ``seed``.
    """
    if len(train_set) == 0:
        raise ContractError("GAN training set is empty")
    if opts.steps == 0:
        return client_params, gen

    k = client_spec.num_classes
    d = client_spec.input_dim
    latent_dim = gen.input_dim - k
    if latent_dim < 1:
        raise ContractError("generator input is too small for the class count")
    if gen.output_dim != d:
        raise ContractError(
            f"generator output dim {gen.output_dim} does not match task dim {d}"
        )

    rng = np.random.default_rng(derive_seed(seed, "gan-steps"))
    noise_rng = np.random.default_rng(derive_seed(seed, "dp-noise"))
    disc = build_discriminator(client_spec, client_params, derive_seed(seed, "disc-init"))
    head_w, head_b = client_params.weights[-1], client_params.biases[-1]

    disc_w = [w.copy() for w in disc.weights]
    disc_b = [b.copy() for b in disc.biases]
    gen_w = [w.copy() for w in gen.weights]
    gen_b = [b.copy() for b in gen.biases]
    ema_w = [w.copy() for w in gen_w]
    ema_b = [b.copy() for b in gen_b]

    x_all = train_set.features
    y_all = train_set.labels
    n = len(y_all)
    batch = opts.batch_size

    for step in range(opts.steps):
        frac = step / opts.steps
        aux_weight = AUX_CLASS_WEIGHT * (1.0 - frac)
        gen_lr = opts.gen_lr * (1.0 - frac)

        idx = rng.integers(0, n, size=batch)
        x_real, y_cond = x_all[idx], y_all[idx]
        onehot = _one_hot(y_cond, k)

        # Discriminator step: real batch up, generated batch down, plus the
        # class term keeping the trunk aligned with the frozen head. Real
        # and fake rows go through one stacked pass.
        z = rng.standard_normal((batch, latent_dim))
        x_fake, _ = dense_forward(gen_w, gen_b, np.concatenate([z, onehot], axis=1))
        both = np.concatenate(
            [
                np.concatenate([x_real, onehot], axis=1),
                np.concatenate([x_fake, onehot], axis=1),
            ]
        )
        scores, cache = dense_forward(disc_w, disc_b, both)
        s_real, s_fake = scores[:batch], scores[batch:]
        loss_d = float(_softplus(-s_real).mean() + _softplus(s_fake).mean())
        if not np.isfinite(loss_d):
            raise NumericDivergenceError(f"discriminator loss diverged at step {step}")
        head_grad = np.concatenate([-_sigmoid(-s_real), _sigmoid(s_fake)]) / batch
        trunk_out = cache[0][-1]
        trunk_grad = np.zeros_like(trunk_out)
        trunk_grad[:batch] = _class_output_grad(
            trunk_out[:batch], y_cond, head_w, head_b, aux_weight
        )
        dws, dbs, _ = _disc_fused_backward(disc_w, cache, head_grad, trunk_grad)
        if opts.dp is not None:
            dws, dbs = _clip_noise_lists(
                dws, dbs, opts.dp.clip_norm, opts.dp.noise_multiplier, noise_rng
            )
        for layer in range(len(disc_w)):
            disc_w[layer] -= opts.disc_lr * dws[layer]
            disc_b[layer] -= opts.disc_lr * dbs[layer]

        # Generator step: raise the discriminator's score on fresh fakes and
        # pull each conditioned sample into its class's region.
        z2 = rng.standard_normal((batch, latent_dim))
        gen_in = np.concatenate([z2, onehot], axis=1)
        x_gen, cache_g = dense_forward(gen_w, gen_b, gen_in)
        s_gen, cache_d = dense_forward(disc_w, disc_b, np.concatenate([x_gen, onehot], axis=1))
        loss_g = float(_softplus(-s_gen).mean())
        if not np.isfinite(loss_g):
            raise NumericDivergenceError(f"generator loss diverged at step {step}")
        cls_grad = _class_output_grad(cache_d[0][-1], y_cond, head_w, head_b, aux_weight)
        _, _, d_input = _disc_fused_backward(
            disc_w, cache_d, -_sigmoid(-s_gen) / batch, cls_grad, want_params=False
        )
        gw, gb, _ = dense_backward(gen_w, cache_g, d_input[:, :d])
        for layer in range(len(gen_w)):
            gen_w[layer] -= gen_lr * gw[layer]
            gen_b[layer] -= gen_lr * gb[layer]
            ema_w[layer] = GEN_EMA_DECAY * ema_w[layer] + (1.0 - GEN_EMA_DECAY) * gen_w[layer]
            ema_b[layer] = GEN_EMA_DECAY * ema_b[layer] + (1.0 - GEN_EMA_DECAY) * gen_b[layer]

        if not all(np.isfinite(a).all() for a in disc_w + disc_b + gen_w + gen_b):
            raise NumericDivergenceError(f"parameters diverged at step {step}")

    trained_disc = Params(tuple(disc_w), tuple(disc_b))
    new_client = _write_back_trunk(trained_disc, client_spec, client_params)
    new_gen = Params(tuple(ema_w), tuple(ema_b))
    return new_client, new_gen


def generate_labeled(gen: Params, class_counts, seed: int, origin: int = -1) -> GeneratedBatch:
    """Generate ``class_counts[c]`` samples per class by feeding (latent
    noise, one-hot c) through the generator. Deterministic in
    (gen, class_counts, seed)."""
    counts = np.asarray(class_counts, dtype=np.int64)
    if counts.ndim != 1 or len(counts) < 2:
        raise ContractError("class_counts must list one count per class (>= 2 classes)")
    if (counts < 0).any():
        raise ContractError("class counts must be nonnegative")
    total = int(counts.sum())
    if total == 0:
        raise ContractError("all class counts are zero")
    k = len(counts)
    latent_dim = gen.input_dim - k
    if latent_dim < 1:
        raise ContractError("generator input is too small for the class count")

    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for c in range(k):
        if counts[c] == 0:
            continue
        z = rng.standard_normal((counts[c], latent_dim))
        onehot = _one_hot(np.full(counts[c], c, dtype=np.int64), k)
        x, _ = dense_forward(gen.weights, gen.biases, np.concatenate([z, onehot], axis=1))
        feats.append(x)
        labels.append(np.full(counts[c], c, dtype=np.int64))
    features = np.concatenate(feats)
    labels = np.concatenate(labels)
    return GeneratedBatch(features, labels, np.full(total, origin, dtype=np.int64), k)
