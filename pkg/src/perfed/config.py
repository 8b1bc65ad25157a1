"""Declarative experiment configuration.

Configs are JSON objects validated strictly: unknown keys are rejected by
name, every violation is reported with its field path, and all failures
are collected before raising. The master seed (config key or ``--seed``)
determines every derived stream; there is no wall-clock seeding anywhere.

Top-level keys and defaults are documented in the README config
reference; :data:`DEFAULTS` is the single source of truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .baselines import BaselineConfig
from .datagen import MixtureTaskSpec, PartitionPlan
from .errors import ConfigError
from .gan import DpOpts, GanOpts
from .nn import ArchSpace, ModelSpec, TrainOpts

__all__ = ["ExperimentConfig", "load_config", "parse_config", "DEFAULTS"]

DEFAULTS = {
    "task": {
        "class_count": 4,
        "dim": 2,
        "means": None,  # None: classes evenly placed on a circle of the given radius
        "radius": 2.0,
        "scale": 0.55,
        "train_size": 2000,
        "test_size": 800,
    },
    "partition": {
        "mode": "noniid",
        "per_client_size": 100,
        "major_class_fraction": 0.5,
        "major_sample_fraction": 0.9,
    },
    "client_count": 8,
    "arch": {
        "depths": [2, 3],
        "widths": [20, 24, 32, 40, 48, 56, 80, 96],
        "latent_dim": 8,
    },
    "fed": {
        "beta": 5.0,
        "max_round": 5,
        "gan": {
            "steps": 1200,
            "gen_lr": 0.1,
            "disc_lr": 0.03,
            "batch_size": 32,
            "dp": None,  # or {"clip_norm": >0, "noise_multiplier": >=0}
        },
        "init_train": {"learning_rate": 0.1, "epochs": 60, "batch_size": 16, "prox_mu": 0.0},
        "update_train": {"learning_rate": 0.05, "epochs": 30, "batch_size": 32, "prox_mu": 0.0},
    },
    "baseline": {
        "kind": "fedavg",
        "rounds": 5,
        "local_epochs": 5,
        "prox_mu": 0.0,
        "shared_widths": [32, 48],
    },
    "master_seed": None,
    "out_dir": None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    task: MixtureTaskSpec
    partition_mode: str
    per_client_size: int
    major_class_fraction: float
    major_sample_fraction: float
    client_count: int
    arch_space: ArchSpace
    latent_dim: int
    beta: float
    max_round: int
    gan_opts: GanOpts
    init_train: TrainOpts
    update_train: TrainOpts
    baseline_kind: str
    baseline_rounds: int
    baseline_local_epochs: int
    baseline_prox_mu: float
    baseline_shared_widths: tuple[int, ...]
    master_seed: int | None
    out_dir: str | None

    def partition_plan(self, seed: int) -> PartitionPlan:
        return PartitionPlan(
            client_count=self.client_count,
            per_client_size=self.per_client_size,
            mode=self.partition_mode,
            major_class_fraction=self.major_class_fraction,
            major_sample_fraction=self.major_sample_fraction,
            seed=seed,
        )

    def baseline_config(self, shared_spec: ModelSpec, kind: str | None = None) -> BaselineConfig:
        return BaselineConfig(
            kind=kind or self.baseline_kind,
            rounds=self.baseline_rounds,
            local_epochs=self.baseline_local_epochs,
            prox_mu=self.baseline_prox_mu,
            shared_spec=shared_spec,
        )


def default_means(class_count: int, dim: int, radius: float):
    """Evenly spaced class means: on a line for 1-D tasks, on a circle
    (first two coordinates) otherwise."""
    if dim == 1:
        return [[(c - (class_count - 1) / 2.0) * radius] for c in range(class_count)]
    means = []
    for c in range(class_count):
        angle = 2.0 * math.pi * c / class_count
        vec = [radius * math.cos(angle), radius * math.sin(angle)] + [0.0] * (dim - 2)
        means.append(vec)
    return means


class _Checker:
    """Collects all validation failures before raising one ConfigError."""

    def __init__(self):
        self.errors: list[str] = []

    def fail(self, path: str, message: str):
        self.errors.append(f"{path}: {message}")

    def unknown_keys(self, data: dict, allowed, path: str):
        for key in data:
            if key not in allowed:
                where = f"{path}.{key}" if path else key
                self.errors.append(f"unknown key: {where}")

    def get(self, data: dict, key: str, default, path: str, kind=None, check=None, describe=""):
        value = data.get(key, default)
        where = f"{path}.{key}" if path else key
        if value is None:
            return None
        if kind is not None:
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, kind) or isinstance(value, bool):
                self.fail(where, f"expected {getattr(kind, '__name__', kind)}, got {value!r}")
                return default
        if check is not None and not check(value):
            self.fail(where, describe or f"invalid value {value!r}")
            return default
        return value

    def raise_if_failed(self):
        if self.errors:
            raise ConfigError(
                "invalid configuration:\n  " + "\n  ".join(self.errors)
            )


def _parse_train(chk: _Checker, data: dict, defaults: dict, path: str) -> dict:
    chk.unknown_keys(data, defaults.keys(), path)
    return {
        "learning_rate": chk.get(
            data, "learning_rate", defaults["learning_rate"], path, float,
            lambda v: v > 0, "must be positive",
        ),
        "epochs": chk.get(data, "epochs", defaults["epochs"], path, int,
                          lambda v: v >= 0, "must be >= 0"),
        "batch_size": chk.get(data, "batch_size", defaults["batch_size"], path, int,
                              lambda v: v >= 1, "must be >= 1"),
        "prox_mu": chk.get(data, "prox_mu", defaults["prox_mu"], path, float,
                           lambda v: v >= 0, "must be >= 0"),
    }


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a raw JSON object and fill documented defaults."""
    if not isinstance(data, dict):
        raise ConfigError(f"top-level config must be an object, got {type(data).__name__}")
    chk = _Checker()
    chk.unknown_keys(data, DEFAULTS.keys(), "")

    t = data.get("task", {})
    td = DEFAULTS["task"]
    if not isinstance(t, dict):
        chk.fail("task", "expected object")
        t = {}
    chk.unknown_keys(t, td.keys(), "task")
    class_count = chk.get(t, "class_count", td["class_count"], "task", int,
                          lambda v: v >= 2, "must be >= 2")
    dim = chk.get(t, "dim", td["dim"], "task", int, lambda v: v >= 1, "must be >= 1")
    radius = chk.get(t, "radius", td["radius"], "task", float,
                     lambda v: v > 0, "must be positive")
    scale = chk.get(t, "scale", td["scale"], "task", float, lambda v: v > 0, "must be positive")
    train_size = chk.get(t, "train_size", td["train_size"], "task", int,
                         lambda v: v >= 2, "must be >= 2")
    test_size = chk.get(t, "test_size", td["test_size"], "task", int,
                        lambda v: v >= 2, "must be >= 2")
    means = chk.get(
        t, "means", td["means"], "task", list,
        lambda v: all(
            isinstance(row, list)
            and len(row) == (dim or 0)
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row)
            for row in v
        ) and len(v) == (class_count or 0),
        "must be a class_count x dim matrix of numbers",
    )

    p = data.get("partition", {})
    pd = DEFAULTS["partition"]
    if not isinstance(p, dict):
        chk.fail("partition", "expected object")
        p = {}
    chk.unknown_keys(p, pd.keys(), "partition")
    mode = chk.get(p, "mode", pd["mode"], "partition", str,
                   lambda v: v in ("iid", "noniid"), "must be 'iid' or 'noniid'")
    per_client = chk.get(p, "per_client_size", pd["per_client_size"], "partition", int,
                         lambda v: v >= 1, "must be >= 1")
    major_cf = chk.get(p, "major_class_fraction", pd["major_class_fraction"], "partition",
                       float, lambda v: 0 < v <= 1, "must lie in (0, 1]")
    major_sf = chk.get(p, "major_sample_fraction", pd["major_sample_fraction"], "partition",
                       float, lambda v: 0 < v <= 1, "must lie in (0, 1]")

    client_count = chk.get(data, "client_count", DEFAULTS["client_count"], "", int,
                           lambda v: v >= 1, "must be >= 1")

    a = data.get("arch", {})
    ad = DEFAULTS["arch"]
    if not isinstance(a, dict):
        chk.fail("arch", "expected object")
        a = {}
    chk.unknown_keys(a, ad.keys(), "arch")
    depths = chk.get(a, "depths", ad["depths"], "arch", list,
                     lambda v: v and all(isinstance(d, int) and d in (1, 2, 3) for d in v),
                     "must be a non-empty list drawn from [1, 2, 3]")
    widths = chk.get(a, "widths", ad["widths"], "arch", list,
                     lambda v: v and all(isinstance(w, int) and w >= 1 for w in v),
                     "must be a non-empty list of positive integers")
    latent_dim = chk.get(a, "latent_dim", ad["latent_dim"], "arch", int,
                         lambda v: v >= 1, "must be >= 1")

    f = data.get("fed", {})
    fd = DEFAULTS["fed"]
    if not isinstance(f, dict):
        chk.fail("fed", "expected object")
        f = {}
    chk.unknown_keys(f, fd.keys(), "fed")
    beta = chk.get(f, "beta", fd["beta"], "fed", float, lambda v: v > 0, "must be positive")
    max_round = chk.get(f, "max_round", fd["max_round"], "fed", int,
                        lambda v: v >= 1, "must be >= 1")

    g = f.get("gan", {})
    gd = fd["gan"]
    if not isinstance(g, dict):
        chk.fail("fed.gan", "expected object")
        g = {}
    chk.unknown_keys(g, gd.keys(), "fed.gan")
    gan_steps = chk.get(g, "steps", gd["steps"], "fed.gan", int,
                        lambda v: v >= 0, "must be >= 0")
    gen_lr = chk.get(g, "gen_lr", gd["gen_lr"], "fed.gan", float,
                     lambda v: v > 0, "must be positive")
    disc_lr = chk.get(g, "disc_lr", gd["disc_lr"], "fed.gan", float,
                      lambda v: v > 0, "must be positive")
    gan_batch = chk.get(g, "batch_size", gd["batch_size"], "fed.gan", int,
                        lambda v: v >= 1, "must be >= 1")
    dp_raw = g.get("dp", gd["dp"])
    dp = None
    if dp_raw is not None:
        if not isinstance(dp_raw, dict):
            chk.fail("fed.gan.dp", "expected object or null")
        else:
            chk.unknown_keys(dp_raw, ("clip_norm", "noise_multiplier"), "fed.gan.dp")
            clip = chk.get(dp_raw, "clip_norm", None, "fed.gan.dp", float,
                           lambda v: v > 0, "must be positive")
            mult = chk.get(dp_raw, "noise_multiplier", 0.0, "fed.gan.dp", float,
                           lambda v: v >= 0, "must be >= 0")
            if clip is None:
                chk.fail("fed.gan.dp.clip_norm", "required when dp is set")
            else:
                dp = {"clip_norm": clip, "noise_multiplier": mult}

    init_train = _parse_train(chk, f.get("init_train", {}), fd["init_train"], "fed.init_train")
    update_train = _parse_train(
        chk, f.get("update_train", {}), fd["update_train"], "fed.update_train"
    )

    b = data.get("baseline", {})
    bd = DEFAULTS["baseline"]
    if not isinstance(b, dict):
        chk.fail("baseline", "expected object")
        b = {}
    chk.unknown_keys(b, bd.keys(), "baseline")
    b_kind = chk.get(b, "kind", bd["kind"], "baseline", str,
                     lambda v: v in ("local_only", "fedavg", "fedprox"),
                     "must be 'local_only', 'fedavg' or 'fedprox'")
    b_rounds = chk.get(b, "rounds", bd["rounds"], "baseline", int,
                       lambda v: v >= 1, "must be >= 1")
    b_epochs = chk.get(b, "local_epochs", bd["local_epochs"], "baseline", int,
                       lambda v: v >= 1, "must be >= 1")
    b_mu = chk.get(b, "prox_mu", bd["prox_mu"], "baseline", float,
                   lambda v: v >= 0, "must be >= 0")
    b_widths = chk.get(b, "shared_widths", bd["shared_widths"], "baseline", list,
                       lambda v: v and all(isinstance(w, int) and w >= 1 for w in v)
                       and len(v) <= 3,
                       "must be 1 to 3 positive integers")

    master_seed = chk.get(data, "master_seed", DEFAULTS["master_seed"], "", int)
    out_dir = chk.get(data, "out_dir", DEFAULTS["out_dir"], "", str)

    chk.raise_if_failed()

    if means is None:
        means = default_means(class_count, dim, radius)
    task = MixtureTaskSpec(
        class_count=class_count,
        dim=dim,
        means=tuple(map(tuple, means)),
        scales=(scale,) * class_count,
        train_size=train_size,
        test_size=test_size,
    )
    if client_count * per_client > train_size:
        raise ConfigError(
            f"partition.per_client_size: {client_count} clients x {per_client} "
            f"samples exceeds task.train_size {train_size}"
        )
    gan_opts = GanOpts(
        steps=gan_steps,
        gen_lr=gen_lr,
        disc_lr=disc_lr,
        batch_size=gan_batch,
        dp=DpOpts(**dp) if dp else None,
    )
    return ExperimentConfig(
        task=task,
        partition_mode=mode,
        per_client_size=per_client,
        major_class_fraction=major_cf,
        major_sample_fraction=major_sf,
        client_count=client_count,
        arch_space=ArchSpace(depths=tuple(depths), widths=tuple(widths)),
        latent_dim=latent_dim,
        beta=beta,
        max_round=max_round,
        gan_opts=gan_opts,
        init_train=TrainOpts(**init_train),
        update_train=TrainOpts(**update_train),
        baseline_kind=b_kind,
        baseline_rounds=b_rounds,
        baseline_local_epochs=b_epochs,
        baseline_prox_mu=b_mu,
        baseline_shared_widths=tuple(b_widths),
        master_seed=master_seed,
        out_dir=out_dir,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)
