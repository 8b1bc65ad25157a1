"""Reference methods: local-only training, parameter averaging, and its
proximal variant.

Parameter averaging demands identical weight shapes, so these baselines
refuse cohorts with heterogeneous architectures; the refusal is part of
the contract. Relative accuracies use the same local baselines as the
generated-sample runs, so the logs are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError
from .federation import (
    ClientState,
    build_probe_set,
    client_local_init,
    _map_clients,
    _round_entry,
)
from .metrics import MetricsLog
from .nn import ModelSpec, Params, TrainOpts, evaluate_accuracy, init_params, train_classifier
from .seeds import derive_seed

__all__ = ["BaselineConfig", "run_local_only", "fedavg_aggregate", "run_fedavg"]

KINDS = ("local_only", "fedavg", "fedprox")


@dataclass(frozen=True)
class BaselineConfig:
    kind: str
    rounds: int
    local_epochs: int
    prox_mu: float = 0.0
    shared_spec: ModelSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.prox_mu < 0:
            raise ConfigError(f"prox_mu must be >= 0, got {self.prox_mu}")
        if self.prox_mu > 0 and self.kind != "fedprox":
            raise ConfigError("prox_mu > 0 is only meaningful for kind='fedprox'")


def _ensure_initialized(clients: list[ClientState], opts: TrainOpts, jobs: int):
    return _map_clients(
        lambda c: c if c.initialized else client_local_init(c, opts), clients, jobs
    )


def run_local_only(
    clients: list[ClientState],
    opts: TrainOpts,
    rounds: int,
    center_seed: int,
    jobs: int = 1,
) -> MetricsLog:
    """No communication: every round repeats the local baseline numbers."""
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    clients = _ensure_initialized(clients, opts, jobs)
    probe = build_probe_set(clients, center_seed)
    log = MetricsLog()
    log.add_event(
        0, "init", {"baseline_accuracy": {str(c.id): c.local_baseline_acc for c in clients}}
    )
    baselines = [c.local_baseline_acc for c in clients]
    for round_idx in range(rounds + 1):
        log.rounds.append(_round_entry(round_idx, clients, baselines, probe))
        if round_idx > 0:
            log.add_event(round_idx, "eval", {"mrta": log.rounds[-1].mrta})
    return log


def fedavg_aggregate(param_list: list[Params], weights) -> Params:
    """Entrywise weighted mean; weights are the clients' sample counts."""
    if not param_list:
        raise ContractError("no parameters to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(param_list),) or (w <= 0).any():
        raise ContractError("weights must be positive, one per client")
    shapes = [tuple(p.shape for p in params.weights + params.biases) for params in param_list]
    if any(s != shapes[0] for s in shapes):
        raise ContractError(
            "cannot average parameters with mismatched shapes; "
            "parameter averaging requires a shared architecture"
        )
    w = w / w.sum()
    n_layers = len(param_list[0].weights)
    avg_w = [
        sum(w[i] * params.weights[layer] for i, params in enumerate(param_list))
        for layer in range(n_layers)
    ]
    avg_b = [
        sum(w[i] * params.biases[layer] for i, params in enumerate(param_list))
        for layer in range(n_layers)
    ]
    return Params(tuple(avg_w), tuple(avg_b))


def run_fedavg(
    clients: list[ClientState],
    config: BaselineConfig,
    opts: TrainOpts,
    fine_tune_opts: TrainOpts,
    seed: int,
    jobs: int = 1,
) -> MetricsLog:
    """Parameter-averaging rounds with a final local fine-tune.

    Per round the global model is broadcast, every client runs
    ``local_epochs`` of SGD on its private set (pulled toward the
    broadcast parameters when kind is ``fedprox`` with ``prox_mu > 0``),
    and the center averages the results weighted by sample counts.
    Intermediate rounds log the global model's accuracy per test view;
    after the last round each client fine-tunes the global model locally
    and the final round logs those personalized accuracies.
    """
    if config.kind not in ("fedavg", "fedprox"):
        raise ConfigError(f"run_fedavg handles fedavg/fedprox, got {config.kind!r}")
    if not clients:
        raise ContractError("no clients")
    specs = {c.spec for c in clients}
    if len(specs) > 1 or (config.shared_spec is not None and specs != {config.shared_spec}):
        raise ContractError(
            "parameter averaging cannot support models with different architectures; "
            f"got {len(specs)} distinct specs across {len(clients)} clients"
        )
    shared_spec = clients[0].spec

    clients = _ensure_initialized(clients, opts, jobs)
    probe = build_probe_set(clients, seed)
    log = MetricsLog()
    log.add_event(
        0, "init", {"baseline_accuracy": {str(c.id): c.local_baseline_acc for c in clients}}
    )
    log.rounds.append(_round_entry(0, clients, [c.local_baseline_acc for c in clients], probe))

    global_params = init_params(shared_spec, derive_seed(seed, "global-init"))
    weights = [len(c.train_set) for c in clients]

    for round_idx in range(1, config.rounds + 1):
        anchor = global_params if (config.kind == "fedprox" and config.prox_mu > 0) else None
        local_opts = TrainOpts(
            learning_rate=opts.learning_rate,
            epochs=config.local_epochs,
            batch_size=opts.batch_size,
            prox_mu=config.prox_mu if anchor is not None else 0.0,
            prox_anchor=anchor,
        )

        def local_step(client: ClientState) -> Params:
            return train_classifier(
                global_params,
                client.train_set,
                local_opts,
                derive_seed(client.rng_stream, "avg-round", round_idx),
            )

        local_params = _map_clients(local_step, clients, jobs)
        global_params = fedavg_aggregate(local_params, weights)
        log.add_event(round_idx, "aggregate", {"weights": weights})

        if round_idx < config.rounds:
            accs = _map_clients(
                lambda c: evaluate_accuracy(global_params, c.test_view), clients, jobs
            )
        else:
            def fine_tune(client: ClientState) -> ClientState:
                tuned = train_classifier(
                    global_params,
                    client.train_set,
                    fine_tune_opts,
                    derive_seed(client.rng_stream, "fine-tune"),
                )
                return replace(client, params=tuned)

            clients = _map_clients(fine_tune, clients, jobs)
            log.add_event(round_idx, "update", {"fine_tuned": [c.id for c in clients]})
            accs = _map_clients(
                lambda c: evaluate_accuracy(c.params, c.test_view), clients, jobs
            )
        entry = _round_entry(round_idx, clients, accs, probe)
        log.rounds.append(entry)
        log.add_event(round_idx, "eval", {"mrta": entry.mrta})

    return log
