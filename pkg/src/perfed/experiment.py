"""Build and run whole experiments from a validated config and one seed.

Every stream an experiment consumes (task draw, partition, per-client
architectures, weight inits, training batch orders, center draws) is
derived from the master seed through tagged paths, so a config plus a
seed pins every output byte.
"""

from __future__ import annotations

from pathlib import Path

from .baselines import run_fedavg, run_local_only
from .config import ExperimentConfig
from .datagen import (
    LabeledDataset,
    client_test_view,
    make_mixture_task,
    partition_iid,
    partition_noniid,
    partition_preview_rows,
)
from .errors import ConfigError
from .federation import ClientState, FedConfig, RunResult, client_local_init, run_rounds
from .federation import _map_clients
from .gan import generator_spec_for, init_generator
from .metrics import emit_logs, _write_atomic
from .nn import ModelSpec, init_params, sample_architecture
from .seeds import derive_seed

__all__ = ["build_clients", "run_experiment", "run_and_emit", "write_partition_csv", "METHODS"]

METHODS = ("perfed", "local", "fedavg", "fedprox")


def _partition(cfg: ExperimentConfig, pool: LabeledDataset, master_seed: int):
    plan = cfg.partition_plan(derive_seed(master_seed, "partition"))
    if plan.mode == "iid":
        return partition_iid(pool, plan)
    return partition_noniid(pool, plan)


def build_clients(cfg: ExperimentConfig, master_seed: int, shared_spec: ModelSpec | None = None):
    """Create the task, partition it, and assemble per-client state.

    ``shared_spec`` forces one architecture on everyone (needed by the
    parameter-averaging baselines); otherwise each client samples its own.
    In the skewed partition mode each client is evaluated on a test view
    matching its own label mix; in IID mode all clients share the full
    test set.
    """
    train_pool, test_pool = make_mixture_task(cfg.task, derive_seed(master_seed, "task"))
    parts = _partition(cfg, train_pool, master_seed)

    clients = []
    for i, train_set in enumerate(parts):
        spec = shared_spec or sample_architecture(
            cfg.arch_space, cfg.task.dim, cfg.task.class_count, derive_seed(master_seed, "arch", i)
        )
        params = init_params(spec, derive_seed(master_seed, "params", i))
        gen_spec = generator_spec_for(spec, latent_dim=cfg.latent_dim)
        gen_params = init_generator(gen_spec, derive_seed(master_seed, "gen", i))
        if cfg.partition_mode == "noniid":
            view = client_test_view(
                test_pool, train_set.label_histogram(), derive_seed(master_seed, "view", i)
            )
        else:
            view = test_pool
        clients.append(
            ClientState(
                id=i,
                spec=spec,
                params=params,
                gen_params=gen_params,
                train_set=train_set,
                test_view=view,
                rng_stream=derive_seed(master_seed, "client", i),
            )
        )
    return clients, train_pool, test_pool


def write_partition_csv(clients: list[ClientState], out_dir) -> Path:
    rows = partition_preview_rows([c.train_set for c in clients])
    path = Path(out_dir) / "partition.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "client_id,class_id,count\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows)
    _write_atomic(path, text)
    return path


def run_experiment(
    cfg: ExperimentConfig, master_seed: int, method: str = "perfed", jobs: int = 1
) -> RunResult:
    """Initialize all clients, run the chosen method, return states and log."""
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")

    shared_spec = None
    if method in ("fedavg", "fedprox"):
        shared_spec = ModelSpec(
            input_dim=cfg.task.dim,
            hidden_widths=cfg.baseline_shared_widths,
            num_classes=cfg.task.class_count,
        )
    clients, _, _ = build_clients(cfg, master_seed, shared_spec=shared_spec)
    clients = _map_clients(lambda c: client_local_init(c, cfg.init_train), clients, jobs)

    if method == "perfed":
        fed = FedConfig(
            beta=cfg.beta,
            max_round=cfg.max_round,
            gan_opts=cfg.gan_opts,
            init_train_opts=cfg.init_train,
            update_train_opts=cfg.update_train,
        )
        return run_rounds(clients, fed, derive_seed(master_seed, "center"), jobs=jobs)

    if method == "local":
        log = run_local_only(
            clients, cfg.init_train, cfg.baseline_rounds, derive_seed(master_seed, "center"),
            jobs=jobs,
        )
        return RunResult(clients=clients, log=log)

    kind = "fedavg" if method == "fedavg" else "fedprox"
    bcfg = cfg.baseline_config(shared_spec, kind=kind)
    log = run_fedavg(
        clients,
        bcfg,
        cfg.update_train,
        cfg.update_train,
        derive_seed(master_seed, "center"),
        jobs=jobs,
    )
    return RunResult(clients=clients, log=log)


def run_and_emit(
    cfg: ExperimentConfig, master_seed: int, out_dir, method: str = "perfed", jobs: int = 1
) -> RunResult:
    """Run an experiment and write partition.csv plus the metrics files."""
    result = run_experiment(cfg, master_seed, method=method, jobs=jobs)
    write_partition_csv(result.clients, out_dir)
    emit_logs(result.log, out_dir)
    return result
