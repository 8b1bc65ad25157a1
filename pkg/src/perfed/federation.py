"""Round loop for federated co-training via generated-sample sharing.

One round, for every client: train the client's conditional GAN against
its own classifier, generate a labeled batch sized by the ratio ``beta``
(``ceil(beta * |train set|)`` samples, per-class counts proportional to
the client's own label histogram), and upload it. The center groups all
uploads by their conditioning label and sends each client the same number
of samples drawn uniformly from the pooled uploads. Each client then
retrains on its private set merged with the received packet; the private
set itself is never modified and received samples are not carried over to
later rounds.

The center sees only generated samples, conditioning labels, and origin
ids. No model architecture or parameter values cross the client/center
boundary.

Every random draw comes from a stream derived from either the owning
client's seed or the center seed keyed by (round, client), so client
phases can run in any order or concurrently with identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .datagen import LabeledDataset, largest_remainder_apportion, merge_datasets
from .errors import ConfigError, ContractError, DispatchInfeasibleError
from .gan import GanOpts, GeneratedBatch, generate_labeled, train_cgan
from .metrics import ClientRound, MetricsLog, RoundMetrics, mean_rta, relative_test_accuracy
from .nn import ModelSpec, Params, TrainOpts, evaluate_accuracy, forward_logits, train_classifier
from .seeds import derive_seed
from .theory import empirical_disagreement

__all__ = [
    "ClientState",
    "CenterPool",
    "FedConfig",
    "RunResult",
    "upload_count",
    "client_local_init",
    "client_gan_phase",
    "center_aggregate",
    "center_dispatch",
    "client_update",
    "run_rounds",
    "build_probe_set",
    "mean_pairwise_disagreement",
]

PROBE_CAP = 512


@dataclass(frozen=True, eq=False)
class ClientState:
    """One federated client: private data, private model, private generator.

    ``train_set`` is fixed for the experiment's lifetime; merges happen on
    fresh copies. ``local_baseline_acc`` is set exactly once by
    :func:`client_local_init` and is the denominator of every later
    relative accuracy.
    """

    id: int
    spec: ModelSpec
    params: Params
    gen_params: Params
    train_set: LabeledDataset
    test_view: LabeledDataset
    rng_stream: int
    local_baseline_acc: float | None = None

    @property
    def initialized(self) -> bool:
        return self.local_baseline_acc is not None


@dataclass(frozen=True, eq=False)
class CenterPool:
    """Uploaded samples grouped by their conditioning label."""

    class_count: int
    features: np.ndarray
    labels: np.ndarray
    origins: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def per_class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True)
class FedConfig:
    beta: float
    max_round: int
    gan_opts: GanOpts
    init_train_opts: TrainOpts
    update_train_opts: TrainOpts

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.max_round < 1:
            raise ConfigError(f"max_round must be >= 1, got {self.max_round}")


@dataclass
class RunResult:
    clients: list[ClientState]
    log: MetricsLog


def upload_count(beta: float, train_size: int) -> int:
    """ceil(beta * train_size), tolerant of float representation error."""
    return int(math.ceil(beta * train_size - 1e-9))


def client_local_init(client: ClientState, opts: TrainOpts) -> ClientState:
    """Initial local training; records the local baseline accuracy."""
    if client.initialized:
        raise ContractError(f"client {client.id} is already initialized")
    params = train_classifier(
        client.params, client.train_set, opts, derive_seed(client.rng_stream, "init")
    )
    baseline = evaluate_accuracy(params, client.test_view)
    return replace(client, params=params, local_baseline_acc=baseline)


def client_gan_phase(
    client: ClientState, beta: float, gan_opts: GanOpts, round_idx: int
) -> tuple[ClientState, GeneratedBatch]:
    """Adversarial training plus generation of the upload batch.

    The batch holds ``ceil(beta * |train set|)`` samples whose per-class
    counts are proportional to the client's training label histogram
    (clients only generate classes they hold data for).
    """
    if not client.initialized:
        raise ContractError(f"client {client.id} is not initialized")
    params, gen_params = train_cgan(
        client.params,
        client.spec,
        client.gen_params,
        client.train_set,
        gan_opts,
        derive_seed(client.rng_stream, "gan", round_idx),
    )
    total = upload_count(beta, len(client.train_set))
    counts = largest_remainder_apportion(client.train_set.label_histogram(), total)
    batch = generate_labeled(
        gen_params,
        counts,
        derive_seed(client.rng_stream, "generate", round_idx),
        origin=client.id,
    )
    return replace(client, params=params, gen_params=gen_params), batch


def center_aggregate(batches: list[GeneratedBatch]) -> CenterPool:
    """Group uploaded batches by conditioning label, keeping origin ids."""
    if not batches or all(len(b) == 0 for b in batches):
        raise ContractError("no uploaded samples to aggregate")
    class_count = batches[0].class_count
    if any(b.class_count != class_count for b in batches):
        raise ContractError("uploaded batches disagree on class count")
    features = np.concatenate([b.features for b in batches])
    labels = np.concatenate([b.labels for b in batches])
    origins = np.concatenate([b.origins for b in batches])
    order = np.argsort(labels, kind="stable")
    return CenterPool(class_count, features[order], labels[order], origins[order])


def center_dispatch(
    pool: CenterPool, clients: list[ClientState], beta: float, seed: int
) -> list[GeneratedBatch]:
    """Draw each client's packet uniformly from the pool without replacement.

    Draws are independent across clients (the pool is not consumed) and
    keyed by client id, so dispatch order does not matter.
    """
    if len(pool) == 0:
        raise ContractError("center pool is empty")
    packets = []
    for client in clients:
        n_s = upload_count(beta, len(client.train_set))
        if n_s > len(pool):
            raise DispatchInfeasibleError(
                f"client {client.id} needs {n_s} samples but the pool holds {len(pool)}"
            )
        rng = np.random.default_rng(derive_seed(seed, "dispatch", client.id))
        idx = rng.choice(len(pool), size=n_s, replace=False)
        packets.append(
            GeneratedBatch(
                pool.features[idx], pool.labels[idx], pool.origins[idx], pool.class_count
            )
        )
    return packets


def client_update(
    client: ClientState, packet: GeneratedBatch, opts: TrainOpts, round_idx: int
) -> ClientState:
    """Retrain on the private set merged with this round's packet.

    The merged set is built fresh each round; earlier packets are gone
    and the private set is untouched.
    """
    if not client.initialized:
        raise ContractError(f"client {client.id} is not initialized")
    if len(packet) and packet.labels.max() >= client.train_set.class_count:
        raise ContractError("packet labels exceed the client's class count")
    merged = merge_datasets(client.train_set, packet.features, packet.labels)
    params = train_classifier(
        client.params, merged, opts, derive_seed(client.rng_stream, "update", round_idx)
    )
    return replace(client, params=params)


def build_probe_set(clients: list[ClientState], seed: int, cap: int = PROBE_CAP) -> np.ndarray:
    """Fixed shared probe inputs for disagreement tracking: the union of
    test views (by sample identity), capped by a seeded subsample."""
    seen: dict[int, int] = {}
    rows = []
    synth = 0
    for client in clients:
        view = client.test_view
        for local_idx, sample_id in enumerate(view.ids):
            key = int(sample_id)
            if key < 0:
                key = -1 - synth
                synth += 1
            if key not in seen:
                seen[key] = len(rows)
                rows.append(view.features[local_idx])
    probe = np.asarray(rows)
    if len(probe) > cap:
        rng = np.random.default_rng(derive_seed(seed, "probe"))
        idx = np.sort(rng.choice(len(probe), size=cap, replace=False))
        probe = probe[idx]
    return probe


def mean_pairwise_disagreement(clients: list[ClientState], probe: np.ndarray) -> float:
    if len(clients) < 2 or len(probe) == 0:
        return 0.0
    preds = [np.argmax(forward_logits(c.params, probe), axis=1) for c in clients]
    values = [
        empirical_disagreement(preds[i], preds[j])
        for i in range(len(preds))
        for j in range(i + 1, len(preds))
    ]
    return float(np.mean(values))


def _map_clients(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _round_entry(round_idx: int, clients: list[ClientState], accs, probe) -> RoundMetrics:
    records = tuple(
        ClientRound(c.id, acc, relative_test_accuracy(acc, c.local_baseline_acc))
        for c, acc in zip(clients, accs)
    )
    return RoundMetrics(
        round=round_idx,
        clients=records,
        mrta=mean_rta([r.rta for r in records]),
        mean_pairwise_disagreement=mean_pairwise_disagreement(clients, probe),
    )


def run_rounds(
    clients: list[ClientState], config: FedConfig, center_seed: int, jobs: int = 1
) -> RunResult:
    """Execute the full round loop and collect metrics.

    Requires initialized clients. Round 0 of the log records the local
    baselines; each subsequent round runs generate/aggregate/dispatch/
    retrain and records accuracies on every client's test view. ``jobs``
    caps concurrent client phases and never changes the results.
    """
    if not clients:
        raise ContractError("no clients")
    for client in clients:
        if not client.initialized:
            raise ContractError(f"client {client.id} is not initialized")

    log = MetricsLog()
    probe = build_probe_set(clients, center_seed)
    log.add_event(
        0,
        "init",
        {"baseline_accuracy": {str(c.id): c.local_baseline_acc for c in clients}},
    )
    log.rounds.append(_round_entry(0, clients, [c.local_baseline_acc for c in clients], probe))

    for round_idx in range(1, config.max_round + 1):
        results = _map_clients(
            lambda c: client_gan_phase(c, config.beta, config.gan_opts, round_idx),
            clients,
            jobs,
        )
        clients = [c for c, _ in results]
        batches = [b for _, b in results]
        log.add_event(round_idx, "gan", {"uploaded": [len(b) for b in batches]})

        pool = center_aggregate(batches)
        log.add_event(
            round_idx,
            "aggregate",
            {"pool_size": len(pool), "per_class": pool.per_class_counts().tolist()},
        )

        packets = center_dispatch(
            pool, clients, config.beta, derive_seed(center_seed, "round", round_idx)
        )
        log.add_event(round_idx, "dispatch", {"packet_sizes": [len(p) for p in packets]})

        clients = _map_clients(
            lambda pair: client_update(pair[0], pair[1], config.update_train_opts, round_idx),
            list(zip(clients, packets)),
            jobs,
        )
        log.add_event(
            round_idx,
            "update",
            {"merged_sizes": [len(c.train_set) + len(p) for c, p in zip(clients, packets)]},
        )

        accs = _map_clients(lambda c: evaluate_accuracy(c.params, c.test_view), clients, jobs)
        entry = _round_entry(round_idx, clients, accs, probe)
        log.rounds.append(entry)
        log.add_event(round_idx, "eval", {"mrta": entry.mrta})

    return RunResult(clients=clients, log=log)
