"""Round loop: sampling, local training, alignment, aggregation, metrics.

Everything is a pure function of the experiment config. Substreams for
sampling, shuffling, initialization and partitioning are derived from
(seed, purpose, round, client) only, so switching the algorithm never
perturbs the data partition or the per-round client samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregation import (
    ParticipationLedger,
    aggregate,
    assemble_round,
    fedavg_aggregate,
    pseudo_gradient,
)
from .checkpoint import save_ledger, write_vector
from .config import ExperimentConfig, IdxSource, SyntheticSource
from .data import Shard, dirichlet_partition, gen_synthetic, load_idx, split_test
from .embedding import build_alignment_records, client_embedding, cosine, global_embedding
from .errors import ClientSkipped, ConfigError, ProtocolError
from .metrics import RoundReport, evaluate_accuracy, fairness_summary
from .nn import init_params, local_train
from .rng import derive_seed, substream

logger = logging.getLogger(__name__)


@dataclass
class RunState:
    """Mutable simulation state; ``round`` counts completed rounds."""

    round: int
    params: np.ndarray
    ledger: ParticipationLedger
    seed: int


def lr_schedule(eta0: float, decay: float, t: int) -> float:
    """Learning rate for round t (1-based): eta0 * decay^(t-1)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return eta0 * decay ** (t - 1)


def sample_clients(state: RunState, config: ExperimentConfig) -> frozenset[int]:
    """Uniform sample without replacement from {1..N} for the next round."""
    t = state.round + 1
    rng = substream(state.seed, "sampling", round_index=t)
    chosen = rng.choice(config.clients, size=config.resolved_online(), replace=False)
    return frozenset(int(c) + 1 for c in chosen)


def build_shards(config: ExperimentConfig) -> list[Shard]:
    """Materialize the dataset and its client partition for a config."""
    if isinstance(config.dataset, SyntheticSource):
        src = config.dataset
        dataset = gen_synthetic(src.num_classes, src.input_dim, src.n,
                                seed=derive_seed(config.seed, "dataset"))
    else:
        assert isinstance(config.dataset, IdxSource)
        dataset = load_idx(config.dataset.images, config.dataset.labels)
        if dataset.input_dim != config.model.input_dim:
            raise ConfigError(f"model.input_dim {config.model.input_dim} does not match "
                              f"loaded data dimension {dataset.input_dim}")
        if dataset.num_classes > config.model.num_classes:
            raise ConfigError(f"model.num_classes {config.model.num_classes} is too small "
                              f"for loaded labels ({dataset.num_classes} classes)")
    plan = dirichlet_partition(dataset, config.clients, config.dirichlet_alpha,
                               seed=derive_seed(config.seed, "partition"))
    return split_test(dataset, plan, config.test_fraction)


def initial_params(config: ExperimentConfig) -> np.ndarray:
    return init_params(config.model, substream(config.seed, "init"))


def run_round(state: RunState, config: ExperimentConfig,
              shards: list[Shard]) -> tuple[RunState, RoundReport]:
    """Execute one round and return the advanced state plus its report."""
    t = state.round + 1
    eta = lr_schedule(config.eta0, config.lr_decay, t)
    by_id = {shard.client_id: shard for shard in shards}
    sampled = sample_clients(state, config)

    local_models: dict[int, np.ndarray] = {}
    for cid in sorted(sampled):
        try:
            local_models[cid] = local_train(
                state.params, config.model, by_id[cid], config.local_epochs,
                config.batch_size, eta, substream(state.seed, "shuffle", t, cid))
        except ClientSkipped as exc:
            logger.warning("round %d: dropping client %d (%s)", t, cid, exc)
    if not local_models:
        raise ProtocolError(f"round {t}: every sampled client failed to train")
    active = sorted(local_models)

    similarities: dict[int, float] = {}
    contrastives: dict[int, float | None] = {}
    if config.algorithm in ("corefed", "refed", "cofed"):
        embeddings = {cid: client_embedding(local_models[cid], config.model, by_id[cid])
                      for cid in active}
        z_global = global_embedding([embeddings[cid] for cid in active])
        if config.algorithm == "cofed":
            similarities = {cid: cosine(embeddings[cid], z_global) for cid in active}
        else:
            records = build_alignment_records(embeddings, z_global, config.beta, config.tau_c)
            similarities = {cid: records[cid].similarity for cid in active}
            contrastives = {cid: records[cid].contrastive_loss for cid in active}

    gradients = {cid: pseudo_gradient(state.params, local_models[cid], eta) for cid in active}
    if config.algorithm in ("corefed", "cofed"):
        assignment, merged = assemble_round(state.ledger, active, gradients, similarities,
                                            t, config.gamma, config.k)
        new_params = aggregate(state.params, assignment, merged, eta)
        weights = dict(assignment.weights)
    else:
        # Baseline aggregation; the ledger still records the round so
        # participation accounting stays comparable across algorithms.
        state.ledger.record_round(t, active)
        for cid in active:
            state.ledger.cache_gradient(cid, gradients[cid])
            if cid in similarities:
                state.ledger.cache_similarity(cid, similarities[cid])
        sizes = {cid: len(by_id[cid].train) for cid in active}
        new_params = fedavg_aggregate(local_models, sizes)
        total = sum(sizes.values())
        weights = {cid: sizes[cid] / total for cid in active}

    mean_accuracy, per_client = evaluate_accuracy(new_params, config.model, shards)
    d_cos_mean, d_man_mean = fairness_summary(local_models, new_params)
    report = RoundReport(
        round=t,
        mean_accuracy=mean_accuracy,
        per_client_accuracy=per_client,
        d_cosine_mean=d_cos_mean,
        d_manhattan_mean=d_man_mean,
        contrastive_losses=contrastives,
        weights=weights,
        learning_rate=eta,
        online=frozenset(active),
    )
    return RunState(round=t, params=new_params, ledger=state.ledger, seed=state.seed), report


@dataclass
class SimulationResult:
    reports: list[RoundReport]
    initial_params: np.ndarray
    final_params: np.ndarray
    shards: list[Shard]


def run_simulation(config: ExperimentConfig, shards: list[Shard] | None = None,
                   checkpoint_dir=None) -> SimulationResult:
    """Run the full experiment, optionally checkpointing every N rounds.

    ``shards`` may be injected (tests, pre-built partitions); by default they
    are derived from the config seed.
    """
    if shards is None:
        shards = build_shards(config)
    start = initial_params(config)
    state = RunState(round=0, params=start.copy(), ledger=ParticipationLedger(), seed=config.seed)
    reports: list[RoundReport] = []
    for _ in range(config.rounds):
        state, report = run_round(state, config, shards)
        reports.append(report)
        if (checkpoint_dir is not None and config.checkpoint_interval > 0
                and state.round % config.checkpoint_interval == 0):
            _write_checkpoint(Path(checkpoint_dir), state)
    return SimulationResult(reports=reports, initial_params=start,
                            final_params=state.params, shards=shards)


def run_experiment(config: ExperimentConfig, shards: list[Shard] | None = None,
                   checkpoint_dir=None) -> list[RoundReport]:
    """Spec surface: the per-round report stream for a config."""
    return run_simulation(config, shards=shards, checkpoint_dir=checkpoint_dir).reports


def _write_checkpoint(root: Path, state: RunState) -> None:
    round_dir = root / f"round_{state.round}"
    round_dir.mkdir(parents=True, exist_ok=True)
    write_vector(round_dir / "global.bin", state.params)
    save_ledger(state.ledger, round_dir / "ledger.json", round_dir / "gradients.bin")
