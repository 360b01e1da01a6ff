"""Stochastic training loop over shared embedding rows.

Each step gathers one batch of (source, positive, negatives) examples,
runs the objective, accumulates per-row gradients, and applies one update
per touched row. Ball rows take the metric-rescaled step

    theta <- project(theta - lr * (1 - ||theta||^2)^2 / 4 * grad)

while flat rows take a plain gradient step with no projection. Multiple
workers update the same matrix without locks; overlapping writes are
tolerated, and worker 0 of a single-worker run reproduces the serial
path bit for bit.
"""

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DEFAULT_NEGATIVES, NegativeSampler
from .geometry import (
    POINCARE,
    SCORE_KINDS,
    TRANSLATIONAL,
    project_to_ball,
    riemannian_rescale,
)
from .objectives import (
    DEFAULT_RADIUS,
    DEFAULT_TEMPERATURE,
    OBJECTIVE_KINDS,
    RANKING,
    objective_loss_and_grads,
)
from .store import BALL_EPSILON, init_embeddings


class TrainingDivergenceError(RuntimeError):
    """Loss left the representable range; training cannot continue."""

    def __init__(self, epoch, example):
        super().__init__(
            f"loss became non-finite at epoch {epoch}, example {example}; "
            "lower the learning rate"
        )
        self.epoch = epoch
        self.example = example


@dataclass
class TrainConfig:
    """Knobs for :func:`train`; defaults follow the ball-model recipe."""

    lr: float = 0.5
    epochs: int = 300
    burn_in_epochs: int = 10
    burn_in_divisor: float = 10.0
    negatives: int = DEFAULT_NEGATIVES
    batch: int = 1
    epsilon: float = BALL_EPSILON
    seed: int = 0
    threads: int = 1
    objective: str = RANKING
    radius: float = DEFAULT_RADIUS
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0 or self.burn_in_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.burn_in_divisor < 1:
            raise ValueError("burn_in_divisor must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be non-negative")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.objective not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective: {self.objective!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class TrainReport:
    """Per-epoch history of one training run."""

    epoch_losses: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)
    wall_seconds: float = 0.0
    n_examples: int = 0

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def learning_rate_for_epoch(cfg, epoch):
    """Reduced rate during the initial settling epochs, full rate after."""
    if epoch < cfg.burn_in_epochs:
        return cfg.lr / cfg.burn_in_divisor
    return cfg.lr


def _apply_updates(matrix, uniq_ids, grads, grad_translation, lr):
    rows = matrix.rows
    theta = rows[uniq_ids]
    if matrix.score_kind == POINCARE:
        step = lr * riemannian_rescale(grads, theta)
        rows[uniq_ids] = project_to_ball(theta - step, matrix.epsilon)
    else:
        rows[uniq_ids] = theta - lr * grads
        if grad_translation is not None:
            matrix.translation -= lr * grad_translation


def _run_shard(matrix, pairs, order, start, sampler, cfg, epoch, lr, sink):
    """Process one contiguous slice of the epoch permutation.

    ``order`` holds example indices, ``start`` their offset within the
    full permutation (for error reporting). The loss sum lands in
    ``sink`` so the coordinator can aggregate across workers.
    """
    kind = matrix.score_kind
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for off in range(0, len(order), cfg.batch):
            chunk = order[off : off + cfg.batch]
            u_ids = pairs[chunk, 0]
            pos_ids = pairs[chunk, 1]
            if cfg.negatives > 0:
                negs = sampler.sample_block(u_ids)
                cand_ids = np.concatenate([pos_ids[:, None], negs], axis=1)
            else:
                cand_ids = pos_ids[:, None]
            res = objective_loss_and_grads(
                cfg.objective, kind,
                matrix.rows[u_ids], matrix.rows[cand_ids],
                translation=matrix.translation,
                radius=cfg.radius, temperature=cfg.temperature,
            )
            if not np.all(np.isfinite(res.loss)):
                bad = int(np.flatnonzero(~np.isfinite(res.loss))[0])
                raise TrainingDivergenceError(epoch, start + off + bad)
            total += float(res.loss.sum())

            all_ids = np.concatenate([u_ids, cand_ids.ravel()])
            all_grads = np.concatenate([
                res.grad_source,
                res.grad_candidates.reshape(-1, matrix.dim),
            ])
            uniq_ids, inverse = np.unique(all_ids, return_inverse=True)
            acc = np.zeros((len(uniq_ids), matrix.dim))
            np.add.at(acc, inverse, all_grads)
            _apply_updates(matrix, uniq_ids, acc, res.grad_translation, lr)
    sink.append(total)


def train(edges, n_symbols, dim, score_kind, cfg, on_epoch=None):
    """Fit embeddings for ``n_symbols`` rows to the observed edges.

    Returns (EmbeddingMatrix, TrainReport). Undirected edge sets are
    expanded to both orientations. ``on_epoch`` is called after every
    epoch with (epoch, lr, mean_loss). Raises TrainingDivergenceError
    when the loss leaves the representable range.
    """
    if score_kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind: {score_kind!r}")
    if score_kind == TRANSLATIONAL and not edges.directed:
        raise ValueError("translational scores need directed edges")
    pairs = edges.training_pairs()
    if len(pairs) == 0:
        raise ValueError("cannot train on an empty edge set")

    matrix = init_embeddings(n_symbols, dim, cfg.seed, score_kind, cfg.epsilon)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.threads + 1)
    perm_rng = np.random.default_rng(seeds[0])
    samplers = [
        NegativeSampler(edges, n_symbols, seed=s, k=cfg.negatives)
        for s in seeds[1:]
    ]

    report = TrainReport(n_examples=len(pairs))
    begin = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = learning_rate_for_epoch(cfg, epoch)
        perm = perm_rng.permutation(len(pairs))
        shards = np.array_split(perm, cfg.threads)
        starts = np.cumsum([0] + [len(s) for s in shards[:-1]])
        sink = []
        if cfg.threads == 1:
            _run_shard(matrix, pairs, shards[0], 0, samplers[0], cfg, epoch, lr, sink)
        else:
            failures = []

            def work(shard, start, sampler):
                try:
                    _run_shard(matrix, pairs, shard, start, sampler, cfg, epoch, lr, sink)
                except Exception as exc:
                    failures.append(exc)

            threads = [
                threading.Thread(target=work, args=(shard, start, sampler))
                for shard, start, sampler in zip(shards, starts, samplers)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            if failures:
                raise failures[0]
        mean_loss = sum(sink) / len(pairs)
        report.epoch_losses.append(mean_loss)
        report.learning_rates.append(lr)
        if on_epoch is not None:
            on_epoch(epoch, lr, mean_loss)

    if score_kind == POINCARE:
        # Overlapping writes can interleave two projected rows; one more
        # pass restores the margin and is a bitwise no-op when serial.
        matrix.rows = project_to_ball(matrix.rows, cfg.epsilon)
    report.wall_seconds = time.perf_counter() - begin
    return matrix, report
