"""Decentralized linear-regression learning under attack.

Each benign agent repeatedly takes a Huber-loss stochastic gradient step on
fresh local data (adapt) and then aggregates the intermediate weights of
its neighborhood with a robust rule (combine).  Malicious agents skip
adaptation entirely; each iteration they report per-receiver crafted
vectors instead.  All randomness derives from per-agent streams spawned
from the experiment seed, so traces are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .attacks import AttackSpec, CraftingContext, craft_attack
from .estimators import AggregatorSpec, aggregate_matrix
from .topology import NetworkTopology

# Traces are capped here; any weight beyond it marks the run as diverged.
DIVERGENCE_SENTINEL = 1e30


def draw_true_weights(dim: int, seed) -> np.ndarray:
    """Ground-truth model drawn once per experiment, standard normal."""
    return np.random.default_rng(seed).standard_normal(dim)


@dataclass(frozen=True, eq=False)
class LinearModelConfig:
    """Data model: d = u' w_true + v with u ~ N(0, I) and v ~ N(0, noise_var)."""

    true_weights: np.ndarray
    noise_var: float = 0.01
    samples_per_iteration: int = 1

    def __post_init__(self) -> None:
        w = np.asarray(self.true_weights, dtype=float).ravel()
        if w.size < 1:
            raise ValueError("model dimension must be at least 1")
        if self.noise_var <= 0.0:
            raise ValueError("noise variance must be positive")
        if self.samples_per_iteration < 1:
            raise ValueError("need at least one sample per iteration")
        object.__setattr__(self, "true_weights", w)

    @property
    def dim(self) -> int:
        return self.true_weights.size


@dataclass(frozen=True)
class LearningConfig:
    step_size: float = 0.05
    iterations: int = 300
    huber_delta: float = 1.0

    def __post_init__(self) -> None:
        if self.step_size <= 0.0:
            raise ValueError("step size must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.huber_delta <= 0.0:
            raise ValueError("huber_delta must be positive")


def huber_loss(residual, delta: float):
    """Quadratic within |r| <= delta, linear beyond."""
    if delta <= 0.0:
        raise ValueError("huber_delta must be positive")
    r = np.asarray(residual, dtype=float)
    out = np.where(
        np.abs(r) <= delta, 0.5 * r * r, delta * np.abs(r) - 0.5 * delta * delta
    )
    return float(out) if np.isscalar(residual) else out


def huber_grad_factor(residual, delta: float):
    """Derivative of the Huber loss: the residual clipped to [-delta, delta]."""
    if delta <= 0.0:
        raise ValueError("huber_delta must be positive")
    out = np.clip(np.asarray(residual, dtype=float), -delta, delta)
    return float(out) if np.isscalar(residual) else out


def generate_sample(rng: np.random.Generator, model: LinearModelConfig):
    """One regressor/target pair for a single agent."""
    u = rng.standard_normal(model.dim)
    v = rng.normal(0.0, math.sqrt(model.noise_var))
    return u, float(u @ model.true_weights + v)


def generate_batch(rng: np.random.Generator, model: LinearModelConfig, size: int):
    """A batch of samples: returns (regressors (size, dim), targets (size,))."""
    regressors = rng.standard_normal((size, model.dim))
    noise = rng.normal(0.0, math.sqrt(model.noise_var), size)
    return regressors, regressors @ model.true_weights + noise


def adapt(
    weights: np.ndarray,
    regressors: np.ndarray,
    targets: np.ndarray,
    learning: LearningConfig,
) -> np.ndarray:
    """Stochastic gradient step on the batch-averaged Huber loss."""
    if regressors.shape[0] == 0:
        raise ValueError("adapt requires a non-empty batch")
    residuals = targets - regressors @ weights
    g = huber_grad_factor(residuals, learning.huber_delta)
    return weights + learning.step_size * (g[:, None] * regressors).mean(axis=0)


def combine(
    topology: NetworkTopology,
    agent: int,
    received: Mapping[int, np.ndarray],
    spec: AggregatorSpec,
) -> np.ndarray:
    """Element-wise aggregation of the vectors received from the neighborhood."""
    expected = set(int(i) for i in topology.neighborhood(agent))
    got = set(int(i) for i in received)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise ValueError(
            f"received set does not match neighborhood of agent {agent}"
            f" (missing {missing}, unexpected {extra})"
        )
    matrix = np.vstack([np.asarray(received[i], dtype=float) for i in sorted(got)])
    return aggregate_matrix(spec, matrix).values


@dataclass(eq=False)
class ExperimentTrace:
    """Per-iteration metrics of one (aggregator, attack) run.

    ``final_weights`` holds the benign agents' weight vectors after the
    last iteration, one row per benign agent in agent-id order.
    """

    iteration: np.ndarray
    training_loss: np.ndarray
    msd: np.ndarray
    m_converged: np.ndarray
    diverged: bool
    initial_msd: float
    final_weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return float(self.training_loss[-1])

    @property
    def final_msd(self) -> float:
        return float(self.msd[-1])

    def tail_mean_loss(self, window: int = 30) -> float:
        return float(self.training_loss[-window:].mean())

    def tail_mean_msd(self, window: int = 30) -> float:
        return float(self.msd[-window:].mean())


def run_experiment(
    topology: NetworkTopology,
    model: LinearModelConfig,
    learning: LearningConfig,
    aggregator: AggregatorSpec,
    attack: AttackSpec | None,
    seed,
) -> ExperimentTrace:
    """Simulate the full network for ``learning.iterations`` rounds.

    The training loss is the benign-agent mean of the Huber loss on each
    agent's fresh batch, evaluated at its pre-adaptation weights; the MSD is
    the benign-agent mean of ||w_k - w_true||^2 after combining.  Once any
    weight magnitude exceeds ``DIVERGENCE_SENTINEL`` the run is marked
    diverged and the remaining trace rows are frozen at the sentinel.
    """
    if attack is None and topology.num_malicious > 0:
        raise ValueError("an attack scheme is required when malicious agents are present")
    n_agents = topology.agent_count
    dim = model.dim
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_agents)]
    benign = topology.benign_agents
    neighborhoods = {int(k): topology.neighborhood(int(k)) for k in benign}
    benign_part = {
        k: nb[~topology.malicious[nb]] for k, nb in neighborhoods.items()
    }
    malicious_counts = {
        k: int(topology.malicious[nb].sum()) for k, nb in neighborhoods.items()
    }

    weights = np.zeros((n_agents, dim))
    phis = np.zeros_like(weights)
    iters = learning.iterations
    loss_trace = np.empty(iters)
    msd_trace = np.empty(iters)
    m_converged = np.ones(iters, dtype=bool)
    initial_msd = float(np.mean(np.sum((weights[benign] - model.true_weights) ** 2, axis=1)))
    diverged = False

    batch = model.samples_per_iteration
    with np.errstate(over="ignore"):
        for i in range(iters):
            if diverged:
                loss_trace[i] = DIVERGENCE_SENTINEL
                msd_trace[i] = DIVERGENCE_SENTINEL
                continue
            losses = np.empty(benign.size)
            for j, k in enumerate(benign):
                regressors, targets = generate_batch(streams[k], model, batch)
                residuals = targets - regressors @ weights[k]
                losses[j] = huber_loss(residuals, learning.huber_delta).mean()
                g = huber_grad_factor(residuals, learning.huber_delta)
                phis[k] = weights[k] + learning.step_size * (
                    g[:, None] * regressors
                ).mean(axis=0)
            all_ok = True
            for k in benign:
                k = int(k)
                visible = phis[benign_part[k]]
                n_mal = malicious_counts[k]
                if n_mal > 0:
                    crafted = craft_attack(CraftingContext(visible, n_mal), attack)
                    stacked = np.concatenate(
                        [visible, np.broadcast_to(crafted, (n_mal, dim))], axis=0
                    )
                else:
                    stacked = visible
                result = aggregate_matrix(aggregator, stacked)
                weights[k] = result.values
                all_ok &= result.converged
            m_converged[i] = all_ok
            msd = float(np.mean(np.sum((weights[benign] - model.true_weights) ** 2, axis=1)))
            loss_trace[i] = min(float(losses.mean()), DIVERGENCE_SENTINEL)
            msd_trace[i] = min(msd, DIVERGENCE_SENTINEL)
            if np.abs(weights[benign]).max() > DIVERGENCE_SENTINEL:
                diverged = True

    return ExperimentTrace(
        iteration=np.arange(1, iters + 1),
        training_loss=loss_trace,
        msd=msd_trace,
        m_converged=m_converged,
        diverged=diverged,
        initial_msd=initial_msd,
        final_weights=weights[benign].copy(),
        metadata={
            "aggregator": aggregator.label,
            "attack": attack.label if attack is not None else "none",
            "num_malicious": topology.num_malicious,
            "agents": n_agents,
            "dim": dim,
            "noise_var": model.noise_var,
            "step_size": learning.step_size,
            "iterations": iters,
            "huber_delta": learning.huber_delta,
            "batch_size": batch,
            "seed": seed if isinstance(seed, int) else repr(seed),
        },
    )
