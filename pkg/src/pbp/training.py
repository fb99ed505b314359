"""Training orchestration: prior incorporation, per-example ADF sweeps, and
the per-pass EP refresh of the stored prior sites."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .forward import forward_output_moments_batch
from .posterior import (
    GammaDist,
    NetworkPosterior,
    PbpConfig,
    new_uniform,
    perturb_means,
)
from .updates import (
    PriorSiteStore,
    ep_refresh_prior,
    incorporate_all_prior_factors,
    incorporate_likelihood_factor,
)

# Abort threshold: fraction of examples skipped (non-finite log Z) per epoch.
MAX_SKIP_RATE = 0.01


class SkipRateError(Exception):
    """Too many examples produced a non-finite normalizer in one epoch."""


@dataclass
class TrainReport:
    """Counters and per-epoch diagnostics from one training run."""

    epochs_run: int = 0
    examples_skipped: int = 0
    undo_events: int = 0
    weight_updates: int = 0
    epoch_rmse: list[float] = field(default_factory=list)
    seconds: float = 0.0


def train(
    dataset: Dataset, config: PbpConfig, rng: np.random.Generator
) -> tuple[NetworkPosterior, PriorSiteStore, TrainReport]:
    """Run the full sequential-update schedule on a normalized training set.

    Schedule: absorb the Gamma hyperpriors exactly, ADF-incorporate every
    weight-prior factor once, perturb the means to break symmetry, then for
    each epoch shuffle the examples, incorporate each likelihood factor once,
    and refresh the stored prior sites. The per-epoch RMSE uses the predictive
    means on the (normalized) training targets.
    """
    start = time.perf_counter()
    n = len(dataset.targets)
    if n == 0:
        raise ValueError("empty training set")

    layer_sizes = [dataset.features.shape[1], *config.hidden_layer_sizes, 1]
    net = new_uniform(layer_sizes)

    # Hyperprior factors match the posterior family; absorbing them is exact.
    net.gamma = GammaDist(config.prior_shape_gamma, config.prior_rate_gamma)
    net.lam = GammaDist(config.prior_shape_lambda, config.prior_rate_lambda)

    sites = PriorSiteStore.zeros(net)
    incorporate_all_prior_factors(net, sites)
    perturb_means(net, rng)

    report = TrainReport()
    refresh_every = config.refresh_every_n_examples or n
    since_refresh = 0

    for _epoch in range(config.epochs):
        skipped_this_epoch = 0
        for idx in rng.permutation(n):
            outcome = incorporate_likelihood_factor(
                net, dataset.features[idx], float(dataset.targets[idx])
            )
            if outcome.skipped:
                skipped_this_epoch += 1
            report.undo_events += outcome.undo_count
            report.weight_updates += outcome.weight_updates
            since_refresh += 1
            if since_refresh >= refresh_every:
                ep_refresh_prior(net, sites)
                since_refresh = 0

        report.examples_skipped += skipped_this_epoch
        report.epochs_run += 1
        means, _ = forward_output_moments_batch(net, dataset.features)
        report.epoch_rmse.append(
            float(np.sqrt(np.mean((means - dataset.targets) ** 2)))
        )
        if skipped_this_epoch > MAX_SKIP_RATE * n:
            report.seconds = time.perf_counter() - start
            raise SkipRateError(
                f"{skipped_this_epoch}/{n} examples skipped in epoch "
                f"{report.epochs_run}"
            )

    report.seconds = time.perf_counter() - start
    return net, sites, report
