"""Pool-based active learning driven by predictive variance.

The acquisition objective (expected reduction in posterior entropy) reduces to
picking the pool point with the largest predictive variance, because the
predictive distribution is Gaussian and the conditional-entropy term is
constant. The random policy is the control arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, normalize
from .posterior import PbpConfig
from .prediction import TrainedModel, predict_batch, rmse
from .training import train


@dataclass
class ActiveConfig:
    """Experiment protocol knobs."""

    initial_train: int = 20
    test_size: int = 100
    acquisitions: int = 9
    policy: str = "active"  # "active" | "random"

    def __post_init__(self):
        if self.policy not in ("active", "random"):
            raise ValueError(f"unknown policy {self.policy!r}")


class HiddenTargets:
    """Pool targets that must stay unread until their point is acquired.

    Every read is logged, so tests can audit that no target leaked early.
    """

    def __init__(self, values: np.ndarray):
        self._values = values
        self.reveal_log: list[int] = []

    def reveal(self, index: int) -> float:
        self.reveal_log.append(index)
        return float(self._values[index])


@dataclass
class ActiveState:
    """Bookkeeping for one active-learning repetition.

    The pool arrays are fixed; pool_remaining holds the indices still
    unacquired, in their original order. Targets sit behind HiddenTargets so
    the reveal log spans the entire run.
    """

    train: Dataset
    pool_features: np.ndarray
    pool_targets: HiddenTargets
    pool_remaining: np.ndarray
    test: Dataset
    policy: str
    rmse_history: list[float] = field(default_factory=list)


def acquire_next(model: TrainedModel, pool_features: np.ndarray) -> int:
    """Index of the pool point with the highest predictive variance.

    Ties break toward the lowest index (first argmax), for reproducibility.
    """
    if pool_features.shape[0] == 0:
        raise ValueError("empty pool")
    _, variances = predict_batch(model.net, model.norm, pool_features)
    return int(np.argmax(variances))


def _initial_split(dataset: Dataset, cfg: ActiveConfig, rng: np.random.Generator) -> ActiveState:
    n = len(dataset)
    needed = cfg.initial_train + cfg.test_size + cfg.acquisitions
    if n < needed:
        raise ValueError(f"need at least {needed} rows, dataset has {n}")
    perm = rng.permutation(n)
    tr = perm[: cfg.initial_train]
    te = perm[cfg.initial_train : cfg.initial_train + cfg.test_size]
    pool = perm[cfg.initial_train + cfg.test_size :]
    return ActiveState(
        train=Dataset(dataset.features[tr], dataset.targets[tr], dataset.columns),
        pool_features=dataset.features[pool],
        pool_targets=HiddenTargets(dataset.targets[pool]),
        pool_remaining=np.arange(pool.shape[0]),
        test=Dataset(dataset.features[te], dataset.targets[te], dataset.columns),
        policy=cfg.policy,
    )


def _fit(state: ActiveState, config: PbpConfig, rng: np.random.Generator) -> TrainedModel:
    train_norm, stats = normalize(state.train)
    net, sites, _ = train(train_norm, config, rng)
    return TrainedModel(net=net, sites=sites, norm=stats, config=config)


def run_active_experiment(
    dataset: Dataset,
    policy: str,
    config: PbpConfig,
    rng: np.random.Generator,
    active_cfg: ActiveConfig | None = None,
) -> ActiveState:
    """One repetition: split, train from scratch, then acquire/retrain loop.

    Test RMSE is recorded before each acquisition and once more at the end,
    giving acquisitions+1 evaluations. The split depends only on the rng state
    at entry, so active and random arms started from the same seed share it.
    """
    cfg = active_cfg or ActiveConfig()
    cfg = ActiveConfig(cfg.initial_train, cfg.test_size, cfg.acquisitions, policy)
    state = _initial_split(dataset, cfg, rng)

    model = _fit(state, config, rng)
    for _step in range(cfg.acquisitions):
        state.rmse_history.append(rmse(model, state.test))
        remaining = state.pool_remaining
        if cfg.policy == "active":
            pick = acquire_next(model, state.pool_features[remaining])
        else:
            pick = int(rng.integers(remaining.shape[0]))
        original = int(remaining[pick])
        x_new = state.pool_features[original]
        y_new = state.pool_targets.reveal(original)

        state.train = Dataset(
            np.vstack([state.train.features, x_new[None, :]]),
            np.append(state.train.targets, y_new),
            state.train.columns,
        )
        state.pool_remaining = np.delete(remaining, pick)

        model = _fit(state, config, rng)

    state.rmse_history.append(rmse(model, state.test))
    return state
