"""Dataset ingestion, normalization, split management, and model files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .posterior import (
    GammaDist,
    LayerPosterior,
    NetworkPosterior,
    PbpConfig,
)
from .updates import PriorSiteStore

MODEL_FORMAT_VERSION = 1


class DataError(Exception):
    """Malformed input data or model file."""


@dataclass
class Dataset:
    """Feature matrix plus target vector; column names kept when available."""

    features: np.ndarray
    targets: np.ndarray
    columns: list[str] | None = None

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class NormStats:
    """Training-set normalization statistics (population standard deviations).

    Constant columns get a standard deviation of 1, which maps them to all
    zeros instead of dividing by zero.
    """

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float

    def apply_features(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def apply(self, dataset: Dataset) -> Dataset:
        return Dataset(
            features=self.apply_features(dataset.features),
            targets=(dataset.targets - self.target_mean) / self.target_std,
            columns=dataset.columns,
        )

    def invert_target(self, y_norm: np.ndarray) -> np.ndarray:
        return y_norm * self.target_std + self.target_mean


def _parse_cell(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell at row {row}, column {col}: {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value at row {row}, column {col}: {cell!r}")
    return value


def read_csv_matrix(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV with an optional single header row.

    The first row is treated as a header when any of its cells fails to parse
    as a number. Ragged rows and non-finite cells are rejected with row/column
    diagnostics (1-based, header included in the numbering).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")

    header: list[str] | None = None
    first = rows[0]
    try:
        [float(cell) for cell in first]
    except ValueError:
        header = [cell.strip() for cell in first]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")

    width = len(rows[0])
    offset = 2 if header is not None else 1
    data = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"{path}: row {r + offset} has {len(row)} cells, expected {width}"
            )
        for c, cell in enumerate(row):
            data[r, c] = _parse_cell(cell, r + offset, c + 1)
    return data, header


def resolve_target_column(
    target: str | int, width: int, header: list[str] | None
) -> int:
    """Target selector: a header name, an integer index, or 'last'."""
    if isinstance(target, int):
        idx = target
    else:
        name = target.strip()
        if name.lower() == "last":
            return width - 1
        if header is not None and name in header:
            return header.index(name)
        try:
            idx = int(name)
        except ValueError:
            raise DataError(f"no column named {name!r}") from None
    if not -width <= idx < width:
        raise DataError(f"target column {target} out of range for {width} columns")
    return idx % width


def load_csv(path, target_column: str | int = "last") -> Dataset:
    """Load a numeric CSV and carve out the designated target column."""
    data, header = read_csv_matrix(path)
    if data.shape[1] < 2:
        raise DataError(f"{path}: need at least one feature and one target column")
    t = resolve_target_column(target_column, data.shape[1], header)
    mask = np.ones(data.shape[1], dtype=bool)
    mask[t] = False
    columns = None
    if header is not None:
        columns = [h for keep, h in zip(mask, header) if keep] + [header[t]]
    return Dataset(features=data[:, mask], targets=data[:, t], columns=columns)


def split(
    dataset: Dataset, test_fraction: float, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Seeded permutation split; the training side gets ceil(N*(1-f)) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test fraction must be in (0, 1), got {test_fraction}")
    n = len(dataset)
    n_train = math.ceil(n * (1.0 - test_fraction))
    if n_train == 0 or n_train == n:
        raise DataError(f"degenerate split: {n_train} train of {n} rows")
    perm = rng.permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    return (
        Dataset(dataset.features[tr], dataset.targets[tr], dataset.columns),
        Dataset(dataset.features[te], dataset.targets[te], dataset.columns),
    )


def normalize(train: Dataset) -> tuple[Dataset, NormStats]:
    """Zero-mean unit-variance stats from the training set only."""
    f_mean = train.features.mean(axis=0)
    f_std = train.features.std(axis=0)  # population formula
    # Constant columns (up to float summation noise): pin the mean to the
    # first row so they normalize to exactly zero, and divide by 1.
    constant = f_std <= np.maximum(np.abs(f_mean), 1.0) * 1e-13
    f_mean = np.where(constant, train.features[0], f_mean)
    f_std = np.where(constant, 1.0, f_std)
    t_mean = float(train.targets.mean())
    t_std = float(train.targets.std())
    if t_std <= 0.0:
        t_std = 1.0
    stats = NormStats(f_mean, f_std, t_mean, t_std)
    return stats.apply(train), stats


def identity_stats(n_features: int) -> NormStats:
    """Pass-through stats, handy for data that is already normalized."""
    return NormStats(np.zeros(n_features), np.ones(n_features), 0.0, 1.0)


def _net_to_dict(net: NetworkPosterior) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "layers": [
            {"means": layer.means.tolist(), "variances": layer.variances.tolist()}
            for layer in net.layers
        ],
        "gamma": {"shape": net.gamma.shape, "rate": net.gamma.rate},
        "lambda": {"shape": net.lam.shape, "rate": net.lam.rate},
    }


def _net_from_dict(doc: dict) -> NetworkPosterior:
    layers = [
        LayerPosterior(
            means=np.array(entry["means"], dtype=float),
            variances=np.array(entry["variances"], dtype=float),
        )
        for entry in doc["layers"]
    ]
    return NetworkPosterior(
        layers=layers,
        gamma=GammaDist(**doc["gamma"]),
        lam=GammaDist(**doc["lambda"]),
        layer_sizes=list(doc["layer_sizes"]),
    )


def save_model(model, path) -> None:
    """Write the trained model as versioned, human-diffable JSON.

    Floats round-trip exactly (shortest-representation encoding), so
    save -> load -> save is byte-identical.
    """
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {
            "hidden_layer_sizes": list(model.config.hidden_layer_sizes),
            "epochs": model.config.epochs,
            "prior_shape_lambda": model.config.prior_shape_lambda,
            "prior_rate_lambda": model.config.prior_rate_lambda,
            "prior_shape_gamma": model.config.prior_shape_gamma,
            "prior_rate_gamma": model.config.prior_rate_gamma,
            "seed": model.config.seed,
        },
        "network": _net_to_dict(model.net),
        "prior_sites": {
            "precision": [a.tolist() for a in model.sites.precision],
            "precision_mean": [a.tolist() for a in model.sites.precision_mean],
            "lambda_shape": [a.tolist() for a in model.sites.lam_shape],
            "lambda_rate": [a.tolist() for a in model.sites.lam_rate],
        },
        "normalization": {
            "feature_mean": model.norm.feature_mean.tolist(),
            "feature_std": model.norm.feature_std.tolist(),
            "target_mean": model.norm.target_mean,
            "target_std": model.norm.target_std,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    from .prediction import TrainedModel

    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt model file {path}: {exc}") from exc

    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: model format version {version!r} not supported "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    try:
        cfg = doc["config"]
        config = PbpConfig(
            hidden_layer_sizes=tuple(cfg["hidden_layer_sizes"]),
            epochs=cfg["epochs"],
            prior_shape_lambda=cfg["prior_shape_lambda"],
            prior_rate_lambda=cfg["prior_rate_lambda"],
            prior_shape_gamma=cfg["prior_shape_gamma"],
            prior_rate_gamma=cfg["prior_rate_gamma"],
            seed=cfg["seed"],
        )
        net = _net_from_dict(doc["network"])
        ps = doc["prior_sites"]
        sites = PriorSiteStore(
            [np.array(a, dtype=float) for a in ps["precision"]],
            [np.array(a, dtype=float) for a in ps["precision_mean"]],
            [np.array(a, dtype=float) for a in ps["lambda_shape"]],
            [np.array(a, dtype=float) for a in ps["lambda_rate"]],
        )
        nm = doc["normalization"]
        norm = NormStats(
            feature_mean=np.array(nm["feature_mean"], dtype=float),
            feature_std=np.array(nm["feature_std"], dtype=float),
            target_mean=float(nm["target_mean"]),
            target_std=float(nm["target_std"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt model file {path}: {exc}") from exc
    return TrainedModel(net=net, sites=sites, norm=norm, config=config)
