"""Deterministic training with validation-based model selection."""

from __future__ import annotations

import csv
import hashlib
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .evalkit import rmse
from .model import (
    GATV2_TCN,
    TCN_BASELINE,
    ModelConfig,
    ModelParams,
    concat_context,
    forward,
    init_params,
    spatial_layer,
    temporal_output,
)
from .pipeline import PreparedSeason, WindowSample
from .tensorcore import Tape, Tensor


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-3
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    mask_loss: bool = True
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse: float
    seconds: float
    digest: str


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    selected_epoch: int = 0

    def write_csv(self, path: str | os.PathLike, timing: bool = True) -> None:
        """One row per epoch; ``timing=False`` drops wall time so the file is reproducible."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "train_loss", "val_rmse") + (("seconds",) if timing else ()) + ("selected",))
            for r in self.epochs:
                secs = (f"{r.seconds:.3f}",) if timing else ()
                w.writerow((r.epoch, repr(r.train_loss), repr(r.val_rmse)) + secs + (int(r.epoch == self.selected_epoch),))

    def deterministic_view(self) -> list[tuple]:
        """Everything except wall time."""
        return [(r.epoch, r.train_loss, r.val_rmse, r.digest) for r in self.epochs] + [("selected", self.selected_epoch)]


def param_digest(params: ModelParams) -> str:
    h = hashlib.sha256()
    for name, arr in params.arrays().items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def model_config_for(prepared: PreparedSeason, **overrides) -> ModelConfig:
    """A ModelConfig whose data-dependent sizes match ``prepared``."""
    base = dict(
        in_features=prepared.features.shape[-1],
        n_teams=prepared.dataset.n_teams,
        t0=prepared.t0,
        out_features=len(prepared.targets),
    )
    base.update(overrides)
    return ModelConfig(**base)


def masked_mse(pred: Tensor, target: np.ndarray, mask: np.ndarray | None) -> Tensor:
    """Mean squared error over the rows selected by ``mask`` (all rows if None)."""
    weights = np.ones(pred.shape) if mask is None else np.broadcast_to(np.asarray(mask, dtype=float)[:, None], pred.shape)
    count = weights.sum()
    if count == 0:
        raise TrainingError("loss mask selects no players")
    diff = pred - target
    return tc.ops.sum(tc.ops.square(diff) * (weights / count))


def predict_windows(
    prepared: PreparedSeason,
    params: ModelParams,
    config: ModelConfig,
    windows: Sequence[WindowSample],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forecasts, targets (original units) and activity masks, each stacked over ``windows``.

    The per-day spatial layer does not depend on the window, so each day is
    computed once and shared by all windows that read it.
    """
    n = prepared.dataset.n
    needed = sorted({t for w in windows for t in w.input_days})
    per_day = {}
    with tc.no_record():
        for t in needed:
            g = concat_context(prepared.features[t], prepared.dataset.team_index, prepared.dataset.pos_index, params)
            per_day[t] = spatial_layer(g, prepared.edges[t], params, config).data
        preds, actuals, masks = [], [], []
        for w in windows:
            h = Tensor(np.concatenate([per_day[t] for t in w.input_days], axis=0))
            preds.append(temporal_output(h, config.t0, n, params).data)
            y, m = prepared.target(w)
            actuals.append(y)
            masks.append(m)
    return np.stack(preds), np.stack(actuals), np.stack(masks)


def forecast(prepared: PreparedSeason, params: ModelParams, config: ModelConfig, input_days: Sequence[int]) -> np.ndarray:
    """``n x k`` forecast (original units) from the given input days; no target day is needed."""
    ds = prepared.dataset
    with tc.no_record():
        out = forward(prepared.features[list(input_days)], [prepared.edges[t] for t in input_days], ds.team_index, ds.pos_index, params, config)
    return out.data


def split_rmse(prepared: PreparedSeason, params: ModelParams, config: ModelConfig, windows: Sequence[WindowSample]) -> float:
    pred, actual, mask = predict_windows(prepared, params, config, windows)
    return rmse(pred, actual, mask)


def train(
    prepared: PreparedSeason,
    model_config: ModelConfig,
    train_config: TrainConfig,
    kind: str = GATV2_TCN,
    verbose: bool = False,
) -> tuple[ModelParams, TrainLog]:
    """Adam over training windows in chronological order, one step per window.

    Returns the parameters from the epoch with the lowest validation RMSE.
    Stops after ``patience`` epochs without improvement.
    """
    init_rng = np.random.default_rng([train_config.seed, 0])
    drop_rng = np.random.default_rng([train_config.seed, 1])
    params = init_params(model_config, init_rng, kind, prepared.target_mean, prepared.target_std)
    log = TrainLog()
    best_rmse = np.inf
    best_state = params.snapshot()
    stale = 0
    for epoch in range(1, train_config.max_epochs + 1):
        start = time.perf_counter()
        losses = []
        for wi, w in enumerate(prepared.train):
            feats, day_edges = prepared.window_inputs(w)
            target, active = prepared.target(w)
            if train_config.mask_loss and not active.any():
                continue
            params.zero_grad()
            with Tape() as tape:
                pred = forward(
                    feats, day_edges, prepared.dataset.team_index, prepared.dataset.pos_index,
                    params, model_config, training=True, rng=drop_rng,
                )  # fmt: skip
                loss = masked_mse(pred, target, active if train_config.mask_loss else None)
            value = float(loss.data)
            if not np.isfinite(value):
                with np.errstate(all="ignore"):
                    rows = active if train_config.mask_loss else slice(None)
                    per_stat = np.sum((pred.data[rows] - target[rows]) ** 2, axis=0)
                bad_cols = [prepared.targets[k] for k in np.flatnonzero(~np.isfinite(per_stat))]
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, window {wi} (target day {w.target_day}); "
                    f"offending statistic(s): {bad_cols or 'loss only'}"
                )
            tape.backward(loss)
            tc.adam_step(
                params.parameters(), lr=train_config.lr, betas=train_config.betas,
                eps=train_config.eps, weight_decay=train_config.weight_decay,
            )  # fmt: skip
            losses.append(value)
        val = split_rmse(prepared, params, model_config, prepared.val)
        record = EpochRecord(epoch, float(np.mean(losses)) if losses else float("nan"), val, time.perf_counter() - start, param_digest(params))
        log.epochs.append(record)
        if verbose:
            print(f"epoch {epoch:4d}  train_loss {record.train_loss:.4f}  val_rmse {val:.4f}")
        if val < best_rmse:
            best_rmse, best_state, stale = val, params.snapshot(), 0
            log.selected_epoch = epoch
        else:
            stale += 1
            if stale >= train_config.patience:
                break
    return ModelParams.from_arrays(kind, best_state), log


def train_baseline_tcn(prepared: PreparedSeason, model_config: ModelConfig, train_config: TrainConfig, verbose: bool = False):
    """Same loop with the attention layer swapped for a per-node linear map."""
    return train(prepared, model_config, train_config, kind=TCN_BASELINE, verbose=verbose)


class PersistencePredictor:
    """Forecast for day t is the forward-filled value at day t-1."""

    def predict(self, prepared: PreparedSeason, windows: Sequence[WindowSample]):
        preds, actuals, masks = [], [], []
        for w in windows:
            preds.append(prepared.filled[w.target_day - 1][:, prepared.target_idx])
            y, m = prepared.target(w)
            actuals.append(y)
            masks.append(m)
        return np.stack(preds), np.stack(actuals), np.stack(masks)


def train_baseline_persistence(prepared: PreparedSeason | None = None) -> PersistencePredictor:
    return PersistencePredictor()


CONFIG_META_PREFIX = "model."


def save_model(path: str | os.PathLike, params: ModelParams, config: ModelConfig, seed: int, extra: dict | None = None) -> None:
    meta = {"kind": params.kind}
    meta.update({CONFIG_META_PREFIX + k: repr(v) for k, v in asdict(config).items()})
    meta.update(extra or {})
    tc.checkpoint.save(path, params.arrays(), seed, meta)


def load_model(path: str | os.PathLike) -> tuple[ModelParams, ModelConfig, int, dict[str, str]]:
    arrays, seed, meta = tc.checkpoint.load(path)
    fields = {}
    for key, value in meta.items():
        if key.startswith(CONFIG_META_PREFIX):
            name = key[len(CONFIG_META_PREFIX) :]
            fields[name] = float(value) if "." in value or "e" in value else int(value)
    config = ModelConfig(**fields)
    return ModelParams.from_arrays(meta["kind"], arrays), config, seed, meta
