"""Training loop, Adam optimizer, and the trivial baselines.

train_transformer owns every stochastic choice of a run (weight init,
batch shuffling, dropout) through a single SeededRng, so a (config, data)
pair fully determines the loss curve and metrics. Runtime is wall-clock
around training plus test evaluation, nothing else.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .analysis import mae, mse
from .dataset import WindowBatch, stack_windows
from .errors import ContractError, TrainingError
from .rng import SeededRng
from .transformer import ForecastModel, TransformerConfig

BACKBONES = ("transformer", "last_value", "linear")


class Adam:
    """Adam with bias correction over the model's parameter dict."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ContractError(f"lr must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ContractError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.value) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.value) for n, p in params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"step() before backward(): no gradient for {name}")
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[name] / c1
            vhat = self.v[name] / c2
            p.value = p.value - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainReport:
    backbone: str
    seed: int
    epoch_train_losses: list
    val_mse: float
    val_mae: float
    test_mse: float
    test_mae: float
    runtime_s: float
    epochs_run: int
    best_epoch: Optional[int]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.runtime_s > 0:
            raise ContractError(f"runtime_s must be positive, got {self.runtime_s}")
        for v in list(self.epoch_train_losses) + [self.val_mse, self.val_mae,
                                                  self.test_mse, self.test_mae]:
            if not np.isfinite(v):
                raise ContractError("TrainReport requires finite losses and metrics")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _require_windows(windows, name):
    if not windows:
        raise ContractError(f"{name} windows must be nonempty")
    for w in windows:
        if not isinstance(w, WindowBatch):
            raise ContractError(f"{name} windows must be WindowBatch instances")


def _eval(model: ForecastModel, enc, dec, tgt, batch_size: int):
    preds = model.predict(enc, dec, batch_size=batch_size)
    return mse(preds, tgt), mae(preds, tgt)


def train_transformer(train_windows, val_windows, test_windows,
                      config: TransformerConfig, model: ForecastModel | None = None):
    """Fit the forecaster; returns (model, TrainReport).

    Early stopping watches validation MSE with the config's patience and
    restores the best-epoch parameters before the test evaluation.
    """
    _require_windows(train_windows, "train")
    _require_windows(val_windows, "val")
    _require_windows(test_windows, "test")
    enc_tr, dec_tr, tgt_tr, _ = stack_windows(train_windows)
    enc_va, dec_va, tgt_va, _ = stack_windows(val_windows)
    enc_te, dec_te, tgt_te, _ = stack_windows(test_windows)

    t0 = time.monotonic()
    rng = SeededRng(config.seed)
    if model is None:
        model = ForecastModel(config, rng)
    optimizer = Adam(model.params, lr=config.learning_rate)
    n = enc_tr.shape[0]
    drop_rng = rng if config.dropout > 0.0 else None

    losses = []
    best_val = np.inf
    best_val_mae = np.inf
    best_epoch = None
    best_state = None
    bad_epochs = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            pred = model.forward(enc_tr[idx], dec_tr[idx], train_rng=drop_rng)
            loss = ad.mse_loss(pred, tgt_tr[idx])
            loss_val = float(loss.value)
            if not np.isfinite(loss_val):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}; try a smaller "
                    f"learning_rate (currently {config.learning_rate})")
            ad.backward(loss)
            optimizer.step()
            if not model.parameters_finite():
                raise TrainingError(
                    f"parameters went non-finite at epoch {epoch}; try a smaller "
                    f"learning_rate (currently {config.learning_rate})")
            epoch_loss += loss_val * len(idx)
        losses.append(epoch_loss / n)

        val_mse, val_mae = _eval(model, enc_va, dec_va, tgt_va, config.batch_size)
        if val_mse < best_val:
            best_val = val_mse
            best_val_mae = val_mae
            best_epoch = epoch
            best_state = model.state_copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    if best_state is not None:
        model.load_state(best_state)
    test_mse, test_mae = _eval(model, enc_te, dec_te, tgt_te, config.batch_size)
    runtime = max(time.monotonic() - t0, 1e-9)

    report = TrainReport(
        backbone="transformer", seed=config.seed, epoch_train_losses=losses,
        val_mse=best_val, val_mae=best_val_mae, test_mse=test_mse, test_mae=test_mae,
        runtime_s=runtime, epochs_run=len(losses), best_epoch=best_epoch,
        config=asdict(config),
    )
    return model, report


def _last_value_preds(windows) -> np.ndarray:
    _, _, tgt, enc_tgt = stack_windows(windows)
    return np.repeat(enc_tgt[:, -1:], tgt.shape[1], axis=1)


def baseline_last_value(train_windows, val_windows, test_windows,
                        config: TransformerConfig) -> TrainReport:
    """Repeat each window's final observed target across the horizon."""
    _require_windows(val_windows, "val")
    _require_windows(test_windows, "test")
    t0 = time.monotonic()
    _, _, tgt_va, _ = stack_windows(val_windows)
    _, _, tgt_te, _ = stack_windows(test_windows)
    preds_va = _last_value_preds(val_windows)
    preds_te = _last_value_preds(test_windows)
    runtime = max(time.monotonic() - t0, 1e-9)
    return TrainReport(
        backbone="last_value", seed=config.seed, epoch_train_losses=[],
        val_mse=mse(preds_va, tgt_va), val_mae=mae(preds_va, tgt_va),
        test_mse=mse(preds_te, tgt_te), test_mae=mae(preds_te, tgt_te),
        runtime_s=runtime, epochs_run=0, best_epoch=None, config=asdict(config),
    )


def baseline_linear(train_windows, val_windows, test_windows,
                    config: TransformerConfig) -> TrainReport:
    """Ridge regression from the flattened target lookback to the horizon.

    Normal equations with lambda = 1e-3 * n_features; a bias column is
    appended to the features.
    """
    _require_windows(train_windows, "train")
    _require_windows(val_windows, "val")
    _require_windows(test_windows, "test")
    t0 = time.monotonic()
    _, _, tgt_tr, feat_tr = stack_windows(train_windows)
    _, _, tgt_va, feat_va = stack_windows(val_windows)
    _, _, tgt_te, feat_te = stack_windows(test_windows)

    def with_bias(x):
        return np.column_stack([x, np.ones(x.shape[0])])

    x = with_bias(feat_tr)
    lam = 1e-3 * x.shape[1]
    gram = x.T @ x + lam * np.eye(x.shape[1])
    weights = np.linalg.solve(gram, x.T @ tgt_tr)
    preds_va = with_bias(feat_va) @ weights
    preds_te = with_bias(feat_te) @ weights
    runtime = max(time.monotonic() - t0, 1e-9)
    return TrainReport(
        backbone="linear", seed=config.seed, epoch_train_losses=[],
        val_mse=mse(preds_va, tgt_va), val_mae=mae(preds_va, tgt_va),
        test_mse=mse(preds_te, tgt_te), test_mae=mae(preds_te, tgt_te),
        runtime_s=runtime, epochs_run=0, best_epoch=None, config=asdict(config),
    )


def train_backbone(name: str, train_windows, val_windows, test_windows,
                   config: TransformerConfig):
    """Dispatch to a backbone; returns (model_or_None, TrainReport)."""
    if name == "transformer":
        return train_transformer(train_windows, val_windows, test_windows, config)
    if name == "last_value":
        return None, baseline_last_value(train_windows, val_windows, test_windows, config)
    if name == "linear":
        return None, baseline_linear(train_windows, val_windows, test_windows, config)
    raise ContractError(f"unknown backbone {name!r}, expected one of {BACKBONES}")
