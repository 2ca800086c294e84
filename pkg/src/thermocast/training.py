"""Normalization, masked loss, early stopping and the Adam training loop."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from thermocast.autograd import Adam, Tensor, mul, no_grad, scale, square, sub
from thermocast.autograd import sum as tsum
from thermocast.errors import DataError, UsageError
from thermocast.models import Model

logger = logging.getLogger(__name__)

LST_OFFSET_C = 20.0
LST_SCALE_C = 15.0

TASK_DEFAULTS = {
    "downscale": {"lr": 2e-5, "batch_size": 32},
    "nowcast": {"lr": 1e-4, "batch_size": 128},
}


@dataclass(frozen=True)
class TrainConfig:
    task: str = "downscale"
    lr: float = 2e-5
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 10
    seed: int = 0
    width_factor: float = 1.0
    lst_offset: float = LST_OFFSET_C
    lst_scale: float = LST_SCALE_C

    def __post_init__(self):
        if self.task not in TASK_DEFAULTS:
            raise UsageError(f"task must be one of {sorted(TASK_DEFAULTS)}, got {self.task!r}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise UsageError("batch_size, max_epochs and patience must be positive")

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TrainConfig":
        if task not in TASK_DEFAULTS:
            raise UsageError(f"unknown task {task!r}")
        return cls(task=task, **{**TASK_DEFAULTS[task], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def normalize(values_c, offset: float = LST_OFFSET_C, scale_c: float = LST_SCALE_C):
    return (np.asarray(values_c, dtype=np.float64) - offset) / scale_c


def denormalize(values, offset: float = LST_OFFSET_C, scale_c: float = LST_SCALE_C):
    return np.asarray(values, dtype=np.float64) * scale_c + offset


def encode_sza(sza_deg):
    return np.cos(np.deg2rad(np.asarray(sza_deg, dtype=np.float64)))


def masked_mse(pred: Tensor, target: Tensor, mask: Tensor) -> Tensor:
    """sum(mask * (pred - target)^2) / sum(mask); only ``pred`` carries gradient."""
    total = float(mask.data.sum())
    if total <= 0:
        raise DataError("masked_mse: mask selects no pixels")
    target = Tensor(target.data) if target.requires_grad else target
    mask = Tensor(mask.data) if mask.requires_grad else mask
    return scale(tsum(mul(square(sub(pred, target)), mask)), 1.0 / total)


@dataclass
class ArrayDataset:
    """Model inputs with normalized targets and 0/1 loss masks, first axis = sample."""

    inputs: np.ndarray
    targets: np.ndarray
    masks: np.ndarray
    ids: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.inputs)
        if len(self.targets) != n or len(self.masks) != n:
            raise UsageError("inputs, targets and masks must have the same sample count")
        if self.targets.shape != self.masks.shape:
            raise UsageError("targets and masks must have identical shapes")
        if not self.ids:
            self.ids = [str(i) for i in range(n)]

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, idx) -> "ArrayDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return ArrayDataset(self.inputs[idx], self.targets[idx], self.masks[idx],
                            [self.ids[i] for i in idx])

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.inputs, self.targets, self.masks):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


class EarlyStopping:
    """Stop once the monitored value has not improved for ``patience`` epochs."""

    def __init__(self, patience: int = 10):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.epoch = 0
        self.stale = 0

    def update(self, value: float) -> bool:
        """Record one epoch; returns True if training should stop now."""
        self.epoch += 1
        if value < self.best:
            self.best = value
            self.best_epoch = self.epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_rmse_c: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_rmse_c: float = float("nan")
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model."""

    architecture: dict
    state: dict
    config: TrainConfig
    seed: int
    metrics: dict = field(default_factory=dict)
    data_hash: str = ""
    extra: dict = field(default_factory=dict)

    def build(self) -> Model:
        from thermocast.models import build_model

        model = build_model(self.architecture, self.seed)
        model.load_state_dict(self.state)
        return model


def predict(model: Model, inputs: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Batched forward pass without a graph; returns normalized outputs."""
    outs = []
    with no_grad():
        for start in range(0, len(inputs), batch_size):
            outs.append(model(Tensor(inputs[start:start + batch_size])).data)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0,))


def rmse_c(pred: np.ndarray, target: np.ndarray, mask: np.ndarray, scale_c: float = LST_SCALE_C) -> float:
    """Pixel-pooled RMSE in degC of normalized arrays over mask == 1."""
    total = mask.sum()
    if total <= 0:
        raise DataError("no valid pixels to score")
    return float(np.sqrt(np.sum(mask * (pred - target) ** 2) / total) * scale_c)


def evaluate_rmse(model: Model, data: ArrayDataset, config: TrainConfig) -> float:
    pred = predict(model, data.inputs, batch_size=max(config.batch_size, 16))
    return rmse_c(pred, data.targets, data.masks, config.lst_scale)


def train(model: Model, train_set: ArrayDataset, val_set: ArrayDataset, config: TrainConfig,
          data_hash: Optional[str] = None,
          on_epoch: Optional[Callable[[int, float, float], None]] = None) -> tuple[Checkpoint, TrainReport]:
    """Adam on masked MSE with patience-based early stopping and restore-best.

    Batches come from a per-epoch permutation seeded by ``(seed, epoch)``;
    a trailing partial batch is dropped. The returned checkpoint holds the
    weights of the epoch with the lowest validation RMSE, and ``model`` is
    left holding those same weights.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training and validation sets must be non-empty")
    n_batches = len(train_set) // config.batch_size
    if n_batches == 0:
        raise DataError(f"{len(train_set)} training samples cannot fill one batch of {config.batch_size}")

    opt = Adam(model.parameters(), lr=config.lr)
    stopper = EarlyStopping(config.patience)
    report = TrainReport()
    best_state = model.state_dict()

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
        order = rng.permutation(len(train_set))
        losses = []
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            opt.zero_grad()
            pred = model(Tensor(train_set.inputs[idx]))
            loss = masked_mse(pred, Tensor(train_set.targets[idx]), Tensor(train_set.masks[idx]))
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val = evaluate_rmse(model, val_set, config)
        report.train_loss.append(float(np.mean(losses)))
        report.val_rmse_c.append(val)
        stop = stopper.update(val)
        if stopper.best_epoch == epoch:
            best_state = model.state_dict()
        logger.info("epoch %d train_loss %.6f val_rmse %.4f C", epoch, report.train_loss[-1], val)
        if on_epoch is not None:
            on_epoch(epoch, report.train_loss[-1], val)
        if stop:
            report.stop_reason = "patience"
            break
    else:
        report.stop_reason = "max_epochs"

    report.best_epoch = stopper.best_epoch
    report.best_val_rmse_c = float(stopper.best)
    model.load_state_dict(best_state)
    ckpt = Checkpoint(architecture=model.architecture(), state=model.state_dict(), config=config,
                      seed=model.seed, data_hash=data_hash or train_set.digest(),
                      metrics={"best_epoch": report.best_epoch, "best_val_rmse_c": report.best_val_rmse_c,
                               "epochs_run": len(report.val_rmse_c), "stop_reason": report.stop_reason})
    return ckpt, report


def with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
