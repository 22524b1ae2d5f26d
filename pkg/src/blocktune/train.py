"""Selective-block training: Adam on the chosen blocks only, with
per-block learning rates and validation-accuracy early stopping.

The FC layer trains at ``lr_fc`` (default 0.01) and every other block at
``lr_other`` (default 0.001).  Each epoch walks seed-shuffled minibatches
(the final short batch included, loss averaged per batch), evaluates on
the validation set, and keeps a snapshot of the best-validation
parameters; training stops once validation accuracy has not improved for
``patience`` epochs, or at ``max_epochs``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import cost as cost_mod
from .data import Dataset
from .errors import NumericError, UsageError
from .model import BlockNet, backward_selected, check_selection, forward


@dataclass(frozen=True)
class TrainConfig:
    lr_fc: float = 0.01
    lr_other: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 200
    patience: float = 10  # epochs without val-accuracy improvement; inf allowed
    seed: int = 0

    def __post_init__(self):
        if self.lr_fc <= 0 or self.lr_other <= 0:
            raise UsageError("learning rates must be > 0")
        if self.patience < 1:
            raise UsageError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise UsageError("batch_size and max_epochs must be >= 1")


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    initial_train_loss: float = math.nan
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    wall_time_s: float = 0.0
    flops_forward: int = 0   # realized totals over the whole run
    flops_backward: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "epochs": [{"epoch": i + 1, "train_loss": l, "val_accuracy": a}
                       for i, (l, a) in enumerate(zip(self.train_loss,
                                                      self.val_accuracy))],
            "initial_train_loss": self.initial_train_loss,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "wall_time_s": self.wall_time_s,
            "flops_forward": self.flops_forward,
            "flops_backward": self.flops_backward,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainLog":
        d = json.loads(text)
        return cls(train_loss=[e["train_loss"] for e in d["epochs"]],
                   val_accuracy=[e["val_accuracy"] for e in d["epochs"]],
                   initial_train_loss=d["initial_train_loss"],
                   stopped_epoch=d["stopped_epoch"],
                   best_epoch=d["best_epoch"],
                   best_val_accuracy=d["best_val_accuracy"],
                   wall_time_s=d["wall_time_s"],
                   flops_forward=d["flops_forward"],
                   flops_backward=d["flops_backward"])


@dataclass
class TrainedModel:
    net: BlockNet          # best-validation snapshot
    selection: frozenset
    log: TrainLog


@dataclass
class AdamSlot:
    """Per-parameter optimizer state (first/second moments, step count)."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(param: np.ndarray, grad: np.ndarray, slot: AdamSlot, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[np.ndarray, AdamSlot]:
    """One bias-corrected Adam update; pure in all inputs."""
    t = slot.t + 1
    m = beta1 * slot.m + (1.0 - beta1) * grad
    v = beta2 * slot.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_param, AdamSlot(m=m, v=v, t=t)


def evaluate(net: BlockNet, ds: Dataset) -> float:
    """Fraction of argmax-correct predictions (ties go to the lowest class)."""
    if len(ds) == 0:
        raise UsageError("cannot evaluate on an empty dataset")
    pred = np.argmax(forward(net, ds.X), axis=1)
    return float(np.mean(pred == ds.y))


def train(net: BlockNet, selection, train_ds: Dataset, val_ds: Dataset,
          cfg: TrainConfig) -> TrainedModel:
    """Fine-tune exactly the selected blocks; everything else stays bitwise
    frozen.  Returns the best-validation snapshot plus the epoch trace."""
    sel = check_selection(net, selection)
    if len(train_ds) == 0:
        raise UsageError("training set is empty")
    if len(val_ds) == 0:
        raise UsageError("validation set is empty")

    t0 = time.perf_counter()
    work = net.copy()
    slots = {(bid, pname): AdamSlot(m=np.zeros_like(arr), v=np.zeros_like(arr))
             for bid in sorted(sel) for pname, arr in work.params(bid)}
    rng = np.random.default_rng(cfg.seed)
    n = len(train_ds)
    log = TrainLog()
    log.initial_train_loss = _dataset_loss(work, train_ds)

    best_acc = -1.0
    best_epoch = 0
    best_params: dict[tuple[str, str], np.ndarray] = {}
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads = backward_selected(work, sel, train_ds.X[idx],
                                            train_ds.y[idx])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            loss_sum += loss * idx.size
            for bid in sel:
                lr = cfg.lr_fc if bid == "fc" else cfg.lr_other
                for pname, arr in work.params(bid):
                    new_arr, slots[(bid, pname)] = adam_step(
                        arr, grads[bid][pname], slots[(bid, pname)], lr,
                        cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
                    arr[...] = new_arr
        log.train_loss.append(loss_sum / n)
        val_acc = evaluate(work, val_ds)
        log.val_accuracy.append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = {(bid, pname): arr.copy()
                           for bid in sel for pname, arr in work.params(bid)}
        elif epoch - best_epoch >= cfg.patience:
            break

    result = net.copy()
    for bid in sel:
        for pname, arr in result.params(bid):
            arr[...] = best_params[(bid, pname)]

    log.stopped_epoch = epoch
    log.best_epoch = best_epoch
    log.best_val_accuracy = best_acc
    log.wall_time_s = time.perf_counter() - t0
    fwd_ps = cost_mod.forward_flops(net)
    bwd_ps = cost_mod.backward_flops(net, sel)
    log.flops_forward = fwd_ps * (epoch * (n + len(val_ds)) + n)
    log.flops_backward = bwd_ps * epoch * n
    return TrainedModel(net=result, selection=sel, log=log)


def _dataset_loss(net: BlockNet, ds: Dataset) -> float:
    from .nn import softmax_xent
    loss, _ = softmax_xent(forward(net, ds.X), ds.y)
    return loss
