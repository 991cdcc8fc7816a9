"""First-order bilevel architecture search.

Each epoch pairs a shuffled stream of architecture-update batches (the
search split, stepped with Adam on the coefficient tables) with a shuffled
stream of weight-update batches (the train split, stepped with momentum
SGD under a cosine schedule). The shorter stream recycles until the longer
one is exhausted. Coefficients and weights belong to disjoint optimizers,
so neither step can touch the other group.

History carries one row per epoch; wall-clock seconds stay in memory and
never reach the CSV, which keeps written artifacts byte-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import SearchConfig
from .errors import ContractViolation, NumericFault
from .metrics import ua as ua_metric
from .optim import SGD, Adam, CosineSchedule, clip_grad_norm, cosine_lr
from .supernet import Supernet, param_partition
from .tensor import Tensor, cross_entropy

__all__ = ["EpochStats", "HISTORY_COLUMNS", "alpha_entropy", "search",
           "write_history_csv"]

HISTORY_COLUMNS = ["epoch", "search_loss", "search_ua", "train_loss",
                   "train_ua", "lr", "entropy_cnn", "entropy_seqnn"]


@dataclass
class EpochStats:
    epoch: int
    search_loss: float
    search_ua: float
    train_loss: float
    train_ua: float
    lr: float
    entropy_cnn: float
    entropy_seqnn: float
    seconds: float      # in-memory diagnostic, excluded from the CSV


def alpha_entropy(table: np.ndarray) -> float:
    """Mean Shannon entropy (nats) of softmax over each row."""
    table = np.asarray(table, dtype=np.float64)
    z = np.exp(table - table.max(axis=-1, keepdims=True))
    p = z / z.sum(axis=-1, keepdims=True)
    ent = -(p * np.log(np.maximum(p, 1e-300))).sum(axis=-1)
    return float(ent.mean())


def _component_entropies(net: Supernet) -> tuple[float, float]:
    cnn_rows = [net.alpha(k).data for k in ("cnn_normal", "cnn_reduce")
                if net.alpha(k) is not None]
    cnn = alpha_entropy(np.concatenate(cnn_rows)) if cnn_rows else float("nan")
    seq = net.alpha("seqnn")
    return cnn, alpha_entropy(seq.data) if seq is not None else float("nan")


def _as_xy(split, name):
    x, y = split
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ContractViolation(
            f"{name} split: want (n, H, W) or (n, 1, H, W) features with "
            f"matching labels, got {x.shape} / {y.shape}")
    return x, y


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    idx = rng.permutation(n)
    return [idx[i:i + batch_size] for i in range(0, n, batch_size)]


class _RunningSplit:
    """Per-epoch accumulation of loss and predictions for one split."""

    def __init__(self):
        self.loss_sum = 0.0
        self.steps = 0
        self.labels: list[np.ndarray] = []
        self.preds: list[np.ndarray] = []

    def add(self, loss: float, labels: np.ndarray, logits: np.ndarray):
        self.loss_sum += loss
        self.steps += 1
        self.labels.append(labels)
        self.preds.append(logits.argmax(axis=1))

    def summary(self) -> tuple[float, float]:
        return (self.loss_sum / self.steps,
                ua_metric(np.concatenate(self.labels), np.concatenate(self.preds)))


def search(net: Supernet, train_split, search_split, config: SearchConfig,
           on_step=None) -> list[EpochStats]:
    """Run the bilevel loop for config.epochs epochs, mutating `net`.

    on_step, when given, is called with a dict {"event", "epoch", "step",
    "net"} around each sub-step (events pre_alpha, post_alpha, pre_weight,
    post_weight); it exists so tests can watch group isolation at byte
    level. A non-finite loss aborts with NumericFault carrying the
    completed history rows.
    """
    xt, yt = _as_xy(train_split, "train")
    xs, ys = _as_xy(search_split, "search")
    weights, alphas = param_partition(net)
    if not alphas:
        raise ContractViolation("nothing to search: no coefficient tables")
    w_opt = SGD(weights, lr=config.lr_max, momentum=config.momentum,
                weight_decay=config.weight_decay)
    a_opt = Adam(alphas, lr=config.arch_lr,
                 betas=(config.arch_beta1, config.arch_beta2),
                 weight_decay=config.arch_weight_decay)
    sched = CosineSchedule(config.lr_max, config.lr_min,
                           max(config.epochs - 1, 1))
    rng = np.random.default_rng([config.seed, 0x5EA2C4])
    net.set_training(True)

    def emit(event, epoch, step):
        if on_step is not None:
            on_step({"event": event, "epoch": epoch, "step": step, "net": net})

    def step_loss(x, y, history, epoch, phase):
        logits = net.forward_logits(Tensor(x))
        loss = cross_entropy(logits, y)
        val = loss.item()
        if not np.isfinite(val):
            raise NumericFault(
                f"non-finite {phase} loss at epoch {epoch}", history=history)
        loss.backward()
        return val, logits.data

    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = cosine_lr(sched, min(epoch, sched.total_epochs))
        w_opt.set_lr(lr)
        tb = _batches(len(xt), config.batch_size, rng)
        sb = _batches(len(xs), config.batch_size, rng)
        run_t, run_s = _RunningSplit(), _RunningSplit()
        for i in range(max(len(tb), len(sb))):
            sidx = sb[i % len(sb)]
            tidx = tb[i % len(tb)]

            emit("pre_alpha", epoch, i)
            val, logits = step_loss(xs[sidx], ys[sidx], history, epoch, "search")
            a_opt.step()
            w_opt.zero_grad()
            a_opt.zero_grad()
            run_s.add(val, ys[sidx], logits)
            emit("post_alpha", epoch, i)

            emit("pre_weight", epoch, i)
            val, logits = step_loss(xt[tidx], yt[tidx], history, epoch, "train")
            if config.grad_clip > 0:
                clip_grad_norm(weights, config.grad_clip)
            w_opt.step()
            w_opt.zero_grad()
            a_opt.zero_grad()
            run_t.add(val, yt[tidx], logits)
            emit("post_weight", epoch, i)

        s_loss, s_ua = run_s.summary()
        t_loss, t_ua = run_t.summary()
        ent_cnn, ent_seq = _component_entropies(net)
        history.append(EpochStats(epoch, s_loss, s_ua, t_loss, t_ua, lr,
                                  ent_cnn, ent_seq,
                                  time.perf_counter() - t0))
    return history


def write_history_csv(history: list[EpochStats], path) -> None:
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        lines.append(",".join([
            str(row.epoch),
            repr(row.search_loss), repr(row.search_ua),
            repr(row.train_loss), repr(row.train_ua),
            repr(row.lr), repr(row.entropy_cnn), repr(row.entropy_seqnn)]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
