"""The one-shot search network.

Layout: a 3x3 stem lifts the single-channel spectrogram to the CNN working
width, C CNN cells follow (each fed the two previous cell outputs, with
reduction cells at floor(C/3) and floor(2C/3)), a flatten bridge turns the
CNN map into a sequence, N SeqNN cells refine it, and a mean over time plus
a dense layer produce class logits.

Architecture coefficients live here, one table per cell kind that actually
exists (normal CNN, reduction CNN, SeqNN), shared by all cells of that
kind. They are kept out of params() so the two optimizer groups cannot
overlap.
"""

from __future__ import annotations

import numpy as np

from .cell import Cell, augment_scope, num_edges
from .config import SearchConfig
from .errors import ContractViolation
from .ops import CNN_OPS, BatchNorm2d, Linear, Module, _uniform
from .tensor import Tensor, concat, conv2d, cross_entropy, relu, softmax

__all__ = ["Supernet", "build_supernet", "flatten_bridge", "param_partition",
           "reduction_positions", "Stem", "ReLUConvNorm", "FactorizedReduce"]


def reduction_positions(c: int) -> set[int]:
    """Reduction cells sit a third and two thirds of the way in."""
    if c <= 0:
        return set()
    return {c // 3, (2 * c) // 3} & set(range(c))


def flatten_bridge(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, T, F) with T = H and F = C * W.

    Rows of the spatial map become time steps; each step carries all
    channels of its row. The mel spectrogram puts time on the width axis
    upstream, but after the stem and reductions the H axis is the longer
    one and serves as the sequence axis.
    """
    if x.ndim != 4:
        raise ContractViolation(f"flatten_bridge expects 4-D input, got {x.shape}")
    b, c, h, w = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, h, c * w)


class Stem(Module):
    """3x3 convolution from 1 channel to the working width, then norm."""

    def __init__(self, channels: int, rng: np.random.Generator, affine: bool):
        self.weight = _uniform(rng, (channels, 1, 3, 3), 9)
        self.norm = BatchNorm2d(channels, affine)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(conv2d(x, self.weight, padding=1))


class ReLUConvNorm(Module):
    """1x1 projection adapter: ReLU, pointwise conv, norm."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 affine: bool):
        self.weight = _uniform(rng, (cout, cin, 1, 1), cin)
        self.norm = BatchNorm2d(cout, affine)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(conv2d(relu(x), self.weight))


class FactorizedReduce(Module):
    """Halve the spatial size without losing pixels: two offset stride-2
    pointwise convs, concatenated along channels, then norm."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 affine: bool):
        c1 = cout // 2
        self.w1 = _uniform(rng, (c1, cin, 1, 1), cin)
        self.w2 = _uniform(rng, (cout - c1, cin, 1, 1), cin)
        self.norm = BatchNorm2d(cout, affine)

    def forward(self, x: Tensor) -> Tensor:
        x = relu(x)
        a = conv2d(x, self.w1, stride=2)
        b = conv2d(x[:, :, 1:, 1:], self.w2, stride=2)
        return self.norm(concat([a, b], axis=1))


class Supernet(Module):
    def __init__(self, config: SearchConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        cfg = config
        affine = False      # search runs with affine norms off
        self.stem = Stem(cfg.channels, rng, affine)

        self.cnn_pre0: list[Module] = []
        self.cnn_pre1: list[Module] = []
        self.cnn_cells: list[Cell] = []
        reductions = reduction_positions(cfg.C)
        cpp, cp = cfg.channels, cfg.channels
        reduction_prev = False
        for k in range(cfg.C):
            red = k in reductions
            if reduction_prev:
                self.cnn_pre0.append(FactorizedReduce(cpp, cfg.channels, rng, affine))
            else:
                self.cnn_pre0.append(ReLUConvNorm(cpp, cfg.channels, rng, affine))
            self.cnn_pre1.append(ReLUConvNorm(cp, cfg.channels, rng, affine))
            self.cnn_cells.append(Cell("cnn", CNN_OPS, cfg.channels, cfg.B_cnn,
                                       red, rng, affine=affine))
            cpp, cp = cp, cfg.B_cnn * cfg.channels
            reduction_prev = red
        self._cnn_out_channels = cp if cfg.C > 0 else cfg.channels

        self.seq_scope = augment_scope(cfg.seq_scope)
        self.seq_pre0: list[Module] = []
        self.seq_pre1: list[Module] = []
        self.seq_cells: list[Cell] = []
        # the sequence stage's input width depends on the input spatial
        # size, so it is built on first use (or eagerly via build_supernet)
        self._seq_built = False
        self._rng = rng

        self.head: Linear | None = None

        # alpha tables, one per existing cell kind (dict keeps them out of
        # params(), so the weight optimizer never sees them)
        self._alphas: dict[str, Tensor] = {}
        has_normal = any(not c.reduction for c in self.cnn_cells)
        has_reduce = any(c.reduction for c in self.cnn_cells)
        if has_normal:
            self._alphas["cnn_normal"] = Tensor(
                rng.normal(0.0, 1e-3, (num_edges(cfg.B_cnn), len(CNN_OPS))),
                requires_grad=True)
        if has_reduce:
            self._alphas["cnn_reduce"] = Tensor(
                rng.normal(0.0, 1e-3, (num_edges(cfg.B_cnn), len(CNN_OPS))),
                requires_grad=True)
        if cfg.N > 0:
            self._alphas["seqnn"] = Tensor(
                rng.normal(0.0, 1e-3,
                           (num_edges(cfg.B_seqnn), len(self.seq_scope))),
                requires_grad=True)

    # ---- lazy sequence stage ----

    def _build_seq(self, feat: int) -> None:
        cfg = self.config
        wpp, wp = feat, feat
        for _ in range(cfg.N):
            self.seq_pre0.append(Linear(wpp, cfg.hidden, self._rng))
            self.seq_pre1.append(Linear(wp, cfg.hidden, self._rng))
            self.seq_cells.append(Cell("seqnn", self.seq_scope, cfg.hidden,
                                       cfg.B_seqnn, False, self._rng))
            wpp, wp = wp, cfg.hidden
        self.head = Linear(wp, cfg.classes, self._rng)
        self._seq_built = True
        self._seq_feat = feat

    # ---- alpha access ----

    def alpha(self, kind: str) -> Tensor | None:
        return self._alphas.get(kind)

    def arch_params(self) -> list[Tensor]:
        return [self._alphas[k] for k in ("cnn_normal", "cnn_reduce", "seqnn")
                if k in self._alphas]

    def alpha_tables(self) -> dict[str, np.ndarray]:
        """Snapshot of the coefficient tables as plain arrays."""
        return {k: v.data.copy() for k, v in self._alphas.items()}

    # ---- forward ----

    def forward_logits(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ContractViolation(
                f"supernet expects (B, 1, H, W) input, got {x.shape}")
        s = self.stem(x)
        s0 = s1 = s
        for pre0, pre1, cell in zip(self.cnn_pre0, self.cnn_pre1, self.cnn_cells):
            table = self._alphas["cnn_reduce" if cell.reduction else "cnn_normal"]
            out = cell([pre0(s0), pre1(s1)], table)
            s0, s1 = s1, out
        seq = flatten_bridge(s1)
        if not self._seq_built:
            self._build_seq(seq.shape[2])
        elif seq.shape[2] != self._seq_feat:
            raise ContractViolation(
                f"sequence stage was built for feature width {self._seq_feat}, "
                f"got {seq.shape[2]}")
        q0 = q1 = seq
        for pre0, pre1, cell in zip(self.seq_pre0, self.seq_pre1, self.seq_cells):
            out = cell([pre0(q0), pre1(q1)], self._alphas["seqnn"])
            q0, q1 = q1, out
        pooled = q1.mean(axis=1)
        return self.head(pooled)

    def forward(self, x: Tensor) -> Tensor:
        """Class probabilities; use forward_logits with cross_entropy for
        training."""
        return softmax(self.forward_logits(x), axis=-1)

    def loss(self, x: Tensor, labels: np.ndarray) -> Tensor:
        return cross_entropy(self.forward_logits(x), labels)


def build_supernet(config: SearchConfig, rng: np.random.Generator,
                   input_hw: tuple[int, int] | None = None) -> Supernet:
    """Construct the supernet; passing the input spatial size builds the
    sequence stage eagerly so all parameters exist up front."""
    net = Supernet(config, rng)
    if input_hw is not None:
        h, w = input_hw
        c = config.channels
        for k in range(config.C):
            if k in reduction_positions(config.C):
                h, w = (h + 1) // 2, (w + 1) // 2
        feat = (config.B_cnn * c if config.C > 0 else c) * w
        net._build_seq(feat)
    return net


def param_partition(net: Supernet):
    """Split trainable state into (network weights, architecture
    coefficients). The groups are disjoint and exhaustive."""
    weights = net.params()
    alphas = net.arch_params()
    return weights, alphas
