"""Search and training configuration.

One dataclass carries every tunable the system exposes; commands and file
formats echo subsets of it. Scope strings refer to the SeqNN catalog; the
CNN catalog is always searched in full.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ContractViolation, DataError
from .ops import SEQNN_OPS

__all__ = ["SearchConfig"]


@dataclass
class SearchConfig:
    C: int = 4                 # CNN cells
    N: int = 2                 # SeqNN cells
    B_cnn: int = 4             # intermediate nodes per CNN cell
    B_seqnn: int = 4           # intermediate nodes per SeqNN cell
    channels: int = 16         # CNN working width
    hidden: int = 64           # SeqNN working width
    classes: int = 4
    seq_scope: tuple = tuple(SEQNN_OPS)
    epochs: int = 300
    batch_size: int = 16
    lr_max: float = 0.025
    lr_min: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 3e-4
    arch_lr: float = 3e-4
    arch_beta1: float = 0.9
    arch_beta2: float = 0.999
    arch_weight_decay: float = 1e-3
    grad_clip: float = 0.0     # 0 disables clipping; > 0 caps global grad norm
    dropout: float = 0.3       # derived-model head dropout
    time_pool: str = "mean"
    seed: int = 0
    baseline_channels: int = 8
    baseline_dense: int = 64
    baseline_lstm: int = 128

    def __post_init__(self):
        self.seq_scope = tuple(self.seq_scope)
        self.validate()

    def validate(self) -> None:
        if self.C < 0 or self.N < 0 or self.C + self.N < 1:
            raise ContractViolation("need C >= 0, N >= 0 and at least one cell")
        if self.B_cnn < 1 or self.B_seqnn < 1:
            raise ContractViolation("cells need at least one intermediate node")
        if self.channels < 1 or self.hidden < 1 or self.classes < 2:
            raise ContractViolation("widths must be positive, classes >= 2")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch_size must be positive")
        if not (0.0 <= self.dropout < 1.0) or self.grad_clip < 0.0:
            raise ContractViolation("dropout in [0, 1), grad_clip >= 0")
        if self.time_pool != "mean":
            raise ContractViolation(f"unknown time_pool {self.time_pool!r}")
        allowed = set(SEQNN_OPS) | {"skip_connect", "none"}
        bad = [s for s in self.seq_scope if s not in allowed]
        if bad or not self.seq_scope:
            raise ContractViolation(f"invalid SeqNN scope entries: {bad}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seq_scope"] = list(self.seq_scope)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise DataError(f"unknown config keys: {unknown}")
        kwargs = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if f.name == "seq_scope":
                kwargs[f.name] = tuple(v)
            elif isinstance(f.default, bool):
                kwargs[f.name] = bool(v)
            elif isinstance(f.default, int):
                kwargs[f.name] = int(v)
            elif isinstance(f.default, float):
                kwargs[f.name] = float(v)
            else:
                kwargs[f.name] = v
        try:
            return cls(**kwargs)
        except (TypeError, ValueError, ContractViolation) as exc:
            raise DataError(f"bad config value: {exc}") from exc
