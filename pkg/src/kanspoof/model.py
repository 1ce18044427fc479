"""Synthetic-speech detector: projector, classification token, Conformer stack, binary head.

Input features [B, T, D] are projected per frame to width D' (MLP, GR-KAN or
KAN followed by SeLU), a learnable classification token is inserted at
``CLS_INDEX``, L Conformer blocks encode the sequence, and a linear head
reads the token's final state.  The detection score is
``logit(bonafide) - logit(spoof)``; higher means more bonafide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .grkan import DEFAULT_DEN_ORDER, DEFAULT_GROUPS, DEFAULT_NUM_ORDER, RationalFn, silu_rational, variance_preserving_init
from .kan import KnotGrid, kan_init
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor

CLS_INDEX = 0
SPOOF, BONAFIDE = 0, 1
PROJECTOR_KINDS = ("mlp", "grkan", "kan")


@dataclass
class ProjectorConfig:
    kind: str = "mlp"
    in_dim: int = 128
    out_dim: int = 64
    # grkan
    groups: int = DEFAULT_GROUPS
    num_order: int = DEFAULT_NUM_ORDER
    den_order: int = DEFAULT_DEN_ORDER
    rational_init: str = "silu"
    # kan
    grid_min: float = -3.0
    grid_max: float = 3.0
    grid_intervals: int = 5
    spline_order: int = 3

    def validate(self):
        if self.kind not in PROJECTOR_KINDS:
            raise ContractError(f"projector kind must be one of {PROJECTOR_KINDS}, got {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ContractError("projector widths must be positive")
        if self.kind == "grkan":
            if self.in_dim % self.groups:
                raise ContractError(f"group count {self.groups} must divide feature width {self.in_dim}")
            if self.rational_init not in ("silu", "identity"):
                raise ContractError(f"rational_init must be 'silu' or 'identity', got {self.rational_init!r}")
        if self.kind == "kan":
            self.grid()
        return self

    def grid(self):
        return KnotGrid(self.grid_min, self.grid_max, self.grid_intervals, self.spline_order)


@dataclass
class ConformerConfig:
    blocks: int = 2
    model_dim: int = 64
    heads: int = 4
    kernel_size: int = 15
    ff_expansion: int = 4
    dropout: float = 0.1
    positional_encoding: bool = False

    def validate(self):
        if self.blocks < 1:
            raise ContractError("need at least one Conformer block")
        if self.heads < 1 or self.model_dim % self.heads:
            raise ContractError(f"model_dim {self.model_dim} is not divisible by {self.heads} heads")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ContractError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")
        return self


@dataclass
class ModelConfig:
    projector: ProjectorConfig = field(default_factory=ProjectorConfig)
    conformer: ConformerConfig = field(default_factory=ConformerConfig)

    def validate(self):
        self.projector.validate()
        self.conformer.validate()
        if self.projector.out_dim != self.conformer.model_dim:
            raise ContractError(
                f"projector width {self.projector.out_dim} must equal Conformer width {self.conformer.model_dim}"
            )
        return self


def _seed(rng):
    return int(rng.integers(0, 2**63 - 1))


class Projector(Module):
    def __init__(self, cfg: ProjectorConfig, rng):
        cfg.validate()
        self.cfg = cfg
        if cfg.kind == "mlp":
            self.inner = Linear(cfg.in_dim, cfg.out_dim, rng)
        elif cfg.kind == "grkan":
            if cfg.rational_init == "silu":
                activation = silu_rational(cfg.num_order, cfg.den_order)
            else:
                activation = RationalFn.identity(cfg.num_order, cfg.den_order)
            self.inner = variance_preserving_init(cfg.in_dim, cfg.out_dim, cfg.groups, activation, seed=_seed(rng))
        else:
            self.inner = kan_init(cfg.in_dim, cfg.out_dim, cfg.grid(), seed=_seed(rng))

    def forward(self, x):
        if x.shape[-1] != self.cfg.in_dim:
            raise DimensionError(f"projector expects feature width {self.cfg.in_dim}, got shape {x.shape}")
        return T.selu(self.inner(x))


def project(projector: Projector, features):
    """SeLU(inner(X)) applied frame by frame: [B, T, D] -> [B, T, D']."""
    return projector(T.as_tensor(features))


class FeedForward(Module):
    def __init__(self, dim, expansion, dropout, rng):
        self.norm = LayerNorm(dim)
        self.up = Linear(dim, dim * expansion, rng)
        self.down = Linear(dim * expansion, dim, rng)
        self.dropout = dropout

    def forward(self, x, rng=None):
        h = T.silu(self.up(self.norm(x)))
        h = T.dropout(h, self.dropout, rng)
        return T.dropout(self.down(h), self.dropout, rng)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product attention over the sequence axis, no mask."""

    def __init__(self, dim, heads, rng):
        if dim % heads:
            raise ContractError(f"model_dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.query = Linear(dim, dim, rng)
        # a key bias only shifts each score row by a constant, which softmax cancels
        self.key = Linear(dim, dim, rng, bias=False)
        self.value = Linear(dim, dim, rng)
        self.output = Linear(dim, dim, rng)
        self.last_attention = None

    def _split(self, x):
        b, s, d = x.shape
        return x.reshape(b, s, self.heads, d // self.heads).transpose(0, 2, 1, 3)

    def forward(self, x):
        b, s, d = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = (q @ T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(d // self.heads))
        attention = T.softmax(scores, axis=-1)
        self.last_attention = attention.data
        context = (attention @ v).transpose(0, 2, 1, 3).reshape(b, s, d)
        return self.output(context)


def mhsa_forward(mhsa: MultiHeadSelfAttention, x):
    return mhsa(T.as_tensor(x))


class ConvModule(Module):
    """Pointwise conv -> GLU -> depthwise conv -> norm -> Swish -> pointwise conv."""

    def __init__(self, dim, kernel_size, dropout, rng):
        self.norm = LayerNorm(dim)
        self.pointwise_in = Linear(dim, 2 * dim, rng)
        bound = 1.0 / np.sqrt(kernel_size)
        self.depthwise = Tensor(rng.uniform(-bound, bound, size=(dim, kernel_size)), requires_grad=True)
        self.depthwise_bias = Tensor(np.zeros(dim), requires_grad=True)
        self.conv_norm = LayerNorm(dim)
        self.pointwise_out = Linear(dim, dim, rng)
        self.dim = dim
        self.dropout = dropout

    def forward(self, x, rng=None):
        h = self.pointwise_in(self.norm(x))
        h = h[..., : self.dim] * T.sigmoid(h[..., self.dim :])
        h = T.depthwise_conv1d(h, self.depthwise) + self.depthwise_bias
        h = T.silu(self.conv_norm(h))
        return T.dropout(self.pointwise_out(h), self.dropout, rng)


class ConformerBlock(Module):
    def __init__(self, cfg: ConformerConfig, rng):
        d = cfg.model_dim
        self.ff1 = FeedForward(d, cfg.ff_expansion, cfg.dropout, rng)
        self.attn_norm = LayerNorm(d)
        self.attention = MultiHeadSelfAttention(d, cfg.heads, rng)
        self.conv = ConvModule(d, cfg.kernel_size, cfg.dropout, rng)
        self.ff2 = FeedForward(d, cfg.ff_expansion, cfg.dropout, rng)
        self.final_norm = LayerNorm(d)
        self.dim = d
        self.dropout = cfg.dropout

    def forward(self, x, rng=None):
        if x.shape[-1] != self.dim:
            raise DimensionError(f"Conformer block expects width {self.dim}, got shape {x.shape}")
        x = x + 0.5 * self.ff1(x, rng)
        x = x + T.dropout(self.attention(self.attn_norm(x)), self.dropout, rng)
        x = x + self.conv(x, rng)
        x = x + 0.5 * self.ff2(x, rng)
        return self.final_norm(x)


def conformer_block_forward(block: ConformerBlock, x, rng=None):
    return block(T.as_tensor(x), rng)


def sinusoidal_encoding(length, dim):
    pos = np.arange(length)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates)[:, : dim // 2]
    return table


class SsdModel(Module):
    def __init__(self, config: ModelConfig | None = None, seed=0):
        self.config = (config or ModelConfig()).validate()
        rng = np.random.default_rng(seed)
        d = self.config.conformer.model_dim
        self.projector = Projector(self.config.projector, rng)
        self.cls = Tensor(rng.normal(0.0, 0.02, size=(1, d)), requires_grad=True)
        self.blocks = [ConformerBlock(self.config.conformer, rng) for _ in range(self.config.conformer.blocks)]
        self.head = Linear(d, 2, rng)

    def prepend_cls(self, x):
        b, _, d = x.shape
        if d != self.cls.shape[1]:
            raise DimensionError(f"token width {self.cls.shape[1]} does not match sequence width {d}")
        token = T.broadcast_to(T.reshape(self.cls, (1, 1, d)), (b, 1, d))
        return T.concat([token, x], axis=1)

    def encode(self, features, rng=None):
        x = self.prepend_cls(project(self.projector, features))
        if self.config.conformer.positional_encoding:
            x = x + Tensor(sinusoidal_encoding(x.shape[1], x.shape[2]))
        for block in self.blocks:
            x = block(x, rng)
        return x

    def classify(self, encoded):
        return self.head(encoded[:, CLS_INDEX, :])

    def logits(self, features, rng=None):
        features = T.as_tensor(features)
        if features.ndim != 3:
            raise DimensionError(f"features must be [batch, frames, width], got shape {features.shape}")
        return self.classify(self.encode(features, rng))

    def forward(self, features, rng=None):
        """Detection scores [B]: logit(bonafide) - logit(spoof)."""
        return detection_score(self.logits(features, rng))

    def loss(self, features, labels, rng=None):
        """Mean cross-entropy against integer labels (1 = bonafide)."""
        labels = np.asarray(labels, dtype=np.int64)
        logp = T.log_softmax(self.logits(features, rng), axis=-1)
        picked = logp[np.arange(len(labels)), labels]
        return -picked.mean()

    def parameter_groups(self):
        """Parameter names bucketed by pipeline stage."""
        groups = {}
        for name, _ in self.named_parameters():
            top = name.split(".")[0]
            key = f"blocks.{name.split('.')[1]}" if top == "blocks" else top
            groups.setdefault(key, []).append(name)
        return groups


def prepend_cls(model: SsdModel, x):
    return model.prepend_cls(T.as_tensor(x))


def detection_score(logits):
    return logits[:, BONAFIDE] - logits[:, SPOOF]


def classify(model: SsdModel, encoded):
    return model.classify(T.as_tensor(encoded))


def model_forward(model: SsdModel, features, rng=None):
    return model(features, rng)
