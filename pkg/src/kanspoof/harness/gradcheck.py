"""Finite-difference gradient audits for the differentiable building blocks."""

from __future__ import annotations

import numpy as np

from ..grkan import GrKanLayer
from ..kan import KnotGrid, kan_init
from ..model import ConformerConfig, ModelConfig, ProjectorConfig, SsdModel
from ..tensor import Tensor, grad_check

BOUNDS = {"kan": 1e-5, "grkan": 1e-5, "model": 1e-4}
KINK_MARGIN = 1e-3


def check_kan(config):
    """One KAN layer (k=3, G=5, 4 -> 4); inputs span the grid so every basis has support."""
    rng = np.random.default_rng(100 + config)
    layer = kan_init(4, 4, KnotGrid(-3.0, 3.0, 5, 3), seed=config)
    layer.w_s.data = rng.normal(1.0, 0.3, size=(4, 4))
    x = Tensor(rng.uniform(-2.95, 2.95, (32, 4)))
    weights = Tensor(rng.normal(size=(32, 4)))

    def loss(x, c, w_b, w_s):
        layer.c, layer.w_b, layer.w_s = c, w_b, w_s
        return (layer(x) * weights).sum()

    return grad_check(loss, [x, layer.c, layer.w_b, layer.w_s])


def _away_from_kink(layer, x, rng):
    for _ in range(100):
        s = np.zeros_like(x)
        for i in range(layer.in_features):
            b = layer.denominator.data[layer.group_of(i)]
            s[:, i] = sum(b[j] * x[:, i] ** (j + 1) for j in range(len(b)))
        bad = np.abs(s) < KINK_MARGIN
        if not bad.any():
            break
        x[bad] = rng.uniform(-2, 2, int(bad.sum()))
    return x


def check_grkan(config):
    """One GR-KAN layer (8 -> 3) with random rationals, inputs kept off the |.| kink."""
    rng = np.random.default_rng(200 + config)
    groups = (1, 2, 4, 8)[config % 4]
    layer = GrKanLayer(8, 3, groups, weight=rng.normal(size=(8, 3)))
    layer.numerator.data = rng.normal(size=layer.numerator.shape)
    layer.denominator.data = rng.normal(size=layer.denominator.shape)
    layer.bias.data = rng.normal(size=3)
    x = _away_from_kink(layer, rng.uniform(-2, 2, (6, 8)), rng)
    weights = Tensor(rng.normal(size=(6, 3)))

    def loss(x, a, b, w, bias):
        layer.numerator, layer.denominator, layer.weight, layer.bias = a, b, w, bias
        return (layer(x) * weights).sum()

    return grad_check(loss, [Tensor(x), layer.numerator, layer.denominator, layer.weight, layer.bias])


def micro_model_config(kind):
    return ModelConfig(
        ProjectorConfig(kind=kind, in_dim=6, out_dim=8, groups=2),
        ConformerConfig(blocks=1, model_dim=8, heads=2, kernel_size=3, ff_expansion=2),
    )


def check_model(config):
    """Cross-entropy of a micro detector (D=6, D'=8, L=1, T=3), alternating mlp/grkan projectors."""
    kind = "mlp" if config % 2 == 0 else "grkan"
    model = SsdModel(micro_model_config(kind), seed=config)
    feats = Tensor(np.random.default_rng(config).normal(size=(2, 3, 6)))
    # a 3e-6 step keeps the truncation error of high-order rational terms small
    return grad_check(lambda f, *ps: model.loss(f, [0, 1]), [feats] + model.parameters(), h=3e-6)


CHECKS = {"kan": check_kan, "grkan": check_grkan, "model": check_model}


def run(module="all", configs=10):
    """Map each audited module to (worst relative error, bound)."""
    names = list(CHECKS) if module == "all" else [module]
    return {name: (max(CHECKS[name](c) for c in range(configs)), BOUNDS[name]) for name in names}
