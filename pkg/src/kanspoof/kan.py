"""B-spline Kolmogorov-Arnold layers.

Each edge (i, j) of a layer carries its own univariate function

    phi_ij(x) = w_b[i, j] * silu(x) + w_s[i, j] * sum_m c[i, j, m] * B_m(x)

and output j is the sum of phi_ij(x_i) over the inputs.  All edges of a
layer share one uniform knot grid; inputs are clamped to the grid domain
before the basis is evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .nn import Module
from .tensor import Tensor


@dataclass(frozen=True)
class KnotGrid:
    t_min: float = -3.0
    t_max: float = 3.0
    intervals: int = 5
    order: int = 3

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ContractError(f"grid domain must satisfy t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.intervals < 1:
            raise ContractError(f"grid needs at least one interval, got {self.intervals}")
        if self.order < 0:
            raise ContractError(f"spline order must be non-negative, got {self.order}")

    @property
    def spacing(self):
        return (self.t_max - self.t_min) / self.intervals

    @property
    def knots(self):
        """Extended uniform knot vector of length intervals + 2 * order + 1."""
        steps = np.arange(-self.order, self.intervals + self.order + 1)
        return self.t_min + steps * self.spacing

    @property
    def n_basis(self):
        return self.intervals + self.order


def _basis_table(x, knots, order):
    """Cox-de Boor recursion.

    Returns ``(B_order, B_order_minus_1)`` with trailing axis over basis
    index; the lower-degree table is needed for the derivative.
    """
    x = np.asarray(x, dtype=np.float64)[..., None]
    t = knots
    left, right = t[:-1], t[1:]
    basis = ((x >= left) & (x < right)).astype(np.float64)
    # close the last non-degenerate interval on the right
    last = np.nonzero(right > left)[0][-1]
    basis[..., last] = np.where(x[..., 0] == t[last + 1], 1.0, basis[..., last])
    lower = basis
    for d in range(1, order + 1):
        lower = basis
        n = len(t) - d - 1
        den_l = t[d : d + n] - t[:n]
        den_r = t[d + 1 : d + 1 + n] - t[1 : 1 + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            wl = np.where(den_l > 0, (x - t[:n]) / den_l, 0.0)
            wr = np.where(den_r > 0, (t[d + 1 : d + 1 + n] - x) / den_r, 0.0)
        basis = wl * lower[..., :n] + wr * lower[..., 1 : n + 1]
    return basis, lower


def bspline_basis_from_knots(x, knots, order):
    """All B-spline basis values of degree ``order`` on an arbitrary knot vector."""
    knots = np.asarray(knots, dtype=np.float64)
    if len(knots) < order + 2:
        raise ContractError(f"{len(knots)} knots cannot support degree {order}")
    return _basis_table(x, knots, order)[0]


def _basis_derivative(lower, knots, order):
    if order == 0:
        return np.zeros(lower.shape[:-1] + (len(knots) - 1,))
    t = knots
    n = len(t) - order - 1
    left = t[order : order + n] - t[:n]
    right = t[order + 1 : order + 1 + n] - t[1 : 1 + n]
    return order * (lower[..., :n] / left - lower[..., 1 : n + 1] / right)


def bspline_basis(x, grid: KnotGrid):
    """Basis tensor of shape ``x.shape + (grid.n_basis,)``.

    ``x`` is clamped to ``[t_min, t_max]``; the gradient with respect to ``x``
    is zero outside that domain.
    """
    x = T.as_tensor(x)
    knots = grid.knots
    clamped = np.clip(x.data, grid.t_min, grid.t_max)
    basis, lower = _basis_table(clamped, knots, grid.order)

    def backward(g):
        inside = (x.data >= grid.t_min) & (x.data <= grid.t_max)
        d = _basis_derivative(lower, knots, grid.order)
        return ((g * d).sum(axis=-1) * inside,)

    return Tensor.from_op(basis, (x,), backward)


def spline_eval(x, coefficients, grid: KnotGrid):
    """sum_i c_i B_i(x), differentiable in both ``x`` and the coefficients."""
    c = T.as_tensor(coefficients)
    if c.shape[-1] != grid.n_basis:
        raise DimensionError(f"expected {grid.n_basis} spline coefficients, got {c.shape[-1]}")
    return (bspline_basis(x, grid) * c).sum(axis=-1)


def phi_eval(x, w_b, w_s, coefficients, grid: KnotGrid):
    """Single-edge activation: w_b * silu(x) + w_s * spline(x)."""
    x = T.as_tensor(x)
    return T.as_tensor(w_b) * T.silu(x) + T.as_tensor(w_s) * spline_eval(x, coefficients, grid)


class KanLayer(Module):
    """One KAN layer mapping width ``d_in`` to ``d_out``."""

    def __init__(self, d_in, d_out, grid=None, coefficients=None, w_b=None, w_s=None):
        self.d_in, self.d_out = d_in, d_out
        self.grid = grid or KnotGrid()
        nb = self.grid.n_basis
        if coefficients is None:
            coefficients = np.zeros((d_in, d_out, nb))
        self.c = Tensor(coefficients, requires_grad=True)
        self.w_b = Tensor(np.zeros((d_in, d_out)) if w_b is None else w_b, requires_grad=True)
        self.w_s = Tensor(np.ones((d_in, d_out)) if w_s is None else w_s, requires_grad=True)
        if self.c.shape != (d_in, d_out, nb):
            raise DimensionError(f"coefficients must have shape {(d_in, d_out, nb)}, got {self.c.shape}")
        for name in ("w_b", "w_s"):
            if getattr(self, name).shape != (d_in, d_out):
                raise DimensionError(f"{name} must have shape {(d_in, d_out)}")

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"KanLayer expects width {self.d_in}, got input shape {x.shape}")
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.d_in)
        nb = self.grid.n_basis
        basis = bspline_basis(x2, self.grid).reshape(-1, self.d_in * nb)
        # fold w_s into the coefficients: [d_in, d_out, nb] -> [d_in * nb, d_out]
        scaled = self.c * T.reshape(self.w_s, (self.d_in, self.d_out, 1))
        spline_weight = T.transpose(scaled, (0, 2, 1)).reshape(self.d_in * nb, self.d_out)
        out = T.silu(x2) @ self.w_b + basis @ spline_weight
        return out.reshape(lead + (self.d_out,))

    def edge(self, i, j):
        """Return phi_ij as a callable of x (for inspection and tests)."""
        return lambda x: phi_eval(x, self.w_b[i, j], self.w_s[i, j], self.c[i, j], self.grid)


def kan_init(d_in, d_out, grid=None, seed=0):
    """Seeded initialization.

    Coefficients ~ N(0, (0.1 / sqrt(G + k))^2), basis weights ~ N(0, 1 / d_in),
    spline weights = 1.
    """
    grid = grid or KnotGrid()
    rng = np.random.default_rng(seed)
    nb = grid.n_basis
    c = rng.normal(0.0, 0.1 / np.sqrt(nb), size=(d_in, d_out, nb))
    w_b = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))
    return KanLayer(d_in, d_out, grid, c, w_b, np.ones((d_in, d_out)))


class KanStack(Module):
    """Composition of KAN layers, applied first to last."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ContractError("a KAN stack needs at least one layer")
        for idx, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.d_out != b.d_in:
                raise DimensionError(f"layer {idx} outputs width {a.d_out} but layer {idx + 1} expects {b.d_in}")
        self.layers = layers

    @classmethod
    def from_widths(cls, widths, grid=None, seed=0):
        seeds = np.random.SeedSequence(seed).spawn(len(widths) - 1)
        return cls(
            kan_init(a, b, grid, int(s.generate_state(1)[0])) for a, b, s in zip(widths, widths[1:], seeds)
        )

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def kan_stack_forward(layers, x):
    stack = layers if isinstance(layers, KanStack) else KanStack(layers)
    return stack(T.as_tensor(x))
