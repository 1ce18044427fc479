"""Group-rational KAN layers.

The I input channels are split into k contiguous groups; every channel in
group g passes through the same rational function phi_g, and the
activated channels are mixed by a scalar weight per edge:

    out[o] = sum_i w[i, o] * phi_{i // (I / k)}(x[i])  (+ bias[o])

Rationals use the pole-free form P(x) / (1 + |b_1 x + ... + b_n x^n|).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import tensor as T
from .errors import ContractError, DimensionError, FittingError, InitializationError
from .nn import Module
from .tensor import Tensor

DEFAULT_NUM_ORDER = 5
DEFAULT_DEN_ORDER = 4
DEFAULT_GROUPS = 8
GAIN_SAMPLES = 1_000_000
GAIN_SEED = 20240917


@dataclass
class RationalFn:
    """Coefficients of P(x) / (1 + |sum_{j>=1} b_j x^j|).

    ``numerator`` holds a_0..a_m, ``denominator`` holds b_1..b_n.
    """

    numerator: np.ndarray
    denominator: np.ndarray

    def __post_init__(self):
        self.numerator = np.atleast_1d(np.asarray(self.numerator, dtype=np.float64))
        self.denominator = np.asarray(self.denominator, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(self.numerator)) and np.all(np.isfinite(self.denominator))):
            raise ContractError("rational coefficients must be finite")

    @property
    def orders(self):
        return len(self.numerator) - 1, len(self.denominator)

    @classmethod
    def identity(cls, m=DEFAULT_NUM_ORDER, n=DEFAULT_DEN_ORDER):
        if m < 1:
            raise ContractError("the identity needs a numerator of order >= 1")
        a = np.zeros(m + 1)
        a[1] = 1.0
        return cls(a, np.zeros(n))

    def __call__(self, x):
        return _rational_values(np.asarray(x, dtype=np.float64), self.numerator, self.denominator)[0]


def _horner(x, coeffs):
    """Value and derivative of sum_j coeffs[j] x^j.

    ``coeffs`` is a sequence whose items broadcast against ``x``.
    """
    p = np.zeros_like(x)
    dp = np.zeros_like(x)
    for c in reversed(coeffs):
        dp = dp * x + p
        p = p * x + c
    return p, dp


def _rational_values(x, a, b):
    """P/Q plus the intermediates the backward rule needs.

    ``a`` and ``b`` carry the coefficient index on their last axis and
    broadcast against ``x`` on the others.
    """
    p, dp = _horner(x, [a[..., j] for j in range(a.shape[-1])])
    if b.shape[-1]:
        s, ds = _horner(x, [np.zeros_like(b[..., 0])] + [b[..., j] for j in range(b.shape[-1])])
    else:
        s = ds = np.zeros_like(x)
    q = 1.0 + np.abs(s)
    return p / q, p, dp, s, ds, q


def group_rational(x, numerator, denominator):
    """Apply group g's rational to channels [g * I/k, (g + 1) * I/k) of the last axis.

    ``numerator`` is [k, m + 1] and ``denominator`` is [k, n].
    """
    x, a, b = T.as_tensor(x), T.as_tensor(numerator), T.as_tensor(denominator)
    k = a.shape[0]
    width = x.shape[-1]
    if b.shape[0] != k or width % k:
        raise DimensionError(f"{width} channels cannot be split into {k} groups (denominator rows {b.shape[0]})")
    xg = x.data.reshape(x.shape[:-1] + (k, width // k))
    av = a.data[:, None, :]
    bv = b.data[:, None, :]
    y, p, dp, s, ds, q = _rational_values(xg, av, bv)
    sign = np.sign(s)

    def backward(g):
        g = g.reshape(xg.shape)
        gx = ga = gb = None
        if x.requires_grad:
            gx = (g * (dp / q - p * sign * ds / (q * q))).reshape(x.shape)
        reduce_axes = tuple(range(g.ndim - 2)) + (g.ndim - 1,)
        if a.requires_grad:
            ga = np.empty_like(a.data)
            scaled = g / q
            power = np.ones_like(xg)
            for j in range(a.shape[1]):
                ga[:, j] = scaled.sum(axis=reduce_axes) if j == 0 else (scaled * power).sum(axis=reduce_axes)
                power = power * xg
        if b.requires_grad:
            gb = np.empty_like(b.data)
            scaled = -g * p * sign / (q * q)
            power = xg
            for j in range(b.shape[1]):
                gb[:, j] = (scaled * power).sum(axis=reduce_axes)
                power = power * xg
        return gx, ga, gb

    return Tensor.from_op(y.reshape(x.shape), (x, a, b), backward)


def rational_eval(fn: RationalFn, x):
    """Evaluate one rational function elementwise; differentiable in ``x``."""
    x = T.as_tensor(x)
    flat = x.reshape(x.shape + (1,))
    a = Tensor(fn.numerator[None, :])
    b = Tensor(fn.denominator[None, :])
    return group_rational(flat, a, b).reshape(x.shape)


def edge_sum(act, weight):
    """out[..., o] = sum_i act[..., i] * weight[i, o], accumulated in ascending i.

    The fixed accumulation order makes the result bitwise reproducible by
    any other ascending per-edge summation.
    """
    act, weight = T.as_tensor(act), T.as_tensor(weight)
    if act.shape[-1] != weight.shape[0]:
        raise DimensionError(f"edge_sum shape mismatch: {act.shape} with weights {weight.shape}")
    a2 = act.data.reshape(-1, act.shape[-1])
    out = np.zeros((a2.shape[0], weight.shape[1]))
    for i in range(a2.shape[1]):
        out += a2[:, i : i + 1] * weight.data[i]

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        ga = (g2 @ weight.data.T).reshape(act.shape) if act.requires_grad else None
        gw = a2.T @ g2 if weight.requires_grad else None
        return ga, gw

    return Tensor.from_op(out.reshape(act.shape[:-1] + (weight.shape[1],)), (act, weight), backward)


class GrKanLayer(Module):
    """Grouped rational activations followed by per-edge scalar weights."""

    def __init__(self, in_features, out_features, groups=DEFAULT_GROUPS, activation=None, weight=None, bias=True):
        if in_features % groups:
            raise DimensionError(f"group count {groups} must divide input width {in_features}")
        activation = activation or RationalFn.identity()
        self.in_features, self.out_features, self.groups = in_features, out_features, groups
        self.numerator = Tensor(np.tile(activation.numerator, (groups, 1)), requires_grad=True)
        self.denominator = Tensor(np.tile(activation.denominator, (groups, 1)), requires_grad=True)
        if weight is None:
            weight = np.zeros((in_features, out_features))
        self.weight = Tensor(weight, requires_grad=True)
        if self.weight.shape != (in_features, out_features):
            raise DimensionError(f"weight must have shape {(in_features, out_features)}, got {self.weight.shape}")
        self.bias = None
        if bias is not None and bias is not False:
            self.bias = Tensor(np.zeros(out_features) if bias is True else bias, requires_grad=True)
            if self.bias.shape != (out_features,):
                raise DimensionError(f"bias must have shape {(out_features,)}, got {self.bias.shape}")
        self.gain = None

    @property
    def group_size(self):
        return self.in_features // self.groups

    def group_of(self, channel):
        return channel // self.group_size

    def rational(self, group):
        """Snapshot of one group's rational function."""
        return RationalFn(self.numerator.data[group].copy(), self.denominator.data[group].copy())

    def activate(self, x):
        return group_rational(x, self.numerator, self.denominator)

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"GrKanLayer expects width {self.in_features}, got input shape {x.shape}")
        out = edge_sum(self.activate(x), self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out

    def forward_summation(self, x):
        """Literal per-edge double sum, evaluated without the tape.

        Looks up each channel's group individually rather than reshaping;
        used to cross-check :meth:`forward`.
        """
        x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.in_features)
        out = np.zeros((x2.shape[0], self.out_features))
        for i in range(self.in_features):
            g = self.group_of(i)
            phi = _rational_values(x2[:, i], self.numerator.data[g], self.denominator.data[g])[0]
            out += phi[:, None] * self.weight.data[i]
        if self.bias is not None:
            out = out + self.bias.data
        return out.reshape(lead + (self.out_features,))


def estimate_gain(activation: RationalFn, samples=GAIN_SAMPLES, seed=GAIN_SEED):
    """Monte Carlo estimate of E[phi(z)^2] for z ~ N(0, 1)."""
    z = np.random.default_rng(seed).standard_normal(samples)
    values = activation(z)
    return float(np.mean(values * values))


def variance_preserving_init(in_features, out_features, groups=DEFAULT_GROUPS, activation=None, seed=0, bias=True):
    """Draw weights ~ N(0, 1 / (gain * I)) so unit-variance inputs give unit-variance outputs."""
    activation = activation or silu_rational()
    gain = estimate_gain(activation)
    if gain < 1e-12:
        raise InitializationError(f"activation gain {gain:.3g} is degenerate; cannot scale weights")
    rng = np.random.default_rng(seed)
    weight = rng.normal(0.0, np.sqrt(1.0 / (gain * in_features)), size=(in_features, out_features))
    layer = GrKanLayer(in_features, out_features, groups, activation, weight, bias=bias)
    layer.gain = gain
    return layer


@dataclass
class RationalFit:
    rational: RationalFn
    max_error: float
    condition: float


def fit_rational_to_function(target, m=DEFAULT_NUM_ORDER, n=DEFAULT_DEN_ORDER, domain=(-3.0, 3.0), samples=1000):
    """Least-squares fit of the safe rational form to ``target`` on ``domain``.

    A linearized fit (assuming the denominator polynomial is non-negative)
    seeds a nonlinear refinement of the exact safe-form residual.  The
    reported error is the max deviation on a 10x denser grid.
    """
    if m < 0 or n < 0:
        raise ContractError("rational orders must be non-negative")
    lo, hi = map(float, domain)
    x = np.linspace(lo, hi, samples)
    y = np.asarray(target(x), dtype=np.float64) * np.ones_like(x)
    if not np.all(np.isfinite(y)):
        raise FittingError("target produced non-finite values on the fit domain")
    unknowns = m + 1 + n
    distinct = len(np.unique(x))
    design = np.hstack([x[:, None] ** np.arange(m + 1), -y[:, None] * x[:, None] ** np.arange(1, n + 1)])
    sv = np.linalg.svd(design, compute_uv=False)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if distinct < unknowns:
        raise FittingError(
            f"normal equations are singular: {distinct} distinct samples for {unknowns} unknowns "
            f"(condition number {condition:.3g})"
        )
    theta, *_ = np.linalg.lstsq(design, y, rcond=None)
    fn = RationalFn(theta[: m + 1], theta[m + 1 :])

    dense = np.linspace(lo, hi, 10 * samples)
    dense_y = np.asarray(target(dense), dtype=np.float64) * np.ones_like(dense)
    err = float(np.max(np.abs(fn(dense) - dense_y)))
    if n > 0 and err > 1e-12:

        def residual(params):
            return _rational_values(x, params[: m + 1], params[m + 1 :])[0] - y

        refined = least_squares(residual, theta, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        candidate = RationalFn(refined.x[: m + 1], refined.x[m + 1 :])
        cand_err = float(np.max(np.abs(candidate(dense) - dense_y)))
        if cand_err < err:
            fn, err = candidate, cand_err
    return RationalFit(fn, err, condition)


def _silu(x):
    return x / (1.0 + np.exp(-x))


@functools.lru_cache(maxsize=None)
def _cached_silu_fit(m, n):
    return fit_rational_to_function(_silu, m, n)


def silu_rational(m=DEFAULT_NUM_ORDER, n=DEFAULT_DEN_ORDER):
    """Rational approximation of SiLU on [-3, 3] (fresh copy)."""
    fit = _cached_silu_fit(m, n)
    return RationalFn(fit.rational.numerator.copy(), fit.rational.denominator.copy())


def load_from_mlp(weight, bias, groups=DEFAULT_GROUPS, m=DEFAULT_NUM_ORDER, n=DEFAULT_DEN_ORDER, activation="identity"):
    """Build a GR-KAN layer that reproduces ``x @ weight + bias``.

    Every group's rational is fitted to the identity (or to SiLU when
    ``activation="silu"``), and the linear weights are copied unchanged.
    """
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2:
        raise DimensionError(f"weight must be a matrix, got shape {weight.shape}")
    in_features, out_features = weight.shape
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (out_features,):
            raise DimensionError(f"bias shape {bias.shape} does not match weight shape {weight.shape}")
    if activation == "identity":
        fit = fit_rational_to_function(lambda x: x, m, n)
    elif activation == "silu":
        fit = _cached_silu_fit(m, n)
    else:
        raise ContractError(f"unknown activation {activation!r}")
    layer = GrKanLayer(in_features, out_features, groups, fit.rational, weight.copy(), bias=bias if bias is not None else False)
    layer.fit_error = fit.max_error
    return layer


def mlp_load_bound(weight, fit_error):
    """Worst-case |GR-KAN(x) - linear(x)| on the fit domain, given the rational fit error."""
    return float(fit_error * np.abs(np.asarray(weight)).sum(axis=0).max())
