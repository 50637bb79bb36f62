"""Arctangent-gated adaptive activation: evaluation, gradients, presets.

The activation is built in three stages.  A monotone transition

    u(x) = 1/2 + arctan(a * (x - c)) / pi

squashes the input into (0, 1).  An odds transform with a sharpness
exponent re-stretches the transition,

    v(x) = (2 / pi) * arctan((u / (1 - u)) ** p),

and an affine combination produces the final output,

    F(x) = (alpha * x + beta) * v(x) + (gamma * x + delta).

``a`` and ``p`` must stay strictly positive; they are stored as
unconstrained raw values and passed through :func:`positive_map`.

All evaluation funnels through one vectorized numpy kernel, so the batch
entry point is bit-identical to the scalar one by construction.  The
kernel never forms ``1 - u`` by subtraction and never exponentiates the
raw odds ratio: the complement side of the transition is computed as
``arctan2(1, |z|)`` and the odds power as ``exp(-|p * log_odds|)``, which
keeps every intermediate finite far beyond the ranges where a naive
transcription overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "GATE_EPS",
    "ArcGateParams",
    "GateEval",
    "GateGrad",
    "GateTape",
    "batch_eval",
    "batch_vjp",
    "eval_F",
    "eval_F_batch",
    "eval_u",
    "eval_v",
    "grad",
    "positive_map",
    "positive_map_grad",
    "preset",
    "raw_from_effective",
]

# Gate values are confined to [GATE_EPS, 1 - GATE_EPS].  GATE_EPS is the gap
# between 1.0 and the largest double below it, so the clamp only acts where
# IEEE rounding would otherwise close the open interval (0, 1).
GATE_EPS = 2.0 ** -53

_HALF_PI = math.pi / 2.0
_POS_FLOOR = 1e-6     # additive floor of the positivity map
_Z_CAP = 1e150        # |a * (x - c)| cap; keeps z*z inside double range


# ---------------------------------------------------------------------------
# positivity map for a and p
# ---------------------------------------------------------------------------

def _softplus(r: float) -> float:
    if r > 0.0:
        return r + math.log1p(math.exp(-r))
    return math.log1p(math.exp(r))


def _softplus_inv(y: float) -> float:
    # y > 0 assumed
    if y > 30.0:
        return y + math.log1p(-math.exp(-y))
    return math.log(math.expm1(y))


def positive_map(raw: float) -> float:
    """Map an unconstrained raw parameter to its strictly positive effective value.

    Softplus plus a 1e-6 floor: the result is positive for every finite raw
    value and the gradient (see :func:`positive_map_grad`) never vanishes,
    so optimizers can always move a saturated gate.
    """
    return _POS_FLOOR + _softplus(float(raw))


def positive_map_grad(raw: float) -> float:
    """d(effective)/d(raw) of :func:`positive_map`; callers compose it explicitly."""
    r = float(raw)
    if r >= 0.0:
        e = math.exp(-r)
        return 1.0 / (1.0 + e)
    e = math.exp(r)
    return e / (1.0 + e)


def raw_from_effective(value: float) -> float:
    """Invert :func:`positive_map`.

    The analytic inverse is polished by an ulp walk so that round-tripping a
    representable effective value reproduces it bit-exactly whenever a
    preimage exists.
    """
    value = float(value)
    if not math.isfinite(value) or value <= _POS_FLOOR:
        raise ValueError(f"effective value must be finite and > {_POS_FLOOR}, got {value!r}")
    r = _softplus_inv(value - _POS_FLOOR)
    got = positive_map(r)
    if got == value:
        return r
    best, best_err = r, abs(got - value)
    for target in (math.inf, -math.inf):
        cand = r
        for _ in range(64):
            cand = math.nextafter(cand, target)
            got = positive_map(cand)
            if got == value:
                return cand
            err = abs(got - value)
            if err < best_err:
                best, best_err = cand, err
            if (got > value) == (target == math.inf):
                break
    return best


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArcGateParams:
    """The seven-parameter vector (a, c, p, alpha, beta, gamma, delta).

    ``a_raw`` and ``p_raw`` store the unconstrained optimizer variables;
    the effective steepness and sharpness are their positive-mapped images.
    """

    a_raw: float
    c: float
    p_raw: float
    alpha: float
    beta: float
    gamma: float
    delta: float

    @property
    def a(self) -> float:
        return positive_map(self.a_raw)

    @property
    def p(self) -> float:
        return positive_map(self.p_raw)

    @classmethod
    def from_effective(cls, a: float, c: float, p: float, alpha: float,
                       beta: float, gamma: float, delta: float) -> "ArcGateParams":
        return cls(raw_from_effective(a), float(c), raw_from_effective(p),
                   float(alpha), float(beta), float(gamma), float(delta))

    @classmethod
    def from_raw_vector(cls, vec: Sequence[float]) -> "ArcGateParams":
        a_raw, c, p_raw, alpha, beta, gamma, delta = (float(t) for t in vec)
        return cls(a_raw, c, p_raw, alpha, beta, gamma, delta)

    def raw_vector(self) -> np.ndarray:
        """Raw values in declared order (a_raw, c, p_raw, alpha, beta, gamma, delta)."""
        return np.array([self.a_raw, self.c, self.p_raw,
                         self.alpha, self.beta, self.gamma, self.delta])

    def effective(self) -> tuple[float, float, float, float, float, float, float]:
        """Effective values (a, c, p, alpha, beta, gamma, delta)."""
        return (self.a, self.c, self.p, self.alpha, self.beta, self.gamma, self.delta)


@dataclass(frozen=True)
class GateEval:
    """Value of the gate stages at one point."""

    u: float
    v: float
    f: float
    log_odds: float


@dataclass(frozen=True)
class GateGrad:
    """F and its partials w.r.t. the input and the seven effective parameters."""

    f: float
    d_x: float
    d_a: float
    d_c: float
    d_p: float
    d_alpha: float
    d_beta: float
    d_gamma: float
    d_delta: float


# ---------------------------------------------------------------------------
# vectorized kernel
# ---------------------------------------------------------------------------

@dataclass
class GateTape:
    """Forward intermediates kept for the backward pass."""

    x: np.ndarray
    z: np.ndarray
    theta: np.ndarray        # arctan(|z|)
    psmall: np.ndarray       # arctan2(1, |z|) = pi * min(u, 1 - u)
    u: np.ndarray
    log_odds: np.ndarray
    t: np.ndarray            # p * log_odds
    e: np.ndarray            # exp(-|t|)
    v: np.ndarray
    f: np.ndarray
    eff: tuple[float, float, float, float, float, float, float]


def _check_effective(a: float, p: float) -> None:
    if not (math.isfinite(a) and a > 0.0):
        raise ValueError(f"steepness a must be finite and > 0, got {a!r}")
    if not (math.isfinite(p) and p > 0.0):
        raise ValueError(f"sharpness p must be finite and > 0, got {p!r}")


def _check_finite_scalars(**named: float) -> None:
    for name, value in named.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


def batch_eval(x: np.ndarray, eff: Sequence[float]) -> GateTape:
    """Evaluate the gate elementwise over ``x`` for effective parameters ``eff``.

    ``eff`` is (a, c, p, alpha, beta, gamma, delta) with a, p already
    positive-mapped.  Returns the tape consumed by :func:`batch_vjp`.
    """
    a, c, p, alpha, beta, gamma, delta = (float(t) for t in eff)
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", under="ignore"):
        z = np.clip(a * (x - c), -_Z_CAP, _Z_CAP)
        az = np.abs(z)
        theta = np.arctan(az)
        psmall = np.arctan2(1.0, az)
        pos = z >= 0.0
        u = np.where(pos, 0.5 + theta / np.pi, psmall / np.pi)
        log_odds = np.log1p(2.0 * theta / psmall)
        np.negative(log_odds, where=~pos, out=log_odds)
        t = p * log_odds
        e = np.exp(-np.abs(t))
        side = np.arctan(e) / _HALF_PI
        v = np.where(t >= 0.0, 1.0 - side, side)
        u = np.clip(u, GATE_EPS, 1.0 - GATE_EPS)
        v = np.clip(v, GATE_EPS, 1.0 - GATE_EPS)
        f = (alpha * x + beta) * v + (gamma * x + delta)
    return GateTape(x=x, z=z, theta=theta, psmall=psmall, u=u,
                    log_odds=log_odds, t=t, e=e, v=v, f=f,
                    eff=(a, c, p, alpha, beta, gamma, delta))


def _partials(tape: GateTape) -> tuple[np.ndarray, ...]:
    """Elementwise partials of F w.r.t. (x, a, c, p); the affine four are closed-form."""
    a, c, p, alpha, beta, _gamma, _delta = tape.eff
    with np.errstate(over="ignore", under="ignore"):
        s = tape.e / (1.0 + tape.e * tape.e)      # w / (1 + w^2), even in t
        dvdt = s / _HALF_PI
        pbig = _HALF_PI + tape.theta              # pi * max(u, 1 - u)
        dLdz = (1.0 / pbig + 1.0 / tape.psmall) / (1.0 + tape.z * tape.z)
        dvdz = dvdt * (p * dLdz)
        lever = alpha * tape.x + beta
        d_x = alpha * tape.v + lever * dvdz * a + _gamma
        d_a = lever * dvdz * (tape.x - c)
        d_c = -(lever * dvdz * a)
        d_p = lever * dvdt * tape.log_odds
    return d_x, d_a, d_c, d_p


def batch_vjp(tape: GateTape, cotangent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backward through one gate application.

    Returns ``(d_x, d_eff)`` where ``d_x`` matches the shape of the input and
    ``d_eff`` is the 7-vector of cotangent-weighted sums over all elements,
    ordered (a, c, p, alpha, beta, gamma, delta).  Effective-parameter
    gradients; the positive-map chain factor is the caller's job.
    """
    g = np.asarray(cotangent, dtype=np.float64)
    d_x, d_a, d_c, d_p = _partials(tape)
    d_eff = np.array([
        float(np.sum(g * d_a)),
        float(np.sum(g * d_c)),
        float(np.sum(g * d_p)),
        float(np.sum(g * tape.x * tape.v)),
        float(np.sum(g * tape.v)),
        float(np.sum(g * tape.x)),
        float(np.sum(g)),
    ])
    return g * d_x, d_eff


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

def eval_u(x: float, a: float, c: float) -> float:
    """Monotone transition value in (0, 1); takes the effective steepness."""
    _check_finite_scalars(x=float(x), c=float(c))
    _check_effective(float(a), 1.0)
    return _u_signed(float(x), float(a), float(c))


def _u_signed(x: float, a: float, c: float) -> float:
    # formula-extended: accepts any sign of a (test hook for the mirror identity)
    z = float(np.clip(a * (x - c), -_Z_CAP, _Z_CAP))
    if z >= 0.0:
        u = 0.5 + float(np.arctan(z)) / math.pi
    else:
        u = float(np.arctan2(1.0, -z)) / math.pi
    return min(max(u, GATE_EPS), 1.0 - GATE_EPS)


def eval_v(x: float, params: ArcGateParams) -> float:
    """Gated value in (0, 1) for the full parameter vector."""
    a, c, p = params.a, params.c, params.p
    _check_finite_scalars(x=float(x), c=c)
    _check_effective(a, p)
    tape = batch_eval(np.array([float(x)]), (a, c, p, 0.0, 0.0, 0.0, 0.0))
    return float(tape.v[0])


def _v_signed(x: float, a: float, c: float, p: float) -> float:
    # formula-extended: accepts any sign of p (test hook for v(-p) = 1 - v(p))
    tape = batch_eval(np.array([float(x)]), (a, c, 1.0, 0.0, 0.0, 0.0, 0.0))
    t = p * float(tape.log_odds[0])
    side = float(np.arctan(np.exp(-abs(t))) / _HALF_PI)
    v = (1.0 - side) if t >= 0.0 else side
    return min(max(v, GATE_EPS), 1.0 - GATE_EPS)


def eval_F(x: float, params: ArcGateParams) -> GateEval:
    """Full activation value with the internal stage values."""
    eff = params.effective()
    _check_finite_scalars(x=float(x), c=eff[1], alpha=eff[3], beta=eff[4],
                          gamma=eff[5], delta=eff[6])
    _check_effective(eff[0], eff[2])
    tape = batch_eval(np.array([float(x)]), eff)
    return GateEval(u=float(tape.u[0]), v=float(tape.v[0]),
                    f=float(tape.f[0]), log_odds=float(tape.log_odds[0]))


def eval_F_batch(xs: Sequence[float], params: ArcGateParams) -> np.ndarray:
    """Elementwise activation values; bit-identical to the scalar path."""
    eff = params.effective()
    _check_finite_scalars(c=eff[1], alpha=eff[3], beta=eff[4], gamma=eff[5], delta=eff[6])
    _check_effective(eff[0], eff[2])
    x = np.asarray(xs, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise ValueError(f"non-finite input at index {int(bad[0])}: {x.flat[int(bad[0])]!r}")
    return batch_eval(x, eff).f


def grad(x: float, params: ArcGateParams) -> GateGrad:
    """F and all eight partials w.r.t. the input and the effective parameters."""
    eff = params.effective()
    _check_finite_scalars(x=float(x), c=eff[1], alpha=eff[3], beta=eff[4],
                          gamma=eff[5], delta=eff[6])
    _check_effective(eff[0], eff[2])
    tape = batch_eval(np.array([float(x)]), eff)
    d_x, d_a, d_c, d_p = _partials(tape)
    xv = float(tape.x[0]) * float(tape.v[0])
    return GateGrad(
        f=float(tape.f[0]),
        d_x=float(d_x[0]),
        d_a=float(d_a[0]),
        d_c=float(d_c[0]),
        d_p=float(d_p[0]),
        d_alpha=xv,
        d_beta=float(tape.v[0]),
        d_gamma=float(tape.x[0]),
        d_delta=1.0,
    )


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

#: Default starting shape for training: a soft rectifier (gating mode with a
#: moderate transition) whose output is x * v(x).
SOFT_RELU_INIT = (5.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0)

PRESET_KINDS = ("soft_relu_init", "identity", "relu_like", "sigmoid_like",
                "tanh_like", "leaky")


def preset(kind: str, arg: float | None = None) -> ArcGateParams:
    """Named parameter vectors for the classical special cases.

    ``relu_like`` takes a scale >= 1 (larger is closer to a hard rectifier);
    ``leaky`` takes a negative-side slope in (0, 1).  The other kinds take no
    argument.
    """
    if kind == "soft_relu_init":
        _reject_arg(kind, arg)
        return ArcGateParams.from_effective(*SOFT_RELU_INIT)
    if kind == "identity":
        _reject_arg(kind, arg)
        return ArcGateParams.from_effective(5.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0)
    if kind == "relu_like":
        scale = _require_arg(kind, arg)
        if scale < 1.0:
            raise ValueError(f"relu_like scale must be >= 1, got {scale!r}")
        return ArcGateParams.from_effective(scale, 0.0, scale, 1.0, 0.0, 0.0, 0.0)
    if kind == "sigmoid_like":
        _reject_arg(kind, arg)
        # a = 2 minimizes the sup-distance to the logistic sigmoid on [-6, 6]
        # among small integer steepness values
        return ArcGateParams.from_effective(2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0)
    if kind == "tanh_like":
        _reject_arg(kind, arg)
        return ArcGateParams.from_effective(2.0, 0.0, 1.0, 0.0, 2.0, 0.0, -1.0)
    if kind == "leaky":
        slope = _require_arg(kind, arg)
        if not 0.0 < slope < 1.0:
            raise ValueError(f"leaky slope must be in (0, 1), got {slope!r}")
        return ArcGateParams.from_effective(1e4, 0.0, 1e4, 1.0, 0.0, slope, 0.0)
    raise ValueError(f"unknown preset kind {kind!r}; expected one of {PRESET_KINDS}")


def _require_arg(kind: str, arg: float | None) -> float:
    if arg is None:
        raise ValueError(f"preset {kind!r} requires a numeric argument")
    value = float(arg)
    if not math.isfinite(value):
        raise ValueError(f"preset {kind!r} argument must be finite, got {arg!r}")
    return value


def _reject_arg(kind: str, arg: float | None) -> None:
    if arg is not None:
        raise ValueError(f"preset {kind!r} takes no argument")
