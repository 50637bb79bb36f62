"""Least-squares recovery of classical activations inside the gate family.

Full-batch Adam over the seven raw parameters on a fixed sample grid, with
seeded random restarts and monotone best-tracking: the returned result is
never worse than the initialization it was handed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import core, zoo
from .core import ArcGateParams
from .zoo import ActivationKind

__all__ = ["FitResult", "FitTarget", "fit", "replicate_classics", "write_fit_csv",
           "CLASSIC_TARGETS"]

_ADAM_BETAS = (0.9, 0.999)
_ADAM_EPS = 1e-8
_GRAD_TOL = 1e-8
_STALL_TOL = 1e-12
_STALL_WINDOW = 100


@dataclass(frozen=True)
class FitTarget:
    """Sample grid and target values the gate is fitted against."""

    grid: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.size < 16:
            raise ValueError("target grid needs at least 16 points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("target grid must be strictly increasing")
        if values.shape != grid.shape:
            raise ValueError("grid and values must have matching shapes")

    @classmethod
    def from_kind(cls, kind: ActivationKind, lo: float = -6.0, hi: float = 6.0,
                  n_points: int = 1001) -> "FitTarget":
        if not lo < hi:
            raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
        grid = np.linspace(lo, hi, n_points)
        values = np.array([zoo.act(kind, float(x)) for x in grid])
        return cls(grid, values, kind.label())


@dataclass(frozen=True)
class FitResult:
    params: ArcGateParams
    l_inf_error: float
    l2_error: float
    iterations: int
    converged: bool


def _errors(raw: np.ndarray, target: FitTarget) -> tuple[float, float, float]:
    eff = ArcGateParams.from_raw_vector(raw).effective()
    resid = core.batch_eval(target.grid, eff).f - target.values
    mse = float(np.mean(resid * resid))
    return mse, float(np.max(np.abs(resid))), float(math.sqrt(np.sum(resid * resid)))


def _loss_and_grad(raw: np.ndarray, target: FitTarget) -> tuple[float, np.ndarray]:
    eff = ArcGateParams.from_raw_vector(raw).effective()
    tape = core.batch_eval(target.grid, eff)
    resid = tape.f - target.values
    n = target.grid.size
    _, d_eff = core.batch_vjp(tape, 2.0 * resid / n)
    d_raw = d_eff.copy()
    d_raw[0] *= core.positive_map_grad(float(raw[0]))
    d_raw[2] *= core.positive_map_grad(float(raw[2]))
    return float(np.mean(resid * resid)), d_raw


def _random_raw(rng: np.random.Generator) -> np.ndarray:
    lo = core.raw_from_effective(0.5)
    hi = core.raw_from_effective(8.0)
    a_raw, p_raw = rng.uniform(lo, hi, size=2)
    c, beta, gamma, delta = rng.uniform(-0.5, 0.5, size=4)
    alpha = rng.uniform(0.5, 1.5)
    return np.array([a_raw, c, p_raw, alpha, beta, gamma, delta])


def fit(target: FitTarget, init: ArcGateParams, budget: int = 5000, seed: int = 0,
        lr: float = 0.02, restarts: int = 3,
        effective_cap: float | None = None) -> FitResult:
    """Minimize mean squared error of the gate against ``target`` on its grid.

    Restart 0 descends from ``init``; later restarts from seeded random
    draws.  ``effective_cap`` optionally clamps the effective steepness and
    sharpness below a ceiling (projected after every step), which is how the
    hard-rectifier limit is probed.  Best parameters across all restarts and
    iterations win; the init itself is the starting incumbent.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    raw_cap = None if effective_cap is None else core.raw_from_effective(effective_cap)

    def clamp(raw: np.ndarray) -> np.ndarray:
        if raw_cap is not None:
            raw[0] = min(raw[0], raw_cap)
            raw[2] = min(raw[2], raw_cap)
        return raw

    init_raw = clamp(init.raw_vector())
    init_loss, _, _ = _errors(init_raw, target)
    best_loss = init_loss if math.isfinite(init_loss) else math.inf
    best_raw = init_raw.copy()
    best_converged = False
    total_iters = 0
    any_finite = math.isfinite(init_loss)

    for restart in range(restarts):
        start = init_raw.copy() if restart == 0 else clamp(_random_raw(rng))
        attempt_lr = lr
        for _attempt in range(6):
            outcome = _descend(start.copy(), target, budget, attempt_lr, clamp)
            if outcome is None:
                attempt_lr *= 0.5
                continue
            loss, raw, iters, converged = outcome
            total_iters += iters
            any_finite = True
            if loss < best_loss or (restart == 0 and loss == best_loss):
                best_loss, best_raw, best_converged = loss, raw, converged
            break

    if not any_finite:
        return FitResult(params=init, l_inf_error=math.inf, l2_error=math.inf,
                         iterations=total_iters, converged=False)
    _, l_inf, l2 = _errors(best_raw, target)
    return FitResult(params=ArcGateParams.from_raw_vector(best_raw),
                     l_inf_error=l_inf, l2_error=l2,
                     iterations=total_iters, converged=best_converged)


def _descend(raw, target, budget, lr, clamp):
    """Adam descent; returns (best_loss, best_raw, iterations, converged) or None on blow-up.

    Only true stationarity (tiny gradient) stops early; a slow window is
    merely recorded, since Adam routinely crosses plateaus it later escapes.
    """
    m = np.zeros(7)
    v = np.zeros(7)
    b1, b2 = _ADAM_BETAS
    best_loss = math.inf
    best_raw = raw.copy()
    stall_anchor = math.inf
    stalled = False
    converged = False
    it = 0
    while it < budget:
        it += 1
        loss, g = _loss_and_grad(raw, target)
        if not (math.isfinite(loss) and np.all(np.isfinite(g))):
            return None
        if loss < best_loss:
            best_loss = loss
            best_raw = raw.copy()
        gnorm = float(np.linalg.norm(g))
        if gnorm < _GRAD_TOL:
            converged = True
            break
        if it % _STALL_WINDOW == 0:
            stalled = math.isfinite(stall_anchor) and \
                stall_anchor - best_loss <= _STALL_TOL * max(abs(stall_anchor), 1e-300)
            stall_anchor = best_loss
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** it)
        vhat = v / (1 - b2 ** it)
        raw = clamp(raw - lr * mhat / (np.sqrt(vhat) + _ADAM_EPS))
    return best_loss, best_raw, it, converged or stalled


#: Classic targets in table order with the preset each fit starts from.
CLASSIC_TARGETS: tuple[tuple[ActivationKind, tuple[str, float | None]], ...] = (
    (ActivationKind("relu"), ("relu_like", 1e4)),
    (ActivationKind("sigmoid"), ("sigmoid_like", None)),
    (ActivationKind("tanh"), ("tanh_like", None)),
    (ActivationKind("silu"), ("soft_relu_init", None)),
    (ActivationKind("gelu"), ("soft_relu_init", None)),
    (ActivationKind("leaky_relu", 0.01), ("leaky", 0.01)),
    (ActivationKind("identity"), ("identity", None)),
)


def replicate_classics(lo: float = -6.0, hi: float = 6.0, n_points: int = 1001,
                       budget: int = 5000, seed: int = 0,
                       ) -> list[tuple[ActivationKind, FitResult]]:
    """Fit every classic target from its matching preset; failures become rows too."""
    rows: list[tuple[ActivationKind, FitResult]] = []
    for i, (kind, (preset_kind, preset_arg)) in enumerate(CLASSIC_TARGETS):
        target = FitTarget.from_kind(kind, lo, hi, n_points)
        init = core.preset(preset_kind, preset_arg)
        try:
            result = fit(target, init, budget=budget, seed=seed + i)
        except Exception:
            result = FitResult(params=init, l_inf_error=math.inf, l2_error=math.inf,
                               iterations=0, converged=False)
        rows.append((kind, result))
    return rows


def write_fit_csv(rows, path) -> None:
    """Emit the fit table; one row per target (ActivationKind or plain label)."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["target", "kind", "a", "c", "p", "alpha", "beta",
                         "gamma", "delta", "l_inf", "l2", "iterations", "converged"])
        for kind, res in rows:
            tag = kind.tag if isinstance(kind, ActivationKind) else str(kind)
            label = kind.label() if isinstance(kind, ActivationKind) else str(kind)
            a, c, p, alpha, beta, gamma, delta = res.params.effective()
            writer.writerow([tag, label,
                             repr(a), repr(c), repr(p), repr(alpha), repr(beta),
                             repr(gamma), repr(delta),
                             repr(res.l_inf_error), repr(res.l2_error),
                             res.iterations, res.converged])
