"""Desk-scale experiment runners.

Noise-robustness sweep, initialization and granularity ablations, the
per-layer parameter report, and the parametric sensitivity curves.  Every
runner is deterministic given its seed and embeds its configuration digest
in the CSV it writes, so re-running reproduces files byte for byte.

Accuracy numbers here are desk-scale analogs: they preserve the structural
comparisons (which variant beats which) but not the absolute values of
full-size benchmarks.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import core, fitter
from .engine import (MLPModel, ModelSpec, TrainConfig, TrainingDivergedError,
                     evaluate, train)

__all__ = [
    "DEFAULT_SIGMAS", "LayerReport", "SweepReport",
    "granularity_ablation", "init_ablation", "layer_evolution_report",
    "noise_sweep", "sensitivity_curves",
    "write_sweep_csv", "write_init_csv", "write_granularity_csv", "write_layer_csv",
]

#: Noise grid: the reference sweep's levels plus 0.3 and 0.5, where the
#: desk-scale fixture reaches its degradation knee.
DEFAULT_SIGMAS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5)

_SENSITIVITY_GRID = np.linspace(-6.0, 6.0, 601)


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]


def _spec_for(dataset) -> ModelSpec:
    x_train, y_train = np.asarray(dataset[0]), np.asarray(dataset[1])
    n_classes = int(max(y_train.max(), np.asarray(dataset[3]).max())) + 1
    return ModelSpec(in_dim=x_train.shape[1], hidden=(256, 128, 64), n_classes=n_classes)


# ---------------------------------------------------------------------------
# noise sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    model: str
    sigma: float
    accuracy: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    gains: list[tuple[float, float]]     # (sigma, adaptive minus baseline)
    seed: int
    noise_seeds: dict[float, int]
    config_digest: str
    partial: bool = False


def noise_sweep(dataset, sigmas: Sequence[float] = DEFAULT_SIGMAS,
                config: TrainConfig | None = None, seed: int = 0) -> SweepReport:
    """Train matched adaptive-gate and ReLU models, evaluate both across noise levels.

    Both models share the seed, the architecture, and per-sigma noise draws;
    only the activation differs.  If one training run diverges the report is
    returned partial, with whatever rows were completed.
    """
    sigmas = [float(s) for s in sigmas]
    if any(s < 0 for s in sigmas) or sorted(sigmas) != sigmas:
        raise ValueError("sigmas must be sorted and non-negative")
    config = config or TrainConfig()
    spec = _spec_for(dataset)
    noise_seeds = {s: seed * 1000 + i for i, s in enumerate(sigmas)}
    digest = _digest(spec, config, sigmas, seed)

    rows: list[SweepRow] = []
    models: dict[str, MLPModel] = {}
    partial = False
    for label, cfg in (("arcgate", replace(config, seed=seed, init_strategy="soft_relu",
                                            granularity="layer_wise")),
                       ("relu", replace(config, seed=seed, init_strategy="relu_baseline"))):
        try:
            models[label], _ = train(spec, dataset, cfg)
        except TrainingDivergedError:
            partial = True

    test = (dataset[2], dataset[3])
    for s in sigmas:
        for label in ("arcgate", "relu"):
            if label in models:
                rows.append(SweepRow(label, s, evaluate(models[label], test, s, noise_seeds[s])))
    gains = []
    if len(models) == 2:
        acc = {(r.model, r.sigma): r.accuracy for r in rows}
        gains = [(s, acc[("arcgate", s)] - acc[("relu", s)]) for s in sigmas]
    return SweepReport(rows=rows, gains=gains, seed=seed, noise_seeds=noise_seeds,
                       config_digest=digest, partial=partial)


def write_sweep_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config_digest={report.config_digest} seed={report.seed} "
                f"noise_seeds={sorted(report.noise_seeds.items())!r} "
                f"partial={report.partial}\n")
        writer = csv.writer(f)
        writer.writerow(["model", "sigma", "accuracy", "seed"])
        for row in report.rows:
            writer.writerow([row.model, repr(row.sigma), repr(row.accuracy), report.seed])


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitRow:
    strategy: str
    test_accuracy: float    # NaN marks a diverged run


def init_ablation(dataset, config: TrainConfig | None = None, seed: int = 0) -> list[InitRow]:
    """One row per initialization strategy, all sharing seed and architecture."""
    config = config or TrainConfig()
    spec = _spec_for(dataset)
    rows = []
    for strategy in ("relu_baseline", "identity", "random", "soft_relu"):
        cfg = replace(config, seed=seed, init_strategy=strategy)
        try:
            model, _ = train(spec, dataset, cfg)
            acc = evaluate(model, (dataset[2], dataset[3]), 0.0, 0)
        except TrainingDivergedError:
            acc = math.nan
        rows.append(InitRow(strategy, acc))
    return rows


def write_init_csv(rows: list[InitRow], path, config: TrainConfig, seed: int) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config_digest={_digest(config, seed)} seed={seed}\n")
        writer = csv.writer(f)
        writer.writerow(["strategy", "test_accuracy", "epochs", "seed"])
        for row in rows:
            writer.writerow([row.strategy, repr(row.test_accuracy), config.epochs, seed])


@dataclass(frozen=True)
class GranularityRow:
    granularity: str
    learnable_activation_params: int
    test_accuracy: float


def granularity_ablation(dataset, config: TrainConfig | None = None,
                         seed: int = 0) -> list[GranularityRow]:
    """Fixed vs global-shared vs layer-wise gate parameters; counts by traversal."""
    config = config or TrainConfig()
    spec = _spec_for(dataset)
    rows = []
    for granularity in ("fixed", "global_shared", "layer_wise"):
        cfg = replace(config, seed=seed, init_strategy="soft_relu", granularity=granularity)
        try:
            model, _ = train(spec, dataset, cfg)
            count = model.learnable_activation_parameter_count()
            acc = evaluate(model, (dataset[2], dataset[3]), 0.0, 0)
        except TrainingDivergedError:
            count, acc = -1, math.nan
        rows.append(GranularityRow(granularity, count, acc))
    return rows


def write_granularity_csv(rows: list[GranularityRow], path,
                          config: TrainConfig, seed: int) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config_digest={_digest(config, seed)} seed={seed}\n")
        writer = csv.writer(f)
        writer.writerow(["granularity", "learnable_activation_params", "test_accuracy", "seed"])
        for row in rows:
            writer.writerow([row.granularity, row.learnable_activation_params,
                             repr(row.test_accuracy), seed])


# ---------------------------------------------------------------------------
# layer evolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerRow:
    layer_index: int
    a: float
    c: float
    p: float
    alpha: float
    beta: float
    gamma: float
    delta: float


@dataclass
class LayerReport:
    rows: list[LayerRow]


def layer_evolution_report(model: MLPModel) -> LayerReport:
    """Effective gate parameters per activation layer, ordered by depth.

    Only meaningful for layer-wise models, where the vectors can diverge.
    """
    acts = model.activation_layers()
    if not acts:
        raise ValueError("model has no activation layers")
    for layer in acts:
        if layer.baseline is not None or layer.granularity != "layer_wise":
            raise ValueError("layer evolution requires a layer_wise gate model")
    rows = [LayerRow(i, *layer.effective_params()) for i, layer in enumerate(acts)]
    return LayerReport(rows=rows)


def write_layer_csv(report: LayerReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["layer_index", "a", "c", "p", "alpha", "beta", "gamma", "delta"])
        for r in report.rows:
            writer.writerow([r.layer_index] + [repr(v) for v in
                                               (r.a, r.c, r.p, r.alpha, r.beta, r.gamma, r.delta)])


# ---------------------------------------------------------------------------
# sensitivity curves
# ---------------------------------------------------------------------------

def _curve_csv(path, labels: list[str], columns: list[np.ndarray], digest: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config_digest={digest}\n")
        writer = csv.writer(f)
        writer.writerow(["x"] + labels)
        for i, x in enumerate(_SENSITIVITY_GRID):
            writer.writerow([repr(float(x))] + [repr(float(col[i])) for col in columns])


def sensitivity_curves(out_dir, fit_budget: int = 5000, seed: int = 0) -> dict[str, Path]:
    """Write the six sensitivity CSVs into ``out_dir``; returns name -> path.

    Gate curves on x in [-6, 6]: steepness, sharpness, center shift,
    gating-vs-saturating mode, linear leak, and the fitted-classics table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _SENSITIVITY_GRID

    def curves(configs: list[tuple[str, tuple[float, ...]]]) -> tuple[list[str], list[np.ndarray]]:
        labels, cols = [], []
        for label, eff in configs:
            labels.append(label)
            cols.append(core.batch_eval(grid, eff).f)
        return labels, cols

    paths: dict[str, Path] = {}

    # steepness/sharpness/shift use the bounded configuration (alpha=0,
    # beta=1), where the transition slope scales with a*p and a center shift
    # is an exact horizontal translation; the gating mode's x-proportional
    # factor would mask both effects
    sweeps = {
        "steepness": [(f"a={a:g}", (a, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0))
                      for a in (0.5, 1.0, 5.0, 20.0)],
        "sharpness": [(f"p={p:g}", (5.0, 0.0, p, 0.0, 1.0, 0.0, 0.0))
                      for p in (0.5, 1.0, 2.0, 8.0)],
        "shift": [(f"c={c:g}", (5.0, c, 1.0, 0.0, 1.0, 0.0, 0.0))
                  for c in (-2.0, 0.0, 2.0)],
        "mode": [("gating", (5.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0)),
                 ("saturating", (5.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0))],
        "leak": [(f"gamma={g:g}", (5.0, 0.0, 1.0, 1.0, 0.0, g, 0.0))
                 for g in (0.0, 0.05, 0.3)],
    }
    for name, configs in sweeps.items():
        path = out_dir / f"sensitivity_{name}.csv"
        labels, cols = curves(configs)
        _curve_csv(path, labels, cols, _digest(name, configs))
        paths[name] = path

    classics_path = out_dir / "sensitivity_classics.csv"
    rows = fitter.replicate_classics(budget=fit_budget, seed=seed)
    fitter.write_fit_csv(rows, classics_path)
    paths["classics"] = classics_path
    return paths
