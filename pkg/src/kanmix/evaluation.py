"""Metrics, exhaustive test-split evaluation and interpretability exports.

Evaluation consumes every window of the split (stride 1, nothing dropped;
the public contract is batch-size-1 iteration).  Metrics are computed in
standardized space by default; pass the dataset statistics through
``raw_space=True`` to undo them.  Exports: per-variable expert-load
fractions (columns are probability vectors) and per-lookback-position
mean-absolute edge outputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeriesDataset, make_windows
from .errors import DomainError
from .layers import KanLayer
from .model import ForecastModel, MoKBlock
from .moe import MoKLayer


@dataclass
class MetricReport:
    dataset: str
    lookback: int
    horizon: int
    per_seed: list = field(default_factory=list)
    mse_mean: float = 0.0
    mse_std: float = 0.0
    mae_mean: float = 0.0
    mae_std: float = 0.0
    n_windows: int = 0
    wall_clock: float = 0.0


@dataclass
class ExpertLoadMatrix:
    counts: np.ndarray        # [n_experts, n_vars]; columns sum to 1
    expert_labels: list
    var_names: list


def evaluate(model: ForecastModel, ds: TimeSeriesDataset, split: str = "test",
             batch_size: int = 1, raw_space: bool = False) -> dict:
    """Score every window of a split; returns mse/mae/n_windows/seconds."""
    cfg = model.config
    windows = make_windows(ds, split, cfg.lookback, cfg.horizon)
    if len(windows) == 0:
        raise DomainError(f"split {split} has no windows")
    model.eval()
    t0 = time.perf_counter()
    total_sq, total_abs, total_n = 0.0, 0.0, 0
    iterations = 0
    for lo in range(0, len(windows), batch_size):
        idx = range(lo, min(lo + batch_size, len(windows)))
        xs, ys = windows.batch(idx)
        y_hat, _, _ = model.forward(xs)
        diff = y_hat - ys
        if raw_space:
            diff = diff * ds.std  # undo per-variable standardization
        total_sq += float((diff * diff).sum())
        total_abs += float(np.abs(diff).sum())
        total_n += diff.size
        iterations += 1
    seconds = time.perf_counter() - t0
    return {
        "mse": total_sq / total_n,
        "mae": total_abs / total_n,
        "n_windows": len(windows),
        "iterations": iterations,
        "seconds": seconds,
        "windows_per_sec": len(windows) / seconds if seconds > 0 else float("inf"),
    }


def _first_mok(model: ForecastModel) -> MoKLayer:
    for _, stage in model.stages:
        if isinstance(stage, MoKLayer):
            return stage
        if isinstance(stage, MoKBlock):
            return stage.mok
    raise DomainError("model has no mixture layer")


def export_expert_loads(model: ForecastModel, ds: TimeSeriesDataset,
                        split: str = "test", batch_size: int = 256) -> ExpertLoadMatrix:
    """Fraction of windows whose top-1 expert (embedding gate) is e, per variable."""
    cfg = model.config
    windows = make_windows(ds, split, cfg.lookback, cfg.horizon)
    model.eval()
    n_experts = len(_first_mok(model).experts)
    counts = np.zeros((n_experts, cfg.n_vars))
    for lo in range(0, len(windows), batch_size):
        idx = range(lo, min(lo + batch_size, len(windows)))
        xs, _ = windows.batch(idx)
        _, decisions, _ = model.forward(xs)
        top1 = np.argmax(decisions[0].weights, axis=1)  # ties: lowest index
        per_var = top1.reshape(len(idx), cfg.n_vars)
        for c in range(cfg.n_vars):
            counts[:, c] += np.bincount(per_var[:, c], minlength=n_experts)
    counts /= len(windows)
    labels = list(_first_mok(model).expert_kinds)
    return ExpertLoadMatrix(counts=counts, expert_labels=labels,
                            var_names=list(ds.var_names))


def export_feature_weights(target, rows: np.ndarray) -> np.ndarray:
    """Per-input-position importance: mean over rows of sum_j |phi_ji(x_i)|.

    ``target`` is a KAN layer, a mixture layer (experts averaged with their
    gate weights) or a model (its first mixture layer on normalized rows).
    """
    if isinstance(target, KanLayer):
        return target.abs_edge_importance(rows)
    if isinstance(target, ForecastModel):
        xn = target.revin.normalize(rows)[0] if target.revin is not None else rows
        flat = np.ascontiguousarray(xn.transpose(0, 2, 1)).reshape(
            -1, target.config.lookback)
        return export_feature_weights(_first_mok(target), flat)
    if isinstance(target, MoKLayer):
        target_gate = target.gating
        from .moe import gate_softmax, gate_sparse
        if target_gate.mode == "softmax":
            decision, _ = gate_softmax(target_gate, rows)
        else:
            decision, _ = gate_sparse(target_gate, rows, mode="eval")
        importance = np.zeros(target.n_in)
        for e, expert in enumerate(target.experts):
            w = decision.weights[:, e]
            sel = np.nonzero(w > 0)[0]
            if sel.size == 0 or not isinstance(expert, KanLayer):
                continue
            contrib = np.abs(expert.edge_outputs(rows[sel])).sum(axis=1)
            importance += (contrib * w[sel, None]).sum(axis=0)
        return importance / rows.shape[0]
    raise DomainError(f"cannot compute feature weights for {type(target)}")


def write_expert_loads_csv(matrix: ExpertLoadMatrix, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("expert," + ",".join(matrix.var_names) + "\n")
        for e, label in enumerate(matrix.expert_labels):
            row = ",".join(f"{v:.10f}" for v in matrix.counts[e])
            fh.write(f"{label},{row}\n")


def write_feature_weights_csv(weights: np.ndarray, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("position,weight\n")
        for i, w in enumerate(weights):
            fh.write(f"{i},{w:.10f}\n")


def write_metrics_csv(report: MetricReport, path):
    """Per-seed rows plus an aggregate row.  Deliberately excludes timing so
    identical runs produce bitwise-identical files."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dataset,lookback,horizon,seed,mse,mae,n_windows\n")
        for row in report.per_seed:
            fh.write(f"{report.dataset},{report.lookback},{report.horizon},"
                     f"{row['seed']},{row['mse']:.10f},{row['mae']:.10f},"
                     f"{row['n_windows']}\n")
        fh.write(f"{report.dataset},{report.lookback},{report.horizon},"
                 f"aggregate,{report.mse_mean:.10f},{report.mae_mean:.10f},"
                 f"{report.n_windows}\n")
