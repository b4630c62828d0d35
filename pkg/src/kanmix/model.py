"""Forecast model assembly, pre-sampling initialization and checkpoints.

The network is channel-independent: each variable's lookback window is one
row.  Input [B, T, C] is instance-normalized, transposed to [B*C, T] rows,
pushed through an embedding mixture layer, a stack of residual mixture
blocks and a head mixture layer, then denormalized back to [B, P, C].
A "single" layout collapses the body to one mixture layer mapping T -> P
directly (the ablation configuration).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .basis import SplineGrid
from .errors import CheckpointError, ConfigError, DimensionError, DomainError
from .layers import BatchNormLayer, DropoutLayer, KanLayer, LayerGrads, RevInLayer, _Cache
from .moe import EXPERT_KINDS, GATE_MODES, MoKLayer, NOISE_MODES
from .numeric import SeededRng, ensure_finite

CHECKPOINT_VERSION = 1
PRESAMPLE_MODES = ("off", "as_written", "variance_preserving")


@dataclass(frozen=True)
class ModelConfig:
    lookback: int
    horizon: int
    n_vars: int
    hidden_dim: int = 128
    n_blocks: int = 2
    experts: tuple = ("bspline", "jacobi", "taylor", "wavelet")
    use_revin: bool = True
    top_k: int = 2
    gate_mode: str = "sparse"
    gate_noise: str = "stochastic"
    dropout: float = 0.1
    lb_weight: float = 1.0
    presample: str = "off"
    presample_batches: int = 32
    presample_layers: str = "all"
    seed: int = 0
    layout: str = "deep"
    grid_size: int = 5
    spline_degree: int = 3
    spline_lo: float = -2.0
    spline_hi: float = 2.0
    poly_order: int = 3
    jacobi_a: float = 1.0
    jacobi_b: float = 1.0
    n_wavelets: int = 8
    coeff_std: float = 0.1

    def __post_init__(self):
        for name in ("lookback", "horizon", "n_vars", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_blocks < 0:
            raise ConfigError("n_blocks must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.lb_weight < 0.0:
            raise ConfigError("lb_weight must be >= 0")
        if not self.experts:
            raise ConfigError("expert roster is empty")
        for kind in self.experts:
            if kind not in EXPERT_KINDS:
                raise ConfigError(f"unknown expert kind {kind!r}")
        if not 1 <= self.top_k <= len(self.experts):
            raise ConfigError(f"top_k {self.top_k} out of range "
                              f"for {len(self.experts)} experts")
        if self.gate_mode not in GATE_MODES:
            raise ConfigError(f"unknown gate mode {self.gate_mode!r}")
        if self.gate_noise not in NOISE_MODES:
            raise ConfigError(f"unknown gate noise mode {self.gate_noise!r}")
        if self.presample not in PRESAMPLE_MODES:
            raise ConfigError(f"unknown presample mode {self.presample!r}")
        if self.presample_layers not in ("all", "last"):
            raise ConfigError("presample_layers must be 'all' or 'last'")
        if self.layout not in ("deep", "single"):
            raise ConfigError("layout must be 'deep' or 'single'")


class MoKBlock:
    """Residual unit: Dropout(BatchNorm(h + MoK(h)))."""

    def __init__(self, width: int, expert_kinds, *, rng, k, gate_mode, noise_mode,
                 dropout_p, **kan_kwargs):
        self.mok = MoKLayer(width, width, expert_kinds, rng=rng, k=k,
                            gate_mode=gate_mode, noise_mode=noise_mode, **kan_kwargs)
        self.bn = BatchNormLayer(width)
        self.drop = DropoutLayer(dropout_p)

    def named_params(self) -> dict:
        out = {f"mok.{k}": v for k, v in self.mok.named_params().items()}
        out["bn.scale"] = self.bn.params["scale"]
        out["bn.shift"] = self.bn.params["shift"]
        return out

    def named_buffers(self) -> dict:
        return {"bn.running_mean": self.bn.buffers["running_mean"],
                "bn.running_var": self.bn.buffers["running_var"]}

    def forward(self, h: np.ndarray, mode: str = "train", rng=None,
                update_stats: bool = True):
        r, decision, mok_cache = self.mok.forward(h, mode, rng)
        s = h + r
        bn_out, bn_cache = self.bn.forward(s, mode, update_stats=update_stats)
        y, drop_cache = self.drop.forward(bn_out, mode, rng)
        cache = _Cache(self, mok=mok_cache, bn=bn_cache, drop=drop_cache)
        return y, decision, cache

    def backward(self, cache, d_y: np.ndarray, d_loads=None) -> LayerGrads:
        c = cache.of(self)
        d_bn_out = self.drop.backward(c["drop"], d_y).d_input
        g_bn = self.bn.backward(c["bn"], d_bn_out)
        g_mok = self.mok.backward(c["mok"], g_bn.d_input, d_loads)
        d_params = {f"mok.{k}": v for k, v in g_mok.d_params.items()}
        d_params["bn.scale"] = g_bn.d_params["scale"]
        d_params["bn.shift"] = g_bn.d_params["shift"]
        return LayerGrads(g_bn.d_input + g_mok.d_input, d_params)


class ForecastModel:
    """RevIN -> [embedding MoK -> blocks -> head MoK] -> inverse RevIN."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.mode = "train"
        rng = SeededRng(config.seed, stream=0)
        self.revin = RevInLayer(config.n_vars) if config.use_revin else None
        kan_kwargs = dict(
            grid=SplineGrid.uniform(config.grid_size, config.spline_degree,
                                    config.spline_lo, config.spline_hi),
            order=config.poly_order, jacobi_a=config.jacobi_a,
            jacobi_b=config.jacobi_b, n_wavelets=config.n_wavelets,
            coeff_std=config.coeff_std,
        )
        moe_kwargs = dict(rng=rng, k=config.top_k, gate_mode=config.gate_mode,
                          noise_mode=config.gate_noise, **kan_kwargs)
        self.stages = []
        if config.layout == "single":
            self.stages.append(("embed", MoKLayer(
                config.lookback, config.horizon, config.experts, **moe_kwargs)))
        else:
            self.stages.append(("embed", MoKLayer(
                config.lookback, config.hidden_dim, config.experts, **moe_kwargs)))
            for i in range(config.n_blocks):
                self.stages.append((f"blocks.{i}", MoKBlock(
                    config.hidden_dim, config.experts, dropout_p=config.dropout,
                    **moe_kwargs)))
            self.stages.append(("head", MoKLayer(
                config.hidden_dim, config.horizon, config.experts, **moe_kwargs)))

    # -- mode handling -------------------------------------------------
    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    # -- parameter access ----------------------------------------------
    def named_params(self) -> dict:
        out = {}
        if self.revin is not None:
            out["revin.affine_weight"] = self.revin.params["affine_weight"]
            out["revin.affine_bias"] = self.revin.params["affine_bias"]
        for name, stage in self.stages:
            for key, arr in stage.named_params().items():
                out[f"{name}.{key}"] = arr
        return out

    def named_buffers(self) -> dict:
        out = {}
        for name, stage in self.stages:
            if isinstance(stage, MoKBlock):
                for key, arr in stage.named_buffers().items():
                    out[f"{name}.{key}"] = arr
        return out

    def state_arrays(self) -> dict:
        out = dict(self.named_params())
        out.update(self.named_buffers())
        return out

    # -- forward / backward ----------------------------------------------
    def forward(self, x: np.ndarray, rng=None, update_stats: bool = True):
        """Returns (prediction [B, P, C], gate decisions per stage, cache)."""
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != cfg.lookback or x.shape[2] != cfg.n_vars:
            raise DimensionError(
                f"expected input [B, {cfg.lookback}, {cfg.n_vars}], got {x.shape}")
        ensure_finite(x, "model input")
        n_batch = x.shape[0]
        if self.revin is not None:
            xn, revin_cache = self.revin.normalize(x)
        else:
            xn, revin_cache = x, None
        rows = np.ascontiguousarray(xn.transpose(0, 2, 1)).reshape(
            n_batch * cfg.n_vars, cfg.lookback)
        decisions, stage_caches = [], []
        for name, stage in self.stages:
            if isinstance(stage, MoKBlock):
                rows, decision, cache = stage.forward(rows, self.mode, rng,
                                                      update_stats=update_stats)
            else:
                rows, decision, cache = stage.forward(rows, self.mode, rng)
            decisions.append(decision)
            stage_caches.append(cache)
        yn = rows.reshape(n_batch, cfg.n_vars, cfg.horizon).transpose(0, 2, 1)
        out = (self.revin.denormalize(yn, revin_cache)
               if self.revin is not None else yn)
        cache = {"revin": revin_cache, "stages": stage_caches, "n_batch": n_batch}
        return out, decisions, cache

    def backward(self, cache, d_out: np.ndarray, d_loads_list=None):
        """Accumulate parameter gradients; returns (grads dict, d_input)."""
        cfg = self.config
        n_batch = cache["n_batch"]
        if self.revin is not None:
            d_yn, stash = self.revin.backward_denorm(cache["revin"], d_out)
        else:
            d_yn, stash = d_out, None
        d_rows = np.ascontiguousarray(d_yn.transpose(0, 2, 1)).reshape(
            n_batch * cfg.n_vars, cfg.horizon)
        grads = {}
        for i in range(len(self.stages) - 1, -1, -1):
            name, stage = self.stages[i]
            d_loads = None if d_loads_list is None else d_loads_list[i]
            g = stage.backward(cache["stages"][i], d_rows, d_loads)
            for key, arr in g.d_params.items():
                grads[f"{name}.{key}"] = arr
            d_rows = g.d_input
        d_xn = d_rows.reshape(n_batch, cfg.n_vars, cfg.lookback).transpose(0, 2, 1)
        if self.revin is None:
            return grads, d_xn
        g_revin = self.revin.backward_norm(cache["revin"], d_xn, stash)
        grads["revin.affine_weight"] = g_revin.d_params["affine_weight"]
        grads["revin.affine_bias"] = g_revin.d_params["affine_bias"]
        return grads, g_revin.d_input


@dataclass
class PresampleStats:
    """Per-KAN-layer input/base-output variances recorded before training."""

    per_layer: dict = field(default_factory=dict)  # name -> (var_input, var_base)


def _rows_through(model: ForecastModel, x: np.ndarray, n_stages: int) -> np.ndarray:
    """Forward to the input of stage ``n_stages`` (train-mode BN statistics,
    no running-stat updates, no dropout, clean gate logits)."""
    cfg = model.config
    xn = model.revin.normalize(x)[0] if model.revin is not None else x
    rows = np.ascontiguousarray(xn.transpose(0, 2, 1)).reshape(-1, cfg.lookback)
    for name, stage in model.stages[:n_stages]:
        if isinstance(stage, MoKBlock):
            r, _, _ = stage.mok.forward(rows, "eval")
            s = rows + r
            bn_out, _ = stage.bn.forward(s, "train", update_stats=False)
            rows = bn_out  # eval-mode dropout: identity
        else:
            rows, _, _ = stage.forward(rows, "eval")
    return rows


def presample_init(model: ForecastModel, batches, mode: str | None = None,
                   max_batches: int | None = None) -> PresampleStats:
    """Variance-calibrated re-initialization of every w_b before training.

    Walks the mixture stages front to back.  For each KAN expert it forwards
    the sampled batches through the already re-initialized prefix, records
    Var[x] over every entry of the stage input and Var[F(x)] over every
    entry of that expert's base output, then redraws w_b from
    N(0, Var[F]/Var[x]) ("as_written") or N(0, Var[x]/Var[F])
    ("variance_preserving").  Only w_b changes.
    """
    cfg = model.config
    mode = mode or cfg.presample
    if mode == "off":
        return PresampleStats()
    if mode not in PRESAMPLE_MODES:
        raise ConfigError(f"unknown presample mode {mode!r}")
    batches = list(batches)
    if max_batches is not None:
        batches = batches[:max_batches]
    if not batches:
        raise DomainError("presample_init needs at least one batch")
    rng = SeededRng(cfg.seed, stream=3)
    stats = PresampleStats()
    stage_ids = range(len(model.stages))
    if cfg.presample_layers == "last":
        stage_ids = [len(model.stages) - 1]
    for si in stage_ids:
        name, stage = model.stages[si]
        mok = stage.mok if isinstance(stage, MoKBlock) else stage
        kan_experts = [(e, ex) for e, ex in enumerate(mok.experts)
                       if isinstance(ex, KanLayer)]
        if not kan_experts:
            continue
        n_inp, s_inp, ss_inp = 0, 0.0, 0.0
        acc = {e: [0, 0.0, 0.0] for e, _ in kan_experts}
        for xb in batches:
            rows = _rows_through(model, xb, si)
            n_inp += rows.size
            s_inp += rows.sum()
            ss_inp += (rows * rows).sum()
            for e, expert in kan_experts:
                c, s, ss = expert.edge_base_moments(rows)
                acc[e][0] += c
                acc[e][1] += s
                acc[e][2] += ss
        var_input = ss_inp / n_inp - (s_inp / n_inp) ** 2
        if var_input <= 0.0:
            raise DomainError(f"degenerate data: Var[x] = 0 at stage {name}")
        for e, expert in kan_experts:
            c, s, ss = acc[e]
            var_base = ss / c - (s / c) ** 2
            stats.per_layer[f"{name}.experts.{e}"] = (var_input, var_base)
            if var_base <= 0.0:
                warnings.warn(f"Var[F(x)] = 0 at {name}.experts.{e}; w_b left as-is")
                continue
            ratio = (var_base / var_input if mode == "as_written"
                     else var_input / var_base)
            w_b = expert.params["w_b"]
            w_b[...] = rng.normal(w_b.shape, 0.0, np.sqrt(ratio))
    return stats


# -- checkpoint I/O --------------------------------------------------------

def _config_items(cfg: ModelConfig):
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        yield f.name, value


def _config_from_items(items: dict) -> ModelConfig:
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name not in items:
            raise CheckpointError(f"manifest missing config.{f.name}")
        raw = items[f.name]
        if f.name == "experts":
            kwargs[f.name] = tuple(raw.split(","))
        elif f.type in ("int", int):
            kwargs[f.name] = int(raw)
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        elif f.type in ("bool", bool):
            kwargs[f.name] = raw == "True"
        else:
            kwargs[f.name] = raw
    return ModelConfig(**kwargs)


def save_checkpoint(model: ForecastModel, path):
    """Write ``manifest.txt`` (text metadata) + ``tensors.bin`` (LE float64)."""
    import os

    os.makedirs(path, exist_ok=True)
    arrays = model.state_arrays()
    lines = [f"format_version={CHECKPOINT_VERSION}"]
    for key, value in _config_items(model.config):
        lines.append(f"config.{key}={value}")
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        shape = "x".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"tensor.{name}={shape}:{offset}:{len(data)}")
        blobs.append(data)
        offset += len(data)
    lines.append(f"total_bytes={offset}")
    with open(os.path.join(path, "tensors.bin"), "wb") as fh:
        for blob in blobs:
            fh.write(blob)
    with open(os.path.join(path, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ForecastModel:
    import os

    manifest = os.path.join(path, "manifest.txt")
    blob_path = os.path.join(path, "tensors.bin")
    if not os.path.exists(manifest) or not os.path.exists(blob_path):
        raise CheckpointError(f"no checkpoint at {path}")
    config_items, tensor_specs, total = {}, [], None
    version = None
    with open(manifest, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            if key == "format_version":
                version = int(value)
            elif key == "total_bytes":
                total = int(value)
            elif key.startswith("config."):
                config_items[key[len("config."):]] = value
            elif key.startswith("tensor."):
                shape_s, off_s, len_s = value.rsplit(":", 2)
                shape = () if shape_s == "scalar" else tuple(
                    int(s) for s in shape_s.split("x"))
                tensor_specs.append((key[len("tensor."):], shape,
                                     int(off_s), int(len_s)))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    blob = open(blob_path, "rb").read()
    if total is None or len(blob) != total:
        raise CheckpointError(
            f"blob length {len(blob)} != declared {total} (truncated?)")
    model = ForecastModel(_config_from_items(config_items))
    arrays = model.state_arrays()
    seen = set()
    for name, shape, off, nbytes in tensor_specs:
        if name not in arrays:
            raise CheckpointError(f"unknown tensor {name!r} in checkpoint")
        target = arrays[name]
        if tuple(target.shape) != shape:
            raise CheckpointError(
                f"shape mismatch for {name}: {shape} vs {tuple(target.shape)}")
        if off + nbytes > len(blob) or nbytes != target.size * 8:
            raise CheckpointError(f"bad blob range for {name}")
        target[...] = np.frombuffer(blob[off:off + nbytes],
                                    dtype="<f8").reshape(shape)
        seen.add(name)
    missing = set(arrays) - seen
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    return model
