"""Gating networks, the mixture-of-KAN layer and the load-balancing loss.

A mixture layer holds N expert layers (KAN variants and/or plain Linear)
behind a gating network.  The dense softmax gate activates every expert;
the sparse gate keeps only the top-k logits per row (noisy during
training) so each expert runs on just the rows routed to it.  Per-expert
"loads" are the column sums of the gate weights over a batch and feed the
coefficient-of-variation penalty that keeps experts evenly used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, DomainError
from .layers import KanLayer, LayerGrads, LinearLayer, _Cache
from .numeric import softmax_rows

EXPERT_KINDS = ("bspline", "chebyshev", "jacobi", "taylor", "wavelet", "linear")
GATE_MODES = ("softmax", "sparse")
NOISE_MODES = ("stochastic", "literal")


@dataclass
class GatingParams:
    w_g: np.ndarray       # [d_in, N]
    w_noise: np.ndarray   # [d_in, N]
    k: int
    mode: str = "sparse"
    noise_mode: str = "stochastic"

    def __post_init__(self):
        n = self.w_g.shape[1]
        if not 1 <= self.k <= n:
            raise ConfigError(f"top-k {self.k} out of range for {n} experts")
        if self.mode not in GATE_MODES:
            raise ConfigError(f"unknown gate mode {self.mode!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"unknown noise mode {self.noise_mode!r}")

    @classmethod
    def create(cls, d_in: int, n_experts: int, k: int, mode: str = "sparse",
               noise_mode: str = "stochastic", rng=None) -> "GatingParams":
        # w_g zero: uniform routing at step 0.  w_noise small-random: keeps
        # the noise channel's row standardization non-degenerate (its spread
        # would otherwise be exactly zero) while leaving the stochastic
        # noise scale at softplus(~0) as usual.
        w_noise = (rng.normal((d_in, n_experts), 0.0, 0.05)
                   if rng is not None else np.zeros((d_in, n_experts)))
        return cls(w_g=np.zeros((d_in, n_experts)), w_noise=w_noise,
                   k=k, mode=mode, noise_mode=noise_mode)


@dataclass
class GateDecision:
    weights: np.ndarray       # [rows, N]; row-sparse in sparse mode
    topk_indices: np.ndarray  # [rows, k]
    loads: np.ndarray         # [N]: column sums of weights


def _softplus(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _topk_indices(h: np.ndarray, k: int) -> np.ndarray:
    # stable sort on -h: ties resolve to the lowest expert index
    return np.argsort(-h, axis=1, kind="stable")[:, :k]


def _decision(weights: np.ndarray, k: int) -> GateDecision:
    return GateDecision(weights=weights,
                        topk_indices=_topk_indices(weights, k),
                        loads=weights.sum(axis=0))


def gate_softmax(gp: GatingParams, x: np.ndarray):
    """Dense gate: softmax(x w_g), every expert active."""
    if gp.mode != "softmax":
        raise ContractError("gate_softmax called on a sparse-mode gate")
    h = x @ gp.w_g
    weights = softmax_rows(h)
    cache = {"x": x, "weights": weights, "mask": np.ones_like(weights, dtype=bool),
             "noise": None}
    return _decision(weights, min(gp.k, weights.shape[1])), cache


def gate_sparse(gp: GatingParams, x: np.ndarray, rng=None, mode: str = "eval"):
    """Noisy top-k gate: softmax over the k largest logits, rest masked out.

    Train mode perturbs the logits with eps * softplus(x w_noise),
    eps ~ N(0,1) (``noise_mode="literal"`` instead adds the row-standardized
    softplus term deterministically).  Eval mode routes on clean logits.
    """
    if gp.mode != "sparse":
        raise ContractError("gate_sparse called on a softmax-mode gate")
    n = gp.w_g.shape[1]
    if gp.k > n:
        raise ConfigError(f"top-k {gp.k} exceeds expert count {n}")
    clean = x @ gp.w_g
    noise = None
    h = clean
    if gp.noise_mode == "literal":
        raw = x @ gp.w_noise
        sp = _softplus(raw)
        mu = sp.mean(axis=1, keepdims=True)
        sd = np.sqrt(sp.var(axis=1, keepdims=True) + 1e-12)
        h = clean + (sp - mu) / sd
        noise = {"kind": "literal", "raw": raw, "sp": sp, "mu": mu, "sd": sd}
    elif mode == "train":
        if rng is None:
            raise ContractError("train-mode sparse gating needs an rng")
        raw = x @ gp.w_noise
        eps = rng.normal(clean.shape)
        h = clean + eps * _softplus(raw)
        noise = {"kind": "stochastic", "raw": raw, "eps": eps}
    topk = _topk_indices(h, gp.k)
    mask = np.zeros_like(h, dtype=bool)
    np.put_along_axis(mask, topk, True, axis=1)
    weights = softmax_rows(np.where(mask, h, -np.inf))
    cache = {"x": x, "weights": weights, "mask": mask, "noise": noise}
    return GateDecision(weights=weights, topk_indices=topk,
                        loads=weights.sum(axis=0)), cache


def _gate_backward(gp: GatingParams, cache, d_weights: np.ndarray):
    """Cotangents through softmax-over-survivors back to x, w_g, w_noise."""
    w = cache["weights"]
    # softmax jacobian, rows restricted to surviving logits (masked get 0)
    inner = (d_weights * w).sum(axis=1, keepdims=True)
    d_h = w * (d_weights - inner)
    x = cache["x"]
    d_wg = x.T @ d_h
    d_x = d_h @ gp.w_g.T
    d_wnoise = np.zeros_like(gp.w_noise)
    noise = cache["noise"]
    if noise is not None:
        if noise["kind"] == "stochastic":
            # no gradient through eps itself
            d_raw = d_h * noise["eps"] * _sigmoid(noise["raw"])
        else:
            sp, mu, sd = noise["sp"], noise["mu"], noise["sd"]
            zn = (sp - mu) / sd
            n = sp.shape[1]
            d_zn = d_h
            d_sp = (d_zn - d_zn.mean(axis=1, keepdims=True)
                    - zn * (d_zn * zn).mean(axis=1, keepdims=True)) / sd
            d_raw = d_sp * _sigmoid(noise["raw"])
        d_wnoise = x.T @ d_raw
        d_x += d_raw @ gp.w_noise.T
    return d_x, d_wg, d_wnoise


def load_balance_loss(loads: np.ndarray):
    """Squared coefficient of variation of the loads, with its gradient."""
    loads = np.asarray(loads, dtype=np.float64)
    n = loads.shape[0]
    mean = loads.mean()
    if mean <= 0.0:
        raise DomainError("load-balance loss needs a positive mean load")
    var = loads.var()
    cv2 = var / (mean * mean)
    d_loads = 2.0 * (loads - mean) / (n * mean * mean) - 2.0 * var / (n * mean ** 3)
    return cv2, d_loads


def make_expert(kind: str, n_in: int, n_out: int, *, rng, **kan_kwargs):
    if kind == "linear":
        return LinearLayer(n_in, n_out, rng=rng)
    if kind in EXPERT_KINDS:
        return KanLayer(n_in, n_out, variant=kind, rng=rng, **kan_kwargs)
    raise ConfigError(f"unknown expert kind {kind!r}")


class MoKLayer:
    """Mixture layer: y = sum_e gate(x)_e * expert_e(x), sparsely dispatched.

    Experts only run on the rows whose gate weight for them is nonzero; the
    combined output is identical to the dense weighted sum.
    """

    def __init__(self, n_in: int, n_out: int, expert_kinds, *, rng, k: int = 2,
                 gate_mode: str = "sparse", noise_mode: str = "stochastic",
                 **kan_kwargs):
        kinds = tuple(expert_kinds)
        if not kinds:
            raise ConfigError("a mixture layer needs at least one expert")
        self.n_in = n_in
        self.n_out = n_out
        self.expert_kinds = kinds
        self.experts = [make_expert(kind, n_in, n_out, rng=rng, **kan_kwargs)
                        for kind in kinds]
        self.gating = GatingParams.create(n_in, len(kinds), min(k, len(kinds)),
                                          gate_mode, noise_mode, rng=rng)

    def named_params(self) -> dict:
        out = {"gate.w_g": self.gating.w_g, "gate.w_noise": self.gating.w_noise}
        for i, expert in enumerate(self.experts):
            for name, arr in expert.params.items():
                out[f"experts.{i}.{name}"] = arr
        return out

    def forward(self, x: np.ndarray, mode: str = "train", rng=None):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"expected input [batch, {self.n_in}], got {x.shape}")
        if self.gating.mode == "softmax":
            decision, gate_cache = gate_softmax(self.gating, x)
        else:
            decision, gate_cache = gate_sparse(self.gating, x, rng, mode)
        weights = decision.weights
        y = np.zeros((x.shape[0], self.n_out))
        dispatch = []
        for e, expert in enumerate(self.experts):
            rows = np.nonzero(weights[:, e] > 0.0)[0]
            if rows.size == 0:
                dispatch.append(None)
                continue
            y_e, cache_e = expert.forward(x[rows])
            y[rows] += weights[rows, e, None] * y_e
            dispatch.append((rows, cache_e, y_e))
        cache = _Cache(self, gate=gate_cache, dispatch=dispatch, weights=weights)
        return y, decision, cache

    def backward(self, cache, d_y: np.ndarray, d_loads=None) -> LayerGrads:
        """Cotangents for the output and (optionally) the per-expert loads.

        ``d_loads`` carries the load-balance-loss gradient; loads are column
        sums of the gate weights, so it enters as a per-column addition to
        the weight cotangent.
        """
        c = cache.of(self)
        weights, dispatch = c["weights"], c["dispatch"]
        d_weights = np.zeros_like(weights)
        if d_loads is not None:
            d_weights += d_loads[None, :]
        d_x = np.zeros((weights.shape[0], self.n_in))
        d_params = {}
        for e, expert in enumerate(self.experts):
            entry = dispatch[e]
            if entry is None:
                for name, arr in expert.params.items():
                    d_params[f"experts.{e}.{name}"] = np.zeros_like(arr)
                continue
            rows, cache_e, y_e = entry
            d_weights[rows, e] += (d_y[rows] * y_e).sum(axis=1)
            grads_e = expert.backward(cache_e, d_y[rows] * weights[rows, e, None])
            d_x[rows] += grads_e.d_input
            for name, arr in grads_e.d_params.items():
                d_params[f"experts.{e}.{name}"] = arr
        d_x_gate, d_wg, d_wnoise = _gate_backward(self.gating, c["gate"], d_weights)
        d_x += d_x_gate
        d_params["gate.w_g"] = d_wg
        d_params["gate.w_noise"] = d_wnoise
        return LayerGrads(d_x, d_params)
