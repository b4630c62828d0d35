"""Network layers with hand-derived reverse-mode gradients.

Every layer follows the same contract: ``forward`` returns the output plus
an opaque cache, ``backward`` consumes that cache and the output cotangent
and returns a :class:`LayerGrads` whose ``d_params`` keys mirror the
layer's ``params`` dict.  There is no autodiff graph anywhere; gradients
are spelled out per layer and validated against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .basis import POLY_FAMILIES, BasisEval, SplineGrid, bspline_basis, poly_basis, silu
from .errors import ConfigError, ContractError, DimensionError, DomainError

KAN_VARIANTS = ("bspline", "chebyshev", "jacobi", "taylor", "wavelet")


@dataclass
class LayerGrads:
    d_input: np.ndarray
    d_params: dict


def xavier_uniform(rng, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform((n_out, n_in), -limit, limit)


class _Cache:
    """Backward cache tied to the layer that produced it."""

    __slots__ = ("owner", "data")

    def __init__(self, owner, **data):
        self.owner = owner
        self.data = data

    def of(self, layer):
        if self.owner is not layer:
            raise ContractError("backward called with a cache from a different forward")
        return self.data


class KanLayer:
    """One KAN layer: y_j = sum_i [ w_a[j,i] SiLU(x_i) + w_b[j,i] F_ji(x_i) ].

    ``F_ji`` is the per-edge base function: a coefficient combination of the
    configured family.  Spline/polynomial bases are shared across edges and
    contracted with one matmul; wavelets carry per-edge translation/scale
    and go through the fused kernels.
    """

    def __init__(self, n_in: int, n_out: int, variant: str = "bspline", *, rng,
                 grid: SplineGrid | None = None, order: int = 3,
                 jacobi_a: float = 1.0, jacobi_b: float = 1.0,
                 n_wavelets: int = 8, coeff_std: float = 0.1):
        if variant not in KAN_VARIANTS:
            raise ConfigError(f"unknown KAN variant {variant!r}")
        self.n_in = n_in
        self.n_out = n_out
        self.variant = variant
        self.grid = grid or SplineGrid.uniform()
        self.order = order
        self.jacobi_a = jacobi_a
        self.jacobi_b = jacobi_b
        if variant == "bspline":
            m = self.grid.n_basis
        elif variant == "wavelet":
            m = n_wavelets
        else:
            m = order + 1
        self.n_basis = m
        self.params = {
            "w_a": xavier_uniform(rng, n_out, n_in),
            "w_b": np.ones((n_out, n_in)),
            "coeffs": rng.normal((n_out, n_in, m), 0.0, coeff_std),
        }
        if variant == "wavelet":
            self.params["translations"] = rng.uniform((n_out, n_in, m), -2.0, 2.0)
            self.params["scales"] = rng.uniform((n_out, n_in, m), 0.5, 1.5)

    def _basis(self, flat_x: np.ndarray) -> BasisEval:
        if self.variant == "bspline":
            return bspline_basis(flat_x, self.grid)
        if self.variant in POLY_FAMILIES:
            return poly_basis(flat_x, self.variant, self.order,
                              self.jacobi_a, self.jacobi_b)
        raise ContractError("wavelet layers do not use the shared-basis path")

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(
                f"expected input [batch, {self.n_in}], got {x.shape}")
        p = self.params
        a, da = silu(x)
        if self.variant == "wavelet":
            y = a @ p["w_a"].T + kernels.wavelet_mix_forward(
                np.ascontiguousarray(x), p["w_b"], p["coeffs"],
                p["translations"], p["scales"])
            return y, _Cache(self, x=x, a=a, da=da)
        n_rows = x.shape[0]
        be = self._basis(x.ravel())
        phi = be.values.reshape(n_rows, self.n_in * self.n_basis)
        dphi = be.d_values.reshape(n_rows, self.n_in, self.n_basis)
        wc = (p["w_b"][:, :, None] * p["coeffs"]).reshape(self.n_out, -1)
        y = a @ p["w_a"].T + phi @ wc.T
        return y, _Cache(self, x=x, a=a, da=da, phi=phi, dphi=dphi, wc=wc)

    def backward(self, cache, d_y: np.ndarray) -> LayerGrads:
        c = cache.of(self)
        p = self.params
        a, da = c["a"], c["da"]
        d_wa = d_y.T @ a
        d_x = (d_y @ p["w_a"]) * da
        if self.variant == "wavelet":
            d_x_spl, d_wb, d_c, d_t, d_s = kernels.wavelet_mix_backward(
                np.ascontiguousarray(c["x"]), p["w_b"], p["coeffs"],
                p["translations"], p["scales"], np.ascontiguousarray(d_y))
            return LayerGrads(d_x + d_x_spl, {
                "w_a": d_wa, "w_b": d_wb, "coeffs": d_c,
                "translations": d_t, "scales": d_s,
            })
        n_rows = d_y.shape[0]
        m = (d_y.T @ c["phi"]).reshape(self.n_out, self.n_in, self.n_basis)
        d_wb = np.einsum("jim,jim->ji", p["coeffs"], m)
        d_coeffs = p["w_b"][:, :, None] * m
        t = (d_y @ c["wc"]).reshape(n_rows, self.n_in, self.n_basis)
        d_x += np.einsum("bim,bim->bi", c["dphi"], t)
        return LayerGrads(d_x, {"w_a": d_wa, "w_b": d_wb, "coeffs": d_coeffs})

    def edge_outputs(self, x: np.ndarray) -> np.ndarray:
        """Full per-edge activations phi_ji(x_bi), shape [batch, n_out, n_in]."""
        p = self.params
        a, _ = silu(x)
        if self.variant == "wavelet":
            z = (x[:, None, :, None] - p["translations"][None]) / p["scales"][None]
            psi = kernels.MEXICAN_HAT_NORM * (1.0 - z * z) * np.exp(-0.5 * z * z)
            base = np.einsum("bjiq,jiq->bji", psi, p["coeffs"])
        else:
            be = self._basis(x.ravel())
            phi = be.values.reshape(x.shape[0], self.n_in, self.n_basis)
            base = np.einsum("bim,jim->bji", phi, p["coeffs"])
        return a[:, None, :] * p["w_a"][None] + base * p["w_b"][None]

    def abs_edge_importance(self, x: np.ndarray, chunk: int = 256) -> np.ndarray:
        """mean_b sum_j |phi_ji(x_bi)| per input position i, shape [n_in]."""
        total = np.zeros(self.n_in)
        for lo in range(0, x.shape[0], chunk):
            total += np.abs(self.edge_outputs(x[lo:lo + chunk])).sum(axis=(0, 1))
        return total / x.shape[0]

    def edge_base_moments(self, x: np.ndarray, chunk_budget: int = 2_000_000):
        """Count/sum/sum-of-squares of every per-edge base output F_ji(x_bi).

        Streams over batch chunks so the [rows, n_out, n_in] edge tensor is
        never materialized whole; used by the pre-sampling initializer.
        """
        p = self.params
        n_rows = x.shape[0]
        step = max(1, min(n_rows, chunk_budget // max(1, self.n_out * self.n_in)))
        count, total, total_sq = 0, 0.0, 0.0
        for lo in range(0, n_rows, step):
            xc = x[lo:lo + step]
            if self.variant == "wavelet":
                z = (xc[:, None, :, None] - p["translations"][None]) / p["scales"][None]
                psi = kernels.MEXICAN_HAT_NORM * (1.0 - z * z) * np.exp(-0.5 * z * z)
                edges = np.einsum("bjiq,jiq->bji", psi, p["coeffs"])
            else:
                be = self._basis(xc.ravel())
                phi = be.values.reshape(xc.shape[0], self.n_in, self.n_basis)
                edges = np.einsum("bim,jim->bji", phi, p["coeffs"])
            count += edges.size
            total += edges.sum()
            total_sq += (edges * edges).sum()
        return count, total, total_sq


class LinearLayer:
    """Affine map y = x W^T + b (the non-KAN expert / ablation baseline)."""

    def __init__(self, n_in: int, n_out: int, *, rng):
        self.n_in = n_in
        self.n_out = n_out
        self.params = {"weight": xavier_uniform(rng, n_out, n_in),
                       "bias": np.zeros(n_out)}

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"expected input [batch, {self.n_in}], got {x.shape}")
        y = x @ self.params["weight"].T + self.params["bias"]
        return y, _Cache(self, x=x)

    def backward(self, cache, d_y: np.ndarray) -> LayerGrads:
        c = cache.of(self)
        return LayerGrads(
            d_y @ self.params["weight"],
            {"weight": d_y.T @ c["x"], "bias": d_y.sum(axis=0)},
        )


class RevInLayer:
    """Reversible per-sample, per-variable standardization with an affine map.

    ``normalize`` caches each (sample, variable) mean/std over the lookback
    axis; ``denormalize`` inverts the affine map and the standardization
    with those cached statistics.  The backward pass is split to match the
    surrounding network: ``backward_denorm`` first (producing the cotangent
    entering the network head), then ``backward_norm`` once the network has
    propagated back to the normalized input.
    """

    def __init__(self, n_vars: int, eps: float = 1e-5):
        self.n_vars = n_vars
        self.eps = eps
        self.params = {"affine_weight": np.ones(n_vars),
                       "affine_bias": np.zeros(n_vars)}

    def normalize(self, x: np.ndarray):
        if x.ndim != 3 or x.shape[2] != self.n_vars:
            raise DimensionError(f"expected [B, T, {self.n_vars}], got {x.shape}")
        if x.shape[1] < 2:
            raise DomainError("RevIN needs at least 2 time steps per window")
        mean = x.mean(axis=1, keepdims=True)
        std = np.sqrt(x.var(axis=1, keepdims=True) + self.eps)
        u = (x - mean) / std
        out = u * self.params["affine_weight"] + self.params["affine_bias"]
        return out, _Cache(self, x=x, mean=mean, std=std, u=u)

    def denormalize(self, y: np.ndarray, cache):
        if cache is None:
            raise ContractError("denormalize requires the cache from normalize")
        c = cache.of(self)
        w, b = self.params["affine_weight"], self.params["affine_bias"]
        cache.data["denorm_in"] = y  # needed for the affine gradients
        return (y - b) / w * c["std"] + c["mean"]

    def backward_denorm(self, cache, d_out: np.ndarray):
        c = cache.of(self)
        if "denorm_in" not in c:
            raise ContractError("backward_denorm before denormalize")
        w, b = self.params["affine_weight"], self.params["affine_bias"]
        centered = (c["denorm_in"] - b) / w
        d_y = d_out * c["std"] / w
        stash = {
            "d_mean": d_out.sum(axis=1, keepdims=True),
            "d_std": (d_out * centered).sum(axis=1, keepdims=True),
            "d_weight": -(d_out * centered * c["std"] / w).sum(axis=(0, 1)),
            "d_bias": -(d_out * c["std"] / w).sum(axis=(0, 1)),
        }
        return d_y, stash

    def backward_norm(self, cache, d_xn: np.ndarray, stash=None) -> LayerGrads:
        c = cache.of(self)
        x, mean, std, u = c["x"], c["mean"], c["std"], c["u"]
        w = self.params["affine_weight"]
        t_len = x.shape[1]
        d_weight = (d_xn * u).sum(axis=(0, 1))
        d_bias = d_xn.sum(axis=(0, 1))
        d_mean = np.zeros_like(mean)
        d_std = np.zeros_like(std)
        if stash is not None:
            d_mean += stash["d_mean"]
            d_std += stash["d_std"]
            d_weight += stash["d_weight"]
            d_bias += stash["d_bias"]
        d_u = d_xn * w
        d_x = d_u / std
        d_mean += -(d_u / std).sum(axis=1, keepdims=True)
        d_std += -(d_u * (x - mean) / (std * std)).sum(axis=1, keepdims=True)
        d_var = d_std / (2.0 * std)
        d_x += d_var * 2.0 * (x - mean) / t_len
        d_x += d_mean / t_len
        return LayerGrads(d_x, {"affine_weight": d_weight, "affine_bias": d_bias})


class BatchNormLayer:
    """1-D BatchNorm over the feature axis (rows are batch x variables).

    eps is tiny: in float64 it only needs to guard the all-constant-feature
    case, and a larger value would visibly bias the standardized output.
    """

    def __init__(self, n_features: int, momentum: float = 0.1, eps: float = 1e-12):
        self.n_features = n_features
        self.momentum = momentum
        self.eps = eps
        self.params = {"scale": np.ones(n_features), "shift": np.zeros(n_features)}
        self.buffers = {"running_mean": np.zeros(n_features),
                        "running_var": np.ones(n_features)}

    def forward(self, x: np.ndarray, mode: str = "train", update_stats: bool = True):
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise DimensionError(f"expected [batch, {self.n_features}], got {x.shape}")
        if mode == "train":
            if x.shape[0] < 2:
                raise DomainError("train-mode BatchNorm needs batch size >= 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                self.buffers["running_mean"] *= 1.0 - self.momentum
                self.buffers["running_mean"] += self.momentum * mean
                self.buffers["running_var"] *= 1.0 - self.momentum
                self.buffers["running_var"] += self.momentum * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        y = xhat * self.params["scale"] + self.params["shift"]
        return y, _Cache(self, x=x, xhat=xhat, inv_std=inv_std, mode=mode)

    def backward(self, cache, d_y: np.ndarray) -> LayerGrads:
        c = cache.of(self)
        xhat, inv_std = c["xhat"], c["inv_std"]
        d_scale = (d_y * xhat).sum(axis=0)
        d_shift = d_y.sum(axis=0)
        d_xhat = d_y * self.params["scale"]
        if c["mode"] == "train":
            n = d_y.shape[0]
            # batch statistics are functions of x: full three-term formula
            d_x = (inv_std / n) * (
                n * d_xhat
                - d_xhat.sum(axis=0)
                - xhat * (d_xhat * xhat).sum(axis=0)
            )
        else:
            d_x = d_xhat * inv_std
        return LayerGrads(d_x, {"scale": d_scale, "shift": d_shift})


class DropoutLayer:
    """Inverted dropout: train-mode zeroing with 1/(1-p) rescale."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise DomainError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.params = {}

    def forward(self, x: np.ndarray, mode: str = "train", rng=None):
        if mode != "train" or self.p == 0.0:
            return x, _Cache(self, mask=None)
        if rng is None:
            raise ContractError("train-mode dropout needs an rng")
        mask = (rng.uniform(x.shape) >= self.p) / (1.0 - self.p)
        return x * mask, _Cache(self, mask=mask)

    def backward(self, cache, d_y: np.ndarray) -> LayerGrads:
        c = cache.of(self)
        d_x = d_y if c["mask"] is None else d_y * c["mask"]
        return LayerGrads(d_x, {})
