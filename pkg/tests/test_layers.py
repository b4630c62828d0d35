import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kanmix.basis import bspline_basis, poly_basis, silu, wavelet_basis
from kanmix.errors import ContractError, DomainError
from kanmix.layers import (BatchNormLayer, DropoutLayer, KanLayer, LinearLayer,
                           RevInLayer)
from kanmix.numeric import SeededRng
from kanmix.train import fd_check_params

VARIANTS = ("bspline", "chebyshev", "jacobi", "taylor", "wavelet")


def edge_loop_oracle(layer: KanLayer, x: np.ndarray) -> np.ndarray:
    """Scalar edge-by-edge evaluation: y_j = sum_i phi_ji(x_i)."""
    p = layer.params
    n_rows = x.shape[0]
    y = np.zeros((n_rows, layer.n_out))
    for b in range(n_rows):
        for j in range(layer.n_out):
            acc = 0.0
            for i in range(layer.n_in):
                xi = np.array([x[b, i]])
                a, _ = silu(xi)
                if layer.variant == "bspline":
                    vals = bspline_basis(xi, layer.grid).values[0]
                elif layer.variant == "wavelet":
                    vals = wavelet_basis(xi, p["translations"][j, i],
                                         p["scales"][j, i]).values[0]
                else:
                    vals = poly_basis(xi, layer.variant, layer.order,
                                      layer.jacobi_a, layer.jacobi_b).values[0]
                base = float(np.dot(p["coeffs"][j, i], vals))
                acc += p["w_a"][j, i] * a[0] + p["w_b"][j, i] * base
            y[b, j] = acc
    return y


class TestKanForward:
    def test_zero_parameters_give_zero(self):
        rng = SeededRng(1)
        for variant in VARIANTS:
            layer = KanLayer(3, 2, variant, rng=rng)
            layer.params["w_a"][...] = 0.0
            layer.params["w_b"][...] = 0.0
            y, _ = layer.forward(rng.normal((4, 3)))
            assert np.all(y == 0.0), variant

    def test_residual_only_path_is_silu(self):
        rng = SeededRng(2)
        layer = KanLayer(1, 1, "bspline", rng=rng)
        layer.params["w_a"][...] = 1.0
        layer.params["coeffs"][...] = 0.0
        x = rng.normal((6, 1))
        y, _ = layer.forward(x)
        assert np.abs(y - silu(x)[0]).max() < 1e-15

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_matches_edge_loop_oracle(self, variant):
        rng = SeededRng(3)
        layer = KanLayer(3, 2, variant, rng=rng)
        x = rng.normal((4, 3), 0.0, 0.9)
        y, _ = layer.forward(x)
        assert np.abs(y - edge_loop_oracle(layer, x)).max() < 1e-12

    def test_shape_mismatch(self):
        layer = KanLayer(3, 2, "taylor", rng=SeededRng(4))
        with pytest.raises(Exception):
            layer.forward(np.zeros((4, 5)))


class TestKanBackward:
    def test_zero_cotangent_gives_zero_grads(self):
        rng = SeededRng(5)
        for variant in VARIANTS:
            layer = KanLayer(3, 2, variant, rng=rng)
            _, cache = layer.forward(rng.normal((4, 3)))
            g = layer.backward(cache, np.zeros((4, 2)))
            assert np.all(g.d_input == 0.0)
            for arr in g.d_params.values():
                assert np.all(arr == 0.0)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_gradients_match_fd(self, variant):
        rng = SeededRng(6)
        layer = KanLayer(4, 3, variant, rng=rng)
        x = rng.normal((5, 4), 0.0, 0.8)
        w = rng.normal((5, 3))

        def loss():
            return float((w * layer.forward(x)[0]).sum())

        _, cache = layer.forward(x)
        g = layer.backward(cache, w)
        params = dict(layer.params)
        params["input"] = x
        grads = dict(g.d_params)
        grads["input"] = g.d_input
        report = fd_check_params(loss, grads, params, h=1e-5, max_entries=30)
        assert max(report.values()) < 1e-5, (variant, report)

    def test_batch_rows_independent(self):
        rng = SeededRng(7)
        layer = KanLayer(3, 2, "bspline", rng=rng)
        x = rng.normal((4, 3))
        _, cache = layer.forward(x)
        d_y = rng.normal((4, 2))
        g = layer.backward(cache, d_y)
        x2 = x.copy()
        x2[0] += 0.5  # perturb row 0 only
        _, cache2 = layer.forward(x2)
        g2 = layer.backward(cache2, d_y)
        assert np.array_equal(g.d_input[1:], g2.d_input[1:])

    def test_stale_cache_rejected(self):
        rng = SeededRng(8)
        a = KanLayer(3, 2, "taylor", rng=rng)
        b = KanLayer(3, 2, "taylor", rng=rng)
        _, cache = a.forward(rng.normal((2, 3)))
        with pytest.raises(ContractError):
            b.backward(cache, np.zeros((2, 2)))


class TestRevIn:
    def test_constant_series_normalizes_to_zero(self):
        revin = RevInLayer(2)
        x = np.full((3, 8, 2), 5.0)
        out, _ = revin.normalize(x)
        assert np.abs(out).max() < 1e-8  # eps floor absorbs zero variance

    def test_centering(self):
        revin = RevInLayer(3)
        x = SeededRng(9).normal((4, 16, 3), 2.0, 3.0)
        out, _ = revin.normalize(x)
        assert np.abs(out.mean(axis=1)).max() < 1e-10

    def test_round_trip_identity(self):
        revin = RevInLayer(3)
        revin.params["affine_weight"][...] = [0.7, 1.3, 2.0]
        revin.params["affine_bias"][...] = [0.1, -0.2, 0.5]
        x = SeededRng(10).normal((4, 16, 3), 1.0, 2.0)
        xn, cache = revin.normalize(x)
        back = revin.denormalize(xn, cache)
        assert np.abs(back - x).max() < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 12), st.integers(1, 4),
           st.floats(0.3, 3.0), st.floats(-2.0, 2.0))
    def test_round_trip_property(self, t_len, n_vars, weight, bias):
        revin = RevInLayer(n_vars)
        revin.params["affine_weight"][...] = weight
        revin.params["affine_bias"][...] = bias
        x = SeededRng(11).normal((2, t_len, n_vars), 0.5, 1.5)
        xn, cache = revin.normalize(x)
        assert np.abs(revin.denormalize(xn, cache) - x).max() < 1e-9

    def test_denorm_of_zeros_gives_cached_means(self):
        revin = RevInLayer(2)
        x = SeededRng(12).normal((3, 8, 2), 4.0, 1.0)
        _, cache = revin.normalize(x)
        out = revin.denormalize(np.zeros((3, 5, 2)), cache)
        means = x.mean(axis=1, keepdims=True)
        assert np.abs(out - means).max() < 1e-12

    def test_denorm_without_cache_rejected(self):
        revin = RevInLayer(2)
        with pytest.raises(ContractError):
            revin.denormalize(np.zeros((1, 4, 2)), None)

    def test_short_window_rejected(self):
        with pytest.raises(DomainError):
            RevInLayer(2).normalize(np.zeros((1, 1, 2)))


class TestBatchNorm:
    def test_train_output_standardized(self):
        bn = BatchNormLayer(4)
        x = SeededRng(13).normal((64, 4), 3.0, 2.0)
        y, _ = bn.forward(x, "train")
        assert np.abs(y.mean(axis=0)).max() < 1e-8
        assert np.abs(y.var(axis=0) - 1.0).max() < 1e-8

    def test_eval_identity_with_unit_stats(self):
        bn = BatchNormLayer(4)
        x = SeededRng(14).normal((8, 4))
        y, _ = bn.forward(x, "eval")
        assert np.abs(y - x).max() < 1e-10

    def test_train_needs_two_rows(self):
        with pytest.raises(DomainError):
            BatchNormLayer(4).forward(np.zeros((1, 4)), "train")

    @pytest.mark.parametrize("mode", ["train", "eval"])
    def test_backward_matches_fd(self, mode):
        rng = SeededRng(15)
        bn = BatchNormLayer(3)
        bn.params["scale"][...] = rng.uniform(3, 0.5, 1.5)
        bn.params["shift"][...] = rng.normal(3, 0.0, 0.3)
        bn.buffers["running_mean"][...] = rng.normal(3, 0.0, 0.5)
        bn.buffers["running_var"][...] = rng.uniform(3, 0.5, 1.5)
        x = rng.normal((6, 3))
        w = rng.normal((6, 3))

        def loss():
            return float((w * bn.forward(x, mode, update_stats=False)[0]).sum())

        _, cache = bn.forward(x, mode, update_stats=False)
        g = bn.backward(cache, w)
        params = {"scale": bn.params["scale"], "shift": bn.params["shift"],
                  "input": x}
        grads = dict(g.d_params)
        grads["input"] = g.d_input
        report = fd_check_params(loss, grads, params, h=1e-5)
        assert max(report.values()) < 1e-5, (mode, report)

    def test_running_stats_updated_only_in_train(self):
        bn = BatchNormLayer(2)
        x = SeededRng(16).normal((32, 2), 1.0, 2.0)
        bn.forward(x, "eval")
        assert np.all(bn.buffers["running_mean"] == 0.0)
        bn.forward(x, "train")
        assert np.abs(bn.buffers["running_mean"] - 0.1 * x.mean(0)).max() < 1e-12


class TestDropout:
    def test_p_zero_is_identity(self):
        x = SeededRng(17).normal((5, 4))
        y, _ = DropoutLayer(0.0).forward(x, "train", SeededRng(0))
        assert np.array_equal(y, x)

    def test_eval_identity_any_p(self):
        x = SeededRng(18).normal((5, 4))
        y, _ = DropoutLayer(0.9).forward(x, "eval")
        assert np.array_equal(y, x)

    def test_unbiased_in_expectation(self):
        x = np.ones((1000, 1000))
        y, _ = DropoutLayer(0.3).forward(x, "train", SeededRng(19))
        assert abs(y.mean() - 1.0) < 0.01

    def test_backward_uses_mask(self):
        x = SeededRng(20).normal((64, 8))
        drop = DropoutLayer(0.5)
        y, cache = drop.forward(x, "train", SeededRng(21))
        g = drop.backward(cache, np.ones_like(x))
        assert np.array_equal(g.d_input == 0.0, y == 0.0)

    def test_invalid_p(self):
        with pytest.raises(DomainError):
            DropoutLayer(1.0)


class TestLinear:
    def test_identity(self):
        layer = LinearLayer(3, 3, rng=SeededRng(22))
        layer.params["weight"][...] = np.eye(3)
        layer.params["bias"][...] = 0.0
        x = SeededRng(23).normal((4, 3))
        y, _ = layer.forward(x)
        assert np.array_equal(y, x)

    def test_zero_input_gives_bias(self):
        layer = LinearLayer(3, 2, rng=SeededRng(24))
        layer.params["bias"][...] = [1.5, -0.5]
        y, _ = layer.forward(np.zeros((3, 3)))
        assert np.array_equal(y, np.tile([1.5, -0.5], (3, 1)))

    def test_gradients_match_fd(self):
        rng = SeededRng(25)
        layer = LinearLayer(4, 3, rng=rng)
        x = rng.normal((5, 4))
        w = rng.normal((5, 3))

        def loss():
            return float((w * layer.forward(x)[0]).sum())

        _, cache = layer.forward(x)
        g = layer.backward(cache, w)
        params = dict(layer.params)
        params["input"] = x
        grads = dict(g.d_params)
        grads["input"] = g.d_input
        report = fd_check_params(loss, grads, params, h=1e-5)
        assert max(report.values()) < 1e-7, report
