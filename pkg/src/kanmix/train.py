"""Training loop: Adam with warmup, total loss, early stopping, seed runs,
and the finite-difference gradient-check harness.

The total loss is mean-squared prediction error plus the load-balance
penalty summed over every mixture layer.  Training is bitwise reproducible
per seed: shuffling, dropout, gate noise and initialization each draw from
their own Philox substream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import TimeSeriesDataset, make_windows
from .errors import DimensionError, DomainError, NumericalError
from .model import ForecastModel, ModelConfig, presample_init
from .moe import load_balance_loss
from .numeric import SeededRng


@dataclass
class TrainConfig:
    lr: float = 1e-3
    warmup_steps: int = 500
    max_epochs: int = 10
    patience: int = 3
    batch_size: int = 32
    seeds: tuple = (0, 1, 2, 3)
    lb_weight: float = 1.0
    lr_grid: tuple = (1e-2, 1e-3, 1e-4, 1e-5)
    decay_on_plateau: bool = True
    eval_batch: int = 256  # internal validation batching (train loop only)

    def __post_init__(self):
        if self.lr <= 0:
            raise DomainError("lr must be > 0")
        if self.warmup_steps < 0:
            raise DomainError("warmup_steps must be >= 0")
        if self.patience < 1:
            raise DomainError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise DomainError("batch_size and max_epochs must be >= 1")


def total_loss(y_hat: np.ndarray, y: np.ndarray, decisions, lb_weight: float):
    """L = MSE(y, y_hat) + lb_weight * sum_layers CV^2(loads).

    Returns the scalar plus the gradient seeds: d(y_hat) and one d(loads)
    per mixture layer (None when lb_weight == 0).
    """
    if y_hat.shape != y.shape:
        raise DimensionError(f"prediction {y_hat.shape} vs target {y.shape}")
    diff = y_hat - y
    n = diff.size
    loss = float((diff * diff).sum() / n)
    d_y_hat = 2.0 * diff / n
    d_loads_list = None
    if lb_weight > 0.0 and decisions:
        d_loads_list = []
        for decision in decisions:
            cv2, d_loads = load_balance_loss(decision.loads)
            loss += lb_weight * cv2
            d_loads_list.append(lb_weight * d_loads)
    return loss, d_y_hat, d_loads_list


class Adam:
    """Standard bias-corrected Adam over a named parameter dict."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, grads: dict, lr: float):
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def lr_schedule(step: int, cfg: TrainConfig, n_decays: int = 0) -> float:
    """Linear warmup to lr, then constant with x0.5 per plateau epoch."""
    base = cfg.lr * (0.5 ** n_decays)
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return base * (step + 1) / cfg.warmup_steps
    return base


@dataclass
class History:
    steps: list = field(default_factory=list)    # (step, lr, train loss)
    epochs: list = field(default_factory=list)   # (epoch, val mse)
    diverged: bool = False
    best_val: float = math.inf
    best_epoch: int = -1


def _validation_mse(model: ForecastModel, windows, batch: int) -> float:
    model.eval()
    total_sq, total_n = 0.0, 0
    for lo in range(0, len(windows), batch):
        idx = range(lo, min(lo + batch, len(windows)))
        xs, ys = windows.batch(idx)
        y_hat, _, _ = model.forward(xs)
        diff = y_hat - ys
        total_sq += float((diff * diff).sum())
        total_n += diff.size
    return total_sq / total_n


def fit(model: ForecastModel, ds: TimeSeriesDataset, cfg: TrainConfig,
        log=None) -> History:
    """Train with shuffled batches, per-epoch validation and early stopping.

    Restores the best-validation parameters before returning.  On a
    non-finite loss the run aborts with the best snapshot restored and
    ``history.diverged`` set.
    """
    mc = model.config
    train_windows = make_windows(ds, "train", mc.lookback, mc.horizon)
    val_windows = make_windows(ds, "val", mc.lookback, mc.horizon)
    shuffle_rng = SeededRng(mc.seed, stream=1)
    layer_rng = SeededRng(mc.seed, stream=2)

    if mc.presample != "off":
        order = range(min(len(train_windows),
                          mc.presample_batches * cfg.batch_size))
        batches = [train_windows.batch(range(lo, min(lo + cfg.batch_size,
                                                     len(train_windows))))[0]
                   for lo in range(0, len(order), cfg.batch_size)]
        presample_init(model, batches)

    adam = Adam(model.named_params())
    history = History()
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    step = 0
    n_decays = 0
    since_improve = 0
    for epoch in range(cfg.max_epochs):
        model.train()
        perm = shuffle_rng.permutation(len(train_windows))
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            xs, ys = train_windows.batch(idx)
            y_hat, decisions, cache = model.forward(xs, rng=layer_rng)
            loss, d_y_hat, d_loads = total_loss(y_hat, ys, decisions,
                                                cfg.lb_weight)
            if not math.isfinite(loss):
                history.diverged = True
                for k, v in model.state_arrays().items():
                    v[...] = best_state[k]
                if log:
                    log(f"diverged at step {step}; best checkpoint restored")
                return history
            grads, _ = model.backward(cache, d_y_hat, d_loads)
            lr_t = lr_schedule(step, cfg, n_decays)
            adam.step(grads, lr_t)
            history.steps.append((step, lr_t, loss))
            step += 1
        val_mse = _validation_mse(model, val_windows, cfg.eval_batch)
        history.epochs.append((epoch, val_mse))
        if log:
            log(f"epoch {epoch}: val_mse={val_mse:.6f}")
        if val_mse < history.best_val:
            history.best_val = val_mse
            history.best_epoch = epoch
            since_improve = 0
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
        else:
            since_improve += 1
            if cfg.decay_on_plateau:
                n_decays += 1
            if since_improve >= cfg.patience:
                break
    for k, v in model.state_arrays().items():
        v[...] = best_state[k]
    model.eval()
    return history


def run_seeds(model_cfg: ModelConfig, train_cfg: TrainConfig,
              ds: TimeSeriesDataset, seeds=None, log=None) -> dict:
    """One training run per seed; per-seed and aggregate test metrics."""
    from .evaluation import evaluate

    seeds = tuple(seeds if seeds is not None else train_cfg.seeds)
    if not seeds:
        raise DomainError("run_seeds needs at least one seed")
    per_seed = []
    models, histories = {}, {}
    timing = {"seconds": 0.0, "windows_per_sec": 0.0}
    incomplete = False
    for seed in seeds:
        cfg_s = replace(model_cfg, seed=int(seed))
        model = ForecastModel(cfg_s)
        history = fit(model, ds, train_cfg, log=log)
        if history.diverged:
            incomplete = True
        metrics = evaluate(model, ds, "test", batch_size=train_cfg.eval_batch)
        per_seed.append({"seed": int(seed), "mse": metrics["mse"],
                         "mae": metrics["mae"], "diverged": history.diverged,
                         "n_windows": metrics["n_windows"],
                         "best_val": history.best_val})
        models[int(seed)] = model
        histories[int(seed)] = history
        timing["seconds"] += metrics["seconds"]
        timing["windows_per_sec"] = metrics["windows_per_sec"]
        if log:
            log(f"seed {seed}: test mse={metrics['mse']:.6f} "
                f"mae={metrics['mae']:.6f}")
    mses = np.array([r["mse"] for r in per_seed])
    maes = np.array([r["mae"] for r in per_seed])
    return {
        "per_seed": per_seed,
        "mse_mean": float(mses.mean()), "mse_std": float(mses.std()),
        "mae_mean": float(maes.mean()), "mae_std": float(maes.std()),
        "incomplete": incomplete,
        "models": models,
        "histories": histories,
        "timing": timing,
    }


# -- finite-difference gradient checking ------------------------------------

def _rel_err(a: float, b: float, floor: float = 1e-4) -> float:
    # entries with |grad| below the floor are compared on an absolute scale:
    # central differences carry ~eps*|loss|/h of rounding noise, which would
    # otherwise swamp the ratio for exactly-zero gradients
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_check_params(loss_fn, grads: dict, params: dict, h: float = 1e-5,
                    max_entries: int = 24, rng: SeededRng | None = None) -> dict:
    """Central finite differences on (a sample of) every parameter entry.

    ``loss_fn()`` re-evaluates the scalar loss with the current parameter
    values; ``grads`` holds the analytic gradient per tensor.  Returns the
    max relative error per tensor name.
    """
    rng = rng or SeededRng(0, stream=9)
    report = {}
    for name, p in params.items():
        g = grads[name]
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        n = flat.shape[0]
        if n <= max_entries:
            entries = np.arange(n)
        else:
            entries = np.unique(rng.integers(0, n, (max_entries,)))
        worst = 0.0
        for i in entries:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            worst = max(worst, _rel_err(fd, float(gflat[i])))
        report[name] = worst
    return report


def grad_check(builder, tolerance: float, h: float = 1e-5,
               max_entries: int = 24) -> dict:
    """Run an fd check on a (loss_fn, grads, params) triple from ``builder``.

    ``builder()`` must return ``(loss_fn, grads, params)`` where grads are
    the analytic gradients of ``loss_fn`` at the current parameters.
    """
    loss_fn, grads, params = builder()
    report = fd_check_params(loss_fn, grads, params, h=h,
                             max_entries=max_entries)
    worst = max(report.values()) if report else 0.0
    return {"per_tensor": report, "max_rel_err": worst,
            "passed": worst < tolerance, "tolerance": tolerance}


def _weighted_sum_builder(layer, x, rng, forward=None, backward=None):
    """loss = sum(w * y) for a fixed random cotangent w; checks params + input."""
    fwd = forward or (lambda: layer.forward(x)[0])
    y0 = fwd()
    w = rng.normal(y0.shape)

    def loss_fn():
        return float((w * fwd()).sum())

    if backward is None:
        _, cache = layer.forward(x)
        g = layer.backward(cache, w)
    else:
        g = backward(w)
    grads = dict(g.d_params)
    grads["input"] = g.d_input
    params = dict(layer.params)
    params["input"] = x
    return loss_fn, grads, params


def gradcheck_matrix(h: float = 1e-5, max_entries: int = 16) -> list:
    """Finite-difference reports for every layer kind plus a tiny full model.

    Entries: Linear (tol 1e-7), the four KAN variants, the RevIN pair,
    eval-mode BatchNorm, sparse eval-routed and dense softmax mixtures
    (tol 1e-5 each), and a two-block model through the total loss (1e-4).
    """
    from .layers import BatchNormLayer, KanLayer, LinearLayer, RevInLayer
    from .moe import MoKLayer

    rng = SeededRng(1234)
    entries = []

    def add(name, tolerance, builder):
        entries.append({"name": name, **grad_check(builder, tolerance, h=h,
                                                   max_entries=max_entries)})

    add("linear", 1e-7, lambda: _weighted_sum_builder(
        LinearLayer(5, 4, rng=rng), rng.normal((6, 5)), rng))

    for variant in ("bspline", "jacobi", "taylor", "wavelet"):
        layer = KanLayer(4, 3, variant, rng=rng)
        x = rng.normal((5, 4), 0.0, 0.8)
        add(f"kan-{variant}", 1e-5,
            lambda layer=layer, x=x: _weighted_sum_builder(layer, x, rng))

    def revin_builder():
        revin = RevInLayer(3)
        revin.params["affine_weight"][...] = rng.uniform(3, 0.5, 1.5)
        revin.params["affine_bias"][...] = rng.normal(3, 0.0, 0.3)
        x = rng.normal((2, 6, 3))
        mix = rng.normal((4, 6), 0.0, 0.5)  # fixed linear head T -> P

        def fwd():
            xn, cache = revin.normalize(x)
            mid = np.einsum("pt,btc->bpc", mix, xn)
            return revin.denormalize(mid, cache)

        w = rng.normal((2, 4, 3))

        def loss_fn():
            return float((w * fwd()).sum())

        xn, cache = revin.normalize(x)
        mid = np.einsum("pt,btc->bpc", mix, xn)
        revin.denormalize(mid, cache)
        d_mid, stash = revin.backward_denorm(cache, w)
        d_xn = np.einsum("pt,bpc->btc", mix, d_mid)
        g = revin.backward_norm(cache, d_xn, stash)
        grads = dict(g.d_params)
        grads["input"] = g.d_input
        params = dict(revin.params)
        params["input"] = x
        return loss_fn, grads, params

    add("revin-pair", 1e-5, revin_builder)

    def bn_builder():
        bn = BatchNormLayer(5)
        bn.buffers["running_mean"][...] = rng.normal(5, 0.0, 0.5)
        bn.buffers["running_var"][...] = rng.uniform(5, 0.5, 1.5)
        bn.params["scale"][...] = rng.uniform(5, 0.5, 1.5)
        bn.params["shift"][...] = rng.normal(5, 0.0, 0.5)
        x = rng.normal((6, 5))
        return _weighted_sum_builder(
            bn, x, rng, forward=lambda: bn.forward(x, "eval")[0],
            backward=lambda w: bn.backward(bn.forward(x, "eval")[1], w))

    add("batchnorm-eval", 1e-5, bn_builder)

    def mok_builder(gate_mode):
        mok = MoKLayer(5, 4, ("bspline", "jacobi", "taylor", "wavelet"),
                       rng=rng, k=2, gate_mode=gate_mode)
        mok.gating.w_g[...] = rng.normal(mok.gating.w_g.shape, 0.0, 0.5)
        x = rng.normal((6, 5), 0.0, 0.8)
        w = rng.normal((6, 4))

        def run():
            y, decision, cache = mok.forward(x, "eval")
            cv2, d_loads = load_balance_loss(decision.loads)
            return float((w * y).sum()) + cv2, cache, d_loads

        def loss_fn():
            return run()[0]

        _, cache, d_loads = run()
        g = mok.backward(cache, w, d_loads)
        grads = dict(g.d_params)
        grads["input"] = g.d_input
        params = dict(mok.named_params())
        params["input"] = x
        return loss_fn, grads, params

    add("mok-sparse-frozen-routing", 1e-5, lambda: mok_builder("sparse"))
    add("mok-softmax-dense", 1e-5, lambda: mok_builder("softmax"))

    def model_builder():
        cfg = ModelConfig(lookback=8, horizon=4, n_vars=2, hidden_dim=8,
                          n_blocks=1, seed=3)
        model = ForecastModel(cfg).eval()
        for name, arr in model.named_params().items():
            if name.endswith("gate.w_g"):
                arr[...] = rng.normal(arr.shape, 0.0, 0.3)
        x = rng.normal((5, 8, 2))
        y = rng.normal((5, 4, 2))

        def run():
            y_hat, decisions, cache = model.forward(x)
            loss, d_y_hat, d_loads = total_loss(y_hat, y, decisions, 1.0)
            return loss, d_y_hat, d_loads, cache

        def loss_fn():
            return run()[0]

        _, d_y_hat, d_loads, cache = run()
        grads, _ = model.backward(cache, d_y_hat, d_loads)
        return loss_fn, grads, model.named_params()

    add("full-model-tiny", 1e-4, model_builder)
    return entries
