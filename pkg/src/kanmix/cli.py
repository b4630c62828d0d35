"""Command-line interface: train, eval, gradcheck, inspect, synth, ablate.

Configuration comes from an INI-style key=value file with [data], [model]
and [train] sections; command-line flags override file values.  Every run
writes its effective merged config into a timestamped output directory.
Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import subprocess
import sys
import time
from dataclasses import fields, replace

import numpy as np

from .data import (SyntheticSpec, chrono_split, gen_synthetic, load_csv,
                   make_windows, parse_var_spec, standardize)
from .errors import (CheckpointError, ConfigError, ContractError, DimensionError,
                     DomainError, NumericalError, ParseError)
from .evaluation import (MetricReport, evaluate, export_expert_loads,
                         export_feature_weights, write_expert_loads_csv,
                         write_feature_weights_csv, write_metrics_csv)
from .model import ForecastModel, ModelConfig, load_checkpoint, save_checkpoint
from .numeric import SeededRng
from .train import TrainConfig, gradcheck_matrix, run_seeds

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# INI/flag key -> dataclass field
MODEL_KEYS = {
    "lookback": "lookback", "horizon": "horizon", "hidden": "hidden_dim",
    "blocks": "n_blocks", "experts": "experts", "topk": "top_k",
    "gate": "gate_mode", "gate_noise": "gate_noise", "dropout": "dropout",
    "lb_weight": "lb_weight", "presample": "presample",
    "presample_batches": "presample_batches",
    "presample_layers": "presample_layers", "seed": "seed", "layout": "layout",
    "grid_size": "grid_size", "spline_degree": "spline_degree",
    "spline_lo": "spline_lo", "spline_hi": "spline_hi",
    "poly_order": "poly_order", "jacobi_a": "jacobi_a", "jacobi_b": "jacobi_b",
    "n_wavelets": "n_wavelets", "coeff_std": "coeff_std",
    "use_revin": "use_revin",
}
TRAIN_KEYS = {
    "lr": "lr", "warmup": "warmup_steps", "epochs": "max_epochs",
    "patience": "patience", "batch": "batch_size", "seeds": "seeds",
    "lr_grid": "lr_grid", "decay_on_plateau": "decay_on_plateau",
}
DATA_KEYS = {"dataset", "profile", "name"}


class RunConfig:
    """Merged view of file config + flag overrides, validated up front."""

    def __init__(self):
        self.data = {"dataset": "", "profile": "ratio", "name": ""}
        self.model = {}
        self.train = {}
        self.deterministic = True
        self.out_dir = "runs"

    @staticmethod
    def _coerce(dataclass_type, field_name, raw):
        for f in fields(dataclass_type):
            if f.name != field_name:
                continue
            if field_name in ("experts",):
                return tuple(s.strip() for s in str(raw).split(","))
            if field_name in ("seeds", "lr_grid"):
                parts = [s.strip() for s in str(raw).split(",") if s.strip()]
                cast = int if field_name == "seeds" else float
                return tuple(cast(p) for p in parts)
            if f.type in ("int", int):
                return int(raw)
            if f.type in ("float", float):
                return float(raw)
            if f.type in ("bool", bool):
                if isinstance(raw, bool):
                    return raw
                return str(raw).lower() in ("1", "true", "yes", "on")
            return raw
        raise ConfigError(f"unknown field {field_name}")

    def load_file(self, path):
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path)
        for section in parser.sections():
            if section == "data":
                for key, value in parser.items(section):
                    if key not in DATA_KEYS:
                        raise ConfigError(f"unknown key [data] {key}")
                    self.data[key] = value
            elif section == "model":
                for key, value in parser.items(section):
                    if key not in MODEL_KEYS:
                        raise ConfigError(f"unknown key [model] {key}")
                    self.model[MODEL_KEYS[key]] = self._coerce(
                        ModelConfig, MODEL_KEYS[key], value)
            elif section == "train":
                for key, value in parser.items(section):
                    if key not in TRAIN_KEYS:
                        raise ConfigError(f"unknown key [train] {key}")
                    self.train[TRAIN_KEYS[key]] = self._coerce(
                        TrainConfig, TRAIN_KEYS[key], value)
            elif section == "run":
                for key, value in parser.items(section):
                    if key == "deterministic":
                        self.deterministic = value.lower() in ("1", "true", "yes")
                    elif key == "out_dir":
                        self.out_dir = value
                    else:
                        raise ConfigError(f"unknown key [run] {key}")
            else:
                raise ConfigError(f"unknown config section [{section}]")

    def apply_flags(self, args):
        flag_to_model = {
            "lookback": "lookback", "pred_len": "horizon", "hidden": "hidden_dim",
            "blocks": "n_blocks", "experts": "experts", "topk": "top_k",
            "presample": "presample", "lb_weight": "lb_weight",
            "layout": "layout", "gate": "gate_mode", "dropout": "dropout",
            "seed": "seed",
        }
        flag_to_train = {"lr": "lr", "seeds": "seeds", "epochs": "max_epochs",
                         "batch": "batch_size", "warmup": "warmup_steps",
                         "patience": "patience"}
        for flag, field_name in flag_to_model.items():
            value = getattr(args, flag, None)
            if value is not None:
                self.model[field_name] = self._coerce(ModelConfig, field_name, value)
        for flag, field_name in flag_to_train.items():
            value = getattr(args, flag, None)
            if value is not None:
                self.train[field_name] = self._coerce(TrainConfig, field_name, value)
        if getattr(args, "dataset", None):
            self.data["dataset"] = args.dataset
        if getattr(args, "profile", None):
            self.data["profile"] = args.profile
        if getattr(args, "out_dir", None):
            self.out_dir = args.out_dir
        if getattr(args, "deterministic", None) is not None:
            self.deterministic = args.deterministic

    def model_config(self, n_vars: int) -> ModelConfig:
        kwargs = dict(self.model)
        kwargs.setdefault("lookback", 96)
        kwargs.setdefault("horizon", 96)
        kwargs["n_vars"] = n_vars
        return ModelConfig(**kwargs)

    def train_config(self) -> TrainConfig:
        kwargs = dict(self.train)
        kwargs.setdefault("lb_weight", self.model.get("lb_weight", 1.0))
        if self.deterministic:
            kwargs["eval_batch"] = 1  # batch-1 test scoring contract
        return TrainConfig(**kwargs)

    def snapshot_lines(self):
        yield "[data]"
        for key in sorted(self.data):
            yield f"{key} = {self.data[key]}"
        yield "[model]"
        inv_model = {v: k for k, v in MODEL_KEYS.items()}
        cfg = self.model_config(n_vars=self.model.get("n_vars", 0) or 1)
        for f in fields(ModelConfig):
            if f.name == "n_vars":
                continue
            value = getattr(cfg, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            yield f"{inv_model.get(f.name, f.name)} = {value}"
        yield "[train]"
        inv_train = {v: k for k, v in TRAIN_KEYS.items()}
        tc = self.train_config()
        for f in fields(TrainConfig):
            if f.name == "eval_batch":
                continue
            value = getattr(tc, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            yield f"{inv_train.get(f.name, f.name)} = {value}"
        yield "[run]"
        yield f"deterministic = {self.deterministic}"
        yield f"out_dir = {self.out_dir}"


def load_run_config(args) -> RunConfig:
    rc = RunConfig()
    if getattr(args, "config", None):
        rc.load_file(args.config)
    rc.apply_flags(args)
    return rc


def load_dataset(rc: RunConfig, lookback: int):
    path = rc.data["dataset"]
    if not path:
        raise ConfigError("no dataset given (use --dataset or [data] dataset=...)")
    if not os.path.exists(path):
        raise ParseError(f"dataset file not found: {path}")
    if path.endswith((".cfg", ".ini")):
        ds = _load_synthetic_file(path)
    else:
        ds = load_csv(path, name=rc.data.get("name") or None)
    ds = chrono_split(ds, rc.data["profile"], lookback)
    return standardize(ds)


def _load_synthetic_file(path):
    parser = configparser.ConfigParser()
    parser.read(path)
    if "synthetic" not in parser:
        raise ConfigError(f"{path} has no [synthetic] section")
    section = parser["synthetic"]
    length = section.getint("length", 2000)
    noise = section.getfloat("noise", 0.0)
    seed = section.getint("seed", 0)
    variables = [parse_var_spec(value) for key, value in sorted(section.items())
                 if key.startswith("var")]
    if not variables:
        raise ConfigError("synthetic spec has no var<N> entries")
    spec = SyntheticSpec(length=length, variables=variables, noise=noise)
    name = os.path.splitext(os.path.basename(path))[0]
    return gen_synthetic(spec, SeededRng(seed), name=name)


def make_run_dir(base: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S") + f"-{os.getpid()}"
    path = os.path.join(base, f"run-{stamp}")
    os.makedirs(path, exist_ok=True)
    return path


def _git_describe() -> str:
    try:
        return subprocess.run(["git", "describe", "--always", "--dirty"],
                              capture_output=True, text=True, timeout=5,
                              cwd=os.path.dirname(os.path.abspath(__file__))
                              ).stdout.strip() or "unknown"
    except Exception:
        return "unknown"


def _write_run_info(run_dir, rc, seconds, extra=None):
    with open(os.path.join(run_dir, "run_info.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"timestamp={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        fh.write(f"git={_git_describe()}\n")
        fh.write(f"seeds={','.join(str(s) for s in rc.train_config().seeds)}\n")
        fh.write(f"wall_clock_sec={seconds:.3f}\n")
        for key, value in (extra or {}).items():
            fh.write(f"{key}={value}\n")


def _write_snapshot(run_dir, rc):
    with open(os.path.join(run_dir, "config_snapshot.cfg"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(rc.snapshot_lines()) + "\n")


def _write_history(run_dir, seed, history):
    path = os.path.join(run_dir, f"history_seed{seed}.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for step, lr, loss in history.steps:
            fh.write(f"step={step} lr={lr:.8g} train_loss={loss:.10g}\n")
        for epoch, val in history.epochs:
            fh.write(f"epoch={epoch} val_mse={val:.10g}\n")


def _report_from_run(rc, name, cfg, run) -> MetricReport:
    return MetricReport(
        dataset=name, lookback=cfg.lookback, horizon=cfg.horizon,
        per_seed=run["per_seed"], mse_mean=run["mse_mean"],
        mse_std=run["mse_std"], mae_mean=run["mae_mean"],
        mae_std=run["mae_std"],
        n_windows=run["per_seed"][0]["n_windows"] if run["per_seed"] else 0,
        wall_clock=run["timing"]["seconds"],
    )


def cmd_train(args) -> int:
    rc = load_run_config(args)
    model_kwargs = rc.model
    lookback = model_kwargs.get("lookback", 96)
    ds = load_dataset(rc, lookback)
    model_cfg = rc.model_config(ds.n_vars)
    train_cfg = rc.train_config()
    run_dir = make_run_dir(rc.out_dir)
    _write_snapshot(run_dir, rc)
    t0 = time.perf_counter()
    log = print if not args.quiet else None

    if args.lr_grid:
        rows = []
        best = None
        for lr in train_cfg.lr_grid:
            tc = replace(train_cfg, lr=lr)
            run = run_seeds(model_cfg, tc, ds, log=log)
            rows.append((lr, run))
            if best is None or run["mse_mean"] < best[1]["mse_mean"]:
                best = (lr, run)
        with open(os.path.join(run_dir, "grid_metrics.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("lr,mse_mean,mse_std,mae_mean,mae_std,best\n")
            for lr, run in rows:
                flag = "*" if lr == best[0] else ""
                fh.write(f"{lr:g},{run['mse_mean']:.10f},{run['mse_std']:.10f},"
                         f"{run['mae_mean']:.10f},{run['mae_std']:.10f},{flag}\n")
        run = best[1]
        print(f"best lr: {best[0]:g} (mse {run['mse_mean']:.6f})")
    else:
        run = run_seeds(model_cfg, train_cfg, ds, log=log)

    report = _report_from_run(rc, ds.name, model_cfg, run)
    write_metrics_csv(report, os.path.join(run_dir, "metrics.csv"))
    for seed, history in run["histories"].items():
        _write_history(run_dir, seed, history)
    for seed, model in run["models"].items():
        save_checkpoint(model, os.path.join(run_dir, f"ckpt_seed{seed}"))
    _write_run_info(run_dir, rc, time.perf_counter() - t0,
                    {"windows_per_sec": f"{run['timing']['windows_per_sec']:.1f}"})
    print(f"aggregate test mse={run['mse_mean']:.6f} mae={run['mae_mean']:.6f} "
          f"(out: {run_dir})")
    if run["incomplete"]:
        print("warning: at least one seed diverged; report flagged incomplete")
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = load_run_config(args)
    model = load_checkpoint(args.checkpoint)
    model_cfg = model.config
    if args.pred_len is not None and args.pred_len != model_cfg.horizon:
        raise ConfigError(f"horizon mismatch: checkpoint has P={model_cfg.horizon}, "
                          f"--pred-len gives P={args.pred_len}")
    ds = load_dataset(rc, model_cfg.lookback)
    if ds.n_vars != model_cfg.n_vars:
        raise ConfigError(f"variable-count mismatch: checkpoint C={model_cfg.n_vars}, "
                          f"dataset C={ds.n_vars}")
    batch = 1 if rc.deterministic else 256
    metrics = evaluate(model, ds, args.split, batch_size=batch)
    print(f"dataset={ds.name} split={args.split} T={model_cfg.lookback} "
          f"P={model_cfg.horizon}")
    print(f"mse={metrics['mse']:.10f} mae={metrics['mae']:.10f} "
          f"windows={metrics['n_windows']}")
    print(f"wall_clock={metrics['seconds']:.3f}s "
          f"windows_per_sec={metrics['windows_per_sec']:.1f}")
    if args.out_dir:
        run_dir = make_run_dir(args.out_dir)
        report = MetricReport(dataset=ds.name, lookback=model_cfg.lookback,
                              horizon=model_cfg.horizon,
                              per_seed=[{"seed": model_cfg.seed,
                                         "mse": metrics["mse"],
                                         "mae": metrics["mae"],
                                         "n_windows": metrics["n_windows"]}],
                              mse_mean=metrics["mse"], mae_mean=metrics["mae"],
                              n_windows=metrics["n_windows"],
                              wall_clock=metrics["seconds"])
        write_metrics_csv(report, os.path.join(run_dir, "metrics.csv"))
        _write_run_info(run_dir, rc, metrics["seconds"],
                        {"windows_per_sec": f"{metrics['windows_per_sec']:.1f}"})
        print(f"out: {run_dir}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    failed = False
    for entry in gradcheck_matrix():
        status = "PASS" if entry["passed"] else "FAIL"
        print(f"{entry['name']:32s} max_rel_err={entry['max_rel_err']:.3e} "
              f"tol={entry['tolerance']:.0e} {status}")
        if args.verbose:
            for tensor, err in sorted(entry["per_tensor"].items()):
                print(f"    {tensor:40s} {err:.3e}")
        failed |= not entry["passed"]
    return EXIT_NUMERIC if failed else EXIT_OK


PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot the interpretability exports written next to this script.\"\"\"
import csv, sys
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

with open("expert_loads.csv") as fh:
    rows = list(csv.reader(fh))
variables, experts = rows[0][1:], [r[0] for r in rows[1:]]
loads = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4))
im = ax1.imshow(loads, aspect="auto", cmap="viridis", vmin=0, vmax=1)
ax1.set_xticks(range(len(variables)), variables, rotation=90, fontsize=6)
ax1.set_yticks(range(len(experts)), experts)
ax1.set_title("top-1 expert load per variable")
fig.colorbar(im, ax=ax1)

with open("feature_weights.csv") as fh:
    rows = list(csv.reader(fh))[1:]
weights = [float(r[1]) for r in rows]
ax2.plot(weights)
ax2.set_xlabel("lookback position")
ax2.set_ylabel("mean |edge output|")
ax2.set_title("input-position importance")
fig.tight_layout()
fig.savefig("exports.png", dpi=150)
print("wrote exports.png")
"""


def cmd_inspect(args) -> int:
    rc = load_run_config(args)
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(rc, model.config.lookback)
    run_dir = make_run_dir(args.out_dir or rc.out_dir)
    matrix = export_expert_loads(model, ds, args.split)
    write_expert_loads_csv(matrix, os.path.join(run_dir, "expert_loads.csv"))
    train_windows = make_windows(ds, "train", model.config.lookback,
                                 model.config.horizon)
    n = min(len(train_windows), 512)
    xs, _ = train_windows.batch(range(n))
    weights = export_feature_weights(model, xs)
    write_feature_weights_csv(weights, os.path.join(run_dir, "feature_weights.csv"))
    with open(os.path.join(run_dir, "plot_exports.py"), "w", encoding="utf-8") as fh:
        fh.write(PLOT_SCRIPT)
    print(f"wrote expert_loads.csv ({matrix.counts.shape[0]}x"
          f"{matrix.counts.shape[1]}), feature_weights.csv "
          f"({len(weights)}), plot_exports.py (out: {run_dir})")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = _load_synthetic_file(args.spec)
    out = args.out or "synthetic.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("date," + ",".join(ds.var_names) + "\n")
        for i in range(ds.n_steps):
            row = ",".join(f"{v:.10g}" for v in ds.values[i])
            fh.write(f"{ds.timestamps[i]},{row}\n")
    print(f"wrote {out}: {ds.n_steps} steps x {ds.n_vars} variables "
          f"({','.join(ds.meta['generators'])})")
    return EXIT_OK


ABLATION_VARIANTS = (
    # (name, model-config overrides, train-config overrides)
    ("mok", {"layout": "single"}, {}),
    ("mol", {"layout": "single", "experts": ("linear",) * 4}, {}),
    ("wavkan", {"layout": "single", "experts": ("wavelet",), "top_k": 1}, {}),
    ("taylorkan", {"layout": "single", "experts": ("taylor",), "top_k": 1}, {}),
    ("linear", {"layout": "single", "experts": ("linear",), "top_k": 1}, {}),
    ("mok_lb0", {"layout": "single"}, {"lb_weight": 0.0}),
    ("mok_no_revin", {"layout": "single", "use_revin": False}, {}),
    ("deep", {"layout": "deep", "presample": "as_written"}, {}),
    ("deep_no_warmup", {"layout": "deep", "presample": "as_written"},
     {"warmup_steps": 0}),
    ("deep_no_presample", {"layout": "deep", "presample": "off"}, {}),
)


def cmd_ablate(args) -> int:
    rc = load_run_config(args)
    lookback = rc.model.get("lookback", 96)
    ds = load_dataset(rc, lookback)
    base_model = rc.model_config(ds.n_vars)
    base_train = rc.train_config()
    horizons = ([int(h) for h in args.horizons.split(",")]
                if args.horizons else [base_model.horizon])
    run_dir = make_run_dir(rc.out_dir)
    _write_snapshot(run_dir, rc)
    log = print if not args.quiet else None
    t0 = time.perf_counter()
    rows = []
    for name, model_over, train_over in ABLATION_VARIANTS:
        if args.only and name not in args.only.split(","):
            continue
        for horizon in horizons:
            mc = replace(base_model, horizon=horizon, **model_over)
            tc = replace(base_train, **train_over)
            if log:
                log(f"[ablate] {name} P={horizon}")
            run = run_seeds(mc, tc, ds, log=log)
            rows.append((name, horizon, run))
    with open(os.path.join(run_dir, "ablation.csv"), "w", encoding="utf-8") as fh:
        fh.write("variant,lookback,horizon,mse_mean,mse_std,mae_mean,mae_std,"
                 "lb_weight\n")
        for name, horizon, run in rows:
            fh.write(f"{name},{base_model.lookback},{horizon},"
                     f"{run['mse_mean']:.10f},{run['mse_std']:.10f},"
                     f"{run['mae_mean']:.10f},{run['mae_std']:.10f},"
                     f"{0.0 if name == 'mok_lb0' else base_train.lb_weight}\n")
    _write_run_info(run_dir, rc, time.perf_counter() - t0)
    for name, horizon, run in rows:
        print(f"{name:20s} P={horizon:<4d} mse={run['mse_mean']:.6f} "
              f"mae={run['mae_mean']:.6f}")
    print(f"out: {run_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kanmix",
        description="Mixture-of-KAN time-series forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_train_flags=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--dataset", help="CSV path or synthetic spec (.cfg)")
        p.add_argument("--profile", choices=["ett_hour", "ett_minute", "ratio"])
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                       default=None)
        p.add_argument("--quiet", action="store_true")
        if with_train_flags:
            p.add_argument("--lookback", type=int)
            p.add_argument("--pred-len", dest="pred_len", type=int)
            p.add_argument("--seeds")
            p.add_argument("--seed", type=int)
            p.add_argument("--lr", type=float)
            p.add_argument("--experts")
            p.add_argument("--topk", type=int)
            p.add_argument("--blocks", type=int)
            p.add_argument("--hidden", type=int)
            p.add_argument("--presample",
                           choices=["off", "as_written", "variance_preserving"])
            p.add_argument("--lb-weight", dest="lb_weight", type=float)
            p.add_argument("--layout", choices=["deep", "single"])
            p.add_argument("--gate", choices=["softmax", "sparse"])
            p.add_argument("--dropout", type=float)
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch", type=int)
            p.add_argument("--warmup", type=int)
            p.add_argument("--patience", type=int)

    p_train = sub.add_parser("train", help="train across seeds, write metrics")
    common(p_train)
    p_train.add_argument("--lr-grid", dest="lr_grid", action="store_true",
                         help="search the learning-rate grid, flag the best")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test",
                        choices=["train", "val", "test"])
    p_eval.set_defaults(func=cmd_eval)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference check of every layer")
    p_grad.add_argument("--verbose", action="store_true")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_inspect = sub.add_parser("inspect",
                               help="write interpretability exports")
    common(p_inspect, with_train_flags=False)
    p_inspect.add_argument("--checkpoint", required=True)
    p_inspect.add_argument("--split", default="test",
                           choices=["train", "val", "test"])
    p_inspect.set_defaults(func=cmd_inspect)

    p_synth = sub.add_parser("synth", help="generate a synthetic CSV")
    p_synth.add_argument("--spec", required=True, help="synthetic spec (.cfg)")
    p_synth.add_argument("--out")
    p_synth.set_defaults(func=cmd_synth)

    p_ablate = sub.add_parser("ablate",
                              help="run the model/strategy ablation matrix")
    common(p_ablate)
    p_ablate.add_argument("--horizons", help="comma list, e.g. 96,192")
    p_ablate.add_argument("--only", help="comma list of variant names")
    p_ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, DomainError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, DimensionError, ContractError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
