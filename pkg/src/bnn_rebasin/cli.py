"""Command-line harness tying the library into reproducible pipelines.

Every subcommand reads/writes checkpoints, emits the CSV schemas defined in
evaluation, and is deterministic given its --seed. Exit codes: 0 success,
1 argument error, 2 data/format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from . import evaluation as ev
from . import posterior as post
from .data import Dataset, load_mnist_dir, subset, synthetic_mnist_like
from .errors import DataFormatError, NumericalError
from .inference import (HmcConfig, desk_hmc_config, hmc_sample, train_ensemble,
                        train_map, train_vi)
from .model import ModelConfig, init_weights
from .numerics import Rng
from .rebasin import MATCH_METHODS, align_sample_set

SUBCOMMANDS = ("train-ensemble", "train-vi", "sample-hmc", "rebasin",
               "not-experiment", "interp", "summarize", "eval-table1",
               "sigma-hist", "prune-sweep", "merge")

CSV_SCHEMAS = {
    "interp": ["lambda", "loss", "accuracy", "not"],
    "not_experiment": ["seed", "not_init", "not_trained", "l2_after_match",
                       "barrier"],
    "table1": ["method", "representation", "agreement", "tv", "acc_samples",
               "acc_mean"],
    "sigma_hist": ["method", "representation", "bin_lo", "bin_hi", "count"],
    "prune": ["variant", "retain_fraction", "accuracy"],
}


class CliArgumentError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliArgumentError(message)


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str, fields, rows) -> None:
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(_format_cell(row[f]) for f in fields))
    ckpt.atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _write_json(path: str, payload: dict) -> None:
    ckpt.atomic_write_bytes(path, (json.dumps(payload, indent=2, sort_keys=True)
                                   + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# Config file + flag merging
# ---------------------------------------------------------------------------

_CONFIG_TYPES = {
    "seed": int, "hidden": int, "prior_std": float, "members": int,
    "epochs": int, "lr": float, "batch_size": int, "init_sigma": float,
    "burn_in": int, "thin": int, "leapfrog": int, "step_size": float,
    "samples": int, "adapt": bool, "mix_permutations": bool,
    "data_dir": str, "train_size": int, "test_size": int, "subset": int,
    "probe_size": int, "method": str, "points": int, "draws": int,
    "bins": int, "fractions": str, "nots": str, "include_biases": bool,
    "grid": int, "out_dir": str,
}


def load_config(path: str | None) -> dict:
    """Validate config keys and value types before any work starts."""
    if path is None:
        return {}
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise DataFormatError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"bad config JSON: {e}") from e
    if not isinstance(raw, dict):
        raise CliArgumentError("config must be a JSON object")
    for key, value in raw.items():
        if key not in _CONFIG_TYPES:
            raise CliArgumentError(f"unknown config key {key!r}")
        want = _CONFIG_TYPES[key]
        if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            continue
        if not isinstance(value, want) or (want is int and isinstance(value, bool)):
            raise CliArgumentError(
                f"config key {key!r} must be {want.__name__}, got {type(value).__name__}")
    return raw


def pick(args, config: dict, key: str, default=None):
    """Precedence: explicit flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _require_seed(args, config) -> int:
    seed = pick(args, config, "seed")
    if seed is None:
        raise CliArgumentError("--seed is required for stochastic commands")
    return int(seed)


# ---------------------------------------------------------------------------
# Shared flags and dataset resolution
# ---------------------------------------------------------------------------

def _add_data_flags(sp):
    sp.add_argument("--data-dir", dest="data_dir",
                    help="directory with the four IDX files (or $BNN_DATA_DIR)")
    sp.add_argument("--train-size", dest="train_size", type=int)
    sp.add_argument("--test-size", dest="test_size", type=int)
    sp.add_argument("--subset", dest="subset", type=int,
                    help="subsample the training set to this many rows")


def _add_model_flags(sp):
    sp.add_argument("--hidden", dest="hidden", type=int)
    sp.add_argument("--prior-std", dest="prior_std", type=float)


def _add_common(sp):
    sp.add_argument("--config", dest="config", help="JSON config file")
    sp.add_argument("--seed", dest="seed", type=int)


def resolve_datasets(args, config, seed: int) -> tuple[Dataset, Dataset]:
    """IDX files when a data dir is given (flag or $BNN_DATA_DIR), otherwise
    the synthetic stand-in; the train subset is seeded from `seed`."""
    rng = Rng(seed).split("data")
    data_dir = pick(args, config, "data_dir") or os.environ.get("BNN_DATA_DIR")
    if data_dir:
        train, test = load_mnist_dir(data_dir)
    else:
        train, test = synthetic_mnist_like(
            int(pick(args, config, "train_size", 2000)),
            int(pick(args, config, "test_size", 1000)),
            rng.split("synthetic"))
    n_sub = pick(args, config, "subset")
    if n_sub is not None:
        train = subset(train, int(n_sub), rng.split("subset"))
    test_size = pick(args, config, "test_size")
    if data_dir and test_size is not None and int(test_size) < test.size:
        test = subset(test, int(test_size), rng.split("test-subset"))
    return train, test


def _probe(train: Dataset, args, config, seed: int) -> Dataset:
    size = min(int(pick(args, config, "probe_size", 4096)), train.size)
    return subset(train, size, Rng(seed).split("probe"))


def _model_config(args, config) -> ModelConfig:
    return ModelConfig(hidden_size=int(pick(args, config, "hidden", 512)),
                       prior_std=float(pick(args, config, "prior_std", 1.0)))


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok != ""]
    except ValueError as e:
        raise CliArgumentError(f"bad {flag} list: {text!r}") from e


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError as e:
        raise CliArgumentError(f"bad {flag} list: {text!r}") from e


def _check_method(method: str) -> str:
    if method not in MATCH_METHODS:
        raise CliArgumentError(f"--method must be one of {MATCH_METHODS}")
    return method


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train_ensemble(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    train, test = resolve_datasets(args, config, seed)
    cfg = _model_config(args, config)
    s = train_ensemble(train, cfg,
                       members=int(pick(args, config, "members", 5)),
                       epochs=int(pick(args, config, "epochs", 50)),
                       lr=float(pick(args, config, "lr", 1e-3)),
                       seed=seed,
                       batch_size=int(pick(args, config, "batch_size", 128)))
    meta = dict(s.meta)
    meta["train_set"] = train.name
    ckpt.write_checkpoint(args.out, ckpt.sampleset_to_checkpoint(s))
    _write_json(args.out + ".meta.json", meta)
    print(f"wrote {args.out} ({len(s)} members)")
    return 0


def cmd_train_vi(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    train, test = resolve_datasets(args, config, seed)
    cfg = _model_config(args, config)
    q = train_vi(train, cfg,
                 epochs=int(pick(args, config, "epochs", 50)),
                 lr=float(pick(args, config, "lr", 1e-3)),
                 seed=seed,
                 batch_size=int(pick(args, config, "batch_size", 128)),
                 init_sigma=float(pick(args, config, "init_sigma", 1e-2)))
    meta = {"seed": seed, "hidden_size": cfg.hidden_size,
            "prior_std": cfg.prior_std, "train_set": train.name}
    ckpt.write_checkpoint(args.out, ckpt.vi_to_checkpoint(q, meta))
    _write_json(args.out + ".meta.json", meta)
    print(f"wrote {args.out}")
    return 0


def cmd_sample_hmc(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    train, test = resolve_datasets(args, config, seed)
    cfg = _model_config(args, config)
    desk = desk_hmc_config()
    h = HmcConfig(
        burn_in_epochs=int(pick(args, config, "burn_in", desk.burn_in_epochs)),
        thin=int(pick(args, config, "thin", desk.thin)),
        leapfrog_steps=int(pick(args, config, "leapfrog", desk.leapfrog_steps)),
        step_size=float(pick(args, config, "step_size", desk.step_size)),
        target_samples=int(pick(args, config, "samples", desk.target_samples)),
        step_size_adapt=not args.no_adapt,
        mix_permutations=bool(args.mix_permutations
                              or config.get("mix_permutations", False)))
    if args.init:
        init = ckpt.checkpoint_to_weights(ckpt.read_checkpoint(args.init))
    else:
        init = init_weights(cfg, train.dim, train.num_classes,
                            Rng(seed).split("hmc-init"))
    s = hmc_sample(train, cfg, h, init, seed)
    meta = dict(s.meta)
    meta["train_set"] = train.name
    ckpt.write_checkpoint(args.out, ckpt.sampleset_to_checkpoint(s))
    _write_json(args.out + ".meta.json", meta)
    print(f"wrote {args.out} ({len(s)} samples, "
          f"acceptance {meta['acceptance_rate']:.3f})")
    return 0


def cmd_rebasin(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    method = _check_method(pick(args, config, "method", "activation"))
    s = ckpt.checkpoint_to_sampleset(ckpt.read_checkpoint(args.inp))
    probe = None
    if method == "activation":
        train, _ = resolve_datasets(args, config, seed)
        probe = _probe(train, args, config, seed)
    aligned = align_sample_set(s, method=method, probe=probe)
    ckpt.write_checkpoint(args.out, ckpt.sampleset_to_checkpoint(aligned))
    print(f"wrote {args.out} (aligned {len(aligned)} samples, method={method})")
    return 0


def cmd_not_experiment(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    train, test = resolve_datasets(args, config, seed)
    cfg = _model_config(args, config)
    nots = _parse_int_list(pick(args, config, "nots", "0,8,16,32,48,63"), "--nots")
    rows = ev.not_stability_experiment(
        train, cfg, nots,
        epochs=int(pick(args, config, "epochs", 10)),
        lr=float(pick(args, config, "lr", 1e-3)),
        seed=seed,
        batch_size=int(pick(args, config, "batch_size", 128)),
        barrier_grid=int(pick(args, config, "grid", 25)))
    write_csv(args.out_csv, CSV_SCHEMAS["not_experiment"], rows)
    print(f"wrote {args.out_csv} ({len(rows)} rows)")
    return 0


def cmd_interp(args) -> int:
    config = load_config(args.config)
    method = _check_method(pick(args, config, "method", "weight"))
    w0 = ckpt.checkpoint_to_weights(ckpt.read_checkpoint(args.w0))
    w1 = ckpt.checkpoint_to_weights(ckpt.read_checkpoint(args.w1))
    seed = pick(args, config, "seed")
    if method == "activation" and seed is None:
        raise CliArgumentError("--seed is required for activation matching")
    train, test = resolve_datasets(args, config, int(seed) if seed is not None else 0)
    probe = _probe(train, args, config, int(seed)) if method == "activation" else None
    points = int(pick(args, config, "points", 25))
    if points < 3:
        raise CliArgumentError("--points must be >= 3")
    curve = ev.not_along_path(w0, w1, train, np.linspace(0.0, 1.0, points),
                              match_method=method, probe=probe)
    rows = [{"lambda": float(l), "loss": float(x), "accuracy": float(a),
             "not": int(n)}
            for l, x, a, n in zip(curve.lambdas, curve.losses,
                                  curve.accuracies, curve.nots)]
    write_csv(args.out_csv, CSV_SCHEMAS["interp"], rows)
    print(f"wrote {args.out_csv} ({len(rows)} rows)")
    return 0


def cmd_summarize(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    method = _check_method(pick(args, config, "method", "activation"))
    s = ckpt.checkpoint_to_sampleset(ckpt.read_checkpoint(args.inp))
    probe = None
    if method == "activation":
        train, _ = resolve_datasets(args, config, seed)
        probe = _probe(train, args, config, seed)
    qd = post.fit_direct(s)
    qr = post.fit_rebasin(s, method=method, probe=probe)
    ckpt.write_checkpoint(args.out_qd, ckpt.gaussian_to_checkpoint(qd))
    ckpt.write_checkpoint(args.out_qr, ckpt.gaussian_to_checkpoint(
        qr, {"match_method": method}))
    print(f"wrote {args.out_qd} and {args.out_qr}")
    return 0


def cmd_eval_table1(args) -> int:
    config = load_config(args.config)
    seed = _require_seed(args, config)
    method = _check_method(pick(args, config, "method", "activation"))
    train, test = resolve_datasets(args, config, seed)
    probe = _probe(train, args, config, seed) if method == "activation" else None
    hmc = ckpt.checkpoint_to_sampleset(ckpt.read_checkpoint(args.hmc))
    ens = ckpt.checkpoint_to_sampleset(ckpt.read_checkpoint(args.ensemble))
    vi = ckpt.checkpoint_to_vi(ckpt.read_checkpoint(args.vi))
    rows = ev.table1_rows(ev.summarize_method(hmc, method, probe),
                          ev.summarize_method(ens, method, probe),
                          vi, test, seed,
                          n_parametric_draws=int(pick(args, config, "draws", 100)))
    write_csv(args.out_csv, CSV_SCHEMAS["table1"], rows)
    print(f"wrote {args.out_csv} ({len(rows)} rows)")
    return 0


def cmd_sigma_hist(args) -> int:
    config = load_config(args.config)
    bins = int(pick(args, config, "bins", 50))
    rows = []
    rep_by_tag = {"direct": "q_d", "rebasin": "q_r", "vi": "q"}
    for spec_item in args.inputs:
        if "=" not in spec_item:
            raise CliArgumentError(
                f"sigma-hist inputs look like name=path, got {spec_item!r}")
        name, path = spec_item.split("=", 1)
        g = ckpt.checkpoint_to_gaussian(ckpt.read_checkpoint(path))
        edges, counts = ev.sigma_histogram(g, bins)
        rep = rep_by_tag.get(g.tag, g.tag)
        for i in range(bins):
            rows.append({"method": name, "representation": rep,
                         "bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]),
                         "count": int(counts[i])})
    write_csv(args.out_csv, CSV_SCHEMAS["sigma_hist"], rows)
    print(f"wrote {args.out_csv} ({len(rows)} rows)")
    return 0


def cmd_prune_sweep(args) -> int:
    config = load_config(args.config)
    method = _check_method(pick(args, config, "method", "weight"))
    g_mu = ckpt.checkpoint_to_gaussian(ckpt.read_checkpoint(args.mu))
    g_sigma = ckpt.checkpoint_to_gaussian(ckpt.read_checkpoint(args.sigma))
    seed = pick(args, config, "seed")
    if method == "activation" and seed is None:
        raise CliArgumentError("--seed is required for activation matching")
    train, test = resolve_datasets(args, config, int(seed) if seed is not None else 0)
    probe = _probe(train, args, config, int(seed)) if method == "activation" else None
    fractions = _parse_float_list(
        pick(args, config, "fractions", "0.01,0.05,0.1,0.25,0.5,1.0"),
        "--fractions")
    merged = post.merge(g_mu, g_sigma, method=method, probe=probe)
    variants = {"mu_only": g_mu, "sigma_only": g_sigma, "merged": merged}
    include_biases = not args.exclude_biases
    rows = ev.prune_sweep_rows(variants, test, fractions,
                               include_biases=include_biases)
    write_csv(args.out_csv, CSV_SCHEMAS["prune"], rows)
    print(f"wrote {args.out_csv} ({len(rows)} rows)")
    return 0


def cmd_merge(args) -> int:
    config = load_config(args.config)
    method = _check_method(pick(args, config, "method", "weight"))
    g_mu = ckpt.checkpoint_to_gaussian(ckpt.read_checkpoint(args.mu))
    g_sigma = ckpt.checkpoint_to_gaussian(ckpt.read_checkpoint(args.sigma))
    probe = None
    if method == "activation":
        seed = _require_seed(args, config)
        train, _ = resolve_datasets(args, config, seed)
        probe = _probe(train, args, config, seed)
    merged = post.merge(g_mu, g_sigma, method=method, probe=probe)
    ckpt.write_checkpoint(args.out, ckpt.gaussian_to_checkpoint(
        merged, {"match_method": method}))
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="bnn-rebasin",
                     description="Bayesian MLP workbench: inference, rebasin, "
                                 "compact posterior summaries")
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("train-ensemble", help="train independent MAP members")
    _add_common(sp); _add_data_flags(sp); _add_model_flags(sp)
    sp.add_argument("--members", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_ensemble)

    sp = sub.add_parser("train-vi", help="train a mean-field Gaussian posterior")
    _add_common(sp); _add_data_flags(sp); _add_model_flags(sp)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--init-sigma", dest="init_sigma", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_vi)

    sp = sub.add_parser("sample-hmc", help="run an HMC chain on the posterior")
    _add_common(sp); _add_data_flags(sp); _add_model_flags(sp)
    sp.add_argument("--init", help="initial weights checkpoint")
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--leapfrog", type=int)
    sp.add_argument("--step-size", dest="step_size", type=float)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--no-adapt", dest="no_adapt", action="store_true")
    sp.add_argument("--mix-permutations", dest="mix_permutations",
                    action="store_true",
                    help="interleave exact relabeling moves between trajectories")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sample_hmc)

    sp = sub.add_parser("rebasin", help="align a sample set to its first sample")
    _add_common(sp); _add_data_flags(sp)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--method")
    sp.add_argument("--probe-size", dest="probe_size", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_rebasin)

    sp = sub.add_parser("not-experiment",
                        help="transposition-count stability across training")
    _add_common(sp); _add_data_flags(sp); _add_model_flags(sp)
    sp.add_argument("--nots", help="comma-separated counts, e.g. 0,8,16")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--grid", type=int, help="barrier grid points")
    sp.add_argument("--out-csv", dest="out_csv", default="not_experiment.csv")
    sp.set_defaults(func=cmd_not_experiment)

    sp = sub.add_parser("interp", help="loss/accuracy/alignment along the path")
    _add_common(sp); _add_data_flags(sp)
    sp.add_argument("--w0", required=True)
    sp.add_argument("--w1", required=True)
    sp.add_argument("--points", type=int)
    sp.add_argument("--method")
    sp.add_argument("--probe-size", dest="probe_size", type=int)
    sp.add_argument("--out-csv", dest="out_csv", default="interp.csv")
    sp.set_defaults(func=cmd_interp)

    sp = sub.add_parser("summarize", help="fit direct and rebasin summaries")
    _add_common(sp); _add_data_flags(sp)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--method")
    sp.add_argument("--probe-size", dest="probe_size", type=int)
    sp.add_argument("--out-qd", dest="out_qd", required=True)
    sp.add_argument("--out-qr", dest="out_qr", required=True)
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("eval-table1", help="agreement/TV/accuracy table")
    _add_common(sp); _add_data_flags(sp)
    sp.add_argument("--hmc", required=True)
    sp.add_argument("--ensemble", required=True)
    sp.add_argument("--vi", required=True)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--method")
    sp.add_argument("--probe-size", dest="probe_size", type=int)
    sp.add_argument("--out-csv", dest="out_csv", default="table1.csv")
    sp.set_defaults(func=cmd_eval_table1)

    sp = sub.add_parser("sigma-hist", help="standard-deviation histograms")
    _add_common(sp)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--in", dest="inputs", action="append", required=True,
                    metavar="NAME=CKPT", help="may be given multiple times")
    sp.add_argument("--out-csv", dest="out_csv", default="sigma_hist.csv")
    sp.set_defaults(func=cmd_sigma_hist)

    sp = sub.add_parser("prune-sweep", help="pruning curves for mu/sigma variants")
    _add_common(sp); _add_data_flags(sp)
    sp.add_argument("--mu", required=True, help="summary supplying the means")
    sp.add_argument("--sigma", required=True, help="summary supplying the variances")
    sp.add_argument("--fractions")
    sp.add_argument("--method")
    sp.add_argument("--probe-size", dest="probe_size", type=int)
    sp.add_argument("--exclude-biases", dest="exclude_biases", action="store_true")
    sp.add_argument("--out-csv", dest="out_csv", default="prune.csv")
    sp.set_defaults(func=cmd_prune_sweep)

    sp = sub.add_parser("merge", help="stitch means and basin-aligned variances")
    _add_common(sp); _add_data_flags(sp)
    sp.add_argument("--mu", required=True)
    sp.add_argument("--sigma", required=True)
    sp.add_argument("--method")
    sp.add_argument("--probe-size", dest="probe_size", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_merge)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (CliArgumentError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
