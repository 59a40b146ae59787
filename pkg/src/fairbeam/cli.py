"""Command-line front end: gen, baseline, train, eval, sweep, report.

Flag resolution is three-layered: built-in defaults, then a flat JSON
config file (--config), then explicit flags. Every run writes a manifest
with the fully resolved configuration and seeds next to its primary
output, so any artifact can be regenerated from its manifest alone.
Progress goes to stderr; data goes to files and stdout. Exit codes:
0 success, 1 usage error, 2 runtime/data error.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import sweep as sweep_mod
from .channel import (Dataset, ScenarioConfig, dataset_sha256, generate_dataset,
                      load_dataset, save_dataset, split_dataset)
from .network import ModelConfig, count_params
from .trainer import (TrainConfig, evaluate, load_checkpoint, save_checkpoint, train)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

BASELINE_METHODS = ("mrt", "zf", "slnr", "wslnr")


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _float_list(text: str, flag: str):
    try:
        return [float(x) for x in str(text).split(",") if x != ""]
    except ValueError:
        raise CliUsageError(f"{flag} expects a comma-separated list of numbers, got {text!r}")


_GEN_DEFAULTS = dict(nt=16, nu=12, samples=50000, ptot=10.0, radius=500.0, dmin=35.0,
                     plexp=3.76, refsnr=30.0, seed=0, threads=1, out=None)
_BASELINE_DEFAULTS = dict(method=None, alpha=None, data=None, out=None)
_TRAIN_HYPER_DEFAULTS = dict(split="0.64,0.16,0.20", split_seed=0, batch=256, lr=0.002,
                             eps=0.003, eta=0.01, lambda0=1.0, epochs=100, grad_tol=1e-3,
                             seed=0, blocks=8, heads=4, emb_factor=4, init_seed=0)
_TRAIN_DEFAULTS = dict(data=None, jlb=None, out_dir=None, **_TRAIN_HYPER_DEFAULTS)
_EVAL_DEFAULTS = dict(checkpoint=None, data=None, out=None, rates_csv=None,
                      subset="all", split="0.64,0.16,0.20", split_seed=0)
_SWEEP_DEFAULTS = dict(data=None, jlbs=None, alphas="0,0.5,1.0,2.0,5.0",
                       out_dir=None, **_TRAIN_HYPER_DEFAULTS)
_REPORT_DEFAULTS = dict(results=None, out_dir=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="fairbeam",
                     description="Fairness-constrained sum-rate beamforming pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def opt(p, name, **kw):
        p.add_argument(name, default=None, **kw)

    p = sub.add_parser("gen", help="generate and save a channel dataset")
    for name, kind in [("--nt", int), ("--nu", int), ("--samples", int), ("--seed", int),
                       ("--threads", int), ("--ptot", float), ("--radius", float),
                       ("--dmin", float), ("--plexp", float), ("--refsnr", float)]:
        opt(p, name, type=kind)
    opt(p, "--out", help="output .fbd path")
    opt(p, "--config", help="JSON config file with flat flag-name keys")

    p = sub.add_parser("baseline", help="evaluate a closed-form beamformer on a dataset")
    opt(p, "--method", choices=BASELINE_METHODS)
    opt(p, "--alpha", type=float, help="wSLNR exponent (required for --method wslnr)")
    opt(p, "--data", help="input .fbd dataset")
    opt(p, "--out", help="per-sample rates CSV path")
    opt(p, "--config")

    def add_train_opts(p):
        opt(p, "--data", help="input .fbd dataset (split internally)")
        opt(p, "--split", help="train,val,test fractions")
        opt(p, "--split-seed", type=int, dest="split_seed")
        opt(p, "--batch", type=int)
        opt(p, "--lr", type=float)
        opt(p, "--eps", type=float)
        opt(p, "--eta", type=float)
        opt(p, "--lambda0", type=float)
        opt(p, "--epochs", type=int)
        opt(p, "--grad-tol", type=float, dest="grad_tol")
        opt(p, "--seed", type=int)
        opt(p, "--blocks", type=int)
        opt(p, "--heads", type=int)
        opt(p, "--emb-factor", type=int, dest="emb_factor")
        opt(p, "--init-seed", type=int, dest="init_seed")
        opt(p, "--config")

    p = sub.add_parser("train", help="train one model at a fairness target")
    opt(p, "--jlb", type=float, help="Jain fairness lower bound in (0, 1)")
    opt(p, "--out-dir", dest="out_dir")
    add_train_opts(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    opt(p, "--checkpoint")
    opt(p, "--data")
    opt(p, "--subset", choices=("all", "train", "val", "test"))
    opt(p, "--split")
    opt(p, "--split-seed", type=int, dest="split_seed")
    opt(p, "--out", help="summary JSON path")
    opt(p, "--rates-csv", dest="rates_csv", help="optional per-sample rates CSV")
    opt(p, "--config")

    p = sub.add_parser("sweep", help="alpha sweep + per-target training sweep + reports")
    opt(p, "--jlbs", help="comma-separated fairness targets")
    opt(p, "--alphas", help="comma-separated wSLNR exponents")
    opt(p, "--out-dir", dest="out_dir")
    add_train_opts(p)

    p = sub.add_parser("report", help="re-emit report CSVs from saved sweep results")
    opt(p, "--results", help="directory written by the sweep subcommand")
    opt(p, "--out-dir", dest="out_dir")
    opt(p, "--config")
    return parser


def _resolve(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            file_values = json.loads(Path(cfg_path).read_text())
        except FileNotFoundError:
            raise CliUsageError(f"config file not found: {cfg_path}")
        except json.JSONDecodeError as exc:
            raise CliUsageError(f"config file {cfg_path} is not valid JSON: {exc}")
        unknown = set(file_values) - set(resolved)
        if unknown:
            raise CliUsageError(f"unknown config keys {sorted(unknown)}; "
                                f"valid keys: {sorted(resolved)}")
        resolved.update(file_values)
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _require(resolved: dict, *keys) -> None:
    for key in keys:
        if resolved.get(key) is None:
            raise CliUsageError(f"--{key.replace('_', '-')} is required")


def _write_manifest(path, command: str, resolved: dict, extra: dict | None = None) -> None:
    manifest = {"command": command, "resolved": resolved}
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _model_config(resolved: dict, n_t: int) -> ModelConfig:
    n_f = 2 * n_t + 1
    d_model = int(resolved["emb_factor"]) * n_f
    if d_model % int(resolved["heads"]) != 0:
        raise CliUsageError(f"d_model={d_model} is not divisible by --heads {resolved['heads']}")
    return ModelConfig(n_f=n_f, d_model=d_model, n_att=int(resolved["blocks"]),
                       n_head=int(resolved["heads"]), n_t=n_t,
                       init_seed=int(resolved["init_seed"]))


def _train_config(resolved: dict, model_config: ModelConfig, j_lb: float) -> TrainConfig:
    return TrainConfig(j_lb=j_lb, model=model_config, batch_size=int(resolved["batch"]),
                       lr=float(resolved["lr"]), eps=float(resolved["eps"]),
                       eta=float(resolved["eta"]), lambda0=float(resolved["lambda0"]),
                       max_epochs=int(resolved["epochs"]),
                       grad_tol=float(resolved["grad_tol"]), seed=int(resolved["seed"]))


def _load_split(resolved: dict):
    ds = load_dataset(resolved["data"])
    fractions = _float_list(resolved["split"], "--split")
    if len(fractions) != 3:
        raise CliUsageError(f"--split needs exactly three fractions, got {resolved['split']!r}")
    parts = split_dataset(ds, tuple(fractions), int(resolved["split_seed"]))
    return ds, parts


def cmd_gen(resolved: dict) -> int:
    _require(resolved, "out")
    if int(resolved["samples"]) < 1:
        raise CliUsageError(f"--samples must be positive, got {resolved['samples']}")
    config = ScenarioConfig(n_t=int(resolved["nt"]), n_u=int(resolved["nu"]),
                            p_tot=float(resolved["ptot"]), radius=float(resolved["radius"]),
                            d_min=float(resolved["dmin"]),
                            pathloss_exponent=float(resolved["plexp"]),
                            ref_snr_db=float(resolved["refsnr"]), seed=int(resolved["seed"]))
    ds = generate_dataset(config, int(resolved["samples"]), workers=int(resolved["threads"]))
    save_dataset(ds, resolved["out"])
    snr_db = np.concatenate([
        10.0 * np.log10(np.linalg.norm(s.h.astype(np.complex128), axis=1) ** 2 / s.sigma2)
        for s in ds.samples[:min(len(ds.samples), 2000)]])
    _info(f"wrote {len(ds.samples)} samples to {resolved['out']} "
          f"(mean per-user SNR {snr_db.mean():.2f} dB)")
    _write_manifest(str(resolved["out"]) + ".manifest.json", "gen", resolved,
                    {"dataset_sha256": dataset_sha256(ds)})
    return EXIT_OK


def cmd_baseline(resolved: dict) -> int:
    _require(resolved, "method", "data", "out")
    if resolved["method"] == "wslnr" and resolved["alpha"] is None:
        raise CliUsageError("--method wslnr requires --alpha")
    ds = load_dataset(resolved["data"])
    sp = sweep_mod.evaluate_baseline(resolved["method"], ds, alpha=resolved["alpha"])
    summary = sp.summary
    with open(resolved["out"], "w", newline="") as fh:
        writer = csv.writer(fh)
        n_u = summary.rates.shape[1]
        writer.writerow(["sample", "sum_rate", "jain"] + [f"rate_{u}" for u in range(n_u)])
        for i in range(summary.rates.shape[0]):
            writer.writerow([i, f"{summary.sum_rates[i]:.10g}", f"{summary.jains[i]:.10g}"]
                            + [f"{r:.10g}" for r in summary.rates[i]])
    out_summary = {"method": resolved["method"], "alpha": resolved["alpha"],
                   "n_samples": int(summary.rates.shape[0]),
                   "mean_sum_rate": summary.mean_sum_rate, "mean_jain": summary.mean_jain}
    print(json.dumps(out_summary, sort_keys=True))
    _write_manifest(str(resolved["out"]) + ".manifest.json", "baseline", resolved,
                    {"summary": out_summary, "dataset_sha256": dataset_sha256(ds)})
    return EXIT_OK


def cmd_train(resolved: dict) -> int:
    _require(resolved, "data", "jlb", "out_dir")
    ds, (train_set, val_set, _test_set) = _load_split(resolved)
    model_config = _model_config(resolved, ds.config.n_t)
    config = _train_config(resolved, model_config, float(resolved["jlb"]))
    _info(f"training on {len(train_set.samples)} samples "
          f"({count_params(model_config)} parameters, target J_LB={config.j_lb})")
    result = train(config, train_set, val_set, log=_info)

    out_dir = Path(resolved["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "checkpoint.fbck"
    epochs_run = len(result.history.epochs)
    ckpt_epoch = result.best_epoch if result.best_epoch is not None else epochs_run
    ckpt_val = result.history.epochs[ckpt_epoch - 1]
    provenance = {"j_lb": config.j_lb, "lambda_final": result.dual.lam,
                  "epochs_trained": epochs_run, "checkpoint_epoch": ckpt_epoch,
                  "seed": config.seed, "init_seed": model_config.init_seed,
                  "split_seed": int(resolved["split_seed"])}
    save_checkpoint(ckpt, result.model, result.dual, provenance)
    result.history.to_csv(out_dir / "history.csv")
    summary = result.history.summary()
    summary["checkpoint_val"] = {"epoch": ckpt_epoch, "sum_rate": ckpt_val.val_sum_rate,
                                 "jain": ckpt_val.val_jain}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _write_manifest(out_dir / "manifest.json", "train", resolved,
                    {"dataset_sha256": dataset_sha256(ds),
                     "checkpoint_val": summary["checkpoint_val"],
                     "provenance": provenance})
    _info(f"checkpoint (epoch {ckpt_epoch}) and history written to {out_dir}")
    return EXIT_OK


def cmd_eval(resolved: dict) -> int:
    _require(resolved, "checkpoint", "data", "out")
    model, dual, provenance = load_checkpoint(resolved["checkpoint"])
    if resolved["subset"] == "all":
        ds = load_dataset(resolved["data"])
        subset = ds
    else:
        ds, parts = _load_split(resolved)
        subset = dict(zip(("train", "val", "test"), parts))[resolved["subset"]]
    summary = evaluate(model, subset)
    payload = {"subset": resolved["subset"], "n_samples": len(subset.samples),
               "mean_sum_rate": summary.mean_sum_rate, "mean_jain": summary.mean_jain,
               "j_lb": dual.j_lb, "lambda": dual.lam, "provenance": provenance}
    Path(resolved["out"]).write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(json.dumps({k: payload[k] for k in
                      ("subset", "n_samples", "mean_sum_rate", "mean_jain")}, sort_keys=True))
    if resolved["rates_csv"]:
        with open(resolved["rates_csv"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "sum_rate", "jain"])
            for i in range(summary.rates.shape[0]):
                writer.writerow([i, f"{summary.sum_rates[i]:.10g}", f"{summary.jains[i]:.10g}"])
    _write_manifest(str(resolved["out"]) + ".manifest.json", "eval", resolved,
                    {"dataset_sha256": dataset_sha256(ds)})
    return EXIT_OK


def cmd_sweep(resolved: dict) -> int:
    _require(resolved, "data", "jlbs", "out_dir")
    j_lbs = _float_list(resolved["jlbs"], "--jlbs")
    alphas = _float_list(resolved["alphas"], "--alphas")
    if not j_lbs or not alphas:
        raise CliUsageError("--jlbs and --alphas must be nonempty")
    ds, (train_set, val_set, test_set) = _load_split(resolved)
    model_config = _model_config(resolved, ds.config.n_t)
    base_config = _train_config(resolved, model_config, j_lbs[0])

    _info(f"baseline sweep over alphas {alphas} on {len(test_set.samples)} test samples")
    points = sweep_mod.baseline_sweep(alphas, test_set)
    points += sweep_mod.reference_points(test_set)
    _info(f"training sweep over fairness targets {j_lbs}")
    points += sweep_mod.pareto_sweep(j_lbs, train_set, val_set, test_set,
                                     base_config, log=_info)

    out_dir = Path(resolved["out_dir"])
    sweep_mod.save_sweep_results(points, out_dir)
    sweep_mod.emit_reports(points, out_dir)
    _write_manifest(out_dir / "manifest.json", "sweep", resolved,
                    {"dataset_sha256": dataset_sha256(ds)})
    failed = [sp.point.knob for sp in points if sp.point.error is not None]
    if failed:
        _info(f"sweep finished with failed points at {failed}")
    _info(f"results and reports written to {out_dir}")
    return EXIT_OK


def cmd_report(resolved: dict) -> int:
    _require(resolved, "results", "out_dir")
    points = sweep_mod.load_sweep_results(resolved["results"])
    sweep_mod.emit_reports(points, resolved["out_dir"])
    _write_manifest(Path(resolved["out_dir"]) / "manifest.json", "report", resolved)
    return EXIT_OK


_COMMANDS = {
    "gen": (cmd_gen, _GEN_DEFAULTS),
    "baseline": (cmd_baseline, _BASELINE_DEFAULTS),
    "train": (cmd_train, _TRAIN_DEFAULTS),
    "eval": (cmd_eval, _EVAL_DEFAULTS),
    "sweep": (cmd_sweep, _SWEEP_DEFAULTS),
    "report": (cmd_report, _REPORT_DEFAULTS),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler, defaults = _COMMANDS[args.command]
        return handler(_resolve(args, defaults))
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # data/runtime failures map to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
