"""Command line driver.

Subcommands cover the whole pipeline on synthetic data:

    gen        write a dataset of (clean, blurry, kernel) triples + index.json
    fit-prior  fit the Gaussian-mixture prior on the clean fields
    train      train the small convolutional denoiser on the clean fields
    deblur     run guided reverse diffusion on blurry grids
    eval       score predictions against observations (CSI report CSV)
    ablate     compare fixed-kernel / fixed-scale / full guidance variants

Every command takes --config (INI file, defaults when omitted) and --seed
(overrides the config's data.seed), writes its artifacts under --out, and
drops a manifest.json describing the run.  Exit codes: 0 success, 1 usage,
2 bad data or configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_as_dict, load_config
from .denoisers import (
    DENOISER_MAGIC,
    GMM_MAGIC,
    TrainConfig,
    load_denoiser,
    load_gmm,
    save_denoiser,
    save_gmm,
    train_conv_denoiser,
)
from .diffusion import linear_schedule
from .errors import (
    DataError,
    MagicError,
    NumericError,
    PostcastError,
    TrainingError,
)
from .fields import to_model
from .gridio import (
    read_grid,
    write_csi_report_csv,
    write_grid,
    write_kernel_csv,
    write_trace_csv,
)
from .metrics import csi_counts, csi_from_counts, quantile_threshold
from .sampler import postcast_deblur
from .synthetic import BLUR_FAMILIES, FieldSpec, fit_gmm_prior, generate_fields, plant_blur


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _log(command: str, message: str) -> None:
    print(f"[{command}] {message}")


def _schedule_from(config: RunConfig):
    return linear_schedule(config.schedule.t, config.schedule.beta_1, config.schedule.beta_t)


def _effective_seed(args, config: RunConfig) -> int:
    return args.seed if args.seed is not None else config.data.seed


def _load_prior(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == GMM_MAGIC:
        return load_gmm(path)
    if magic == DENOISER_MAGIC:
        return load_denoiser(path)
    raise MagicError(f"{path}: unrecognized prior magic {magic!r}")


def _write_manifest(out_dir: Path, command: str, config: RunConfig, seed, inputs, outputs,
                    stages, started: float) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": config_as_dict(config),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "stages": [{"name": name, "status": "ok"} for name in stages],
        "started_unix": started,
        "wall_seconds": time.time() - started,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dataset_entries(dataset_dir: Path) -> list:
    """Entries from index.json, or a bare *.pcf listing as a fallback."""
    index = dataset_dir / "index.json"
    if index.exists():
        with open(index) as fh:
            return json.load(fh)["entries"]
    grids = sorted(p.name for p in dataset_dir.glob("*.pcf"))
    if not grids:
        raise DataError(f"no grids found under {dataset_dir}")
    return [{"blurry": name, "clean": None, "kernel": None, "severity": None} for name in grids]


def _load_clean_fields(dataset_dir: Path):
    entries = _dataset_entries(dataset_dir)
    fields = []
    for entry in entries:
        if entry.get("clean") is None:
            raise DataError(f"{dataset_dir} has no clean fields (missing index.json?)")
        fields.append(read_grid(dataset_dir / entry["clean"]))
    if not fields:
        raise DataError(f"dataset at {dataset_dir} is empty")
    return fields


def _plant_plan(config: RunConfig, index: int):
    """(family, severity) for the index-th generated pair."""
    family = config.data.blur_family
    if family == "varied":
        fam = BLUR_FAMILIES[index % len(BLUR_FAMILIES)]
        sev = 1 + index % max(config.data.severity, 1)
        return fam, sev
    return family, config.data.severity


# ---------------------------------------------------------------------------
# Deblur worker (top level so process pools can pickle it)
# ---------------------------------------------------------------------------


def _deblur_task(task):
    prior = _load_prior(task["prior_path"])
    schedule = linear_schedule(task["t"], task["beta_1"], task["beta_t"])
    y_prime = read_grid(task["blurry_path"])
    trace = postcast_deblur(
        schedule,
        prior,
        y_prime,
        task["guidance"],
        seed=task["seed"],
        kernel_config=task["kernel_config"],
    )
    stem = task["out_stem"]
    outputs = [stem + "_deblurred.pcf", stem + "_kernel.csv", stem + "_trace.csv"]
    write_grid(outputs[0], trace.x0)
    write_kernel_csv(outputs[1], trace.kernel, step=trace.records[-1].t)
    write_trace_csv(outputs[2], trace.records)
    return outputs + [outputs[1] + ".json"]


def _run_deblur_tasks(tasks, jobs: int):
    if jobs <= 1:
        return [_deblur_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_deblur_task, tasks))


def _deblur_tasks_for(entries, dataset_dir: Path, out_dir: Path, prior_path, config: RunConfig,
                      seed: int):
    tasks = []
    for i, entry in enumerate(entries):
        blurry = dataset_dir / entry["blurry"]
        stem = out_dir / Path(entry["blurry"]).stem
        tasks.append(
            {
                "prior_path": str(prior_path),
                "t": config.schedule.t,
                "beta_1": config.schedule.beta_1,
                "beta_t": config.schedule.beta_t,
                "guidance": config.guidance,
                "kernel_config": config.kernel,
                "blurry_path": str(blurry),
                "out_stem": str(stem),
                "seed": seed ^ i,
            }
        )
    return tasks


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    started = time.time()
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = FieldSpec(
        height=config.data.height,
        width=config.data.width,
        cells_mean=config.data.cells_mean,
        background_noise=config.data.background_noise,
        seed=seed,
    )
    cleans = generate_fields(spec, config.data.count)
    entries = []
    outputs = []
    for i, clean in enumerate(cleans):
        family, severity = _plant_plan(config, i)
        pair = plant_blur(clean, family, severity, size=config.kernel.size)
        names = {
            "clean": f"clean_{i:03d}.pcf",
            "blurry": f"blurry_{i:03d}.pcf",
            "kernel": f"kernel_{i:03d}.csv",
            "severity": severity,
            "family": family,
        }
        write_grid(out_dir / names["clean"], pair.clean)
        write_grid(out_dir / names["blurry"], pair.blurry)
        write_kernel_csv(out_dir / names["kernel"], pair.kernel_true)
        outputs += [names["clean"], names["blurry"], names["kernel"], names["kernel"] + ".json"]
        entries.append(names)
    with open(out_dir / "index.json", "w") as fh:
        json.dump({"count": len(entries), "entries": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("index.json")
    _write_manifest(out_dir, "gen", config, seed, [], outputs,
                    ["load-config", "generate", "plant", "write"], started)
    _log("gen", f"wrote {len(entries)} planted pairs to {out_dir}")
    return 0


def cmd_fit_prior(args) -> int:
    started = time.time()
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    dataset_dir = Path(args.dataset)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fields = _load_clean_fields(dataset_dir)
    gmm = fit_gmm_prior(fields, args.k, seed=seed)
    save_gmm(out_path, gmm)
    _write_manifest(out_path.parent, "fit-prior", config, seed, [dataset_dir], [out_path.name],
                    ["load-config", "load-fields", "fit", "write"], started)
    _log("fit-prior", f"fit k={args.k} mixture on {len(fields)} fields -> {out_path}")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    dataset_dir = Path(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = _schedule_from(config)
    fields = [to_model(f) for f in _load_clean_fields(dataset_dir)]
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=seed,
    )
    net, losses = train_conv_denoiser(fields, schedule, train_config)
    save_denoiser(out_dir / "denoiser.pcdn", net)
    with open(out_dir / "loss.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{'%.17g' % loss}\n")
    _write_manifest(out_dir, "train", config, seed, [dataset_dir],
                    ["denoiser.pcdn", "loss.csv"],
                    ["load-config", "load-fields", "train", "write"], started)
    _log("train", f"final epoch loss {losses[-1]:.6f} -> {out_dir / 'denoiser.pcdn'}")
    return 0


def cmd_deblur(args) -> int:
    started = time.time()
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_path = Path(args.input)
    if input_path.is_dir():
        entries = _dataset_entries(input_path)
        dataset_dir = input_path
    else:
        entries = [{"blurry": input_path.name}]
        dataset_dir = input_path.parent
    tasks = _deblur_tasks_for(entries, dataset_dir, out_dir, args.prior, config, seed)
    outputs = []
    for written in _run_deblur_tasks(tasks, args.jobs):
        outputs += [Path(p).name for p in written]
    _write_manifest(out_dir, "deblur", config, seed, [input_path, args.prior], outputs,
                    ["load-config", "load-prior", "sample", "write"], started)
    _log("deblur", f"deblurred {len(tasks)} grid(s) -> {out_dir}")
    return 0


def _collect_grids(directory: Path, pattern: str):
    paths = sorted(directory.glob(pattern))
    if not paths:
        raise DataError(f"no grids matching {pattern!r} under {directory}")
    return paths


def cmd_eval(args) -> int:
    started = time.time()
    config = load_config(args.config)
    pred_dir = Path(args.pred)
    obs_dir = Path(args.obs)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    pred_paths = _collect_grids(pred_dir, args.pred_pattern)
    obs_paths = _collect_grids(obs_dir, args.obs_pattern)
    if len(pred_paths) != len(obs_paths):
        raise DataError(
            f"prediction/observation counts differ: {len(pred_paths)} vs {len(obs_paths)}"
        )
    preds = [read_grid(p) for p in pred_paths]
    obs = [read_grid(p) for p in obs_paths]
    tau = config.eval.tau
    if tau is None:
        tau = quantile_threshold(obs, config.eval.tau_quantile)
    label = args.label or pred_dir.name
    rows = []
    for pool in config.eval.poolings:
        tp = fp = fn = 0
        for p, o in zip(preds, obs):
            tpi, fpi, fni = csi_counts(p, o, tau, pool)
            tp, fp, fn = tp + tpi, fp + fpi, fn + fni
        rows.append((label, tau, pool, tp, fp, fn, csi_from_counts(tp, fp, fn)))
    write_csi_report_csv(out_path, rows)
    _write_manifest(out_path.parent, "eval", config, None, [pred_dir, obs_dir], [out_path.name],
                    ["load-config", "load-grids", "score", "write"], started)
    for row in rows:
        _log("eval", f"{label} pool={row[2]} csi={row[6]:.4f} (tp={row[3]} fp={row[4]} fn={row[5]})")
    return 0


#: Guidance overrides for the ablation variants, applied on top of the run config.
ABLATION_VARIANTS = (
    ("model_a", {"fixed_kernel": True, "fixed_scale": 3500.0}),
    ("model_c", {"fixed_kernel": False, "fixed_scale": 3500.0}),
    ("postcast", {"fixed_kernel": False, "fixed_scale": None}),
)


def cmd_ablate(args) -> int:
    started = time.time()
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    dataset_dir = Path(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = _dataset_entries(dataset_dir)
    cleans = _load_clean_fields(dataset_dir)
    tau = config.eval.tau
    if tau is None:
        tau = quantile_threshold(cleans, config.eval.tau_quantile)
    per_instance_rows = []
    summary_rows = []
    outputs = []
    for variant, overrides in ABLATION_VARIANTS:
        variant_dir = out_dir / variant
        variant_dir.mkdir(exist_ok=True)
        variant_config = replace(config, guidance=replace(config.guidance, **overrides))
        tasks = _deblur_tasks_for(entries, dataset_dir, variant_dir, args.prior,
                                  variant_config, seed)
        for written in _run_deblur_tasks(tasks, args.jobs):
            outputs += [str(Path(p).relative_to(out_dir)) for p in written]
        for pool in config.eval.poolings:
            tp = fp = fn = 0
            scores = []
            for entry, clean in zip(entries, cleans):
                stem = Path(entry["blurry"]).stem
                pred = read_grid(variant_dir / f"{stem}_deblurred.pcf")
                tpi, fpi, fni = csi_counts(pred, clean, tau, pool)
                tp, fp, fn = tp + tpi, fp + fpi, fn + fni
                scores.append(csi_from_counts(tpi, fpi, fni))
                per_instance_rows.append(
                    (f"{variant}:{stem}", tau, pool, tpi, fpi, fni, csi_from_counts(tpi, fpi, fni))
                )
            summary_rows.append((variant, tau, pool, tp, fp, fn, float(np.mean(scores))))
        _log("ablate", f"{variant}: done ({len(entries)} grids)")
    write_csi_report_csv(out_dir / "ablation.csv", per_instance_rows)
    write_csi_report_csv(out_dir / "ablation_summary.csv", summary_rows)
    outputs += ["ablation.csv", "ablation_summary.csv"]
    _write_manifest(out_dir, "ablate", config, seed, [dataset_dir, args.prior], outputs,
                    ["load-config", "deblur-variants", "score", "write"], started)
    for variant, _, pool, _, _, _, mean_csi in summary_rows:
        _log("ablate", f"{variant} pool={pool} mean_csi={mean_csi:.4f}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="postcast", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--config", default=None, help="INI config file (defaults if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("gen", help="generate a planted-blur dataset")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit-prior", help="fit the Gaussian-mixture prior")
    common(p)
    p.add_argument("dataset", help="dataset directory from `gen`")
    p.add_argument("--k", type=int, default=4, help="number of mixture components")
    p.add_argument("--out", required=True, help="output mixture blob (.pcgm)")
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("train", help="train the small convolutional denoiser")
    common(p)
    p.add_argument("dataset", help="dataset directory from `gen`")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("deblur", help="guided deblurring of blurry grids")
    common(p, jobs=True)
    p.add_argument("input", help="a grid file or a dataset directory")
    p.add_argument("--prior", required=True, help="mixture (.pcgm) or denoiser (.pcdn) blob")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("eval", help="CSI report for predictions vs observations")
    common(p)
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--obs", required=True, help="observation directory")
    p.add_argument("--pred-pattern", default="*.pcf", help="glob for prediction grids")
    p.add_argument("--obs-pattern", default="*.pcf", help="glob for observation grids")
    p.add_argument("--label", default=None, help="dataset label in the report")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare guidance variants on one dataset")
    common(p, jobs=True)
    p.add_argument("dataset", help="dataset directory from `gen`")
    p.add_argument("--prior", required=True, help="mixture (.pcgm) or denoiser (.pcdn) blob")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, TrainingError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except PostcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
