"""Command-line entry point: ``deen <subcommand> [options]``.

Every subcommand accepts ``--config FILE.json``; explicit flags override
values from the file, which override built-in defaults.  The fully resolved
options are written to ``<outdir>/resolved_config.json``.

Exit codes: 0 success, 2 usage/config error, 3 data/format error,
4 numerical failure (non-finite loss or parameters during training).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import data as D
from .core import DimensionError, Rng
from .diagnostics import (
    GridGeometry,
    curl_grid,
    curl_stats,
    eval_energy_grid,
    eval_score_grid,
    ssd_denoise,
    tile_patches,
    write_grid_csv,
    write_pgm,
)
from .filters import err_per_pixel, mg_filter_batch
from .model import load_params
from .parzen import select_sigma
from .training import (
    NumericalError,
    TrainConfig,
    initial_state,
    load_state,
    save_state,
    train,
)

log = logging.getLogger("deen")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


COMMON = {"outdir": "out", "seed": 0, "threads": 1}

DEFAULTS = {
    "gen-data": {"kind": None, "n": 10000, "noise_std": 0.05, "dim": 1, "std": 1.0,
                 "patch": 32, "n_images": 200, "image_size": 64},
    "select-sigma": {"train": None, "valid": None, "idx": None, "valid_idx": None,
                     "valid_frac": 0.2, "max_train": None, "max_valid": None,
                     "candidates": "0.05,0.1,0.2,0.4,0.8"},
    "train": {"kind": "deen", "data": None, "idx": None, "sigma": 0.1, "lr": 0.001,
              "batch_size": 128, "iterations": 1000, "m": 1, "optimizer": "adam",
              "hidden": "32,32,32", "running_avg_window": 50, "fixed_pairs": False,
              "resume": None, "log_every": 0},
    "grid": {"model": None, "extent": "-4,4,-4,4", "nx": 100, "ny": 100},
    "curl": {"model": None, "extent": "-4,4,-4,4", "nx": 64, "ny": 64, "threshold": None},
    "denoise": {"model": None, "data": None, "sigma_prime": None, "height": None,
                "width": None},
    "eval": {"model": None, "data": None, "noise_factor": 0.5, "sigma_prime": None,
             "median_window": 3, "gauss_sigma": 1.0, "height": None, "width": None,
             "n_show": 32},
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deen", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--outdir")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="cap on BLAS worker threads (default 1)")
        return p

    p = add("gen-data", "generate a synthetic dataset as CSV")
    p.add_argument("--kind", help="spiral | mog | gaussian | textures")
    p.add_argument("--n", type=int)
    p.add_argument("--noise-std", type=float, help="spiral jitter")
    p.add_argument("--dim", type=int, help="gaussian dimension")
    p.add_argument("--std", type=float, help="gaussian std")
    p.add_argument("--patch", type=int)
    p.add_argument("--n-images", type=int)
    p.add_argument("--image-size", type=int)

    p = add("select-sigma", "choose the Parzen width by held-out likelihood")
    p.add_argument("--train", help="training CSV")
    p.add_argument("--valid", help="validation CSV")
    p.add_argument("--idx", help="training IDX image file")
    p.add_argument("--valid-idx", help="validation IDX image file")
    p.add_argument("--valid-frac", type=float, help="holdout fraction when no validation set is given")
    p.add_argument("--max-train", type=int)
    p.add_argument("--max-valid", type=int)
    p.add_argument("--candidates", help="comma-separated widths")

    p = add("train", "train a DEEN, DSM or CD-Langevin model")
    p.add_argument("--kind", help="deen | dsm | cd")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--idx", help="dataset IDX image file")
    p.add_argument("--sigma", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--iterations", type=int, help="total iterations, including resumed ones")
    p.add_argument("--m", type=int, help="noisy draws per clean point")
    p.add_argument("--optimizer", help="adam | sgd")
    p.add_argument("--hidden", help="comma-separated hidden widths")
    p.add_argument("--running-avg-window", type=int)
    p.add_argument("--fixed-pairs", action="store_true", default=None,
                   help="pre-draw the noisy set once instead of every iteration")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--log-every", type=int)

    for name, help_ in (("grid", "energy, density and score grids of a 2-D model"),
                        ("curl", "curl of the learned 2-D score field")):
        p = add(name, help_)
        p.add_argument("--model", help="checkpoint directory")
        p.add_argument("--extent", help="xmin,xmax,ymin,ymax")
        p.add_argument("--nx", type=int)
        p.add_argument("--ny", type=int)
        if name == "curl":
            p.add_argument("--threshold", type=float)

    p = add("denoise", "single-step denoising of noisy samples")
    p.add_argument("--model")
    p.add_argument("--data", help="noisy samples CSV")
    p.add_argument("--sigma-prime", type=float, help="defaults to the training sigma")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)

    p = add("eval", "err/pixel of noisy input, MG baseline and DEEN on clean patches")
    p.add_argument("--model")
    p.add_argument("--data", help="clean patches CSV")
    p.add_argument("--noise-factor", type=float)
    p.add_argument("--sigma-prime", type=float)
    p.add_argument("--median-window", type=int)
    p.add_argument("--gauss-sigma", type=float)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--n-show", type=int)
    return ap


def resolve(args: argparse.Namespace) -> dict:
    opts = dict(COMMON)
    opts.update(DEFAULTS[args.command])
    if args.config:
        try:
            file_opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(file_opts)
    for key, value in vars(args).items():
        if key in opts and value is not None:
            opts[key] = value
    opts["command"] = args.command
    return opts


def _floats(text, n=None, what="value list"):
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        vals = [float(t) for t in items if str(t).strip()]
    except ValueError as exc:
        raise UsageError(f"bad {what}: {text!r}") from exc
    if n is not None and len(vals) != n:
        raise UsageError(f"{what} needs {n} numbers, got {text!r}")
    return vals


def _geometry(o) -> GridGeometry:
    x0, x1, y0, y1 = _floats(o["extent"], 4, "extent")
    try:
        return GridGeometry(x0, x1, y0, y1, int(o["nx"]), int(o["ny"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _image_shape(o, dim):
    h, w = o.get("height"), o.get("width")
    if h is None and w is None:
        side = int(round(math.sqrt(dim)))
        return (side, side) if side * side == dim and dim > 1 else (None, None)
    if h is None or w is None or h * w != dim:
        raise UsageError(f"height x width must equal the sample dimension {dim}")
    return h, w


def _load_dataset(o, csv_key="data", idx_key="idx") -> D.Dataset:
    if o.get(idx_key):
        return D.load_idx(o[idx_key])
    if o.get(csv_key):
        return D.read_csv(o[csv_key])
    raise UsageError(f"need --{csv_key} or --{idx_key}")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- subcommands -------------------------------------------------------------

def cmd_gen_data(o, out: Path) -> int:
    rng = Rng(o["seed"])
    kind = o["kind"]
    n = int(o["n"])
    if kind == "spiral":
        ds = D.gen_spiral(n, o["noise_std"], rng)
    elif kind == "mog":
        ds = D.gen_mog(n, D.default_mog_spec(), rng)
    elif kind == "gaussian":
        ds = D.gen_gaussian(n, int(o["dim"]), o["std"], rng)
    elif kind == "textures":
        ds = D.gen_texture_patches(n, rng, int(o["patch"]), int(o["n_images"]), int(o["image_size"]))
    else:
        raise UsageError(f"unknown data kind {kind!r} (spiral, mog, gaussian, textures)")
    D.write_csv(out / "data.csv", ds.samples)
    _write_json(out / "seed.json", {"seed": o["seed"], "kind": kind, "n": n, "dim": ds.dim})
    print(f"wrote {ds.n} samples of dimension {ds.dim} to {out / 'data.csv'}")
    return 0


def cmd_select_sigma(o, out: Path) -> int:
    train_ds = _load_dataset(o, "train", "idx")
    if o.get("valid") or o.get("valid_idx"):
        valid_ds = _load_dataset(o, "valid", "valid_idx")
    else:
        order = np.argsort(Rng(o["seed"]).stream("split").uniform(train_ds.n), kind="stable")
        n_valid = max(1, int(round(o["valid_frac"] * train_ds.n)))
        if n_valid >= train_ds.n:
            raise UsageError("valid_frac leaves no training samples")
        valid_ds = train_ds.subset(order[:n_valid], "valid")
        train_ds = train_ds.subset(order[n_valid:], "train")
    if o.get("max_train"):
        train_ds = train_ds.subset(slice(0, int(o["max_train"])))
    if o.get("max_valid"):
        valid_ds = valid_ds.subset(slice(0, int(o["max_valid"])))
    cands = _floats(o["candidates"], what="candidates")
    try:
        sigma_star, table = select_sigma(train_ds, valid_ds, cands)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with open(out / "sigma_report.csv", "w") as fh:
        fh.write("sigma,mean_loglik\n")
        for s, ll in table:
            fh.write(f"{s!r},{ll!r}\n")
            print(f"sigma={s:g} mean_loglik={ll:.6f}")
    _write_json(out / "sigma.json", {"sigma_star": sigma_star})
    print(f"sigma*={sigma_star:g}")
    return 0


def cmd_train(o, out: Path) -> int:
    ds = _load_dataset(o)
    hidden = tuple(int(h) for h in _floats(o["hidden"], what="hidden widths"))
    try:
        cfg = TrainConfig(
            sigma=o["sigma"], learning_rate=o["lr"], batch_size=int(o["batch_size"]),
            iterations=int(o["iterations"]), noisy_per_point=int(o["m"]),
            optimizer=o["optimizer"], seed=int(o["seed"]),
            running_avg_window=int(o["running_avg_window"]),
            resample_each_iter=not o["fixed_pairs"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    kind = o["kind"]
    if kind not in ("deen", "dsm", "cd"):
        raise UsageError(f"unknown training kind {kind!r}")
    if o.get("resume"):
        state, prev_kind, prev_cfg = load_state(o["resume"])
        if prev_kind != kind or prev_cfg.sigma != cfg.sigma or prev_cfg.seed != cfg.seed:
            raise UsageError("resume needs the same kind, sigma and seed as the checkpoint")
        if state.params.config.input_dim != ds.dim:
            raise UsageError("checkpoint input dimension does not match the data")
    else:
        state = initial_state(kind, ds, cfg, hidden)
    try:
        state = train(kind, ds, cfg, hidden=hidden, state=state, log_every=int(o["log_every"]))
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_state(out, state, kind, cfg)
    h = state.history
    if h.iterations:
        print(f"iterations={state.iteration} final_loss={h.raw[-1]:.6g} running_avg={h.running[-1]:.6g}")
    return 0


def _model(o):
    if not o.get("model"):
        raise UsageError("need --model")
    return load_params(o["model"])


def cmd_grid(o, out: Path) -> int:
    p, _ = _model(o)
    geom = _geometry(o)
    try:
        field_ = eval_score_grid(p, geom)
    except DimensionError as exc:
        raise UsageError(str(exc)) from exc
    write_grid_csv(field_, out / "score.csv")
    if p.config.kind == "energy":
        e, q = eval_energy_grid(p, geom)
        write_grid_csv(e, out / "energy.csv")
        write_grid_csv(q, out / "q.csv")
        # image rows run top to bottom, grid rows bottom to top
        write_pgm(q.values[::-1], out / "q.pgm")
        _write_json(out / "grid_meta.json", {"energy_shift": q.meta["energy_shift"]})
    print(f"wrote {geom.nx}x{geom.ny} grids to {out}")
    return 0


def cmd_curl(o, out: Path) -> int:
    p, _ = _model(o)
    geom = _geometry(o)
    try:
        c = curl_grid(eval_score_grid(p, geom))
    except (DimensionError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    write_grid_csv(c, out / "curl.csv")
    stats = curl_stats(c)
    stats["h"] = geom.hx
    line = f"median_abs_curl={stats['median_abs']:.6g} max_abs_curl={stats['max_abs']:.6g}"
    if o.get("threshold") is not None:
        stats["threshold"] = o["threshold"]
        stats["below_threshold"] = stats["max_abs"] < o["threshold"]
        line += f" threshold={o['threshold']:g} below={'yes' if stats['below_threshold'] else 'no'}"
    _write_json(out / "curl_stats.json", stats)
    print(line)
    return 0


def _sigma_prime(o, meta):
    if o.get("sigma_prime") is not None:
        return float(o["sigma_prime"])
    try:
        return float(meta["config"]["sigma"])
    except KeyError as exc:
        raise UsageError("checkpoint has no training sigma; pass --sigma-prime") from exc


def cmd_denoise(o, out: Path) -> int:
    p, meta = _model(o)
    ds = _load_dataset(o)
    if ds.dim != p.config.input_dim:
        raise UsageError(f"data dimension {ds.dim} does not match model {p.config.input_dim}")
    sp = _sigma_prime(o, meta)
    den = ssd_denoise(p, ds.samples, sp)
    D.write_csv(out / "denoised.csv", den)
    h, w = _image_shape(o, ds.dim)
    if h is not None:
        write_pgm(tile_patches(ds.samples[:32], h, w), out / "input.pgm")
        write_pgm(tile_patches(den[:32], h, w), out / "denoised.pgm")
    print(f"denoised {ds.n} samples with sigma'={sp:g}")
    return 0


def cmd_eval(o, out: Path) -> int:
    p, meta = _model(o)
    ds = _load_dataset(o)
    if ds.dim != p.config.input_dim:
        raise UsageError(f"data dimension {ds.dim} does not match model {p.config.input_dim}")
    h, w = _image_shape(o, ds.dim)
    if h is None:
        raise UsageError("eval needs square patches or --height/--width")
    clean = ds.samples
    noisy = D.add_patch_noise(clean, o["noise_factor"], Rng(o["seed"]).stream("eval-noise"))
    mg = mg_filter_batch(noisy, h, w, median_window=int(o["median_window"]),
                         gauss_sigma=float(o["gauss_sigma"]))
    deen = ssd_denoise(p, noisy, _sigma_prime(o, meta))
    rows = [("noisy", err_per_pixel(clean, noisy)), ("mg", err_per_pixel(clean, mg)),
            ("deen", err_per_pixel(clean, deen))]
    with open(out / "eval.csv", "w") as fh:
        fh.write("method,err_per_pixel\n")
        for name, err in rows:
            fh.write(f"{name},{err!r}\n")
            print(f"{name} err/pixel={err:.6g}")
    k = int(o["n_show"])
    for name, arr in (("clean", clean), ("noisy", noisy), ("mg", mg), ("deen", deen)):
        write_pgm(tile_patches(arr[:k], h, w), out / f"{name}.pgm")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "select-sigma": cmd_select_sigma,
    "train": cmd_train,
    "grid": cmd_grid,
    "curl": cmd_curl,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        opts = resolve(args)
        out = Path(opts["outdir"])
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "resolved_config.json", opts)
        with threadpool_limits(limits=max(1, int(opts["threads"]))):
            return COMMANDS[args.command](opts, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (D.FormatError, FileNotFoundError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
