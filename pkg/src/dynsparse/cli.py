"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 discovery did not converge,
3 solver abort.  Set ``DYNSPARSE_LOG`` (e.g. ``INFO`` or ``DEBUG``) for
progress output on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import get_system, true_terms, validate
from .config import RunConfig
from .mho import DiscoveredModel, DiscoveryAborted
from .pipeline import baseline, clean_data, discover, noisy_data
from .preprocess import DictionaryExhaustedError
from .smoothing import SmoothingError
from .systems import SYSTEMS
from .timeseries import CSVFormatError, TimeSeries

log = logging.getLogger("dynsparse")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_ABORT = 0, 1, 2, 3


class InputError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def load_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = RunConfig.load(args.config)
        except (OSError, ValueError, TypeError, KeyError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if args.system and args.system != cfg.system:
            cfg = replace(cfg, system=args.system)
    else:
        name = args.system or "lotka_volterra"
        if name not in SYSTEMS:
            raise InputError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}")
        cfg = RunConfig.for_system(name)
    if cfg.system is not None and cfg.system not in SYSTEMS:
        raise InputError(f"unknown system {cfg.system!r}; choose from {sorted(SYSTEMS)}")
    noise = cfg.noise
    if getattr(args, "sigma", None) is not None:
        noise = replace(noise, sigma=args.sigma)
    if getattr(args, "seed", None) is not None:
        noise = replace(noise, seed=args.seed)
    if getattr(args, "replications", None) is not None:
        noise = replace(noise, replications=args.replications)
    cfg = replace(cfg, noise=noise)
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _read_csv(path) -> TimeSeries:
    try:
        return TimeSeries.from_csv(path)
    except CSVFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _metadata() -> dict:
    return {"created": time.strftime("%Y-%m-%dT%H:%M:%S"), "python": platform.python_version(),
            "numpy": np.__version__}


# -- commands ------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.system is None:
        raise InputError("simulate needs a benchmark system")
    out = Path(cfg.out_dir)
    clean = clean_data(cfg)
    files = {"clean.csv": _write(out / "clean.csv", clean.to_csv())}
    for seed in cfg.noise.seeds():
        noisy = noisy_data(cfg, seed, clean)
        files[f"noisy_seed{seed}.csv"] = _write(out / f"noisy_seed{seed}.csv", noisy.to_csv())
    manifest = {
        "system": cfg.system,
        "sigma": cfg.noise.sigma,
        "seeds": cfg.noise.seeds(),
        "generator": "numpy Philox",
        "files": {name: _sha256(p) for name, p in files.items()},
        "config": cfg.to_dict(),
        "metadata": _metadata(),
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    print(f"wrote {len(files)} trajectories to {out}")
    return EXIT_OK


def _discover_one(cfg: RunConfig, ts: TimeSeries, out: Path, seed: int | None) -> int:
    try:
        run = discover(ts, cfg)
    except DiscoveryAborted as exc:
        if exc.trace is not None:
            _write(out / "trace.json", exc.trace.to_json())
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (DictionaryExhaustedError, SmoothingError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    model = run.model
    model.provenance["seed"] = seed
    _write(out / "model.json", model.to_json())
    _write(out / "trace.json", run.trace.to_json())
    _write(out / "preprocess.json", run.report.to_json())
    _write(out / "equations.txt", model.equations() + "\n")
    print(f"[{out}] {model.status}\n{model.equations()}")
    if model.status != "converged":
        print(f"not converged: {run.trace.message}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_discover(cfg: RunConfig, input_csv: str | None = None) -> int:
    out = Path(cfg.out_dir)
    _write(out / "config.json", cfg.to_json())
    path = input_csv or cfg.input_csv
    if path:
        return _discover_one(cfg, _read_csv(path), out, None)
    if cfg.system is None:
        raise InputError("discover needs --input or a benchmark system")
    clean = clean_data(cfg)
    seeds = cfg.noise.seeds()
    if len(seeds) == 1:
        return _discover_one(cfg, noisy_data(cfg, seeds[0], clean), out, seeds[0])

    def job(seed):
        return _discover_one(cfg, noisy_data(cfg, seed, clean), out / f"seed{seed}", seed)

    with ThreadPoolExecutor(max_workers=min(len(seeds), os.cpu_count() or 1)) as pool:
        codes = list(pool.map(job, seeds))
    return max(codes)


def cmd_validate(cfg: RunConfig, model_path: str) -> int:
    try:
        model = DiscoveredModel.from_json(Path(model_path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read model {model_path}: {exc}") from exc
    if cfg.system is None:
        raise InputError("validate needs a reference system")
    system = get_system(cfg.system)
    t_final = cfg.t_final if cfg.t_final is not None else system.spec.t_final
    report = validate(model, system, (0.0, t_final))
    rp, cp = report.write(cfg.out_dir)
    print(f"wrote {rp} and {cp}")
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, input_csv: str | None = None) -> int:
    path = input_csv or cfg.input_csv
    if path:
        ts = _read_csv(path)
    elif cfg.system is not None:
        ts = noisy_data(cfg, cfg.noise.seed)
    else:
        raise InputError("baseline needs --input or a benchmark system")
    model = baseline(ts, cfg)
    data = model.to_dict()
    data["lam"], data["rho"] = cfg.baseline.lam, cfg.baseline.rho
    _write(Path(cfg.out_dir) / "baseline.json", json.dumps(data, indent=2, sort_keys=True))
    print(model.equations())
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    try:
        model = DiscoveredModel.from_json((out / "model.json").read_text())
        base = DiscoveredModel.from_json((out / "baseline.json").read_text())
    except OSError as exc:
        raise InputError(f"compare needs model.json and baseline.json in {out}: {exc}") from exc
    truth = true_terms(get_system(cfg.system)) if cfg.system is not None else None
    rows = ["state,term,truth,discovered,baseline"]
    for j in range(model.n_x):
        mt, bt = model.terms()[j], base.terms()[j]
        tt = truth[j] if truth else {}
        for label in sorted(set(mt) | set(bt) | set(tt)):
            vals = [tt.get(label), mt.get(label), bt.get(label)]
            rows.append(",".join([f"x{j + 1}", label] + ["" if v is None else repr(v) for v in vals]))
    _write(out / "comparison.csv", "\n".join(rows) + "\n")
    print("\n".join(rows))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--system", help=f"benchmark system ({', '.join(sorted(SYSTEMS))})")
    common.add_argument("--seed", type=int, help="first noise seed")
    common.add_argument("--replications", type=int, help="number of noise realisations")
    common.add_argument("--sigma", type=float, help="measurement-noise standard deviation")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="dynsparse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write clean and noisy trajectories")
    d = sub.add_parser("discover", parents=[common], help="run the moving-horizon discovery")
    d.add_argument("--input", help="trajectory CSV (t,x1,..,xn)")
    v = sub.add_parser("validate", parents=[common], help="simulate a model against the reference")
    v.add_argument("--model", required=True, help="model JSON written by discover")
    b = sub.add_parser("baseline", parents=[common], help="elastic-net derivative regression")
    b.add_argument("--input", help="trajectory CSV (t,x1,..,xn)")
    b.add_argument("--lam", type=float, help="penalty weight")
    b.add_argument("--rho", type=float, help="L1 share of the penalty")
    sub.add_parser("compare", parents=[common], help="tabulate discover vs baseline outputs")
    return p


def main(argv=None) -> int:
    level = os.environ.get("DYNSPARSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "discover":
            return cmd_discover(cfg, args.input)
        if args.command == "validate":
            return cmd_validate(cfg, args.model)
        if args.command == "baseline":
            bl = cfg.baseline
            if args.lam is not None:
                bl = replace(bl, lam=args.lam)
            if args.rho is not None:
                bl = replace(bl, rho=args.rho)
            return cmd_baseline(replace(cfg, baseline=bl), args.input)
        return cmd_compare(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
