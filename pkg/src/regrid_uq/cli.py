"""Batch command-line front end.

Subcommands::

    regrid-uq synth    --out DIR [--config truth.cfg] [--seed N]
    regrid-uq fit      --manifest M --model OUT.model [--config study.cfg]
    regrid-uq analyze  --manifest M --model F --out DIR [--mode both] [--emit-draws]
    regrid-uq eval     --manifest M --model F --out DIR
    regrid-uq report   --out DIR

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""
import argparse
import logging
import os
import sys
import time

import numpy as np

from . import io
from .errors import InvalidArgument, NumericError
from .evaluation import bias_map, run_eval
from .pipeline import analyze, fit_study, run_manifest
from .synth import generate_study

log = logging.getLogger("regrid_uq")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _study_cfg(args):
    return io.study_config_from_file(args.config, master_seed=args.seed, threads=args.threads)


def cmd_synth(args):
    cfg = io.truth_config_from_file(args.config, seed=args.seed)
    study = generate_study(cfg)
    out = args.out
    data = study.datasets
    io.write_grid(os.path.join(out, "grids", "target.csv"), data.target)
    io.write_field(os.path.join(out, "fields", "response.csv"), data.response)
    covs = []
    for f in data.covariates:
        io.write_grid(os.path.join(out, "grids", f"{f.name}.csv"), f.grid)
        io.write_field(os.path.join(out, "fields", f"{f.name}.csv"), f)
        covs.append((f.name, f"fields/{f.name}.csv", f"grids/{f.name}.csv"))
    hidden = os.path.join(out, "hidden_truth")
    for name, f in study.truth.items():
        io.write_field(os.path.join(hidden, f"{name}_latent.csv"), f)
    for name, f in study.truth_raw.items():
        io.write_field(os.path.join(hidden, f"{name}_raw.csv"), f)
    io.write_kv(os.path.join(hidden, "coefficients.txt"), study.config.coefficients)
    io.write_manifest(os.path.join(out, "manifest.cfg"), "fields/response.csv", "grids/target.csv", covs)
    print(f"wrote synthetic study to {out}")


def _load(args):
    manifest = io.read_manifest(args.manifest)
    data = manifest.load()
    return manifest, data


def cmd_fit(args):
    cfg = _study_cfg(args)
    _, data = _load(args)
    models = fit_study(data, cfg)
    io.write_model(args.model, models, cfg)
    for m in sorted(models):
        print(f"month {m}: retained {', '.join(models[m].retained)}")


def _load_with_model(args):
    cfg = _study_cfg(args)
    _, data = _load(args)
    models, settings = io.read_model(args.model)
    io.check_model_matches(models, settings, cfg, data)
    return cfg, data, models


def cmd_analyze(args):
    if args.emit_draws and args.mode == "naive":
        raise InvalidArgument("--emit-draws needs mode bayes or both")
    cfg, data, models = _load_with_model(args)
    t0 = time.perf_counter()
    results = analyze(data, models, cfg, args.mode)
    man = run_manifest(cfg, args.mode, {"analyze": time.perf_counter() - t0})
    io.write_results(os.path.join(args.out, "results.csv"), results)
    if args.emit_draws:
        io.write_draws(os.path.join(args.out, "draws.csv"), results)
    _write_run_manifest(os.path.join(args.out, "run_manifest.txt"), man, args)
    print(f"analyzed {len(results)} location-months; results in {args.out}")


def cmd_eval(args):
    cfg, data, models = _load_with_model(args)
    t0 = time.perf_counter()
    ev = run_eval(data, cfg, models)
    t1 = time.perf_counter()
    results = analyze(data, models, cfg, "both")
    t2 = time.perf_counter()
    io.write_csv(os.path.join(args.out, "eval_folds.csv"), io.FOLD_HEADER,
                 (r for f in ev.folds for r in f.rows()))
    io.write_csv(os.path.join(args.out, "eval_summary.csv"), io.SUMMARY_HEADER, ev.table())
    io.write_csv(os.path.join(args.out, "bias.csv"), io.BIAS_HEADER, bias_map(results))
    man = run_manifest(cfg, "both", {"eval": t1 - t0, "analyze": t2 - t1})
    _write_run_manifest(os.path.join(args.out, "eval_manifest.txt"), man, args)
    for p in ("naive", "bayes"):
        _, c, e = ev.mean_by_location(p)
        print(f"{p}: mean coverage {c.mean():.4f}, mean RMSE {e.mean():.4f}")


def cmd_report(args):
    """Merge the summary tables found in ``--out`` into one long table."""
    out = args.out
    rows = []
    src = os.path.join(out, "eval_summary.csv")
    if os.path.exists(src):
        for lid, month, path, cov, err in io.read_csv(src, io.SUMMARY_HEADER):
            rows.append((lid, int(month), f"{path}.mean_coverage", float(cov)))
            rows.append((lid, int(month), f"{path}.mean_rmse", float(err)))
    src = os.path.join(out, "bias.csv")
    if not os.path.exists(src) and os.path.exists(os.path.join(out, "results.csv")):
        src = os.path.join(out, "results.csv")
        for r in io.read_csv(src, io.RESULTS_HEADER):
            if r[9]:
                rows.append((r[0], int(r[1]), f"bias.{r[2]}", float(r[9])))
    elif os.path.exists(src):
        for lid, month, coef, b in io.read_csv(src, io.BIAS_HEADER):
            rows.append((lid, int(month), f"bias.{coef}", float(b)))
    if not rows:
        raise FileNotFoundError(f"no eval_summary.csv, bias.csv or results.csv in {out}")
    rows.sort(key=lambda r: (r[1], r[0], r[2]))
    io.write_csv(os.path.join(out, "report.csv"), ("location_id", "month", "metric", "value"), rows)
    metrics = sorted({r[2] for r in rows})
    for m in metrics:
        v = np.array([r[3] for r in rows if r[2] == m])
        print(f"{m:28s} mean {v.mean(): .5g}  min {v.min(): .5g}  max {v.max(): .5g}")


def _write_run_manifest(path, man, args):
    man = dict(man)
    man["manifest"] = args.manifest
    man["model"] = args.model
    # timings vary between runs; keep them out of the byte-stable echo
    timings = {k: v for k, v in man.items() if k.startswith("seconds.")}
    for k in timings:
        del man[k]
    io.write_kv(path, man)
    log.info("timings: %s", timings)


def build_parser():
    p = argparse.ArgumentParser(prog="regrid-uq", description="Regridding with propagated uncertainty.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, manifest=True, model=False, out=True, config=True):
        if config:
            sp.add_argument("--config", help="configuration file (defaults when omitted)")
        if manifest:
            sp.add_argument("--manifest", required=True, help="dataset manifest")
        if model:
            sp.add_argument("--model", required=True, help="fitted-model file")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--threads", type=int, help="worker threads")

    s = sub.add_parser("synth", help="generate a synthetic study with known truth")
    common(s, manifest=False)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit", help="fit transforms, GP parameters and drop decisions")
    common(s, out=False)
    s.add_argument("--model", required=True, help="output fitted-model file")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("analyze", help="naive and/or Bayesian regression per location")
    common(s, model=True)
    s.add_argument("--mode", choices=("naive", "bayes", "both"), default="both")
    s.add_argument("--emit-draws", action="store_true", help="also write the pooled posterior draws")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("eval", help="leave-one-year-out coverage, RMSE and bias maps")
    common(s, model=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="merge summary tables into one")
    common(s, manifest=False, config=False)
    s.set_defaults(func=cmd_report)
    return p


def _setup_logging():
    level = os.environ.get("REGRID_UQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InvalidArgument as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
