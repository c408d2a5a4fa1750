"""Command-line entry point: ``plssemkm <subcommand> ...``."""

from __future__ import annotations

import argparse
import datetime
import logging
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .core import FitOptions, fit_multistart, standardize, tandem_baseline
from .datagen import SimConfig, generate_dataset, generate_ecsi_like, generate_intro_dataset
from .experiment import case_config, load_grid, run_experiment_grid, GridCell
from .metrics import fit_report
from .model_spec import SpecError, load_model_spec, parse_model_spec, validate_spec
from .preprocess import Dataset, impute_mean, ingest_csv, rescale_dataset
from .report import (fitted_model_dict, loading_table, path_table, summarize_groups,
                     write_atomic, write_json)
from .selection import select_k

logger = logging.getLogger("plssemkm")

BUNDLED_MODELS = ("model1", "model2", "intro", "ecsi")


def bundled_path(name):
    return resources.files("plssemkm") / "data" / name


def resolve_model(arg):
    """A spec file path, or the name of a bundled model."""
    if os.path.exists(arg):
        return load_model_spec(arg)
    if arg in BUNDLED_MODELS:
        return parse_model_spec(bundled_path(f"{arg}.spec").read_text())
    raise FileNotFoundError(f"no model file {arg!r} (bundled: {', '.join(BUNDLED_MODELS)})")


def _options(args) -> FitOptions:
    return FitOptions(tolerance=args.tolerance, max_iterations=args.max_iter,
                      n_starts=args.starts, rng_seed=args.seed)


def _load_data(args, spec):
    data = ingest_csv(args.data, spec)
    if args.rescale_ecsi:
        data = rescale_dataset(data)
    if data.n_missing:
        if args.impute == "none":
            raise ValueError(f"{data.n_missing} missing cell(s); pass --impute mean")
        data = impute_mean(data)
    return data, standardize(data.values, data.column_names)


def _metadata(args, out, data: Dataset | None = None):
    meta = {
        "argv": sys.argv[1:] if args.argv is None else args.argv,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if data is not None:
        meta["source"] = data.source
        meta["preprocessing"] = data.log + ["standardized columns (n-1 denominator)"]
    write_json(os.path.join(out, "metadata.json"), meta)


def cmd_fit(args):
    spec = resolve_model(args.model)
    data, X = _load_data(args, spec)
    fitted = fit_multistart(spec, X, args.k, _options(args))
    report = fit_report(fitted, X)
    groups = summarize_groups(fitted, X)
    out = args.out
    write_json(os.path.join(out, "fitted_model.json"), fitted_model_dict(fitted))
    write_json(os.path.join(out, "fit_report.json"), report.to_dict())
    write_atomic(os.path.join(out, "fit_report.md"), report.to_markdown())
    write_json(os.path.join(out, "group_summary.json"), groups.to_dict())
    write_atomic(os.path.join(out, "group_summary.md"), groups.to_markdown())
    write_atomic(os.path.join(out, "loadings.csv"), loading_table(fitted))
    write_atomic(os.path.join(out, "paths.csv"), path_table(fitted))
    _metadata(args, out, data)
    print(f"K={args.k} objective={fitted.objective_value:.6g} converged={fitted.converged} "
          f"sizes={groups.sizes} GoF={report.gof:.3f} R2*={report.penalized_r_squared:.3f}")
    return 0


def cmd_select_k(args):
    spec = resolve_model(args.model)
    data, X = _load_data(args, spec)
    result = select_k(spec, X, args.k_min, args.k_max, _options(args), seed=args.seed,
                      n_references=args.references, score_source=args.score_source)
    write_json(os.path.join(args.out, "k_selection.json"), result.to_dict())
    write_atomic(os.path.join(args.out, "k_curve.csv"), result.to_csv())
    _metadata(args, args.out, data)
    flag = " (weak evidence)" if result.weak_evidence else ""
    print(f"chosen K={result.chosen_k} pseudo-F={max(result.pseudo_f):.4f} "
          f"gap K={result.gap_k}{flag}")
    return 0


def cmd_tandem(args):
    spec = resolve_model(args.model)
    data, X = _load_data(args, spec)
    plain, labels = tandem_baseline(spec, X, args.k, _options(args))
    report = fit_report(plain, X)
    out = {
        "assignment": (labels + 1).tolist(),
        "sizes": np.bincount(labels, minlength=args.k).tolist(),
        "plain_model": fitted_model_dict(plain),
        "fit_report": report.to_dict(),
    }
    # the plain fit treats each unit as its own cluster; that partition is not useful output
    del out["plain_model"]["assignment"], out["plain_model"]["centroids"]
    write_json(os.path.join(args.out, "tandem.json"), out)
    _metadata(args, args.out, data)
    print(f"K={args.k} sizes={out['sizes']}")
    return 0


def cmd_simulate(args):
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "ecsi-like":
        spec = parse_model_spec(bundled_path("ecsi.spec").read_text())
        ratings, labels = generate_ecsi_like(spec, seed=args.seed)
        Dataset(ratings, spec.mv_names).to_csv(os.path.join(args.out, "data.csv"))
    else:
        if args.kind == "intro":
            sim = generate_intro_dataset(seed=args.seed)
        else:
            props = args.proportions
            if "," in props:
                props = tuple(float(p) for p in props.split(","))
            cfg = SimConfig(n=args.n, n_clusters=args.k, proportions=props, sigma=args.sigma,
                            path_model=args.kind)
            sim = generate_dataset(cfg, args.seed)
        spec, labels = sim.spec, sim.labels
        Dataset(sim.X, spec.mv_names).to_csv(os.path.join(args.out, "data.csv"))
    write_atomic(os.path.join(args.out, "model.spec"), spec.to_text())
    write_atomic(os.path.join(args.out, "labels.csv"),
                 "cluster\n" + "".join(f"{v + 1}\n" for v in labels))
    _metadata(args, args.out)
    print(f"wrote {len(labels)} rows to {args.out}")
    return 0


def cmd_benchmark(args):
    if args.grid:
        cells = load_grid(args.grid)
    else:
        cells = [GridCell(f"ctx{args.context}-case{c}", case_config(args.context, c))
                 for c in args.cases]
    opts = FitOptions(args.tolerance, args.max_iter, args.starts)
    results = run_experiment_grid(cells, args.replicates, opts, seed=args.seed or 0,
                                  with_k_selection=args.select_k)
    write_atomic(os.path.join(args.out, "results.csv"), results.to_csv())
    write_atomic(os.path.join(args.out, "summary.md"), results.to_markdown())
    _metadata(args, args.out)
    print(results.to_markdown(), end="")
    return 0 if not results.failures else 1


def cmd_validate_spec(args):
    try:
        spec = resolve_model(args.model)
    except SpecError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    problems = validate_spec(spec)
    for p in problems:
        print(f"invalid: {p}", file=sys.stderr)
    if problems:
        return 1
    print(f"ok: {spec.n_lv} LVs ({len(spec.exogenous)} exogenous), {spec.n_mv} MVs, "
          f"{len(spec.paths())} paths")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plssemkm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def fitting(p, need_data=True):
        if need_data:
            p.add_argument("--data", required=True, help="CSV file with a header row")
            p.add_argument("--model", required=True,
                           help="spec file or bundled name: " + ", ".join(BUNDLED_MODELS))
            p.add_argument("--rescale-ecsi", action="store_true",
                           help="map 1..10 ratings to 0..100 before standardizing")
            p.add_argument("--impute", choices=("mean", "none"), default="mean")
        p.add_argument("--starts", type=int, default=15)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tolerance", type=float, default=1e-12)
        p.add_argument("--max-iter", type=int, default=300)
        p.add_argument("--out", default=".")

    p = sub.add_parser("fit", help="fit PLS-SEM-KM for one K")
    fitting(p)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select-k", help="scan K and report the pseudo-F and gap curves")
    fitting(p)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--references", type=int, default=50)
    p.add_argument("--score-source", choices=("model", "plain"), default="model")
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("tandem", help="plain PLS followed by K-means on the scores")
    fitting(p)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_tandem)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--kind", choices=("model1", "model2", "intro", "ecsi-like"),
                   default="model1")
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--proportions", default="balanced",
                   help="balanced, unbalanced1, unbalanced2 or comma-separated weights")
    p.add_argument("--sigma", type=float, default=0.30)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="run a simulation grid")
    fitting(p, need_data=False)
    p.add_argument("--grid", help="TOML or JSON file of [[cell]] entries")
    p.add_argument("--context", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--cases", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--select-k", action="store_true", help="also run K selection per replicate")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("validate-spec", help="check a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate_spec)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
