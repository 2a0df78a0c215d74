"""``netreport`` command-line interface.

Every command writes into ``<out>/<run-id>/`` (default ``./<command>-s<seed>``)
and leaves a ``.meta.json`` sidecar next to each result file.  Exit codes:
0 success, 1 data error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path

from . import __version__
from . import io as nio
from .diagnostics import ic_checks, tae_distribution
from .errors import DataError, NetReportError, ValidationError
from .estimators import (
    estimate_mean_degree,
    estimate_NH,
    estimate_NH_generalized,
    n_excluded,
    poststratify,
)
from .population import (
    BlockModelSpec,
    generate_block,
    generate_er,
    mean_degree_between,
)
from .sensitivity import SWEEP_COLUMNS, SweepConfig, measure_factors, sensitivity_sweep
from .survey import (
    AlterSelectionModel,
    ReportingModel,
    SamplingDesign,
    census_design,
    full_enumeration,
    run_survey,
)
from .uncertainty import BootstrapConfig, bootstrap_estimate, replicate_weights

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- argument parsing ----------------------------------------------------------------

# config keys that name input files
PATH_KEYS = {"records", "margins", "cc_records", "meal_records", "meal_margins"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="result file format")
    p.add_argument("--out", default=".", help="parent output directory")
    p.add_argument("--run-id", default=None, help="output subfolder (default <command>-s<seed>)")
    p.add_argument("--config", default=None, help="flat key = value file supplying defaults")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")


def _bootstrap_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--resample-size", type=int, default=None, help="bootstrap m (default n-1)")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--jobs", type=int, default=1, help="threads for replicate draws")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netreport", description="Network-reporting size estimation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a population and survey it")
    _common(p)
    p.add_argument("--model", choices=("er", "block"), default="er")
    p.add_argument("--n-hidden", type=int, default=2000)
    p.add_argument("--n-frame", type=int, default=400)
    p.add_argument("--n-total", type=int, default=None, help="population size including nodes outside H")
    p.add_argument("--p", type=float, default=0.01, help="edge probability (er)")
    p.add_argument("--phi", type=float, default=0.01, help="within-block edge probability (block)")
    p.add_argument("--sigma", type=float, default=1.0, help="between-block multiplier (block)")
    p.add_argument("--sample-size", type=int, default=200)
    p.add_argument("--census", action="store_true", help="interview all of F about every neighbour")
    p.add_argument("--max-alters", type=int, default=3)
    p.add_argument("--alter-selection", choices=("uniform", "weighted"), default="uniform")
    p.add_argument("--homophily", type=float, default=1.0, help="same-group alter propensity multiplier")
    p.add_argument("--false-negative-hidden", type=float, default=0.0)
    p.add_argument("--false-positive-hidden", type=float, default=0.0)
    p.add_argument("--false-negative-frame", type=float, default=0.0)
    p.add_argument("--false-positive-frame", type=float, default=0.0)
    p.add_argument("--awareness", type=float, default=1.0, help="probability an alter is reported aware")
    p.add_argument("--heaping-threshold", type=int, default=None)

    p = sub.add_parser("estimate", help="size estimate with bootstrap CI and degree summary")
    _common(p)
    _bootstrap_flags(p)
    p.add_argument("--records", required=False)
    p.add_argument("--margins", required=False)
    p.add_argument("--save-replicate-weights", action="store_true")

    p = sub.add_parser("ic", help="internal consistency checks by group")
    _common(p)
    _bootstrap_flags(p)
    p.add_argument("--records")
    p.add_argument("--margins")

    p = sub.add_parser("tae", help="compare IC results of two tie definitions")
    _common(p)
    _bootstrap_flags(p)
    p.add_argument("--cc-records", help="conversational-contact arm")
    p.add_argument("--meal-records", help="meal arm")
    p.add_argument("--margins")
    p.add_argument("--meal-margins", default=None)

    p = sub.add_parser("sensitivity-sweep", help="block-model grid of adjustment factors")
    _common(p)
    p.add_argument("--sigmas", type=_floats, default=SweepConfig.sigmas)
    p.add_argument("--p-f-given-h", type=_floats, default=SweepConfig.p_f_given_h)
    p.add_argument("--n-hidden", type=int, default=SweepConfig.n_hidden)
    p.add_argument("--frame-degree", type=float, default=SweepConfig.frame_degree)
    p.add_argument("--seeds", type=int, default=SweepConfig.seeds, help="populations per grid cell")
    p.add_argument("--sample-fraction", type=float, default=SweepConfig.sample_fraction)
    p.add_argument("--max-alters", type=int, default=SweepConfig.max_alters)
    p.add_argument("--budget", type=float, default=SweepConfig.budget, help="work-unit ceiling")

    p = sub.add_parser("validate", help="check a respondent file against margins")
    _common(p)
    p.add_argument("--records")
    p.add_argument("--margins")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str] | None) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    dests = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}  # noqa: SLF001
    try:
        cfg = nio.load_run_config(args.config, dests, PATH_KEYS & set(dests))
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    explicit = set()
    for tok in argv or sys.argv[1:]:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, raw in cfg.values.items():
        if key in explicit:
            continue
        action = dests[key]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            value = raw.lower() in ("1", "true", "yes")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError):
                raise UsageError(f"{args.config}: bad value for {key}: {raw!r}") from None
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{args.config}: {key} must be one of {sorted(action.choices)}")
        setattr(args, key, value)
    return args


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


# -- helpers ---------------------------------------------------------------------------


class Run:
    def __init__(self, args):
        self.args = args
        run_id = args.run_id or f"{args.command}-s{args.seed}"
        self.dir = Path(args.out) / run_id
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory: {exc.strerror}", path=str(self.dir)) from None
        self.inputs: dict[str, str] = {}

    def log(self, msg: str) -> None:
        if not self.args.quiet:
            print(msg, file=sys.stderr)

    def metadata(self, **kw) -> nio.RunMetadata:
        params = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(vars(self.args).items())
            if k not in ("quiet", "out", "run_id", "config", "format")
        }
        return nio.RunMetadata(
            command=self.args.command,
            seeds={"seed": self.args.seed},
            parameters=params,
            input_digests=dict(self.inputs),
            **kw,
        )

    def emit(self, name: str, rows, columns=None, **meta) -> Path:
        path = self.dir / f"{name}.{self.args.format}"
        nio.emit_results(rows, path, self.args.format, self.metadata(**meta), columns)
        self.log(f"wrote {path}")
        return path

    def read_records(self, path, margins=None) -> nio.RespondentFile:
        rf = nio.read_respondent_file(path, None if margins is None else margins.groups)
        self.inputs[str(path)] = rf.digest
        return rf

    def read_margins(self, path):
        m = nio.load_margins(path)
        self.inputs[str(path)] = nio.file_digest(path)
        return m


def _bootstrap(args) -> BootstrapConfig:
    try:
        return BootstrapConfig(args.replicates, args.resample_size, args.seed, args.ci_level, args.jobs)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


# -- commands --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    run = Run(args)
    try:
        if args.model == "er":
            pop = generate_er(args.n_hidden, args.n_frame, args.p, args.seed, n_total=args.n_total)
        else:
            spec = BlockModelSpec(args.phi, args.sigma, args.n_frame, args.n_hidden - args.n_frame)
            pop = generate_block(spec, args.seed)
        reporting = ReportingModel(
            args.false_negative_hidden, args.false_positive_hidden,
            args.false_negative_frame, args.false_positive_frame, args.awareness,
        )
        if args.census:
            design, alters = census_design(pop), full_enumeration(pop)
        else:
            design = SamplingDesign(args.sample_size)
            alters = AlterSelectionModel(args.alter_selection, args.max_alters, args.homophily)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    data = run_survey(pop, design, alters, reporting, args.seed, heaping_threshold=args.heaping_threshold)
    margins = nio.margins_from_population(pop)

    nio.save_respondents(data, run.dir / "respondents.csv", alters.max_alters)
    nio.save_margins(margins, run.dir / "margins.csv")
    nio.save_population(pop, run.dir / "population")

    factors = measure_factors(pop, reporting)
    truth = {
        "n_hidden": pop.n_hidden,
        "n_frame": pop.n_frame,
        "n_total": pop.n_total,
        "n_edges": pop.n_edges,
        "dbar_FF": mean_degree_between(pop, "frame", "frame"),
        "dbar_HF": mean_degree_between(pop, "hidden", "frame"),
        "eta_H": factors.eta_H,
        "eta_F": factors.eta_F,
        "nu": factors.nu,
        "predicted_estimand": factors.multiplier * pop.n_hidden,
        "n_respondents": len(data),
    }
    (run.dir / "truth.json").write_text(nio.to_json(truth), encoding="utf-8")
    nio.metadata_path(run.dir / "truth.json").write_text(nio.to_json(asdict(run.metadata())), encoding="utf-8")
    run.log(f"simulated N_H={pop.n_hidden}, N_F={pop.n_frame}, {len(data)} respondents -> {run.dir}")
    return EXIT_OK


def degree_summary_rows(data, margins, config: BootstrapConfig, reps, dataset: str) -> list[dict]:
    est = bootstrap_estimate(data, margins, config, estimate_mean_degree, replicate_set=reps)
    return [{
        "dataset": dataset, "mean_degree": est.point, "ci_low": est.ci_low, "ci_high": est.ci_high,
        "n_respondents": len(data),
    }]


def cmd_estimate(args) -> int:
    _require(args, "records", "margins")
    config = _bootstrap(args)
    run = Run(args)
    margins = run.read_margins(args.margins)
    rf = run.read_records(args.records, margins)
    data = rf.data
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        weights = poststratify(data, margins)
    reps = replicate_weights(data, margins, config)
    excluded = n_excluded(data)

    estimators = [("basic", estimate_NH)]
    if rf.has_awareness:
        estimators.append(("generalized", estimate_NH_generalized))
    rows = []
    degenerate = 0
    for name, fn in estimators:
        est = bootstrap_estimate(data, margins, config, fn, replicate_set=reps)
        degenerate += est.n_degenerate
        rows.append({
            "estimator": name, "point": est.point, "ci_low": est.ci_low, "ci_high": est.ci_high,
            "se": est.se, "level": est.level, "replicates": config.replicates,
            "n_degenerate": est.n_degenerate, "n_respondents": len(data), "n_excluded": excluded,
            "empty_cells": len(weights.empty_cells),
        })
    run.emit("estimate", rows, excluded_records=excluded, degenerate_replicates=degenerate)
    run.emit(
        "degree_summary",
        degree_summary_rows(data, margins, config, reps, Path(args.records).stem),
        excluded_records=excluded,
    )
    if args.save_replicate_weights:
        path = run.dir / "replicate_weights.csv"
        nio.save_replicate_weights(data.respondent_id, reps.weights, path)
        run.log(f"wrote {path}")
    for r in rows:
        run.log(f"{r['estimator']}: N_H = {r['point']:.6g} [{r['ci_low']:.6g}, {r['ci_high']:.6g}]")
    return EXIT_OK


def cmd_ic(args) -> int:
    _require(args, "records", "margins")
    config = _bootstrap(args)
    run = Run(args)
    margins = run.read_margins(args.margins)
    data = run.read_records(args.records, margins).data
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        checks = ic_checks(data, margins, config)
    for w in caught:
        run.log(str(w.message))
    run.emit("ic", nio.ic_rows(checks), nio.IC_COLUMNS, excluded_records=n_excluded(data))
    return EXIT_OK


def cmd_tae(args) -> int:
    _require(args, "cc_records", "meal_records", "margins")
    config = _bootstrap(args)
    run = Run(args)
    margins = run.read_margins(args.margins)
    meal_margins = run.read_margins(args.meal_margins) if args.meal_margins else margins
    cc = run.read_records(args.cc_records, margins).data
    meal = run.read_records(args.meal_records, meal_margins).data
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = tae_distribution(cc, meal, margins, config, meal_margins=meal_margins)
        cc_checks = {c.group: c for c in ic_checks(cc, margins)}
        meal_checks = {c.group: c for c in ic_checks(meal, meal_margins)}
    rows = [{
        "group": "TAE", "delta_cc": float("nan"), "delta_meal": float("nan"),
        "contribution": est.point, "ci_low": est.ci_low, "ci_high": est.ci_high,
    }]
    for g in est.extra["groups"]:
        a, b = cc_checks[g].delta, meal_checks[g].delta
        rows.append({
            "group": g, "delta_cc": a, "delta_meal": b, "contribution": abs(a) - abs(b),
            "ci_low": float("nan"), "ci_high": float("nan"),
        })
    run.emit("tae", rows)
    run.log(f"TAE = {est.point:.6g} [{est.ci_low:.6g}, {est.ci_high:.6g}] (positive favours the meal network)")
    return EXIT_OK


def cmd_sensitivity_sweep(args) -> int:
    try:
        cfg = SweepConfig(
            sigmas=tuple(args.sigmas), p_f_given_h=tuple(args.p_f_given_h), n_hidden=args.n_hidden,
            frame_degree=args.frame_degree, seeds=args.seeds, sample_fraction=args.sample_fraction,
            max_alters=args.max_alters, seed=args.seed, budget=args.budget,
        )
        cells = sensitivity_sweep(cfg)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    run = Run(args)
    run.emit("sweep", [c.row() for c in cells], SWEEP_COLUMNS)
    return EXIT_OK


def cmd_validate(args) -> int:
    _require(args, "records", "margins")
    run = Run(args)
    margins = run.read_margins(args.margins)
    data = run.read_records(args.records, margins).data
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        weights = poststratify(data, margins)
    rows = []
    for g in margins.groups:
        inside = data.group == g
        rows.append({
            "group": g,
            "n_respondents": int(inside.sum()),
            "margin": margins[g],
            "design_weight_sum": float(data.design_weight[inside].sum()),
            "k": weights.k_factors.get(g, 0.0),
            "calibrated_weight_sum": float(weights.calibrated[inside].sum()),
        })
    run.emit("validate", rows, excluded_records=n_excluded(data))
    run.log(f"{len(data)} records valid; {n_excluded(data)} excluded (degree > 0 with no detailed alters)")
    if weights.empty_cells:
        run.log("margin cells without respondents: " + ", ".join(weights.empty_cells))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "ic": cmd_ic,
    "tae": cmd_tae,
    "sensitivity-sweep": cmd_sensitivity_sweep,
    "validate": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"netreport: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NetReportError) as exc:
        print(f"netreport: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
