"""Command-line interface.

Verbs:
  simulate         grid-design coverage sweep
  simulate-twoway  overlapping two-way cluster sweep
  estimate         single CSV -> interval report JSON
  diagnose         residual dependence + overlap diagnostics JSON

Every flag can also be supplied through ``--config file`` containing
``key=value`` lines (keys match the long flag names); explicit flags win
over the file.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .crossfit import crossfit_nuisances
from .dataset import load_dataset_csv, pairwise_distance_quantile
from .diagnostics import (
    morans_i,
    moran_weights,
    nn_residual_correlation,
    overlap_report,
    permutation_pvalue,
    semivariogram,
)
from .exceptions import SpatialDRError
from .folds import build_fold_plan
from .harness import (
    ExperimentConfig,
    GRID_METHODS,
    TWOWAY_RUN_METHODS,
    aggregate,
    emit_reports,
    run_experiment,
)
from .inference import SpatialDRMean
from .learners import make_learner
from .variance import _effective_bandwidth


def _comma_list(kind=str):
    def parse(raw: str):
        return tuple(kind(tok) for tok in raw.split(",") if tok != "")

    return parse


def _sampling_list(raw: str):
    names = []
    for tok in raw.split(","):
        tok = tok.strip()
        if tok == "block":
            tok = "soft_block"
        if tok:
            names.append(tok)
    return tuple(names)


def _on_off(raw: str) -> bool:
    token = raw.strip().lower()
    if token in ("on", "true", "1", "yes"):
        return True
    if token in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {raw!r}")


def _load_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SpatialDRError(f"{path}:{line_no}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_").lstrip("_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, path: str | None):
    """Fill flags the user did not pass from a key=value file."""
    if path is None:
        return args
    raw = _load_config_file(path)
    actions = {a.dest: a for a in parser._actions}
    for key, value in raw.items():
        if key not in actions:
            raise SpatialDRError(f"unknown config key {key!r}")
        action = actions[key]
        if getattr(args, f"_explicit_{key}", False):
            continue  # flags win over the file
        coerce = action.type if action.type is not None else str
        setattr(args, key, coerce(value))
    return args


def _mark_explicit(subparser: argparse.ArgumentParser, args: argparse.Namespace, argv: list):
    """Record which destinations were given on the command line.

    Matching is on full flag spellings, so config-file users should pass
    unabbreviated flags when overriding.
    """
    for action in subparser._actions:
        for opt in action.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                setattr(args, f"_explicit_{action.dest}", True)


def _add_common_sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="key=value file mirroring the flags")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--label-rate", dest="label_rate", type=float, default=0.20)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--qb", dest="q_b", type=float, default=0.05)
    p.add_argument("--hq", dest="h_q", type=float, default=0.10)
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--pi-min", dest="pi_min", type=float, default=0.10)
    p.add_argument("--arm", dest="arms", type=_comma_list(), default=("mcar", "mar"))
    p.add_argument("--pops", dest="populations", type=int, default=20)
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strength", type=float, default=1.5)
    p.add_argument("--aux-frac", dest="aux_frac", type=float, default=0.35)
    p.add_argument("--m-learner", dest="m_learner", choices=("ridge", "gbt"), default="ridge")
    p.add_argument("--pi-learner", dest="pi_learner", choices=("logistic", "gbt"), default="logistic")
    p.add_argument("--gate", type=_on_off, default=False)
    p.add_argument("--critical", choices=("z", "t"), default=None)
    p.add_argument("--min-train", dest="min_train", type=int, default=None)
    p.add_argument("--gbt-trees", dest="gbt_trees", type=int, default=100)
    p.add_argument("--gbt-depth", dest="gbt_depth", type=int, default=3)
    p.add_argument("--gbt-rate", dest="gbt_rate", type=float, default=0.1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory for reports")


def _add_column_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument("--coords", type=_comma_list(), required=True, metavar="X,Y")
    p.add_argument("--features", type=_comma_list(), default=(), metavar="F1,F2,...")
    p.add_argument("--pred", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--outcome", required=True)


def _column_map(args) -> dict:
    return {
        "coords": list(args.coords),
        "features": list(args.features),
        "pred": args.pred,
        "label": args.label,
        "outcome": args.outcome,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatial-dr-infer", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    sim = sub.add_parser("simulate", help="grid-design coverage sweep")
    _add_common_sim_flags(sim)
    sim.add_argument("--sigma", dest="sigmas", type=_comma_list(float), default=(0.0, 40.0, 80.0, 120.0))
    sim.add_argument("--sampling", dest="samplings", type=_sampling_list, default=("iid", "soft_block"))
    sim.add_argument("--methods", type=_comma_list(), default=GRID_METHODS)
    sim.add_argument("--side", type=int, default=250)
    sim.add_argument("--core-frac", dest="core_frac", type=float, default=0.05)
    sim.add_argument("--oracle-pi", dest="oracle_pi", type=_on_off, default=True)
    sim.add_argument("--full", action="store_true", help="full 100x200 replication budget")

    two = sub.add_parser("simulate-twoway", help="two-way cluster sweep")
    _add_common_sim_flags(two)
    two.add_argument("--dep-scale", dest="dep_scales", type=_comma_list(float), default=(0.0, 0.25, 0.5, 1.0))
    two.add_argument("--methods", type=_comma_list(), default=TWOWAY_RUN_METHODS)
    two.add_argument("--pop-size", dest="twoway_pop", type=int, default=4000)
    two.add_argument("--g1", dest="g1_count", type=int, default=20)
    two.add_argument("--g2", dest="g2_count", type=int, default=20)

    est = sub.add_parser("estimate", help="estimate a mean from one CSV")
    est.add_argument("--config", default=None)
    _add_column_flags(est)
    est.add_argument("--method", default="dr-jk-hac")
    est.add_argument("--k", type=int, default=5)
    est.add_argument("--qb", dest="q_b", type=float, default=0.05)
    est.add_argument("--hq", dest="h_q", type=float, default=0.10)
    est.add_argument("--alpha", type=float, default=0.10)
    est.add_argument("--epsilon", type=float, default=1e-12)
    est.add_argument("--pi-min", dest="pi_min", type=float, default=0.10)
    est.add_argument("--m-learner", dest="m_learner", choices=("ridge", "gbt"), default="ridge")
    est.add_argument("--pi-learner", dest="pi_learner", choices=("logistic", "gbt"), default="logistic")
    est.add_argument("--gate", type=_on_off, default=False)
    est.add_argument("--gate-permutations", dest="gate_permutations", type=int, default=1000)
    est.add_argument("--critical", choices=("z", "t"), default=None)
    est.add_argument("--min-train", dest="min_train", type=int, default=None)
    est.add_argument("--g1-col", dest="g1_col", default=None, help="cluster column for two-way methods")
    est.add_argument("--g2-col", dest="g2_col", default=None)
    est.add_argument("--pi-col", dest="pi_col", default=None, help="known design propensity column")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out", default=None, help="JSON path (default: stdout)")

    diag = sub.add_parser("diagnose", help="residual dependence and overlap diagnostics")
    diag.add_argument("--config", default=None)
    _add_column_flags(diag)
    diag.add_argument("--permutations", type=int, default=5000)
    diag.add_argument("--bins", type=int, default=12)
    diag.add_argument("--k", type=int, default=5)
    diag.add_argument("--qb", dest="q_b", type=float, default=0.05)
    diag.add_argument("--hq", dest="h_q", type=float, default=0.10)
    diag.add_argument("--pi-min", dest="pi_min", type=float, default=0.10)
    diag.add_argument("--pi-col", dest="pi_col", default=None)
    diag.add_argument("--min-train", dest="min_train", type=int, default=None)
    diag.add_argument("--seed", type=int, default=0)
    diag.add_argument("--out", default=None, help="JSON path (default: stdout)")
    return parser


def _read_extra_column(path: str, column: str) -> np.ndarray:
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise SpatialDRError(f"column {column!r} not found in {path}")
        return np.array([row[column] for row in reader])


def _sanitize(obj):
    """Make payloads strict-JSON: NaN -> null, numpy scalars -> python."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and np.isnan(obj):
        return None
    return obj


def _emit_json(payload: dict, out: str | None):
    text = json.dumps(_sanitize(payload), indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _cmd_simulate(args, design: str) -> int:
    kwargs = dict(
        design=design,
        arms=args.arms,
        methods=tuple(args.methods),
        n=args.n,
        label_rate=args.label_rate,
        k=args.k,
        q_b=args.q_b,
        h_q=args.h_q,
        alpha=args.alpha,
        epsilon=args.epsilon,
        pi_min=args.pi_min,
        populations=args.populations,
        draws=args.draws,
        seed=args.seed,
        aux_frac=args.aux_frac,
        strength=args.strength,
        m_learner=args.m_learner,
        pi_learner=args.pi_learner,
        gate=args.gate,
        critical=args.critical,
        min_train=args.min_train,
        gbt_trees=args.gbt_trees,
        gbt_depth=args.gbt_depth,
        gbt_rate=args.gbt_rate,
        jobs=args.jobs,
    )
    if design == "grid":
        if args.full:
            kwargs["populations"], kwargs["draws"] = 100, 200
        kwargs.update(
            sigmas=args.sigmas,
            samplings=args.samplings,
            side=args.side,
            core_frac=args.core_frac,
            oracle_pi=args.oracle_pi,
        )
    else:
        kwargs.update(
            dep_scales=args.dep_scales,
            samplings=("iid",),
            twoway_pop=args.twoway_pop,
            g1_count=args.g1_count,
            g2_count=args.g2_count,
        )
    cfg = ExperimentConfig(**kwargs).validate()
    records = run_experiment(cfg)
    summary = aggregate(records)
    paths = emit_reports(summary, records, args.out)
    n_failed = sum(1 for r in records if not r.ok)
    print(f"wrote {len(records)} records ({n_failed} failed) to {paths['records']}")
    print(f"summary: {paths['summary_csv']}")
    return 0


def _variance_payload(report) -> dict:
    return {
        "value": report.variance.value,
        "method": report.variance.method,
        "components": dict(report.variance.components),
        "floor_applied": report.variance.floor_applied,
    }


def _cmd_estimate(args) -> int:
    ds = load_dataset_csv(args.data, _column_map(args))
    pi_override = None
    if args.pi_col is not None:
        pi_override = _read_extra_column(args.data, args.pi_col).astype(float)
    g1 = g2 = None
    if args.method in ("dr-2way", "dr-jk-2way"):
        if args.g1_col is None or args.g2_col is None:
            raise SpatialDRError(f"{args.method} needs --g1-col and --g2-col")
        g1 = _read_extra_column(args.data, args.g1_col)
        g2 = _read_extra_column(args.data, args.g2_col)
    est = SpatialDRMean(
        method=args.method,
        k=args.k,
        qb=args.q_b,
        hq=args.h_q,
        alpha=args.alpha,
        epsilon=args.epsilon,
        pi_min=args.pi_min,
        m_learner=args.m_learner,
        pi_learner=args.pi_learner,
        gate=args.gate,
        gate_permutations=args.gate_permutations,
        critical=args.critical,
        min_train=args.min_train,
        seed=args.seed,
    ).fit(ds, pi_override=pi_override, g1=g1, g2=g2)
    report = est.interval_
    payload = {
        "method": args.method,
        "n": ds.n,
        "n_labeled": ds.n_labeled,
        "theta_hat": report.theta_hat,
        "lo": report.lo,
        "hi": report.hi,
        "alpha": report.alpha,
        "critical_branch": report.critical_branch,
        "variance": _variance_payload(report),
        "gate": None
        if report.gate is None
        else {
            "statistic": report.gate.statistic,
            "p_value": report.gate.p_value,
            "spatial": report.gate.spatial,
            "degenerate": report.gate.degenerate,
        },
        "pi_source": None if est.crossfit_ is None else est.crossfit_.pi_source,
        "fallback_folds": None
        if est.fold_plan_ is None
        else int(sum(est.fold_plan_.fallback_used)),
    }
    _emit_json(payload, args.out)
    return 0


def _cmd_diagnose(args) -> int:
    ds = load_dataset_csv(args.data, _column_map(args))
    plan = build_fold_plan(ds, args.k, args.q_b, min_train=args.min_train, seed=args.seed)
    cf = crossfit_nuisances(
        ds,
        plan,
        m_learner=make_learner("ridge", task="outcome"),
        pi_learner=make_learner("logistic", task="propensity"),
        pi_min=args.pi_min,
        seed=args.seed,
    )
    lab = ds.labeled
    resid = ds.outcome[lab] - cf.m_hat[lab]
    coords_lab = ds.coords[lab]
    h_n = pairwise_distance_quantile(ds.coords, args.h_q)
    weights = moran_weights(coords_lab, _effective_bandwidth(h_n))

    moran_stat = morans_i(resid, coords_lab, h_n, weights=weights)
    moran_p = permutation_pvalue(
        lambda r, c: morans_i(r, c, h_n, weights=weights),
        resid,
        coords_lab,
        args.permutations,
        seed=args.seed,
    )
    nn_stat = nn_residual_correlation(resid, coords_lab)
    nn_p = permutation_pvalue(
        lambda r, c: nn_residual_correlation(r, c),
        resid,
        coords_lab,
        args.permutations,
        seed=args.seed + 1,
    )
    design_pi = None
    if args.pi_col is not None:
        design_pi = _read_extra_column(args.data, args.pi_col).astype(float)
    overlap = overlap_report(design_pi, cf.pi_hat, ds.labeled, args.pi_min)
    vario = semivariogram(resid, coords_lab, bins=args.bins)

    payload = {
        "n": ds.n,
        "n_labeled": ds.n_labeled,
        "h_n": h_n,
        "permutations": args.permutations,
        "morans_i": moran_stat,
        "morans_i_pvalue": moran_p,
        "nn_residual_correlation": nn_stat,
        "nn_residual_correlation_pvalue": nn_p,
        "overlap": overlap.to_dict(),
        "semivariogram": [
            {"distance": c, "gamma": g, "n_pairs": m} for c, g, m in vario
        ],
    }
    _emit_json(payload, args.out)
    return 0


def _subparser_for(parser: argparse.ArgumentParser, verb: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[verb]
    raise SpatialDRError(f"no subparser for verb {verb!r}")


def main(argv=None) -> int:
    parser = build_parser()
    argv_list = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv_list)
    subparser = _subparser_for(parser, args.verb)
    _mark_explicit(subparser, args, argv_list)
    try:
        _apply_config(subparser, args, getattr(args, "config", None))
        if args.verb == "simulate":
            return _cmd_simulate(args, "grid")
        if args.verb == "simulate-twoway":
            return _cmd_simulate(args, "twoway")
        if args.verb == "estimate":
            return _cmd_estimate(args)
        if args.verb == "diagnose":
            return _cmd_diagnose(args)
        parser.error(f"unknown verb {args.verb!r}")
    except SpatialDRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
