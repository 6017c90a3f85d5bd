"""Experiment engine: replicate pipeline, sweeps, aggregation, reports.

One replicate runs the five-step pipeline: (i) base predictions from
the population's auxiliary split, (ii) fold construction and
cross-fitting on the drawn sample, (iii) the DR point estimate,
(iv) the method's variance, (v) the interval, with coverage recorded
against the generating mean (superpopulation target) and against the
realized sample mean (finite target, reported for comparison).

All randomness flows from a master seed through named substreams keyed
by (sigma, population, draw, sampling), so every method sees identical
data within a replicate and output is reproducible regardless of
worker scheduling.  Failures are captured per replicate, not fatal.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm as _norm

from .crossfit import crossfit_nuisances, standardize_columns
from .dataset import SpatialDataset, pairwise_distances
from .exceptions import ParameterError, SpatialDRError
from .folds import build_fold_plan
from .inference import METHODS
from .learners import GradientBoosting, make_learner
from .scores import crossppi_estimate, dr_scores
from .synthgen import (
    GridPopulation,
    TwoWayPopulation,
    assign_labels,
    draw_sample,
    fit_base_predictor,
    generate_population,
    generate_twoway_population,
    mar_propensity,
)
from .validation import seed_sequence
from .variance import (
    build_interval,
    hac_variance,
    iid_variance,
    jk_hac_variance,
    jk_twoway_variance,
    moran_gate,
    twoway_variance,
)

GRID_METHODS = ("crossppi", "dr-iid", "dr-hac", "dr-jk-hac")
TWOWAY_RUN_METHODS = ("crossppi", "dr-2way", "dr-jk-2way")

RECORD_COLUMNS = (
    "design",
    "sigma",
    "dep_scale",
    "sampling",
    "arm",
    "pop",
    "draw",
    "method",
    "n",
    "n_labeled",
    "mu_true",
    "sample_mean",
    "theta_hat",
    "lo",
    "hi",
    "width",
    "covered_superpop",
    "covered_finite",
    "v_value",
    "v_within",
    "v_diag",
    "v_off",
    "v_between",
    "v_jk",
    "floor_applied",
    "critical_branch",
    "gate_statistic",
    "gate_pvalue",
    "gate_spatial",
    "pi_source",
    "fallback_folds",
    "error",
)

SUMMARY_COLUMNS = (
    "design",
    "sigma",
    "dep_scale",
    "sampling",
    "arm",
    "method",
    "n_success",
    "n_failed",
    "failure_rate",
    "coverage",
    "coverage_mcse",
    "mean_width",
    "mean_bias",
    "finite_coverage",
)


@dataclass
class ExperimentConfig:
    """Knobs for a sweep; defaults are the desk-scale experiment."""

    design: str = "grid"
    sigmas: tuple = (0.0, 40.0, 80.0, 120.0)
    dep_scales: tuple = (0.0, 0.25, 0.5, 1.0)
    samplings: tuple = ("iid", "soft_block")
    arms: tuple = ("mcar", "mar")
    methods: tuple = GRID_METHODS
    n: int = 600
    label_rate: float = 0.20
    k: int = 5
    q_b: float = 0.05
    h_q: float = 0.10
    alpha: float = 0.10
    epsilon: float = 1e-12
    pi_min: float = 0.10
    populations: int = 20
    draws: int = 50
    seed: int = 0
    side: int = 250
    aux_frac: float = 0.35
    core_frac: float = 0.05
    strength: float = 1.5
    mar_floor: float = 0.10
    mar_ceil: float = 0.90
    oracle_pi: bool = True
    m_learner: str = "ridge"
    pi_learner: str = "logistic"
    gate: bool = False
    gate_level: float = 0.10
    gate_permutations: int = 1000
    critical: str | None = None
    min_train: int | None = None
    gbt_trees: int = 100
    gbt_depth: int = 3
    gbt_rate: float = 0.1
    twoway_pop: int = 4000
    g1_count: int = 20
    g2_count: int = 20
    jobs: int = 1

    def validate(self):
        if self.design not in ("grid", "twoway"):
            raise ParameterError(f"unknown design {self.design!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ParameterError(f"unknown method {m!r}")
        if self.design == "grid":
            bad = [m for m in self.methods if m in ("dr-2way", "dr-jk-2way")]
            if bad:
                raise ParameterError(f"grid design does not support {bad}")
        if self.design == "twoway":
            bad = [m for m in self.methods if m in ("dr-hac", "dr-jk-hac")]
            if bad:
                raise ParameterError(f"twoway design does not support {bad}")
        for s in self.samplings:
            if s not in ("iid", "soft_block"):
                raise ParameterError(f"unknown sampling mode {s!r}")
        for a in self.arms:
            if a not in ("mcar", "mar"):
                raise ParameterError(f"unknown arm {a!r}")
        if self.populations < 1 or self.draws < 1:
            raise ParameterError("populations and draws must be at least 1")
        return self


@dataclass(frozen=True)
class ReplicateRecord:
    """One method's result on one replicate; CSV-facing flat record.

    ``elapsed_ms`` is kept in memory for profiling but deliberately left
    out of emitted files so identical seeds give identical bytes.
    """

    design: str
    sigma: float | None
    dep_scale: float | None
    sampling: str
    arm: str
    pop: int
    draw: int
    method: str
    n: int
    n_labeled: int
    mu_true: float
    sample_mean: float
    theta_hat: float = float("nan")
    lo: float = float("nan")
    hi: float = float("nan")
    width: float = float("nan")
    covered_superpop: bool = False
    covered_finite: bool = False
    v_value: float = float("nan")
    v_within: float = float("nan")
    v_diag: float = float("nan")
    v_off: float = float("nan")
    v_between: float = float("nan")
    v_jk: float = float("nan")
    floor_applied: bool = False
    critical_branch: str = ""
    gate_statistic: float = float("nan")
    gate_pvalue: float = float("nan")
    gate_spatial: str = ""
    pi_source: str = ""
    fallback_folds: int = 0
    error: str = ""
    elapsed_ms: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.error == ""


def _substream(master: int, *key) -> np.random.SeedSequence:
    """Named substream: deterministic in (master, key), order-free."""
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(int(x) for x in key))


def _finish_record(base: ReplicateRecord, report, components: dict, elapsed: float) -> ReplicateRecord:
    gate = report.gate
    return replace(
        base,
        theta_hat=report.theta_hat,
        lo=report.lo,
        hi=report.hi,
        width=report.hi - report.lo,
        covered_superpop=bool(report.lo <= base.mu_true <= report.hi),
        covered_finite=bool(report.lo <= base.sample_mean <= report.hi),
        v_value=report.variance.value,
        v_within=components.get("v_within", float("nan")),
        v_diag=components.get("v_diag", float("nan")),
        v_off=components.get("v_off", float("nan")),
        v_between=components.get("v_between", float("nan")),
        v_jk=components.get("v_jk", components.get("v_2way", float("nan"))),
        floor_applied=report.variance.floor_applied,
        critical_branch=report.critical_branch,
        gate_statistic=gate.statistic if gate is not None else float("nan"),
        gate_pvalue=gate.p_value if gate is not None else float("nan"),
        gate_spatial="" if gate is None else str(bool(gate.spatial)),
        elapsed_ms=elapsed,
    )


def _crossppi_record(base: ReplicateRecord, ds: SpatialDataset, alpha: float, t0: float) -> ReplicateRecord:
    point, var = crossppi_estimate(ds)
    crit = float(_norm.ppf(1.0 - alpha / 2.0))
    half = crit * float(np.sqrt(var))
    lo, hi = point - half, point + half
    return replace(
        base,
        theta_hat=point,
        lo=lo,
        hi=hi,
        width=hi - lo,
        covered_superpop=bool(lo <= base.mu_true <= hi),
        covered_finite=bool(lo <= base.sample_mean <= hi),
        v_value=var,
        critical_branch="z_spatial",
        elapsed_ms=(time.perf_counter() - t0) * 1e3,
    )


def run_replicate(
    cfg: ExperimentConfig,
    ds: SpatialDataset,
    arm: str,
    design_pi: np.ndarray | None,
    base: ReplicateRecord,
    seed,
    g1=None,
    g2=None,
) -> list[ReplicateRecord]:
    """Run every configured method on one labeled sample.

    Methods share the fold plan, cross-fit, and score vector; failures
    are recorded per method (shared-stage failures hit all DR methods).
    """
    records = []
    t0 = time.perf_counter()

    if "crossppi" in cfg.methods:
        try:
            records.append(
                _crossppi_record(replace(base, method="crossppi"), ds, cfg.alpha, t0)
            )
        except SpatialDRError as exc:
            records.append(replace(base, method="crossppi", error=str(exc)))

    dr_methods = [m for m in cfg.methods if m != "crossppi"]
    if not dr_methods:
        return records

    ss = seed_sequence(seed)
    fold_seed, fit_seed, gate_seed = ss.spawn(3)
    try:
        dists = pairwise_distances(ds.coords)
        plan = build_fold_plan(
            ds, cfg.k, cfg.q_b, min_train=cfg.min_train, seed=fold_seed, dists=dists
        )
        twoway = cfg.design == "twoway"
        if cfg.oracle_pi and not twoway:
            pi_override = (
                np.full(ds.n, cfg.label_rate) if arm == "mcar" else design_pi
            )
        else:
            pi_override = None
        cf = crossfit_nuisances(
            ds,
            plan,
            m_learner=make_learner(cfg.m_learner, task="outcome", seed=fit_seed),
            pi_learner=make_learner(cfg.pi_learner, task="propensity", seed=fit_seed),
            pi_min=cfg.pi_min,
            pi_override=pi_override,
            m_override=ds.pred if twoway else None,
            seed=fit_seed,
        )
        sv = dr_scores(ds, cf)
        gate_record = None
        if cfg.gate:
            gate_record = moran_gate(
                ds,
                cf,
                h_q=cfg.h_q,
                permutations=cfg.gate_permutations,
                gate_level=cfg.gate_level,
                seed=gate_seed,
            )
        shared = replace(
            base,
            pi_source=cf.pi_source,
            fallback_folds=int(sum(plan.fallback_used)),
        )
    except SpatialDRError as exc:
        for m in dr_methods:
            records.append(replace(base, method=m, error=str(exc)))
        return records

    condensed = dists[np.triu_indices(ds.n, 1)]
    for m in dr_methods:
        t1 = time.perf_counter()
        try:
            if m == "dr-iid":
                variance = iid_variance(sv)
            elif m == "dr-hac":
                variance = hac_variance(
                    sv, ds.coords, cfg.h_q, cfg.epsilon, dists=dists,
                    condensed=condensed,
                )
            elif m == "dr-jk-hac":
                variance = jk_hac_variance(
                    sv, ds.coords, cfg.h_q, cfg.epsilon, dists=dists,
                    condensed=condensed,
                )
            elif m == "dr-2way":
                variance = twoway_variance(sv, g1, g2, cfg.epsilon)
            elif m == "dr-jk-2way":
                variance = jk_twoway_variance(sv, g1, g2, cfg.epsilon)
            else:
                raise ParameterError(f"unknown method {m!r}")
            report = build_interval(
                sv, variance, gate=gate_record, alpha=cfg.alpha,
                force_branch=cfg.critical,
            )
            records.append(
                _finish_record(
                    replace(shared, method=m),
                    report,
                    variance.components,
                    (time.perf_counter() - t1) * 1e3,
                )
            )
        except SpatialDRError as exc:
            records.append(replace(shared, method=m, error=str(exc)))
    return records


# ---------------------------------------------------------------------------
# grid design
# ---------------------------------------------------------------------------


def _grid_sample_dataset(pop, pred, analysis, sample_idx):
    local = np.searchsorted(analysis, sample_idx)
    features = np.column_stack([pop.x_field[sample_idx], pop.u_obs[sample_idx]])
    return features, pop.coords[sample_idx], pred[local], pop.y[sample_idx]


def _run_grid_population(cfg: ExperimentConfig, sigma_idx: int, pop_idx: int) -> list[ReplicateRecord]:
    sigma = float(cfg.sigmas[sigma_idx])
    pop = generate_population(cfg.side, sigma, _substream(cfg.seed, 0, sigma_idx, pop_idx))
    pred, analysis = fit_base_predictor(
        pop,
        cfg.aux_frac,
        _substream(cfg.seed, 1, sigma_idx, pop_idx),
        trees=cfg.gbt_trees,
        depth=cfg.gbt_depth,
        rate=cfg.gbt_rate,
    )
    records = []
    for draw in range(cfg.draws):
        for s_idx, sampling in enumerate(cfg.samplings):
            sample_idx = draw_sample(
                analysis,
                pop.coords,
                cfg.n,
                mode=sampling,
                core_frac=cfg.core_frac,
                seed=_substream(cfg.seed, 2, sigma_idx, pop_idx, draw, s_idx),
            )
            features, coords, yhat, y_true = _grid_sample_dataset(
                pop, pred, analysis, sample_idx
            )
            sample_mean = float(y_true.mean())
            for a_idx, arm in enumerate(cfg.arms):
                label_seed = _substream(
                    cfg.seed, 3, sigma_idx, pop_idx, draw, s_idx, a_idx
                )
                design_pi = None
                if arm == "mar":
                    design_pi, _ = mar_propensity(
                        standardize_columns(features),
                        standardize_columns(coords),
                        standardize_columns(yhat[:, None])[:, 0],
                        strength=cfg.strength,
                        target_rate=cfg.label_rate,
                        floor=cfg.mar_floor,
                        ceil=cfg.mar_ceil,
                    )
                    labeled = assign_labels(design_pi, "mar", seed=label_seed)
                else:
                    labeled = assign_labels(
                        np.full(cfg.n, cfg.label_rate), "mcar", cfg.label_rate,
                        seed=label_seed,
                    )
                base = ReplicateRecord(
                    design="grid",
                    sigma=sigma,
                    dep_scale=None,
                    sampling=sampling,
                    arm=arm,
                    pop=pop_idx,
                    draw=draw,
                    method="",
                    n=cfg.n,
                    n_labeled=int(labeled.sum()),
                    mu_true=pop.mu_true,
                    sample_mean=sample_mean,
                )
                try:
                    ds = SpatialDataset(
                        coords=coords,
                        features=features,
                        pred=yhat,
                        labeled=labeled,
                        outcome=np.where(labeled, y_true, np.nan),
                    )
                except SpatialDRError as exc:
                    records.extend(
                        replace(base, method=m, error=str(exc)) for m in cfg.methods
                    )
                    continue
                records.extend(
                    run_replicate(
                        cfg,
                        ds,
                        arm,
                        design_pi,
                        base,
                        _substream(cfg.seed, 4, sigma_idx, pop_idx, draw, s_idx, a_idx),
                    )
                )
    return records


# ---------------------------------------------------------------------------
# two-way design
# ---------------------------------------------------------------------------


def _twoway_predictor(pop: TwoWayPopulation, cfg: ExperimentConfig, seed):
    """Auxiliary-split boosted prediction of y from x alone."""
    ss = seed_sequence(seed)
    s_split, s_gbt = ss.spawn(2)
    n = pop.x.shape[0]
    n_aux = int(round(cfg.aux_frac * n))
    perm = np.random.default_rng(s_split).permutation(n)
    aux = perm[:n_aux]
    analysis = np.sort(perm[n_aux:])
    design = pop.x[:, None]
    model = GradientBoosting(
        loss="squared", trees=cfg.gbt_trees, depth=cfg.gbt_depth, rate=cfg.gbt_rate,
        seed=s_gbt,
    )
    model.fit(standardize_columns(design[aux]), pop.y[aux])
    pred = model.predict(standardize_columns(design[aux], design[analysis]))
    return pred, analysis


def _run_twoway_population(cfg: ExperimentConfig, scale_idx: int, pop_idx: int) -> list[ReplicateRecord]:
    dep_scale = float(cfg.dep_scales[scale_idx])
    pop = generate_twoway_population(
        cfg.twoway_pop,
        cfg.g1_count,
        cfg.g2_count,
        dep_scale,
        _substream(cfg.seed, 0, scale_idx, pop_idx),
    )
    pred, analysis = _twoway_predictor(
        pop, cfg, _substream(cfg.seed, 1, scale_idx, pop_idx)
    )
    records = []
    for draw in range(cfg.draws):
        sample_idx = np.asarray(
            np.random.default_rng(
                _substream(cfg.seed, 2, scale_idx, pop_idx, draw)
            ).choice(analysis, size=cfg.n, replace=False)
        )
        local = np.searchsorted(analysis, sample_idx)
        x = pop.x[sample_idx]
        yhat = pred[local]
        y_true = pop.y[sample_idx]
        g1 = pop.g1[sample_idx]
        g2 = pop.g2[sample_idx]
        sample_mean = float(y_true.mean())
        for a_idx, arm in enumerate(cfg.arms):
            label_seed = _substream(cfg.seed, 3, scale_idx, pop_idx, draw, a_idx)
            if arm == "mar":
                design_pi, _ = mar_propensity(
                    standardize_columns(x[:, None]),
                    np.zeros((cfg.n, 2)),
                    standardize_columns(yhat[:, None])[:, 0],
                    strength=cfg.strength,
                    target_rate=cfg.label_rate,
                    floor=cfg.mar_floor,
                    ceil=cfg.mar_ceil,
                )
                labeled = assign_labels(design_pi, "mar", seed=label_seed)
            else:
                design_pi = None
                labeled = assign_labels(
                    np.full(cfg.n, cfg.label_rate), "mcar", cfg.label_rate,
                    seed=label_seed,
                )
            base = ReplicateRecord(
                design="twoway",
                sigma=None,
                dep_scale=dep_scale,
                sampling="iid",
                arm=arm,
                pop=pop_idx,
                draw=draw,
                method="",
                n=cfg.n,
                n_labeled=int(labeled.sum()),
                mu_true=pop.mu_true,
                sample_mean=sample_mean,
            )
            try:
                ds = SpatialDataset(
                    coords=np.zeros((cfg.n, 2)),
                    features=x[:, None],
                    pred=yhat,
                    labeled=labeled,
                    outcome=np.where(labeled, y_true, np.nan),
                )
            except SpatialDRError as exc:
                records.extend(
                    replace(base, method=m, error=str(exc)) for m in cfg.methods
                )
                continue
            records.extend(
                run_replicate(
                    cfg,
                    ds,
                    arm,
                    design_pi,
                    base,
                    _substream(cfg.seed, 4, scale_idx, pop_idx, draw, a_idx),
                    g1=g1,
                    g2=g2,
                )
            )
    return records


# ---------------------------------------------------------------------------
# sweep driver, aggregation, reports
# ---------------------------------------------------------------------------

_SORT_KEY = (
    lambda r: (
        r.design,
        r.sigma if r.sigma is not None else -1.0,
        r.dep_scale if r.dep_scale is not None else -1.0,
        r.sampling,
        r.arm,
        r.pop,
        r.draw,
        r.method,
    )
)


def run_experiment(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    """Run the full sweep; output is canonical-ordered and seed-pure."""
    cfg.validate()
    if cfg.design == "grid":
        cells = [
            (s, p) for s in range(len(cfg.sigmas)) for p in range(cfg.populations)
        ]
        runner = _run_grid_population
    else:
        cells = [
            (s, p) for s in range(len(cfg.dep_scales)) for p in range(cfg.populations)
        ]
        runner = _run_twoway_population

    if cfg.jobs != 1:
        chunks = Parallel(n_jobs=cfg.jobs)(
            delayed(runner)(cfg, s, p) for s, p in cells
        )
    else:
        chunks = [runner(cfg, s, p) for s, p in cells]
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=_SORT_KEY)
    return records


def _cell_key(rec: ReplicateRecord):
    return (rec.design, rec.sigma, rec.dep_scale, rec.sampling, rec.arm, rec.method)


def aggregate(records: list[ReplicateRecord]) -> list[dict]:
    """Per-cell coverage, width, bias, and failure summaries."""
    if not records:
        raise ParameterError("cannot aggregate an empty record set")
    cells: dict = {}
    for rec in records:
        cells.setdefault(_cell_key(rec), []).append(rec)
    rows = []
    for key in sorted(cells, key=lambda k: tuple(str(x) for x in k)):
        recs = cells[key]
        ok = [r for r in recs if r.ok]
        n_ok = len(ok)
        row = {
            "design": key[0],
            "sigma": key[1],
            "dep_scale": key[2],
            "sampling": key[3],
            "arm": key[4],
            "method": key[5],
            "n_success": n_ok,
            "n_failed": len(recs) - n_ok,
            "failure_rate": (len(recs) - n_ok) / len(recs),
        }
        if n_ok:
            cov = float(np.mean([r.covered_superpop for r in ok]))
            row["coverage"] = cov
            row["coverage_mcse"] = float(np.sqrt(cov * (1 - cov) / n_ok))
            row["mean_width"] = float(np.mean([r.width for r in ok]))
            row["mean_bias"] = float(np.mean([r.theta_hat - r.mu_true for r in ok]))
            row["finite_coverage"] = float(np.mean([r.covered_finite for r in ok]))
        else:
            for col in ("coverage", "coverage_mcse", "mean_width", "mean_bias", "finite_coverage"):
                row[col] = float("nan")
        rows.append(row)
    return rows


def summary_value(summary: list[dict], method: str, field_name: str = "coverage", **match):
    """Pull one summary cell value; raises if the cell is absent."""
    for row in summary:
        if row["method"] != method:
            continue
        if all(row.get(k) == v for k, v in match.items()):
            return row[field_name]
    raise KeyError(f"no summary cell for method={method}, {match}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return "" if np.isnan(value) else repr(value)
    return str(value)


def write_records_csv(records: list[ReplicateRecord], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, col)) for col in RECORD_COLUMNS])


def read_records_csv(path) -> list[ReplicateRecord]:
    """Parse an emitted records file back into typed records."""
    out = []
    spec_types = {f.name: f.type for f in fields(ReplicateRecord)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for col in RECORD_COLUMNS:
                raw = row[col]
                ftype = spec_types[col]
                if ftype in ("float | None",):
                    kwargs[col] = None if raw == "" else float(raw)
                elif ftype == "float":
                    kwargs[col] = float("nan") if raw == "" else float(raw)
                elif ftype == "int":
                    kwargs[col] = int(raw)
                elif ftype == "bool":
                    kwargs[col] = raw == "True"
                else:
                    kwargs[col] = raw
            out.append(ReplicateRecord(**kwargs))
    return out


def write_summary_csv(summary: list[dict], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow([_fmt(row.get(col)) for col in SUMMARY_COLUMNS])


def write_summary_json(summary: list[dict], path):
    """Nested summary: design -> level -> sampling -> arm -> method."""
    nested: dict = {}
    for row in summary:
        level = row["sigma"] if row["design"] == "grid" else row["dep_scale"]
        node = (
            nested.setdefault(row["design"], {})
            .setdefault(str(level), {})
            .setdefault(row["sampling"], {})
            .setdefault(row["arm"], {})
        )
        node[row["method"]] = {
            k: (None if isinstance(v, float) and np.isnan(v) else v)
            for k, v in row.items()
            if k not in ("design", "sigma", "dep_scale", "sampling", "arm", "method")
        }
    with open(path, "w") as fh:
        json.dump(nested, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_coverage_by_sigma(records: list[ReplicateRecord], path):
    """Plot-ready per-cell coverage distribution across populations."""
    per_pop: dict = {}
    for rec in records:
        if not rec.ok:
            continue
        key = (rec.design, rec.sigma, rec.dep_scale, rec.sampling, rec.arm, rec.method, rec.pop)
        per_pop.setdefault(key, []).append(rec.covered_superpop)
    cells: dict = {}
    for key, flags in per_pop.items():
        cells.setdefault(key[:6], []).append(float(np.mean(flags)))
    header = (
        "design", "sigma", "dep_scale", "sampling", "arm", "method",
        "n_pops", "cov_mean", "cov_min", "cov_q25", "cov_median", "cov_q75", "cov_max",
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for key in sorted(cells, key=lambda k: tuple(str(x) for x in k)):
            covs = np.sort(np.asarray(cells[key]))
            q25, q50, q75 = (
                float(np.quantile(covs, q)) for q in (0.25, 0.5, 0.75)
            )
            writer.writerow(
                [_fmt(x) for x in key]
                + [
                    covs.size,
                    _fmt(float(covs.mean())),
                    _fmt(float(covs[0])),
                    _fmt(q25),
                    _fmt(q50),
                    _fmt(q75),
                    _fmt(float(covs[-1])),
                ]
            )


def emit_reports(summary: list[dict], records: list[ReplicateRecord], outdir) -> dict:
    """Write records.csv, summary.csv, summary.json, coverage_by_sigma.csv."""
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "records": os.path.join(outdir, "records.csv"),
        "summary_csv": os.path.join(outdir, "summary.csv"),
        "summary_json": os.path.join(outdir, "summary.json"),
        "coverage_by_sigma": os.path.join(outdir, "coverage_by_sigma.csv"),
    }
    try:
        write_records_csv(records, paths["records"])
        write_summary_csv(summary, paths["summary_csv"])
        write_summary_json(summary, paths["summary_json"])
        write_coverage_by_sigma(records, paths["coverage_by_sigma"])
    except OSError as exc:
        raise SpatialDRError(f"failed writing reports under {outdir}: {exc}") from exc
    return paths
