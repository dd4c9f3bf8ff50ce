"""Experiment registry: reproducible verification runs with artifacts.

Each run_* function executes one experiment against a model, writes CSVs,
an SVG chart where a curve is informative, a Markdown report, and a
manifest, then returns an ExperimentResult whose criteria carry a three-way
verdict: PASS, FAIL, or INCONCLUSIVE.  A criterion is INCONCLUSIVE when the
Monte Carlo resolution is too coarse to call it, in particular whenever the
sampling noise floor exceeds the tolerance band itself; such runs advise
raising N/M/R rather than claiming success.

Determinism contract: with a fixed (seed, parameters) pair, every CSV is
byte-identical across reruns and across thread counts.  All randomness flows
through RngStream children keyed by stable labels (experiment, replicate,
class, particle), never by scheduling order; thread pools only change when
work happens, not what it computes, and results are merged in index order.
"""

from __future__ import annotations

import dataclasses
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import (
    CHAOS_RATIO_BAND,
    EQUILIBRIUM_JUMPS_PER_STEP,
    JUMPS_PER_STEP_TARGET,
    KS_EQUILIBRIUM_MARGINAL,
    KS_NOISE_FLOOR_FACTOR,
    KS_STATIONARY,
    NUMERIC_SEED,
    SE_BAND,
    SE_BAND_SUP,
)
from .engine import simulate_connection, simulate_discrete_aimd
from .equilibrium import (
    StationaryDistribution,
    detect_topology,
    solve_auto,
    solve_fixed_point,
    solve_linear_network,
    solve_single_node,
    solve_torus,
)
from .meanfield import ConvergenceError, dynkin_check, solve_mckean
from .model import NetworkModel
from .numerics import RngStream, ks_distance
from .population import chaos_metrics, default_step, simulate_population
from .report import (
    CsvWriter,
    md_table,
    write_csv,
    write_manifest,
    write_report,
    write_svg_chart,
)

__all__ = [
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "CriterionResult",
    "ExperimentResult",
    "run_fixedpoint",
    "run_equilibrium",
    "run_scaling",
    "run_mckean",
    "run_dynkin",
    "run_chaos",
    "EXPERIMENTS",
]

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class CriterionResult:
    """One acceptance check: observed value against its tolerance band."""

    name: str
    status: str
    observed: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        extra = f"  ({self.detail})" if self.detail else ""
        return (
            f"{self.status:<12} {self.name}: observed {self.observed:.6g}, "
            f"band {self.threshold:.6g}{extra}"
        )


def _band_criterion(
    name: str, observed: float, band: float, floor: float = 0.0, detail: str = ""
) -> CriterionResult:
    """Three-way verdict for 'observed <= band' given a noise floor.

    The floor is the resolution of the estimate (for KS statistics, the
    expected value ~0.87/sqrt(n) under exact agreement).  A floor above the
    band means the experiment cannot certify the criterion at this scale;
    observations in (band, band + floor] are within resolution of the band.
    """
    if floor > band:
        status = INCONCLUSIVE
        detail = (detail + "; " if detail else "") + "noise floor exceeds band, increase the sample size"
    elif observed <= band:
        status = PASS
    elif observed <= band + floor:
        status = INCONCLUSIVE
        detail = (detail + "; " if detail else "") + "within one noise floor of the band"
    else:
        status = FAIL
    return CriterionResult(name, status, float(observed), float(band), detail)


def _se_criterion(name: str, observed: float, band: float, detail: str = "") -> CriterionResult:
    """PASS/FAIL for a zero-consistency check whose band is already a
    multiple of the estimate's own standard error."""
    status = PASS if abs(observed) <= band else FAIL
    return CriterionResult(name, status, float(observed), float(band), detail)


def _diff_criterion(
    name: str, observed: float, floor: float, detail: str = "", strict: bool = False
) -> CriterionResult:
    """Verdict for a monotonicity-type criterion 'observed <= 0' (or < 0
    when strict): the measured value passes on its own merits; a violation
    within the noise floor is inconclusive, beyond it a failure."""
    ok = observed < 0.0 if strict else observed <= 0.0
    if ok:
        status = PASS
    elif observed <= floor:
        status = INCONCLUSIVE
        detail = (detail + "; " if detail else "") + "violation within the noise floor"
    else:
        status = FAIL
    return CriterionResult(name, status, float(observed), 0.0, detail)


@dataclass
class ExperimentResult:
    name: str
    criteria: list
    files: list
    params: dict
    seed: int
    wall_time_s: float
    notes: list = field(default_factory=list)

    @property
    def status(self) -> str:
        if any(c.status == FAIL for c in self.criteria):
            return FAIL
        if any(c.status == INCONCLUSIVE for c in self.criteria):
            return INCONCLUSIVE
        return PASS

    @property
    def exit_code(self) -> int:
        return {PASS: 0, INCONCLUSIVE: 2, FAIL: 1}[self.status]

    def summary_lines(self):
        yield f"experiment {self.name}: {self.status}"
        for c in self.criteria:
            yield "  " + c.line()
        for n in self.notes:
            yield f"  note: {n}"


def _ensure_outdir(out: str) -> str:
    out = os.path.abspath(out)
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _finish(name, out, seed, params, criteria, files, sections, t0, notes=None,
            config_text=None):
    from . import __version__

    notes = list(notes or [])
    if config_text is not None:
        echo = os.path.join(out, "config_echo.cfg")
        with open(echo, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(config_text)
        files = files + [echo]
    crit_table = md_table(
        ("criterion", "status", "observed", "band", "detail"),
        [(c.name, c.status, c.observed, c.threshold, c.detail) for c in criteria],
    )
    param_table = md_table(("parameter", "value"), sorted(params.items()))
    all_sections = [("Parameters", param_table), ("Criteria", crit_table)]
    all_sections.extend(sections)
    if notes:
        all_sections.append(("Notes", [f"- {n}" for n in notes]))
    report_path = os.path.join(out, "report.md")
    write_report(report_path, f"{name} experiment", all_sections)
    wall = time.perf_counter() - t0
    manifest_params = dict(params)
    manifest_params["experiment"] = name
    manifest_params["version"] = __version__
    manifest_path = os.path.join(out, "manifest.json")
    write_manifest(
        manifest_path,
        files=files + [report_path],
        seed=seed,
        params=manifest_params,
        wall_time_s=wall,
    )
    return ExperimentResult(
        name=name,
        criteria=list(criteria),
        files=files + [report_path, manifest_path],
        params=params,
        seed=seed,
        wall_time_s=wall,
        notes=notes,
    )


def _class_residual(law) -> np.ndarray:
    """Per-class residual: worst node residual among the nodes the class
    uses (the fixed-point equation is per node; the per-class CSV schema
    needs a scalar)."""
    a = law.model.allocation
    out = np.empty(law.model.num_classes)
    for k in range(law.model.num_classes):
        used = a[:, k] > 0.0
        out[k] = float(np.max(law.residual[used])) if np.any(used) else 0.0
    return out


_SPECIALIZED = {
    "single_node": solve_single_node,
    "linear": solve_linear_network,
    "torus3": solve_torus,
}


def run_fixedpoint(
    model: NetworkModel,
    out: str,
    seed: int = NUMERIC_SEED,
    threads: int = 1,
    trace: bool = False,
    tol: float = 1e-10,
    config_text=None,
) -> ExperimentResult:
    """Solve the equilibrium fixed point with the general damped iteration
    and, when the topology qualifies, the specialized solver; emit the
    per-class table and cross-solver agreement."""
    t0 = time.perf_counter()
    out = _ensure_outdir(out)
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    topology = detect_topology(model)
    general = solve_fixed_point(model, tol=tol)
    specialized = None
    if topology in _SPECIALIZED:
        specialized = _SPECIALIZED[topology](model, tol=tol)
    law = specialized if specialized is not None else general
    criteria = [
        _band_criterion(
            "fixed-point-residual",
            float(np.max(law.residual)),
            max(tol, 1e-9),
            detail=f"method {law.method}",
        )
    ]
    notes = []
    if specialized is not None:
        agree = float(np.max(np.abs(specialized.u_star - general.u_star)))
        criteria.append(
            _band_criterion("specialized-vs-general", agree, 1e-7,
                            detail=f"topology {topology}")
        )
    else:
        notes.append(f"topology {topology}: no specialized solver, general iteration only")
    if len(general.solutions) > 1:
        notes.append(
            f"general solver found {len(general.solutions)} solution clusters; "
            "reporting the lexicographically smallest"
        )
    class_csv = os.path.join(out, "fixed_point.csv")
    write_csv(
        class_csv,
        ("class", "r", "rho", "mean", "residual"),
        [
            (k + 1, model.classes[k].r, law.rho[k], law.mean_throughput[k],
             _class_residual(law)[k])
            for k in range(model.num_classes)
        ],
    )
    node_csv = os.path.join(out, "fixed_point_nodes.csv")
    write_csv(
        node_csv,
        ("node", "u_star", "residual", "method"),
        [
            (j + 1, law.u_star[j], law.residual[j], law.method)
            for j in range(model.num_nodes)
        ],
    )
    sections = [
        (
            "Fixed point",
            md_table(
                ("node", "u*"),
                [(j + 1, law.u_star[j]) for j in range(model.num_nodes)],
            ),
        ),
        (
            "Per-class equilibrium",
            md_table(
                ("class", "r", "rho", "mean throughput"),
                [
                    (k + 1, model.classes[k].r, law.rho[k], law.mean_throughput[k])
                    for k in range(model.num_classes)
                ],
            ),
        ),
    ]
    params = {"tol": tol, "topology": topology, "threads": threads}
    return _finish("fixedpoint", out, seed, params, criteria,
                   [class_csv, node_csv], sections, t0, notes,
                   config_text=config_text)


def _grid_step(model, law, t_end: float, h, target=JUMPS_PER_STEP_TARGET) -> float:
    """Default step aligned to the horizon (integer number of steps)."""
    raw = default_step(model, law, target) if h is None else float(h)
    steps = max(1, math.ceil(t_end / raw - 1e-12))
    return t_end / steps


def run_equilibrium(
    model: NetworkModel,
    out: str,
    seed: int = NUMERIC_SEED,
    threads: int = 1,
    trace: bool = False,
    n_per_class=None,
    t_end: float = 6.0,
    h=None,
    config_text=None,
) -> ExperimentResult:
    """Initialize the particle system at the equilibrium law, let it run,
    and verify the equilibrium is preserved: per-class marginal KS against
    the stationary density and flatness of the utilization path."""
    t0 = time.perf_counter()
    out = _ensure_outdir(out)
    if n_per_class is None:
        counts = list(model.counts) if model.counts else [2000] * model.num_classes
    else:
        counts = [int(n_per_class)] * model.num_classes
    if any(n < 2 for n in counts):
        raise ValueError("equilibrium run needs at least 2 particles per class")
    notes = []
    # a finite population equilibrates at the fixed point of its actual
    # composition n_k/N; when that differs from the declared limit weights,
    # solve at the empirical weights so stationarity is tested at the
    # operating point the particles can actually hold
    sizes = np.array(counts, dtype=float)
    frac = sizes / sizes.sum()
    run_model = model
    if np.max(np.abs(frac - model.weights)) > 0.5 / sizes.sum():
        run_model = NetworkModel(
            allocation=model.allocation,
            classes=tuple(
                dataclasses.replace(c, p=float(f))
                for c, f in zip(model.classes, frac)
            ),
            counts=None,
        )
        limit_u = solve_auto(model).u_star
        notes.append(
            "population composition "
            + np.array2string(frac, precision=4)
            + " differs from the declared limit weights; stationarity is "
            "checked at the composition's own fixed point (limit u* = "
            + np.array2string(limit_u, precision=6)
            + ")"
        )
    topology = detect_topology(run_model)
    general = solve_fixed_point(run_model)
    specialized = (
        _SPECIALIZED[topology](run_model) if topology in _SPECIALIZED else None
    )
    law = specialized if specialized is not None else general
    h_eff = _grid_step(run_model, law, t_end, h, EQUILIBRIUM_JUMPS_PER_STEP)
    root = RngStream(seed).child("equilibrium")
    init = law.sample_initial(root, counts)
    record = simulate_population(
        run_model, init, t_end, h_eff, root.child("pop"),
        snapshot_times=(t_end,),
    )
    criteria = []
    marg_rows = []
    final = record.snapshots[t_end]
    for k in range(model.num_classes):
        dist = law.distribution(k)
        ks = ks_distance(final[k], dist.cdf)
        floor = KS_NOISE_FLOOR_FACTOR / math.sqrt(counts[k])
        criteria.append(
            _band_criterion(
                f"marginal-ks-class-{k + 1}", ks, KS_EQUILIBRIUM_MARGINAL, floor,
                detail=f"n={counts[k]}",
            )
        )
        marg_rows.append(
            (k + 1, counts[k], ks, KS_EQUILIBRIUM_MARGINAL,
             float(np.mean(final[k])), float(law.mean_throughput[k]))
        )
    # flatness: the utilization path should hover at u* within its own
    # sampling noise; the per-node SE comes from the final-state spreads
    sizes = np.array([len(v) for v in final], dtype=float)
    stds = np.array([float(np.std(v, ddof=1)) for v in final])
    w = sizes / sizes.sum()
    se_u = np.sqrt(
        ((model.allocation * (w * stds / np.sqrt(sizes)))[:, :] ** 2).sum(axis=1)
    )
    flat_dev = float(np.max(np.abs(record.u - law.u_star[:, None])))
    criteria.append(
        _se_criterion(
            "utilization-flatness", flat_dev,
            SE_BAND_SUP * float(np.max(se_u)),
            detail=f"u* = {np.array2string(law.u_star, precision=6)}",
        )
    )
    if specialized is not None:
        agree = float(np.max(np.abs(specialized.u_star - general.u_star)))
        criteria.append(_band_criterion("specialized-vs-general", agree, 1e-7))
    files = []
    traj_csv = os.path.join(out, "trajectory.csv")
    write_csv(traj_csv, ("t", "class", "metric", "value"), record.trajectory_rows())
    files.append(traj_csv)
    snap_csv = os.path.join(out, "snapshot.csv")
    write_csv(snap_csv, ("t", "class", "particle", "w"), record.snapshot_rows())
    files.append(snap_csv)
    marg_csv = os.path.join(out, "marginals.csv")
    write_csv(
        marg_csv,
        ("class", "n", "ks", "band", "mean_empirical", "mean_limit"),
        marg_rows,
    )
    files.append(marg_csv)
    for k in range(model.num_classes):
        dist = law.distribution(k)
        xs = np.asarray(final[k], dtype=float)
        xs_sorted = np.sort(xs)
        emp = np.arange(1, xs.size + 1) / xs.size
        grid = np.linspace(0.0, float(dist.quantile(0.999)), 200)
        svg = os.path.join(out, f"cdf_class{k + 1}.svg")
        write_svg_chart(
            svg,
            [
                ("limit", grid.tolist(), [float(dist.cdf(x)) for x in grid]),
                ("empirical", xs_sorted.tolist(), emp.tolist()),
            ],
            title=f"class {k + 1} marginal at t = {t_end:g}",
            xlabel="w",
            ylabel="CDF",
        )
        files.append(svg)
    if trace:
        for k in range(model.num_classes):
            path = simulate_connection(
                run_model, k, law.u_star, float(law.mean_throughput[k]), 10.0,
                root.child("trace", k),
            )
            rows = [(0.0, "init", path.w0)]
            rows.extend((t, "loss", v) for t, v in path.events())
            tr = os.path.join(out, f"trace_class{k + 1}.csv")
            write_csv(tr, ("t", "event", "value"), rows)
            files.append(tr)
    sections = [
        ("Marginals",
         md_table(("class", "n", "KS", "band", "empirical mean", "limit mean"),
                  marg_rows)),
    ]
    params = {
        "t_end": t_end, "h": h_eff, "counts": list(counts),
        "topology": topology, "threads": threads, "trace": trace,
    }
    return _finish("equilibrium", out, seed, params, criteria, files, sections, t0,
                   notes, config_text=config_text)


def run_scaling(
    out: str,
    seed: int = NUMERIC_SEED,
    threads: int = 1,
    trace: bool = False,
    r: float = 0.5,
    eps_list=(1e-2, 1e-3, 1e-4),
    samples: int = 50000,
    chains: int = 1024,
) -> ExperimentResult:
    """Packet-level chain versus the continuous stationary law.

    For each per-packet loss probability eps, runs a bank of independent
    chains, rescales post-burn-in states by sqrt(eps), and measures the KS
    distance to the unit stationary law; the distance must shrink as eps
    does and end below the stationary band.
    """
    t0 = time.perf_counter()
    out = _ensure_outdir(out)
    eps_arr = [float(e) for e in eps_list]
    if any(e <= 0.0 or e >= 1.0 for e in eps_arr):
        raise ValueError(
            "eps values must lie in (0, 1): eps = 0 is the degenerate "
            "loss-free chain with no stationary law"
        )
    if sorted(eps_arr, reverse=True) != eps_arr:
        raise ValueError("eps list must be strictly decreasing")
    dist = StationaryDistribution(r, 1.0)
    root = RngStream(seed).child("scaling")

    def one(i_eps):
        i, eps = i_eps
        # the natural time unit of the chain is ~1/sqrt(eps) steps: state
        # scale 1/sqrt(eps), +1 per step, so burn-in and thinning follow it
        stride = max(1, round(1.0 / math.sqrt(eps)))
        burn_records = 12
        n_rec = max(1, math.ceil(samples / chains))
        steps = (burn_records + n_rec) * stride
        w0 = math.ceil(1.0 / math.sqrt(eps))
        chain = simulate_discrete_aimd(
            r, eps, steps, root.child("eps", i), w0=w0,
            chains=chains, record_stride=stride,
        )
        vals = math.sqrt(eps) * chain[:, burn_records:].astype(float).ravel()
        ks = ks_distance(vals, dist.cdf)
        return i, eps, vals.size, ks

    jobs = list(enumerate(eps_arr))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    criteria = []
    floor_final = KS_NOISE_FLOOR_FACTOR / math.sqrt(results[-1][2])
    criteria.append(
        _band_criterion(
            f"ks-at-eps-{eps_arr[-1]:g}", results[-1][3], KS_STATIONARY,
            floor_final, detail=f"n={results[-1][2]}",
        )
    )
    worst_increase = -math.inf
    floor_pair = 0.0
    for (i1, e1, n1, k1), (i2, e2, n2, k2) in zip(results, results[1:]):
        inc = k2 - k1
        if inc > worst_increase:
            worst_increase = inc
            floor_pair = KS_NOISE_FLOOR_FACTOR * math.sqrt(1.0 / n1 + 1.0 / n2)
    criteria.append(
        _diff_criterion(
            "ks-nonincreasing", worst_increase, floor_pair,
            detail="largest adjacent increase across the eps ladder",
        )
    )
    csv_path = os.path.join(out, "scaling.csv")
    write_csv(
        csv_path,
        ("eps", "r", "n_samples", "ks", "band"),
        [(e, r, n, ks, KS_STATIONARY) for _, e, n, ks in results],
    )
    svg = os.path.join(out, "scaling.svg")
    write_svg_chart(
        svg,
        [("KS", [math.log10(e) for _, e, _, _ in results],
          [ks for _, _, _, ks in results])],
        title="packet-chain convergence to the continuous stationary law",
        xlabel="log10(eps)",
        ylabel="KS distance",
    )
    sections = [
        ("KS ladder",
         md_table(("eps", "n", "KS"),
                  [(e, n, ks) for _, e, n, ks in results])),
    ]
    params = {
        "r": r, "eps_list": eps_arr, "samples": samples, "chains": chains,
        "threads": threads,
    }
    return _finish("scaling", out, seed, params, criteria,
                   [csv_path, svg], sections, t0)


def _mckean_files(out, sol, law):
    files = []
    series_csv = os.path.join(out, "mckean.csv")
    write_csv(series_csv, ("t", "series", "value", "se"), sol.series_rows())
    files.append(series_csv)
    diag = os.path.join(out, "mckean_diagnostics.json")
    import json

    with open(diag, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "iterations": sol.iterations,
                "delta_history": list(sol.delta_history),
                "m": sol.m,
                "dt": sol.dt,
                "u_final": sol.u[:, -1].tolist(),
                "u_star": law.u_star.tolist() if law is not None else None,
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    files.append(diag)
    series = []
    for k in range(sol.means.shape[0]):
        series.append((f"mean {k + 1}", sol.times.tolist(), sol.means[k].tolist()))
    for j in range(sol.u.shape[0]):
        series.append((f"u {j + 1}", sol.times.tolist(), sol.u[j].tolist()))
    svg = os.path.join(out, "mckean.svg")
    write_svg_chart(svg, series, title="mean-field paths", xlabel="t", ylabel="value")
    files.append(svg)
    return files


def run_mckean(
    model: NetworkModel,
    out: str,
    seed: int = NUMERIC_SEED,
    threads: int = 1,
    trace: bool = False,
    m: int = 10000,
    t_end: float = 10.0,
    dt: float = 0.05,
    tol: float = 1e-3,
    max_iter: int = 25,
    config_text=None,
) -> ExperimentResult:
    """Solve the mean-field dynamics from the stationary initial law and
    verify stationarity: the utilization path must stay within Monte Carlo
    noise of the fixed point, and the Picard updates must shrink."""
    t0 = time.perf_counter()
    out = _ensure_outdir(out)
    law = solve_auto(model)
    init = [law.distribution(k) for k in range(model.num_classes)]
    root = RngStream(seed).child("mckean")
    criteria = []
    notes = []
    try:
        sol = solve_mckean(
            model, init, t_end, dt, m, root, tol=tol, max_iter=max_iter
        )
    except ConvergenceError as exc:
        criteria.append(
            CriterionResult(
                "picard-converged", FAIL, float(exc.delta_history[-1]), tol,
                f"no convergence in {max_iter} iterations",
            )
        )
        params = {"m": m, "t_end": t_end, "dt": dt, "tol": tol, "threads": threads}
        return _finish("mckean", out, seed, params, criteria, [], [], t0,
                       [f"delta history: {list(exc.delta_history)}"],
                       config_text=config_text)
    criteria.append(
        _band_criterion("picard-converged", sol.delta_history[-1], tol,
                        detail=f"{sol.iterations} iterations")
    )
    if len(sol.delta_history) >= 2:
        shrink = sol.delta_history[-1] - sol.delta_history[0]
        status = PASS if shrink < 0.0 else FAIL
        criteria.append(
            CriterionResult(
                "picard-update-shrinks", status, float(shrink), 0.0,
                "last minus first field update",
            )
        )
    else:
        notes.append("single-update convergence: no shrink comparison possible")
    dev = float(np.max(np.abs(sol.u - law.u_star[:, None])))
    se_max = float(np.max(sol.se))
    criteria.append(
        _se_criterion(
            "stationary-u-flatness", dev, SE_BAND * se_max,
            detail=f"sup_t |u(t) - u*| vs {SE_BAND:g} x max SE",
        )
    )
    files = _mckean_files(out, sol, law)
    sections = [
        ("Convergence",
         md_table(("iteration", "delta"),
                  list(enumerate(sol.delta_history, start=1)))),
    ]
    params = {
        "m": m, "t_end": t_end, "dt": dt, "tol": tol,
        "max_iter": max_iter, "threads": threads,
    }
    return _finish("mckean", out, seed, params, criteria, files, sections, t0, notes,
                   config_text=config_text)


def run_dynkin(
    model: NetworkModel,
    out: str,
    seed: int = NUMERIC_SEED,
    threads: int = 1,
    trace: bool = False,
    m: int = 4000,
    t_end: float = 6.0,
    dt: float = 0.05,
    init: str = "stationary",
    functions=("x", "x2"),
    tol: float = 2e-3,
    config_text=None,
) -> ExperimentResult:
    """Generator-residual (martingale) check on mean-field paths.

    Runs the solver twice, at dt and dt/2, estimates the discretization
    coefficient C from the halving difference, and requires every residual
    within 4 SE + C dt.  init is "stationary" or a number (deterministic
    transient start).
    """
    t0 = time.perf_counter()
    out = _ensure_outdir(out)
    if init == "stationary":
        law = solve_auto(model)
        init_spec = [law.distribution(k) for k in range(model.num_classes)]
        init_label = "stationary"
    else:
        w0 = float(init)
        if w0 < 0.0:
            raise ValueError("transient initial state must be >= 0")
        init_spec = [w0] * model.num_classes
        init_label = f"deterministic w0={w0:g}"
    root = RngStream(seed).child("dynkin")
    sol = solve_mckean(model, init_spec, t_end, dt, m, root,
                       tol=tol, max_iter=40, retain_paths=True)
    sol_half = solve_mckean(model, init_spec, t_end, dt / 2.0, m, root,
                            tol=tol, max_iter=40, retain_paths=True)
    criteria = []
    rows = []
    for k in range(model.num_classes):
        for fname in functions:
            res = dynkin_check(sol, k, fname)
            res_half = dynkin_check(sol_half, k, fname)
            # Richardson-style allowance: residual(dt) - residual(dt/2)
            # estimates C*dt/2 for an O(dt) bias
            c_est = 2.0 * abs(res.residual - res_half.residual) / dt
            band = SE_BAND_SUP * res.se + c_est * dt
            criteria.append(
                _se_criterion(
                    f"dynkin-class-{k + 1}-{fname}", res.residual, band,
                    detail=f"se {res.se:.3g}, C {c_est:.3g}",
                )
            )
            rows.append(
                (k + 1, fname, res.t, res.residual, res.se,
                 res_half.residual, c_est, band)
            )
    csv_path = os.path.join(out, "dynkin.csv")
    write_csv(
        csv_path,
        ("class", "f", "t", "residual", "se", "residual_half_dt", "c_est", "band"),
        rows,
    )
    sections = [
        ("Residuals",
         md_table(("class", "f", "residual", "SE", "residual at dt/2", "C", "band"),
                  [(a, b, d, e, f, g, h) for a, b, _, d, e, f, g, h in rows])),
    ]
    params = {
        "m": m, "t_end": t_end, "dt": dt, "init": init_label,
        "functions": list(functions), "threads": threads,
    }
    return _finish("dynkin", out, seed, params, criteria, [csv_path], sections, t0,
                   config_text=config_text)


def _chaos_counts(model: NetworkModel, n_total: int):
    counts = [max(1, round(c.p * n_total)) for c in model.classes]
    if any(n < 2 for n in counts):
        raise ValueError(
            f"population {n_total} leaves a class with fewer than 2 members; "
            "tagged-pair statistics need at least 2"
        )
    return counts


def run_chaos(
    model: NetworkModel,
    out: str,
    seed: int = NUMERIC_SEED,
    threads: int = 1,
    trace: bool = False,
    n_list=(100, 400, 1600),
    replicates: int = 32,
    t_end: float = 8.0,
    eval_times=(2.0, 8.0),
    m_ref: int = 30000,
    tol: float = 1e-3,
    config_text=None,
) -> ExperimentResult:
    """Propagation-of-chaos scaling: replicate particle populations against
    the mean-field reference across a ladder of population sizes.

    err_k(t) = replicate average of |class mean - reference mean| must fall
    as N grows (ideal rate 1/sqrt(N)); tagged pairs must decorrelate.  The
    reference ensemble uses the same step h as the particle runs so the
    shared O(h) splitting bias cancels from the deviations.
    """
    t0 = time.perf_counter()
    out = _ensure_outdir(out)
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or sorted(set(n_list)) != n_list:
        raise ValueError("population list must be strictly increasing")
    if replicates < 2:
        raise ValueError("chaos needs at least 2 replicates")
    eval_times = [float(t) for t in eval_times]
    if any(t <= 0.0 or t > t_end + 1e-12 for t in eval_times):
        raise ValueError("evaluation times must lie in (0, t_end]")
    law = solve_auto(model)
    g = min(eval_times)
    for t in eval_times + [t_end]:
        if abs(t / g - round(t / g)) > 1e-9:
            raise ValueError(
                "evaluation times and t_end must be integer multiples of the "
                "smallest evaluation time (grid alignment)"
            )
    raw = default_step(model, law, JUMPS_PER_STEP_TARGET)
    per_eval = max(1, math.ceil(g / raw - 1e-12))
    h = g / per_eval
    steps = round(t_end / h)
    # record roughly twice per time unit; the stride must divide the
    # evaluation spacing so the evaluation times stay on the recorded grid
    stride = 1
    for d in range(per_eval, 0, -1):
        if per_eval % d == 0 and d * h <= 0.5 + 1e-12:
            stride = d
            break
    root = RngStream(seed).child("chaos")
    reference = solve_mckean(
        model,
        [law.distribution(k) for k in range(model.num_classes)],
        t_end, h, m_ref, root.child("reference"), tol=tol, max_iter=25,
    )
    k_count = model.num_classes
    traj = CsvWriter(
        os.path.join(out, "chaos_trajectories.csv"),
        ("n", "rep", "t", "class", "metric", "value"),
    )
    err_csv = CsvWriter(
        os.path.join(out, "chaos_err.csv"),
        ("n", "t", "class", "err", "err_se", "pair_cov", "pair_cov_se"),
    )
    cross_csv = CsvWriter(
        os.path.join(out, "chaos_cross_cov.csv"),
        ("n", "t", "class_a", "class_b", "cov"),
    )
    metrics_by_n = {}
    try:
        for n_total in n_list:
            counts = _chaos_counts(model, n_total)

            def one_rep(rep, _counts=counts, _n=n_total):
                base = root.child("n", _n, "rep", rep)
                init = law.sample_initial(base, _counts)
                return simulate_population(
                    model, init, t_end, h, base.child("pop"),
                    sample_stride=stride,
                )

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    records = list(pool.map(one_rep, range(replicates)))
            else:
                records = [one_rep(rep) for rep in range(replicates)]
            for rep, rec in enumerate(records):
                traj.write_rows(
                    (n_total, rep + 1) + row for row in rec.trajectory_rows()
                )
            metrics = chaos_metrics(records, reference, eval_times)
            metrics_by_n[n_total] = metrics
            err_csv.write_rows(
                (n_total, metrics.times[ti], k + 1,
                 metrics.err[k, ti], metrics.err_se[k, ti],
                 metrics.pair_cov[k, ti], metrics.pair_cov_se[k, ti])
                for ti in range(len(eval_times))
                for k in range(k_count)
            )
            cross_csv.write_rows(
                (n_total, metrics.times[ti], k + 1, l + 1,
                 metrics.cross_cov[(k, l)][ti])
                for (k, l) in sorted(metrics.cross_cov)
                for ti in range(len(eval_times))
            )
    finally:
        traj.close()
        err_csv.close()
        cross_csv.close()
    criteria = []
    notes = []
    identical = any(m.identical_replicates for m in metrics_by_n.values())
    status = FAIL if identical else PASS
    criteria.append(
        CriterionResult("replicates-distinct", status, float(identical), 0.0,
                        "replicate streams must differ")
    )
    for ti, t in enumerate(eval_times):
        for k in range(k_count):
            worst_rise = -math.inf
            floor_pair = 0.0
            for n1, n2 in zip(n_list, n_list[1:]):
                m1, m2 = metrics_by_n[n1], metrics_by_n[n2]
                rise = m2.err[k, ti] - m1.err[k, ti]
                if rise > worst_rise:
                    worst_rise = rise
                    floor_pair = SE_BAND * math.hypot(
                        m1.err_se[k, ti], m2.err_se[k, ti]
                    )
            criteria.append(
                _diff_criterion(
                    f"err-decreasing-class-{k + 1}-t{t:g}", worst_rise,
                    floor_pair, "largest adjacent rise across N", strict=True,
                )
            )
        m_lo = metrics_by_n[n_list[0]]
        m_hi = metrics_by_n[n_list[-1]]
        e_lo = float(np.mean(m_lo.err[:, ti]))
        e_hi = float(np.mean(m_hi.err[:, ti]))
        ratio = e_lo / e_hi if e_hi > 0.0 else math.inf
        rel = math.sqrt(
            (float(np.mean(m_lo.err_se[:, ti])) / e_lo) ** 2
            + (float(np.mean(m_hi.err_se[:, ti])) / e_hi) ** 2
        ) if e_lo > 0.0 and e_hi > 0.0 else math.inf
        lo_band, hi_band = CHAOS_RATIO_BAND
        if lo_band <= ratio <= hi_band:
            status = PASS
        elif (
            math.isfinite(rel)
            and lo_band - SE_BAND * ratio * rel <= ratio <= hi_band + SE_BAND * ratio * rel
        ):
            status = INCONCLUSIVE
        else:
            status = FAIL
        criteria.append(
            CriterionResult(
                f"err-ratio-t{t:g}", status, ratio, hi_band,
                f"err({n_list[0]})/err({n_list[-1]}), band "
                f"[{lo_band:g}, {hi_band:g}], ideal "
                f"{math.sqrt(n_list[-1] / n_list[0]):.3g}",
            )
        )
        for k in range(k_count):
            cov = m_hi.pair_cov[k, ti]
            band = SE_BAND * m_hi.pair_cov_se[k, ti]
            criteria.append(
                _se_criterion(
                    f"pair-cov-class-{k + 1}-t{t:g}", cov, band,
                    detail=f"N = {n_list[-1]}",
                )
            )
    svg = os.path.join(out, "chaos_err.svg")
    series = []
    for ti, t in enumerate(eval_times):
        series.append(
            (f"t = {t:g}", [math.log10(n) for n in n_list],
             [float(np.mean(metrics_by_n[n].err[:, ti])) for n in n_list])
        )
    write_svg_chart(
        svg, series, title="deviation from the mean-field reference",
        xlabel="log10(N)", ylabel="err", log_y=True,
    )
    sections = [
        (
            "Scaling table",
            md_table(
                ("N", "t", "class", "err", "err SE", "pair cov", "pair cov SE"),
                [
                    (n, metrics_by_n[n].times[ti], k + 1,
                     metrics_by_n[n].err[k, ti], metrics_by_n[n].err_se[k, ti],
                     metrics_by_n[n].pair_cov[k, ti],
                     metrics_by_n[n].pair_cov_se[k, ti])
                    for n in n_list
                    for ti in range(len(eval_times))
                    for k in range(k_count)
                ],
            ),
        ),
    ]
    notes.append(
        f"reference: {reference.m} ensemble members, {reference.iterations} "
        f"Picard iterations, final update {reference.delta_history[-1]:.3g}"
    )
    files = [
        os.path.join(out, "chaos_trajectories.csv"),
        os.path.join(out, "chaos_err.csv"),
        os.path.join(out, "chaos_cross_cov.csv"),
        svg,
    ]
    params = {
        "n_list": n_list, "replicates": replicates, "t_end": t_end,
        "eval_times": eval_times, "h": h, "m_ref": m_ref,
        "threads": threads, "stride": stride,
    }
    return _finish("chaos", out, seed, params, criteria, files, sections, t0, notes,
                   config_text=config_text)


EXPERIMENTS = {
    "fixedpoint": run_fixedpoint,
    "equilibrium": run_equilibrium,
    "scaling": run_scaling,
    "mckean": run_mckean,
    "dynkin": run_dynkin,
    "chaos": run_chaos,
}
