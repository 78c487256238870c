"""Experiment runners behind the command line.

Each runner takes a validated config, writes its files into
``cfg.output_dir`` together with ``manifest.json`` (the resolved config,
tool version and seeds), and returns a :class:`RunResult` whose
``exit_code`` follows the CLI convention: 0 success, 2 numerical abort,
3 exit-time study with every run censored.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy
from scipy.stats import linregress

from . import __version__
from .config import ExitTimeConfig, NormalFormConfig, ScanExperiment, SimulateConfig, SpectrumConfig
from .galerkin import ModeState, NonlinearitySpec, random_state
from .integrator import StepPlan, evolve, exit_times
from .normalform import (
    Poly,
    birkhoff_normal_form,
    expand_Hp,
    verify_action_commutation,
    verify_gauge_rule,
    verify_level_balance,
)
from .resonance import (
    ScanConfig,
    check_KNR,
    lemma_bound_report,
    near_resonances,
    refine_bad_intervals,
    scan_s,
    union_measure,
)
from .spectrum import Domain, FrequencyTable, spectrum_rows

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_ABORT, EXIT_CENSORED = 0, 1, 2, 3


@dataclass
class RunResult:
    exit_code: int
    files: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _write_json(path: Path, obj) -> Path:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _outdir(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, cfg, files, **extra) -> Path:
    doc = {
        "tool": "fracnls",
        "version": __version__,
        "config": cfg.model_dump(mode="json"),
        "outputs": sorted(p.name for p in files),
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        **extra,
    }
    return _write_json(out / "manifest.json", doc)


# ---------------------------------------------------------------------------


def run_spectrum(cfg: SpectrumConfig) -> RunResult:
    out = _outdir(cfg)
    domain = Domain(cfg.domain, cfg.d)
    rows = list(spectrum_rows(domain, cfg.s, cfg.cutoff))
    files = [_write_csv(out / "spectrum.csv", ["j", "lambda", "omega", "multiplicity", "d_omega_ds"], rows)]
    files.append(_manifest(out, cfg, files))
    return RunResult(EXIT_OK, files, {"levels": len(rows)})


def run_resonance_report(cfg: ScanExperiment) -> RunResult:
    out = _outdir(cfg)
    domain = Domain(cfg.domain, cfg.d)
    grid = cfg.grid()
    sc = ScanConfig(cfg.K, cfg.N, cfg.j_max, cfg.gamma, cfg.alpha, tuple(grid))
    threshold = sc.threshold(domain)
    rows = scan_s(sc, domain)

    lo, hi = grid[0], grid[-1]
    if hi - lo < cfg.refine_step:
        lo, hi = max(lo - cfg.refine_step, 0.5 + 1e-12), hi + cfg.refine_step
    flagged = {}
    for row in rows:
        if row.min_divisor < threshold:
            for L, _ in near_resonances(sc, domain, row.s, threshold, cfg.max_refine_per_point):
                flagged.setdefault(L, row.s)
    intervals = []
    for L in flagged:
        intervals.extend(refine_bad_intervals(L, (lo, hi), threshold, domain, step=cfg.refine_step))
    intervals.sort(key=lambda iv: (iv.s_lo, iv.L.encode()))

    lemma_K = cfg.lemma_K or min(cfg.K, 6)
    lemma = []
    for s in grid:
        rep = lemma_bound_report(lemma_K, s, domain)
        lemma.append({
            "s": s,
            "K": lemma_K,
            "min_scaled_proof_exponent": rep.minimum,
            "argmin": list(rep.argmin),
            "min_scaled_statement_exponent": rep.minimum_statement,
            "argmin_statement": list(rep.argmin_statement),
        })

    files = [_write_csv(
        out / "scan.csv",
        ["s", "min_divisor", "argmin_L"],
        [(r.s, r.min_divisor, r.argmin.encode()) for r in rows],
    )]
    summary = {
        "domain": str(domain),
        "threshold": threshold,
        "n_multiindices": check_KNR(grid[0], sc, domain).n_checked,
        "tail_truncation": f"levels above N={cfg.N} truncated at J_max={cfg.j_max}",
        "failing_s": [r.s for r in rows if r.min_divisor < threshold],
        "minimizers": {repr(r.s): [L.encode() for L in r.minimizers] for r in rows if len(r.minimizers) > 1},
        "bad_intervals": [
            {"L": iv.L.encode(), "s_lo": iv.s_lo, "s_hi": iv.s_hi, "width": iv.width} for iv in intervals
        ],
        "total_measure": union_measure(intervals),
        "lemma_bound_report": lemma,
    }
    files.append(_write_json(out / "summary.json", summary))
    files.append(_manifest(out, cfg, files))
    return RunResult(EXIT_OK, files, summary)


def _initial_state(cfg: SimulateConfig) -> ModeState:
    if cfg.initial_state:
        state = ModeState.from_json(Path(cfg.initial_state).read_text())
        if state.N != cfg.N:
            raise ValueError(f"initial state has N={state.N}, config has N={cfg.N}")
        return state
    return random_state(cfg.N, cfg.eps, cfg.r, np.random.default_rng(cfg.seed))


def run_simulation(cfg: SimulateConfig) -> RunResult:
    out = _outdir(cfg)
    f = NonlinearitySpec(tuple(cfg.taylor))
    state = _initial_state(cfg)
    plan = StepPlan(cfg.dt, cfg.T_end, cfg.observer_stride, cfg.scheme, cfg.r, cfg.blowup_factor, cfg.max_steps)
    files, summary, aborts = [], {}, {}
    runs = [("trajectory.csv", cfg.s)]
    if cfg.compare_s is not None:
        runs.append((f"trajectory_s{cfg.compare_s:g}.csv", cfg.compare_s))
    for name, s in runs:
        traj = evolve(state, s, f, plan)
        files.append(_write_csv(out / name, traj.header(), traj.rows()))
        g = traj.gamma
        summary[name] = {
            "s": s,
            "gamma_rel_drift": float(np.max(np.abs(g - g[0])) / g[0]) if g[0] else 0.0,
            "max_action_change": float(np.max(np.abs(traj.actions - traj.actions[0]))),
            "energy_rel_drift": float(np.max(np.abs(traj.energy - traj.energy[0])) / abs(traj.energy[0]))
            if traj.energy[0] else 0.0,
            "abort_reason": traj.abort_reason,
        }
        if traj.abort_reason:
            aborts[name] = traj.abort_reason
        if name == "trajectory.csv":
            (out / "final_state.json").write_text(traj.final.to_json() + "\n")
            files.append(out / "final_state.json")
    files.append(_write_json(out / "summary.json", summary))
    files.append(_manifest(out, cfg, files, seed=cfg.seed, abort_reasons=aborts))
    return RunResult(EXIT_ABORT if aborts else EXIT_OK, files, summary)


def normalform_reports(Z: Poly, N: int) -> dict:
    """Gauge rule, levelwise balance and {Z, I_j} = 0 for j = 0..N."""
    comm = [verify_action_commutation(Z, j) for j in range(N + 1)]
    gauge, level = verify_gauge_rule(Z), verify_level_balance(Z)
    return {
        "gauge": gauge.summary(),
        "level_balance": level.summary(),
        "action_commutation": [
            {"level": c.level, "max_coeff": c.max_coeff, "passed": c.passed} for c in comm
        ],
        "all_passed": gauge.passed and level.passed and all(c.passed for c in comm),
    }


def run_normalform(cfg: NormalFormConfig) -> RunResult:
    out = _outdir(cfg)
    f = NonlinearitySpec(tuple(cfg.taylor))
    freqs = FrequencyTable(Domain.torus(1), cfg.s, cfg.N)
    max_deg = cfg.K + 2 + cfg.window
    Hp = expand_Hp(f, cfg.N, max(max_deg, 4))
    res = birkhoff_normal_form(freqs, Hp, cfg.K, cfg.threshold, cfg.window, cfg.term_cap)
    reports = normalform_reports(res.Z, cfg.N)
    reports["homological_steps"] = [
        {"degree": st.degree, "removed": st.n_removed, "resonant": st.n_resonant,
         "residual": st.residual, "relative_residual": st.relative_residual}
        for st in res.steps
    ]
    modes = list(Hp.modes)
    files = [
        _write_json(out / "Hp.json", {"modes": modes, "terms": Hp.to_records()}),
        _write_json(out / "Z.json", {"modes": modes, "terms": res.Z.to_records()}),
        _write_json(out / "chi.json", {"modes": modes, "generators": [c.to_records() for c in res.chi_list]}),
        _write_json(out / "R.json", {"modes": modes, "max_degree": res.max_degree, "terms": res.R.to_records()}),
        _write_json(out / "reports.json", reports),
    ]
    files.append(_manifest(out, cfg, files))
    summary = {
        "Hp_terms": len(Hp), "Z_terms": len(res.Z), "R_terms": len(res.R),
        "generators": [len(c) for c in res.chi_list],
        "Z_degrees": sorted(res.Z.degrees()), "R_degrees": sorted(res.R.degrees()),
        "reports": reports,
    }
    return RunResult(EXIT_OK, files, summary)


# ---------------------------------------------------------------------------
# exit times


@dataclass(frozen=True)
class ExitTimeRecord:
    eps: float
    seed: int
    T_exit: Optional[float]  # None when censored at T_max
    r: float
    s: float

    @property
    def censored(self) -> bool:
        return self.T_exit is None


def fit_exit_exponent(records: list[ExitTimeRecord]) -> dict:
    """Least-squares slope of log T_exit against log(1/eps) over uncensored rows."""
    pts = [(math.log(1.0 / r.eps), math.log(r.T_exit)) for r in records if not r.censored]
    xs = {x for x, _ in pts}
    if len(xs) < 2:
        t_max = max((r.T_exit or 0.0) for r in records)
        return {
            "status": "all_censored" if not pts else "insufficient",
            "slope": None,
            "stderr": None,
            "n_points": len(pts),
            "note": "exponent not identifiable; censored runs bound T_exit from below by T_max"
            if not pts else f"uncensored rows span a single eps (max T_exit {t_max:g})",
        }
    x, y = np.array(pts).T
    fit = linregress(x, y)
    return {
        "status": "fitted",
        "slope": float(fit.slope),
        "stderr": float(fit.stderr) if len(pts) > 2 else None,
        "intercept": float(fit.intercept),
        "n_points": len(pts),
    }


def exit_times_monotone(records: list[ExitTimeRecord]) -> dict[int, bool]:
    """Per seed: is T_exit (censored = +inf) nondecreasing as eps decreases?"""
    out = {}
    for seed in sorted({r.seed for r in records}):
        rows = sorted((r for r in records if r.seed == seed), key=lambda r: -r.eps)
        times = [math.inf if r.censored else r.T_exit for r in rows]
        out[seed] = all(b >= a for a, b in zip(times, times[1:]))
    return out


def run_exit_time_study(cfg: ExitTimeConfig) -> RunResult:
    out = _outdir(cfg)
    f = NonlinearitySpec(tuple(cfg.taylor))
    sc = ScanConfig(cfg.K, cfg.scan_N, cfg.J_max or cfg.scan_N, cfg.gamma, cfg.alpha)
    knr = check_KNR(cfg.s, sc, Domain.torus(1))
    if not knr.passed and not cfg.resonant_probe:
        raise ValueError(
            f"s={cfg.s} fails (K-NR) at K={cfg.K}, N={cfg.scan_N} (worst {knr.worst.L.encode()} = "
            f"{knr.worst.value:.3e}); set resonant_probe to run anyway"
        )
    pairs = [(e, seed) for e in cfg.eps for seed in cfg.seeds]
    xi0 = np.array([random_state(cfg.N, e, cfg.r, np.random.default_rng(seed)).xi for e, seed in pairs])
    et = exit_times(xi0, cfg.s, f, cfg.dt, cfg.T_max, cfg.r, cfg.observer_stride, cfg.scheme)
    records = [
        ExitTimeRecord(e, seed, None if np.isnan(t) else float(t), cfg.r, cfg.s)
        for (e, seed), t in zip(pairs, et.exit_time)
    ]
    fit = fit_exit_exponent(records)
    files = [_write_csv(
        out / "exit_times.csv",
        ["eps", "seed", "T_exit", "censored", "r", "s", "max_norm_ratio"],
        [(r.eps, r.seed, "censored" if r.censored else r.T_exit, int(r.censored), r.r, r.s, ratio)
         for r, ratio in zip(records, et.max_ratio)],
    )]
    summary = {
        "fit": fit,
        "monotone_per_seed": {str(k): v for k, v in exit_times_monotone(records).items()},
        "resolution": et.resolution,
        "T_max": cfg.T_max,
        "knr": {"passed": bool(knr.passed), "worst_L": knr.worst.L.encode(), "worst_value": knr.worst.value,
                "threshold": knr.worst.threshold, "resonant_probe": cfg.resonant_probe},
    }
    files.append(_write_json(out / "summary.json", summary))
    files.append(_manifest(out, cfg, files, seeds=cfg.seeds))
    code = EXIT_CENSORED if all(r.censored for r in records) else EXIT_OK
    return RunResult(code, files, {**summary, "records": records})


# ---------------------------------------------------------------------------
# action drift


@dataclass
class ActionDrift:
    """Running maximum of max_j |I_j(t) - I_j(0)| / eps^2 for a batch of runs."""

    s: float
    times: np.ndarray
    running_max: np.ndarray  # shape (batch, len(times))
    raw: np.ndarray  # the un-maximized statistic, same shape

    @property
    def final(self) -> np.ndarray:
        return self.running_max[:, -1]


def action_drift(xi0: np.ndarray, s: float, f, eps: float, dt: float, T: float, stride: int = 100) -> ActionDrift:
    """Propagate a batch (rows of ``xi0``) and sample the normalized action deviation every stride."""
    from .galerkin import level_actions
    from .integrator import SplitStepper

    xi = np.atleast_2d(np.asarray(xi0, dtype=complex)).copy()
    N = (xi.shape[1] - 1) // 2
    stepper = SplitStepper(N, s, f)
    I0 = level_actions(xi, N)
    n_total = int(round(T / dt))
    times, raw = [0.0], [np.zeros(len(xi))]
    done = 0
    while done < n_total:
        chunk = min(stride, n_total - done)
        xi = stepper.advance(xi, dt, chunk)
        done += chunk
        times.append(done * dt)
        raw.append(np.max(np.abs(level_actions(xi, N) - I0), axis=1) / eps**2)
    raw_arr = np.array(raw).T
    return ActionDrift(s, np.array(times), np.maximum.accumulate(raw_arr, axis=1), raw_arr)


def trend_test(times: np.ndarray, values: np.ndarray, n_se: float = 2.0) -> dict:
    """OLS slope of ``values`` on ``times``; flat when |slope| <= n_se standard errors."""
    fit = linregress(times, values)
    return {
        "slope": float(fit.slope),
        "stderr": float(fit.stderr),
        "t_stat": float(fit.slope / fit.stderr) if fit.stderr > 0 else (0.0 if fit.slope == 0 else math.inf),
        "flat": bool(abs(fit.slope) <= n_se * fit.stderr),
    }


RUNNERS = {
    "spectrum": run_spectrum,
    "scan": run_resonance_report,
    "simulate": run_simulation,
    "normalform": run_normalform,
    "exit_time": run_exit_time_study,
}
