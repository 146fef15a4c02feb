"""Batch experiment runner.

Usage::

    amcmc-diffusion <mode> [--config PATH] [--seed N] [--replicas N] [--out DIR]

Each run writes into the output directory:

* ``trajectory_<replica>.csv`` for the first ``output.trajectories`` replicas,
* mode-specific CSV tables (``moments.csv``, ``hormander.csv``, ...),
* ``report.json`` with the numbers behind every check,
* ``verdict.json`` listing each enabled check once with pass/fail,
* ``meta.json``, the only file carrying timestamps and versions.

The exit status is 0 iff every check in the verdict passed.
"""
import argparse
import datetime
import json
import math
import os
import platform
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .amcmc import DiscreteAdaptParams, ScaledChainParams, simulate_chain_ensemble, write_csv
from .config import ConfigError, config_dict, parse_config, with_overrides
from .diffusion import SimulationError, grid_steps, simulate_sde
from .hormander import (MollifierParams, SQRT_2PI, drift_gap, field_A0, field_A1,
                        grid_table, hypoelliptic_family, lie_bracket_closed, lie_bracket_fd,
                        noise_matrix, span_check, stratonovich_correction)
from .moments import (BoundFlag, bootstrap_even_moments, check_eta_second_moment,
                      check_limiting_moments, check_martingale_zero_mean,
                      check_pathwise_timeaverage, check_theta_growth,
                      check_timeaverage_theta_power, check_uniform_second_moment,
                      estimate_moments, limiting_moment, odd_recursion, recursion_table,
                      timeaverage_violation)
from .rng import RandomSource
from .targets import standard_normal

HALVING_STREAM = 2


@dataclass
class RunResult:
    exit_code: int
    checks: list
    report: dict


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


# ------------------------------------------------------------------ drivers

def run_sde(cfg, out):
    times = np.array(cfg.time_grid)
    sde = cfg.sde
    ens = simulate_sde(sde, cfg.replicas, cfg.seed, times)
    for r in range(min(cfg.trajectories, cfg.replicas)):
        ens.write_trajectory(out / f"trajectory_{r}.csv", r)

    checks = []
    report = {}
    if cfg.replicas >= 2:
        mr = estimate_moments(ens.x, set(cfg.orders) | {2}, times)
        write_csv(out / "moments.csv", ("order", "t", "estimate", "se", "target", "pass"),
                  zip(*mr.limit_rows()))
        report["moments"] = mr.as_dict()
        checks.append(check_uniform_second_moment(mr, sde.x0 ** 2))
        if cfg.sde_options.check_limit:
            lim = check_limiting_moments(mr)
            checks.extend(lim[f"limit_moment_r{r}"] for r in cfg.orders)
        checks.append(check_martingale_zero_mean(ens.stoch_int, times))
        checks.append(check_eta_second_moment(ens.eta, 1.0 / sde.theta0, sde.p,
                                              float(np.max(mr.estimates[2]))))
    checks.append(check_theta_growth(ens, sde.theta0, sde.p))
    if times[-1] > 0:
        checks.append(check_pathwise_timeaverage(ens, sde.theta0, sde.p, sde.dt,
                                                 min_fraction=0.99))
        checks.append(check_timeaverage_theta_power(ens.theta, times,
                                                    cfg.sde_options.theta_power_k))
    if cfg.sde_options.halving_paths > 0:
        flag, detail = step_halving_study(cfg, times)
        checks.append(flag)
        report["step_halving"] = detail
    return checks, report


def step_halving_study(cfg, times):
    """Re-run the time-average inequality at dt and dt/2 on coupled Brownian paths."""
    sde = cfg.sde
    n = cfg.sde_options.halving_paths
    fine_cfg = replace(sde, dt=sde.dt / 2)
    steps = int(grid_steps(times, sde.dt)[-1])
    z_fine = np.stack([RandomSource(cfg.seed, r, HALVING_STREAM).normals(2 * steps)
                       for r in range(n)])
    z_coarse = (z_fine[:, 0::2] + z_fine[:, 1::2]) / math.sqrt(2.0)
    coarse = simulate_sde(sde, n, cfg.seed, times, increments=z_coarse)
    fine = simulate_sde(fine_cfg, n, cfg.seed, times, increments=z_fine)
    v_c = timeaverage_violation(coarse, sde.theta0, sde.p)
    v_f = timeaverage_violation(fine, sde.theta0, sde.p)
    f_c = check_pathwise_timeaverage(coarse, sde.theta0, sde.p, sde.dt)
    f_f = check_pathwise_timeaverage(fine, sde.theta0, sde.p, fine_cfg.dt)
    if v_c == 0.0:
        ok = v_f == 0.0
        ratio = 0.0 if ok else math.inf
    else:
        ratio = v_f / v_c
        ok = ratio <= 0.75
    detail = {"paths": n, "violation_dt": v_c, "violation_dt_half": v_f, "ratio": ratio,
              "fraction_dt": f_c.detail["fraction"], "fraction_dt_half": f_f.detail["fraction"],
              "min_margin_dt": f_c.margin, "min_margin_dt_half": f_f.margin}
    return BoundFlag("timeaverage_step_halving", ok, 0.75 - ratio, detail), detail


def _chain_params(cfg):
    if cfg.mode == "chain":
        return DiscreteAdaptParams(cfg.chain.p_acc)
    return ScaledChainParams(cfg.chain.n_scale, cfg.chain.p)


def run_chain_mode(cfg, out):
    params = _chain_params(cfg)
    times = np.array(cfg.time_grid)
    if cfg.mode == "chain":
        if np.any(times != np.round(times)):
            raise ConfigError("time_grid: chain mode records at integer iterations")
        rec = {int(t) for t in times} | {cfg.chain.window_start, cfg.chain.steps}
        rec = np.array(sorted(s for s in rec if s <= max(times.max(), cfg.chain.steps)))
    else:
        rec = grid_steps(times, 1.0 / params.n_scale)
    ens = simulate_chain_ensemble(params, standard_normal(), cfg.replicas, cfg.seed, rec,
                                  cfg.chain.x0, cfg.chain.theta0)
    for r in range(min(cfg.trajectories, cfg.replicas)):
        ens.trajectory(r).to_csv(out / f"trajectory_{r}.csv")

    checks = [BoundFlag("theta_positive", bool(np.all(ens.theta > 0)),
                        float(np.min(ens.theta)))]
    report = {"steps": [int(s) for s in ens.steps]}
    if cfg.mode == "chain":
        i0 = int(np.searchsorted(ens.steps, cfg.chain.window_start))
        i1 = int(np.searchsorted(ens.steps, cfg.chain.steps))
        rates = ens.acceptance_rate(i0, i1)
        gap = float(np.max(np.abs(rates - cfg.chain.p_acc)))
        checks.append(BoundFlag("acceptance_rate", gap <= 0.05, 0.05 - gap,
                                {"mean_rate": float(np.mean(rates)), "min_rate": float(rates.min()),
                                 "max_rate": float(rates.max()), "p_acc": cfg.chain.p_acc,
                                 "window": [cfg.chain.window_start, cfg.chain.steps]}))
        report["acceptance_rate"] = [float(r) for r in rates]
    keep = np.isin(ens.steps, rec if cfg.mode != "chain" else np.round(times).astype(int))
    if cfg.replicas >= 2:
        mr = estimate_moments(ens.x[:, keep], cfg.orders, ens.times[keep])
        write_csv(out / "moments.csv", ("order", "t", "estimate", "se", "target", "pass"),
                  zip(*mr.limit_rows()))
        report["moments"] = mr.as_dict()
    return checks, report


def double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def run_moments(cfg, out):
    boot = bootstrap_even_moments(cfg.max_k)
    checks, rows = [], []
    for k in range(1, cfg.max_k + 1):
        table = recursion_table(k)
        expected = double_factorial(2 * k - 1)
        even_ok = table.even_moment == expected and boot[k] == expected \
            and table.even_moment == limiting_moment(2 * k)
        odd = odd_recursion(k)
        odd_ok = all(v == 0 for v in odd)
        checks.append(BoundFlag(f"even_recursion_k{k}", even_ok, 0.0,
                                {"moment": str(table.even_moment), "expected": str(expected)}))
        checks.append(BoundFlag(f"odd_recursion_k{k}", odd_ok, 0.0,
                                {"moment": str(table.odd_moment)}))
        rows.append((k, str(table.even_moment), str(boot[k]), str(expected),
                     str(table.odd_moment), even_ok and odd_ok))
    write_csv(out / "recursion.csv",
              ("k", "even_moment", "bootstrapped", "double_factorial", "odd_moment", "pass"),
              zip(*rows))
    report = {"limiting_moments": {str(2 * k): str(boot[k]) for k in range(1, cfg.max_k + 1)}}
    return checks, report


def run_hormander(cfg, out):
    h = cfg.hormander
    params = MollifierParams(h.epsilon)
    xs = np.linspace(h.x_min, h.x_max, h.x_count)
    etas = np.linspace(h.eta_min, h.eta_max, h.eta_count)
    rows = grid_table(h.p, params, xs, etas, h.tol)
    write_csv(out / "hormander.csv", ("x", "eta", "det", "smin_ratio", "rank2"), zip(*rows))
    worst = min(r[3] for r in rows)
    checks = [BoundFlag("span_grid", all(r[4] for r in rows), worst - h.tol,
                        {"points": len(rows), "first_order_zero_det": sum(r[2] == 0 for r in rows)})]

    with_drift = hypoelliptic_family(h.p, params, include_drift=True)
    changed = sum(span_check(with_drift, (r[0], r[1]), h.tol)[0] != r[4] for r in rows)

    src = RandomSource(cfg.seed, 0, 0)
    A0, A1, closed = field_A0(h.p, params), field_A1(), lie_bracket_closed(h.p, params)
    worst_rel = 0.0
    for _ in range(h.random_points):
        x = h.x_min + (h.x_max - h.x_min) * src.uniform()
        eta = h.eta_min + (h.eta_max - h.eta_min) * src.uniform()
        c = np.array(closed(x, eta))
        f = lie_bracket_fd(A0, A1, (x, eta), h.fd_step)
        worst_rel = max(worst_rel, float(np.max(np.abs(c - f)) / np.max(np.abs(c))))
    checks.append(BoundFlag("bracket_closed_vs_fd", worst_rel <= h.rel_tol, h.rel_tol - worst_rel,
                            {"points": h.random_points, "max_rel_error": worst_rel}))

    corr = max(float(np.max(np.abs(stratonovich_correction(noise_matrix, (x, eta)))))
               for x in xs[::5] for eta in etas[::5])
    checks.append(BoundFlag("stratonovich_correction_zero", corr == 0.0, -corr))
    gap = drift_gap(h.p, params, xs, etas)
    checks.append(BoundFlag("mollified_drift_gap", gap <= h.epsilon / SQRT_2PI * (1 + 1e-12),
                            h.epsilon / SQRT_2PI - gap, {"sup_gap": gap}))
    report = {"grid_points": len(rows), "min_smin_ratio": worst,
              "span_changed_by_drift": changed, "max_rel_bracket_error": worst_rel}
    return checks, report


def compare_chain_vs_sde(cfg, out=None):
    """Moments of the rescaled chain at each ``n_scale`` against the SDE ensemble."""
    times = np.array(cfg.time_grid)
    sde_cfg = replace(cfg.sde, horizon=float(max(times[-1], cfg.sde.dt)))
    sde = simulate_sde(sde_cfg, cfg.replicas, cfg.seed, times, stream=0)
    sde_m = estimate_moments(sde.x, cfg.orders, times)
    levels = []
    for i, n_scale in enumerate(cfg.compare.n_scales):
        params = ScaledChainParams(n_scale, cfg.sde.p)
        ens = simulate_chain_ensemble(params, standard_normal(), cfg.replicas, cfg.seed,
                                      grid_steps(times, 1.0 / n_scale), cfg.sde.x0,
                                      cfg.sde.theta0, stream=1 + i)
        levels.append(estimate_moments(ens.x, cfg.orders, times))

    rows, checks = [], []
    table = {}
    for r in cfg.orders:
        for ti, t in enumerate(times):
            if t <= 0:
                continue
            s_est, s_se = sde_m.estimate(r, ti)
            gaps = []
            for n_scale, cm in zip(cfg.compare.n_scales, levels):
                c_est, c_se = cm.estimate(r, ti)
                gap = abs(c_est - s_est)
                cse = math.hypot(c_se, s_se)
                gaps.append((gap, cse))
                rows.append((n_scale, r, float(t), c_est, c_se, s_est, s_se, gap, cse))
            table[f"r{r}_t{t:g}"] = gaps
            last_gap, last_cse = gaps[-1]
            checks.append(BoundFlag(f"finest_within_3se_r{r}_t{t:g}", last_gap <= 3 * last_cse,
                                    3 * last_cse - last_gap))
            slack = [gaps[j][0] + 3 * math.hypot(gaps[j][1], gaps[j + 1][1]) - gaps[j + 1][0]
                     for j in range(len(gaps) - 1)]
            checks.append(BoundFlag(f"gap_nonincreasing_r{r}_t{t:g}", all(s >= 0 for s in slack),
                                    min(slack) if slack else 0.0))
    if out is not None:
        write_csv(out / "compare.csv",
                  ("n_scale", "order", "t", "chain_estimate", "chain_se", "sde_estimate",
                   "sde_se", "gap", "combined_se"), zip(*rows))
        for r in range(min(cfg.trajectories, cfg.replicas)):
            sde.write_trajectory(out / f"trajectory_{r}.csv", r)
    return checks, {"gaps": {k: [list(g) for g in v] for k, v in table.items()}}


DRIVERS = {
    "sde": run_sde,
    "chain": run_chain_mode,
    "scaled": run_chain_mode,
    "moments": run_moments,
    "hormander": run_hormander,
    "compare": compare_chain_vs_sde,
}


def run_experiment(cfg):
    """Run ``cfg.mode``, write all artifacts, and return the verdict."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks, report = DRIVERS[cfg.mode](cfg, out)
    names = [c.name for c in checks]
    assert len(names) == len(set(names)), "duplicate check names"
    passed = all(c.passed for c in checks)
    verdict = {"mode": cfg.mode, "seed": cfg.seed, "all_passed": passed,
               "checks": [c.as_dict() for c in checks]}
    _write_json(out / "verdict.json", verdict)
    conf = config_dict(cfg)
    conf.pop("output_dir", None)
    _write_json(out / "report.json", {"mode": cfg.mode, "config": conf, **report})
    _write_json(out / "meta.json", {
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "package_version": __version__, "numpy": np.__version__,
        "python": platform.python_version(), "pid": os.getpid(),
        "output_dir": str(out.resolve())})
    return RunResult(0 if passed else 1, checks, report)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="amcmc-diffusion", description=__doc__.split("\n")[0])
    ap.add_argument("mode", choices=sorted(DRIVERS))
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--replicas", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(text, mode=args.mode)
        cfg = with_overrides(cfg, args.seed, args.replicas, args.out)
        result = run_experiment(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
