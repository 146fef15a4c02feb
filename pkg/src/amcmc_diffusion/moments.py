"""Moment recursions, ensemble moment estimates and bound checks.

The recursions run in exact rational arithmetic (:class:`fractions.Fraction`).
Ensemble reductions use :func:`math.fsum` after shifting by the median, so an
estimate does not depend on the order of the replicas.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Absolute tolerances for the limiting-moment check; other orders use 3 SE only.
LIMIT_ABS_TOL = {2: 0.05, 4: 0.3}


# ---------------------------------------------------------------- recursions

def limiting_moment(r):
    """``E Z^r`` for standard normal ``Z``: ``(2k)!/(2^k k!)`` if ``r = 2k``, else 0."""
    if r < 0:
        raise ValueError("order must be non-negative")
    if r % 2:
        return Fraction(0)
    k = r // 2
    return Fraction(math.factorial(2 * k), 2 ** k * math.factorial(k))


@dataclass(frozen=True)
class MomentRecursionTable:
    k: int
    even_values: tuple  # B_{k,0}, B_{k,2}, ..., B_{k,2k-2}
    odd_values: tuple   # B_{k,1}, B_{k,3}, ..., B_{k,2k-1}

    @property
    def even_moment(self):
        """Implied limit of ``E X^{2k}``: ``(2k-1) B_{k,2k-2}``."""
        return (2 * self.k - 1) * self.even_values[-1]

    @property
    def odd_moment(self):
        """Implied limit of ``E X^{2k+1}``: ``B_{k,2k-1}``."""
        return self.odd_values[-1]


def even_recursion(k, input_moments=None):
    """B_{k,2m} = k/(k-m) M_{2m} - m(2m-1)/(k-m) B_{k,2m-2}, m = 0..k-1.

    ``input_moments[m]`` is the limit of ``E X^{2m}``; by default the normal
    values.  Returns the even half of the table.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if input_moments is None:
        input_moments = {m: limiting_moment(2 * m) for m in range(k)}
    missing = [m for m in range(k) if m not in input_moments]
    if missing:
        raise ValueError(f"input moments missing for m = {missing}")
    B = []
    prev = Fraction(0)
    for m in range(k):
        # every term is taken at the same time t before passing to the limit
        M = Fraction(input_moments[m])
        prev = Fraction(k, k - m) * M - Fraction(m * (2 * m - 1), k - m) * prev
        B.append(prev)
    return tuple(B)


def odd_recursion(k):
    """B_{k,1} = 0 and (2k+2-2m) B_{k,2m-1} = -(2m-1)(2m-2) B_{k,2m-3}, m = 2..k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    B = [Fraction(0)]
    for m in range(2, k + 1):
        denom = 2 * k + 2 - 2 * m
        assert denom != 0
        B.append(Fraction(-(2 * m - 1) * (2 * m - 2), denom) * B[-1])
    return tuple(B)


def recursion_table(k, input_moments=None):
    return MomentRecursionTable(k, even_recursion(k, input_moments), odd_recursion(k))


def bootstrap_even_moments(max_k):
    """Run the induction: feed each order's output into the next order's input.

    Starts from ``E X^0 = 1`` only, so the result owes nothing to the
    closed form it is checked against.
    """
    moments = {0: Fraction(1)}
    for k in range(1, max_k + 1):
        moments[k] = recursion_table(k, moments).even_moment
    return moments


# --------------------------------------------------------------- estimation

def _mean_se(v):
    """Order-independent mean and standard error of a 1-d sample."""
    v = np.asarray(v, dtype=float)
    n = len(v)
    if n == 0:
        raise ValueError("empty sample")
    c = float(np.median(v))
    d = v - c
    s1 = math.fsum(d)
    mean = c + s1 / n
    if n < 2:
        return mean, float("nan")
    var = max(0.0, (math.fsum(d * d) - s1 * s1 / n) / (n - 1))
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class BoundFlag:
    name: str
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "margin": float(self.margin), **self.detail}


@dataclass
class MomentReport:
    time_grid: np.ndarray
    orders: tuple
    estimates: dict
    std_errors: dict
    n_replicas: int
    flags: dict = field(default_factory=dict)

    def estimate(self, r, i):
        return float(self.estimates[r][i]), float(self.std_errors[r][i])

    def limit_rows(self):
        """Rows ``(order, t, estimate, se, target, pass)`` against the normal limits."""
        rows = []
        for r in self.orders:
            target = float(limiting_moment(r))
            tol = LIMIT_ABS_TOL.get(r, 0.0)
            for i, t in enumerate(self.time_grid):
                est, se = self.estimate(r, i)
                rows.append((r, float(t), est, se, target, abs(est - target) <= max(tol, 3 * se)))
        return rows

    def as_dict(self):
        return {
            "time_grid": [float(t) for t in self.time_grid],
            "n_replicas": self.n_replicas,
            "moments": {str(r): {"estimate": [float(v) for v in self.estimates[r]],
                                 "se": [float(v) for v in self.std_errors[r]]}
                        for r in self.orders},
            "flags": {k: f.as_dict() for k, f in self.flags.items()},
        }


def estimate_moments(paths, orders, time_grid):
    """Cross-replica means of ``X_t^r`` with standard errors sd/sqrt(replicas).

    ``paths`` has shape (replicas, len(time_grid)).
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 2 or paths.shape[0] == 0:
        raise ValueError("empty ensemble")
    if paths.shape[0] < 2:
        raise ValueError("need at least 2 replicas; use ergodic_moments for one path")
    if paths.shape[1] != len(time_grid):
        raise ValueError("paths and time grid disagree in length")
    orders = tuple(sorted(set(int(r) for r in orders)))
    est, ses = {}, {}
    for r in orders:
        pw = paths ** r
        cols = [_mean_se(pw[:, i]) for i in range(pw.shape[1])]
        est[r] = np.array([c[0] for c in cols])
        ses[r] = np.array([c[1] for c in cols])
    return MomentReport(np.asarray(time_grid, dtype=float), orders, est, ses, paths.shape[0])


def batch_means(series, n_batches=30):
    """Mean of a correlated series and its batch-means standard error."""
    series = np.asarray(series, dtype=float)
    b = len(series) // n_batches
    if b < 1:
        raise ValueError("series shorter than the number of batches")
    means = series[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    mean, se = _mean_se(means)
    return mean, se


def ergodic_moments(path, orders, burn_in=0, n_batches=30):
    """Time-average moments of one long path, with batch-means errors."""
    path = np.asarray(path, dtype=float)[burn_in:]
    return {int(r): batch_means(path ** r, n_batches) for r in orders}


# ------------------------------------------------------------------- checks

def check_uniform_second_moment(report, x0_sq):
    """E X_t^2 <= E X_0^2 + 1 (+ 3 SE) at every grid time."""
    est = report.estimates[2]
    se = np.nan_to_num(report.std_errors[2])
    margins = x0_sq + 1.0 + 3.0 * se - est
    worst = int(np.argmin(margins))
    return BoundFlag("uniform_second_moment", bool(np.all(margins >= 0)), float(margins[worst]),
                     {"worst_t": float(report.time_grid[worst]),
                      "max_estimate": float(np.max(est))})


def check_theta_growth(ens, theta0, p):
    """Pathwise: log theta_t <= log theta_0 + p t, exactly.  Ensemble: E theta_t^2 <= theta_0^2 e^{2pt}.

    The pathwise ceiling is the integrator's own accumulation of ``p dt``
    when available (``ens.log_theta_cap``), which makes the comparison exact
    in floating point.
    """
    t = ens.times
    cap = getattr(ens, "log_theta_cap", None)
    if cap is None:
        cap = math.log(theta0) + p * t
    gap = cap[None, :] - ens.log_theta
    frac = float(np.mean(np.all(gap >= 0, axis=1)))
    mean_sq = np.array([_mean_se(c)[0] for c in (ens.theta ** 2).T])
    bound = theta0 ** 2 * np.exp(2 * p * t)
    ens_ok = bool(np.all(mean_sq <= bound))
    return BoundFlag("theta_growth", frac == 1.0 and ens_ok, float(np.min(gap)),
                     {"pathwise_fraction": frac, "ensemble_ok": ens_ok,
                      "ensemble_min_ratio_gap": float(np.min(1 - mean_sq / bound))})


def timeaverage_sides(int_abs_x, int_abs_x_theta, t, theta0, p):
    """LHS and RHS of (1/t) int |X| theta <= sqrt(2pi) p + (1/t) int |X| + sqrt(2pi) log(1+theta0)/t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    lhs = np.asarray(int_abs_x_theta) / t
    rhs = SQRT_2PI * p + np.asarray(int_abs_x) / t + SQRT_2PI * math.log1p(theta0) / t
    return lhs, rhs


def check_pathwise_timeaverage(state_or_ens, theta0, p, dt, slack=None, min_fraction=1.0):
    """Pathwise time-average inequality with discretisation slack.

    Accepts a single :class:`DiffusionState` or an ensemble; for an ensemble
    every positive grid time is checked and the flag passes when at least
    ``min_fraction`` of paths satisfy it at all of them.
    """
    if slack is None:
        slack = 10.0 * dt * (1.0 + theta0)
    if hasattr(state_or_ens, "times"):
        keep = state_or_ens.times > 0
        t = state_or_ens.times[keep]
        lhs, rhs = timeaverage_sides(state_or_ens.int_abs_x[:, keep],
                                     state_or_ens.int_abs_x_theta[:, keep], t, theta0, p)
    else:
        s = state_or_ens
        lhs, rhs = timeaverage_sides(np.array([[s.path_int_abs_x]]),
                                     np.array([[s.path_int_abs_x_theta]]), np.array([s.t]),
                                     theta0, p)
    margin = rhs + slack - lhs
    ok = np.all(margin >= 0, axis=1)
    frac = float(np.mean(ok))
    return BoundFlag("pathwise_timeaverage", frac >= min_fraction, float(np.min(margin)),
                     {"fraction": frac, "slack": slack,
                      "max_violation": float(max(0.0, -np.min(rhs - lhs)))})


def timeaverage_violation(ens, theta0, p):
    """Largest amount by which any path violates the inequality without slack."""
    keep = ens.times > 0
    lhs, rhs = timeaverage_sides(ens.int_abs_x[:, keep], ens.int_abs_x_theta[:, keep],
                                 ens.times[keep], theta0, p)
    return float(max(0.0, np.max(lhs - rhs)))


def check_martingale_zero_mean(stoch_int, times):
    """Cross-replica mean of int theta dW within 3 SE of zero at every grid time."""
    stoch_int = np.asarray(stoch_int, dtype=float)
    margins, means, ses = [], [], []
    for i in range(stoch_int.shape[1]):
        mean, se = _mean_se(stoch_int[:, i])
        se = 0.0 if math.isnan(se) else se
        margins.append(3.0 * se - abs(mean))
        means.append(mean)
        ses.append(se)
    margins = np.array(margins)
    return BoundFlag("martingale_zero_mean", bool(np.all(margins >= 0)), float(np.min(margins)),
                     {"times": [float(t) for t in times], "means": [float(m) for m in means],
                      "se": ses})


def running_time_average(times, values):
    """(1/t) int_0^t v du by the trapezoid rule on the grid; NaN at t = 0."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(np.diff(times) * 0.5 * (values[1:] + values[:-1]))])
    cum = cum + times[0] * values[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(times > 0, cum / np.where(times > 0, times, 1.0), np.nan)


def check_timeaverage_theta_power(theta, times, k):
    """Boundedness proxy for (1/t) int E theta^{k/2}: over the second half of the
    horizon the running average may not exceed 1.5 x its median."""
    theta = np.asarray(theta, dtype=float)
    means = np.mean(theta ** (k / 2.0), axis=0)
    avg = running_time_average(times, means)
    times = np.asarray(times, dtype=float)
    late = (times >= 0.5 * times[-1]) & (times > 0)
    tail = avg[late]
    med = float(np.median(tail))
    peak = float(np.max(tail))
    return BoundFlag(f"timeaverage_theta_power_k{k}", peak <= 1.5 * med, 1.5 * med - peak,
                     {"median": med, "max": peak, "proxy": "second-half max <= 1.5 median"})


def check_eta_second_moment(eta, eta0, p, x_second_moment_max):
    """E eta_t^2 <= 2 (eta0^2 + (1/(p sqrt(2pi)))^2 max_t E X_t^2) (+ 3 SE)."""
    bound = 2.0 * (eta0 ** 2 + (1.0 / (p * SQRT_2PI)) ** 2 * x_second_moment_max)
    stats = [_mean_se(c) for c in (np.asarray(eta) ** 2).T]
    margins = np.array([bound + 3.0 * (0.0 if math.isnan(se) else se) - m for m, se in stats])
    return BoundFlag("eta_second_moment", bool(np.all(margins >= 0)), float(np.min(margins)),
                     {"bound": bound})


def check_limiting_moments(report, index=-1, abs_tol=None):
    """Compare moments at grid point ``index`` with the normal limits.

    Order r passes when |estimate - E Z^r| <= max(abs_tol[r], 3 SE).
    """
    abs_tol = LIMIT_ABS_TOL if abs_tol is None else abs_tol
    flags = {}
    for r in report.orders:
        est, se = report.estimate(r, index)
        target = float(limiting_moment(r))
        tol = max(abs_tol.get(r, 0.0), 3.0 * se)
        flags[f"limit_moment_r{r}"] = BoundFlag(
            f"limit_moment_r{r}", abs(est - target) <= tol, tol - abs(est - target),
            {"t": float(report.time_grid[index]), "estimate": est, "se": se,
             "target": target, "tolerance": tol})
    return flags
