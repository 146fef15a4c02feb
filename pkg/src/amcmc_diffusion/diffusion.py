"""Euler-Maruyama simulation of the coupled (X, theta) limit diffusion.

For the standard normal target the system is

    dX     = -(theta^2 / 2) X dt + theta dW
    dtheta = theta (p - theta |X| / sqrt(2 pi)) dt

The theta equation carries no noise, so it is integrated as an ODE in
``log theta`` with the drift frozen at the start of each step.  That keeps
theta strictly positive and makes ``log theta`` grow by at most ``p dt`` per
step.  Path integrals use the left-endpoint rule.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .amcmc import write_csv
from .rng import BLOCK, replica_sources

SQRT_2PI = math.sqrt(2.0 * math.pi)
DEFAULT_THETA_CAP = 1e100


class SimulationError(RuntimeError):
    """The integrator left its stable range."""


def drift_general(target, x, theta, p):
    """Drift of the limit diffusion for an arbitrary target, as (b_x, b_theta)."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    s = target.score(x)
    if not np.all(np.isfinite(s)):
        raise ValueError("score evaluation failed")
    return 0.5 * theta * theta * s, theta * (p - theta * np.abs(s) / SQRT_2PI)


def drift_normal(x, theta, p):
    if not theta > 0:
        raise ValueError("theta must be positive")
    return -0.5 * theta * theta * x, theta * (p - theta * abs(x) / SQRT_2PI)


def theta_nullcline(x, p):
    """theta at which the theta-drift vanishes for fixed ``x != 0``."""
    return p * SQRT_2PI / abs(x)


@dataclass(frozen=True)
class SdeConfig:
    p: float = 1.0
    dt: float = 1e-3
    horizon: float = 50.0
    x0: float = 0.0
    theta0: float = 1.0
    theta_cap: float = DEFAULT_THETA_CAP

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be >= dt")
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")
        if not self.theta_cap > self.theta0:
            raise ValueError("theta_cap must exceed theta0")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class DiffusionState:
    t: float
    x: float
    log_theta: float
    eta: float
    path_int_abs_x: float = 0.0
    path_int_abs_x_theta: float = 0.0
    stoch_int: float = 0.0

    @classmethod
    def start(cls, cfg):
        return cls(0.0, float(cfg.x0), math.log(cfg.theta0), 1.0 / cfg.theta0)

    @property
    def theta(self):
        return float(np.exp(self.log_theta))


def _em_update(x, log_theta, iax, iaxt, mart, z, p, dt, sqrt_dt, pin_x):
    """Advance all accumulators by one step; scalar or array inputs."""
    theta = np.exp(log_theta)
    ax = np.abs(x)
    dw = sqrt_dt * z
    iax = iax + ax * dt
    iaxt = iaxt + ax * theta * dt
    mart = mart + theta * dw
    log_theta = log_theta + (p - theta * ax / SQRT_2PI) * dt
    if not pin_x:
        x = x - 0.5 * theta * theta * x * dt + theta * dw
    return x, log_theta, iax, iaxt, mart


def em_step(state, cfg, rng=None, *, z=None, pin_x=False):
    """One Euler-Maruyama step; ``z`` overrides the normal draw from ``rng``."""
    if z is None:
        z = rng.normal()
    x, lt, iax, iaxt, mart = _em_update(
        state.x, state.log_theta, state.path_int_abs_x, state.path_int_abs_x_theta,
        state.stoch_int, z, cfg.p, cfg.dt, math.sqrt(cfg.dt), pin_x)
    if not lt <= math.log(cfg.theta_cap):
        raise SimulationError("theta blow-up")
    if not math.isfinite(x):
        raise SimulationError("non-finite X")
    eta = float(np.exp(-lt))
    new = DiffusionState(state.t + cfg.dt, float(x), float(lt), eta,
                         float(iax), float(iaxt), float(mart))
    if abs(new.theta * eta - 1.0) > 1e-12:
        raise SimulationError("theta/eta reconciliation failed")
    return new


@dataclass
class SdeEnsemble:
    """Replica ensemble on a time grid; path arrays are (replicas, grid)."""

    cfg: SdeConfig
    times: np.ndarray
    x: np.ndarray
    log_theta: np.ndarray
    int_abs_x: np.ndarray
    int_abs_x_theta: np.ndarray
    stoch_int: np.ndarray
    log_theta_cap: np.ndarray  # log theta0 + p t, accumulated in step order

    @property
    def theta(self):
        return np.exp(self.log_theta)

    @property
    def eta(self):
        return np.exp(-self.log_theta)

    @property
    def replicas(self):
        return self.x.shape[0]

    def write_trajectory(self, path, r):
        write_csv(path, ("t", "x", "theta", "eta"),
                  (self.times, self.x[r], self.theta[r], self.eta[r]))


def grid_steps(times, dt):
    """Map grid times to step indices; each time must be a multiple of ``dt``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("time grid must be a non-empty 1-d sequence")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be non-negative and strictly increasing")
    steps = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - times) > 1e-9 * np.maximum(1.0, times)):
        raise ValueError("time grid points must be multiples of dt")
    return steps


def simulate_sde(cfg, replicas, seed, times=None, *, stream=0, increments=None,
                 pin_x=False, antithetic=False, sources=None):
    """Simulate ``replicas`` independent paths and record them on ``times``.

    ``increments`` (shape (replicas, steps)) supplies the standard normals
    directly, which couples runs at different ``dt``.  ``antithetic`` flips
    the sign of every draw.  ``pin_x`` holds X at its start value, a test
    mode in which theta grows at exactly rate ``p``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if times is None:
        times = np.linspace(0.0, cfg.horizon, 51)
    steps = grid_steps(times, cfg.dt)
    total = int(steps[-1])
    if total > cfg.n_steps:
        raise ValueError("time grid extends past the horizon")
    if increments is not None:
        increments = np.asarray(increments, dtype=float)
        if increments.shape[0] != replicas or increments.shape[1] < total:
            raise ValueError("increments must have shape (replicas, >= steps)")
    elif sources is None:
        sources = replica_sources(seed, replicas, stream)

    G = len(steps)
    rec = {k: np.empty((replicas, G)) for k in ("x", "lt", "iax", "iaxt", "mart")}
    cap_rec = np.empty(G)
    x = np.full(replicas, float(cfg.x0))
    lt = np.full(replicas, math.log(cfg.theta0))
    iax = np.zeros(replicas)
    iaxt = np.zeros(replicas)
    mart = np.zeros(replicas)
    cap = math.log(cfg.theta0)
    log_cap = math.log(cfg.theta_cap)
    p, dt, sqrt_dt = cfg.p, cfg.dt, math.sqrt(cfg.dt)
    sign = -1.0 if antithetic else 1.0

    def record(i):
        rec["x"][:, i], rec["lt"][:, i] = x, lt
        rec["iax"][:, i], rec["iaxt"][:, i], rec["mart"][:, i] = iax, iaxt, mart
        cap_rec[i] = cap

    gi = 0
    if steps[0] == 0:
        record(0)
        gi = 1
    z = np.empty((replicas, BLOCK))
    n = 0
    while n < total:
        m = min(BLOCK, total - n)
        if increments is not None:
            z[:, :m] = increments[:, n:n + m]
        else:
            for r, src in enumerate(sources):
                z[r, :m] = src.normals(m)
        if antithetic:
            z[:, :m] *= sign
        for j in range(m):
            x, lt, iax, iaxt, mart = _em_update(x, lt, iax, iaxt, mart, z[:, j],
                                                p, dt, sqrt_dt, pin_x)
            cap = cap + p * dt
            n += 1
            if n == steps[gi]:
                record(gi)
                gi += 1
        if not np.all(lt <= log_cap):
            raise SimulationError("theta blow-up")
        if not np.all(np.isfinite(x)):
            raise SimulationError("non-finite X")
    return SdeEnsemble(cfg, np.asarray(times, dtype=float), rec["x"], rec["lt"],
                       rec["iax"], rec["iaxt"], rec["mart"], cap_rec)


def _left_sum_weights(n, dt, p, t):
    s = np.arange(n) * dt
    return np.exp(-p * (t - s)) * dt


def eta_closed_form(eta0, p, abs_x, dt, t=None):
    """``eta0 e^{-pt} + int_0^t e^{-p(t-u)} |X_u| / sqrt(2 pi) du``.

    ``abs_x`` holds |X| at the left endpoints ``0, dt, ..., (n-1) dt``; the
    integral is their left-endpoint sum and ``t`` defaults to ``n dt``.
    """
    abs_x = np.asarray(abs_x, dtype=float)
    n = len(abs_x)
    if t is None:
        t = n * dt
    if t < 0:
        raise ValueError("t must be non-negative")
    return eta0 * math.exp(-p * t) + float(np.dot(_left_sum_weights(n, dt, p, t), abs_x)) / SQRT_2PI


def theta_closed_form(eta0, p, abs_x, dt, u=None):
    """``e^{pu} / (eta0 + int_0^u e^{ps} |X_s| / sqrt(2 pi) ds)``, same quadrature."""
    if not eta0 > 0:
        raise ValueError("eta0 must be positive")
    abs_x = np.asarray(abs_x, dtype=float)
    n = len(abs_x)
    if u is None:
        u = n * dt
    if u < 0:
        raise ValueError("u must be non-negative")
    s = np.arange(n) * dt
    integral = float(np.dot(np.exp(p * s) * dt, abs_x)) / SQRT_2PI
    return math.exp(p * u) / (eta0 + integral)


def with_dt(cfg, dt):
    return replace(cfg, dt=dt)
