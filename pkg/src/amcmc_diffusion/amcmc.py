"""Adaptive random-walk Metropolis sampler and its time-rescaled version.

Two adaptation schemes share one state type:

* the discrete algorithm: propose ``Y ~ N(x, theta^2)``, accept with the
  Metropolis probability, then ``theta <- theta * exp((xi - p_acc)/sqrt(n))``
  where ``n`` is the post-increment iteration index;
* the rescaled chain with level ``n_scale``: displacement
  ``theta * eps / sqrt(n_scale)``, ``theta <- theta * exp((xi - p_n)/sqrt(n_scale))``
  with ``p_n = 1 - p/sqrt(n_scale)``, each step lasting ``1/n_scale`` time.

``theta`` is a proposal standard deviation.  It is carried in log form so the
multiplicative updates telescope exactly in floating point.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .rng import BLOCK, replica_sources
from .targets import acceptance_probability

MAX_N_SCALE = 10**8


@dataclass(frozen=True)
class ChainState:
    x: float
    log_theta: float
    xi: int = 0
    n: int = 0

    @classmethod
    def start(cls, x=0.0, theta=1.0):
        if not theta > 0:
            raise ValueError("theta must be positive")
        return cls(float(x), math.log(theta), 0, 0)

    @property
    def theta(self):
        return float(np.exp(self.log_theta))


@dataclass(frozen=True)
class DiscreteAdaptParams:
    p_acc: float = 0.44

    def __post_init__(self):
        if not 0.0 < self.p_acc < 1.0:
            raise ValueError("p_acc must lie in (0, 1)")

    def time(self, n):
        return float(n)


@dataclass(frozen=True)
class ScaledChainParams:
    n_scale: int
    p: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.n_scale, (int, np.integer)) and self.n_scale >= 1):
            raise ValueError("n_scale must be a positive integer")
        if self.n_scale > MAX_N_SCALE:
            raise ValueError(f"n_scale must be <= {MAX_N_SCALE}")
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.p / math.sqrt(self.n_scale) < 1.0:
            raise ValueError("p/sqrt(n_scale) must be < 1 so that p_n lies in (0, 1)")

    @property
    def p_n(self):
        return 1.0 - self.p / math.sqrt(self.n_scale)

    def time(self, n):
        return n / self.n_scale

    def steps_for(self, t):
        """Number of steps covering real time ``t``."""
        return int(round(t * self.n_scale))


def _advance(params, target, x, log_theta, n, eps, u):
    """One step from iteration ``n``; works on scalars or replica arrays."""
    theta = np.exp(log_theta)
    if isinstance(params, ScaledChainParams):
        root = math.sqrt(params.n_scale)
        y = x + theta * eps / root
        xi = u < acceptance_probability(target, x, y)
        log_theta = log_theta + (xi - params.p_n) / root
    else:
        y = x + theta * eps
        xi = u < acceptance_probability(target, x, y)
        log_theta = log_theta + (xi - params.p_acc) / math.sqrt(n + 1)
    return np.where(xi, y, x), log_theta, xi


def _step(state, params, target, rng, eps, u):
    if eps is None:
        eps = rng.normal()
    if u is None:
        u = rng.uniform()
    x, log_theta, xi = _advance(params, target, state.x, state.log_theta, state.n, eps, u)
    return ChainState(float(x), float(log_theta), int(xi), state.n + 1)


def step_discrete(state, params, target, rng, *, eps=None, u=None):
    """One iteration of the discrete adaptive sampler.

    ``eps`` (standard normal) and ``u`` (uniform) override the draws from
    ``rng``; this is how tests pin a proposal.
    """
    return _step(state, params, target, rng, eps, u)


def step_scaled(state, params, target, rng, *, eps=None, u=None):
    """One increment (of duration ``1/n_scale``) of the rescaled chain."""
    return _step(state, params, target, rng, eps, u)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    xi: np.ndarray
    log_theta: np.ndarray

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        write_csv(path, ("t", "x", "theta", "xi"), (self.t, self.x, self.theta, self.xi))


def default_stride(steps, max_records=10**5):
    return max(1, -(-steps // max_records))


def run_chain(init, params, target, steps, rng, stride=None):
    """Apply ``steps`` updates from ``init``, keeping every ``stride``-th state.

    The stepper is chosen from the type of ``params``.  Records are taken at
    iterations ``0, stride, 2*stride, ...`` up to ``steps``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if stride is None:
        stride = default_stride(steps)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = [(params.time(init.n), init.x, init.log_theta, init.xi)]
    state = init
    for i in range(1, steps + 1):
        state = _step(state, params, target, rng, None, None)
        if i % stride == 0:
            rows.append((params.time(state.n), state.x, state.log_theta, state.xi))
    t, x, log_theta, xi = (np.array(c) for c in zip(*rows))
    return Trajectory(t, x, np.exp(log_theta), xi.astype(int), log_theta)


@dataclass
class ChainEnsemble:
    """Replica ensemble recorded at ``steps``; arrays are (replicas, records)."""

    steps: np.ndarray
    times: np.ndarray
    x: np.ndarray
    log_theta: np.ndarray
    xi: np.ndarray
    accepted: np.ndarray

    @property
    def theta(self):
        return np.exp(self.log_theta)

    def acceptance_rate(self, i0, i1):
        """Per-replica fraction of accepted moves between record ``i0`` and ``i1``."""
        return (self.accepted[:, i1] - self.accepted[:, i0]) / (self.steps[i1] - self.steps[i0])

    def trajectory(self, r):
        return Trajectory(self.times, self.x[r], self.theta[r], self.xi[r], self.log_theta[r])


def _record_plan(record_steps):
    steps = np.asarray(record_steps, dtype=np.int64)
    if steps.ndim != 1 or len(steps) == 0:
        raise ValueError("need at least one record step")
    if steps[0] < 0 or np.any(np.diff(steps) <= 0):
        raise ValueError("record steps must be non-negative and strictly increasing")
    return steps


def simulate_chain_ensemble(params, target, replicas, seed, record_steps,
                            x0=0.0, theta0=1.0, stream=0, sources=None):
    """Run ``replicas`` independent chains in lockstep.

    Replica ``r`` consumes the same draws as ``run_chain`` would with
    ``RandomSource(seed, r, stream)``, so its path is identical to the scalar one.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if not theta0 > 0:
        raise ValueError("theta0 must be positive")
    steps = _record_plan(record_steps)
    if sources is None:
        sources = replica_sources(seed, replicas, stream)
    G = len(steps)
    out_x = np.empty((replicas, G))
    out_lt = np.empty((replicas, G))
    out_xi = np.zeros((replicas, G), dtype=np.int8)
    out_acc = np.zeros((replicas, G), dtype=np.int64)

    x = np.full(replicas, float(x0))
    log_theta = np.full(replicas, math.log(theta0))
    xi = np.zeros(replicas, dtype=bool)
    acc = np.zeros(replicas, dtype=np.int64)
    gi = 0
    total = int(steps[-1])
    if steps[0] == 0:
        out_x[:, 0], out_lt[:, 0] = x, log_theta
        gi = 1
    eps = np.empty((replicas, BLOCK))
    u = np.empty((replicas, BLOCK))
    n = 0
    while n < total:
        m = min(BLOCK, total - n)
        for r, src in enumerate(sources):
            eps[r, :m] = src.normals(m)
            u[r, :m] = src.uniforms(m)
        for j in range(m):
            x, log_theta, xi = _advance(params, target, x, log_theta, n, eps[:, j], u[:, j])
            n += 1
            acc += xi
            if n == steps[gi]:
                out_x[:, gi], out_lt[:, gi] = x, log_theta
                out_xi[:, gi], out_acc[:, gi] = xi, acc
                gi += 1
    times = np.array([params.time(int(s)) for s in steps])
    return ChainEnsemble(steps, times, out_x, out_lt, out_xi, out_acc)


def write_csv(path, header, columns):
    """Write equal-length columns with 17 significant digits per float."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (int, np.integer, bool, np.bool_)):
        return str(int(v))
    return format(float(v), ".17g")
