"""Bracket-generating check for the mollified (X, eta) system, eta = 1/theta.

In (x, eta) coordinates the normal-target diffusion has Ito drift
``(-x / (2 eta^2), -p eta + |x| / sqrt(2 pi))`` and a single noise field
``(1/eta, 0)``.  Replacing |x| by the smooth ``g_eps(x) = sqrt(x^2 + eps^2)``
gives smooth fields A0 (drift) and A1 (noise).  Brackets use the convention
``[V, W] = DV W - DW V``.

Closed forms (s = sqrt(2 pi)):

    [A0, A1]        = (-1/(2 eta^3) - p/eta + g/(s eta^2),  g'/(s eta))
    [[A0, A1], A1]  = (2 g'/(s eta^3),                       g''/(s eta^2))

det[A1 | [A0, A1]] = g'(x)/(s eta^2) vanishes at x = 0, but the second
bracket has eta-component g''/(s eta^2) > 0 everywhere, so
{A1, [A0, A1], [[A0, A1], A1]} spans the plane at every point.
"""
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MollifierParams:
    epsilon: float = 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class VectorField2:
    eval: Callable
    name: str

    def __call__(self, x, eta):
        return self.eval(x, eta)


def g_eps(x, params):
    return math.sqrt(x * x + params.epsilon ** 2)


def g_eps_prime(x, params):
    return x / math.sqrt(x * x + params.epsilon ** 2)


def g_eps_second(x, params):
    e2 = params.epsilon ** 2
    return e2 / (x * x + e2) ** 1.5


def _check_eta(eta):
    if not eta > 0:
        raise ValueError("eta must be positive")


def field_A0(p, params):
    def a0(x, eta):
        _check_eta(eta)
        return (-x / (2.0 * eta * eta), -p * eta + g_eps(x, params) / SQRT_2PI)
    return VectorField2(a0, "A0")


def field_A1():
    def a1(x, eta):
        _check_eta(eta)
        return (1.0 / eta, 0.0)
    return VectorField2(a1, "A1")


def lie_bracket_closed(p, params):
    """Closed form of ``[A0, A1]``."""
    def br(x, eta):
        _check_eta(eta)
        return (-0.5 / eta ** 3 - p / eta + g_eps(x, params) / (SQRT_2PI * eta * eta),
                g_eps_prime(x, params) / (SQRT_2PI * eta))
    return VectorField2(br, "[A0,A1]")


def second_bracket_closed(p, params):
    """Closed form of ``[[A0, A1], A1]``; ``p`` drops out."""
    def br(x, eta):
        _check_eta(eta)
        return (2.0 * g_eps_prime(x, params) / (SQRT_2PI * eta ** 3),
                g_eps_second(x, params) / (SQRT_2PI * eta * eta))
    return VectorField2(br, "[[A0,A1],A1]")


def jacobian_fd(V, x, eta, h):
    """Central-difference Jacobian of ``V`` at (x, eta); rows are components."""
    if not h > 0:
        raise ValueError("h must be positive")
    if not eta - h > 0:
        raise ValueError("finite-difference stencil leaves eta > 0")
    dx = (np.array(V(x + h, eta)) - np.array(V(x - h, eta))) / (2.0 * h)
    de = (np.array(V(x, eta + h)) - np.array(V(x, eta - h))) / (2.0 * h)
    return np.column_stack([dx, de])


def lie_bracket_fd(V, W, at, h=1e-5):
    """``DV W - DW V`` with central-difference Jacobians."""
    x, eta = at
    v = np.array(V(x, eta), dtype=float)
    w = np.array(W(x, eta), dtype=float)
    return jacobian_fd(V, x, eta, h) @ w - jacobian_fd(W, x, eta, h) @ v


def bracket_field_fd(V, W, h=1e-5, name=None):
    """``[V, W]`` as a field, each evaluation by finite differences."""
    return VectorField2(lambda x, eta: tuple(lie_bracket_fd(V, W, (x, eta), h)),
                        name or f"[{V.name},{W.name}]_fd")


def span_check(fields, at, tol=1e-10):
    """Rank-2 test on the stacked field vectors at ``at``.

    Returns ``(rank2, ratio)`` where ratio is smallest/largest singular value
    of the 2 x k matrix; rank 2 means ratio > tol.
    """
    x, eta = at
    _check_eta(eta)
    M = np.column_stack([np.array(F(x, eta), dtype=float) for F in fields])
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite field value")
    if M.shape[1] < 2:
        return False, 0.0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return False, 0.0
    ratio = float(s[1] / s[0])
    return ratio > tol, ratio


def hypoelliptic_family(p, params, include_drift=False):
    fields = [field_A1(), lie_bracket_closed(p, params), second_bracket_closed(p, params)]
    if include_drift:
        fields.insert(0, field_A0(p, params))
    return fields


def first_order_det(x, eta, p, params):
    """det[A1 | [A0, A1]] from the closed forms."""
    a1 = field_A1()(x, eta)
    br = lie_bracket_closed(p, params)(x, eta)
    return a1[0] * br[1] - a1[1] * br[0]


def stratonovich_correction(sigma, at, h=1e-6):
    """Ito -> Stratonovich drift correction ``-1/2 sum_jk d sigma_ij/d y_k sigma_kj``.

    ``sigma(y)`` returns a (2, m) matrix; derivatives by central differences.
    """
    y = np.asarray(at, dtype=float)
    S = np.asarray(sigma(y), dtype=float)
    corr = np.zeros(S.shape[0])
    for k in range(len(y)):
        e = np.zeros_like(y)
        e[k] = h
        dS = (np.asarray(sigma(y + e)) - np.asarray(sigma(y - e))) / (2.0 * h)
        corr -= 0.5 * dS @ S[k, :]
    return corr


def noise_matrix(y):
    """Diffusion matrix of the (x, eta) system."""
    _check_eta(y[1])
    return np.array([[1.0 / y[1], 0.0], [0.0, 0.0]])


def drift_gap(p, params, xs, etas):
    """sup of |b_eps - b| over the grid ``xs`` x ``etas`` (b uses |x|)."""
    A0 = field_A0(p, params)
    worst = 0.0
    for x in xs:
        for eta in etas:
            be = np.array(A0(x, eta))
            b = np.array((-x / (2.0 * eta * eta), -p * eta + abs(x) / SQRT_2PI))
            worst = max(worst, float(np.max(np.abs(be - b))))
    return worst


def grid_table(p, params, xs, etas, tol=1e-10):
    """Rows ``(x, eta, det, smin_ratio, rank2)`` for every grid point."""
    fam = hypoelliptic_family(p, params)
    rows = []
    for x in xs:
        for eta in etas:
            rank2, ratio = span_check(fam, (x, eta), tol)
            rows.append((float(x), float(eta), first_order_det(x, eta, p, params), ratio, rank2))
    return rows
