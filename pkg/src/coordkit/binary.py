"""Closed-form expressions for the binary coordination game and the
binary distortion-cost example, plus builders for the matching instances.

Source convention: ``p`` is P(U=1).  Every formula used here is symmetric in
``p <-> 1-p`` so the convention only matters for the instance builders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .prob import FiniteDist, Kernel

LOG2_3 = math.log2(3.0)


def _unit(name: str, val: float) -> float:
    val = float(val)
    if not (0.0 <= val <= 1.0):
        raise DomainError(f"{name}={val!r} lies outside [0, 1]")
    return val


def hb(x: float) -> float:
    """Binary entropy in bits."""
    x = _unit("x", x)
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _hb_clip(x: float) -> float:
    # arguments built from unit-interval parameters can drift by an ulp
    return hb(min(1.0, max(0.0, x)))


@dataclass(frozen=True)
class GameParams:
    p: float = 0.5
    eps: float = 0.0
    gamma: float = 0.25

    def __post_init__(self):
        for name in ("p", "eps", "gamma"):
            _unit(name, getattr(self, name))


def coordination_bounds(gp: GameParams) -> dict:
    """Lower and upper constraint bounds of the coordination family over BSC(eps).

    Only defined for the uniform source.  ``perfect`` is included when eps == 0.
    """
    if gp.p != 0.5:
        raise DomainError(f"closed forms require p = 0.5, got p={gp.p!r}")
    g, e = gp.gamma, gp.eps
    base = hb(g) + (1.0 - g) * LOG2_3 - 1.0
    a = 2.0 / 3.0 - 2.0 * g / 3.0
    lower = base - _hb_clip(a) - hb(e) + _hb_clip(a + e * (4.0 * g - 1.0) / 3.0)
    s = 2.0 * g + 1.0
    inner = (1.0 - e) * 3.0 * g / s + e * (1.0 - g) / s
    upper = base - hb(e) + (s / 3.0) * (_hb_clip(inner) - _hb_clip(3.0 * g / s))
    out = {"lower": lower, "upper": upper}
    if e == 0.0:
        out["perfect"] = base
    return out


def gamma_star(eps: float, bound: str = "lower", tol: float = 1e-6) -> float:
    """Largest gamma in [0.25, 1] where the selected bound is still nonnegative.

    Returns 0.25 when the bound is negative on the whole interval.
    """
    eps = _unit("eps", eps)
    if eps > 0.5:
        raise DomainError(f"eps={eps!r} must lie in [0, 0.5]")
    if bound not in ("lower", "upper"):
        raise DomainError(f"bound must be 'lower' or 'upper', got {bound!r}")

    def f(g):
        return coordination_bounds(GameParams(0.5, eps, g))[bound]

    lo, hi = 0.25, 1.0
    if f(lo) < -1e-12:
        return 0.25
    if f(hi) >= 0.0:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) >= -1e-12:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dc_constraint(alpha: float, beta: float, p: float, eps: float) -> float:
    """I(X;Y) - I(U;V) for the binary distortion-cost example."""
    a, b = _unit("alpha", alpha), _unit("beta", beta)
    p, e = _unit("p", p), _unit("eps", eps)
    return (_hb_clip(a * e + (1.0 - a) * (1.0 - e)) + hb(b) - hb(e)
            - _hb_clip(b * p + (1.0 - b) * (1.0 - p)))


def game_target(gamma: float) -> Kernel:
    """Kernel (X,V)|U with mass gamma/2 on x=v=u and (1-gamma)/6 elsewhere, scaled per row."""
    g = _unit("gamma", gamma)
    t = np.full((2, 2, 2), (1.0 - g) / 3.0)
    for u in range(2):
        t[u, u, u] = g
    return Kernel(("U",), ("X", "V"), t)


def game_utility() -> np.ndarray:
    """Indicator 1{x = v = u} as a table over (U, X, Y, V)."""
    phi = np.zeros((2, 2, 2, 2))
    for u in range(2):
        phi[u, u, :, u] = 1.0
    return phi


def game_family(gamma: float) -> dict:
    from .region import UtilitySpec
    return {"target": game_target(gamma), "utility": UtilitySpec(game_utility())}


def bsc(eps: float) -> Kernel:
    e = _unit("eps", eps)
    return Kernel(("X",), ("Y",), np.array([[1.0 - e, e], [e, 1.0 - e]]))


def bernoulli_source(p: float) -> FiniteDist:
    p = _unit("p", p)
    return FiniteDist(("U",), np.array([1.0 - p, p]))


def dc_target(alpha: float, beta: float) -> Kernel:
    """Kernel (X,V)|U with X ~ Bernoulli, P(X=0)=alpha, independent of U, and V = U through BSC(beta)."""
    a, b = _unit("alpha", alpha), _unit("beta", beta)
    px = np.array([a, 1.0 - a])
    t = np.empty((2, 2, 2))
    for u in range(2):
        pv = np.array([1.0 - b, b]) if u == 0 else np.array([b, 1.0 - b])
        t[u] = np.outer(px, pv)
    return Kernel(("U",), ("X", "V"), t)
