"""Reference computations written independently of the package (plain loops, math.log2)."""
import itertools
import math

import numpy as np


def H(table) -> float:
    t = np.asarray(table, dtype=float).ravel()
    return -sum(p * math.log2(p) for p in t if p > 0)


def marg(joint: np.ndarray, keep) -> np.ndarray:
    drop = tuple(i for i in range(joint.ndim) if i not in keep)
    return joint.sum(axis=drop) if drop else joint


def cmi(joint: np.ndarray, a, b, c=()) -> float:
    """I(A;B|C) from entropies of marginals, axes given as index tuples."""
    def h(axes):
        axes = tuple(sorted(set(axes)))
        if not axes:
            return 0.0
        return H(marg(joint, axes))
    return h(a + c) + h(b + c) - h(a + b + c) - h(c)


def hb(x: float) -> float:
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def strict_joint_loops(pu, target, T, w):
    """J(u,x,y,v,w) = P(u) Q(x,v|u) T(y|x) W(w|u,x,v) by explicit loops."""
    nu, nx, nv = target.shape
    ny = T.shape[1]
    nw = w.shape[3]
    J = np.zeros((nu, nx, ny, nv, nw))
    for u, x, y, v, k in itertools.product(range(nu), range(nx), range(ny), range(nv), range(nw)):
        J[u, x, y, v, k] = pu[u] * target[u, x, v] * T[x, y] * w[u, x, v, k]
    return J


def strict_objective_loops(pu, target, T, w) -> float:
    # axes: U=0, X=1, Y=2, V=3, W=4
    J = strict_joint_loops(pu, target, T, w)
    return cmi(J, (4,), (2,), (3,)) - cmi(J, (0,), (3, 4))


def capacity_grid(T: np.ndarray, steps: int = 20001) -> float:
    """Binary-input capacity by brute force over P(X=0)."""
    best = 0.0
    for a in np.linspace(0, 1, steps):
        px = np.array([a, 1 - a])
        J = px[:, None] * T
        best = max(best, cmi(J, (0,), (1,)))
    return best
