"""Information constraints for strictly-causal and causal decoding.

The strictly-causal constraint of a target Q(x,v|u) over a channel T(y|x) is

    max over Q(w|u,x,v) of  I(W;Y|V) - I(U;V,W)

and the causal one is

    max over Q(x,w1,w2|u), Q(v|y,w2) of  I(W1;Y|W2) - I(W1,W2;U)

subject to the induced (U,X,Y,V) marginal matching the target.

The strict maximization runs a difference-of-convex ascent.  Writing the
objective as ``c + H(U|V,W) - H(Y|V,W)``, the second conditional entropy
enters with a minus sign and is concave in the joint, so its negative is
convex and homogeneous of degree one.  Its tangent plane is therefore a
global minorant that touches at the current iterate; the remaining surrogate
``H(U|V,W) + <L, J>`` is concave and is improved by exponentiated-gradient
steps with backtracking.  Every accepted outer step is an ascent step.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import ConfigurationError, InstanceFormatError
from .prob import (FiniteDist, Kernel, attach, compose_chain, conditional_table,
                   entropy, entropy_table, marginal_table, mutual_information)

ZERO_TOL = 1e-12
FEASIBLE_RESIDUAL = 1e-6
_LOG_FLOOR = 1e-300
_LN2 = math.log(2.0)


class Verdict(str, enum.Enum):
    ACHIEVABLE = "Achievable"
    NOT_ACHIEVABLE = "NotAchievable"
    UNDETERMINED = "Undetermined"


def _snap(x: float) -> float:
    return 0.0 if abs(x) < ZERO_TOL else float(x)


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class StrictInstance:
    """Source P(u), channel T(y|x) and target Q(x,v|u)."""

    source: FiniteDist
    channel: Kernel
    target: Kernel

    def __post_init__(self):
        if self.source.axes != ("U",):
            raise InstanceFormatError(f"source must be over ('U',), got {self.source.axes}")
        if self.channel.given != ("X",) or self.channel.target != ("Y",):
            raise InstanceFormatError("channel must be a kernel Y|X")
        if self.target.given != ("U",) or self.target.target != ("X", "V"):
            raise InstanceFormatError("target must be a kernel (X,V)|U with target order (X, V)")
        nu = self.source.table.shape[0]
        if self.target.table.shape[0] != nu:
            raise InstanceFormatError(
                f"target has {self.target.table.shape[0]} source rows, source has {nu} symbols")
        if self.target.table.shape[1] != self.channel.table.shape[0]:
            raise InstanceFormatError(
                f"target X alphabet has {self.target.table.shape[1]} letters, "
                f"channel input has {self.channel.table.shape[0]}")

    @classmethod
    def from_arrays(cls, source, channel, target) -> StrictInstance:
        """Build from plain arrays: source (U,), channel (X,Y), target (U,X,V)."""
        source = np.asarray(source, dtype=float)
        channel = np.asarray(channel, dtype=float)
        target = np.asarray(target, dtype=float)
        if target.ndim != 3:
            raise InstanceFormatError(f"target array must have shape (U,X,V), got {target.shape}")
        return cls(FiniteDist(("U",), source), Kernel(("X",), ("Y",), channel),
                   Kernel(("U",), ("X", "V"), target))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        nu, nx, nv = self.target.table.shape
        return nu, nx, self.channel.table.shape[1], nv

    def joint(self) -> FiniteDist:
        return compose_chain(self.source, self.target, self.channel)

    def mass(self) -> np.ndarray:
        """P(u)·Q(x,v|u) as an array over (U, X, V)."""
        return self.source.table[:, None, None] * self.target.table


@dataclass(frozen=True)
class AuxKernelW:
    """Auxiliary kernel Q(w|u,x,v)."""

    kernel: Kernel
    override: bool = False

    def __post_init__(self):
        if self.kernel.given != ("U", "X", "V") or self.kernel.target != ("W",):
            raise InstanceFormatError("auxiliary kernel must be W|(U,X,V)")

    @classmethod
    def from_array(cls, table, override: bool = False) -> AuxKernelW:
        return cls(Kernel(("U", "X", "V"), ("W",), np.asarray(table, dtype=float)), override)

    @property
    def w_size(self) -> int:
        return self.kernel.table.shape[-1]

    @property
    def table(self) -> np.ndarray:
        return self.kernel.table

    def check(self, instance: StrictInstance) -> None:
        nu, nx, _, nv = instance.shape
        if self.kernel.table.shape[:3] != (nu, nx, nv):
            raise InstanceFormatError(
                f"auxiliary kernel conditions on shape {self.kernel.table.shape[:3]}, "
                f"instance has {(nu, nx, nv)}")
        if not self.override and self.w_size > nu * nx * nv + 1:
            raise InstanceFormatError(
                f"w_size={self.w_size} exceeds |U||X||V|+1={nu * nx * nv + 1}")


def strict_joint(instance: StrictInstance, aux: AuxKernelW) -> FiniteDist:
    """Joint over (U, X, Y, V, W)."""
    aux.check(instance)
    return attach(instance.joint(), aux.kernel)


def objective_strict(instance: StrictInstance, aux: AuxKernelW) -> float:
    """I(W;Y|V) - I(U;V,W) in bits."""
    joint = strict_joint(instance, aux)
    return (mutual_information(joint, "W", "Y", "V")
            - mutual_information(joint, "U", ("V", "W")))


def _is_permutation(t: np.ndarray) -> bool:
    if t.shape[0] != t.shape[1]:
        return False
    ones = np.isclose(t, 1.0, atol=1e-12)
    zeros = np.isclose(t, 0.0, atol=1e-12)
    return bool(np.all(ones | zeros) and np.all(ones.sum(axis=0) == 1)
                and np.all(ones.sum(axis=1) == 1))


def analytic_bounds(instance: StrictInstance) -> dict:
    """Sandwich bounds on the strict constraint, plus closed forms when they apply.

    lower: value of the choice W = X.  upper: the constraint with the source
    also revealed to the decoder.  ``perfect_channel_value`` appears when the
    channel is a permutation, ``product_value`` when (U,V) is independent of
    (X,Y).
    """
    j = instance.joint()
    mi = mutual_information
    lower = mi(j, "X", "Y", "V") - mi(j, "U", ("V", "X"))
    upper = mi(j, "X", "Y", ("U", "V")) - mi(j, "U", "V")
    out = {"lower": _snap(lower), "upper": _snap(upper)}
    if _is_permutation(instance.channel.table):
        out["perfect_channel_value"] = _snap(entropy(j, "X", "V") - mi(j, "U", ("X", "V")))
    uv = marginal_table(j, ("U", "V"))
    xy = marginal_table(j, ("X", "Y"))
    full = marginal_table(j, ("U", "V", "X", "Y"))
    if np.max(np.abs(full - np.multiply.outer(uv, xy))) <= 1e-9:
        out["product_value"] = _snap(mi(j, "X", "Y") - mi(j, "U", "V"))
    return out


def decomposition_check(joint: FiniteDist, source: FiniteDist, channel: Kernel,
                        mode: str = "strict", tol: float = 1e-7) -> tuple[bool, float]:
    """Check that ``joint`` over (U,X,Y,V) factors as required by ``mode``.

    strict: P(u)·Q(x,v|u)·T(y|x), so that Y depends on (U,V) only through X.
    causal: P(u)·Q(x|u)·T(y|x)·Q(v|u,x,y).
    Returns (passed, worst absolute cell deviation).
    """
    if sorted(joint.axes) != ["U", "V", "X", "Y"]:
        raise InstanceFormatError(f"joint must be over U, X, Y, V; got {joint.axes}")
    j = joint.reorder(("U", "X", "Y", "V")).table
    if mode not in ("strict", "causal"):
        raise InstanceFormatError(f"unknown mode {mode!r}")
    if j.shape[0] != source.table.shape[0] or j.shape[1:3] != channel.table.shape:
        raise InstanceFormatError("joint alphabets disagree with source/channel")
    T = channel.table
    pu = source.table
    if mode == "strict":
        uxv = j.sum(axis=2)
        q = conditional_table(uxv, 1)
        expect = pu[:, None, None, None] * q[:, :, None, :] * T[None, :, :, None]
    else:
        ux = j.sum(axis=(2, 3))
        qx = conditional_table(ux, 1)
        qv = conditional_table(j, 3)
        expect = pu[:, None, None, None] * qx[:, :, None, None] * T[None, :, :, None] * qv
    dev = float(np.max(np.abs(j - expect)))
    return dev <= tol, dev


# ---------------------------------------------------------------------------
# reports


@dataclass
class ConstraintReport:
    value: float
    certificate: object
    lower_bound: Optional[float]
    upper_bound: float
    verdict: Verdict
    closed_form: dict = field(default_factory=dict)
    restarts_used: int = 0
    iterations: int = 0
    residual: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        cert = self.certificate
        if isinstance(cert, AuxKernelW):
            cert_out = {"w_size": cert.w_size, "flagged": cert.override,
                        "kernel_w_given_uxv": cert.table.tolist()}
        elif isinstance(cert, CausalStructure):
            cert_out = {"w1_size": cert.w1_size, "w2_size": cert.w2_size,
                        "front_xw1w2_given_u": cert.front.table.tolist(),
                        "back_v_given_yw2": cert.back.table.tolist()}
        else:
            cert_out = None
        return {
            "value": self.value,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "verdict": self.verdict.value,
            "closed_form": dict(self.closed_form),
            "restarts_used": self.restarts_used,
            "iterations": self.iterations,
            "residual": self.residual,
            "certificate": cert_out,
        }


def _verdict(value: Optional[float], upper: float) -> Verdict:
    if value is not None and value >= 0.0:
        return Verdict.ACHIEVABLE
    if upper < 0.0:
        return Verdict.NOT_ACHIEVABLE
    return Verdict.UNDETERMINED


# ---------------------------------------------------------------------------
# strict maximization


@dataclass(frozen=True)
class StrictOptions:
    w_size: Optional[int] = None
    restarts: int = 16
    max_iters: int = 500
    tol: float = 1e-9
    seed: int = 0
    override: bool = False
    inner_steps: int = 4
    smoothing: float = 1e-3
    init: tuple = ()

    def validate(self) -> None:
        if self.w_size is not None and self.w_size < 1:
            raise ConfigurationError(f"w_size must be >= 1, got {self.w_size}")
        if self.restarts < 0:
            raise ConfigurationError(f"restarts must be >= 0, got {self.restarts}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigurationError(f"smoothing must lie in [0, 1), got {self.smoothing}")


def _neg_entropy_sum(p: np.ndarray, axes) -> np.ndarray:
    return xlogy(p, p).sum(axis=axes) / _LN2


def _safe_log2(p: np.ndarray) -> np.ndarray:
    return np.log2(np.maximum(p, _LOG_FLOOR))


class _StrictProblem:
    """Batched evaluation of the strict objective for kernels of shape (K,U,X,V,W)."""

    def __init__(self, mass: np.ndarray, channel: np.ndarray):
        self.m = mass
        self.T = channel
        pu = mass.sum(axis=(1, 2))
        pyv = np.einsum("uxv,xy->yv", mass, channel)
        self.const = (entropy_table(pyv) - entropy_table(pyv.sum(axis=0))
                      - entropy_table(pu))

    def _marg(self, r):
        J = self.m[None, :, :, :, None] * r
        quvw = J.sum(axis=2)
        qxvw = J.sum(axis=1)
        return quvw, qxvw

    def value(self, r: np.ndarray) -> np.ndarray:
        # c + H(U,V,W) - H(Y,V,W); the H(V,W) terms cancel
        quvw, qxvw = self._marg(r)
        qyvw = np.einsum("kxvw,xy->kyvw", qxvw, self.T)
        return (self.const - _neg_entropy_sum(quvw, (1, 2, 3))
                + _neg_entropy_sum(qyvw, (1, 2, 3)))

    def tangent(self, r: np.ndarray) -> np.ndarray:
        """Slope L[k,x,v,w] = sum_y T(y|x) log2 q(y|v,w) of -H(Y|V,W)."""
        _, qxvw = self._marg(r)
        qyvw = np.einsum("kxvw,xy->kyvw", qxvw, self.T)
        qvw = qyvw.sum(axis=1, keepdims=True)
        logc = _safe_log2(qyvw) - _safe_log2(qvw)
        return np.einsum("xy,kyvw->kxvw", self.T, logc)

    def surrogate(self, r: np.ndarray, L: np.ndarray):
        """Surrogate H(U|V,W) + <L, J> and its per-row gradient.

        The gradient is taken with respect to r and divided by the row mass
        P(u)Q(x,v|u), which leaves the mirror-ascent direction unchanged.
        """
        quvw, qxvw = self._marg(r)
        qvw = quvw.sum(axis=1)
        h_u_vw = -_neg_entropy_sum(quvw, (1, 2, 3)) + _neg_entropy_sum(qvw, (1, 2))
        s = h_u_vw + (qxvw * L).sum(axis=(1, 2, 3))
        neg_log_cond = _safe_log2(qvw)[:, None] - _safe_log2(quvw)
        return s, neg_log_cond[:, :, None, :, :] + L[:, None, :, :, :]


def _softmax(logits: np.ndarray) -> np.ndarray:
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def _mirror_step(r: np.ndarray, g: np.ndarray, eta: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return _softmax(np.log(r) + eta.reshape((-1,) + (1,) * (r.ndim - 1)) * g)


def _extrapolate(new: np.ndarray, old: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Step further along new - old in log coordinates; zero entries stay zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ln, lo = np.log(new), np.log(old)
        d = np.where(np.isfinite(ln) & np.isfinite(lo), ln - lo, 0.0)
        return _softmax(ln + beta.reshape((-1,) + (1,) * (new.ndim - 1)) * d)


def dc_ascent(mass: np.ndarray, channel: np.ndarray, r0: np.ndarray,
              max_iters: int = 500, tol: float = 1e-9, inner_steps: int = 4):
    """Run the DC ascent on a batch of kernels r0 with shape (K,U,X,V,W).

    Returns (kernels, values, traces, iterations) where traces[k] is the
    nondecreasing objective sequence of start k.
    """
    prob = _StrictProblem(mass, channel)
    r = np.array(r0, dtype=float)
    K = r.shape[0]
    f = prob.value(r)
    traces = [[float(v)] for v in f]
    eta = np.ones(K)
    beta = np.ones(K)
    active = np.ones(K, dtype=bool)
    it = 0
    while it < max_iters and active.any():
        it += 1
        idx = np.flatnonzero(active)
        ra = r[idx]
        L = prob.tangent(ra)
        s, g = prob.surrogate(ra, L)
        e = eta[idx]
        for _ in range(inner_steps):
            cand = _mirror_step(ra, g, e)
            s_new, g_new = prob.surrogate(cand, L)
            ok = s_new > s
            ok5 = ok[:, None, None, None, None]
            ra = np.where(ok5, cand, ra)
            g = np.where(ok5, g_new, g)
            s = np.where(ok, s_new, s)
            e = np.where(ok, np.minimum(e * 2.0, 1e4), e * 0.5)
        f_new = prob.value(ra)
        # extrapolated candidate along the last DC step; kept only if it helps
        b = beta[idx]
        ext = _extrapolate(ra, r[idx], b)
        f_ext = prob.value(ext)
        use = (f_ext > f_new) & (f_new > f[idx])
        ra = np.where(use[:, None, None, None, None], ext, ra)
        f_new = np.where(use, f_ext, f_new)
        beta[idx] = np.where(use, np.minimum(b * 2.0, 64.0), 1.0)
        improved = f_new > f[idx]
        gain = np.where(improved, f_new - f[idx], 0.0)
        take = idx[improved]
        r[take] = ra[improved]
        f[take] = f_new[improved]
        for k in idx:
            traces[k].append(float(f[k]))
        done = (improved & (gain < tol)) | (~improved & (e < 1e-10))
        active[idx[done]] = False
        eta[idx] = e
    return r, f, traces, it


def _strict_seeds(shape, w: int, opts: StrictOptions) -> np.ndarray:
    nu, nx, nv = shape
    seeds = []

    def det(index_fn):
        t = np.zeros((nu, nx, nv, w))
        for u in range(nu):
            for x in range(nx):
                for v in range(nv):
                    t[u, x, v, index_fn(u, x, v)] = 1.0
        return t

    if nx <= w:
        seeds.append(det(lambda u, x, v: x))
    if nx * nv <= w:
        seeds.append(det(lambda u, x, v: x * nv + v))
    if nu * nx * nv <= w:
        seeds.append(det(lambda u, x, v: (u * nx + x) * nv + v))
    seeds.append(det(lambda u, x, v: 0))
    for init in opts.init:
        t = np.asarray(init.table if isinstance(init, AuxKernelW) else init, dtype=float)
        if t.shape[:3] != (nu, nx, nv) or t.shape[3] > w:
            raise ConfigurationError(
                f"initial kernel shape {t.shape} incompatible with {(nu, nx, nv, w)}")
        pad = np.zeros((nu, nx, nv, w))
        pad[..., :t.shape[3]] = t
        seeds.append(pad)
    if opts.smoothing > 0:
        tau = opts.smoothing
        seeds += [(1 - tau) * s + tau / w for s in list(seeds)]
    for i in range(opts.restarts):
        rng = np.random.default_rng([opts.seed, i])
        seeds.append(rng.dirichlet(np.ones(w), size=(nu, nx, nv)))
    return np.stack(seeds)


def maximize_strict(instance: StrictInstance, opts: StrictOptions | None = None) -> ConstraintReport:
    """Certified lower bound on the strict constraint, with sandwich bounds and verdict."""
    opts = opts or StrictOptions()
    opts.validate()
    nu, nx, ny, nv = instance.shape
    w = opts.w_size or nu * nx * nv + 1
    override = opts.override or w > nu * nx * nv + 1
    if w > nu * nx * nv + 1 and not opts.override:
        raise ConfigurationError(
            f"w_size={w} exceeds |U||X||V|+1={nu * nx * nv + 1}; pass override=True")
    r0 = _strict_seeds((nu, nx, nv), w, opts)
    r, f, traces, iters = dc_ascent(instance.mass(), instance.channel.table, r0,
                                    opts.max_iters, opts.tol, opts.inner_steps)
    best = int(np.argmax(f))
    table = r[best] / r[best].sum(axis=-1, keepdims=True)
    cert = AuxKernelW(Kernel(("U", "X", "V"), ("W",), table), override=override)
    value = _snap(objective_strict(instance, cert))
    bounds = analytic_bounds(instance)
    closed = {k: v for k, v in bounds.items() if k.endswith("_value")}
    return ConstraintReport(
        value=value, certificate=cert, lower_bound=bounds["lower"],
        upper_bound=bounds["upper"], verdict=_verdict(value, bounds["upper"]),
        closed_form=closed, restarts_used=int(r0.shape[0]), iterations=iters,
        trace=traces)


def rate_margin(instance: StrictInstance, opts: StrictOptions | None = None) -> float:
    """Largest certified message rate that can ride along with coordination."""
    return max(0.0, maximize_strict(instance, opts).value)


def time_sharing_certificate(inst1: StrictInstance, aux1: AuxKernelW,
                             inst2: StrictInstance, aux2: AuxKernelW,
                             lam: float) -> tuple[StrictInstance, AuxKernelW]:
    """Mixture instance lam·Q1 + (1-lam)·Q2 and an auxiliary W' = (Z, W_Z).

    Z is a time-sharing flag independent of U.  The returned certificate's
    objective is at least lam·obj1 + (1-lam)·obj2.  Its alphabet has
    |W1| + |W2| letters and is flagged as an override when that exceeds the
    default ceiling.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"mixing weight {lam!r} outside [0, 1]")
    if not np.allclose(inst1.source.table, inst2.source.table, atol=1e-12) or not np.allclose(
            inst1.channel.table, inst2.channel.table, atol=1e-12):
        raise InstanceFormatError("time sharing needs a common source and channel")
    q1, q2 = inst1.target.table, inst2.target.table
    mix = lam * q1 + (1.0 - lam) * q2
    inst = StrictInstance(inst1.source, inst1.channel, Kernel(("U",), ("X", "V"), mix))
    with np.errstate(invalid="ignore", divide="ignore"):
        z1 = np.where(mix > 0, lam * q1 / np.where(mix > 0, mix, 1.0), lam)
    z2 = 1.0 - z1
    w1, w2 = aux1.w_size, aux2.w_size
    t = np.concatenate([z1[..., None] * aux1.table, z2[..., None] * aux2.table], axis=-1)
    t /= t.sum(axis=-1, keepdims=True)
    nu, nx, _, nv = inst.shape
    return inst, AuxKernelW(Kernel(("U", "X", "V"), ("W",), t),
                            override=w1 + w2 > nu * nx * nv + 1)


# ---------------------------------------------------------------------------
# causal decoding


@dataclass(frozen=True)
class CausalStructure:
    """Front kernel Q(x,w1,w2|u) and back kernel Q(v|y,w2) over a source and channel."""

    source: FiniteDist
    channel: Kernel
    front: Kernel
    back: Kernel
    override: bool = False

    def __post_init__(self):
        if self.front.given != ("U",) or self.front.target != ("X", "W1", "W2"):
            raise InstanceFormatError("front must be a kernel (X,W1,W2)|U")
        if self.back.given != ("Y", "W2") or self.back.target != ("V",):
            raise InstanceFormatError("back must be a kernel V|(Y,W2)")
        nu, nx, n1, n2 = self.front.table.shape
        if nu != self.source.table.shape[0] or nx != self.channel.table.shape[0]:
            raise InstanceFormatError("front kernel alphabets disagree with source/channel")
        ny, m2, nv = self.back.table.shape
        if ny != self.channel.table.shape[1] or m2 != n2:
            raise InstanceFormatError("back kernel alphabets disagree with channel/front")
        ceiling = nu * nx * ny * nv + 2
        if not self.override and max(n1, n2) > ceiling:
            raise InstanceFormatError(
                f"max(|W1|,|W2|)={max(n1, n2)} exceeds |U||X||Y||V|+2={ceiling}")

    @property
    def w1_size(self) -> int:
        return self.front.table.shape[2]

    @property
    def w2_size(self) -> int:
        return self.front.table.shape[3]

    def joint(self) -> FiniteDist:
        """Joint over (U, X, W1, W2, Y, V)."""
        j = attach(attach(attach(self.source, self.front), self.channel), self.back)
        return j


@dataclass(frozen=True)
class CausalInstance:
    """Source, channel and target split as Q(x|u) and Q(v|u,x,y)."""

    source: FiniteDist
    channel: Kernel
    target_x: Kernel
    target_v: Kernel

    def __post_init__(self):
        if self.target_x.given != ("U",) or self.target_x.target != ("X",):
            raise InstanceFormatError("target_x must be a kernel X|U")
        if self.target_v.given != ("U", "X", "Y") or self.target_v.target != ("V",):
            raise InstanceFormatError("target_v must be a kernel V|(U,X,Y)")
        nu = self.source.table.shape[0]
        nx, ny = self.channel.table.shape
        if self.target_x.table.shape != (nu, nx):
            raise InstanceFormatError("target_x alphabets disagree with source/channel")
        if self.target_v.table.shape[:3] != (nu, nx, ny):
            raise InstanceFormatError("target_v alphabets disagree with source/channel")

    @classmethod
    def from_strict(cls, inst: StrictInstance) -> CausalInstance:
        q = inst.target.table
        qx = q.sum(axis=2)
        qv = conditional_table(q, 2)
        ny = inst.channel.table.shape[1]
        tv = np.repeat(qv[:, :, None, :], ny, axis=2)
        return cls(inst.source, inst.channel, Kernel(("U",), ("X",), qx),
                   Kernel(("U", "X", "Y"), ("V",), tv))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        nu, nx, ny, nv = self.target_v.table.shape
        return nu, nx, ny, nv

    def weights(self) -> np.ndarray:
        """P(u)·Q(x|u)·T(y|x) over (U, X, Y)."""
        return (self.source.table[:, None, None] * self.target_x.table[:, :, None]
                * self.channel.table[None, :, :])

    def joint(self) -> FiniteDist:
        t = self.weights()[..., None] * self.target_v.table
        return FiniteDist(("U", "X", "Y", "V"), t)

    def depends_on_y(self, tol: float = 1e-12) -> bool:
        """True when Q(v|u,x,y) varies with y on a positive-probability cell."""
        w = self.weights()
        tv = self.target_v.table
        ref = np.einsum("uxy,uxyv->uxv", w, tv)
        mass = w.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            ref = np.where(mass[..., None] > 0, ref / np.where(mass > 0, mass, 1.0)[..., None], 0)
        dev = np.abs(tv - ref[:, :, None, :]) * (w[..., None] > 0)
        return bool(dev.max() > tol)


def objective_causal(structure: CausalStructure) -> dict:
    """I(W1;Y|W2) - I(W1,W2;U) with the induced Q(x|u) and Q(v|u,x,y)."""
    j = structure.joint()
    value = (mutual_information(j, "W1", "Y", "W2")
             - mutual_information(j, ("W1", "W2"), "U"))
    uxyv = marginal_table(j, ("U", "X", "Y", "V"))
    ux = uxyv.sum(axis=(2, 3))
    induced_x = Kernel(("U",), ("X",), conditional_table(ux, 1))
    induced_v = Kernel(("U", "X", "Y"), ("V",), conditional_table(uxyv, 3))
    return {"value": _snap(value), "induced_target": induced_v, "induced_x": induced_x}


def causal_residual(structure: CausalStructure, instance: CausalInstance) -> float:
    """Worst mismatch between induced and requested target kernels on the support."""
    out = objective_causal(structure)
    w = instance.weights()
    dv = np.abs(out["induced_target"].table - instance.target_v.table)
    dv = np.where(w[..., None] > 0, dv, 0.0).max()
    pu = instance.source.table
    dx = np.abs(out["induced_x"].table - instance.target_x.table)
    dx = np.where(pu[:, None] > 0, dx, 0.0).max()
    return float(max(dv, dx))


def causal_upper_bound(instance: CausalInstance) -> float:
    """I(X;Y) - I(U;V) on the target joint; no causal structure can exceed it."""
    j = instance.joint()
    return _snap(mutual_information(j, "X", "Y") - mutual_information(j, "U", "V"))


@dataclass(frozen=True)
class CausalOptions:
    w1_size: Optional[int] = None
    w2_size: Optional[int] = None
    restarts: int = 16
    max_iters: int = 500
    tol: float = 1e-9
    seed: int = 0
    override: bool = False
    penalty_restarts: int = 2
    penalty_steps: int = 40
    penalty_cap: float = 2.0 ** 20

    def validate(self) -> None:
        for name in ("w1_size", "w2_size"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {v}")
        if self.penalty_restarts < 0 or self.penalty_steps < 1:
            raise ConfigurationError("penalty_restarts must be >= 0 and penalty_steps >= 1")

    def strict(self, w_size: int) -> StrictOptions:
        return StrictOptions(w_size=w_size, restarts=self.restarts,
                             max_iters=self.max_iters, tol=self.tol, seed=self.seed,
                             override=True)


def _assemble(instance: CausalInstance, c: np.ndarray, b: np.ndarray,
              r: np.ndarray, w1: int, w2: int, override: bool) -> CausalStructure:
    """Pad compact kernels c(w2|u,x), b(v|y,w2), r(w1|u,x,w2) to full alphabets."""
    nu, nx, ny, nv = instance.shape
    k2, k1 = c.shape[2], r.shape[3]
    front = np.zeros((nu, nx, w1, w2))
    qx = instance.target_x.table
    front[:, :, :k1, :k2] = (qx[:, :, None, None] * c[:, :, None, :]
                             * np.transpose(r, (0, 1, 3, 2)))
    back = np.full((ny, w2, nv), 1.0 / nv)
    back[:, :k2, :] = b
    return CausalStructure(instance.source, instance.channel,
                           Kernel(("U",), ("X", "W1", "W2"), front),
                           Kernel(("Y", "W2"), ("V",), back), override=override)


def _inner_w1(instance: CausalInstance, c: np.ndarray, w1: int, opts: CausalOptions,
              init=None):
    """Optimize W1 for a fixed split c(w2|u,x); this is a strict problem with V replaced by W2."""
    target = instance.target_x.table[:, :, None] * c
    sub = StrictInstance.from_arrays(instance.source.table, instance.channel.table, target)
    nu, nx, _, n2 = sub.shape
    w = min(w1, nu * nx * n2 + 1)
    sopts = opts.strict(w)
    if init is not None and init.shape[3] <= w:
        sopts = replace(sopts, init=(init,))
    rep = maximize_strict(sub, sopts)
    return rep


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row (last axis) onto the probability simplex."""
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


class _CausalPenalty:
    """Objective and penalty for joint front/back search over full alphabets."""

    def __init__(self, instance: CausalInstance):
        self.m = instance.source.table[:, None] * instance.target_x.table   # (U,X)
        self.T = instance.channel.table
        self.omega = instance.weights()                                      # (U,X,Y)
        self.tv = instance.target_v.table                                    # (U,X,Y,V)
        self.hu = entropy_table(instance.source.table)

    def objective(self, a):
        J = self.m[:, :, None, None] * a
        qu12 = J.sum(axis=1)
        qy12 = np.einsum("uxab,xy->yab", J, self.T)
        qy2 = qy12.sum(axis=1)
        q2 = qy2.sum(axis=0)
        h = lambda p: -_neg_entropy_sum(p, None)
        return h(qy2) - h(q2) - h(qy12) + h(qu12) - self.hu

    def objective_grad(self, a):
        J = self.m[:, :, None, None] * a
        qu12 = J.sum(axis=1)
        qy12 = np.einsum("uxab,xy->yab", J, self.T)
        qy2 = qy12.sum(axis=1)
        q2 = qy2.sum(axis=0)
        g = (-np.einsum("xy,yb->xb", self.T, _safe_log2(qy2))[:, None, :]
             + _safe_log2(q2)[None, None, :]
             + np.einsum("xy,yab->xab", self.T, _safe_log2(qy12)))
        return g[None] - _safe_log2(qu12)[:, None, :, :]

    def error(self, a, b):
        a2 = a.sum(axis=2)
        return np.einsum("uxb,ybv->uxyv", a2, b) - self.tv

    def penalty(self, a, b):
        e = self.error(a, b)
        return float((self.omega[..., None] * e * e).sum())

    def residual(self, a, b):
        e = np.abs(self.error(a, b)) * (self.omega[..., None] > 0)
        return float(e.max())


def _penalty_search(instance: CausalInstance, w1: int, w2: int, opts: CausalOptions,
                    rng: np.random.Generator):
    nu, nx, ny, nv = instance.shape
    P = _CausalPenalty(instance)
    a = rng.dirichlet(np.ones(w1 * w2), size=(nu, nx)).reshape(nu, nx, w1, w2)
    b = rng.dirichlet(np.ones(nv), size=(ny, w2))
    m = np.maximum(P.m, 1e-300)[:, :, None, None]
    eta_a, eta_b = 1.0, 1.0
    lam = 1.0
    while lam <= opts.penalty_cap:
        F = P.objective(a) - lam * P.penalty(a, b)
        for _ in range(opts.penalty_steps):
            e = P.error(a, b)
            gp = 2.0 * np.einsum("uxy,uxyv,ybv->uxb", P.omega, e, b)
            g = P.objective_grad(a) - lam * gp[:, :, None, :] / m
            flat = a.reshape(nu, nx, -1)
            cand = _mirror_step(flat, g.reshape(nu, nx, -1), np.full(nu, eta_a)).reshape(a.shape)
            F_new = P.objective(cand) - lam * P.penalty(cand, b)
            if F_new > F:
                a, F, eta_a = cand, F_new, min(eta_a * 2.0, 1e4)
            else:
                eta_a *= 0.5
            pen = P.penalty(a, b)
            a2 = a.sum(axis=2)
            gb = 2.0 * np.einsum("uxy,uxyv,uxb->ybv", P.omega, P.error(a, b), a2)
            cand_b = _project_simplex(b - eta_b * gb)
            pen_new = P.penalty(a, cand_b)
            if pen_new < pen:
                b, eta_b = cand_b, min(eta_b * 2.0, 1e4)
            else:
                eta_b *= 0.5
            F = P.objective(a) - lam * P.penalty(a, b)
        if P.residual(a, b) <= 0.1 * FEASIBLE_RESIDUAL:
            break
        lam *= 2.0
    return a, b, P.residual(a, b)


def maximize_causal(instance: CausalInstance, opts: CausalOptions | None = None) -> ConstraintReport:
    """Best certified causal constraint value for a target split as Q(x|u), Q(v|u,x,y).

    Exactly-feasible structures are tried first: W2 constant when the target
    output depends on y alone, W2 = V when it ignores y (this embeds the strict
    problem), and W2 = (U, X), which is always feasible.  A penalty search over
    full front/back kernels follows.  Only structures whose induced target
    matches within the residual tolerance are certified.
    """
    opts = opts or CausalOptions()
    opts.validate()
    nu, nx, ny, nv = instance.shape
    ceiling = nu * nx * ny * nv + 2
    w1 = opts.w1_size or ceiling
    w2 = opts.w2_size or ceiling
    override = opts.override or max(w1, w2) > ceiling
    if max(w1, w2) > ceiling and not opts.override:
        raise ConfigurationError(
            f"max(w1_size, w2_size)={max(w1, w2)} exceeds {ceiling}; pass override=True")
    wts = instance.weights()
    tv = instance.target_v.table
    candidates = []   # (value, residual, structure, label)

    def consider(c, b, r, label):
        s = _assemble(instance, c, b, r, w1, w2, override)
        val = objective_causal(s)["value"]
        candidates.append((val, causal_residual(s, instance), s, label))

    # W2 constant, decoder output drawn from y alone
    pyv = np.einsum("uxy,uxyv->yv", wts, tv)
    b_y = conditional_table(pyv, 1)
    if np.max(np.abs(b_y[None, None] - tv) * (wts[..., None] > 0)) <= FEASIBLE_RESIDUAL and w2 >= 1:
        c = np.ones((nu, nx, 1))
        rep = _inner_w1(instance, c, w1, opts)
        consider(c, b_y[:, None, :], rep.certificate.table, "w2-constant")

    # W2 = V when the target output ignores y
    if not instance.depends_on_y(FEASIBLE_RESIDUAL * 1e-3) and w2 >= nv:
        ux = wts.sum(axis=2)
        qv = np.einsum("uxy,uxyv->uxv", wts, tv)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(ux[..., None] > 0, qv / np.where(ux > 0, ux, 1.0)[..., None], 1.0 / nv)
        b = np.broadcast_to(np.eye(nv)[None], (ny, nv, nv)).copy()
        rep = _inner_w1(instance, c, w1, opts)
        consider(c, b, rep.certificate.table, "w2-equals-v")

    # W2 = (U, X): always consistent, W1 useless
    if w2 >= nu * nx:
        c = np.zeros((nu, nx, nu * nx))
        b = np.full((ny, nu * nx, nv), 1.0 / nv)
        for u in range(nu):
            for x in range(nx):
                c[u, x, u * nx + x] = 1.0
                b[:, u * nx + x, :] = tv[u, x]
        r = np.ones((nu, nx, nu * nx, 1))
        consider(c, b, r, "w2-source-input")

    for i in range(opts.penalty_restarts):
        rng = np.random.default_rng([opts.seed, 1_000_003, i])
        a, b, res = _penalty_search(instance, w1, w2, opts, rng)
        a2 = a.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(a2[:, :, None, :] > 0, a / np.where(a2 > 0, a2, 1.0)[:, :, None, :],
                         1.0 / w1)
        r = np.transpose(r, (0, 1, 3, 2))
        if res <= FEASIBLE_RESIDUAL:
            rep = _inner_w1(instance, a2, w1, opts, init=r)
            r = rep.certificate.table
        consider(a2, b, r, "penalty")

    feasible = [c for c in candidates if c[1] <= FEASIBLE_RESIDUAL]
    upper = causal_upper_bound(instance)
    lower = -entropy_table(instance.source.table) if w2 >= nu * nx else None
    if feasible:
        val, res, s, _ = max(feasible, key=lambda t: t[0])
        verdict = _verdict(val, upper)
    else:
        val, res, s, _ = min(candidates, key=lambda t: t[1]) if candidates else (
            float("-inf"), float("inf"), None, "")
        verdict = Verdict.NOT_ACHIEVABLE if upper < 0 else Verdict.UNDETERMINED
    return ConstraintReport(
        value=float(val), certificate=s, lower_bound=lower, upper_bound=upper,
        verdict=verdict, restarts_used=len(candidates), iterations=0, residual=res)
