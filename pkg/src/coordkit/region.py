"""Achievable-target membership, utilities over the achievable set, and the
binary distortion-cost region."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import binary
from .constraint import (AuxKernelW, ConstraintReport, StrictInstance, StrictOptions,
                         Verdict, _StrictProblem, analytic_bounds, maximize_strict,
                         objective_strict, time_sharing_certificate, _project_simplex)
from .errors import ConfigurationError, InstanceFormatError
from .prob import FiniteDist, Kernel, mutual_information

ZERO_TOL = 1e-9


@dataclass(frozen=True)
class UtilitySpec:
    """Utility table phi(u,x,y,v), optionally with distortion d(u,v) and cost c(x)."""

    phi: np.ndarray
    distortion: Optional[np.ndarray] = None
    cost: Optional[np.ndarray] = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 4:
            raise InstanceFormatError(f"utility must be a table over (U,X,Y,V), got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise InstanceFormatError("utility table has non-finite entries")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        for name in ("distortion", "cost"):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.array(val, dtype=float)
            if not np.all(np.isfinite(val)):
                raise InstanceFormatError(f"{name} table has non-finite entries")
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.distortion is not None and self.distortion.shape != (phi.shape[0], phi.shape[3]):
            raise InstanceFormatError("distortion must be a table over (U,V)")
        if self.cost is not None and self.cost.shape != (phi.shape[1],):
            raise InstanceFormatError("cost must be a table over X")

    @classmethod
    def from_distortion_cost(cls, distortion, cost, ny: int, weight: float = 1.0) -> UtilitySpec:
        """phi = -(d(u,v) + weight·c(x)), declared together with its parts."""
        d = np.asarray(distortion, dtype=float)
        c = np.asarray(cost, dtype=float)
        phi = -(d[:, None, None, :] + weight * c[None, :, None, None])
        phi = np.broadcast_to(phi, (d.shape[0], c.shape[0], ny, d.shape[1]))
        return cls(phi, d, c)


def channel_capacity(channel: Kernel, tol: float = 1e-10, max_iters: int = 100_000) -> dict:
    """Blahut-Arimoto iteration.

    Stops once the standard upper and lower capacity estimates are within
    ``tol``.  Returns the mutual information of the final input law, which is
    an achievable rate, and that input law.
    """
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol!r}")
    T = channel.table if isinstance(channel, Kernel) else np.asarray(channel, dtype=float)
    nx = T.shape[0]
    p = np.full(nx, 1.0 / nx)
    logT = np.log2(np.where(T > 0, T, 1.0))
    for _ in range(max_iters):
        q = p @ T
        logq = np.log2(np.where(q > 0, q, 1.0))
        d = np.sum(T * (logT - logq[None, :]), axis=1)
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower < tol:
            break
        p = p * np.exp2(d - upper)
        p /= p.sum()
    cap = max(lower, 0.0)
    if cap < 1e-15:
        cap = 0.0
    return {"capacity": cap, "argmax_input": FiniteDist(("X",), p), "gap": upper - lower}


def membership(instance: StrictInstance, opts: StrictOptions | None = None) -> dict:
    """Three-valued achievability of a strict target.

    At zero capacity the target is achievable exactly when U and V are
    independent; otherwise the verdict comes from the certified constraint.
    """
    cap = channel_capacity(instance.channel)["capacity"]
    if cap <= ZERO_TOL:
        iuv = mutual_information(instance.joint(), "U", "V")
        verdict = Verdict.ACHIEVABLE if iuv <= ZERO_TOL else Verdict.NOT_ACHIEVABLE
        bounds = analytic_bounds(instance)
        report = None
        if verdict is Verdict.ACHIEVABLE:
            report = maximize_strict(instance, opts)
        return {"verdict": verdict, "capacity": cap, "report": report,
                "mutual_information_uv": iuv, "upper_bound": bounds["upper"]}
    report = maximize_strict(instance, opts)
    return {"verdict": report.verdict, "capacity": cap, "report": report}


def expected_utility(target: Kernel, source: FiniteDist, channel: Kernel,
                     util: UtilitySpec) -> float:
    """E[phi(U,X,Y,V)] under P(u)·Q(x,v|u)·T(y|x)."""
    q = target.table
    if util.phi.shape != (q.shape[0], q.shape[1], channel.table.shape[1], q.shape[2]):
        raise InstanceFormatError(
            f"utility shape {util.phi.shape} disagrees with instance alphabets")
    m = source.table[:, None, None] * q
    return float(np.einsum("uxv,xy,uxyv->", m, channel.table, util.phi))


# ---------------------------------------------------------------------------
# one-parameter families


@dataclass(frozen=True)
class FamilySpec:
    """One-parameter family of targets t -> Q_t(x,v|u) on [lo, hi].

    family_id is one of ``coordination_gamma`` (uses t = gamma),
    ``distortion_cost_alpha_beta`` (t = beta with ``alpha`` fixed, or
    t = alpha with ``beta`` fixed) and ``user_linear`` (linear interpolation
    between two endpoint kernels, t in [0, 1]).
    """

    family_id: str
    lo: float = 0.0
    hi: float = 1.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    endpoints: tuple = ()
    utility: Optional[UtilitySpec] = None

    def __post_init__(self):
        if self.family_id not in ("coordination_gamma", "distortion_cost_alpha_beta",
                                  "user_linear"):
            raise ConfigurationError(f"unknown family {self.family_id!r}")
        if not self.lo <= self.hi:
            raise ConfigurationError(f"empty parameter interval [{self.lo}, {self.hi}]")
        if self.family_id != "user_linear" and not (0.0 <= self.lo and self.hi <= 1.0):
            raise ConfigurationError("parameter bounds must lie in [0, 1]")
        if self.family_id == "distortion_cost_alpha_beta" and (
                (self.alpha is None) == (self.beta is None)):
            raise ConfigurationError("fix exactly one of alpha and beta")
        if self.family_id == "user_linear":
            if len(self.endpoints) != 2:
                raise ConfigurationError("user_linear needs two endpoint kernels")
            if self.endpoints[0].table.shape != self.endpoints[1].table.shape:
                raise ConfigurationError("endpoint kernels have different shapes")
            if not (0.0 <= self.lo and self.hi <= 1.0):
                raise ConfigurationError("user_linear parameter must lie in [0, 1]")

    @classmethod
    def coordination(cls, lo: float = 0.25, hi: float = 1.0) -> FamilySpec:
        return cls("coordination_gamma", lo, hi, utility=UtilitySpec(binary.game_utility()))

    def kernel(self, t: float) -> Kernel:
        if not self.lo - 1e-15 <= t <= self.hi + 1e-15:
            raise ConfigurationError(f"parameter {t!r} outside [{self.lo}, {self.hi}]")
        t = min(max(t, self.lo), self.hi)
        if self.family_id == "coordination_gamma":
            return binary.game_target(t)
        if self.family_id == "distortion_cost_alpha_beta":
            if self.alpha is None:
                return binary.dc_target(t, self.beta)
            return binary.dc_target(self.alpha, t)
        k0, k1 = self.endpoints
        return Kernel(("U",), ("X", "V"), (1.0 - t) * k0.table + t * k1.table)


def boundary_bisection_family(family: FamilySpec, source: FiniteDist, channel: Kernel,
                              bound_selector: str = "lower",
                              opts: StrictOptions | None = None, tol: float = 1e-6) -> dict:
    """Locate where the selected constraint bound changes sign along the family.

    The returned parameter is the last point (walking away from the
    nonnegative end) where the bound is still nonnegative.  Without a sign
    change the endpoint with the larger bound is returned and ``crossed`` is
    False.
    """
    if bound_selector not in ("lower", "upper", "certified"):
        raise ConfigurationError(f"unknown bound selector {bound_selector!r}")

    def g(t):
        inst = StrictInstance(source, channel, family.kernel(t))
        if bound_selector == "certified":
            return maximize_strict(inst, opts).value
        return analytic_bounds(inst)[bound_selector]

    lo, hi = family.lo, family.hi
    glo, ghi = g(lo), g(hi)
    nonneg = lambda v: v >= -1e-12
    if nonneg(glo) == nonneg(ghi):
        t = lo if glo >= ghi else hi
        star, val, crossed = t, max(glo, ghi), False
    else:
        good, bad = (lo, hi) if nonneg(glo) else (hi, lo)
        gval = glo if nonneg(glo) else ghi
        while abs(bad - good) > tol:
            mid = 0.5 * (good + bad)
            gm = g(mid)
            if nonneg(gm):
                good, gval = mid, gm
            else:
                bad = mid
        star, val, crossed = good, gval, True
    out = {"param_star": float(star), "value_at_star": float(val), "crossed": crossed}
    if family.utility is not None:
        out["utility_at_star"] = expected_utility(family.kernel(star), source, channel,
                                                  family.utility)
    return out


# ---------------------------------------------------------------------------
# generic utility maximization


@dataclass(frozen=True)
class UtilityOptions:
    restarts: int = 2
    iters: int = 80
    step: float = 0.5
    fd_step: float = 1e-4
    margin: float = 1e-7
    recertify_every: int = 10
    seed: int = 0
    strict: StrictOptions = field(default_factory=lambda: StrictOptions(restarts=4, max_iters=200))

    def validate(self):
        if self.restarts < 0 or self.iters < 0:
            raise ConfigurationError("restarts and iters must be nonnegative")
        if not self.fd_step > 0 or not self.step > 0:
            raise ConfigurationError("fd_step and step must be positive")


def _strict_values(mass: np.ndarray, T: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Strict objective for a batch of masses (K,U,X,V) sharing one kernel r."""
    out = np.empty(mass.shape[0])
    for k in range(mass.shape[0]):
        out[k] = _StrictProblem(mass[k], T).value(r[None])[0]
    return out


class _UtilityProblem:
    def __init__(self, source, channel, util):
        self.pu = source.table
        self.T = channel.table
        self.grad_u = self.pu[:, None, None] * np.einsum("xy,uxyv->uxv", self.T, util.phi)

    def utility(self, q):
        return float((self.grad_u * q).sum())

    def constraint(self, q, r):
        return _strict_values((self.pu[:, None, None] * q)[None], self.T, r)[0]

    def constraint_grad(self, q, r, h):
        """Central differences along e_i - q_row, valid up to a per-row constant."""
        nu, nx, nv = q.shape
        n = nx * nv
        flat = q.reshape(nu, n)
        plus, minus, width = [], [], []
        for u in range(nu):
            for i in range(n):
                e = np.zeros(n)
                e[i] = 1.0
                hm = min(h, flat[u, i]) if flat[u, i] < h else h
                qp = flat.copy()
                qp[u] = (flat[u] + h * e) / (1.0 + h)
                qm = flat.copy()
                qm[u] = (flat[u] - hm * e) / (1.0 - hm)
                plus.append(qp)
                minus.append(qm)
                width.append(h + hm)
        batch = np.array(plus + minus).reshape(-1, nu, nx, nv)
        vals = _strict_values(self.pu[None, :, None, None] * batch, self.T, r)
        k = len(plus)
        g = (vals[:k] - vals[k:]) / np.array(width)
        return g.reshape(nu, nx, nv)


def _fallback_target(problem: _UtilityProblem, shape) -> np.ndarray:
    """V constant and X chosen per source letter: U and V independent."""
    nu, nx, nv = shape
    best, best_val = None, -np.inf
    for v in range(nv):
        q = np.zeros(shape)
        for u in range(nu):
            q[u, int(np.argmax(problem.grad_u[u, :, v])), v] = 1.0
        val = problem.utility(q)
        if val > best_val:
            best, best_val = q, val
    return best


def _separation_target(problem: _UtilityProblem, shape, channel: Kernel) -> np.ndarray:
    """Capacity-achieving X independent of U, V a deterministic function of U."""
    nu, nx, nv = shape
    px = channel_capacity(channel)["argmax_input"].table
    q = np.zeros(shape)
    for u in range(nu):
        score = px @ problem.grad_u[u]
        q[u, :, int(np.argmax(score))] = px
    return q


def max_utility_generic(source: FiniteDist, channel: Kernel, util: UtilitySpec,
                        opts: UtilityOptions | None = None) -> dict:
    """Best-effort maximum of the expected utility over certified-achievable targets.

    Projected gradient ascent on Q(x,v|u) with an exact penalty on the
    negative part of the constraint evaluated at a fixed auxiliary kernel.
    Holding the kernel fixed gives a valid lower bound on the constraint, so
    every iterate recorded as feasible is certified by that kernel.  The
    kernel is refreshed by the strict optimizer every few steps.
    """
    opts = opts or UtilityOptions()
    opts.validate()
    nu, nx, ny, nv = util.phi.shape
    if source.table.shape != (nu,) or channel.table.shape != (nx, ny):
        raise InstanceFormatError("utility alphabets disagree with source/channel")
    prob = _UtilityProblem(source, channel, util)
    shape = (nu, nx, nv)

    fallback = _fallback_target(prob, shape)
    seeds = [fallback, _separation_target(prob, shape, channel), np.full(shape, 1.0 / (nx * nv))]
    for i in range(opts.restarts):
        rng = np.random.default_rng([opts.seed, i])
        seeds.append(rng.dirichlet(np.ones(nx * nv), size=nu).reshape(shape))

    best_q, best_u, best_rep = None, -np.inf, None

    def certify(q, init=None):
        inst = StrictInstance(source, channel, Kernel(("U",), ("X", "V"), q))
        sopts = opts.strict if init is None else replace(opts.strict, init=(init,))
        return maximize_strict(inst, sopts)

    def record(q, rep):
        nonlocal best_q, best_u, best_rep
        val = prob.utility(q)
        if rep.verdict is Verdict.ACHIEVABLE and val > best_u + 1e-15:
            best_q, best_u, best_rep = q.copy(), val, rep

    for q0 in seeds:
        q = q0.copy()
        rep = certify(q)
        record(q, rep)
        r = rep.certificate.table
        mu = 1.0
        step = opts.step

        def penalized(qq):
            return prob.utility(qq) + mu * min(0.0, prob.constraint(qq, r) - opts.margin)

        F = penalized(q)
        for it in range(1, opts.iters + 1):
            c = prob.constraint(q, r)
            g = prob.grad_u.copy()
            if c - opts.margin < 0:
                g = g + mu * prob.constraint_grad(q, r, opts.fd_step)
            moved = False
            for _ in range(20):
                cand = _project_simplex((q + step * g).reshape(nu, -1)).reshape(shape)
                Fc = penalized(cand)
                if Fc > F:
                    q, F, moved = cand, Fc, True
                    step = min(step * 1.5, 10.0)
                    break
                step *= 0.5
            if moved and prob.constraint(q, r) >= 0.0:
                # feasible with the current kernel: certify with it directly
                inst = StrictInstance(source, channel, Kernel(("U",), ("X", "V"), q))
                aux = AuxKernelW(Kernel(("U", "X", "V"), ("W",), r))
                val = objective_strict(inst, aux)
                if val >= 0.0 and prob.utility(q) > best_u + 1e-15:
                    rep_q = replace(rep, value=val, certificate=aux, verdict=Verdict.ACHIEVABLE)
                    record(q, rep_q)
            if it % opts.recertify_every == 0 or not moved:
                rep = certify(q, init=r)
                record(q, rep)
                r = rep.certificate.table
                if rep.value < 0:
                    mu *= 2.0
                F = penalized(q)
                if not moved and step < 1e-12:
                    break

    used_fallback = best_q is None
    if used_fallback:
        best_q = fallback
        best_rep = certify(fallback)
        best_u = prob.utility(fallback)
    target = Kernel(("U",), ("X", "V"), best_q)
    return {"target_star": target, "utility": expected_utility(target, source, channel, util),
            "report": best_rep, "fallback": used_fallback}


def certified_mixture(inst1: StrictInstance, rep1: ConstraintReport,
                      inst2: StrictInstance, rep2: ConstraintReport, lam: float,
                      opts: StrictOptions | None = None) -> ConstraintReport:
    """Certified constraint of lam·Q1 + (1-lam)·Q2.

    Takes the better of a fresh maximization and the time-sharing kernel
    built from the two certificates; the latter guarantees at least
    lam·v1 + (1-lam)·v2.
    """
    mix_inst, ts_aux = time_sharing_certificate(inst1, rep1.certificate, inst2,
                                                rep2.certificate, lam)
    plain = maximize_strict(mix_inst, opts)
    ts_val = objective_strict(mix_inst, ts_aux)
    if ts_val > plain.value:
        return replace(plain, value=ts_val, certificate=ts_aux,
                       verdict=Verdict.ACHIEVABLE if ts_val >= 0 else plain.verdict)
    return plain


# ---------------------------------------------------------------------------
# distortion-cost grid


@dataclass
class RegionGrid:
    """Constraint values on an (alpha, beta) grid; rows are alpha (cost C*), columns beta (distortion D*)."""

    alphas: np.ndarray
    betas: np.ndarray
    constraint: np.ndarray
    achievable: np.ndarray
    p: float
    eps: float
    step: float

    def interval_rows(self) -> bool:
        """True when, for every fixed alpha, the achievable betas form one contiguous run."""
        for row in self.achievable:
            idx = np.flatnonzero(row)
            if idx.size and idx[-1] - idx[0] + 1 != idx.size:
                return False
        return True

    def rows(self):
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.betas):
                yield {"D": float(b), "C": float(a), "constraint": float(self.constraint[i, j]),
                       "achievable": bool(self.achievable[i, j])}


def _grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ConfigurationError(f"grid_step {step!r} must divide 1")
    return np.round(np.arange(n + 1) * step, 12)


def distortion_cost_region(p: float, eps: float, grid_step: float = 0.01) -> RegionGrid:
    """Binary source/channel distortion-cost trade-off: C* = P(X=0) = alpha, D* = P(U != V) = beta."""
    for name, val in (("p", p), ("eps", eps)):
        if not 0.0 <= val <= 1.0:
            raise ConfigurationError(f"{name}={val!r} outside [0, 1]")
    if not grid_step > 0:
        raise ConfigurationError(f"grid_step must be positive, got {grid_step!r}")
    alphas = _grid(grid_step)
    betas = _grid(grid_step)
    cons = np.array([[binary.dc_constraint(a, b, p, eps) for b in betas] for a in alphas])
    return RegionGrid(alphas, betas, cons, cons >= -1e-12, p, eps, grid_step)
