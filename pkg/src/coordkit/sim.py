"""Monte-Carlo simulation of block-Markov coordination codes.

Three schemes are available:

* ``strict``: the decoder output of block b+1 is a codeword V^n(m) whose
  index is carried, together with a refinement index l, by the auxiliary
  codeword W^n(m, l) of block b.
* ``causal``: W2 takes the role of V and W1 the role of W; the decoder draws
  its output symbol by symbol from Q(v|y,w2).
* ``zero_capacity``: V^n is common randomness and X is drawn from Q(x|u,v).

Codebooks come in two flavours.  ``explicit`` books are materialized in
chunks from the configuration seed and scanned exhaustively.  ``virtual``
books are never stored: codewords are i.i.d., so the index of the first
codeword that is jointly typical with a given context is geometric with a
success probability that is computed exactly, and the matching codeword is
then drawn from its conditional law given typicality.  This reproduces the
random-coding ensemble at block lengths where explicit books would need far
more than 2^20 codewords.  Codewords that failed one search are treated as
fresh in later searches, and each block draws its own books.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binom

from .constraint import (AuxKernelW, CausalInstance, CausalStructure, StrictInstance,
                         strict_joint)
from .errors import ConfigurationError, InfeasibleConfigurationError, InstanceFormatError
from .prob import (FiniteDist, SymbolBlock, conditional_table, is_typical, mutual_information,
                   typical_counts)
from .region import channel_capacity

EVENTS = ("source", "cover_v", "cover_w", "packing", "init")
MODES = ("strict", "causal", "zero_capacity")


@dataclass(frozen=True)
class CodeConfig:
    n: int
    B: int = 12
    delta: float = 0.05
    eps_typ: float = 0.1
    seed: int = 0
    codeword_cap: int = 2 ** 20
    virtual: bool = False
    chunk: int = 1024

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"block length n must be a positive integer, got {self.n!r}")
        if int(self.B) != self.B or self.B < 3:
            raise ConfigurationError(f"number of blocks B must be >= 3, got {self.B!r}")
        if not self.delta > 0:
            raise ConfigurationError(f"delta must be positive, got {self.delta!r}")
        if not self.eps_typ > 0:
            raise ConfigurationError(f"eps_typ must be positive, got {self.eps_typ!r}")
        if self.codeword_cap < 1 or self.chunk < 1:
            raise ConfigurationError("codeword_cap and chunk must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


# ---------------------------------------------------------------------------
# rates


def rates_from_information(i_vu: float, i_wuv: float, i_wyv: float, delta: float,
                           capacity: Optional[float] = None) -> dict:
    """Rates R = I(V;U)+delta and R_L = I(W;U,V)+delta and their feasibility."""
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive, got {delta!r}")
    R = i_vu + delta
    RL = i_wuv + delta
    slack = i_wyv - delta - (R + RL)
    violated = None
    if slack < -1e-12:
        violated = (f"R + R_L = {R + RL:.6g} exceeds I(W;Y,V) - delta = {i_wyv - delta:.6g}")
    init_slack = None
    if capacity is not None:
        init_slack = capacity - R - 2 * delta
        if violated is None and init_slack < -1e-12:
            violated = (f"initial block needs capacity - R - 2*delta >= 0, "
                        f"got {init_slack:.6g}")
    return {"R": R, "R_L": RL, "feasible": violated is None, "slack": slack,
            "init_slack": init_slack, "violated": violated}


def plan_rates(instance, aux, delta: float) -> dict:
    """Rates for a strict certificate (AuxKernelW) or a causal structure."""
    if isinstance(aux, CausalStructure):
        j = aux.joint()
        info = (mutual_information(j, "W2", "U"), mutual_information(j, "W1", ("U", "W2")),
                mutual_information(j, "W1", ("Y", "W2")))
        cap = channel_capacity(aux.channel)["capacity"]
    else:
        j = strict_joint(instance, aux)
        info = (mutual_information(j, "V", "U"), mutual_information(j, "W", ("U", "V")),
                mutual_information(j, "W", ("Y", "V")))
        cap = channel_capacity(instance.channel)["capacity"]
    out = rates_from_information(*info, delta, capacity=cap)
    out["capacity"] = cap
    return out


def book_sizes(n: int, R: float, RL: float) -> tuple[int, int]:
    return math.ceil(2.0 ** (n * R)), math.ceil(2.0 ** (n * RL))


# ---------------------------------------------------------------------------
# scheme tables


@dataclass
class _Scheme:
    """Everything the simulator needs, with A in the role of V (or W2) and
    Bx in the role of W (or W1)."""

    pu: np.ndarray
    T: np.ndarray
    qa: np.ndarray                  # (A,)
    qb: np.ndarray                  # (Bx,)
    q_ua: np.ndarray                # (U, A)
    q_uab: np.ndarray               # (U, A, Bx)
    q_yab: np.ndarray               # (Y, A, Bx)
    x_given_uab: np.ndarray         # (U, A, Bx, X)
    x_given_ua: np.ndarray          # (U, A, X)
    v_given_ya: Optional[np.ndarray]  # (Y, A, V) or None when V = A
    target: np.ndarray              # (U, X, Y, V)
    px_init: np.ndarray             # (X,)
    rates: dict


def _strict_scheme(instance: StrictInstance, aux: AuxKernelW, rates: dict) -> _Scheme:
    j = strict_joint(instance, aux).reorder(("U", "V", "W", "X", "Y")).table
    uvwx = j.sum(axis=4)
    uvx = uvwx.sum(axis=2)
    cap = channel_capacity(instance.channel)
    return _Scheme(
        pu=instance.source.table, T=instance.channel.table,
        qa=j.sum(axis=(0, 2, 3, 4)), qb=j.sum(axis=(0, 1, 3, 4)),
        q_ua=j.sum(axis=(2, 3, 4)), q_uab=j.sum(axis=(3, 4)),
        q_yab=np.transpose(j.sum(axis=(0, 3)), (2, 0, 1)),
        x_given_uab=conditional_table(uvwx, 3), x_given_ua=conditional_table(uvx, 2),
        v_given_ya=None, target=instance.joint().table,
        px_init=cap["argmax_input"].table, rates=rates)


def _causal_scheme(structure: CausalStructure, rates: dict,
                   target: Optional[np.ndarray]) -> _Scheme:
    j = structure.joint().reorder(("U", "W2", "W1", "X", "Y", "V")).table
    u21x = j.sum(axis=(4, 5))
    u2x = u21x.sum(axis=2)
    y2v = np.transpose(j.sum(axis=(0, 2, 3)), (1, 0, 2))
    cap = channel_capacity(structure.channel)
    induced = j.sum(axis=(1, 2))
    return _Scheme(
        pu=structure.source.table, T=structure.channel.table,
        qa=j.sum(axis=(0, 2, 3, 4, 5)), qb=j.sum(axis=(0, 1, 3, 4, 5)),
        q_ua=j.sum(axis=(2, 3, 4, 5)), q_uab=j.sum(axis=(3, 4, 5)),
        q_yab=np.transpose(j.sum(axis=(0, 3, 5)), (2, 0, 1)),
        x_given_uab=conditional_table(u21x, 3), x_given_ua=conditional_table(u2x, 2),
        v_given_ya=conditional_table(y2v, 2),
        target=induced if target is None else target,
        px_init=cap["argmax_input"].table, rates=rates)


# ---------------------------------------------------------------------------
# sampling helpers


def _draw(rng: np.random.Generator, cond: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Draw one symbol per position from rows ``cond[index]`` by inverse CDF."""
    cum = np.cumsum(cond, axis=-1)[index]
    u = rng.random(cum.shape[0])[:, None]
    out = (cum < u * cum[:, -1:]).sum(axis=1)
    return np.minimum(out, cond.shape[-1] - 1)


def _iid(rng: np.random.Generator, p: np.ndarray, shape) -> np.ndarray:
    cum = np.cumsum(p)
    u = rng.random(shape)
    return np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), len(p) - 1)


def _box(n: int, q: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer count bounds implementing |N - n q| <= eps n q cell by cell."""
    nq = n * q
    lo = np.ceil(nq * (1.0 - eps) - 1e-9).astype(np.int64)
    hi = np.floor(nq * (1.0 + eps) + 1e-9).astype(np.int64)
    lo = np.maximum(lo, 0)
    zero = q <= 0
    lo[zero] = 0
    hi[zero] = 0
    return lo, hi


def _typical_rows(counts: np.ndarray, n: int, q: np.ndarray, eps: float) -> np.ndarray:
    lo, hi = _box(n, q.ravel(), eps)
    return np.all((counts >= lo) & (counts <= hi), axis=1)


# ---------------------------------------------------------------------------
# codebooks


class ExplicitBook:
    """Codebook of ``size`` i.i.d. sequences, generated in chunks from (seed, book_id, chunk)."""

    def __init__(self, p: np.ndarray, n: int, size: int, seed: int, book_id: int, chunk: int):
        self.p = np.asarray(p, dtype=float)
        self.n, self.size = n, int(size)
        self.seed, self.book_id, self.chunk_size = int(seed), book_id, chunk
        self._cache: dict[int, np.ndarray] = {}

    def chunk(self, c: int) -> np.ndarray:
        if c not in self._cache:
            rows = min(self.chunk_size, self.size - c * self.chunk_size)
            rng = np.random.default_rng([self.seed, self.book_id, c])
            self._cache[c] = _iid(rng, self.p, (rows, self.n)).astype(np.int16)
        return self._cache[c]

    def get(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise IndexError(f"codeword index {i} outside book of size {self.size}")
        return self.chunk(i // self.chunk_size)[i % self.chunk_size].astype(np.int64)

    def all(self) -> np.ndarray:
        nchunks = -(-self.size // self.chunk_size)
        return np.concatenate([self.chunk(c) for c in range(nchunks)]).astype(np.int64)

    def first_typical(self, ctx: np.ndarray, q_cw: np.ndarray, eps: float,
                      lo: int, hi: int) -> Optional[int]:
        """Lowest index in [lo, hi) whose codeword is jointly typical with ``ctx``."""
        ncell = q_cw.size
        nw = q_cw.shape[1]
        cs = self.chunk_size
        for c in range(lo // cs, -(-hi // cs)):
            block = self.chunk(c)
            start = c * cs
            a, b = max(lo, start) - start, min(hi, start + len(block)) - start
            if a >= b:
                continue
            rows = block[a:b].astype(np.int64)
            flat = ctx[None, :] * nw + rows + (np.arange(b - a) * ncell)[:, None]
            counts = np.bincount(flat.ravel(), minlength=(b - a) * ncell).reshape(b - a, ncell)
            ok = np.flatnonzero(_typical_rows(counts, self.n, q_cw, eps))
            if ok.size:
                return start + a + int(ok[0])
        return None


class _BoxLaw:
    """Multinomial(m, p) counts restricted to an integer box, via a chain of binomials."""

    def __init__(self, m: int, p: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        self.m, self.lo, self.hi = m, lo, hi
        k = len(p)
        tail = np.cumsum(p[::-1])[::-1]
        with np.errstate(invalid="ignore", divide="ignore"):
            self.cond = np.where(tail > 0, p / np.where(tail > 0, tail, 1.0), 0.0)
        self.cond = np.clip(self.cond, 0.0, 1.0)
        r = np.arange(m + 1)
        F = [None] * k
        last = ((r >= lo[-1]) & (r <= hi[-1])).astype(float)
        if tail[-1] <= 0:
            last = last * (r == 0)
        F[-1] = last
        for j in range(k - 2, -1, -1):
            ks = np.arange(lo[j], hi[j] + 1)
            if ks.size == 0:
                F[j] = np.zeros(m + 1)
                continue
            pm = binom.pmf(ks[None, :], r[:, None], self.cond[j])
            rem = r[:, None] - ks[None, :]
            nxt = np.where(rem >= 0, F[j + 1][np.clip(rem, 0, m)], 0.0)
            F[j] = (pm * nxt).sum(axis=1)
        self.F = F

    @property
    def prob(self) -> float:
        return float(min(1.0, self.F[0][self.m]))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = len(self.lo)
        out = np.zeros(k, dtype=np.int64)
        r = self.m
        for j in range(k - 1):
            ks = np.arange(self.lo[j], min(self.hi[j], r) + 1)
            w = binom.pmf(ks, r, self.cond[j]) * self.F[j + 1][r - ks]
            w = w / w.sum()
            out[j] = ks[rng.choice(len(ks), p=w)]
            r -= out[j]
        out[-1] = r
        return out


class VirtualBook:
    """Lazily sampled i.i.d. codebook equivalent in law to an explicit one."""

    def __init__(self, p: np.ndarray, n: int, size, rng: np.random.Generator):
        self.p = np.asarray(p, dtype=float)
        self.n, self.size, self.rng = n, size, rng
        self.known: dict[int, np.ndarray] = {}

    def get(self, i: int) -> np.ndarray:
        if i not in self.known:
            self.known[i] = _iid(self.rng, self.p, self.n).astype(np.int64)
        return self.known[i]

    def _laws(self, ctx: np.ndarray, q_cw: np.ndarray, eps: float):
        nc, nw = q_cw.shape
        counts = np.bincount(ctx, minlength=nc)
        laws = []
        for c in range(nc):
            lo, hi = _box(self.n, q_cw[c], eps)
            laws.append(_BoxLaw(int(counts[c]), self.p, lo, hi))
        return laws

    def first_typical(self, ctx: np.ndarray, q_cw: np.ndarray, eps: float,
                      lo: int, hi: int) -> Optional[int]:
        laws = self._laws(ctx, q_cw, eps)
        probs = [law.prob for law in laws]
        p = 0.0 if min(probs) <= 0 else math.exp(sum(math.log(x) for x in probs))
        nw = q_cw.shape[1]
        pts = sorted(i for i in self.known if lo <= i < hi)
        start = lo
        for stop in pts + [hi]:
            seg = stop - start
            if seg > 0 and p > 0:
                if p >= 1.0:
                    k = 0
                else:
                    v = 1.0 - self.rng.random()
                    k = math.floor(math.log(v) / math.log1p(-p))
                if k < seg:
                    idx = start + int(k)
                    self.known[idx] = self._conditional(ctx, laws, nw)
                    return idx
            if stop < hi:
                word = self.known[stop]
                cnt = np.bincount(ctx * nw + word, minlength=q_cw.size)
                if typical_counts(cnt, self.n, q_cw.ravel(), eps) and np.all(
                        cnt[q_cw.ravel() <= 0] == 0):
                    return stop
            start = stop + 1
        return None

    def _conditional(self, ctx, laws, nw) -> np.ndarray:
        word = np.empty(self.n, dtype=np.int64)
        for c, law in enumerate(laws):
            pos = np.flatnonzero(ctx == c)
            if pos.size == 0:
                continue
            cnt = law.sample(self.rng)
            word[pos] = self.rng.permutation(np.repeat(np.arange(nw), cnt))
        return word


@dataclass
class Codebooks:
    """Shared books of one explicit code."""

    v_book: ExplicitBook
    w_book: ExplicitBook
    init_book: ExplicitBook
    M: int
    M_L: int


def _check_cap(n: int, rates: dict, cap: int) -> None:
    need_log = max(math.ceil(n * rates["R"]), math.ceil(n * (rates["R"] + rates["R_L"])))
    need = 2 ** math.ceil(n * rates["R"]) + 2 ** math.ceil(n * (rates["R"] + rates["R_L"]))
    if need > cap:
        raise InfeasibleConfigurationError(
            f"explicit codebooks need about 2^{need_log} codewords ({need}), "
            f"above codeword_cap={cap}; raise the cap or use virtual books")


def _require_feasible(rates: dict) -> None:
    if not rates["feasible"]:
        raise InfeasibleConfigurationError(f"rate plan refused: {rates['violated']}")


def build_codebooks(instance, aux, config: CodeConfig) -> Codebooks:
    """Materializable books for the strict (or causal) scheme from ``config.seed``."""
    rates = plan_rates(instance, aux, config.delta)
    _require_feasible(rates)
    _check_cap(config.n, rates, config.codeword_cap)
    scheme = (_causal_scheme(aux, rates, None) if isinstance(aux, CausalStructure)
              else _strict_scheme(instance, aux, rates))
    M, ML = book_sizes(config.n, rates["R"], rates["R_L"])
    return Codebooks(
        v_book=ExplicitBook(scheme.qa, config.n, M, config.seed, 1, config.chunk),
        w_book=ExplicitBook(scheme.qb, config.n, M * ML, config.seed, 2, config.chunk),
        init_book=ExplicitBook(scheme.px_init, config.n, M, config.seed, 3, config.chunk),
        M=M, M_L=ML)


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialResult:
    mode: str
    n: int
    B: int
    seed: int
    block_counts: np.ndarray          # (B, U, X, Y, V) integer counts
    events: dict                      # event name -> bool array over blocks
    block_typical: np.ndarray         # bool array over blocks
    q_full: FiniteDist
    q_trunc: FiniteDist
    tv_full: float
    tv_trunc: float
    success: bool
    eps_typ: float

    def mixing_identity_holds(self) -> bool:
        """Full counts equal the truncated counts plus the first and last blocks, exactly."""
        total = self.block_counts.sum(axis=0)
        trunc = self.block_counts[1:-1].sum(axis=0)
        return bool(np.array_equal(total, trunc + self.block_counts[0] + self.block_counts[-1]))

    def concatenation_holds(self, target: np.ndarray) -> bool:
        """All truncated blocks typical implies their concatenation is typical."""
        inner = self.block_typical[1:-1]
        if not inner.all():
            return True
        counts = self.block_counts[1:-1].sum(axis=0)
        return typical_counts(counts, self.n * (self.B - 2), target, self.eps_typ)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.block_counts, dtype=np.int64).tobytes())
        for name in EVENTS:
            h.update(np.ascontiguousarray(self.events[name]).tobytes())
        h.update(np.ascontiguousarray(self.block_typical).tobytes())
        h.update(repr((self.mode, self.n, self.B, self.seed, self.tv_full, self.tv_trunc)).encode())
        return h.hexdigest()


def _finish(mode, config, counts, events, target) -> TrialResult:
    n, B = config.n, config.B
    total = counts.sum(axis=0)
    trunc = counts[1:-1].sum(axis=0)
    # exact rationals: counts are integers and the denominators are n·B, n·(B-2)
    q_full = FiniteDist(("U", "X", "Y", "V"), total / (n * B))
    q_trunc = FiniteDist(("U", "X", "Y", "V"), trunc / (n * (B - 2)))
    tv_full = float(min(1.0, 0.5 * np.abs(q_full.table - target).sum()))
    tv_trunc = float(min(1.0, 0.5 * np.abs(q_trunc.table - target).sum()))
    typ = np.array([typical_counts(c, n, target, config.eps_typ) for c in counts])
    return TrialResult(mode, n, B, int(config.seed), counts, events, typ, q_full, q_trunc,
                       tv_full, tv_trunc, tv_full <= config.eps_typ, config.eps_typ)


def _block_counts(u, x, y, v, shape) -> np.ndarray:
    nu, nx, ny, nv = shape
    flat = ((u * nx + x) * ny + y) * nv + v
    return np.bincount(flat, minlength=nu * nx * ny * nv).reshape(shape)


def _run_zero_capacity(instance: StrictInstance, config: CodeConfig) -> TrialResult:
    n, B = config.n, config.B
    rng = np.random.default_rng([int(config.seed), 11])
    q = instance.target.table
    qv = (instance.source.table[:, None, None] * q).sum(axis=(0, 1))
    x_given_uv = conditional_table(np.transpose(instance.source.table[:, None, None] * q,
                                                (0, 2, 1)), 2)
    nu, nx, nv = q.shape
    ny = instance.channel.table.shape[1]
    counts = np.zeros((B, nu, nx, ny, nv), dtype=np.int64)
    events = {e: np.zeros(B, dtype=bool) for e in EVENTS}
    for b in range(B):
        u = _iid(rng, instance.source.table, n)
        v = _iid(rng, qv, n)           # shared in advance by both terminals
        x = _draw(rng, x_given_uv, (u, v))
        y = _draw(rng, instance.channel.table, x)
        counts[b] = _block_counts(u, x, y, v, (nu, nx, ny, nv))
        events["source"][b] = not typical_counts(np.bincount(u, minlength=nu), n,
                                                 instance.source.table, config.eps_typ)
    return _finish("zero_capacity", config, counts, events, instance.joint().table)


def _run_block_markov(s: _Scheme, config: CodeConfig, mode: str, books) -> TrialResult:
    n, B, eps = config.n, config.B, config.eps_typ
    rng = np.random.default_rng([int(config.seed), 7])
    nu, na = s.q_ua.shape
    nb = s.qb.shape[0]
    nx, ny = s.T.shape
    nv = s.target.shape[3]
    M, ML = book_sizes(n, s.rates["R"], s.rates["R_L"])
    a_book, b_book, init_book = books(M, ML)
    events = {e: np.zeros(B, dtype=bool) for e in EVENTS}
    counts = np.zeros((B, nu, nx, ny, nv), dtype=np.int64)

    u = _iid(rng, s.pu, (B, n))
    for b in range(B):
        events["source"][b] = not typical_counts(np.bincount(u[b], minlength=nu), n, s.pu, eps)

    def cover_a(b):
        # index m with (U_b, A(m)) typical; block b is 0-based
        m = a_book(b).first_typical(u[b], s.q_ua, eps, 0, M)
        if m is None:
            events["cover_v"][b] = True
            m = 0
        return m

    def output(y, a):
        if s.v_given_ya is None:
            return a
        return _draw(rng, s.v_given_ya.reshape(ny * na, nv), y * na + a)

    # first block: send the index of the second block's codeword through the channel
    m_next = cover_a(1)
    x = init_book.get(m_next)
    y = _draw(rng, s.T, x)
    q_xy = (s.px_init[:, None] * s.T).T       # context Y, codeword X
    m_hat = init_book.first_typical(y, q_xy, eps, 0, M)
    if m_hat is None:
        m_hat = 0
    events["init"][0] = m_hat != m_next
    counts[0] = _block_counts(u[0], x, y, np.zeros(n, dtype=np.int64), (nu, nx, ny, nv))
    enc_a = a_book(1).get(m_next)
    dec_a = a_book(1).get(m_hat)
    m_hat_cur = m_hat

    for b in range(1, B - 1):
        m_next = cover_a(b + 1)
        ctx = u[b] * na + enc_a
        l = b_book(b).first_typical(ctx, s.q_uab.reshape(nu * na, nb), eps,
                                    m_next * ML, (m_next + 1) * ML)
        if l is None:
            events["cover_w"][b] = True
            l = m_next * ML
        wb = b_book(b).get(l)
        x = _draw(rng, s.x_given_uab.reshape(nu * na * nb, nx), (u[b] * na + enc_a) * nb + wb)
        y = _draw(rng, s.T, x)
        v = output(y, dec_a)
        counts[b] = _block_counts(u[b], x, y, v, (nu, nx, ny, nv))
        found = b_book(b).first_typical(y * na + dec_a, s.q_yab.reshape(ny * na, nb), eps,
                                        0, M * ML)
        if found is None:
            events["packing"][b] = True
            m_dec = m_hat_cur
        else:
            events["packing"][b] = found != l
            m_dec = found // ML
        enc_a = a_book(b + 1).get(m_next)
        dec_a = a_book(b + 1).get(m_dec)
        m_hat_cur = m_dec

    b = B - 1
    x = _draw(rng, s.x_given_ua.reshape(nu * na, nx), u[b] * na + enc_a)
    y = _draw(rng, s.T, x)
    v = output(y, dec_a)
    counts[b] = _block_counts(u[b], x, y, v, (nu, nx, ny, nv))
    return _finish(mode, config, counts, events, s.target)


def run_trial(instance, aux, config: CodeConfig, mode: str = "strict",
              codebooks: Optional[Codebooks] = None) -> TrialResult:
    """Simulate one realization of n·B symbols.

    Coding errors are recorded as per-block event flags and never raised.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; choose one of {MODES}")
    if mode == "zero_capacity":
        if not isinstance(instance, StrictInstance):
            raise InstanceFormatError("zero_capacity mode needs a StrictInstance")
        return _run_zero_capacity(instance, config)
    if mode == "causal":
        if not isinstance(aux, CausalStructure):
            raise InstanceFormatError("causal mode needs a CausalStructure certificate")
        rates = plan_rates(None, aux, config.delta)
        target = instance.joint().table if isinstance(instance, CausalInstance) else None
        scheme = _causal_scheme(aux, rates, target)
    else:
        if not isinstance(aux, AuxKernelW):
            raise InstanceFormatError("strict mode needs an AuxKernelW certificate")
        rates = plan_rates(instance, aux, config.delta)
        scheme = _strict_scheme(instance, aux, rates)
    _require_feasible(rates)

    if config.virtual:
        base = [int(config.seed), 5]

        def books(M, ML):
            cache = {}

            def get(kind, b, p, size):
                key = (kind, b)
                if key not in cache:
                    cache[key] = VirtualBook(p, config.n, size,
                                             np.random.default_rng(base + [kind, b]))
                return cache[key]
            init = VirtualBook(scheme.px_init, config.n, M, np.random.default_rng(base + [3, 0]))
            return (lambda b: get(1, b, scheme.qa, M), lambda b: get(2, b, scheme.qb, M * ML),
                    init)
    else:
        if codebooks is None:
            _check_cap(config.n, rates, config.codeword_cap)
            M, ML = book_sizes(config.n, rates["R"], rates["R_L"])
            codebooks = Codebooks(
                ExplicitBook(scheme.qa, config.n, M, config.seed, 1, config.chunk),
                ExplicitBook(scheme.qb, config.n, M * ML, config.seed, 2, config.chunk),
                ExplicitBook(scheme.px_init, config.n, M, config.seed, 3, config.chunk), M, ML)
        cb = codebooks

        def books(M, ML):
            return (lambda b: cb.v_book, lambda b: cb.w_book, cb.init_book)
    return _run_block_markov(scheme, config, mode, books)


def trial_seed(seed: int, trial: int) -> int:
    """Per-trial seed derived from (seed, trial) independent of execution order."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, np.uint64)[0])


def monte_carlo(instance, aux, config: CodeConfig, trials: int, mode: str = "strict",
                keep: bool = False) -> dict:
    """Independent trials; error probability is the fraction with tv_full > eps_typ."""
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    results = []
    for t in range(trials):
        cfg = config if trials == 1 else replace(config, seed=trial_seed(config.seed, t))
        results.append(run_trial(instance, aux, cfg, mode))
    pe = float(np.mean([not r.success for r in results]))
    rates = {}
    for e in EVENTS:
        if e == "init":
            rates[e] = float(np.mean([r.events[e][0] for r in results]))
        elif e == "source":
            rates[e] = float(np.mean([r.events[e].mean() for r in results]))
        else:
            # events only occur in the blocks that run the corresponding search
            sl = slice(1, config.B) if e == "cover_v" else slice(1, config.B - 1)
            rates[e] = float(np.mean([r.events[e][sl].mean() for r in results]))
    out = {
        "n": config.n, "B": config.B, "delta": config.delta, "eps_typ": config.eps_typ,
        "trials": trials, "pe": pe,
        "mean_tv_full": float(np.mean([r.tv_full for r in results])),
        "mean_tv_trunc": float(np.mean([r.tv_trunc for r in results])),
        "event_rates": rates,
        "ci_halfwidth": 1.96 * math.sqrt(pe * (1.0 - pe) / trials),
    }
    if keep:
        out["results"] = results
    return out


def concatenation_check(blocks: Sequence[SymbolBlock], target: FiniteDist, eps: float) -> bool:
    """Typicality of the concatenation; asserts that typical blocks concatenate to a typical block."""
    if not blocks:
        raise InstanceFormatError("no blocks to concatenate")
    lengths = {b.n for b in blocks}
    if len(lengths) != 1:
        raise InstanceFormatError(f"blocks have different lengths {sorted(lengths)}")
    all_typical = all(is_typical(b, target, eps) for b in blocks)
    joined = is_typical(SymbolBlock.concatenate(list(blocks)), target, eps)
    if all_typical and not joined:
        raise AssertionError("typical blocks produced an atypical concatenation")
    return joined
