"""Finite-alphabet probability arithmetic.

Distributions are numpy tables whose dimensions are labelled by axis names
(``"U"``, ``"X"``, ``"Y"``, ``"V"``, ``"W"``, ...).  Axis order is part of a
table's identity; use :meth:`FiniteDist.reorder` to permute explicitly.

All information quantities are in bits with the convention 0 log 0 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InstanceFormatError

NORM_TOL = 1e-9


def _as_axes(axes) -> tuple[str, ...]:
    if isinstance(axes, str):
        return (axes,)
    return tuple(axes)


def _check_entries(table: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(table)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(table))[0])
        raise InstanceFormatError(f"{what}: non-finite entry at cell {idx}")
    if (table < 0).any():
        idx = tuple(int(i) for i in np.argwhere(table < 0)[0])
        raise InstanceFormatError(
            f"{what}: negative entry {table[idx]!r} at cell {idx}")


@dataclass(frozen=True)
class AlphabetProfile:
    """Alphabet sizes of one problem instance.

    The auxiliary ceilings default to the cardinality bounds |U||X||V|+1 for
    ``W`` and |U||X||Y||V|+2 for ``W1``/``W2``.  Larger auxiliary alphabets are
    accepted only with ``override=True`` and are then reported as flagged.
    """

    u_size: int
    x_size: int
    y_size: int
    v_size: int
    w_size: int | None = None
    w1_size: int | None = None
    w2_size: int | None = None
    override: bool = False

    def __post_init__(self):
        for name in ("u_size", "x_size", "y_size", "v_size", "w_size",
                     "w1_size", "w2_size"):
            val = getattr(self, name)
            if val is None:
                continue
            if int(val) != val or val < 1:
                raise InstanceFormatError(f"{name} must be a positive integer, got {val!r}")
        if not self.override:
            if self.w_size is not None and self.w_size > self.w_ceiling:
                raise InstanceFormatError(
                    f"w_size={self.w_size} exceeds |U||X||V|+1={self.w_ceiling}")
            for name in ("w1_size", "w2_size"):
                val = getattr(self, name)
                if val is not None and val > self.w12_ceiling:
                    raise InstanceFormatError(
                        f"{name}={val} exceeds |U||X||Y||V|+2={self.w12_ceiling}")

    @property
    def w_ceiling(self) -> int:
        return self.u_size * self.x_size * self.v_size + 1

    @property
    def w12_ceiling(self) -> int:
        return self.u_size * self.x_size * self.y_size * self.v_size + 2

    @property
    def flagged(self) -> bool:
        """True when some auxiliary size exceeds its default ceiling."""
        if self.w_size is not None and self.w_size > self.w_ceiling:
            return True
        return any(s is not None and s > self.w12_ceiling
                   for s in (self.w1_size, self.w2_size))

    def sizes(self) -> dict[str, int]:
        out = {"U": self.u_size, "X": self.x_size, "Y": self.y_size, "V": self.v_size}
        for axis, val in (("W", self.w_size), ("W1", self.w1_size), ("W2", self.w2_size)):
            if val is not None:
                out[axis] = val
        return out


@dataclass(frozen=True)
class FiniteDist:
    """Probability table over the product of named finite axes."""

    axes: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        axes = _as_axes(self.axes)
        table = np.array(self.table, dtype=float)
        if len(set(axes)) != len(axes):
            raise InstanceFormatError(f"duplicate axis names in {axes}")
        if table.ndim != len(axes):
            raise InstanceFormatError(
                f"table has {table.ndim} dimensions but {len(axes)} axes {axes}")
        _check_entries(table, f"distribution over {axes}")
        total = table.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise InstanceFormatError(
                f"distribution over {axes} sums to {total!r}, not 1")
        table.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "table", table)

    @property
    def sizes(self) -> dict[str, int]:
        return dict(zip(self.axes, self.table.shape))

    def size(self, axis: str) -> int:
        try:
            return self.table.shape[self.axes.index(axis)]
        except ValueError:
            raise InstanceFormatError(f"unknown axis {axis!r}; have {self.axes}") from None

    def reorder(self, axes) -> FiniteDist:
        axes = _as_axes(axes)
        if sorted(axes) != sorted(self.axes):
            raise InstanceFormatError(f"cannot reorder {self.axes} into {axes}")
        perm = [self.axes.index(a) for a in axes]
        return FiniteDist(axes, np.transpose(self.table, perm))

    def marginal(self, axes) -> FiniteDist:
        return FiniteDist(_as_axes(axes), marginal_table(self, axes))

    def __getitem__(self, cell) -> float:
        return float(self.table[cell])


@dataclass(frozen=True)
class Kernel:
    """Conditional distribution of ``target`` axes given ``given`` axes.

    ``table`` has shape ``given_shape + target_shape`` and every row (fixed
    index of the given axes) sums to one.
    """

    given: tuple[str, ...]
    target: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        given, target = _as_axes(self.given), _as_axes(self.target)
        table = np.array(self.table, dtype=float)
        if set(given) & set(target) or len(set(given + target)) != len(given + target):
            raise InstanceFormatError(f"kernel axes overlap: {given} | {target}")
        if table.ndim != len(given) + len(target):
            raise InstanceFormatError(
                f"kernel table has {table.ndim} dimensions, expected "
                f"{len(given) + len(target)} for {target}|{given}")
        _check_entries(table, f"kernel {target}|{given}")
        rows = table.reshape(table.shape[:len(given)] + (-1,)).sum(axis=-1)
        bad = np.abs(rows - 1.0) > NORM_TOL
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise InstanceFormatError(
                f"kernel {target}|{given}: row {idx} sums to {rows[idx]!r}, not 1")
        table.setflags(write=False)
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "table", table)

    @property
    def axes(self) -> tuple[str, ...]:
        return self.given + self.target

    @property
    def sizes(self) -> dict[str, int]:
        return dict(zip(self.axes, self.table.shape))

    @property
    def given_shape(self) -> tuple[int, ...]:
        return self.table.shape[:len(self.given)]

    @property
    def target_shape(self) -> tuple[int, ...]:
        return self.table.shape[len(self.given):]

    def row(self, *index) -> np.ndarray:
        return self.table[tuple(index)]

    @classmethod
    def uniform(cls, given, target, given_shape, target_shape) -> Kernel:
        shape = tuple(given_shape) + tuple(target_shape)
        return cls(given, target, np.full(shape, 1.0 / int(np.prod(target_shape))))


@dataclass(frozen=True)
class SymbolBlock:
    """Equal-length integer sequences, one per axis, with their alphabet sizes."""

    sequences: Mapping[str, np.ndarray]
    sizes: Mapping[str, int]
    n: int = field(init=False)

    def __post_init__(self):
        seqs = {}
        lengths = set()
        for axis, seq in self.sequences.items():
            arr = np.asarray(seq)
            if arr.ndim != 1:
                raise InstanceFormatError(f"sequence {axis} is not one-dimensional")
            if axis not in self.sizes:
                raise InstanceFormatError(f"no alphabet size for axis {axis}")
            if arr.size and (arr.min() < 0 or arr.max() >= self.sizes[axis]):
                raise InstanceFormatError(
                    f"sequence {axis} has symbols outside [0, {self.sizes[axis]})")
            arr = arr.astype(np.int64)
            arr.setflags(write=False)
            seqs[axis] = arr
            lengths.add(arr.size)
        if len(lengths) > 1:
            raise InstanceFormatError(f"sequences have different lengths {sorted(lengths)}")
        n = lengths.pop() if lengths else 0
        if n < 1:
            raise InstanceFormatError("empty symbol block")
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "sizes", dict(self.sizes))
        object.__setattr__(self, "n", n)

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(self.sequences)

    @classmethod
    def concatenate(cls, blocks: Sequence[SymbolBlock]) -> SymbolBlock:
        if not blocks:
            raise InstanceFormatError("nothing to concatenate")
        axes = blocks[0].axes
        for b in blocks[1:]:
            if set(b.axes) != set(axes):
                raise InstanceFormatError("blocks carry different axes")
        seqs = {a: np.concatenate([b.sequences[a] for b in blocks]) for a in axes}
        return cls(seqs, blocks[0].sizes)


# ---------------------------------------------------------------------------
# table helpers


def marginal_table(joint: FiniteDist, axes) -> np.ndarray:
    axes = _as_axes(axes)
    for a in axes:
        if a not in joint.axes:
            raise InstanceFormatError(f"unknown axis {a!r}; have {joint.axes}")
    drop = tuple(i for i, a in enumerate(joint.axes) if a not in axes)
    t = joint.table.sum(axis=drop)
    kept = [a for a in joint.axes if a in axes]
    return np.transpose(t, [kept.index(a) for a in axes])


def conditional_table(joint_table: np.ndarray, n_given: int) -> np.ndarray:
    """Row-normalise ``joint_table`` over its trailing axes; zero-mass rows become uniform."""
    shape = joint_table.shape
    flat = joint_table.reshape(shape[:n_given] + (-1,))
    mass = flat.sum(axis=-1, keepdims=True)
    width = flat.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(mass > 0, flat / np.where(mass > 0, mass, 1.0), 1.0 / width)
    return cond.reshape(shape)


def entropy_table(table: np.ndarray) -> float:
    p = table[table > 0]
    return float(-(p * np.log2(p)).sum())


def attach(joint: FiniteDist, kernel: Kernel) -> FiniteDist:
    """Joint of ``joint`` followed by ``kernel`` (whose given axes must be present)."""
    for a in kernel.given:
        if a not in joint.axes:
            raise InstanceFormatError(f"kernel conditions on {a!r} not in {joint.axes}")
        if joint.size(a) != kernel.sizes[a]:
            raise InstanceFormatError(
                f"axis {a!r} has size {joint.size(a)} in the joint but "
                f"{kernel.sizes[a]} in the kernel")
    for a in kernel.target:
        if a in joint.axes:
            raise InstanceFormatError(f"axis {a!r} already present in {joint.axes}")
    letters = {a: chr(ord("a") + i) for i, a in enumerate(joint.axes + kernel.target)}
    lhs = "".join(letters[a] for a in joint.axes)
    khs = "".join(letters[a] for a in kernel.axes)
    out = lhs + "".join(letters[a] for a in kernel.target)
    table = np.einsum(f"{lhs},{khs}->{out}", joint.table, kernel.table)
    return FiniteDist(joint.axes + kernel.target, table)


# ---------------------------------------------------------------------------
# operations


def compose_chain(source: FiniteDist, target: Kernel, channel: Kernel) -> FiniteDist:
    """Joint P(u)·Q(x,v|u)·T(y|x) with axes (U, X, Y, V)."""
    if source.axes != ("U",):
        raise InstanceFormatError(f"source must be over ('U',), got {source.axes}")
    if target.given != ("U",) or sorted(target.target) != ["V", "X"]:
        raise InstanceFormatError(f"target must be a kernel (X,V)|U, got {target.target}|{target.given}")
    if channel.given != ("X",) or channel.target != ("Y",):
        raise InstanceFormatError(f"channel must be a kernel Y|X, got {channel.target}|{channel.given}")
    joint = attach(attach(source, target), channel)
    return joint.reorder(("U", "X", "Y", "V"))


def marginal_conditional(joint: FiniteDist, keep_axes, given_axes=()) -> FiniteDist | Kernel:
    """Marginal over ``keep_axes``, or the kernel keep|given when ``given_axes`` is nonempty."""
    keep, given = _as_axes(keep_axes), _as_axes(given_axes)
    if set(keep) & set(given):
        raise InstanceFormatError(f"keep axes {keep} and given axes {given} overlap")
    if not keep:
        raise InstanceFormatError("no axes to keep")
    if not given:
        return joint.marginal(keep)
    t = marginal_table(joint, given + keep)
    return Kernel(given, keep, conditional_table(t, len(given)))


def entropy(joint: FiniteDist, axes, given=()) -> float:
    """H(axes | given) in bits."""
    axes, given = _as_axes(axes), _as_axes(given)
    h = entropy_table(marginal_table(joint, given + axes))
    if given:
        h -= entropy_table(marginal_table(joint, given))
    return max(h, 0.0)


def mutual_information(joint: FiniteDist, group_a, group_b, group_c=()) -> float:
    """I(A;B|C) in bits; negative rounding residue is clamped to zero."""
    a, b, c = _as_axes(group_a), _as_axes(group_b), _as_axes(group_c)
    if not a or not b:
        raise InstanceFormatError("mutual information needs two nonempty axis groups")
    if len(set(a + b + c)) != len(a) + len(b) + len(c):
        raise InstanceFormatError(f"axis groups overlap: {a}, {b}, {c}")
    h = (entropy_table(marginal_table(joint, a + c))
         + entropy_table(marginal_table(joint, b + c))
         - entropy_table(marginal_table(joint, a + b + c)))
    if c:
        h -= entropy_table(marginal_table(joint, c))
    return max(h, 0.0)


def tv_distance(p: FiniteDist, q: FiniteDist) -> float:
    """Total variation ½·Σ|p − q| for distributions over identical axes."""
    if p.axes != q.axes or p.table.shape != q.table.shape:
        raise InstanceFormatError(
            f"cannot compare {p.axes}{p.table.shape} with {q.axes}{q.table.shape}")
    return float(min(1.0, 0.5 * np.abs(p.table - q.table).sum()))


def empirical_counts(block: SymbolBlock, axes=None) -> np.ndarray:
    """Integer occurrence counts N(a | block) over ``axes`` (default: block order)."""
    axes = block.axes if axes is None else _as_axes(axes)
    shape = []
    for a in axes:
        if a not in block.sequences:
            raise InstanceFormatError(f"block has no sequence for axis {a!r}")
        shape.append(block.sizes[a])
    flat = np.ravel_multi_index(tuple(block.sequences[a] for a in axes), shape)
    return np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)


def empirical_distribution(block: SymbolBlock, axes=None) -> FiniteDist:
    """Type of the block: each cell is its occurrence count divided by n."""
    axes = block.axes if axes is None else _as_axes(axes)
    counts = empirical_counts(block, axes)
    # exact rationals so that the emitted table sums to one without drift
    n = block.n
    table = np.array([float(Fraction(int(c), n)) for c in counts.ravel()]).reshape(counts.shape)
    return FiniteDist(axes, table)


def typical_counts(counts: np.ndarray, n: int, target: np.ndarray, eps: float) -> bool:
    """Robust typicality test on raw counts: |N/n − Q| ≤ eps·Q in every cell."""
    dev = np.abs(counts - n * target)
    return bool(np.all(dev <= eps * n * target + 1e-9))


def is_typical(block: SymbolBlock, target: FiniteDist, eps: float) -> bool:
    """Robust joint typicality of ``block`` for ``target`` with tolerance ``eps``.

    Cells with zero target probability must not occur at all.
    """
    if not eps > 0:
        raise InstanceFormatError(f"typicality tolerance must be positive, got {eps!r}")
    for a in target.axes:
        if block.sizes.get(a) != target.size(a):
            raise InstanceFormatError(f"axis {a!r} size differs between block and target")
    counts = empirical_counts(block, target.axes)
    return typical_counts(counts, block.n, target.table, eps)


def product_dist(*factors: FiniteDist) -> FiniteDist:
    """Independent product of distributions over disjoint axes."""
    out = factors[0]
    for f in factors[1:]:
        table = np.multiply.outer(out.table, f.table)
        out = FiniteDist(out.axes + f.axes, table)
    return out


def random_dist(rng: np.random.Generator, axes, shape, alpha: float = 1.0) -> FiniteDist:
    axes = _as_axes(axes)
    t = rng.dirichlet(np.full(int(np.prod(shape)), alpha)).reshape(shape)
    return FiniteDist(axes, t)


def random_kernel(rng: np.random.Generator, given, target, given_shape, target_shape,
                  alpha: float = 1.0) -> Kernel:
    rows = int(np.prod(given_shape))
    width = int(np.prod(target_shape))
    t = rng.dirichlet(np.full(width, alpha), size=rows)
    return Kernel(given, target, t.reshape(tuple(given_shape) + tuple(target_shape)))


def as_dist(values: Iterable[float], axis: str = "U") -> FiniteDist:
    return FiniteDist((axis,), np.asarray(list(values), dtype=float))
