"""Oriented site percolation on the even lattice ``{(y, k): y + k even, k >= 0}``.

Row 0 holds the start set; a site ``(y, k)`` with ``k >= 1`` is occupied when
it is open and ``(y - 1, k - 1)`` or ``(y + 1, k - 1)`` is occupied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .coupling import ViolationReport
from .graphical import ParameterError, derive_seed
from .stats import LogLinearFit, fit_log_linear, proportion


class WidthError(ValueError):
    """The field is too narrow for the requested start set and height."""


@dataclass(frozen=True)
class Independent:
    p: float

    @property
    def density(self) -> float:
        return self.p


@dataclass(frozen=True)
class Overlap:
    """``w(y, k) = u(y - 1, k) or u(y + 1, k)`` with i.i.d. Bernoulli(q) base bits ``u``."""

    q: float

    @property
    def density(self) -> float:
        return 1.0 - (1.0 - self.q) ** 2


Generator = Union[Independent, Overlap]


@dataclass(frozen=True, eq=False)
class PercField:
    """Bits ``w[k, y - lo]`` for rows ``0..n``; entries off the lattice parity are 0."""

    bits: np.ndarray
    lo: int
    generator: Optional[Generator] = None

    @property
    def n(self) -> int:
        return self.bits.shape[0] - 1

    @property
    def hi(self) -> int:
        return self.lo + self.bits.shape[1] - 1

    def open(self, y: int, k: int) -> bool:
        if not (self.lo <= y <= self.hi and 0 <= k <= self.n):
            return False
        return bool(self.bits[k, y - self.lo])

    @classmethod
    def from_sites(cls, open_sites: Iterable[Tuple[int, int]], n: int, lo: int, hi: int) -> "PercField":
        bits = np.zeros((n + 1, hi - lo + 1), dtype=bool)
        for y, k in open_sites:
            if (y + k) % 2:
                raise ParameterError(f"site {(y, k)} is off the lattice")
            bits[k, y - lo] = True
        return cls(bits, lo)


def _parity_mask(n: int, lo: int, width: int) -> np.ndarray:
    k = np.arange(n + 1)[:, None]
    y = lo + np.arange(width)[None, :]
    return (k + y) % 2 == 0


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def field_uniforms(seed: int, n: int, half_width: int) -> np.ndarray:
    """The shared uniforms behind :func:`generate_field` (rows ``0..n``, sites ``-H-1..H+1``)."""
    return _rng(derive_seed(seed, 0xF1E1D)).random((n + 1, 2 * half_width + 3))


def generate_field(gen: Generator, seed: int, n: int, half_width: int) -> PercField:
    """Field on rows ``0..n`` and sites ``-half_width..half_width``.

    Both generators threshold one shared array of uniforms, so fields with the
    same seed are ordered in their parameter.
    """
    if n < 0 or half_width < 0:
        raise ParameterError("n and half_width must be nonnegative")
    u = field_uniforms(seed, n, half_width)
    if isinstance(gen, Independent):
        if not 0 <= gen.p <= 1:
            raise ParameterError("p must lie in [0, 1]")
        bits = u[:, 1:-1] < gen.p
    elif isinstance(gen, Overlap):
        if not 0 <= gen.q <= 1:
            raise ParameterError("q must lie in [0, 1]")
        base = u < gen.q
        bits = base[:, :-2] | base[:, 2:]
    else:
        raise ParameterError(f"unknown generator {gen!r}")
    bits = bits & _parity_mask(n, -half_width, 2 * half_width + 1)
    return PercField(bits, -half_width, gen)


class PercTrace(NamedTuple):
    W_rows: List[Tuple[int, ...]]
    R: List[Optional[int]]
    L: List[Optional[int]]
    survived: bool

    def row(self, k: int) -> frozenset:
        return frozenset(self.W_rows[k])


def percolate(field: PercField, A: Iterable[int], n: Optional[int] = None, strict: bool = True) -> PercTrace:
    """Occupied sets ``W_0 = A, W_1, ..., W_n`` by row-wise dynamic programming.

    With ``strict`` the field must contain ``hull(A) +- n`` so that the result
    equals the one on the infinite lattice; otherwise sites outside the field
    count as closed.
    """
    n = field.n if n is None else n
    if n > field.n:
        raise WidthError(f"field has {field.n} rows, {n} requested")
    A = sorted(set(int(x) for x in A))
    if any(x % 2 for x in A):
        raise ParameterError("start sites must be even")
    if A and strict and (A[0] - n < field.lo or A[-1] + n > field.hi):
        raise WidthError(f"start hull [{A[0]}, {A[-1]}] +- {n} exceeds field [{field.lo}, {field.hi}]")
    width = field.bits.shape[1]
    occ = np.zeros(width, dtype=bool)
    for x in A:
        if field.lo <= x <= field.hi:
            occ[x - field.lo] = True
    rows, R, L = [], [], []

    def record(o):
        idx = np.flatnonzero(o)
        rows.append(tuple(int(i) + field.lo for i in idx))
        R.append(int(idx[-1]) + field.lo if idx.size else None)
        L.append(int(idx[0]) + field.lo if idx.size else None)

    record(occ)
    for k in range(1, n + 1):
        nb = np.zeros(width, dtype=bool)
        nb[1:] |= occ[:-1]
        nb[:-1] |= occ[1:]
        occ = nb & field.bits[k]
        record(occ)
    return PercTrace(rows, R, L, bool(rows[-1]))


# ---------------------------------------------------------------------------- experiments
def restriction_field_check(field: PercField, n: int) -> ViolationReport:
    """On one field: ``W_k^0 = W_k^{2Z} cap [L_k, R_k]`` at every row where ``W_k^0`` is nonempty.

    The all-even start is cut to ``[-2n, 2n]``, which reaches every site of
    ``[-n, n]`` that the infinite start reaches, so the check is exact.
    """
    rep = ViolationReport()
    one = percolate(field, [0], n)
    allstart = percolate(field, range(-2 * n, 2 * n + 1, 2), n)
    for k in range(n + 1):
        if not one.W_rows[k]:
            break
        rep.total_checks += 1
        lo, hi = one.L[k], one.R[k]
        want = frozenset(y for y in allstart.W_rows[k] if lo <= y <= hi)
        if one.row(k) != want:
            rep.add(float(k), lo, f"row {k}: {sorted(one.row(k) ^ want)}")
    return rep


def restriction_check(p: float, n: int, fields: int, seed: int = 0, max_tries: Optional[int] = None):
    """Check the restriction identity on ``fields`` fields whose origin start survives to row ``n``.

    Returns ``(report, surviving, tried)``.
    """
    max_tries = 100 * fields if max_tries is None else max_tries
    rep, ok, i = ViolationReport(), 0, 0
    while ok < fields and i < max_tries:
        f = generate_field(Independent(p), derive_seed(seed, i), n, 3 * n)
        i += 1
        if not percolate(f, [0], n).survived:
            continue
        ok += 1
        rep = rep.merge(restriction_field_check(f, n))
    return rep, ok, i


class GrowthPoint(NamedTuple):
    n: int
    p_hat: float
    se: float
    survived: int


def final_rows(gen: Generator, seeds: Sequence[int], n: int, chunk: int = 1024) -> np.ndarray:
    """Row ``n`` of ``W^0`` for the fields ``generate_field(gen, s, n, n)``, one row per seed.

    Same result as calling :func:`percolate` per field, with the dynamic
    programming vectorized over a chunk of fields.
    """
    width = 2 * n + 1
    out = np.zeros((len(seeds), width), dtype=bool)
    for start in range(0, len(seeds), chunk):
        block = np.stack([generate_field(gen, s, n, n).bits for s in seeds[start:start + chunk]])
        occ = np.zeros((block.shape[0], width), dtype=bool)
        occ[:, n] = True
        for k in range(1, n + 1):
            nb = np.zeros_like(occ)
            nb[:, 1:] |= occ[:, :-1]
            nb[:, :-1] |= occ[:, 1:]
            occ = nb & block[:, k]
        out[start:start + block.shape[0]] = occ
    return out


def rightmost_growth(p: float, a: float, n: int, reps: int, seed: int = 0) -> GrowthPoint:
    """``P(R_n < a n | W_n^0 nonempty)`` over ``reps`` independent fields."""
    rows = final_rows(Independent(p), [derive_seed(seed, n, i) for i in range(reps)], n)
    alive = rows.any(axis=1)
    surv = int(alive.sum())
    if not surv:
        return GrowthPoint(n, 0.0, 0.0, 0)
    R = n - np.argmax(rows[:, ::-1], axis=1)
    hits = int((alive & (R < a * n)).sum())
    pr = proportion(hits, surv)
    return GrowthPoint(n, pr.p, pr.se, surv)


def growth_fit(points: Sequence[GrowthPoint]) -> LogLinearFit:
    return fit_log_linear([(pt.n, pt.p_hat, max(pt.survived, 1)) for pt in points])


def window(n: int, beta: float) -> List[int]:
    """``Y = X(n) cap [-beta n, beta n]``: sites of row ``n``'s parity in the window."""
    b = int(math.floor(beta * n))
    return [y for y in range(-b, b + 1) if (y + n) % 2 == 0]


class DensityPoint(NamedTuple):
    n: int
    p_hat: float
    se: float
    reps: int
    mean_fraction: float


def density_experiment(gen: Generator, rho: float, beta: float, n: int, reps: int, seed: int = 0) -> DensityPoint:
    """``P(sum_{y in Y} 1(y in W_n^0) < rho |Y|, W_n^0 nonempty)``."""
    Y = window(n, beta)
    rows = final_rows(gen, [derive_seed(seed, n, i) for i in range(reps)], n)
    if Y:
        cnt = rows[:, [y + n for y in Y]].sum(axis=1)
        mean_fraction = float(cnt.mean()) / len(Y)
    else:
        cnt = np.zeros(reps, dtype=int)
        mean_fraction = math.nan
    hits = int((rows.any(axis=1) & (cnt < rho * len(Y))).sum())
    pr = proportion(hits, reps)
    return DensityPoint(n, pr.p, pr.se, reps, mean_fraction)


class DensityCheck(NamedTuple):
    empirical: float
    se: float
    analytic: float
    bits: int

    @property
    def z(self) -> float:
        return (self.empirical - self.analytic) / self.se if self.se > 0 else 0.0


def generator_density(gen: Generator, bits: int, seed: int = 0) -> DensityCheck:
    """Empirical open fraction over about ``bits`` lattice sites, with a lag-corrected standard error.

    Same-row neighbours on the lattice (distance 2) share a base bit under
    :class:`Overlap`, so the variance includes twice the lag-one covariance.
    """
    width = 2 * int(math.ceil(math.sqrt(bits)))
    rows = max(1, int(math.ceil(bits / (width // 2 + 1))))
    f = generate_field(gen, seed, rows - 1, width // 2)
    x = np.concatenate([f.bits[k, (k + f.lo) % 2::2] for k in range(rows)]).astype(float)
    m = float(x.mean())
    var = float(x.var())
    cov = 0.0
    for k in range(rows):
        r = f.bits[k, (k + f.lo) % 2::2].astype(float) - m
        cov += float((r[:-1] * r[1:]).sum())
    var_mean = max(var + 2.0 * cov / x.size, 0.0) / x.size
    return DensityCheck(m, math.sqrt(var_mean), gen.density, int(x.size))


def distant_correlation(gen: Generator, samples: int, seed: int = 0, gap: int = 4) -> Tuple[float, int]:
    """Correlation of same-row bits ``gap`` apart (``gap`` even), one pair per field row."""
    if gap % 2:
        raise ParameterError("gap must be even to stay on the lattice")
    f = generate_field(gen, seed, samples - 1, gap + 1)
    k = np.arange(samples)
    y0 = k % 2
    a_ = f.bits[k, y0 - f.lo].astype(float)
    b_ = f.bits[k, y0 + gap - f.lo].astype(float)
    if a_.std() == 0 or b_.std() == 0:
        return 0.0, samples
    return float(np.corrcoef(a_, b_)[0, 1]), samples
