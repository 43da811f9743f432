"""Statistics kernel: proportions, ratio estimators, KS tests and log-linear fits."""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from scipy import stats as _st


class InsufficientDataError(ValueError):
    pass


class Proportion(NamedTuple):
    p: float
    se: float
    k: int
    n: int

    def ci(self, z: float = 2.5758293035489004) -> Tuple[float, float]:
        """Wilson score interval (default 99%)."""
        if self.n == 0:
            return (0.0, 1.0)
        n, ph = self.n, self.p
        den = 1 + z * z / n
        mid = (ph + z * z / (2 * n)) / den
        half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
        return (max(0.0, mid - half), min(1.0, mid + half))


def proportion(k: int, n: int) -> Proportion:
    if n <= 0:
        return Proportion(math.nan, math.nan, k, n)
    p = k / n
    return Proportion(p, math.sqrt(p * (1 - p) / n), k, n)


def mean_se(values: Sequence[float]) -> Tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    if a.size == 1:
        return float(a[0]), math.nan
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def ratio_of_means(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """``sum(x)/sum(y)`` with the delta-method standard error for i.i.d. pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n == 0 or y.sum() == 0:
        return math.nan, math.nan
    r = x.sum() / y.sum()
    if n < 2:
        return float(r), math.nan
    resid = x - r * y
    se = math.sqrt(float((resid ** 2).sum()) / (n - 1) / n) / float(y.mean())
    return float(r), se


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic with its asymptotic p-value."""
    if len(a) < 5 or len(b) < 5:
        raise InsufficientDataError("KS test needs at least 5 values per sample")
    res = _st.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float), method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_normal(z: Sequence[float]) -> Tuple[float, float]:
    res = _st.kstest(np.asarray(z, dtype=float), "norm")
    return float(res.statistic), float(res.pvalue)


def ks_halves(values: Sequence[float]) -> Tuple[float, float]:
    """KS test of the first half of a sequence against the second half."""
    h = len(values) // 2
    return ks_two_sample(values[:h], values[h:2 * h])


def lag1_autocorrelation(values: Sequence[float]) -> float:
    a = np.asarray(values, dtype=float)
    if a.size < 3 or a.std() == 0:
        return 0.0
    a = a - a.mean()
    return float((a[:-1] * a[1:]).sum() / (a * a).sum())


class LogLinearFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    slope_se: float


def fit_log_linear(points: Sequence[Tuple[float, float, int]]) -> LogLinearFit:
    """Weighted least squares of ``log p`` on ``x`` for points ``(x, p_hat, reps)``.

    Zero estimates are replaced by ``1/2 / (reps + 1)``.  Weights are the
    inverse delta-method variances ``n p / (1 - p)`` evaluated at the
    continuity-corrected ``(k + 1/2) / (n + 1)``, which also keeps zero cells
    light.
    """
    if len(points) < 3:
        raise InsufficientDataError("need at least 3 points")
    xs, ys, ws = [], [], []
    for x, p, n in points:
        if not 0 <= p <= 1 or n <= 0:
            raise ValueError(f"bad point {(x, p, n)}")
        ph = p if p > 0 else 0.5 / (n + 1)
        pt = (p * n + 0.5) / (n + 1)
        xs.append(float(x))
        ys.append(math.log(ph))
        ws.append(n * pt / (1 - pt) if pt < 1 else float(n))
    x, y, w = np.array(xs), np.array(ys), np.array(ws)
    sw = w.sum()
    xm, ym = (w * x).sum() / sw, (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    if sxx <= 0:
        raise ValueError("degenerate design: all x equal")
    slope = float((w * (x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float((w * (y - ym) ** 2).sum())
    ss_res = float((w * (y - intercept - slope * x) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LogLinearFit(slope, intercept, r2, float(math.sqrt(1.0 / sxx)))


def kendall_trend(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    res = _st.kendalltau(x, y)
    tau = 0.0 if np.isnan(res.statistic) else float(res.statistic)
    p = 1.0 if np.isnan(res.pvalue) else float(res.pvalue)
    return tau, p
