"""Exact-inversion samplers with safety intervals.

Each draw uses one uniform u and returns min{k : u < F(k)}. Alongside the
value comes the interval of parameter values that would have produced the
same value from the same u, so a caller can tell how much numerical slack
its constants had.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


from .errors import InternalError, NeedMoreTerms, ParameterError
from .kernels import dist

POISSON_CAP = 1e6
LOGA_MAX_TERMS = 10**8


@dataclass(frozen=True)
class SafetyInterval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = False

    def __contains__(self, v: float) -> bool:
        above = v >= self.lo if self.lo_closed else v > self.lo
        below = v <= self.hi if self.hi_closed else v < self.hi
        return above and below

    def intersect(self, other: "SafetyInterval") -> "SafetyInterval":
        if other.lo > self.lo or (other.lo == self.lo and not other.lo_closed):
            lo, lo_c = other.lo, other.lo_closed
        else:
            lo, lo_c = self.lo, self.lo_closed
        if other.hi < self.hi or (other.hi == self.hi and not other.hi_closed):
            hi, hi_c = other.hi, other.hi_closed
        else:
            hi, hi_c = self.hi, self.hi_closed
        return SafetyInterval(lo, hi, lo_c, hi_c)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __str__(self):
        return f"{'[' if self.lo_closed else '('}{self.lo:.12g}, {self.hi:.12g}{']' if self.hi_closed else ')'}"

    def to_json(self):
        return {"lo": self.lo, "hi": None if math.isinf(self.hi) else self.hi,
                "lo_closed": self.lo_closed, "hi_closed": self.hi_closed}




@dataclass(frozen=True)
class DrawResult:
    value: object
    interval: SafetyInterval | None
    uniforms_consumed: int = 1


def _check_uniform(u):
    if not 0.0 <= u < 1.0:
        raise ParameterError(f"uniform out of range: {u}")


def bernoulli(u: float, p: float, track: bool = True) -> DrawResult:
    """True iff u < p."""
    _check_uniform(u)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"Bernoulli parameter {p} not in [0, 1]")
    hit = u < p
    if not track:
        return DrawResult(hit, None)
    if hit:
        return DrawResult(True, SafetyInterval(u, 1.0, False, True))
    return DrawResult(False, SafetyInterval(0.0, u, True, True))


def geometric(u: float, p: float, track: bool = True) -> DrawResult:
    """K = min{k >= 0 : u < 1 - p^(k+1)}, i.e. P(K = k) = (1 - p) p^k."""
    _check_uniform(u)
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"geometric parameter {p} must lie in [0, 1)")
    k = int(dist.geometric_invert(u, p))
    if not track:
        return DrawResult(k, None)
    q = 1.0 - u
    # p^(k+1) < 1 - u <= p^k
    hi = q ** (1.0 / (k + 1))
    if k == 0:
        return DrawResult(0, SafetyInterval(0.0, q, True, False))
    return DrawResult(k, SafetyInterval(q ** (1.0 / k), hi, True, False))


def poisson(u: float, lam: float, track: bool = True) -> DrawResult:
    return poisson_truncated(u, lam, 0, track)


def poisson_truncated(u: float, lam: float, min_value: int = 0, track: bool = True) -> DrawResult:
    """Poisson(lam) conditioned on K >= min_value, by inversion of the conditional CDF."""
    _check_uniform(u)
    if not lam > 0.0 or not math.isfinite(lam):
        if lam == 0.0 and min_value == 0:
            # K stays 0 while u < exp(-lam)
            if not track:
                return DrawResult(0, None)
            return DrawResult(0, SafetyInterval(0.0, -math.log(u) if u > 0.0 else math.inf, True, False))
        raise ParameterError(f"Poisson rate {lam} must be positive")
    if lam > POISSON_CAP:
        raise ParameterError(f"Poisson rate {lam} exceeds the cap {POISSON_CAP:g}")
    if min_value < 0:
        raise ParameterError("min_value must be >= 0")
    k = int(dist.poisson_invert(u, lam, min_value))
    if not track:
        return DrawResult(k, None)
    lo, hi, lc, hc = dist.poisson_interval(u, lam, k, min_value, POISSON_CAP)
    return DrawResult(k, SafetyInterval(lo, hi, lc, hc))


def loga(u: float, p: float, track: bool = True) -> DrawResult:
    """Logarithmic law mu(k) = p^k / (k log(1/(1-p))), k >= 1."""
    _check_uniform(u)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"logarithmic parameter {p} must lie in (0, 1)")
    k = int(dist.loga_invert(u, p, LOGA_MAX_TERMS))
    if k < 0:
        raise InternalError(f"logarithmic inversion did not reach u={u} at p={p}")
    if not track:
        return DrawResult(k, None)
    lo, hi, lc, hc = dist.loga_interval(u, p, k)
    return DrawResult(k, SafetyInterval(lo, hi, lc, hc))


@dataclass(frozen=True)
class MaxIndexResult:
    value: int
    intervals: tuple  # per A(x^j), j = 1..value
    c_interval: SafetyInterval | None
    uniforms_consumed: int = 1


def _shrink(lo, hi, lc, hc, lo_scale, hi_scale):
    # closed forms are exact in real arithmetic; pull each end in well past
    # the rounding error of the operands it was computed from
    if math.isfinite(lo) and lo != 0.0:
        lo += 1e-12 * lo_scale
    if math.isfinite(hi):
        hi -= 1e-12 * hi_scale
    return SafetyInterval(lo, hi, lc, hc and math.isfinite(hi))


def _exp(v):
    return math.exp(v) if v < 709.0 else math.inf


def _or_point(value, iv):
    # a value within rounding of a decision boundary is only known safe as itself
    return iv if value in iv else SafetyInterval(value, value, True, True)


def max_index(u: float, inner_values: Sequence[float], cx: float, track: bool = True) -> MaxIndexResult:
    """Largest component index of a multiset draw.

    P(K <= k) = exp(sum_{j<=k} A(x^j)/j) / C(x); K = 0 is the empty
    multiset. `inner_values[j-1]` is A(x^j).
    """
    _check_uniform(u)
    if not cx >= 1.0:
        raise ParameterError(f"multiset value {cx} must be >= 1")
    log_c = math.log(cx)
    level = math.log(u) + log_c if u > 0.0 else -math.inf
    partial = [0.0]
    k = 0
    while not level < partial[-1]:
        if k >= len(inner_values):
            raise NeedMoreTerms(f"MaxIndex CDF did not reach u={u} with {len(inner_values)} terms")
        k += 1
        partial.append(partial[-1] + inner_values[k - 1] / k)
    if not track:
        return MaxIndexResult(k, (), None)
    # S_{k-1} <= level < S_k; moving A_j by d moves every S_i (i >= j) by d/j
    s_k, s_prev = partial[k], partial[k - 1] if k > 0 else -math.inf
    intervals = []
    for j in range(1, k + 1):
        a = inner_values[j - 1]
        lo = max(0.0, a + j * (level - s_k))
        hi = a + j * (level - s_prev) if j < k else math.inf
        scale = abs(a) + j * (abs(level) + abs(s_k))
        intervals.append(_or_point(a, _shrink(lo, hi, False, True, scale, scale)))
    if u > 0.0:
        log_u = math.log(u)
        c_hi = _exp(s_k - log_u)
        if k > 0 and s_prev - log_u > 0.0:
            c_lo = _exp(s_prev - log_u)
            lo_scale = c_lo * (1 + abs(s_prev) + abs(log_u))
        else:
            # the domain bound C >= 1 is exact
            c_lo, lo_scale = 0.0, 0.0
        # exp turns absolute errors in the exponent into relative ones
        c_iv = _shrink(c_lo, c_hi, True, False, lo_scale, c_hi * (1 + abs(s_k) + abs(log_u)))
        c_iv = _or_point(cx, SafetyInterval(max(c_iv.lo, 1.0), c_iv.hi, True, False))
    else:
        c_iv = SafetyInterval(1.0, math.inf, True, False)
    return MaxIndexResult(k, tuple(intervals), c_iv)


def sample_h_density(u: float, cls: str, x0: float, oracle) -> DrawResult:
    """t in (0, x0) with law A'(t) dt / (A(x0) - A(0)) for a differential class A.

    Inverts A(t) = A(0) + u (A(x0) - A(0)) on the oracle's dense grid.
    """
    _check_uniform(u)
    solver = getattr(oracle, "solver", oracle)
    grid = getattr(solver, "grid", None)
    if grid is None:
        raise ParameterError("oracle has no differential grid")
    if not 0.0 < x0 <= grid.x * (1 + 1e-15):
        raise ParameterError(f"x0={x0} outside the grid [0, {grid.x}]")
    col = grid.column_of(cls)
    ys, fs = grid.column(col)
    a0 = ys[0]
    top = grid.interp_one(col, x0)
    if not top > a0:
        raise ParameterError(f"{cls}(x0) - {cls}(0) must be positive")
    target = a0 + u * (top - a0)
    t = dist.hermite_invert(grid.t, ys, fs, grid.n, target, x0, 1e-12 * x0)
    if t < 0.0:
        raise InternalError(f"grid of {cls} is not monotone")
    return DrawResult(min(float(t), x0), None)
