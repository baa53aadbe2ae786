"""Inversion kernels for the discrete laws used by the samplers.

Every sampler returns min{k : u < F(k)} for a CDF F computed by one
sequential sum; for u close to 1 the same rule is applied as
1 - F(k) < 1 - u with upper tails summed from the small end, since a
forward sum has only absolute precision there. The interval routines call
the very same CDF or tail function, so a parameter reported inside an
interval reproduces the draw exactly. Intervals are returned as the inner
endpoints of the final bisection brackets, both checked to reproduce it.
"""

import math

import numpy as np

from .._jit import njit

POISSON_LOG_SWITCH = 30.0
BISECT_RTOL = 1e-9
# uniforms at or above this are inverted against upper tails
TAIL_SWITCH = 1.0 - 2.0**-10
LOGA_TAIL_TERMS = 10**7


@njit
def _pois_stop(lam):
    # past this index the remaining Poisson mass is far below double eps
    return int(lam + 40.0 * math.sqrt(lam) + 60.0)


@njit
def _pois_term(k, lam, prev):
    if lam <= POISSON_LOG_SWITCH:
        if k == 0:
            return math.exp(-lam)
        return prev * lam / k
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1.0))


@njit
def _pois_norm(lam, kmin):
    """Mass of {K >= kmin}."""
    if kmin == 0:
        return 1.0
    if kmin == 1:
        return -math.expm1(-lam)
    total = 0.0
    term = 0.0
    for k in range(max(_pois_stop(lam), kmin + 60) + 1):
        term = _pois_term(k, lam, term)
        if k >= kmin:
            total += term
    return total


@njit
def _pois_low(lam, kmin):
    # below this index the upper tail is 1 to double precision
    return max(kmin, int(lam - 40.0 * math.sqrt(lam) - 60.0))


@njit
def _pois_suffix(lam, kmin):
    """Upper tails P(K >= i | K >= kmin) for i = low .. stop + 1, summed from the small end."""
    stop = max(_pois_stop(lam), kmin + 60)
    low = _pois_low(lam, kmin)
    norm = _pois_norm(lam, kmin)
    terms = np.empty(stop - low + 1)
    term = 0.0
    start = 0 if lam <= POISSON_LOG_SWITCH else low
    for i in range(start, stop + 1):
        term = _pois_term(i, lam, term)
        if i >= low:
            terms[i - low] = term / norm
    suf = np.zeros(stop - low + 2)
    for i in range(stop - low, -1, -1):
        suf[i] = suf[i + 1] + terms[i]
    return suf, low


@njit
def poisson_tail(k, lam, kmin):
    """P(K > k | K >= kmin), computed exactly as the tail branch of :func:`poisson_invert`."""
    if k < kmin:
        return 1.0
    suf, low = _pois_suffix(lam, kmin)
    i = k + 1 - low
    if i < 0:
        return 1.0
    if i >= suf.shape[0]:
        return 0.0
    return suf[i]


@njit
def poisson_cdf(k, lam, kmin):
    """P(K <= k | K >= kmin), summed exactly as :func:`poisson_invert` does."""
    if k < kmin:
        return 0.0
    stop = max(_pois_stop(lam), kmin + 60)
    if k >= stop:
        return 1.0
    norm = _pois_norm(lam, kmin)
    term = 0.0
    for i in range(kmin):
        term = _pois_term(i, lam, term)
    cum = 0.0
    for i in range(kmin, k + 1):
        term = _pois_term(i, lam, term)
        cum += term / norm
    return cum


@njit
def poisson_invert(u, lam, kmin):
    if u >= TAIL_SWITCH:
        # compare the exact 1 - u with upper tails, which keep relative precision
        v = 1.0 - u
        suf, low = _pois_suffix(lam, kmin)
        for i in range(1, suf.shape[0]):
            if suf[i] < v:
                return low + i - 1
        return low + suf.shape[0] - 2
    stop = max(_pois_stop(lam), kmin + 60)
    norm = _pois_norm(lam, kmin)
    term = 0.0
    for i in range(kmin):
        term = _pois_term(i, lam, term)
    cum = 0.0
    k = kmin
    while k < stop:
        term = _pois_term(k, lam, term)
        cum += term / norm
        if u < cum:
            return k
        k += 1
    return stop


@njit
def _pois_inside(u, lam, k, kmin):
    if u >= TAIL_SWITCH:
        v = 1.0 - u
        upper_ok = k == kmin or poisson_tail(k - 1, lam, kmin) >= v
        return upper_ok and poisson_tail(k, lam, kmin) < v
    lower_ok = k == kmin or poisson_cdf(k - 1, lam, kmin) <= u
    return lower_ok and u < poisson_cdf(k, lam, kmin)


@njit
def poisson_interval(u, lam, k, kmin, cap):
    """Interval of rates giving the same draw k for this u.

    Returns (lo, hi, lo_closed, hi_closed); the CDF at fixed k decreases in
    the rate, so each end is a single crossing found by bisection. Both
    ends are points checked to reproduce k.
    """
    # upper end
    a = lam
    b = lam * 2.0 + 1.0
    hi_open_cap = False
    while _pois_inside(u, b, k, kmin):
        a = b
        b *= 2.0
        if b > cap:
            b = cap
            hi_open_cap = True
            break
    if hi_open_cap and _pois_inside(u, b, k, kmin):
        hi = cap
    else:
        while b - a > BISECT_RTOL * b:
            mid = 0.5 * (a + b)
            if _pois_inside(u, mid, k, kmin):
                a = mid
            else:
                b = mid
        hi = a
    # lower end
    if k == kmin:
        return 0.0, hi, kmin == 0, True
    a = 0.0
    b = lam
    while b - a > BISECT_RTOL * b:
        mid = 0.5 * (a + b)
        if _pois_inside(u, mid, k, kmin):
            b = mid
        else:
            a = mid
    return b, hi, True, True


@njit
def loga_cdf(k, p):
    if k < 1:
        return 0.0
    L = -math.log1p(-p)
    term = p / L
    cum = term
    for i in range(1, k):
        term = term * p * i / (i + 1.0)
        cum += term
    return cum


@njit
def _loga_suffix(p, v, kmax):
    """Upper tails P(K >= i), i = 1 .. n + 1, summed from the small end.

    Terms stop once a geometric bound on the rest is far below v. Returns
    an empty array when more than kmax terms would be needed.
    """
    L = -math.log1p(-p)
    term = p / L
    n = 1
    while term * p / (1.0 - p) >= 1e-20 * v:
        if n >= kmax:
            return np.zeros(0)
        term = term * p * n / (n + 1.0)
        n += 1
    terms = np.empty(n)
    term = p / L
    terms[0] = term
    for i in range(1, n):
        term = term * p * i / (i + 1.0)
        terms[i] = term
    suf = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        suf[i] = suf[i + 1] + terms[i]
    return suf


@njit
def loga_tail(k, p, v, kmax):
    """P(K > k) as seen by the tail branch of :func:`loga_invert`; -1.0 past kmax."""
    if k < 1:
        return 1.0
    suf = _loga_suffix(p, v, kmax)
    if suf.shape[0] == 0:
        return -1.0
    if k >= suf.shape[0]:
        return 0.0
    return suf[k]


@njit
def loga_invert(u, p, kmax):
    """min{k >= 1 : u < F(k)} for mu(k) = p^k / (k log(1/(1-p))); -1 past kmax."""
    if u >= TAIL_SWITCH:
        v = 1.0 - u
        suf = _loga_suffix(p, v, min(kmax, LOGA_TAIL_TERMS))
        if suf.shape[0] == 0:
            return -1
        for i in range(1, suf.shape[0]):
            if suf[i] < v:
                return i
        return suf.shape[0] - 1
    L = -math.log1p(-p)
    term = p / L
    cum = term
    k = 1
    while not u < cum:
        if k >= kmax or term == 0.0:
            return -1
        term = term * p * k / (k + 1.0)
        cum += term
        k += 1
    return k


@njit
def _loga_inside(u, p, k):
    if u >= TAIL_SWITCH:
        v = 1.0 - u
        upper = loga_tail(k - 1, p, v, LOGA_TAIL_TERMS)
        tail = loga_tail(k, p, v, LOGA_TAIL_TERMS)
        if upper < 0.0 or tail < 0.0:
            return False
        return (k == 1 or upper >= v) and tail < v
    lower_ok = k == 1 or loga_cdf(k - 1, p) <= u
    return lower_ok and u < loga_cdf(k, p)


@njit
def loga_interval(u, p, k):
    a = p
    b = 1.0
    while b - a > BISECT_RTOL * b:
        mid = 0.5 * (a + b)
        if _loga_inside(u, mid, k):
            a = mid
        else:
            b = mid
    hi = a
    if k == 1:
        return 0.0, hi, False, True
    a = 0.0
    b = p
    while b - a > BISECT_RTOL * b:
        mid = 0.5 * (a + b)
        if _loga_inside(u, mid, k):
            b = mid
        else:
            a = mid
    return b, hi, True, True


@njit
def geometric_invert(u, p):
    """min{k >= 0 : u < 1 - p^(k+1)}."""
    if p <= 0.0:
        return 0
    q = 1.0 - u
    k = int(math.floor(math.log(q) / math.log(p)))
    if k < 0:
        k = 0
    # repair rounding in the logarithm ratio
    while k > 0 and not p**k > q:
        k -= 1
    while not p ** (k + 1) < q:
        k += 1
    return k


@njit
def hermite_invert(t, ys, fs, n, target, x0, atol):
    """Smallest t in [0, x0] with y(t) = target on a dense Hermite grid.

    ys/fs hold the values and derivatives at t_i = i * x0 / n of one
    nondecreasing component. Returns -1.0 if the grid is not monotone
    around the crossing.
    """
    h = t[1] - t[0]
    # binary search for the cell
    lo = 0
    hi = n
    if target <= ys[0]:
        return 0.0
    if target >= ys[n]:
        return t[n]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ys[mid] < target:
            lo = mid
        else:
            hi = mid
    if ys[hi] < ys[lo]:
        return -1.0
    a = 0.0
    b = 1.0
    while (b - a) * h > atol:
        s = 0.5 * (a + b)
        v = ((1 + 2 * s) * (1 - s) ** 2 * ys[lo] + s * (1 - s) ** 2 * h * fs[lo]
             + s * s * (3 - 2 * s) * ys[hi] + s * s * (s - 1) * h * fs[hi])
        if v < target:
            a = s
        else:
            b = s
    return t[lo] + 0.5 * (a + b) * h
