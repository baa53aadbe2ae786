import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from boltzgen import distributions as dist
from boltzgen import parse_spec
from boltzgen.errors import NeedMoreTerms, ParameterError
from boltzgen.oracle import evaluate

from conftest import chi_square, pool_tail

uniforms = st.floats(0.0, 1.0, exclude_max=True)
probs = st.floats(1e-6, 1 - 1e-6)


def _probe_points(iv, rel=1e-7):
    """Points strictly inside the interval and just beyond each finite end."""
    lo = iv.lo if math.isfinite(iv.lo) else -1e6
    hi = iv.hi if math.isfinite(iv.hi) else lo + 1e6
    w = hi - lo
    inside = [q for q in (lo + w * f for f in (rel, 0.25, 0.5, 0.75, 1 - rel)) if q in iv]
    outside = []
    if math.isfinite(iv.lo):
        outside.append(iv.lo - max(w, abs(iv.lo), 1e-12) * rel)
    if math.isfinite(iv.hi):
        outside.append(iv.hi + max(w, abs(iv.hi), 1e-12) * rel)
    return inside, outside


def _check_interval(draw, u, p, valid):
    res = draw(u, p)
    iv = res.interval
    assert p in iv
    inside, outside = _probe_points(iv)
    for q in inside:
        if valid(q):
            assert draw(u, q, False).value == res.value, (u, p, q, iv)
    for q in outside:
        if valid(q):
            assert draw(u, q, False).value != res.value, (u, p, q, iv)


@settings(max_examples=300, deadline=None)
@given(uniforms, st.floats(0.0, 1.0))
def test_bernoulli_interval(u, p):
    _check_interval(dist.bernoulli, u, p, lambda q: 0 <= q <= 1)


@settings(max_examples=300, deadline=None)
@given(uniforms, st.floats(0.0, 0.999))
def test_geometric_interval(u, p):
    _check_interval(dist.geometric, u, p, lambda q: 0 <= q < 1)


@settings(max_examples=300, deadline=None)
@given(uniforms, st.floats(1e-3, 50.0))
def test_poisson_interval(u, lam):
    _check_interval(dist.poisson, u, lam, lambda q: 0 < q <= dist.POISSON_CAP)


@settings(max_examples=200, deadline=None)
@given(uniforms, st.floats(1e-3, 20.0))
def test_truncated_poisson_interval(u, lam):
    _check_interval(lambda u, q, t=True: dist.poisson_truncated(u, q, 1, t), u, lam, lambda q: q > 0)


@settings(max_examples=300, deadline=None)
@given(uniforms, st.floats(1e-3, 0.99))
def test_loga_interval(u, p):
    _check_interval(dist.loga, u, p, lambda q: 0 < q < 1)


def test_poisson_at_zero_rate():
    r = dist.poisson(0.3, 0.0)
    assert r.value == 0
    # K stays 0 exactly while exp(-lam) > u
    assert -math.log(0.3) not in r.interval
    assert 0.9 * -math.log(0.3) in r.interval
    assert dist.poisson(0.3, 1.01 * -math.log(0.3), False).value == 1


def _law(draw, pmf, n=200000, seed=1):
    u = np.random.default_rng(seed).random(n)
    vals = np.array([draw(float(v)).value for v in u])
    top = int(vals.max())
    obs = np.bincount(vals, minlength=top + 1).tolist()
    exp = [n * pmf(k) for k in range(top + 1)]
    exp[-1] += n * max(0.0, 1 - sum(pmf(k) for k in range(top + 1)))
    return chi_square(*pool_tail(obs, exp))[1]


def test_geometric_law():
    p = 0.7
    assert _law(lambda u: dist.geometric(u, p, False), lambda k: (1 - p) * p**k) > 1e-3


def test_poisson_law():
    lam = 3.5
    assert _law(lambda u: dist.poisson(u, lam, False), lambda k: stats.poisson.pmf(k, lam)) > 1e-3


def test_truncated_poisson_law():
    lam = 0.8
    z = -math.expm1(-lam)
    assert _law(lambda u: dist.poisson_truncated(u, lam, 1, False),
                lambda k: stats.poisson.pmf(k, lam) / z if k else 0.0) > 1e-3


def test_loga_law():
    p = 0.6
    assert _law(lambda u: dist.loga(u, p, False), lambda k: stats.logser.pmf(k, p) if k else 0.0) > 1e-3


def test_exact_inversion_examples():
    # P(K=0) = 1 - p for the geometric law
    assert dist.geometric(0.29999, 0.7).value == 0
    assert dist.geometric(0.30001, 0.7).value == 1
    # Poisson CDF(0) = e^-1
    assert dist.poisson(math.exp(-1) - 1e-9, 1.0).value == 0
    assert dist.poisson(math.exp(-1) + 1e-9, 1.0).value == 1
    # logarithmic CDF(1) = p / log(1/(1-p))
    p = 0.5
    c1 = p / math.log(2)
    assert dist.loga(c1 - 1e-9, p).value == 1
    assert dist.loga(c1 + 1e-9, p).value == 2


@pytest.mark.parametrize("draw, bad", [
    (dist.bernoulli, 1.5), (dist.geometric, 1.0), (dist.poisson, -1.0), (dist.loga, 1.0),
    (dist.poisson, 1e7),
])
def test_parameter_errors(draw, bad):
    with pytest.raises(ParameterError):
        draw(0.5, bad)


def test_uniform_range_checked():
    with pytest.raises(ParameterError):
        dist.bernoulli(1.0, 0.5)


def _partition_terms(x, n=80):
    # inner class Z * Seq(Z) at x^j
    return [x**j / (1 - x**j) for j in range(1, n + 1)]


def test_max_index_cdf():
    x = 0.5
    inner = _partition_terms(x)
    c = math.exp(sum(a / j for j, a in enumerate(inner, 1)))
    cdf = [math.exp(sum(a / j for j, a in enumerate(inner[:k], 1))) / c for k in range(10)]
    assert cdf[0] == pytest.approx(1 / c)
    for k in range(9):
        assert dist.max_index(cdf[k] - 1e-12, inner, c).value == k
        assert dist.max_index(cdf[k] + 1e-12, inner, c).value == k + 1


def test_max_index_law_and_example():
    x = 0.5
    inner = _partition_terms(x)
    c = evaluate(parse_spec("Part = MSet(Z * Seq(Z));"), x).values["Part"]
    p_le1 = math.exp(inner[0]) / c
    assert p_le1 == pytest.approx(0.7851, abs=1e-3)
    u = np.random.default_rng(3).random(50000)
    ks = [dist.max_index(float(v), inner, c, False).value for v in u]
    assert np.mean(np.array(ks) <= 1) == pytest.approx(p_le1, abs=4 * math.sqrt(p_le1 * (1 - p_le1) / 50000))


@settings(max_examples=200, deadline=None)
@given(uniforms, st.floats(0.05, 0.7))
def test_max_index_intervals(u, x):
    inner = _partition_terms(x, 200)
    c = math.exp(sum(a / j for j, a in enumerate(inner, 1)))
    res = dist.max_index(u, inner, c)
    assert c in res.c_interval
    for j, iv in enumerate(res.intervals):
        assert inner[j] in iv
        for q in _probe_points(iv)[0]:
            if q > 0:
                moved = list(inner)
                moved[j] = q
                assert dist.max_index(u, moved, c, False).value == res.value
    for q in _probe_points(res.c_interval)[0]:
        if q >= 1:
            assert dist.max_index(u, inner, q, False).value == res.value


def test_max_index_needs_terms():
    with pytest.raises(NeedMoreTerms):
        dist.max_index(0.999999, [0.5, 0.25], 10.0)


def test_h_density_tan():
    spec = parse_spec("@labelled\nT' = 1 + T * T;\nT(0) = 0;")
    table = evaluate(spec, 1.2)
    for u, x0 in [(0.5, 1.0), (0.1, 1.2), (0.9, 0.3)]:
        t = dist.sample_h_density(u, "T", x0, table.solver).value
        assert t == pytest.approx(math.atan(u * math.tan(x0)), abs=1e-9)
    assert dist.sample_h_density(0.5, "T", 1.0, table.solver).value == pytest.approx(0.66162, abs=1e-5)


def test_h_density_law():
    # Y = 1/(1-t), Y(0) = 1: CDF of t is (Y(t) - 1) / (Y(x0) - 1)
    table = evaluate(parse_spec("@labelled\nY' = Y * Y;\nY(0) = 1;"), 0.6)
    x0 = 0.6
    u = np.random.default_rng(5).random(20000)
    ts = np.array([dist.sample_h_density(float(v), "Y", x0, table.solver).value for v in u])
    cdf = lambda t: (1 / (1 - t) - 1) / (1 / (1 - x0) - 1)
    assert stats.kstest(ts, cdf).pvalue > 1e-3


def test_h_density_domain():
    table = evaluate(parse_spec("@labelled\nT' = 1 + T * T;\nT(0) = 0;"), 1.0)
    with pytest.raises(ParameterError):
        dist.sample_h_density(0.5, "T", 1.5, table.solver)
