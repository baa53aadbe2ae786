from pathlib import Path

import pytest
from scipy import stats

from boltzgen import parse_file, parse_spec

CORPUS = Path(__file__).parent / "corpus"

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def corpus_spec(name):
    return parse_file(CORPUS / f"{name}.bg")


def corpus_names():
    return sorted(p.stem for p in CORPUS.glob("*.bg"))


def first_class(spec):
    return spec.defs[0].name


def chi_square(observed, expected):
    """Pearson statistic and p-value; cells with zero expectation must be empty."""
    stat = 0.0
    cells = 0
    for o, e in zip(observed, expected):
        if e == 0:
            assert o == 0, "observation in an impossible cell"
            continue
        stat += (o - e) ** 2 / e
        cells += 1
    return stat, float(stats.chi2.sf(stat, cells - 1))


def pool_tail(observed, expected, min_expected=5.0):
    """Merge trailing cells until each has expectation >= min_expected."""
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc or o_acc:
        if exp:
            obs[-1] += o_acc
            exp[-1] += e_acc
        else:
            obs.append(o_acc)
            exp.append(e_acc)
    return obs, exp


@pytest.fixture
def ptrees():
    return parse_spec("P = Z * Seq(P);")


@pytest.fixture(params=corpus_names())
def corpus(request):
    return request.param, corpus_spec(request.param)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
