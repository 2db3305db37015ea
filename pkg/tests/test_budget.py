import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optobae import budget

etas = st.floats(1e-3, 1.0)
betas = st.floats(1e-3, 50.0)


def test_reference_budget():
    b = budget.build_budget(0.04, 0.7, 3.85)
    assert b.heisenberg_product == pytest.approx(math.sqrt(2 * 3.85 / 0.04), rel=1e-12)
    assert abs(b.heisenberg_product - 13.87) < 0.02
    assert abs(b.n_add_th / b.n_add_sql - 2.78) < 0.01
    assert b.n_imp_het == pytest.approx(1 / (8 * 0.04 * 0.7))
    assert round(b.n_imp_het, 2) == 4.46
    assert b.n_add_min == pytest.approx(6.94, abs=0.005)
    assert not b.beats_sql and not b.break_even


def test_ideal_conventional_saturates_bound():
    for C in (0.01, 0.3, 1.0, 17.0):
        b = budget.build_budget(1.0, C, 0.0, "homodyne-conventional")
        assert b.heisenberg_product == 1.0


@given(etas, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), betas)
def test_product_independent_of_C(eta, c1, c2, beta):
    for scheme in budget.SCHEMES:
        a = budget.build_budget(eta, c1, beta, scheme).heisenberg_product
        b = budget.build_budget(eta, c2, beta, scheme).heisenberg_product
        assert a == pytest.approx(b, rel=1e-12)
    conv = budget.build_budget(eta, c1, beta, "homodyne-conventional")
    assert conv.heisenberg_product == pytest.approx(1 / math.sqrt(eta), rel=1e-12)
    assert conv.heisenberg_product >= 1.0


def test_optimum_examples():
    assert budget.optimal_cooperativity(1.0, 0.0, "homodyne-conventional")[1] == 0.5
    c, n = budget.optimal_cooperativity(0.04, 3.85)
    assert n == pytest.approx(math.sqrt(3.85 / 0.08), rel=1e-12)
    assert c == pytest.approx(1 / math.sqrt(8 * 0.04 * 3.85), rel=1e-12)


@given(etas)
def test_break_even(eta):
    bae = budget.optimal_cooperativity(eta, 0.5)[1]
    conv = budget.optimal_cooperativity(eta, 0.0, "homodyne-conventional")[1]
    assert bae == pytest.approx(conv, rel=1e-14)
    b = budget.build_budget(eta, 1.0, 0.5)
    assert b.break_even and not b.beats_sql
    assert budget.build_budget(eta, 1.0, 0.49).beats_sql


def test_golden_section_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        eta = float(rng.uniform(0.01, 1.0))
        beta = float(10 ** rng.uniform(-2, 1.5))
        for scheme in budget.SCHEMES:
            c_cf, n_cf = budget.optimal_cooperativity(eta, beta, scheme, verify=False)
            c_gs, n_gs = budget.golden_section_minimum(eta, beta, scheme)
            assert abs(c_gs - c_cf) <= 1e-8 * c_cf
            assert abs(n_gs - n_cf) <= 1e-8 * n_cf


@given(etas, etas, betas)
def test_monotone_in_eta(e1, e2, beta):
    lo, hi = sorted((e1, e2))
    if hi - lo < 1e-9:
        return
    for scheme in budget.SCHEMES:
        assert (budget.optimal_cooperativity(hi, beta, scheme, verify=False)[1]
                < budget.optimal_cooperativity(lo, beta, scheme, verify=False)[1])


@given(etas, betas, betas)
def test_monotone_in_beta(eta, b1, b2):
    lo, hi = sorted((b1, b2))
    if hi - lo < 1e-9:
        return
    assert (budget.optimal_cooperativity(eta, hi, verify=False)[1]
            > budget.optimal_cooperativity(eta, lo, verify=False)[1])


def test_zero_heating_bae():
    with pytest.warns(RuntimeWarning):
        c, n = budget.optimal_cooperativity(0.04, 0.0)
    assert c == math.inf and n == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        b = budget.build_budget(1.0, 1.0, 0.0)
    assert b.n_add_sql == 0.5 and b.beats_sql


def test_input_errors():
    for args in [(0.0, 1.0, 1.0), (1.5, 1.0, 1.0), (0.5, 0.0, 1.0), (0.5, 1.0, -1.0)]:
        with pytest.raises(ValueError):
            budget.build_budget(*args)
    with pytest.raises(ValueError):
        budget.build_budget(0.5, 1.0, 1.0, scheme="other")


def test_bae_advantage():
    db, frac = budget.bae_advantage_db(9.8, 1.4)
    assert abs(db - 0.67) < 0.01 and abs(100 * frac - 14.3) < 0.3
    assert budget.bae_advantage_db(3.0, 0.0) == (0.0, 0.0)
    db, frac = budget.bae_advantage_db(7.0, 0.7)
    assert frac == pytest.approx(0.1) and round(db, 2) == 0.46
    with pytest.raises(ValueError):
        budget.bae_advantage_db(1.0, 1.0)
    with pytest.raises(ValueError):
        budget.bae_advantage_db(1.0, -0.1)


def test_table_and_csv():
    b = budget.build_budget(0.04, 0.7, 3.85)
    table = budget.budget_table(b)
    assert "13.8" in table and "heisenberg_product" in table
    assert "sql_ratio" in table and "2.77" in table
    rows = dict(line.split(",", 1) for line in budget.budget_csv(b).splitlines()[1:])
    assert float(rows["heisenberg_product"]) == b.heisenberg_product
    assert rows["scheme"] == "heterodyne-BAE"
