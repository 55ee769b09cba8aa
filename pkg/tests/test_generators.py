import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esc_lab.analysis import PracticalSetSpec, estimate_omega_star, y0_lower_bound
from esc_lab.dynamics import DitherBank
from esc_lab.generators import (FAMILIES, check_c1_wronskian, check_vanishing, default_y_grid,
                                make_pair, sample_c2_bounds)

C1_FAMILIES = ["suttner_dashkovskiy", "grushkovskaya_bounded"]


def test_suttner_pair_at_one(sd_pair):
    f1, f2 = sd_pair(np.array(1.0))
    assert f1 == pytest.approx(1.0)
    assert f2 == pytest.approx(0.0, abs=1e-15)


def test_power_pair_values():
    f1, f2 = make_pair("power", r=0.5)(np.array(4.0))
    assert (f1, f2) == (pytest.approx(2.0), pytest.approx(8.0))


@pytest.mark.parametrize("r", [0.0, 2.0, -1.0, 3.0])
def test_power_rejects_bad_exponent(r):
    with pytest.raises(ValueError):
        make_pair("power", r=r)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown pair family"):
        make_pair("sawtooth")


def test_bounded_pair_vanishes_at_zero(gb_pair):
    ok, mags = check_vanishing(gb_pair)
    assert ok
    assert np.all(np.diff(mags) < 0)


def test_classic_pair_fails_c1():
    pair = make_pair("classic")
    assert not pair.c1
    ok, mags = check_vanishing(pair)
    assert not ok
    assert mags[-1] == 1.0


def test_wronskian_suttner(sd_pair):
    res, ok = check_c1_wronskian(sd_pair, default_y_grid(), tol=1e-12)
    assert ok, res


def test_wronskian_bounded_pair(gb_pair):
    res, ok = check_c1_wronskian(gb_pair, np.linspace(1e-2, 3, 2000), tol=1e-8)
    assert ok, res


def test_power_wronskian_is_not_one():
    # y**r * y**(2-r) has Wronskian 2(1-r)y; the residual tracks that closed form
    pair = make_pair("power", r=0.5)
    y = default_y_grid()
    assert np.allclose(pair.wronskian(y), y, rtol=1e-12)
    res, ok = check_c1_wronskian(pair, y)
    assert not ok
    assert res == pytest.approx(9.0, rel=1e-9)


def test_wronskian_rejects_nonpositive_grid(sd_pair):
    with pytest.raises(ValueError):
        check_c1_wronskian(sd_pair, np.array([0.0, 1.0]))


@pytest.mark.parametrize("family, fd_hi", [("suttner_dashkovskiy", 10.0),
                                            ("grushkovskaya_bounded", 5.0)])
def test_wronskian_property(family, fd_hi):
    pair = make_pair(family)
    assert check_c1_wronskian(pair, default_y_grid(), tol=1e-8)[1]
    # the bounded pair's phase grows like e**y, so a 1e-6 y difference step stops
    # resolving it beyond y ~ 7; the difference check runs where the step is meaningful
    assert check_c1_wronskian(pair, default_y_grid(hi=fd_hi), tol=1e-5, finite_difference=True)[1]


def test_suttner_envelope_is_sqrt(sd_pair):
    y = np.logspace(-12, -2, 200)
    f1, f2 = sd_pair(y)
    assert np.all(np.maximum(np.abs(f1), np.abs(f2)) <= 10 * np.sqrt(y))


@pytest.mark.parametrize("family", C1_FAMILIES)
def test_pairs_shrink_to_zero(family):
    y = np.logspace(-14, -2, 50)
    mags = np.max(np.abs(np.array(make_pair(family)(y))), axis=0)
    assert mags[0] < 1e-6


@settings(max_examples=50, deadline=None)
@given(y=st.floats(1e-3, 10), family=st.sampled_from(C1_FAMILIES))
def test_bracket_coefficient_is_minus_one(y, family):
    pair = make_pair(family)
    y = np.array(y)
    coef = pair.f1_prime(y) * pair.f2(y) - pair.f2_prime(y) * pair.f1(y)
    assert coef == pytest.approx(-1.0, abs=1e-8)


def test_families_listed():
    for f in FAMILIES:
        make_pair(f)


# sampled bounds ------------------------------------------------------------------

@pytest.fixture(scope="module")
def example_report():
    from esc_lab.cost import quadratic_shifted
    cost = quadratic_shifted(1.0, 1.0, 2020.0, domain=(-3.0, 5.0))
    spec = PracticalSetSpec.auto(3.0, 5.0, 0.5, kappa=2.0)
    return sample_c2_bounds(make_pair("suttner_dashkovskiy"), cost, spec, DitherBank(2.0, (1,)))


def test_g1_drift_bound(example_report):
    # on the g1 layer |grad J|**2 = 2 Jt >= 2 J0
    assert example_report.b[0] >= 2.0 * 3.0


def test_g2_remainders_vanish(example_report):
    assert example_report.c1[1] == 0.0
    assert example_report.c2[1] == 0.0


def test_report_valid_and_positive(example_report):
    assert example_report.valid
    assert example_report.positive()
    assert np.all(example_report.sample_count == 400)
    assert np.isfinite(estimate_omega_star(example_report, 0.25))


def test_g3_drift_bound_small_epsilon(quad, sd_pair, bank):
    eps = 0.1
    spec = PracticalSetSpec(3.0, 5.0, y0_lower_bound(2.0, eps) + 1e-3, eps, kappa=2.0)
    rep = sample_c2_bounds(sd_pair, quad, spec, bank, count=200)
    assert rep.b[2] >= eps


def test_grid_off_epigraph_is_flagged(quad, sd_pair, bank, spec):
    grid = np.array([[3.0, 2024.0], [3.0, 2000.0]])
    rep = sample_c2_bounds(sd_pair, quad, spec, bank, grid=grid)
    assert not rep.valid
    assert any("off the strict epigraph" in p for p in rep.problems)
