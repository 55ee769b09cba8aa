import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esc_lab.cost import quadratic_shifted
from esc_lab.dynamics import (GRUSHKOVSKAYA_SIGNS, PROPOSED_SIGNS, DitherBank, DomainError,
                              averaged_gain, beta_coefficient, dither, dither_bound_constant,
                              integrate, iterated_dither_integrals, make_system, rhs_grushkovskaya,
                              rhs_lie_approx, rhs_proposed, rhs_suttner)
from esc_lab.generators import make_pair

C1_FAMILIES = ["suttner_dashkovskiy", "grushkovskaya_bounded"]


# dithers -------------------------------------------------------------------------

def test_dither_values(bank):
    assert dither(bank, 0, 1, 0.0) == 0.0
    assert dither(bank, 0, 2, 0.0) == pytest.approx(2 * math.sqrt(2 * math.pi))
    assert dither(bank, 0, 2, 0.0) == pytest.approx(5.01326, abs=1e-5)


@settings(max_examples=50, deadline=None)
@given(t=st.floats(0, 50), s=st.sampled_from([1, 2]), om=st.floats(0.5, 50),
       w=st.integers(1, 5))
def test_dither_periodic(t, s, om, w):
    b = DitherBank(om, (w,))
    T = 1.0 / (w * om)
    amp = 2 * math.sqrt(math.pi * w * om)
    assert dither(b, 0, s, t + T) == pytest.approx(dither(b, 0, s, t), abs=1e-9 * amp * (1 + t / T))


@pytest.mark.parametrize("s", [1, 2])
def test_dither_zero_mean(bank, s):
    T = bank.fastest_period
    assert abs(bank.U(0, s, T) - bank.U(0, s, 0.0)) <= 1e-12


def test_v_table(bank):
    assert bank.v((0, 1), (0, 2)) == 1
    assert bank.v((0, 2), (0, 1)) == -1
    assert bank.v((0, 1), (0, 1)) == 0
    b2 = DitherBank(1.0, (1, 2))
    assert b2.v((0, 1), (1, 2)) == 0


def test_first_antiderivative_sup(bank):
    t = np.linspace(0, bank.fastest_period, 10001)
    U, _ = iterated_dither_integrals(bank, (0, 1), (0, 2), t)
    assert np.max(np.abs(U)) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-9)
    assert np.max(np.abs(U)) == pytest.approx(0.39894, abs=1e-5)


@pytest.mark.parametrize("mult", [(1,), (1, 2), (2, 3)])
def test_second_antiderivative_is_antiderivative(mult):
    b = DitherBank(3.0, mult)
    t = np.linspace(0, 2.0, 20001)
    for l1 in b.channels:
        for l2 in b.channels:
            U2 = b.U2(l1, l2, t)
            d = np.gradient(U2, t, edge_order=2)
            target = b.v(l1, l2) + b.U(*l1, t) * b.u(*l2, t)
            scale = np.max(np.abs(target)) + 1
            assert np.max(np.abs(d - target)[2:-2]) <= 1e-3 * scale
            # zero mean over the common period
            T = 1.0
            assert abs(b.U2(l1, l2, T) - b.U2(l1, l2, 0.0)) <= 1e-12 * scale


def test_bound_constants_independent_of_omega():
    vals = []
    for om in (1.0, 10.0, 100.0):
        b = DitherBank(om, (1,))
        t = np.linspace(0, b.fastest_period, 4097)
        u1 = np.max(np.abs(b.U(0, 1, t))) * math.sqrt(om)
        u2 = max(np.max(np.abs(b.U2(a, c, t))) for a in b.channels for c in b.channels) * om
        vals.append((u1, u2))
    vals = np.array(vals)
    assert np.ptp(vals[:, 0]) <= 1e-9
    assert np.ptp(vals[:, 1]) <= 1e-9
    a = dither_bound_constant(DitherBank(1.0, (1,)))
    assert np.all(vals <= a + 1e-12)


@settings(max_examples=25, deadline=None)
@given(om=st.floats(1, 200), t=st.floats(0, 10))
def test_bound_constant_covers_all_terms(om, t):
    b = DitherBank(om, (1, 2))
    a = dither_bound_constant(b)
    for l1 in b.channels:
        assert abs(b.U(*l1, t)) <= a / math.sqrt(om) * (1 + 1e-12)
        for l2 in b.channels:
            assert abs(b.U2(l1, l2, t)) <= a / om * (1 + 1e-12)
            for l3 in b.channels:
                assert abs(b.U2(l1, l2, t) * b.u(*l3, t)) <= a / math.sqrt(om) * (1 + 1e-12)


def test_beta_coefficients(bank):
    assert beta_coefficient(bank, (0, 1), (0, 2)) == pytest.approx(-1.0, abs=1e-9)
    assert beta_coefficient(bank, (0, 2), (0, 1)) == pytest.approx(1.0, abs=1e-9)
    b2 = DitherBank(2.0, (1, 2))
    assert beta_coefficient(b2, (0, 1), (1, 2)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("mult", [(1, 1), (0,), (1.5,), (-1,)])
def test_bank_rejects_bad_multipliers(mult):
    with pytest.raises(ValueError):
        DitherBank(1.0, mult)


# right-hand sides ----------------------------------------------------------------

def test_proposed_at_unit_gap(quad, sd_pair, bank):
    theta = np.array([3.0, float(quad.eval(np.array([3.0]))) + 1.0])
    d, u = rhs_proposed(quad, sd_pair, bank, theta, 0.0)
    assert d[0] == pytest.approx(0.0, abs=1e-15)
    assert d[1] == pytest.approx(-1.0)
    assert u[0] == d[0]


def test_proposed_initial_condition(quad, sd_pair, bank):
    d, _ = rhs_proposed(quad, sd_pair, bank, np.array([3.0, 2024.0]), 0.3)
    assert d[1] == pytest.approx(-2.0)


def test_proposed_vanishes_near_graph(quad, sd_pair, bank):
    j = float(quad.eval(np.array([3.0])))
    mags = [abs(rhs_proposed(quad, sd_pair, bank, np.array([3.0, j + g]), 0.1)[0][0])
            for g in (1e-2, 1e-4, 1e-6)]
    assert mags[0] > mags[1] > mags[2]


def test_proposed_rejects_graph(quad, sd_pair, bank):
    with pytest.raises(DomainError):
        rhs_proposed(quad, sd_pair, bank, np.array([3.0, 2022.0]), 0.0)


def test_lie_approx_values(quad):
    assert np.allclose(rhs_lie_approx(quad, np.array([3.0, 2024.0])), [-2.0, -2.0])
    assert rhs_lie_approx(quad, np.array([1.0, 2030.0]))[0] == 0.0
    assert rhs_lie_approx(quad, np.array([2.0, 2020.5]))[1] == 0.0


def test_grushkovskaya_at_minimizer(quad, sd_pair, bank):
    for t in (0.05, 0.13, 0.4):
        xdot, _ = rhs_grushkovskaya(quad, sd_pair, bank, 2019.0, np.array([1.0]), t)
        assert xdot[0] == pytest.approx(-dither(bank, 0, 1, t), abs=1e-12)
    assert rhs_grushkovskaya(quad, sd_pair, bank, 2019.0, np.array([1.0]), 0.0)[0][0] == 0.0


def test_grushkovskaya_exact_offset_vanishes(quad, sd_pair, bank):
    mags = [abs(rhs_grushkovskaya(quad, sd_pair, bank, 2020.0, np.array([1.0 + d]), 0.1)[0][0])
            for d in (1e-1, 1e-3, 1e-5)]
    assert mags[0] > mags[1] > mags[2]


def test_grushkovskaya_domain(quad, sd_pair, bank):
    with pytest.raises(DomainError):
        rhs_grushkovskaya(quad, sd_pair, bank, 2030.0, np.array([1.0]), 0.0)


def test_suttner_initial_rates(quad):
    d, u = rhs_suttner(quad, np.array([3.0, 2024.0, 2.0]))
    assert d[2] == pytest.approx(1 / 32)
    assert d[1] == pytest.approx(-2.0)
    assert abs(u[0]) <= 0.25
    assert u[0] == pytest.approx(0.25 * math.sin(2.5))


def test_suttner_zero_input(quad):
    j = float(quad.eval(np.array([3.0])))
    d, _ = rhs_suttner(quad, np.array([3.0, j + 1.0, math.pi - 1.0]))
    assert d[0] == pytest.approx(0.0, abs=1e-15)


def test_suttner_rate_blows_up(quad):
    j = float(quad.eval(np.array([3.0])))
    rates = [rhs_suttner(quad, np.array([3.0, j + g, 0.0]))[0][2] for g in (1e-1, 1e-2)]
    assert rates[1] / rates[0] == pytest.approx(1e5, rel=1e-6)


def test_proposed_system_refuses_classic_pair(quad, bank):
    with pytest.raises(ValueError, match="cannot drive"):
        make_system("proposed", quad, bank, make_pair("classic"))


# averaging ---------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(y=st.floats(1e-3, 10), family=st.sampled_from(C1_FAMILIES))
def test_averaged_field_is_gradient_descent(y, family):
    pair = make_pair(family)
    assert averaged_gain(pair, np.array(y)) == pytest.approx(1.0, abs=1e-8)
    assert averaged_gain(pair, np.array(y), GRUSHKOVSKAYA_SIGNS, "offset") == pytest.approx(1.0, abs=1e-8)


def test_literal_sign_pattern_ascends(sd_pair):
    # unsigned channels average to gradient ascent on the epigraph argument
    assert averaged_gain(sd_pair, np.array(1.3), (1.0, 1.0)) == pytest.approx(-1.0)
    assert PROPOSED_SIGNS == (-1.0, 1.0)


def test_averaged_field_matches_fd_bracket(quad, sd_pair, rng):
    # finite-difference bracket of the signed fields on random epigraph states
    from esc_lab.analysis import fd_step, lie, lie_table
    from esc_lab.dynamics import control_fields, drift_field
    x = rng.uniform(-1.0, 3.0, 100)
    y = rng.uniform(0.05, 3.0, 100)
    th = np.column_stack([x, quad.eval(x[:, None]) + y])
    fields = control_fields(quad, sd_pair)
    xcoord = lambda t: t[..., 0]
    tab = lie_table(xcoord, drift_field(quad), fields, th, lambda t: fd_step(quad, t), order=2)
    avg = tab.second[((0, 1), (0, 2))] - tab.second[((0, 2), (0, 1))]
    assert np.allclose(avg, -quad.grad(th[:, :1])[:, 0], atol=1e-8 * 2 + 1e-6)


# integrator ----------------------------------------------------------------------

def test_gradient_flow_closed_form(quad, bank):
    tr = integrate(make_system("lie_approx", quad, bank), [3.0, 2024.0], 10.0)
    assert tr.x[-1, 0] == pytest.approx(1 + 2 * math.exp(-10), abs=1e-6)
    assert tr.x[-1, 0] == pytest.approx(1.0000908, abs=1e-6)
    assert np.all(np.diff(tr.t) > 0)
    assert len(tr.t) == len(tr.states) == len(tr.controls)


def test_z_channel_at_minimizer(quad, bank):
    tr = integrate(make_system("lie_approx", quad, bank), [1.0, 2023.0], 3.0)
    assert np.allclose(tr.column("z"), 2020.0 + 3.0 * np.exp(-tr.t), atol=1e-10)


def test_rk4_order(quad):
    errs = []
    exact = 1 + 2 * math.exp(-10)
    for om in (0.1, 0.2):
        b = DitherBank(om, (1,))
        tr = integrate(make_system("lie_approx", quad, b), [3.0, 2024.0], 10.0, 32)
        errs.append(abs(tr.x[-1, 0] - exact))
    ref = integrate(make_system("lie_approx", quad, DitherBank(0.8, (1,))), [3.0, 2024.0], 10.0, 32)
    assert abs(ref.x[-1, 0] - exact) < errs[1] / 100
    assert 12 < errs[0] / errs[1] < 20


def test_integrator_rejects_coarse_step(quad, bank):
    with pytest.raises(ValueError):
        integrate(make_system("lie_approx", quad, bank), [3.0, 2024.0], 1.0, 16)


def test_integrator_rejects_bad_start(quad, sd_pair, bank):
    with pytest.raises(ValueError, match="initial state"):
        integrate(make_system("proposed", quad, bank, sd_pair), [3.0, 2000.0], 1.0)


def test_literal_signs_leave_epigraph(quad, sd_pair, bank):
    from esc_lab.dynamics import ProposedSystem
    sys_ = ProposedSystem("literal", quad, bank, pair=sd_pair, signs=(1.0, 1.0))
    tr = integrate(sys_, [3.0, 2024.0], 5.0)
    assert tr.aborted
    assert tr.t[-1] < 5.0


def test_suttner_truncates(quad, bank):
    tr = integrate(make_system("suttner", quad, bank), [3.0, 2024.0, 2.0], 40.0, max_steps=3000)
    assert tr.aborted
    assert tr.reason == "step budget exhausted"
    assert np.all(np.diff(tr.column("Omega")) >= 0)
    assert np.all(np.diff(tr.column("z")) < 1e-10)


def test_monotone_z_proposed(quad, sd_pair, bank):
    tr = integrate(make_system("proposed", quad, bank, sd_pair), [3.0, 2024.0], 10.0)
    z = tr.column("z")
    assert np.all(np.diff(z) < 1e-10)
    zt = z - 2020.0
    assert np.all(zt >= 0.999 * zt[0] * np.exp(-tr.t))


def test_batched_states_match_single(quad, sd_pair, bank):
    s = make_system("proposed", quad, bank, sd_pair)
    both = integrate(s, [[3.0, 2024.0], [0.0, 2021.0]], 1.0)
    one = integrate(s, [0.0, 2021.0], 1.0)
    assert np.array_equal(both.states[:, 1], one.states)
