"""
Tests for the deterministic backward-induction pricer and the
default-state enumeration it is checked against.
"""

import math

import numpy as np
import pytest

from src.credit.default_model import RecoveryProfile, rho_feasible_range
from src.credit.risky_discounting import CreditSide, ModelRegime, Timing
from src.curves.term_structures import (
    CurveKind,
    TermStructure,
    default_probability,
    discount_factor,
    survival_probability,
)
from src.errors import ConfigurationError, GridAlignmentError
from src.pricing.lattice_pricer import (
    CashflowSchedule,
    CurveSet,
    PricingGrid,
    ValuationResult,
    cva_from,
    enumerate_default_states,
    price_risk_free,
    price_risky,
)

UNI_CTM = ModelRegime(CreditSide.UNILATERAL_B, Timing.CTM)
UNI_DTM = ModelRegime(CreditSide.UNILATERAL_B, Timing.DTM)
BI_CTM = ModelRegime(CreditSide.BILATERAL, Timing.CTM)
BI_DTM = ModelRegime(CreditSide.BILATERAL, Timing.DTM)


def hazard(rate, horizon=30.0):
    return TermStructure.flat(rate, horizon, CurveKind.HAZARD)


def flat_curves(r=0.03, h_B=0.02, h_A=None):
    return CurveSet(TermStructure.flat(r, 30.0), hazard(h_B),
                    None if h_A is None else hazard(h_A))


# ---------------------------------------------------------------------------
# schedules and grids
# ---------------------------------------------------------------------------

def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        CashflowSchedule(())
    with pytest.raises(ConfigurationError):
        CashflowSchedule(((1.0, 1.0), (0.5, 1.0)))
    with pytest.raises(ConfigurationError):
        CashflowSchedule(((1.0, float("nan")),))


def test_fixed_coupon_bond_layout():
    bond = CashflowSchedule.fixed_coupon_bond(2.0, 0.04, frequency=2, principal=100.0)
    assert bond.times == (0.5, 1.0, 1.5, 2.0)
    assert bond.amounts == (2.0, 2.0, 2.0, 102.0)
    with pytest.raises(ConfigurationError):
        CashflowSchedule.fixed_coupon_bond(1.3, 0.04, frequency=2)


def test_grid_inserts_payment_dates():
    schedule = CashflowSchedule(((0.3, 1.0), (1.0, 1.0)))
    grid = PricingGrid.build(schedule, 0.25)
    assert grid.node_times == (0.0, 0.25, 0.3, 0.5, 0.75, 1.0)
    assert grid.step_counts(schedule) == [2, 3]


def test_grid_rejects_off_node_times():
    grid = PricingGrid(0.5, (0.0, 0.5, 1.0))
    with pytest.raises(GridAlignmentError):
        grid.node_index(0.7)


# ---------------------------------------------------------------------------
# risk-free value and cva_from
# ---------------------------------------------------------------------------

def test_risk_free_examples():
    schedule = CashflowSchedule(((0.5, 1.0), (1.0, -2.0), (3.0, 4.0)))
    assert price_risk_free(schedule, TermStructure.flat(0.0, 5.0)) == pytest.approx(3.0, abs=1e-15)
    single = CashflowSchedule.zero_coupon(1.0)
    assert price_risk_free(single, TermStructure.flat(0.03, 5.0)) == pytest.approx(0.9704455335485082, rel=1e-14)


def test_risk_free_is_linear():
    curve = TermStructure((0.0, 1.0, 5.0), (0.02, 0.04))
    schedule = CashflowSchedule(((0.5, 1.0), (2.0, -0.5), (4.0, 3.0)))
    assert price_risk_free(schedule.scaled(-2.5), curve) == pytest.approx(
        -2.5 * price_risk_free(schedule, curve), rel=1e-14)


def test_payments_must_follow_valuation_time():
    with pytest.raises(ConfigurationError):
        price_risk_free(CashflowSchedule.zero_coupon(1.0), TermStructure.flat(0.03, 5.0), valuation_time=1.0)


def test_cva_from():
    assert cva_from(1.25, 1.25) == 0.0
    result = ValuationResult.from_values(1.0, 0.9)
    assert result.cva == pytest.approx(0.1, abs=1e-15)


# ---------------------------------------------------------------------------
# price_risky
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("regime", [UNI_CTM, UNI_DTM, BI_CTM, BI_DTM])
def test_zero_hazard_is_risk_free(regime):
    schedule = CashflowSchedule(((0.5, 1.0), (1.0, -2.0), (2.0, 1.5)))
    curves = CurveSet(TermStructure.flat(0.03, 5.0), hazard(0.0), hazard(0.0))
    rec = RecoveryProfile(phi_A=0.2, phi_B=0.4, phibar_A=0.0, phibar_B=0.3)
    result = price_risky(schedule, regime, curves, rec, grid=PricingGrid.build(schedule, 1 / 52))
    assert result.cva == 0.0
    assert result.risky == result.risk_free


@pytest.mark.parametrize("regime", [UNI_DTM, BI_DTM])
def test_full_recovery_gives_zero_dtm_cva(regime):
    schedule = CashflowSchedule(((0.5, 2.0), (1.0, -3.0), (1.5, 1.0), (3.0, 4.0)))
    curves = flat_curves(0.04, 0.3, 0.2)
    rec = RecoveryProfile(phi_A=1.0, phi_B=1.0, phibar_A=1.0, phibar_B=1.0, phi_AB=1.0)
    result = price_risky(schedule, regime, curves, rec, rho=0.4)
    assert result.cva == 0.0
    assert result.risky == result.risk_free


def test_unilateral_ctm_matches_closed_form():
    curves = flat_curves(0.03, 0.02)
    rec = RecoveryProfile.unilateral(0.7)
    schedule = CashflowSchedule.zero_coupon(1.0, 100.0)
    result = price_risky(schedule, UNI_CTM, curves, rec)
    expected = 100.0 * math.exp(-(0.03 + 0.02 * 0.3))
    assert result.risky == pytest.approx(expected, rel=1e-6)
    assert result.risk_free == pytest.approx(100.0 * math.exp(-0.03), rel=1e-13)


def test_unilateral_dtm_matches_product_formula():
    curves = CurveSet(TermStructure((0.0, 1.0, 10.0), (0.02, 0.035)),
                      TermStructure((0.0, 2.0, 10.0), (0.01, 0.04), CurveKind.HAZARD))
    rec = RecoveryProfile.unilateral(0.4)
    schedule = CashflowSchedule(((0.5, 1.0), (1.5, 2.0), (3.0, 0.5), (4.0, 3.0)))
    times = (0.0,) + schedule.times
    expected = 0.0
    factor = 1.0
    for j, amount in enumerate(schedule.amounts):
        D = discount_factor(curves.discount, times[j], times[j + 1])
        Q = default_probability(curves.hazard_B, times[j], times[j + 1])
        factor *= D * (1.0 - Q * (1.0 - 0.4))
        expected += amount * factor
    assert price_risky(schedule, UNI_DTM, curves, rec).risky == pytest.approx(expected, rel=1e-13)


def test_dtm_sign_uses_claim_including_cash_flow():
    # the last payment outweighs the negative continuation, so the receivable factor applies
    curves = flat_curves(0.0, 0.1)
    rec = RecoveryProfile.unilateral(0.0)
    schedule = CashflowSchedule(((1.0, 3.0), (2.0, -1.0)))
    S = math.exp(-0.1)
    v2 = -1.0
    v1 = S * (3.0 + v2)
    assert price_risky(schedule, UNI_DTM, curves, rec).risky == pytest.approx(v1, rel=1e-14)


def test_dtm_checks_alignment_only_with_grid():
    schedule = CashflowSchedule(((0.3, 1.0),))
    curves = flat_curves()
    rec = RecoveryProfile.unilateral(0.5)
    price_risky(schedule, UNI_DTM, curves, rec)
    with pytest.raises(GridAlignmentError):
        price_risky(schedule, UNI_DTM, curves, rec, grid=PricingGrid(0.25, (0.0, 0.25, 0.5)))
    with pytest.raises(GridAlignmentError):
        price_risky(schedule, UNI_CTM, curves, rec, grid=PricingGrid(0.25, (0.0, 0.25, 0.5)))


@pytest.mark.parametrize("timing", [Timing.CTM, Timing.DTM])
def test_bilateral_without_A_risk_collapses_to_unilateral(timing):
    schedule = CashflowSchedule(((0.5, 2.0), (1.0, -3.0), (1.5, 1.0), (2.0, -0.5)))
    grid = PricingGrid.build(schedule, 1 / 104)
    rec = RecoveryProfile(phi_A=0.3, phi_B=0.45, phibar_A=1.0, phibar_B=1.0, phi_AB=0.1)
    for h_A in (None, 0.0):
        curves = flat_curves(0.025, 0.05, h_A)
        bilateral = price_risky(schedule, ModelRegime(CreditSide.BILATERAL, timing), curves, rec, 0.3, grid)
        unilateral = price_risky(schedule, ModelRegime(CreditSide.UNILATERAL_B, timing), curves, rec, 0.0, grid)
        assert bilateral.risky == pytest.approx(unilateral.risky, abs=1e-14)


def test_bilateral_dtm_independent_defaults_closed_form():
    curves = flat_curves(0.03, 0.04, 0.02)
    rec = RecoveryProfile(phi_A=0.4, phi_B=0.6, phibar_A=0.0, phibar_B=0.5, phi_AB=0.0)
    schedule = CashflowSchedule(((1.0, 1.0), (2.0, 2.0)))
    S_A = survival_probability(curves.hazard_A, 0.0, 1.0)
    S_B = survival_probability(curves.hazard_B, 0.0, 1.0)
    Q_A, Q_B = 1 - S_A, 1 - S_B
    y_B = S_B * S_A + rec.phi_B * Q_B * S_A + rec.phibar_B * S_B * Q_A
    D = math.exp(-0.03)
    v1 = D * y_B * 2.0
    v0 = D * y_B * (1.0 + v1)
    assert price_risky(schedule, BI_DTM, curves, rec, 0.0).risky == pytest.approx(v0, rel=1e-13)


def test_payable_cva_is_a_benefit():
    curves = flat_curves(0.03, 0.02, 0.05)
    rec = RecoveryProfile(phi_A=0.4, phi_B=0.4, phibar_A=0.0, phibar_B=0.0)
    schedule = CashflowSchedule(((1.0, -1.0), (2.0, -1.0)))
    for regime in (BI_DTM, BI_CTM):
        assert price_risky(schedule, regime, curves, rec).cva < 0.0


def test_receivable_cva_is_a_charge():
    curves = flat_curves(0.03, 0.02)
    schedule = CashflowSchedule.fixed_coupon_bond(3.0, 0.05)
    for regime in (UNI_DTM, UNI_CTM):
        assert price_risky(schedule, regime, curves, RecoveryProfile.unilateral(0.4)).cva > 0.0


def test_risky_value_monotone_in_hazard_and_recovery():
    schedule = CashflowSchedule.fixed_coupon_bond(2.0, 0.06, frequency=4)
    values = [price_risky(schedule, BI_DTM, flat_curves(0.03, h, 0.01),
                          RecoveryProfile(phi_B=0.4, phibar_B=0.0)).risky
              for h in (0.0, 0.01, 0.05, 0.2)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    values = [price_risky(schedule, BI_DTM, flat_curves(0.03, 0.05, 0.01),
                          RecoveryProfile(phi_B=phi, phibar_B=0.0)).risky
              for phi in (0.0, 0.3, 0.7, 1.0)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_b_indexed_prefactor_changes_only_payable_branch():
    curves = flat_curves(0.03, 0.03, 0.06)
    rec = RecoveryProfile(phi_A=0.2, phi_B=0.5, phibar_A=0.0, phibar_B=0.8, phi_AB=0.1)
    receivable = CashflowSchedule(((1.0, 1.0),))
    payable = CashflowSchedule(((1.0, -1.0),))
    assert price_risky(receivable, BI_DTM, curves, rec, 0.1, b_indexed_prefactor=True).risky == \
        price_risky(receivable, BI_DTM, curves, rec, 0.1).risky
    assert price_risky(payable, BI_DTM, curves, rec, 0.1, b_indexed_prefactor=True).risky != \
        price_risky(payable, BI_DTM, curves, rec, 0.1).risky


def _ctm_cva(schedule, dt, curves, rec):
    return price_risky(schedule, UNI_CTM, curves, rec, grid=PricingGrid.build(schedule, dt)).risky


@pytest.mark.parametrize("schedule", [
    CashflowSchedule.zero_coupon(1.0),
    CashflowSchedule.fixed_coupon_bond(2.0, 0.05),
])
def test_ctm_converges_at_first_order(schedule):
    curves = CurveSet(TermStructure.flat(0.03, 5.0), hazard(0.08, 5.0))
    rec = RecoveryProfile.unilateral(0.3)
    steps = [1 / 64, 1 / 128, 1 / 256, 1 / 512, 1 / 1024, 1 / 2048]
    values = [_ctm_cva(schedule, dt, curves, rec) for dt in steps]
    gaps = [abs(a - b) for a, b in zip(values, values[1:])]
    for coarse, fine in zip(gaps, gaps[1:]):
        assert 1.7 <= coarse / fine <= 2.3


def test_ctm_and_dtm_cva_are_close():
    curves = flat_curves(0.03, 0.02)
    rec = RecoveryProfile.unilateral(0.7)
    zcb = CashflowSchedule.zero_coupon(1.0)
    ctm = price_risky(zcb, UNI_CTM, curves, rec).cva
    dtm = price_risky(zcb, UNI_DTM, curves, rec).cva
    assert abs(1.0 - dtm / ctm) < 0.01
    bond = CashflowSchedule.fixed_coupon_bond(10.0, 0.04)
    ctm = price_risky(bond, UNI_CTM, curves, rec).cva
    dtm = price_risky(bond, UNI_DTM, curves, rec).cva
    assert abs(1.0 - dtm / ctm) < 0.02


# ---------------------------------------------------------------------------
# enumerate_default_states
# ---------------------------------------------------------------------------

def test_enumeration_single_payment():
    curves = flat_curves(0.03, 0.04, 0.06)
    rec = RecoveryProfile(phi_A=0.3, phi_B=0.5, phibar_A=0.2, phibar_B=0.9, phi_AB=0.4)
    schedule = CashflowSchedule(((1.5, 2.0),))
    S_A = survival_probability(curves.hazard_A, 0.0, 1.5)
    S_B = survival_probability(curves.hazard_B, 0.0, 1.5)
    Q_A, Q_B = 1 - S_A, 1 - S_B
    gamma = 0.2 * math.sqrt(S_A * Q_A * S_B * Q_B)
    y_B = (S_A * S_B + gamma) + 0.5 * (S_A * Q_B - gamma) + 0.9 * (Q_A * S_B - gamma) + 0.4 * (Q_A * Q_B + gamma)
    expected = math.exp(-0.045) * y_B * 2.0
    assert enumerate_default_states(schedule, curves, rec, 0.2) == pytest.approx(expected, rel=1e-14)


def test_enumeration_without_default_risk():
    curves = CurveSet(TermStructure.flat(0.02, 5.0), hazard(0.0), hazard(0.0))
    schedule = CashflowSchedule(((0.5, 1.0), (1.0, -2.0), (2.0, 0.7)))
    value = enumerate_default_states(schedule, curves, RecoveryProfile(phi_B=0.3))
    assert value == pytest.approx(price_risk_free(schedule, curves.discount), abs=1e-14)


def test_enumeration_unilateral_two_payments():
    curves = flat_curves(0.03, 0.05)
    rec = RecoveryProfile.unilateral(0.4)
    schedule = CashflowSchedule(((1.0, 1.0), (2.0, 1.0)))
    value = enumerate_default_states(schedule, curves, rec, credit_side=CreditSide.UNILATERAL_B)
    assert value == pytest.approx(price_risky(schedule, UNI_DTM, curves, rec).risky, abs=1e-14)


@pytest.mark.parametrize("regime", [UNI_DTM, BI_DTM])
def test_enumeration_follows_claim_sign_changes(regime):
    curves = flat_curves(0.03, 0.05, 0.08)
    rec = RecoveryProfile(phi_A=0.3, phi_B=0.4, phibar_A=0.9, phibar_B=0.8, phi_AB=0.2)
    # receivable at the last date, payable at the middle one, receivable at the first
    schedule = CashflowSchedule(((0.5, 1.0), (1.0, -3.0), (1.5, 2.5)))
    value = enumerate_default_states(schedule, curves, rec, 0.3 if regime.is_bilateral else 0.0,
                                     credit_side=regime.credit_side)
    lattice = price_risky(schedule, regime, curves, rec, 0.3 if regime.is_bilateral else 0.0)
    assert value == pytest.approx(lattice.risky, abs=1e-13)
    assert value != pytest.approx(lattice.risk_free, abs=1e-6)


def test_enumeration_payment_limit():
    schedule = CashflowSchedule(tuple((0.25 * k, 1.0) for k in range(1, 8)))
    with pytest.raises(ConfigurationError):
        enumerate_default_states(schedule, flat_curves(h_A=0.01), RecoveryProfile())


def _random_case(rng):
    m = int(rng.integers(1, 6))
    times = tuple(np.cumsum(rng.uniform(0.1, 1.0, size=m)))
    amounts = rng.uniform(-2.0, 2.0, size=m)
    schedule = CashflowSchedule(tuple(zip(times, amounts)))

    def piecewise(kind, low, high):
        knots = sorted(rng.uniform(0.0, 4.0, size=2))
        return TermStructure((0.0, knots[0], knots[1], 10.0), tuple(rng.uniform(low, high, size=3)), kind)

    curves = CurveSet(piecewise(CurveKind.INTEREST, -0.01, 0.06),
                      piecewise(CurveKind.HAZARD, 0.0, 0.1),
                      piecewise(CurveKind.HAZARD, 0.0, 0.1))
    rec = RecoveryProfile(*rng.uniform(0.0, 1.0, size=5))

    # one correlation feasible for every payment interval
    lo, hi = -1.0, 1.0
    edges = (0.0,) + times
    for t0, t1 in zip(edges, edges[1:]):
        q_A = default_probability(curves.hazard_A, t0, t1)
        q_B = default_probability(curves.hazard_B, t0, t1)
        a, b = rho_feasible_range(q_A, q_B)
        lo, hi = max(lo, a), min(hi, b)
    rho = 0.999 * float(rng.uniform(lo, hi))
    return schedule, curves, rec, rho


def test_dtm_recursion_matches_enumeration():
    rng = np.random.default_rng(20240611)
    for _ in range(200):
        schedule, curves, rec, rho = _random_case(rng)
        lattice = price_risky(schedule, BI_DTM, curves, rec, rho).risky
        oracle = enumerate_default_states(schedule, curves, rec, rho)
        assert lattice == pytest.approx(oracle, abs=1e-12)
