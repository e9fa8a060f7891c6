"""
Backward-induction pricer for defaultable cash-flow schedules on
deterministic curves, plus an exhaustive default-state enumeration used
as an independent check of the discrete-time recursion.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from src.credit.default_model import (
    RecoveryProfile,
    bilateral_step_spreads,
    dtm_settlement_factors,
    joint_default_distribution,
)
from src.credit.risky_discounting import (
    CreditSide,
    ModelRegime,
    SignState,
    Timing,
    bilateral_ctm_rate,
    bilateral_dtm_factor,
    unilateral_ctm_rate,
    unilateral_dtm_factor,
)
from src.curves.term_structures import (
    TermStructure,
    default_probability,
    discount_factor,
    survival_probability,
)
from src.errors import ConfigurationError, GridAlignmentError

logger = logging.getLogger(__name__)

_MODULE = "lattice_pricer"
_NODE_TOL = 1e-10
MAX_ENUMERATED_PAYMENTS = 6


@dataclass(frozen=True)
class CashflowSchedule:
    """Signed payments (time, amount) received by party A, times strictly increasing."""

    payments: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        payments = tuple((float(t), float(x)) for t, x in self.payments)
        object.__setattr__(self, "payments", payments)
        if not payments:
            raise ConfigurationError(_MODULE, "schedule must contain at least one payment")
        times = [t for t, _ in payments]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError(_MODULE, "payment times must be strictly increasing")
        if not all(math.isfinite(x) for _, x in payments):
            raise ConfigurationError(_MODULE, "payment amounts must be finite")

    @property
    def times(self) -> Tuple[float, ...]:
        return tuple(t for t, _ in self.payments)

    @property
    def amounts(self) -> Tuple[float, ...]:
        return tuple(x for _, x in self.payments)

    @property
    def maturity(self) -> float:
        return self.payments[-1][0]

    def scaled(self, factor: float) -> "CashflowSchedule":
        return CashflowSchedule(tuple((t, factor * x) for t, x in self.payments))

    @classmethod
    def zero_coupon(cls, maturity: float, principal: float = 1.0) -> "CashflowSchedule":
        return cls(((maturity, principal),))

    @classmethod
    def fixed_coupon_bond(cls, maturity: float, coupon_rate: float,
                          frequency: int = 2, principal: float = 1.0) -> "CashflowSchedule":
        """
        Bullet bond paying ``coupon_rate / frequency`` each period and the
        principal with the last coupon.
        """
        periods = int(round(maturity * frequency))
        if periods < 1 or abs(periods / frequency - maturity) > 1e-9:
            raise ConfigurationError(_MODULE, "maturity must be a whole number of coupon periods")
        coupon = principal * coupon_rate / frequency
        payments = [(k / frequency, coupon) for k in range(1, periods)]
        payments.append((periods / frequency, coupon + principal))
        return cls(tuple(payments))


@dataclass(frozen=True)
class PricingGrid:
    """Time nodes for CTM stepping; payment dates are nodes."""

    dt: float
    node_times: Tuple[float, ...]

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ConfigurationError(_MODULE, f"grid step must be positive, got {self.dt}")
        nodes = tuple(float(t) for t in self.node_times)
        if len(nodes) < 2 or any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ConfigurationError(_MODULE, "grid nodes must be strictly increasing")
        object.__setattr__(self, "node_times", nodes)

    @classmethod
    def build(cls, schedule: CashflowSchedule, dt: float,
              valuation_time: float = 0.0) -> "PricingGrid":
        """Regular nodes every ``dt`` with the payment dates inserted."""
        if dt <= 0:
            raise ConfigurationError(_MODULE, f"grid step must be positive, got {dt}")
        horizon = schedule.maturity
        count = int(math.floor((horizon - valuation_time) / dt + 1e-9))
        regular = [valuation_time + k * dt for k in range(count + 1)]
        payments = [t for t in schedule.times if t > valuation_time]
        nodes = [t for t in regular if all(abs(t - p) > _NODE_TOL for p in payments)]
        return cls(dt, tuple(sorted(set(nodes) | set(payments))))

    def node_index(self, t: float) -> int:
        for i, node in enumerate(self.node_times):
            if abs(node - t) <= _NODE_TOL:
                return i
        raise GridAlignmentError(_MODULE, f"time {t} is not a grid node")

    def step_counts(self, schedule: CashflowSchedule) -> List[int]:
        """Number of grid steps in each payment period (n_i)."""
        indices = [self.node_index(t) for t in schedule.times]
        start = 0
        counts = []
        for idx in indices:
            counts.append(idx - start)
            start = idx
        return counts


@dataclass(frozen=True)
class CurveSet:
    """Deterministic curves for one pricing call; hazard_A is ignored when unilateral."""

    discount: TermStructure
    hazard_B: TermStructure
    hazard_A: Optional[TermStructure] = None


@dataclass(frozen=True)
class ValuationResult:
    risk_free: float
    risky: float
    cva: float

    @classmethod
    def from_values(cls, risk_free: float, risky: float) -> "ValuationResult":
        return cls(risk_free, risky, cva_from(risk_free, risky))


def cva_from(risk_free: float, risky: float) -> float:
    """CVA as risk-free value minus risky value."""
    return risk_free - risky


def price_risk_free(schedule: CashflowSchedule, discount_curve: TermStructure,
                    valuation_time: float = 0.0) -> float:
    """Sum of discounted payments."""
    _check_schedule(schedule, valuation_time)
    return sum(discount_factor(discount_curve, valuation_time, t) * x
               for t, x in schedule.payments)


def _check_schedule(schedule: CashflowSchedule, valuation_time: float) -> None:
    if schedule.times[0] <= valuation_time:
        raise ConfigurationError(_MODULE, "payments must fall after the valuation time")


def _interval_probabilities(curves: CurveSet, bilateral: bool,
                            t0: float, t1: float) -> Tuple[float, float, float, float]:
    S_B = survival_probability(curves.hazard_B, t0, t1)
    Q_B = 1.0 - S_B
    if bilateral and curves.hazard_A is not None:
        S_A = survival_probability(curves.hazard_A, t0, t1)
    else:
        S_A = 1.0
    return S_A, 1.0 - S_A, S_B, Q_B


def _price_dtm(schedule: CashflowSchedule, regime: ModelRegime, curves: CurveSet,
               recoveries: RecoveryProfile, rho: float, valuation_time: float,
               b_indexed_prefactor: bool) -> ValuationResult:
    times = (valuation_time,) + schedule.times
    amounts = schedule.amounts
    risky = 0.0
    free = 0.0
    for j in range(len(amounts) - 1, -1, -1):
        t0, t1 = times[j], times[j + 1]
        claim = amounts[j] + risky
        D = discount_factor(curves.discount, t0, t1)
        sign = SignState.of(claim)
        S_A, Q_A, S_B, Q_B = _interval_probabilities(curves, regime.is_bilateral, t0, t1)
        if regime.is_bilateral:
            factors = dtm_settlement_factors(S_A, Q_A, S_B, Q_B, recoveries, rho, b_indexed_prefactor)
            factor = bilateral_dtm_factor(D, factors, sign)
        else:
            factor = unilateral_dtm_factor(D, Q_B, recoveries.phi_B, sign)
        risky = factor * claim
        free = D * (amounts[j] + free)
    return ValuationResult.from_values(free, risky)


def _price_ctm(schedule: CashflowSchedule, regime: ModelRegime, curves: CurveSet,
               recoveries: RecoveryProfile, rho: float, grid: PricingGrid,
               valuation_time: float, b_indexed_prefactor: bool) -> ValuationResult:
    start = grid.node_index(valuation_time)
    end = grid.node_index(schedule.maturity)
    nodes = grid.node_times[start:end + 1]
    flows: Dict[int, float] = {}
    for t, x in schedule.payments:
        flows[grid.node_index(t) - start] = x

    risky = 0.0
    free = 0.0
    for k in range(len(nodes) - 1, 0, -1):
        t0, t1 = nodes[k - 1], nodes[k]
        step = t1 - t0
        x = flows.get(k, 0.0)
        claim = x + risky
        sign = SignState.of(claim)

        D = discount_factor(curves.discount, t0, t1)
        r_bar = -math.log(D) / step
        # step Bernoulli intensity: Q(t0, t1) / dt
        h_B = default_probability(curves.hazard_B, t0, t1) / step
        if regime.is_bilateral:
            h_A = 0.0
            if curves.hazard_A is not None:
                h_A = default_probability(curves.hazard_A, t0, t1) / step
            spreads = bilateral_step_spreads(h_A, h_B, recoveries, rho, step, b_indexed_prefactor)
            rate = bilateral_ctm_rate(r_bar, spreads, sign)
        else:
            rate = unilateral_ctm_rate(r_bar, h_B, recoveries.phi_B, sign)

        risky = D * math.exp(-(rate - r_bar) * step) * claim
        free = D * (x + free)
    return ValuationResult.from_values(free, risky)


def price_risky(schedule: CashflowSchedule, regime: ModelRegime, curves: CurveSet,
                recoveries: RecoveryProfile, rho: float = 0.0,
                grid: Optional[PricingGrid] = None, valuation_time: float = 0.0,
                b_indexed_prefactor: bool = False) -> ValuationResult:
    """
    Risk-free value, risky value and CVA of a schedule by backward induction.

    Parameters:
    -----------
    schedule : CashflowSchedule
        Payments received by party A (negative amounts are paid)
    regime : ModelRegime
        Unilateral or bilateral credit risk, CTM or DTM default timing
    curves : CurveSet
        Discount curve and hazard curves
    recoveries : RecoveryProfile
        Recovery fractions
    rho : float, default=0.0
        Default correlation (bilateral only)
    grid : PricingGrid, optional
        CTM stepping grid; built daily when omitted. DTM steps between
        payment dates and only checks alignment when a grid is given.
    valuation_time : float, default=0.0
        Valuation date as a year fraction
    b_indexed_prefactor : bool, default=False
        Use B-indexed recoveries in the A-side correlation prefactor

    Returns:
    --------
    ValuationResult
        Risk-free and risky values; the risk-free leg is rolled back on the
        same steps so zero credit risk gives a CVA of exactly zero
    """
    _check_schedule(schedule, valuation_time)
    if regime.timing is Timing.DTM:
        if grid is not None:
            for t in schedule.times:
                grid.node_index(t)
        return _price_dtm(schedule, regime, curves, recoveries, rho, valuation_time, b_indexed_prefactor)

    if grid is None:
        grid = PricingGrid.build(schedule, 1.0 / 365.0, valuation_time)
    return _price_ctm(schedule, regime, curves, recoveries, rho, grid, valuation_time, b_indexed_prefactor)


def _state_tables(curves: CurveSet, recoveries: RecoveryProfile, rho: float,
                  credit_side: CreditSide, t0: float, t1: float,
                  receivable: bool) -> Tuple[Sequence[float], Sequence[float]]:
    """Probabilities and settlement weights per default state; state 0 is joint survival."""
    S_B = survival_probability(curves.hazard_B, t0, t1)
    Q_B = 1.0 - S_B
    if credit_side is CreditSide.UNILATERAL_B:
        weights = (1.0, recoveries.phi_B if receivable else 1.0)
        return (S_B, Q_B), weights

    S_A = 1.0
    if curves.hazard_A is not None:
        S_A = survival_probability(curves.hazard_A, t0, t1)
    law = joint_default_distribution(1.0 - S_A, Q_B, rho)
    probabilities = (law.p00, law.p10, law.p01, law.p11)
    if receivable:
        # B owes A: B's default recovers phi_B, A's default settles at phibar_B
        weights = (1.0, recoveries.phibar_B, recoveries.phi_B, recoveries.phi_AB)
    else:
        weights = (1.0, recoveries.phi_A, recoveries.phibar_A, recoveries.phi_AB)
    return probabilities, weights


def _expanded_value(amounts: Sequence[float], discounts: Sequence[float],
                    tables: Sequence[Tuple[Sequence[float], Sequence[float]]], start: int) -> float:
    """
    Value at the date before payment ``start`` of the remaining payments,
    summed over every sequence of per-interval default states.

    A default state settles the claim at its recovery fraction of market
    value, which is the same as scaling every later payment on that path by
    the fraction; a path's payoff is therefore the discounted payments times
    the running product of settlement weights.
    """
    m = len(amounts)
    n_states = len(tables[start][0])
    terms = []
    for path in itertools.product(range(n_states), repeat=m - start):
        probability = 1.0
        carried = 1.0
        payoff = 0.0
        for j, state in zip(range(start, m), path):
            probabilities, settlement = tables[j]
            probability *= probabilities[state]
            carried *= discounts[j] * settlement[state]
            payoff += carried * amounts[j]
        terms.append(probability * payoff)
    return math.fsum(terms)


def enumerate_default_states(schedule: CashflowSchedule, curves: CurveSet,
                             recoveries: RecoveryProfile, rho: float = 0.0,
                             credit_side: CreditSide = CreditSide.BILATERAL,
                             valuation_time: float = 0.0) -> float:
    """
    Discrete-time risky value by expanding every default-state path.

    Each path is a full sequence of joint default states, one per payment
    interval, weighted by its probability. The receivable/payable side of
    each interval comes from the expanded value of the payments after it,
    working from the last payment back; no value is taken from the
    backward-induction pricer.

    Parameters:
    -----------
    schedule : CashflowSchedule
        At most MAX_ENUMERATED_PAYMENTS payments
    curves : CurveSet
        Discount and hazard curves
    recoveries : RecoveryProfile
        Recovery fractions
    rho : float, default=0.0
        Default correlation per interval
    credit_side : CreditSide, default=BILATERAL
        Two states per interval when unilateral, four when bilateral
    valuation_time : float, default=0.0
        Valuation date

    Returns:
    --------
    float
        Risky value at ``valuation_time``
    """
    m = len(schedule.payments)
    if m > MAX_ENUMERATED_PAYMENTS:
        raise ConfigurationError(
            _MODULE, f"enumeration supports at most {MAX_ENUMERATED_PAYMENTS} payments, got {m}"
        )
    _check_schedule(schedule, valuation_time)

    times = (valuation_time,) + schedule.times
    amounts = schedule.amounts
    discounts = [discount_factor(curves.discount, times[j], times[j + 1]) for j in range(m)]
    tables: List[Optional[Tuple[Sequence[float], Sequence[float]]]] = [None] * m
    for j in range(m - 1, -1, -1):
        later = _expanded_value(amounts, discounts, tables, j + 1) if j + 1 < m else 0.0
        tables[j] = _state_tables(curves, recoveries, rho, credit_side,
                                  times[j], times[j + 1], amounts[j] + later >= 0)
    return _expanded_value(amounts, discounts, tables, 0)
