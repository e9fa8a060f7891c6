"""
Per-scenario cash-flow determination, allocation to time buckets and
netting / non-netting aggregation.

Amounts are signed from party A's side: positive is received by A.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.curves.term_structures import TermStructure, discount_factor
from src.errors import ConfigurationError, HorizonExceededError
from src.pricing.lattice_pricer import CashflowSchedule
from src.simulation.scenario_engine import (
    FactorRole,
    ProcessKind,
    ScenarioCube,
    TimeBucketGrid,
    interpolate_curve_between_buckets,
    zero_coupon_bond,
)

logger = logging.getLogger(__name__)

_MODULE = "cashflow_engine"
_TIME_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Swaplet:
    """One floating-vs-fixed period: fixing <= start < end <= payment."""

    fixing: float
    start: float
    end: float
    payment: float
    accrual: Optional[float] = None

    def __post_init__(self) -> None:
        if self.accrual is None:
            object.__setattr__(self, "accrual", self.end - self.start)
        if not self.fixing <= self.start < self.end <= self.payment:
            raise ConfigurationError(
                _MODULE, f"swaplet dates must satisfy fixing <= start < end <= payment, got "
                         f"({self.fixing}, {self.start}, {self.end}, {self.payment})"
            )
        if self.accrual <= 0:
            raise ConfigurationError(_MODULE, "accrual must be positive")


@dataclass(frozen=True)
class SwapSpec:
    """
    Interest-rate swap. ``pay_fixed`` means party A pays the fixed rate and
    receives floating.
    """

    notional: float
    fixed_rate: float
    swaplets: Tuple[Swaplet, ...]
    pay_fixed: bool = True
    rate_factor: str = FactorRole.RATE.value
    label: str = "swap"

    def __post_init__(self) -> None:
        swaplets = tuple(self.swaplets)
        object.__setattr__(self, "swaplets", swaplets)
        if not swaplets:
            raise ConfigurationError(_MODULE, "a swap needs at least one swaplet")
        payments = [s.payment for s in swaplets]
        if any(b < a for a, b in zip(payments, payments[1:])):
            raise ConfigurationError(_MODULE, "swaplets must be ordered by payment date")

    @classmethod
    def vanilla(cls, notional: float, fixed_rate: float, maturity: float, frequency: int = 4,
                start: float = 0.0, pay_fixed: bool = True,
                rate_factor: str = FactorRole.RATE.value, label: str = "swap") -> "SwapSpec":
        """Regular swap fixing in advance and paying in arrears."""
        periods = int(round((maturity - start) * frequency))
        if periods < 1 or abs(start + periods / frequency - maturity) > 1e-9:
            raise ConfigurationError(_MODULE, "swap tenor must be a whole number of periods")
        swaplets = []
        for k in range(periods):
            t0 = start + k / frequency
            t1 = start + (k + 1) / frequency
            swaplets.append(Swaplet(t0, t0, t1, t1))
        return cls(notional, fixed_rate, tuple(swaplets), pay_fixed, rate_factor, label)


@dataclass(frozen=True)
class EquitySwapSpec:
    """
    Equity-return leg against a fixed leg. With ``pays_equity`` party A pays
    the period equity return and receives the fixed rate.
    """

    notional: float
    fixed_rate: float
    payment_times: Tuple[float, ...]
    equity_factor: str = FactorRole.EQUITY.value
    pays_equity: bool = True
    start: float = 0.0
    label: str = "equity_swap"

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.payment_times)
        object.__setattr__(self, "payment_times", times)
        if not times or times[0] <= self.start or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError(_MODULE, "equity swap payment times must increase after the start")


@dataclass(frozen=True)
class FxForwardSpec:
    """Party A buys (``buy``) or sells ``notional`` foreign units at ``strike``."""

    notional: float
    strike: float
    maturity: float
    fx_factor: str = FactorRole.FX.value
    buy: bool = True
    label: str = "fx_forward"

    def __post_init__(self) -> None:
        if self.maturity <= 0 or self.strike <= 0:
            raise ConfigurationError(_MODULE, "FX forward needs positive maturity and strike")


@dataclass(frozen=True)
class ScheduleTrade:
    """Deterministic cash-flow schedule held in the portfolio."""

    schedule: CashflowSchedule
    label: str = "schedule"


Trade = Union[SwapSpec, EquitySwapSpec, FxForwardSpec, ScheduleTrade]


@dataclass(frozen=True)
class BucketedCashflows:
    """
    Bucket flows per (path, bucket) split into positive and negative sums.
    Under netting only ``netted`` (their sum) is valued; without netting
    the two streams are valued separately.
    """

    positive: np.ndarray
    negative: np.ndarray
    bucket_times: Tuple[float, ...]
    netting: bool = True

    def __post_init__(self) -> None:
        if self.positive.shape != self.negative.shape or self.positive.ndim != 2:
            raise ConfigurationError(_MODULE, "positive and negative sums must be (paths, buckets) arrays")
        if self.positive.shape[1] != len(self.bucket_times):
            raise ConfigurationError(_MODULE, "one column per bucket is required")

    @property
    def netted(self) -> np.ndarray:
        return self.positive + self.negative

    @property
    def path_count(self) -> int:
        return self.positive.shape[0]

    def streams(self) -> List[np.ndarray]:
        """Flows to value: one netted stream, or the two one-signed streams."""
        if self.netting:
            return [self.netted]
        return [self.positive, self.negative]

    def mirrored(self) -> "BucketedCashflows":
        """The counterparty's view: every amount negated."""
        return BucketedCashflows(-self.negative, -self.positive, self.bucket_times, self.netting)

    @classmethod
    def from_netted(cls, flows: np.ndarray, bucket_times: Sequence[float]) -> "BucketedCashflows":
        flows = np.asarray(flows, dtype=float)
        return cls(np.maximum(flows, 0.0), np.minimum(flows, 0.0), tuple(bucket_times), True)


def _rate_snapshot(cube: ScenarioCube, rate_factor: str, path: Optional[int], t: float) -> ArrayLike:
    return interpolate_curve_between_buckets(cube, path, t, rate_factor)


def _bond_price(cube: ScenarioCube, rate_factor: str, short_rate: ArrayLike, tau: float) -> ArrayLike:
    """Path curve snapshot: CIR affine price, otherwise flat at the short rate."""
    spec = cube.spec(rate_factor)
    if spec.kind is ProcessKind.CIR:
        return zero_coupon_bond(spec, short_rate, tau)
    return np.exp(-np.asarray(short_rate) * tau)


def _check_horizon(t: float, grid: TimeBucketGrid, what: str) -> None:
    if t > grid.horizon + _TIME_TOL:
        raise HorizonExceededError(_MODULE, f"{what} {t} beyond grid horizon {grid.horizon}")


def simply_compounded_forward(cube: ScenarioCube, rate_factor: str, path: Optional[int],
                              fixing: float, start: float, end: float, accrual: float) -> ArrayLike:
    """Forward F(fixing; start, end) from the path's curve snapshot at the fixing date."""
    r = _rate_snapshot(cube, rate_factor, path, fixing)
    p_start = _bond_price(cube, rate_factor, r, start - fixing)
    p_end = _bond_price(cube, rate_factor, r, end - fixing)
    return (p_start / p_end - 1.0) / accrual


def determine_swaplet_cashflow(spec: SwapSpec, swaplet: Swaplet, cube: ScenarioCube,
                               path: Optional[int] = None,
                               curve: Optional[TermStructure] = None) -> ArrayLike:
    """
    Signed swaplet payment N (F - R) delta at the payment date.

    Parameters:
    -----------
    spec : SwapSpec
        Swap terms
    swaplet : Swaplet
        Period being determined
    cube : ScenarioCube
        Simulated paths
    path : int, optional
        Single path; every path when omitted
    curve : TermStructure, optional
        Deterministic curve used when the cube carries no rate factor

    Returns:
    --------
    float or ndarray
        Positive when party A receives
    """
    _check_horizon(swaplet.fixing, cube.grid, "fixing date")
    if cube.has_factor(spec.rate_factor):
        forward = simply_compounded_forward(cube, spec.rate_factor, path, swaplet.fixing,
                                            swaplet.start, swaplet.end, swaplet.accrual)
    elif curve is not None:
        ratio = discount_factor(curve, swaplet.fixing, swaplet.start) / \
            discount_factor(curve, swaplet.fixing, swaplet.end)
        forward = (ratio - 1.0) / swaplet.accrual
        if path is None:
            forward = np.full(cube.path_count, forward)
    else:
        raise ConfigurationError(_MODULE, f"no rate factor '{spec.rate_factor}' and no deterministic curve")
    amount = spec.notional * (forward - spec.fixed_rate) * swaplet.accrual
    return amount if spec.pay_fixed else -amount


def allocate_to_bucket(amount: ArrayLike, t_ip: float, grid: TimeBucketGrid, cube: ScenarioCube,
                       path: Optional[int] = None, rate_factor: str = FactorRole.RATE.value,
                       curve: Optional[TermStructure] = None) -> Tuple[int, ArrayLike]:
    """
    Move a payment back to the nearest previous bucket T_k <= t_ip.

    The amount is discounted with the path's curve observed at T_k. Returns
    (k, contribution).
    """
    if t_ip < -_TIME_TOL:
        raise ConfigurationError(_MODULE, f"payment at {t_ip} precedes the first bucket")
    _check_horizon(t_ip, grid, "payment date")
    k = grid.bucket_of(t_ip)
    tau = t_ip - grid.bucket_times[k]
    if tau <= _TIME_TOL:
        return k, amount
    if cube.has_factor(rate_factor):
        r = cube.bucket_values(rate_factor)[:, k]
        if path is not None:
            r = r[path]
        return k, amount * _bond_price(cube, rate_factor, r, tau)
    if curve is not None:
        return k, amount * discount_factor(curve, grid.bucket_times[k], t_ip)
    raise ConfigurationError(_MODULE, f"no rate factor '{rate_factor}' and no deterministic curve")


def aggregate(contributions: Iterable[Tuple[int, np.ndarray]], paths: int,
              bucket_times: Sequence[float], netting: bool = True) -> BucketedCashflows:
    """
    Sum bucket contributions per path.

    Each contribution is split by sign before summation so the non-netting
    streams never offset; contributions are added in input order.
    """
    n_buckets = len(bucket_times)
    positive = np.zeros((paths, n_buckets))
    negative = np.zeros((paths, n_buckets))
    for k, amount in contributions:
        amount = np.broadcast_to(np.asarray(amount, dtype=float), (paths,))
        positive[:, k] += np.maximum(amount, 0.0)
        negative[:, k] += np.minimum(amount, 0.0)
    return BucketedCashflows(positive, negative, tuple(bucket_times), netting)


def _equity_swap_flows(trade: EquitySwapSpec, cube: ScenarioCube) -> List[Tuple[float, np.ndarray]]:
    flows = []
    previous_time = trade.start
    previous = interpolate_curve_between_buckets(cube, None, previous_time, trade.equity_factor)
    for t in trade.payment_times:
        _check_horizon(t, cube.grid, "payment date")
        level = interpolate_curve_between_buckets(cube, None, t, trade.equity_factor)
        accrual = t - previous_time
        amount = trade.notional * (trade.fixed_rate * accrual - (level / previous - 1.0))
        flows.append((t, amount if trade.pays_equity else -amount))
        previous, previous_time = level, t
    return flows


def trade_cashflows(trade: Trade, cube: ScenarioCube,
                    curve: Optional[TermStructure] = None) -> List[Tuple[float, np.ndarray]]:
    """Per-path payments (time, amounts) of one trade."""
    paths = cube.path_count
    if isinstance(trade, ScheduleTrade):
        return [(t, np.full(paths, x)) for t, x in trade.schedule.payments]
    if isinstance(trade, SwapSpec):
        return [(s.payment, determine_swaplet_cashflow(trade, s, cube, None, curve))
                for s in trade.swaplets]
    if isinstance(trade, EquitySwapSpec):
        return _equity_swap_flows(trade, cube)
    if isinstance(trade, FxForwardSpec):
        _check_horizon(trade.maturity, cube.grid, "maturity")
        spot = interpolate_curve_between_buckets(cube, None, trade.maturity, trade.fx_factor)
        amount = trade.notional * (spot - trade.strike)
        return [(trade.maturity, amount if trade.buy else -amount)]
    raise ConfigurationError(_MODULE, f"unsupported trade type {type(trade).__name__}")


def bucket_portfolio(trades: Sequence[Trade], cube: ScenarioCube, netting: bool = True,
                     curve: Optional[TermStructure] = None,
                     rate_factor: str = FactorRole.RATE.value) -> BucketedCashflows:
    """
    Determine, allocate and aggregate every payment of a portfolio.

    Parameters:
    -----------
    trades : sequence of Trade
        Portfolio between parties A and B
    cube : ScenarioCube
        Simulated paths
    netting : bool, default=True
        Whether a netting agreement is in force
    curve : TermStructure, optional
        Deterministic discount curve when the cube has no rate factor
    rate_factor : str
        Factor whose curve snapshot discounts payments to their bucket

    Returns:
    --------
    BucketedCashflows
        Per-path bucket flows
    """
    if not trades:
        raise ConfigurationError(_MODULE, "portfolio is empty")
    grid = cube.grid
    contributions = []
    for trade in trades:
        for t, amount in trade_cashflows(trade, cube, curve):
            contributions.append(allocate_to_bucket(amount, t, grid, cube, None, rate_factor, curve))
    logger.debug("bucketed %d payments from %d trades (netting=%s)", len(contributions), len(trades), netting)
    return aggregate(contributions, cube.path_count, grid.bucket_times, netting)


def mirror_trade(trade: Trade) -> Trade:
    """Same trade seen from the other party."""
    if isinstance(trade, ScheduleTrade):
        return ScheduleTrade(trade.schedule.scaled(-1.0), trade.label)
    if isinstance(trade, SwapSpec):
        return SwapSpec(trade.notional, trade.fixed_rate, trade.swaplets, not trade.pay_fixed,
                        trade.rate_factor, trade.label)
    if isinstance(trade, EquitySwapSpec):
        return EquitySwapSpec(trade.notional, trade.fixed_rate, trade.payment_times, trade.equity_factor,
                              not trade.pays_equity, trade.start, trade.label)
    if isinstance(trade, FxForwardSpec):
        return FxForwardSpec(trade.notional, trade.strike, trade.maturity, trade.fx_factor,
                             not trade.buy, trade.label)
    raise ConfigurationError(_MODULE, f"unsupported trade type {type(trade).__name__}")


def par_swap_rate(curve: TermStructure, maturity: float, frequency: int = 4) -> float:
    """Fixed rate giving a regular swap zero value on a deterministic curve."""
    periods = int(round(maturity * frequency))
    annuity = math.fsum(discount_factor(curve, 0.0, (k + 1) / frequency) / frequency
                        for k in range(periods))
    return (1.0 - discount_factor(curve, 0.0, periods / frequency)) / annuity
