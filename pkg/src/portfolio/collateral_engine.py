"""
Threshold collateral with a margin period of risk.

Collateral is called on the portfolio value at the shadow node T_k - zeta,
evolves with the collateral factor until T_k, and enters the bucket flows
as the reversing cash flow -(Gamma(T_k) - Gamma(T_k-1)).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.curves.term_structures import TermStructure
from src.errors import ConfigurationError, GridAlignmentError
from src.portfolio.cashflow_engine import BucketedCashflows
from src.simulation.scenario_engine import FactorRole, ScenarioCube
from src.xva.xva_engine import RegressionSpec, conditional_expectation, regression_state

logger = logging.getLogger(__name__)

_MODULE = "collateral_engine"
DEFAULT_MARGIN_PERIOD = 14.0 / 365.0


@dataclass(frozen=True)
class MarginAgreement:
    """
    Collateral thresholds as non-negative magnitudes. B posts above
    H_B = TH_B + MTA_B, A posts below H_A = -(TH_A + MTA_A); an infinite
    threshold disables that side.
    """

    threshold_B: float = math.inf
    threshold_A: float = math.inf
    minimum_transfer_B: float = 0.0
    minimum_transfer_A: float = 0.0
    margin_period: float = DEFAULT_MARGIN_PERIOD
    collateral_factor: Optional[str] = FactorRole.COLLATERAL.value

    def __post_init__(self) -> None:
        for name in ("threshold_B", "threshold_A", "minimum_transfer_B", "minimum_transfer_A"):
            value = float(getattr(self, name))
            if math.isnan(value) or value < 0:
                raise ConfigurationError(_MODULE, f"{name} must be a non-negative magnitude, got {value}",
                                         field=f"margin.{name}")
            object.__setattr__(self, name, value)
        if self.margin_period < 0:
            raise ConfigurationError(_MODULE, "margin period must be non-negative", field="margin.margin_period")

    @property
    def H_B(self) -> float:
        return self.threshold_B + self.minimum_transfer_B

    @property
    def H_A(self) -> float:
        return -(self.threshold_A + self.minimum_transfer_A)

    @property
    def uncollateralised(self) -> bool:
        return math.isinf(self.H_B) and math.isinf(self.H_A)


@dataclass
class CollateralResult:
    cashflows: BucketedCashflows
    gammas: np.ndarray
    values_at_call: np.ndarray


def required_collateral(v, agreement: MarginAgreement):
    """
    Collateral needed to bring exposure back inside the thresholds.

    v - H_B above H_B, v - H_A below H_A, zero in between. Positive
    means B posts to A.
    """
    v = np.asarray(v, dtype=float)
    H_B, H_A = agreement.H_B, agreement.H_A
    gamma = np.zeros_like(v)
    upper = v >= H_B
    lower = v <= H_A
    gamma[upper] = v[upper] - H_B
    gamma[lower] = v[lower] - H_A
    return float(gamma) if gamma.ndim == 0 else gamma


def _check_shadow_grid(cube: ScenarioCube, agreement: MarginAgreement) -> None:
    if abs(cube.grid.margin_period - agreement.margin_period) > 1e-12:
        raise GridAlignmentError(
            _MODULE, f"cube shadow nodes use margin period {cube.grid.margin_period:.6g}, "
                     f"agreement needs {agreement.margin_period:.6g}"
        )


def evolve_collateral(gamma_at_call, agreement: MarginAgreement, cube: ScenarioCube,
                      bucket: int, path: Optional[int] = None):
    """
    Collateral value at T_k given the amount called at T_k - zeta.

    The amount moves with the collateral factor's ratio over the margin
    period; without a collateral factor it is held constant.
    """
    _check_shadow_grid(cube, agreement)
    name = agreement.collateral_factor
    if name is None or not cube.has_factor(name):
        return gamma_at_call
    shadow = cube.grid.shadow_nodes[bucket]
    node = cube.grid.bucket_nodes[bucket]
    series = cube.factor(name)
    ratio = series[:, node] / series[:, shadow]
    if path is not None:
        ratio = ratio[path]
    return gamma_at_call * ratio


def collateral_cashflows(gammas: np.ndarray) -> np.ndarray:
    """
    Reversing flows -(Gamma_k - Gamma_k-1) for buckets 1..N from collateral
    balances on buckets 0..N (Gamma_0 = 0).
    """
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas[..., 0] != 0.0):
        raise ConfigurationError(_MODULE, "collateral balance at the first bucket must be zero")
    return -np.diff(gammas, axis=-1)


def portfolio_value_at_call(buckets: BucketedCashflows, cube: ScenarioCube, bucket: int,
                            spec: RegressionSpec, curve: Optional[TermStructure] = None,
                            rate_factor: str = FactorRole.RATE.value) -> np.ndarray:
    """
    Risk-free portfolio value per path at the shadow node of ``bucket``:
    realised flows of buckets >= k discounted to T_k - zeta, regressed on
    the state at the shadow node.
    """
    grid = cube.grid
    shadow_node = grid.shadow_nodes[bucket]
    shadow_time = grid.node_times[shadow_node]
    flows = buckets.netted
    realised = np.zeros(cube.path_count)
    for i in range(bucket, len(grid.bucket_times)):
        t_i = grid.bucket_times[i]
        if cube.has_factor(rate_factor):
            discount = np.exp(-cube.integral(rate_factor, shadow_time, t_i))
        elif curve is not None:
            discount = math.exp(-curve.integral(shadow_time, t_i))
        else:
            raise ConfigurationError(_MODULE, f"no rate factor '{rate_factor}' and no discount curve")
        realised += flows[:, i] * discount
    fitted, _ = conditional_expectation(realised, regression_state(cube, spec, shadow_node), spec)
    return fitted


def apply_margin_agreement(buckets: BucketedCashflows, cube: ScenarioCube, agreement: MarginAgreement,
                           spec: RegressionSpec = RegressionSpec(),
                           curve: Optional[TermStructure] = None,
                           rate_factor: str = FactorRole.RATE.value) -> CollateralResult:
    """
    Add collateral reversing flows to netted bucket flows.

    Parameters:
    -----------
    buckets : BucketedCashflows
        Netted portfolio flows
    cube : ScenarioCube
        Paths simulated with shadow nodes for the agreement's margin period
    agreement : MarginAgreement
        Thresholds, margin period and collateral factor
    spec : RegressionSpec
        Regression used for portfolio values at the call dates
    curve : TermStructure, optional
        Deterministic discount curve when the cube has no rate factor

    Returns:
    --------
    CollateralResult
        Collateralised flows, collateral balances per bucket and the
        portfolio values the calls were based on
    """
    if not buckets.netting:
        raise ConfigurationError(_MODULE, "collateral requires a netting agreement", field="portfolio.netting")
    n_paths, n_buckets = buckets.positive.shape
    gammas = np.zeros((n_paths, n_buckets))
    values = np.zeros((n_paths, n_buckets))
    if agreement.uncollateralised:
        return CollateralResult(buckets, gammas, values)

    _check_shadow_grid(cube, agreement)
    for k in range(1, n_buckets):
        values[:, k] = portfolio_value_at_call(buckets, cube, k, spec, curve, rate_factor)
        called = required_collateral(values[:, k], agreement)
        gammas[:, k] = evolve_collateral(called, agreement, cube, k)

    reversing = collateral_cashflows(gammas)
    total = buckets.netted.copy()
    total[:, 1:] += reversing
    logger.debug("collateral: mean balance %.6f, max |balance| %.6f",
                 float(gammas.mean()), float(np.abs(gammas).max()))
    return CollateralResult(BucketedCashflows.from_netted(total, buckets.bucket_times), gammas, values)
