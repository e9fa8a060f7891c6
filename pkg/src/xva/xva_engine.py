"""
Portfolio valuation over a scenario cube.

Risk-free values are path averages of discounted bucket flows. Risky values
come from a backward rollback that applies the bilateral (or unilateral)
DTM settlement factor of each bucket interval, choosing the branch from the
sign of the imminent flow plus the regressed continuation value.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.credit.default_model import RecoveryProfile, dtm_settlement_factors
from src.credit.risky_discounting import CreditSide, bilateral_dtm_factor, unilateral_dtm_factor
from src.curves.term_structures import TermStructure, discount_factor, survival_probability
from src.errors import ConfigurationError, RegressionError
from src.portfolio.cashflow_engine import BucketedCashflows
from src.pricing.lattice_pricer import CurveSet, ValuationResult, cva_from
from src.simulation.scenario_engine import FactorRole, ScenarioCube

logger = logging.getLogger(__name__)

_MODULE = "xva_engine"
_CONSTANT_TOL = 1e-12
DEFAULT_RIDGE = 1e-8
_STATE_ROLES = (FactorRole.RATE, FactorRole.EQUITY, FactorRole.FX)


@dataclass(frozen=True)
class RegressionSpec:
    """
    Polynomial basis for continuation values: all monomials of the chosen
    factors up to ``degree`` plus an intercept. ``factors=None`` selects the
    short rate and every equity and FX factor in the cube.
    """

    degree: int = 2
    factors: Optional[Tuple[str, ...]] = None
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ConfigurationError(_MODULE, f"degree must be non-negative, got {self.degree}",
                                     field="regression.degree")
        if self.ridge <= 0:
            raise ConfigurationError(_MODULE, "ridge penalty must be positive", field="regression.ridge")
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(self.factors))

    def state_factors(self, cube: ScenarioCube) -> Tuple[str, ...]:
        if self.factors is not None:
            for name in self.factors:
                if not cube.has_factor(name):
                    raise ConfigurationError(_MODULE, f"regression factor '{name}' not simulated",
                                             field="regression.factors")
            return self.factors
        return tuple(spec.name for spec in cube.specs if spec.role in _STATE_ROLES)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    standard_error: float
    paths: int
    seed: Optional[int] = None

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: Optional[int] = None) -> "MonteCarloEstimate":
        return cls(_path_mean(samples), _standard_error(samples), len(samples), seed)


@dataclass
class PortfolioValuation:
    """
    Per-path rollback results. Column k of ``risky_values`` and
    ``risk_free_values`` holds the value at T_k of the flows after T_k;
    ``continuation`` holds the regressed risky continuation used for the
    sign test.
    """

    risky_values: np.ndarray
    risk_free_values: np.ndarray
    continuation: np.ndarray
    risky_paths: np.ndarray
    risk_free_paths: np.ndarray
    seed: Optional[int]
    ridge_fallback: bool = False
    headline: ValuationResult = field(init=False)

    def __post_init__(self) -> None:
        self.headline = ValuationResult.from_values(_path_mean(self.risk_free_paths),
                                                    _path_mean(self.risky_paths))

    @property
    def path_count(self) -> int:
        return len(self.risky_paths)

    @property
    def risky(self) -> MonteCarloEstimate:
        return MonteCarloEstimate.from_samples(self.risky_paths, self.seed)

    @property
    def risk_free(self) -> MonteCarloEstimate:
        return MonteCarloEstimate.from_samples(self.risk_free_paths, self.seed)


def _path_mean(samples: np.ndarray) -> float:
    # compensated sum keeps the mean independent of evaluation order
    return math.fsum(np.asarray(samples, dtype=float)) / len(samples)


def _standard_error(samples: np.ndarray) -> float:
    n = len(samples)
    if n < 2:
        return 0.0
    return float(np.std(samples, ddof=1)) / math.sqrt(n)


def _basis(state: np.ndarray, degree: int) -> np.ndarray:
    n_paths, n_factors = state.shape
    columns = [np.ones(n_paths)]
    for order in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_factors), order):
            columns.append(np.prod(state[:, list(combo)], axis=1))
    return np.column_stack(columns)


def conditional_expectation(values: np.ndarray, state: np.ndarray,
                            spec: RegressionSpec = RegressionSpec()) -> Tuple[np.ndarray, bool]:
    """
    Least-squares estimate of E[values | state] per path.

    Factors that are constant across paths are dropped and the rest are
    standardised before the monomial basis is built.

    Parameters:
    -----------
    values : ndarray of shape (paths,)
        Regressand, typically discounted continuation values
    state : ndarray of shape (paths, factors)
        State variables at the regression date
    spec : RegressionSpec
        Basis degree and ridge penalty

    Returns:
    --------
    tuple
        (fitted values, ridge_fallback) where ridge_fallback is True when the
        design matrix was rank deficient

    Raises:
    -------
    RegressionError
        When there are fewer paths than basis functions
    """
    values = np.asarray(values, dtype=float)
    state = np.asarray(state, dtype=float).reshape(len(values), -1)
    n_paths = len(values)

    spread = np.ptp(state, axis=0) if state.shape[1] else np.zeros(0)
    scale = np.maximum(1.0, np.abs(state).max(axis=0)) if state.shape[1] else np.zeros(0)
    varying = spread > _CONSTANT_TOL * scale
    state = state[:, varying]
    if state.shape[1] == 0 or spec.degree == 0:
        return np.full(n_paths, _path_mean(values)), False

    state = (state - state.mean(axis=0)) / state.std(axis=0)
    design = _basis(state, spec.degree)
    if design.shape[1] > n_paths:
        raise RegressionError(
            _MODULE, f"{n_paths} paths cannot fit {design.shape[1]} basis functions"
        )

    coef, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < design.shape[1]:
        logger.warning("rank-deficient regression (rank %d of %d), using ridge %.1e",
                       rank, design.shape[1], spec.ridge)
        gram = design.T @ design + spec.ridge * np.eye(design.shape[1])
        coef = np.linalg.solve(gram, design.T @ values)
        return design @ coef, True
    return design @ coef, False


def regression_state(cube: ScenarioCube, spec: RegressionSpec, node: int) -> np.ndarray:
    """(paths, factors) state matrix at a simulation node."""
    names = spec.state_factors(cube)
    if not names:
        return np.zeros((cube.path_count, 0))
    return np.column_stack([cube.factor(name)[:, node] for name in names])


def _interval_survival(cube: ScenarioCube, factor: Optional[str],
                       curve: Optional[TermStructure], t0: float, t1: float) -> np.ndarray:
    if factor is not None:
        return np.exp(-cube.integral(factor, t0, t1))
    if curve is not None:
        return np.full(cube.path_count, survival_probability(curve, t0, t1))
    return np.ones(cube.path_count)


def interval_discount_factors(cube: ScenarioCube, curve: Optional[TermStructure] = None,
                              rate_factor: str = FactorRole.RATE.value) -> np.ndarray:
    """(paths, buckets) discount factor over each bucket interval; column 0 is 1."""
    times = cube.grid.bucket_times
    factors = np.ones((cube.path_count, len(times)))
    for k in range(1, len(times)):
        if cube.has_factor(rate_factor):
            factors[:, k] = np.exp(-cube.integral(rate_factor, times[k - 1], times[k]))
        elif curve is not None:
            factors[:, k] = discount_factor(curve, times[k - 1], times[k])
        else:
            raise ConfigurationError(_MODULE, f"no rate factor '{rate_factor}' and no discount curve")
    return factors


def portfolio_risk_free_value(buckets: BucketedCashflows, cube: ScenarioCube,
                              curve: Optional[TermStructure] = None,
                              rate_factor: str = FactorRole.RATE.value) -> MonteCarloEstimate:
    """Path average of sum_k flow_k D(0, T_k), with its standard error."""
    if cube.path_count < 1:
        raise ConfigurationError(_MODULE, "empty cube")
    to_zero = np.cumprod(interval_discount_factors(cube, curve, rate_factor), axis=1)
    samples = np.array([math.fsum(row) for row in buckets.netted * to_zero])
    return MonteCarloEstimate.from_samples(samples, cube.seed)


def _roll_stream(flows: np.ndarray, cube: ScenarioCube, discounts: np.ndarray,
                 survival_A: List[np.ndarray], survival_B: List[np.ndarray],
                 recoveries: RecoveryProfile, rho: float, spec: RegressionSpec,
                 credit_side: CreditSide, b_indexed_prefactor: bool):
    n_paths, n_buckets = flows.shape
    risky = np.zeros((n_paths, n_buckets))
    free = np.zeros((n_paths, n_buckets))
    continuation = np.zeros((n_paths, n_buckets))
    ridge_used = False

    psi = np.zeros(n_paths)
    value_free = np.zeros(n_paths)
    expected = np.zeros(n_paths)
    for k in range(n_buckets - 1, 0, -1):
        claim = flows[:, k] + psi
        receivable = flows[:, k] + expected >= 0
        D = discounts[:, k]
        S_B = survival_B[k]
        if credit_side is CreditSide.BILATERAL:
            S_A = survival_A[k]
            factors = dtm_settlement_factors(S_A, 1.0 - S_A, S_B, 1.0 - S_B, recoveries, rho, b_indexed_prefactor)
            Y = bilateral_dtm_factor(D, factors, receivable)
        else:
            Y = unilateral_dtm_factor(D, 1.0 - S_B, recoveries.phi_B, receivable)
        psi = Y * claim
        value_free = D * (flows[:, k] + value_free)
        risky[:, k - 1] = psi
        free[:, k - 1] = value_free

        if k - 1 >= 1:
            state = regression_state(cube, spec, cube.grid.bucket_nodes[k - 1])
            expected, used = conditional_expectation(psi, state, spec)
            ridge_used = ridge_used or used
            continuation[:, k - 1] = expected
        else:
            continuation[:, 0] = _path_mean(psi)
    return risky, free, continuation, ridge_used


def risky_rollback(buckets: BucketedCashflows, cube: ScenarioCube, recoveries: RecoveryProfile,
                   rho: float = 0.0, spec: RegressionSpec = RegressionSpec(),
                   credit_side: CreditSide = CreditSide.BILATERAL,
                   curves: Optional[CurveSet] = None, b_indexed_prefactor: bool = False,
                   rate_factor: str = FactorRole.RATE.value) -> PortfolioValuation:
    """
    Risky and risk-free portfolio values by regression-based backward induction.

    Per-path interval default probabilities come from the simulated hazard
    factors (roles hazard_A / hazard_B); a missing factor falls back to the
    matching deterministic curve in ``curves``, and a missing party-A hazard
    with no curve means A is default-free. Bucket-0 flows are paid at the
    valuation date without credit adjustment. Without netting the positive
    and negative streams are rolled back separately and their values added.

    Parameters:
    -----------
    buckets : BucketedCashflows
        Per-path bucket flows
    cube : ScenarioCube
        Simulated paths the flows were determined on
    recoveries : RecoveryProfile
        Recovery fractions
    rho : float, default=0.0
        Default correlation applied per bucket interval
    spec : RegressionSpec
        Continuation-value regression
    credit_side : CreditSide
        Unilateral (B risky) or bilateral
    curves : CurveSet, optional
        Deterministic discount and hazard curves for missing factors
    b_indexed_prefactor : bool, default=False
        Use B-indexed recoveries in the A-side correlation prefactor

    Returns:
    --------
    PortfolioValuation
        Per-path values and the headline result
    """
    credit_side = CreditSide(credit_side)
    if buckets.path_count != cube.path_count:
        raise ConfigurationError(_MODULE, "bucketed flows and cube have different path counts")
    if len(buckets.bucket_times) != len(cube.grid.bucket_times):
        raise ConfigurationError(_MODULE, "bucketed flows do not match the cube's bucket grid")

    times = cube.grid.bucket_times
    discount_curve = curves.discount if curves is not None else None
    discounts = interval_discount_factors(cube, discount_curve, rate_factor)
    hazard_B = cube.factor_for_role(FactorRole.HAZARD_B)
    hazard_A = cube.factor_for_role(FactorRole.HAZARD_A)
    curve_B = curves.hazard_B if curves is not None else None
    curve_A = curves.hazard_A if curves is not None else None
    if hazard_B is None and curve_B is None:
        raise ConfigurationError(_MODULE, "no hazard_B factor and no deterministic hazard curve for B")

    survival_B = [None] + [_interval_survival(cube, hazard_B, curve_B, times[k - 1], times[k])
                           for k in range(1, len(times))]
    survival_A = [None] + [_interval_survival(cube, hazard_A, curve_A, times[k - 1], times[k])
                           for k in range(1, len(times))]

    n_paths, n_buckets = buckets.positive.shape
    risky = np.zeros((n_paths, n_buckets))
    free = np.zeros((n_paths, n_buckets))
    continuation = np.zeros((n_paths, n_buckets))
    ridge_used = False
    for stream in buckets.streams():
        r, f, c, used = _roll_stream(stream, cube, discounts, survival_A, survival_B,
                                     recoveries, rho, spec, credit_side, b_indexed_prefactor)
        risky += r
        free += f
        continuation += c
        ridge_used = ridge_used or used

    immediate = buckets.netted[:, 0]
    valuation = PortfolioValuation(risky, free, continuation, immediate + risky[:, 0],
                                   immediate + free[:, 0], cube.seed, ridge_used)
    logger.debug("rollback over %d paths: risk-free %.6f risky %.6f",
                 n_paths, valuation.headline.risk_free, valuation.headline.risky)
    return valuation


def portfolio_cva(valuation: PortfolioValuation,
                  risk_free: Optional[MonteCarloEstimate] = None) -> MonteCarloEstimate:
    """
    CVA = risk-free value - risky value, with the standard error of the
    per-path differences.

    ``risk_free`` may come from ``portfolio_risk_free_value``; it must
    share the valuation's seed and path count.
    """
    differences = valuation.risk_free_paths - valuation.risky_paths
    if risk_free is None:
        return MonteCarloEstimate(valuation.headline.cva, _standard_error(differences),
                                  valuation.path_count, valuation.seed)
    if risk_free.seed != valuation.seed or risk_free.paths != valuation.path_count:
        raise ConfigurationError(
            _MODULE, f"risk-free value (seed {risk_free.seed}, {risk_free.paths} paths) does not match "
                     f"the risky valuation (seed {valuation.seed}, {valuation.path_count} paths)"
        )
    return MonteCarloEstimate(cva_from(risk_free.mean, valuation.headline.risky),
                              _standard_error(differences), valuation.path_count, valuation.seed)
