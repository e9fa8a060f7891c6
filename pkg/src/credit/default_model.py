"""
Joint default law of two counterparties and the settlement coefficients
used by bilateral risky valuation.

All functions accept floats or numpy arrays (broadcast elementwise) so the
Monte-Carlo engine can evaluate one coefficient per path in a single call.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.errors import ConfigurationError, InfeasibleCorrelationError, StepTooCoarseError

_MODULE = "default_model"
_CELL_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


def _out(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class RecoveryProfile:
    """
    Recovery fractions of both parties.

    phi_j is the default recovery of party j; phibar_j is what the
    non-defaulting side pays when the deal favours the defaulter
    (0 = one-way settlement, 1 = two-way); phi_AB applies on joint default.
    """

    phi_A: float = 0.0
    phi_B: float = 0.0
    phibar_A: float = 1.0
    phibar_B: float = 1.0
    phi_AB: float = 0.0

    def __post_init__(self) -> None:
        for name in ("phi_A", "phi_B", "phibar_A", "phibar_B", "phi_AB"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(_MODULE, f"{name} must be in [0, 1], got {value}", field=name)

    @classmethod
    def unilateral(cls, phi_B: float) -> "RecoveryProfile":
        """Party A default-free, two-way settlement."""
        return cls(phi_A=0.0, phi_B=phi_B, phibar_A=1.0, phibar_B=1.0, phi_AB=0.0)


@dataclass(frozen=True)
class JointDefaultLaw:
    """Four-cell bivariate Bernoulli law; index order is (A, B), 1 = default."""

    q_A: float
    q_B: float
    rho: float
    p11: float
    p10: float
    p01: float
    p00: float

    @property
    def gamma(self) -> float:
        return self.p11 - self.q_A * self.q_B


def _cells(q_A: ArrayLike, q_B: ArrayLike, rho: ArrayLike):
    q_A = np.asarray(q_A, dtype=float)
    q_B = np.asarray(q_B, dtype=float)
    s_A = 1.0 - q_A
    s_B = 1.0 - q_B
    gamma = rho * np.sqrt(np.maximum(q_A * s_A * q_B * s_B, 0.0))
    p11 = q_A * q_B + gamma
    p10 = q_A - p11
    p01 = q_B - p11
    p00 = 1.0 - q_A - q_B + p11
    return gamma, p11, p10, p01, p00


def _check_cells(p11, p10, p01, p00) -> None:
    for name, cell in (("p11", p11), ("p10", p10), ("p01", p01), ("p00", p00)):
        bad = (cell < -_CELL_TOL) | (cell > 1.0 + _CELL_TOL)
        if np.any(bad):
            index = int(np.flatnonzero(np.atleast_1d(bad))[0])
            value = float(np.atleast_1d(cell)[index])
            raise InfeasibleCorrelationError(
                _MODULE, f"correlation outside the feasible range, {name}={value:.6g}", name
            )


def joint_default_distribution(q_A: float, q_B: float, rho: float) -> JointDefaultLaw:
    """
    Joint default law with marginals q_A, q_B and default correlation rho.

    Parameters:
    -----------
    q_A, q_B : float
        Marginal default probabilities in [0, 1]
    rho : float
        Default correlation in [-1, 1]

    Returns:
    --------
    JointDefaultLaw
        Cells summing to one with exact marginals

    Raises:
    -------
    InfeasibleCorrelationError
        When any cell leaves [0, 1]
    """
    for name, q in (("q_A", q_A), ("q_B", q_B)):
        if not 0.0 <= q <= 1.0:
            raise ConfigurationError(_MODULE, f"{name} must be in [0, 1], got {q}", field=name)
    if not -1.0 <= rho <= 1.0:
        raise InfeasibleCorrelationError(_MODULE, f"rho={rho} outside [-1, 1]", "rho")
    _, p11, p10, p01, p00 = _cells(q_A, q_B, rho)
    _check_cells(p11, p10, p01, p00)
    return JointDefaultLaw(float(q_A), float(q_B), float(rho),
                           float(p11), float(p10), float(p01), float(p00))


def rho_feasible_range(q_A: float, q_B: float) -> Tuple[float, float]:
    """Widest [rho_min, rho_max] keeping every joint-default cell in [0, 1]."""
    if q_A <= 0.0 or q_A >= 1.0 or q_B <= 0.0 or q_B >= 1.0:
        return 0.0, 0.0
    s_A = 1.0 - q_A
    s_B = 1.0 - q_B
    scale = math.sqrt(q_A * s_A * q_B * s_B)
    rho_max = min(q_A * s_B, s_A * q_B) / scale
    rho_min = -min(q_A * q_B, s_A * s_B) / scale
    return max(-1.0, rho_min), min(1.0, rho_max)


def bilateral_step_spreads(h_A: ArrayLike, h_B: ArrayLike, rec: RecoveryProfile,
                           rho: float, dt: float,
                           b_indexed_prefactor: bool = False) -> Tuple[ArrayLike, ArrayLike]:
    """
    Risk-adjusted spreads (p_A, p_B) for one step of length ``dt``.

    ``b_indexed_prefactor`` uses the B-indexed recoveries in the p_A
    cross-term prefactor instead of the A-indexed ones.
    """
    h_A = np.asarray(h_A, dtype=float)
    h_B = np.asarray(h_B, dtype=float)
    if dt <= 0:
        raise ConfigurationError(_MODULE, f"dt must be positive, got {dt}")
    if np.any(h_A < 0) or np.any(h_B < 0):
        raise ConfigurationError(_MODULE, "hazard rates must be non-negative")
    if np.any(h_A * dt > 1.0 + _CELL_TOL) or np.any(h_B * dt > 1.0 + _CELL_TOL):
        raise StepTooCoarseError(_MODULE, f"h*dt exceeds one for dt={dt}")

    q_A = np.minimum(h_A * dt, 1.0)
    q_B = np.minimum(h_B * dt, 1.0)
    _, p11, p10, p01, p00 = _cells(q_A, q_B, rho)
    _check_cells(p11, p10, p01, p00)

    cross = (rho * np.sqrt(h_A * h_B * (1.0 - h_B * dt) * (1.0 - h_A * dt))
             + h_B * h_A * dt)
    k_B = 1.0 - rec.phi_B - rec.phibar_B + rec.phi_AB
    if b_indexed_prefactor:
        k_A = k_B
    else:
        k_A = 1.0 - rec.phi_A - rec.phibar_A + rec.phi_AB
    p_B = (1.0 - rec.phi_B) * h_B + (1.0 - rec.phibar_B) * h_A - k_B * cross
    p_A = (1.0 - rec.phi_A) * h_A + (1.0 - rec.phibar_A) * h_B - k_A * cross
    return _out(p_A), _out(p_B)


def dtm_settlement_factors(S_A: ArrayLike, Q_A: ArrayLike, S_B: ArrayLike, Q_B: ArrayLike,
                           rec: RecoveryProfile, rho: float,
                           b_indexed_prefactor: bool = False) -> Tuple[ArrayLike, ArrayLike]:
    """
    Settlement factors (y_A, y_B) over one payment interval.

    y_B weights a receivable for party A (B is the debtor), y_A a payable.
    Each factor is written as one minus the expected loss over the three
    default cells, so full recovery and zero default risk give exactly 1.

    Parameters:
    -----------
    S_A, Q_A, S_B, Q_B : float or ndarray
        Interval survival and default probabilities of each party
    rec : RecoveryProfile
        Recovery fractions
    rho : float
        Default correlation for the interval
    b_indexed_prefactor : bool, default=False
        Use the B-indexed correlation prefactor inside y_A

    Returns:
    --------
    tuple
        (y_A, y_B)
    """
    S_A = np.asarray(S_A, dtype=float)
    S_B = np.asarray(S_B, dtype=float)
    Q_A = np.asarray(Q_A, dtype=float)
    Q_B = np.asarray(Q_B, dtype=float)
    gamma = rho * np.sqrt(np.maximum(S_B * Q_B * S_A * Q_A, 0.0))
    _check_cells(Q_A * Q_B + gamma, Q_A * S_B - gamma, S_A * Q_B - gamma, S_A * S_B + gamma)

    k_B = 1.0 - rec.phi_B - rec.phibar_B + rec.phi_AB
    loss_B = ((1.0 - rec.phi_B) * Q_B * S_A
              + (1.0 - rec.phibar_B) * S_B * Q_A
              + (1.0 - rec.phi_AB) * Q_B * Q_A
              - gamma * k_B)
    if b_indexed_prefactor:
        k_A = k_B
    else:
        k_A = 1.0 - rec.phi_A - rec.phibar_A + rec.phi_AB
    loss_A = ((1.0 - rec.phi_A) * Q_A * S_B
              + (1.0 - rec.phibar_A) * S_A * Q_B
              + (1.0 - rec.phi_AB) * Q_B * Q_A
              - gamma * k_A)
    return _out(1.0 - loss_A), _out(1.0 - loss_B)
