"""
Risk-adjusted discount rates (CTM) and factors (DTM) for the four model
regimes. CTM functions return rates to be composed over grid steps; DTM
functions return factors over a whole payment interval.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from src.errors import ConfigurationError

_MODULE = "risky_discounting"

ArrayLike = Union[float, np.ndarray]


class CreditSide(str, Enum):
    UNILATERAL_B = "unilateral_B"
    BILATERAL = "bilateral"


class Timing(str, Enum):
    CTM = "ctm"
    DTM = "dtm"


@dataclass(frozen=True)
class ModelRegime:
    credit_side: CreditSide = CreditSide.BILATERAL
    timing: Timing = Timing.DTM

    def __post_init__(self) -> None:
        object.__setattr__(self, "credit_side", CreditSide(self.credit_side))
        object.__setattr__(self, "timing", Timing(self.timing))

    @property
    def is_bilateral(self) -> bool:
        return self.credit_side is CreditSide.BILATERAL


class SignState(str, Enum):
    """Sign of the forward-looking value; zero counts as nonnegative."""

    NONNEGATIVE = "nonnegative"
    NEGATIVE = "negative"

    @classmethod
    def of(cls, value: float) -> "SignState":
        return cls.NONNEGATIVE if value >= 0 else cls.NEGATIVE


Sign = Union[SignState, np.ndarray]


def _nonnegative(sign: Sign) -> Union[bool, np.ndarray]:
    """Accept a SignState or a boolean mask (True = nonnegative)."""
    if isinstance(sign, SignState):
        return sign is SignState.NONNEGATIVE
    return np.asarray(sign, dtype=bool)


def _select(mask, when_nonnegative, when_negative) -> ArrayLike:
    if isinstance(mask, (bool, np.bool_)):
        return when_nonnegative if mask else when_negative
    value = np.where(mask, when_nonnegative, when_negative)
    return float(value) if value.ndim == 0 else value


def _check_fraction(name: str, value: ArrayLike) -> None:
    arr = np.asarray(value)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ConfigurationError(_MODULE, f"{name} must be in [0, 1]")


def unilateral_ctm_rate(r: ArrayLike, h_B: ArrayLike, phi_B: float, sign: Sign) -> ArrayLike:
    """r + h_B(1 - phi_B) for a receivable, r otherwise."""
    if np.any(np.asarray(h_B) < 0):
        raise ConfigurationError(_MODULE, "h_B must be non-negative")
    _check_fraction("phi_B", phi_B)
    return _select(_nonnegative(sign), r + h_B * (1.0 - phi_B), r)


def unilateral_dtm_factor(D: ArrayLike, Q_B: ArrayLike, phi_B: float, payoff_sign: Sign) -> ArrayLike:
    """
    D(1 - Q_B(1 - phi_B)) for a receivable, D otherwise.

    Parameters:
    -----------
    D : float or ndarray
        Risk-free discount factor over the interval
    Q_B : float or ndarray
        Default probability of party B over the interval
    phi_B : float
        Default recovery of party B
    payoff_sign : SignState or boolean mask
        Sign of the claim at the end of the interval

    Returns:
    --------
    float or ndarray
        Risk-adjusted discount factor
    """
    _check_fraction("phi_B", phi_B)
    return _select(_nonnegative(payoff_sign), D * (1.0 - Q_B * (1.0 - phi_B)), D)


def bilateral_ctm_rate(r: ArrayLike, spreads: Tuple[ArrayLike, ArrayLike], sign: Sign) -> ArrayLike:
    """r + p_B for a receivable, r + p_A for a payable."""
    p_A, p_B = spreads
    return _select(_nonnegative(sign), r + p_B, r + p_A)


def bilateral_dtm_factor(D: ArrayLike, factors: Tuple[ArrayLike, ArrayLike], sign: Sign) -> ArrayLike:
    """D * y_B for a receivable, D * y_A for a payable."""
    y_A, y_B = factors
    return _select(_nonnegative(sign), D * y_B, D * y_A)
