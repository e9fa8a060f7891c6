"""
Deterministic term structures.
Piecewise-constant interest and hazard curves with exact segment integrals,
survival/default probabilities and a CDS hazard bootstrap.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from src.errors import (
    ArbitrageError,
    BootstrapError,
    ConfigurationError,
    HorizonExceededError,
)

logger = logging.getLogger(__name__)

_MODULE = "term_structures"
_TIME_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


class CurveKind(str, Enum):
    INTEREST = "interest"
    HAZARD = "hazard"


@dataclass(frozen=True)
class TermStructure:
    """
    Piecewise-constant forward (or hazard) curve.

    ``node_rates[i]`` applies on ``[node_times[i], node_times[i+1])``; the
    curve is defined up to ``node_times[-1]``.

    Attributes
    ----------
    node_times : tuple of float
        Strictly increasing year fractions starting at 0
    node_rates : tuple of float
        One per-annum rate per interval
    kind : CurveKind
        Interest curves may go negative, hazard curves may not
    """

    node_times: Tuple[float, ...]
    node_rates: Tuple[float, ...]
    kind: CurveKind = CurveKind.INTEREST
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.node_times)
        rates = tuple(float(r) for r in self.node_rates)
        kind = CurveKind(self.kind)
        object.__setattr__(self, "node_times", times)
        object.__setattr__(self, "node_rates", rates)
        object.__setattr__(self, "kind", kind)

        if len(times) < 2:
            raise ConfigurationError(_MODULE, "a curve needs at least two node times")
        if times[0] != 0.0:
            raise ConfigurationError(_MODULE, f"first node time must be 0, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError(_MODULE, "node times must be strictly increasing")
        if len(rates) != len(times) - 1:
            raise ConfigurationError(
                _MODULE,
                f"expected {len(times) - 1} rates for {len(times)} nodes, got {len(rates)}"
            )
        if not all(math.isfinite(r) for r in rates):
            raise ConfigurationError(_MODULE, "rates must be finite")
        if kind is CurveKind.HAZARD and any(r < 0 for r in rates):
            raise ConfigurationError(_MODULE, "hazard rates must be non-negative")

        widths = np.diff(np.asarray(times))
        cumulative = np.concatenate(([0.0], np.cumsum(widths * np.asarray(rates))))
        object.__setattr__(self, "_cumulative", cumulative)

    @classmethod
    def flat(cls, rate: float, horizon: float = 100.0,
             kind: CurveKind = CurveKind.INTEREST) -> "TermStructure":
        """Single-segment curve at ``rate`` out to ``horizon``."""
        return cls((0.0, float(horizon)), (float(rate),), kind)

    @property
    def horizon(self) -> float:
        return self.node_times[-1]

    def _check_times(self, t: np.ndarray) -> np.ndarray:
        if np.any(t < -_TIME_TOL):
            raise ConfigurationError(_MODULE, "times must be non-negative")
        if np.any(t > self.horizon + _TIME_TOL):
            raise HorizonExceededError(
                _MODULE,
                f"time {float(np.max(t)):.10g} beyond curve horizon {self.horizon:.10g}"
            )
        return np.clip(t, 0.0, self.horizon)

    def cumulative(self, t: ArrayLike) -> ArrayLike:
        """Exact integral of the curve from 0 to ``t``."""
        t_arr = self._check_times(np.asarray(t, dtype=float))
        times = np.asarray(self.node_times)
        idx = np.clip(np.searchsorted(times, t_arr, side="right") - 1, 0, len(self.node_rates) - 1)
        rates = np.asarray(self.node_rates)
        value = self._cumulative[idx] + rates[idx] * (t_arr - times[idx])
        return float(value) if value.ndim == 0 else value

    def integral(self, t: float, s: float) -> float:
        """Exact integral over ``[t, s]``."""
        if s < t:
            raise ConfigurationError(_MODULE, f"reversed interval [{t}, {s}]")
        if s == t:
            self._check_times(np.asarray([t]))
            return 0.0
        return self.cumulative(s) - self.cumulative(t)

    def rate_at(self, t: float) -> float:
        """Instantaneous rate in force at ``t`` (right-continuous)."""
        t_arr = self._check_times(np.asarray(t, dtype=float))
        idx = int(np.clip(np.searchsorted(self.node_times, t_arr, side="right") - 1,
                          0, len(self.node_rates) - 1))
        return self.node_rates[idx]


@dataclass(frozen=True)
class CdsQuoteStrip:
    """Par CDS spreads for one reference entity."""

    maturities: Tuple[float, ...]
    spreads: Tuple[float, ...]
    recovery: float

    def __post_init__(self) -> None:
        maturities = tuple(float(m) for m in self.maturities)
        spreads = tuple(float(s) for s in self.spreads)
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "spreads", spreads)

        if not maturities or len(maturities) != len(spreads):
            raise ConfigurationError(_MODULE, "CDS strip needs one spread per maturity")
        if maturities[0] <= 0 or any(b <= a for a, b in zip(maturities, maturities[1:])):
            raise ConfigurationError(_MODULE, "CDS maturities must be positive and strictly increasing")
        if any(s < 0 for s in spreads):
            raise ConfigurationError(_MODULE, "CDS spreads must be non-negative")
        if not 0.0 <= self.recovery <= 1.0:
            raise ConfigurationError(_MODULE, f"recovery must be in [0, 1], got {self.recovery}")
        if self.recovery == 1.0 and any(s > 0 for s in spreads):
            raise ConfigurationError(_MODULE, "positive spreads are inconsistent with full recovery")


def discount_factor(curve: TermStructure, t: float, s: float) -> float:
    """
    Risk-free discount factor exp(-int_t^s r(u) du).

    Parameters:
    -----------
    curve : TermStructure
        Interest-rate curve
    t, s : float
        Interval end points, t <= s

    Returns:
    --------
    float
        Discount factor, exactly 1.0 when t == s
    """
    return math.exp(-curve.integral(t, s))


def survival_probability(curve: TermStructure, t: float, s: float) -> float:
    """Conditional survival probability exp(-int_t^s h(u) du)."""
    return math.exp(-curve.integral(t, s))


def default_probability(curve: TermStructure, t: float, s: float) -> float:
    """Conditional default probability, exactly 1 - survival_probability."""
    return 1.0 - survival_probability(curve, t, s)


def _breakpoints(discount: TermStructure, hazard_times: Sequence[float], upto: float) -> np.ndarray:
    points = set(t for t in discount.node_times if t < upto)
    points.update(t for t in hazard_times if t < upto)
    points.add(0.0)
    points.add(upto)
    return np.array(sorted(points))


def _leg_integrals(discount: TermStructure, hazard_times: Sequence[float],
                   hazard_rates: Sequence[float], upto: float) -> Tuple[float, float]:
    """
    Exact premium annuity int D*S du and protection integral int D*h*S du
    over [0, upto] for piecewise-constant rates and hazards.
    """
    points = _breakpoints(discount, hazard_times, upto)
    annuity = 0.0
    protection = 0.0
    log_factor = 0.0
    hazard_nodes = np.asarray(hazard_times)
    for a, b in zip(points[:-1], points[1:]):
        width = b - a
        r = discount.rate_at(a)
        h_idx = int(np.clip(np.searchsorted(hazard_nodes, a, side="right") - 1, 0, len(hazard_rates) - 1))
        h = hazard_rates[h_idx]
        k = r + h
        if abs(k) * width < 1e-14:
            segment = width
        else:
            segment = -math.expm1(-k * width) / k
        weight = math.exp(-log_factor) * segment
        annuity += weight
        protection += h * weight
        log_factor += k * width
    return annuity, protection


def cds_par_spread(hazard: TermStructure, discount: TermStructure,
                   maturity: float, recovery: float) -> float:
    """
    Par spread of a CDS paying premium continuously to ``maturity``.

    Protection pays (1 - recovery) at default; the par spread equates the
    two legs.
    """
    if maturity > hazard.horizon + _TIME_TOL:
        raise HorizonExceededError(_MODULE, f"maturity {maturity} beyond hazard horizon {hazard.horizon}")
    annuity, protection = _leg_integrals(discount, hazard.node_times, hazard.node_rates, maturity)
    return (1.0 - recovery) * protection / annuity


def bootstrap_hazards(quotes: CdsQuoteStrip, discount: TermStructure) -> TermStructure:
    """
    Bootstrap a piecewise-constant hazard curve from par CDS spreads.

    Segments are solved left to right; each segment's hazard is the root of
    spread * annuity - (1 - recovery) * protection on [0, T_i].

    Parameters:
    -----------
    quotes : CdsQuoteStrip
        Maturities, par spreads and recovery of the reference entity
    discount : TermStructure
        Interest-rate curve covering the last maturity

    Returns:
    --------
    TermStructure
        Hazard curve with nodes at 0 and every quote maturity

    Raises:
    -------
    ArbitrageError
        When a quote can only be matched with a negative hazard
    BootstrapError
        When root-finding fails to bracket or converge
    """
    if quotes.maturities[-1] > discount.horizon + _TIME_TOL:
        raise HorizonExceededError(_MODULE, "discount curve does not cover the CDS strip")

    lgd = 1.0 - quotes.recovery
    times = [0.0]
    rates = []
    for segment, (maturity, spread) in enumerate(zip(quotes.maturities, quotes.spreads)):
        trial_times = times + [maturity]

        def mismatch(h: float) -> float:
            annuity, protection = _leg_integrals(discount, trial_times, rates + [h], maturity)
            return spread * annuity - lgd * protection

        at_zero = mismatch(0.0)
        scale = max(spread, 1e-12)
        if abs(at_zero) <= 1e-15 * max(1.0, maturity):
            rates.append(0.0)
            times.append(maturity)
            continue
        if at_zero < 0:
            raise ArbitrageError(_MODULE, "quote implies a negative hazard rate", segment)

        upper = max(4.0 * scale / max(lgd, 1e-12), 1e-4)
        for _ in range(80):
            if mismatch(upper) < 0:
                break
            upper *= 2.0
        else:
            raise BootstrapError(_MODULE, "could not bracket the hazard rate", segment)

        try:
            root, info = brentq(mismatch, 0.0, upper, xtol=1e-16, rtol=4 * np.finfo(float).eps,
                                maxiter=500, full_output=True)
        except (RuntimeError, ValueError) as exc:
            raise BootstrapError(_MODULE, f"root-finding failed: {exc}", segment) from exc
        if not info.converged:
            raise BootstrapError(_MODULE, "root-finding did not converge", segment)

        logger.debug("bootstrap segment %d: T=%.6g spread=%.6g hazard=%.10g", segment, maturity, spread, root)
        rates.append(float(root))
        times.append(maturity)

    return TermStructure(tuple(times), tuple(rates), CurveKind.HAZARD)
