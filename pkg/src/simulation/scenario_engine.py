"""
Risk-neutral scenario generation.

Correlated paths for short rate, hazard rates, equity, FX and collateral
factors on a time-bucket grid. Each path draws from its own substream
(seed, path index), so a cube is reproducible for any chunking or number
of joblib workers, and adding paths never reshuffles existing ones.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.integrate import cumulative_trapezoid

from src.errors import ConfigurationError, GridAlignmentError, HorizonExceededError
from utils.seeding import check_seed, path_generator

logger = logging.getLogger(__name__)

_MODULE = "scenario_engine"
_TIME_TOL = 1e-12
_PSD_TOL = -1e-10

ArrayLike = Union[float, np.ndarray]


class ProcessKind(str, Enum):
    CIR = "cir"
    GBM = "gbm"
    BK = "bk"


class FactorRole(str, Enum):
    RATE = "rate"
    HAZARD_A = "hazard_A"
    HAZARD_B = "hazard_B"
    EQUITY = "equity"
    FX = "fx"
    COLLATERAL = "collateral"


@dataclass(frozen=True)
class TimeBucketGrid:
    """
    Valuation buckets T_0 = 0 < T_1 < ... < T_N with optional collateral
    shadow nodes T_k - margin_period. Simulation stores every bucket and
    every shadow node; ``node_times`` is their sorted union.
    """

    bucket_times: Tuple[float, ...]
    margin_period: float = 0.0
    node_times: Tuple[float, ...] = field(init=False)
    bucket_nodes: Tuple[int, ...] = field(init=False, repr=False)
    shadow_nodes: Tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        buckets = tuple(float(t) for t in self.bucket_times)
        object.__setattr__(self, "bucket_times", buckets)
        if len(buckets) < 2:
            raise ConfigurationError(_MODULE, "a bucket grid needs at least two times")
        if buckets[0] != 0.0:
            raise ConfigurationError(_MODULE, f"first bucket must be 0, got {buckets[0]}")
        if any(b <= a for a, b in zip(buckets, buckets[1:])):
            raise ConfigurationError(_MODULE, "bucket times must be strictly increasing")
        if self.margin_period < 0:
            raise ConfigurationError(_MODULE, "margin period must be non-negative")

        shadows = [max(t - self.margin_period, 0.0) for t in buckets]
        nodes = sorted(set(buckets) | set(shadows))
        merged: List[float] = []
        for t in nodes:
            if merged and t - merged[-1] <= _TIME_TOL:
                continue
            merged.append(t)
        object.__setattr__(self, "node_times", tuple(merged))
        object.__setattr__(self, "bucket_nodes", tuple(self._locate(t) for t in buckets))
        object.__setattr__(self, "shadow_nodes", tuple(self._locate(t) for t in shadows))

    def _locate(self, t: float) -> int:
        idx = int(np.argmin(np.abs(np.asarray(self.node_times) - t)))
        if abs(self.node_times[idx] - t) > _TIME_TOL:
            raise GridAlignmentError(_MODULE, f"time {t} is not a simulation node")
        return idx

    @property
    def horizon(self) -> float:
        return self.bucket_times[-1]

    @property
    def shadow_times(self) -> Tuple[float, ...]:
        return tuple(self.node_times[i] for i in self.shadow_nodes)

    def node_index(self, t: float) -> int:
        return self._locate(t)

    def bucket_of(self, t: float) -> int:
        """Nearest previous bucket, inclusive of the bucket date itself."""
        if t < -_TIME_TOL:
            raise ConfigurationError(_MODULE, f"time {t} precedes the first bucket")
        if t > self.horizon + _TIME_TOL:
            raise HorizonExceededError(_MODULE, f"time {t} beyond bucket horizon {self.horizon}")
        idx = int(np.searchsorted(self.bucket_times, t + _TIME_TOL, side="right") - 1)
        return min(max(idx, 0), len(self.bucket_times) - 1)

    @classmethod
    def regular(cls, horizon: float, step: float, margin_period: float = 0.0) -> "TimeBucketGrid":
        """Buckets every ``step`` years; a shorter final bucket closes the horizon."""
        if horizon <= 0 or step <= 0:
            raise ConfigurationError(_MODULE, "horizon and step must be positive")
        count = int(math.floor(horizon / step + 1e-9))
        times = [k * step for k in range(count + 1)]
        if horizon - times[-1] > 1e-9:
            times.append(horizon)
        else:
            times[-1] = horizon
        return cls(tuple(times), margin_period)

    @classmethod
    def tiered(cls, tiers: Sequence[Tuple[float, float]], margin_period: float = 0.0) -> "TimeBucketGrid":
        """
        Fine buckets at the short end, coarse at the far end.

        ``tiers`` is a sequence of (until, step) pairs with increasing
        ``until``, e.g. ((1, 1/52), (5, 1/12), (30, 1/4)).
        """
        times = [0.0]
        for until, step in tiers:
            if step <= 0 or until <= times[-1]:
                raise ConfigurationError(_MODULE, "tiers need positive steps and increasing ends")
            while until - times[-1] > 1e-9:
                times.append(min(times[-1] + step, until))
        return cls(tuple(times), margin_period)


@dataclass(frozen=True)
class ProcessSpec:
    """
    One simulated risk factor.

    cir: dx = speed(level - x)dt + volatility sqrt(x) dW (full truncation)
    gbm: dX = drift X dt + volatility X dW (stepped in log space)
    bk:  d ln X = speed(ln level - ln X)dt + volatility dW
    """

    kind: ProcessKind
    role: FactorRole
    initial: float
    speed: float = 0.0
    level: float = 0.0
    volatility: float = 0.0
    drift: float = 0.0
    name: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProcessKind(self.kind))
        object.__setattr__(self, "role", FactorRole(self.role))
        if self.name is None:
            object.__setattr__(self, "name", self.role.value)
        for attr in ("initial", "speed", "level", "volatility", "drift"):
            value = float(getattr(self, attr))
            if not math.isfinite(value):
                raise ConfigurationError(_MODULE, f"{attr} must be finite", field=f"{self.name}.{attr}")
            object.__setattr__(self, attr, value)

        if self.volatility < 0:
            raise ConfigurationError(_MODULE, "volatility must be non-negative", field=f"{self.name}.volatility")
        if self.speed < 0:
            raise ConfigurationError(_MODULE, "mean-reversion speed must be non-negative", field=f"{self.name}.speed")
        if self.kind is ProcessKind.CIR:
            if self.level < 0:
                raise ConfigurationError(_MODULE, "CIR level must be non-negative", field=f"{self.name}.level")
            if self.initial < 0:
                raise ConfigurationError(_MODULE, "CIR initial state must be non-negative", field=f"{self.name}.initial")
        elif self.initial <= 0:
            raise ConfigurationError(_MODULE, f"{self.kind.value} initial state must be positive",
                                     field=f"{self.name}.initial")
        if self.kind is ProcessKind.BK and self.level <= 0:
            raise ConfigurationError(_MODULE, "BK level must be positive", field=f"{self.name}.level")


def feller_check(spec: ProcessSpec) -> Tuple[bool, str]:
    """
    Feller condition 2 * speed * level >= volatility^2 for a CIR factor.

    Returns:
    --------
    tuple
        (satisfied, diagnostic message)
    """
    if spec.kind is not ProcessKind.CIR:
        raise ConfigurationError(_MODULE, f"Feller check applies to CIR factors, got {spec.kind.value}")
    lhs = 2.0 * spec.speed * spec.level
    rhs = spec.volatility ** 2
    satisfied = lhs >= rhs
    relation = ">=" if satisfied else "<"
    return satisfied, f"{spec.name}: 2*speed*level={lhs:.6g} {relation} volatility^2={rhs:.6g}"


def _semidefinite_square_root(matrix: np.ndarray) -> np.ndarray:
    """
    Lower-triangular factor of a singular PSD matrix.

    The eigen-decomposition with negative eigenvalues clipped gives a square
    root B; the QR factorisation of B.T turns it into the triangular R.T,
    so the leading factors keep the same shocks as in the definite case.
    """
    values, vectors = np.linalg.eigh(matrix)
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    (upper,) = linalg.qr(root.T, mode="r")
    lower = upper.T
    return lower * np.where(np.diag(lower) < 0.0, -1.0, 1.0)


@dataclass(frozen=True)
class CorrelationSpec:
    """Correlation matrix of the factor drivers, in ProcessSpec order."""

    matrix: Tuple[Tuple[float, ...], ...]
    factors: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ConfigurationError(_MODULE, "correlation matrix must be square")
        if not np.all(np.isfinite(m)):
            raise ConfigurationError(_MODULE, "correlation entries must be finite")
        if not np.allclose(m, m.T, atol=1e-12, rtol=0.0):
            raise ConfigurationError(_MODULE, "correlation matrix must be symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=1e-12, rtol=0.0):
            raise ConfigurationError(_MODULE, "correlation matrix must have a unit diagonal")
        if np.any(np.abs(m) > 1.0 + 1e-12):
            raise ConfigurationError(_MODULE, "correlations must lie in [-1, 1]")
        smallest = float(np.min(linalg.eigvalsh(m)))
        if smallest < _PSD_TOL:
            raise ConfigurationError(
                _MODULE, f"correlation matrix is not positive semidefinite (min eigenvalue {smallest:.3g})"
            )
        object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in m))
        if self.factors is not None:
            names = tuple(self.factors)
            if len(names) != m.shape[0]:
                raise ConfigurationError(_MODULE, "one factor name per correlation row is required")
            object.__setattr__(self, "factors", names)

    @classmethod
    def identity(cls, size: int, factors: Optional[Sequence[str]] = None) -> "CorrelationSpec":
        return cls(tuple(tuple(float(i == j) for j in range(size)) for i in range(size)),
                   None if factors is None else tuple(factors))

    @property
    def size(self) -> int:
        return len(self.matrix)

    def square_root(self) -> np.ndarray:
        """Lower-triangular L with L @ L.T equal to the matrix."""
        m = np.asarray(self.matrix)
        try:
            return linalg.cholesky(m, lower=True)
        except linalg.LinAlgError:
            logger.warning("correlation matrix is singular, using a semidefinite factorisation")
            return _semidefinite_square_root(m)


def _refine(node_times: Sequence[float], max_step: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Simulation times with sub-steps no longer than ``max_step``, and where each node sits."""
    times = [node_times[0]]
    stored = [0]
    for a, b in zip(node_times[:-1], node_times[1:]):
        pieces = 1
        if max_step is not None:
            pieces = max(1, int(math.ceil((b - a) / max_step - 1e-9)))
        for k in range(1, pieces):
            times.append(a + (b - a) * k / pieces)
        times.append(b)
        stored.append(len(times) - 1)
    return np.asarray(times), np.asarray(stored)


def _initial_state(spec: ProcessSpec, n: int) -> np.ndarray:
    if spec.kind is ProcessKind.CIR:
        return np.full(n, spec.initial)
    return np.full(n, math.log(spec.initial))


def _observe(spec: ProcessSpec, state: np.ndarray) -> np.ndarray:
    if spec.kind is ProcessKind.CIR:
        return np.maximum(state, 0.0)
    return np.exp(state)


def _gbm_step(spec: ProcessSpec, state: np.ndarray, dt: float, shock: np.ndarray) -> np.ndarray:
    # log-Euler of plain GBM; a modified-GBM drift would replace this function
    return state + (spec.drift - 0.5 * spec.volatility ** 2) * dt + spec.volatility * math.sqrt(dt) * shock


def _advance(spec: ProcessSpec, state: np.ndarray, dt: float, shock: np.ndarray) -> np.ndarray:
    """
    One step of the auxiliary state (CIR: untruncated, GBM/BK: log value).

    CIR and BK drifts use the exact mean-reversion flow
    level + (x - level) * exp(-speed * dt) instead of the Euler drift
    speed * (level - x) * dt; the diffusion is the full-truncation Euler
    term on max(x, 0). Both agree to first order in dt, and with zero
    volatility the flow reproduces the ODE at any step size.
    """
    decay = math.exp(-spec.speed * dt)
    if spec.kind is ProcessKind.CIR:
        positive = np.maximum(state, 0.0)
        return (spec.level + (positive - spec.level) * decay
                + spec.volatility * np.sqrt(positive * dt) * shock)
    if spec.kind is ProcessKind.BK:
        log_level = math.log(spec.level)
        return log_level + (state - log_level) * decay + spec.volatility * math.sqrt(dt) * shock
    return _gbm_step(spec, state, dt, shock)


def _simulate_chunk(specs: Sequence[ProcessSpec], lower: np.ndarray, sim_times: np.ndarray,
                    stored: np.ndarray, seed: int, start: int, stop: int) -> np.ndarray:
    n = stop - start
    steps = np.diff(sim_times)
    n_factors = len(specs)
    draws = np.stack([path_generator(seed, p).standard_normal((len(steps), n_factors))
                      for p in range(start, stop)])
    shocks = draws @ lower.T

    out = np.empty((n, len(stored), n_factors))
    state = np.column_stack([_initial_state(spec, n) for spec in specs])
    store_at = {int(s): i for i, s in enumerate(stored)}
    for f, spec in enumerate(specs):
        out[:, 0, f] = _observe(spec, state[:, f])
    for k, dt in enumerate(steps):
        for f, spec in enumerate(specs):
            state[:, f] = _advance(spec, state[:, f], float(dt), shocks[:, k, f])
        slot = store_at.get(k + 1)
        if slot is not None:
            for f, spec in enumerate(specs):
                out[:, slot, f] = _observe(spec, state[:, f])
    return out


class ScenarioCube:
    """
    Immutable simulated paths, values[path, node, factor] on grid.node_times.

    Bucket slices are read with ``bucket_values``; shadow-node slices with
    ``shadow_values``.
    """

    def __init__(self, values: np.ndarray, grid: TimeBucketGrid,
                 specs: Sequence[ProcessSpec], seed: int):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[1] != len(grid.node_times) or values.shape[2] != len(specs):
            raise ConfigurationError(_MODULE, f"cube shape {values.shape} does not match grid and factors")
        if values.shape[0] < 1:
            raise ConfigurationError(_MODULE, "a cube needs at least one path")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError(_MODULE, "cube values must be finite")
        values.setflags(write=False)
        self.values = values
        self.grid = grid
        self.specs = tuple(specs)
        self.seed = seed
        self._index = {spec.name: i for i, spec in enumerate(self.specs)}
        self._cumulative: Dict[str, np.ndarray] = {}

    @property
    def path_count(self) -> int:
        return self.values.shape[0]

    @property
    def node_times(self) -> np.ndarray:
        return np.asarray(self.grid.node_times)

    @property
    def factor_names(self) -> Tuple[str, ...]:
        return tuple(spec.name for spec in self.specs)

    def has_factor(self, name: str) -> bool:
        return name in self._index

    def spec(self, name: str) -> ProcessSpec:
        return self.specs[self._factor_index(name)]

    def _factor_index(self, name: str) -> int:
        if name not in self._index:
            raise ConfigurationError(_MODULE, f"unknown factor '{name}'")
        return self._index[name]

    def factor_for_role(self, role: Union[FactorRole, str]) -> Optional[str]:
        """Name of the first factor with ``role``, or None."""
        role = FactorRole(role)
        for spec in self.specs:
            if spec.role is role:
                return spec.name
        return None

    def factor(self, name: str) -> np.ndarray:
        """(paths, nodes) values of one factor."""
        return self.values[:, :, self._factor_index(name)]

    def bucket_values(self, name: str) -> np.ndarray:
        return self.factor(name)[:, list(self.grid.bucket_nodes)]

    def shadow_values(self, name: str) -> np.ndarray:
        return self.factor(name)[:, list(self.grid.shadow_nodes)]

    def cumulative_integral(self, name: str) -> np.ndarray:
        """Per-path trapezoid integral of a factor from 0 to every node."""
        if name not in self._cumulative:
            self._cumulative[name] = cumulative_trapezoid(
                self.factor(name), x=self.node_times, axis=1, initial=0.0
            )
        return self._cumulative[name]

    def integral(self, name: str, t: float, s: float) -> np.ndarray:
        """Per-path integral of a factor over [t, s]; both ends must be nodes."""
        if s < t:
            raise ConfigurationError(_MODULE, f"reversed interval [{t}, {s}]")
        cumulative = self.cumulative_integral(name)
        return cumulative[:, self.grid.node_index(s)] - cumulative[:, self.grid.node_index(t)]

    def dump(self, path: Union[str, Path]) -> Path:
        """
        Write a flat binary debug file: one JSON header line (counts, factor
        names, grid, specs, seed) followed by little-endian float64 values
        in path-major order.
        """
        path = Path(path)
        header = {
            "paths": self.path_count,
            "nodes": len(self.grid.node_times),
            "factors": len(self.specs),
            "factor_names": list(self.factor_names),
            "bucket_times": list(self.grid.bucket_times),
            "margin_period": self.grid.margin_period,
            "seed": self.seed,
            "specs": [{**asdict(spec), "kind": spec.kind.value, "role": spec.role.value}
                      for spec in self.specs],
        }
        with open(path, "wb") as handle:
            handle.write(json.dumps(header).encode("utf-8") + b"\n")
            handle.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioCube":
        with open(path, "rb") as handle:
            header = json.loads(handle.readline().decode("utf-8"))
            body = handle.read()
        values = np.frombuffer(body, dtype="<f8").reshape(
            header["paths"], header["nodes"], header["factors"]
        ).copy()
        grid = TimeBucketGrid(tuple(header["bucket_times"]), header["margin_period"])
        specs = [ProcessSpec(**spec) for spec in header["specs"]]
        return cls(values, grid, specs, header["seed"])


def simulate(specs: Sequence[ProcessSpec], corr: CorrelationSpec, grid: TimeBucketGrid,
             paths: int, seed: int, n_jobs: int = 1, chunk_size: int = 2048,
             max_step: Optional[float] = None) -> ScenarioCube:
    """
    Simulate correlated factor paths on a bucket grid.

    Parameters:
    -----------
    specs : sequence of ProcessSpec
        Factors, in the order of the correlation matrix rows
    corr : CorrelationSpec
        Driver correlation (positive semidefinite)
    grid : TimeBucketGrid
        Buckets and collateral shadow nodes to store
    paths : int
        Number of paths, at least 1
    seed : int
        Run seed; path p draws from the substream (seed, p)
    n_jobs : int, default=1
        joblib workers; the cube does not depend on this value
    chunk_size : int, default=2048
        Paths per joblib task
    max_step : float, optional
        Longest simulation step; stored nodes are sub-stepped to respect it

    Returns:
    --------
    ScenarioCube
        Values on every grid node, path-major
    """
    seed = check_seed(seed)
    if paths < 1:
        raise ConfigurationError(_MODULE, f"paths must be at least 1, got {paths}", field="paths")
    if not specs:
        raise ConfigurationError(_MODULE, "at least one factor is required")
    names = [spec.name for spec in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError(_MODULE, f"factor names must be unique, got {names}")
    if corr.size != len(specs):
        raise ConfigurationError(_MODULE, f"correlation is {corr.size}x{corr.size} for {len(specs)} factors")
    if corr.factors is not None and tuple(corr.factors) != tuple(names):
        raise ConfigurationError(_MODULE, f"correlation factors {corr.factors} do not match {tuple(names)}")
    if max_step is not None and max_step <= 0:
        raise ConfigurationError(_MODULE, "max_step must be positive", field="max_step")

    for spec in specs:
        if spec.kind is ProcessKind.CIR:
            satisfied, message = feller_check(spec)
            if not satisfied:
                logger.warning("Feller condition violated, %s", message)

    lower = corr.square_root()
    sim_times, stored = _refine(grid.node_times, max_step)
    bounds = [(start, min(start + chunk_size, paths)) for start in range(0, paths, chunk_size)]
    logger.debug("simulating %d paths x %d steps x %d factors in %d chunks",
                 paths, len(sim_times) - 1, len(specs), len(bounds))

    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_simulate_chunk)(tuple(specs), lower, sim_times, stored, seed, start, stop)
        for start, stop in bounds
    )
    return ScenarioCube(np.concatenate(chunks, axis=0), grid, specs, seed)


def interpolate_curve_between_buckets(cube: ScenarioCube, path: Optional[int], t: float,
                                      factor: Optional[str] = None) -> ArrayLike:
    """
    Factor snapshot at ``t``, linear in time between stored nodes.

    Parameters:
    -----------
    cube : ScenarioCube
        Simulated paths
    path : int or None
        Path index; None returns every path
    t : float
        Time within the grid
    factor : str, optional
        Single factor name; all factors when omitted

    Returns:
    --------
    float or ndarray
        Exact node values when ``t`` is a node
    """
    times = cube.node_times
    if t < -_TIME_TOL or t > times[-1] + _TIME_TOL:
        raise HorizonExceededError(_MODULE, f"time {t} outside the simulated grid [0, {times[-1]}]")
    values = cube.values if path is None else cube.values[path:path + 1]
    if factor is not None:
        values = values[:, :, cube._factor_index(factor)][:, :, None]

    i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1))
    if i == len(times) - 1 or abs(t - times[i]) <= _TIME_TOL:
        snapshot = values[:, i, :]
    else:
        weight = (t - times[i]) / (times[i + 1] - times[i])
        snapshot = values[:, i, :] + weight * (values[:, i + 1, :] - values[:, i, :])

    if factor is not None:
        snapshot = snapshot[:, 0]
    if path is not None:
        snapshot = snapshot[0]
    return float(snapshot) if np.ndim(snapshot) == 0 else snapshot


def expected_survival_probability(cube: ScenarioCube, hazard_factor: str, t: float, s: float) -> float:
    """Path average of exp(-int_t^s h) along the simulated hazard."""
    survival = np.exp(-cube.integral(hazard_factor, t, s))
    return math.fsum(survival) / cube.path_count


def zero_coupon_bond(spec: ProcessSpec, short_rate: ArrayLike, tau: ArrayLike) -> ArrayLike:
    """
    CIR affine zero-coupon price A(tau) exp(-B(tau) r) for maturity ``tau``
    ahead of the observation time.
    """
    if spec.kind is not ProcessKind.CIR:
        raise ConfigurationError(_MODULE, f"affine bond prices need a CIR factor, got {spec.kind.value}")
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(short_rate, dtype=float)
    kappa, theta, sigma = spec.speed, spec.level, spec.volatility
    if sigma == 0.0:
        if kappa == 0.0:
            B = tau
        else:
            B = -np.expm1(-kappa * tau) / kappa
        log_A = -theta * (tau - B)
    else:
        gamma = math.sqrt(kappa ** 2 + 2.0 * sigma ** 2)
        growth = np.expm1(gamma * tau)
        denominator = (gamma + kappa) * growth + 2.0 * gamma
        B = 2.0 * growth / denominator
        log_A = (2.0 * kappa * theta / sigma ** 2) * (
            math.log(2.0 * gamma) + 0.5 * (kappa + gamma) * tau - np.log(denominator)
        )
    price = np.exp(log_A - B * r)
    return float(price) if np.ndim(price) == 0 else price
