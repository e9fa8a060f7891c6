"""
Run configuration: YAML file -> RunConfig.

Every parse error is raised as ConfigurationError naming the dotted field
path (``portfolio.swaps[0].notional``); YAML syntax errors carry the line.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import yaml

from src.credit.default_model import RecoveryProfile
from src.credit.risky_discounting import CreditSide, ModelRegime, Timing
from src.curves.term_structures import CdsQuoteStrip, CurveKind, TermStructure, bootstrap_hazards
from src.errors import ConfigurationError
from src.portfolio.cashflow_engine import (
    EquitySwapSpec,
    FxForwardSpec,
    ScheduleTrade,
    SwapSpec,
    Swaplet,
    Trade,
)
from src.portfolio.collateral_engine import DEFAULT_MARGIN_PERIOD, MarginAgreement
from src.pricing.lattice_pricer import CashflowSchedule, CurveSet
from src.simulation.scenario_engine import CorrelationSpec, ProcessSpec, TimeBucketGrid
from src.xva.xva_engine import RegressionSpec
from utils.io import config_hash, read_config_text

_MODULE = "config"
PATHS_ENV = "XVA_PATHS"
SEED_ENV = "XVA_SEED"
_INFINITE = {"inf", "+inf", "infinity", ".inf"}


@dataclass(frozen=True)
class CollateralSweep:
    side: str
    thresholds: Tuple[float, ...]


@dataclass(frozen=True)
class WrongWaySweep:
    factor: str
    hazard_factor: str
    correlations: Tuple[float, ...]


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs."""

    label: str
    seed: int
    paths: int
    output_dir: str
    regime: ModelRegime
    curves: CurveSet
    recovery: RecoveryProfile
    rho: float = 0.0
    b_indexed_prefactor: bool = False
    pricing_dt: float = 1.0 / 365.0
    grid: Optional[TimeBucketGrid] = None
    max_step: Optional[float] = None
    factors: Tuple[ProcessSpec, ...] = ()
    correlation: Optional[CorrelationSpec] = None
    regression: RegressionSpec = field(default_factory=RegressionSpec)
    netting: bool = True
    schedules: Tuple[ScheduleTrade, ...] = ()
    trades: Tuple[Trade, ...] = ()
    margin: Optional[MarginAgreement] = None
    collateral_sweep: Optional[CollateralSweep] = None
    wrongway_sweep: Optional[WrongWaySweep] = None
    n_jobs: int = 1
    config_hash: str = ""


class _Reader:
    """Typed access to a nested mapping with dotted-path diagnostics."""

    def __init__(self, data: Any, path: str = ""):
        self.data = data
        self.path = path

    def _child_path(self, key) -> str:
        if isinstance(key, int):
            return f"{self.path}[{key}]"
        return f"{self.path}.{key}" if self.path else str(key)

    def fail(self, message: str, key=None) -> ConfigurationError:
        where = self.path if key is None else self._child_path(key)
        return ConfigurationError(_MODULE, message, field=where or "<root>")

    def mapping(self) -> Mapping:
        if not isinstance(self.data, Mapping):
            raise self.fail("expected a mapping")
        return self.data

    def has(self, key: str) -> bool:
        return key in self.mapping() and self.mapping()[key] is not None

    def child(self, key) -> "_Reader":
        if isinstance(key, int):
            return _Reader(self.data[key], self._child_path(key))
        if key not in self.mapping():
            raise self.fail("missing required field", key)
        return _Reader(self.mapping()[key], self._child_path(key))

    def optional(self, key: str) -> Optional["_Reader"]:
        return self.child(key) if self.has(key) else None

    def items(self) -> List["_Reader"]:
        if not isinstance(self.data, (list, tuple)):
            raise self.fail("expected a list")
        return [self.child(i) for i in range(len(self.data))]

    def number(self, key: str, default: Optional[float] = None, allow_inf: bool = False) -> float:
        if not self.has(key):
            if default is None:
                raise self.fail("missing required field", key)
            return default
        return self.child(key).as_number(allow_inf)

    def as_number(self, allow_inf: bool = False) -> float:
        value = self.data
        if isinstance(value, str) and value.strip().lower() in _INFINITE:
            value = math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(f"expected a number, got {value!r}")
        value = float(value)
        if math.isnan(value) or (math.isinf(value) and not allow_inf):
            raise self.fail(f"expected a finite number, got {value!r}")
        return value

    def integer(self, key: str, default: Optional[int] = None) -> int:
        if not self.has(key):
            if default is None:
                raise self.fail("missing required field", key)
            return default
        value = self.mapping()[key]
        if isinstance(value, str) and value.strip().lstrip("-").isdigit():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(f"expected an integer, got {value!r}", key)
        return value

    def boolean(self, key: str, default: bool) -> bool:
        if not self.has(key):
            return default
        value = self.mapping()[key]
        if not isinstance(value, bool):
            raise self.fail(f"expected true or false, got {value!r}", key)
        return value

    def string(self, key: str, default: Optional[str] = None) -> str:
        if not self.has(key):
            if default is None:
                raise self.fail("missing required field", key)
            return default
        value = self.mapping()[key]
        if not isinstance(value, str):
            raise self.fail(f"expected a string, got {value!r}", key)
        return value

    def numbers(self, key: str, allow_inf: bool = False) -> Tuple[float, ...]:
        return tuple(item.as_number(allow_inf) for item in self.child(key).items())

    def threshold(self, key: str) -> float:
        """Non-negative magnitude; null or inf disables."""
        if key not in self.mapping() or self.mapping()[key] is None:
            return math.inf
        return self.child(key).as_number(allow_inf=True)


def _wrap(reader: _Reader, build):
    """Attach the config field path to engine validation errors that lack one."""
    try:
        return build()
    except ConfigurationError as exc:
        if exc.field is None:
            raise ConfigurationError(exc.module, exc.detail, field=reader.path or "<root>") from exc
        raise


def _curve(reader: _Reader, kind: CurveKind, discount: Optional[TermStructure] = None) -> TermStructure:
    if reader.has("flat"):
        return _wrap(reader, lambda: TermStructure.flat(reader.number("flat"),
                                                        reader.number("horizon", 100.0), kind))
    if reader.has("cds"):
        if discount is None:
            raise reader.fail("CDS bootstrap needs curves.discount", "cds")
        cds = reader.child("cds")
        strip = _wrap(cds, lambda: CdsQuoteStrip(cds.numbers("maturities"), cds.numbers("spreads"),
                                                 cds.number("recovery")))
        curve = bootstrap_hazards(strip, discount)
        horizon = reader.number("horizon", 0.0)
        if horizon > curve.horizon:
            # flat extrapolation of the last segment
            curve = TermStructure(curve.node_times + (horizon,), curve.node_rates + (curve.node_rates[-1],),
                                  CurveKind.HAZARD)
        return curve
    return _wrap(reader, lambda: TermStructure(reader.numbers("times"), reader.numbers("rates"), kind))


def _curves(reader: _Reader) -> CurveSet:
    discount = _curve(reader.child("discount"), CurveKind.INTEREST)
    hazard_B = _curve(reader.child("hazard_B"), CurveKind.HAZARD, discount)
    hazard_A = None
    if reader.has("hazard_A"):
        hazard_A = _curve(reader.child("hazard_A"), CurveKind.HAZARD, discount)
    return CurveSet(discount, hazard_B, hazard_A)


def _recovery(reader: Optional[_Reader]) -> RecoveryProfile:
    if reader is None:
        return RecoveryProfile()
    defaults = RecoveryProfile()
    return _wrap(reader, lambda: RecoveryProfile(
        phi_A=reader.number("phi_A", defaults.phi_A),
        phi_B=reader.number("phi_B", defaults.phi_B),
        phibar_A=reader.number("phibar_A", defaults.phibar_A),
        phibar_B=reader.number("phibar_B", defaults.phibar_B),
        phi_AB=reader.number("phi_AB", defaults.phi_AB),
    ))


def _regime(reader: Optional[_Reader]) -> Tuple[ModelRegime, bool]:
    if reader is None:
        return ModelRegime(), False
    side = reader.string("credit_side", CreditSide.BILATERAL.value)
    timing = reader.string("timing", Timing.DTM.value)
    try:
        regime = ModelRegime(CreditSide(side), Timing(timing))
    except ValueError as exc:
        raise reader.fail(f"unknown regime ({exc})") from exc
    return regime, reader.boolean("b_indexed_prefactor", False)


def _grid(reader: Optional[_Reader], margin_period: float) -> Optional[TimeBucketGrid]:
    if reader is None:
        return None
    if reader.has("times"):
        return _wrap(reader, lambda: TimeBucketGrid(reader.numbers("times"), margin_period))
    if reader.has("tiers"):
        tiers = [(tier.child(0).as_number(), tier.child(1).as_number())
                 for tier in reader.child("tiers").items()]
        return _wrap(reader, lambda: TimeBucketGrid.tiered(tiers, margin_period))
    return _wrap(reader, lambda: TimeBucketGrid.regular(reader.number("horizon"), reader.number("step"),
                                                        margin_period))


def _factors(reader: Optional[_Reader]) -> Tuple[ProcessSpec, ...]:
    if reader is None:
        return ()
    specs = []
    for item in reader.items():
        def build(item=item):
            return ProcessSpec(
                kind=item.string("kind"),
                role=item.string("role"),
                initial=item.number("initial"),
                speed=item.number("speed", 0.0),
                level=item.number("level", 0.0),
                volatility=item.number("volatility", 0.0),
                drift=item.number("drift", 0.0),
                name=item.string("name", item.string("role")),
            )
        try:
            specs.append(_wrap(item, build))
        except ValueError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise item.fail(str(exc)) from exc
    return tuple(specs)


def _correlation(reader: Optional[_Reader], factors: Sequence[ProcessSpec]) -> Optional[CorrelationSpec]:
    if not factors:
        return None
    names = tuple(spec.name for spec in factors)
    if reader is None:
        return CorrelationSpec.identity(len(factors), names)
    rows = tuple(tuple(cell.as_number() for cell in row.items()) for row in reader.items())
    return _wrap(reader, lambda: CorrelationSpec(rows, names))


def _schedule(item: _Reader) -> ScheduleTrade:
    label = item.string("label", "schedule")
    if item.has("zero_coupon"):
        zc = item.child("zero_coupon")
        schedule = _wrap(zc, lambda: CashflowSchedule.zero_coupon(zc.number("maturity"),
                                                                  zc.number("principal", 1.0)))
    elif item.has("fixed_coupon_bond"):
        bond = item.child("fixed_coupon_bond")
        schedule = _wrap(bond, lambda: CashflowSchedule.fixed_coupon_bond(
            bond.number("maturity"), bond.number("coupon_rate"),
            bond.integer("frequency", 2), bond.number("principal", 1.0)))
    else:
        payments = tuple((p.child(0).as_number(), p.child(1).as_number())
                         for p in item.child("payments").items())
        schedule = _wrap(item, lambda: CashflowSchedule(payments))
    return ScheduleTrade(schedule, label)


def _swap(item: _Reader) -> SwapSpec:
    label = item.string("label", "swap")
    rate_factor = item.string("rate_factor", "rate")
    if item.has("swaplets"):
        swaplets = tuple(
            _wrap(s, lambda s=s: Swaplet(s.number("fixing"), s.number("start"), s.number("end"),
                                         s.number("payment"), s.number("accrual", 0.0) or None))
            for s in item.child("swaplets").items()
        )
        return _wrap(item, lambda: SwapSpec(item.number("notional"), item.number("fixed_rate"), swaplets,
                                            item.boolean("pay_fixed", True), rate_factor, label))
    return _wrap(item, lambda: SwapSpec.vanilla(
        item.number("notional"), item.number("fixed_rate"), item.number("maturity"),
        item.integer("frequency", 4), item.number("start", 0.0), item.boolean("pay_fixed", True),
        rate_factor, label))


def _equity_swap(item: _Reader) -> EquitySwapSpec:
    start = item.number("start", 0.0)
    if item.has("payment_times"):
        times = item.numbers("payment_times")
    else:
        maturity = item.number("maturity")
        frequency = item.integer("frequency", 4)
        if frequency < 1:
            raise item.fail("frequency must be at least 1", "frequency")
        periods = int(round((maturity - start) * frequency))
        if periods < 1 or abs(start + periods / frequency - maturity) > 1e-9:
            raise item.fail("tenor from start to maturity must be a whole number of periods", "maturity")
        times = tuple(start + (k + 1) / frequency for k in range(periods))
    return _wrap(item, lambda: EquitySwapSpec(
        item.number("notional"), item.number("fixed_rate"), times,
        item.string("equity_factor", "equity"), item.boolean("pays_equity", True),
        start, item.string("label", "equity_swap")))


def _fx_forward(item: _Reader) -> FxForwardSpec:
    return _wrap(item, lambda: FxForwardSpec(
        item.number("notional"), item.number("strike"), item.number("maturity"),
        item.string("fx_factor", "fx"), item.boolean("buy", True), item.string("label", "fx_forward")))


def _portfolio(reader: Optional[_Reader]) -> Tuple[bool, Tuple[ScheduleTrade, ...], Tuple[Trade, ...]]:
    if reader is None:
        return True, (), ()
    schedules = tuple(_schedule(i) for i in reader.child("schedules").items()) if reader.has("schedules") else ()
    trades: List[Trade] = list(schedules)
    for key, parse in (("swaps", _swap), ("equity_swaps", _equity_swap), ("fx_forwards", _fx_forward)):
        if reader.has(key):
            trades.extend(parse(item) for item in reader.child(key).items())
    return reader.boolean("netting", True), schedules, tuple(trades)


def _margin(reader: Optional[_Reader]) -> Optional[MarginAgreement]:
    if reader is None:
        return None
    days = reader.number("margin_period_days", 14.0)
    return _wrap(reader, lambda: MarginAgreement(
        threshold_B=reader.threshold("threshold_B"),
        threshold_A=reader.threshold("threshold_A"),
        minimum_transfer_B=reader.number("mta_B", 0.0),
        minimum_transfer_A=reader.number("mta_A", 0.0),
        margin_period=days / 365.0,
        collateral_factor=reader.string("collateral_factor", "collateral"),
    ))


def _sweeps(reader: Optional[_Reader]) -> Tuple[Optional[CollateralSweep], Optional[WrongWaySweep]]:
    if reader is None:
        return None, None
    collateral = None
    wrongway = None
    if reader.has("collateral"):
        c = reader.child("collateral")
        side = c.string("side", "B")
        if side not in ("A", "B"):
            raise c.fail("side must be A or B", "side")
        collateral = CollateralSweep(side, c.numbers("thresholds", allow_inf=True))
    if reader.has("wrongway"):
        w = reader.child("wrongway")
        wrongway = WrongWaySweep(w.string("factor", "equity"), w.string("hazard_factor", "hazard_B"),
                                 w.numbers("correlations"))
    return collateral, wrongway


def _override(flag: Optional[int], env_name: str, env: Mapping[str, str]) -> Optional[int]:
    if flag is not None:
        return flag
    raw = env.get(env_name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigurationError(_MODULE, f"{env_name}={raw!r} is not an integer", field=env_name) from exc


def parse_run_config(data: Any, text_hash: str = "", paths: Optional[int] = None,
                     seed: Optional[int] = None, env: Optional[Mapping[str, str]] = None,
                     output_dir: Optional[str] = None) -> RunConfig:
    """
    Build a RunConfig from a parsed YAML mapping.

    Overrides apply in order: arguments, then XVA_PATHS / XVA_SEED from
    ``env``, then the file.
    """
    env = os.environ if env is None else env
    root = _Reader(data if data is not None else {})
    root.mapping()

    seed = _override(seed, SEED_ENV, env)
    if seed is None:
        if not root.has("seed"):
            raise root.fail("a seed is required (set it in the file, --seed or XVA_SEED)", "seed")
        seed = root.integer("seed")
    if seed < 0:
        raise ConfigurationError(_MODULE, "seed must be non-negative", field="seed")
    paths = _override(paths, PATHS_ENV, env)
    if paths is None:
        paths = root.integer("paths", 1000)
    if paths < 1:
        raise ConfigurationError(_MODULE, "paths must be at least 1", field="paths")

    margin = _margin(root.optional("margin"))
    margin_period = margin.margin_period if margin is not None else 0.0
    regime, b_indexed_prefactor = _regime(root.optional("regime"))
    grid_reader = root.optional("grid")
    factors = _factors(root.optional("factors"))
    netting, schedules, trades = _portfolio(root.optional("portfolio"))
    collateral_sweep, wrongway_sweep = _sweeps(root.optional("tables"))
    if margin is None and collateral_sweep is not None:
        margin_period = DEFAULT_MARGIN_PERIOD

    rho = root.number("rho", 0.0)
    if not -1.0 <= rho <= 1.0:
        raise ConfigurationError(_MODULE, "rho must lie in [-1, 1]", field="rho")

    names = {spec.name for spec in factors}
    for trade in trades:
        for attr in ("equity_factor", "fx_factor"):
            name = getattr(trade, attr, None)
            if name is not None and name not in names:
                raise ConfigurationError(_MODULE, f"trade '{trade.label}' references unknown factor '{name}'",
                                         field="portfolio")
    if wrongway_sweep is not None:
        for name in (wrongway_sweep.factor, wrongway_sweep.hazard_factor):
            if name not in names:
                raise ConfigurationError(_MODULE, f"unknown factor '{name}'", field="tables.wrongway")

    regression = RegressionSpec()
    reg = root.optional("regression")
    if reg is not None:
        reg_factors = tuple(f.data for f in reg.child("factors").items()) if reg.has("factors") else None
        if reg_factors is not None:
            for name in reg_factors:
                if name not in names:
                    raise ConfigurationError(_MODULE, f"unknown factor '{name}'", field="regression.factors")
        regression = _wrap(reg, lambda: RegressionSpec(reg.integer("degree", 2), reg_factors,
                                                       reg.number("ridge", 1e-8)))

    pricing_dt = 1.0 / 365.0
    max_step = None
    if grid_reader is not None:
        pricing_dt = grid_reader.number("pricing_dt", pricing_dt)
        if grid_reader.has("max_step"):
            max_step = grid_reader.number("max_step")
    buckets = grid_reader.optional("buckets") if grid_reader is not None else None

    return RunConfig(
        label=root.string("label", "run"),
        seed=seed,
        paths=paths,
        output_dir=output_dir or root.string("output_dir", "results"),
        regime=regime,
        curves=_curves(root.child("curves")),
        recovery=_recovery(root.optional("recovery")),
        rho=rho,
        b_indexed_prefactor=b_indexed_prefactor,
        pricing_dt=pricing_dt,
        grid=_grid(buckets, margin_period),
        max_step=max_step,
        factors=factors,
        correlation=_correlation(root.optional("correlation"), factors),
        regression=regression,
        netting=netting,
        schedules=schedules,
        trades=trades,
        margin=margin,
        collateral_sweep=collateral_sweep,
        wrongway_sweep=wrongway_sweep,
        n_jobs=root.integer("n_jobs", 1),
        config_hash=text_hash,
    )


def load_run_config(filepath: str, paths: Optional[int] = None, seed: Optional[int] = None,
                    env: Optional[Mapping[str, str]] = None,
                    output_dir: Optional[str] = None) -> RunConfig:
    """
    Read and validate a YAML run configuration.

    Parameters:
    -----------
    filepath : str
        Path to the YAML file
    paths, seed : int, optional
        Command-line overrides
    env : mapping, optional
        Environment for XVA_PATHS / XVA_SEED (defaults to os.environ)
    output_dir : str, optional
        Command-line output directory

    Returns:
    --------
    RunConfig
        Validated configuration carrying the hash of the file text

    Raises:
    -------
    ConfigurationError
        With the YAML line or the dotted field path of the problem
    """
    text = read_config_text(filepath)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigurationError(_MODULE, f"invalid YAML: {problem}", line=line) from exc
    return parse_run_config(data, config_hash(text), paths, seed, env, output_dir)
