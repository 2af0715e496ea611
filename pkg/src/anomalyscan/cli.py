"""Command-line front end.

Subcommands ``backtest``, ``scan``, ``regress``, ``regimes`` and ``synth``
read a YAML (or JSON) config file given by ``--config``; command-line flags
override its values. The resolved config is echoed to ``<out>/config.yaml``
and every output file starts with ``# anomalyscan <version> config=<sha256>``.

Exit codes: 0 success, 1 invalid input or usage, 2 computation failure.
"""
import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .econometrics import fit_capm, fit_fftm, fit_fftm_dummy, nw_mean_test
from .exceptions import (
    AnomalyScanError,
    ConfigError,
    DataValidationError,
    DegenerateInputError,
    DegenerateRegimeError,
    EmptyBucketError,
    EmptyIntersectionError,
    RankDeficiencyError,
)
from .panel import (
    IngestConfig,
    MonthKey,
    load_daily_bars,
    load_factors,
    load_monthly_panel,
    write_daily_bars,
    write_factors,
    write_monthly_panel,
)
from .portfolio import StrategySpec, strategy_series
from .regimes import (
    amihud_illiquidity,
    macro_uncertainty,
    market_state,
    split_performance,
    volatility_regime,
)
from .scan import DEFAULT_HORIZONS, ScanConfig, emit_grid, emit_values, format_number, run_scan
from .synth import SynthSpec, gen_daily_bars, gen_sample

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 1, 2
COMMANDS = ("backtest", "scan", "regress", "regimes", "synth")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on. ``out`` is excluded from the config hash."""

    returns: Optional[str] = None
    factors: Optional[str] = None
    daily: Optional[str] = None
    j: tuple = DEFAULT_HORIZONS
    k: tuple = DEFAULT_HORIZONS
    grid: Optional[tuple] = None
    skip: int = 1
    side: str = "CSCON"
    decile_count: int = 10
    window: int = 60
    step: int = 12
    critical_value: float = 1.96
    lag: Optional[int] = None
    lookback: int = 36
    min_days: int = 10
    min_valid_obs: int = 1
    seed: int = 0
    n_stocks: int = 100
    n_months: int = 240
    start: str = "2000-01"
    synth_regimes: tuple = ()
    reversal_decay: float = 0.9
    noise: float = 0.08
    with_daily: bool = False
    raw: bool = False
    out: str = field(default="out", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "j", tuple(int(v) for v in self.j))
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple((int(a), int(b)) for a, b in self.grid))
        object.__setattr__(self, "synth_regimes",
                           tuple((int(a), int(b), float(r)) for a, b, r in self.synth_regimes))

    @property
    def cells(self) -> tuple:
        if self.grid is not None:
            return self.grid
        return tuple((j, k) for j in self.j for k in self.k)

    def strategy(self, j, k) -> StrategySpec:
        return StrategySpec(j, k, self.skip, self.side, self.decile_count)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        for key in ("j", "k", "grid", "synth_regimes"):
            if d[key] is not None:
                d[key] = [list(v) if isinstance(v, tuple) else v for v in d[key]]
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def header_line(self) -> str:
        return f"# anomalyscan {__version__} config={self.digest()}"


CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: cannot parse config: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return data


def resolve_config(args) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag
    if getattr(args, "j", None) is not None or getattr(args, "k", None) is not None:
        values.pop("grid", None)
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anomalyscan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anomalyscan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--raw", action="store_true", help="full-precision numbers")
        p.add_argument("--seed", type=int)
        if name != "synth":
            p.add_argument("--returns", help="monthly returns CSV")
            p.add_argument("--factors", help="factors CSV")
            p.add_argument("--daily", help="daily bars CSV")
            p.add_argument("--j", type=_int_list, help="estimation horizons, e.g. 1,6,12")
            p.add_argument("--k", type=_int_list, help="holding horizons")
            p.add_argument("--skip", type=int)
            p.add_argument("--window", type=int)
            p.add_argument("--step", type=int)
            p.add_argument("--lag", type=int)
        else:
            p.add_argument("--n-stocks", dest="n_stocks", type=int)
            p.add_argument("--n-months", dest="n_months", type=int)
            p.add_argument("--with-daily", dest="with_daily", action="store_true")
    return parser


# output helpers

def _writer(path, header_line):
    fh = open(path, "w", newline="", encoding="utf-8")
    fh.write(header_line + "\n")
    return fh, csv.writer(fh, lineterminator="\n")


def _need(path, what):
    if not path:
        raise ConfigError(f"{what} input is required (flag --{what} or config key '{what}')")
    return path


def _load_panel(cfg):
    return load_monthly_panel(_need(cfg.returns, "returns"), IngestConfig(cfg.min_valid_obs))


def _mean_row(series, cfg):
    n = len(series)
    try:
        res = nw_mean_test(series.returns, cfg.lag)
        return res.mean, res.hac_t, res.stars, n
    except DegenerateInputError:
        mean = float(np.mean(series.returns)) if n else float("nan")
        return mean, float("nan"), "", n


def cmd_backtest(cfg: RunConfig) -> int:
    panel = _load_panel(cfg)
    fmt = lambda x: format_number(x, cfg.raw)  # noqa: E731
    head = cfg.header_line()
    fh_s, w_s = _writer(os.path.join(cfg.out, "strategy_returns.csv"), head)
    fh_r, w_r = _writer(os.path.join(cfg.out, "raw_returns.csv"), head)
    with fh_s, fh_r:
        w_s.writerow(["j", "k", "skip", "side", "formation_year", "formation_month", "bh_return"])
        w_r.writerow(["j", "k", "mean", "t", "stars", "n"])
        for j, k in cfg.cells:
            series = strategy_series(panel, cfg.strategy(j, k))
            for month, value in series.observations:
                w_s.writerow([j, k, cfg.skip, cfg.side, month.year, month.month, fmt(value)])
            mean, t, star, n = _mean_row(series, cfg)
            w_r.writerow([j, k, fmt(mean), fmt(t), star, n])
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    panel = _load_panel(cfg)
    config = ScanConfig(window=cfg.window, step=cfg.step, grid=cfg.cells, skip=cfg.skip,
                        side=cfg.side, decile_count=cfg.decile_count,
                        critical_value=cfg.critical_value, lag=cfg.lag)
    grid = run_scan(panel, config)
    head = cfg.header_line()
    emit_grid(grid, os.path.join(cfg.out, "scan_grid.csv"), head)
    emit_values(grid, os.path.join(cfg.out, "scan_values.csv"), head, raw=cfg.raw)
    return EXIT_OK


def build_regimes(cfg: RunConfig, factors=None, bars=None) -> list:
    """Every regime series the available inputs support, in a fixed order."""
    out = []
    if factors is not None and factors.index_return is not None:
        out.append(market_state(factors.index_return, factors.months, cfg.lookback))
        out.append(volatility_regime(factors.index_return, factors.months))
    if bars is not None:
        out.append(amihud_illiquidity(bars, cfg.min_days))
    if factors is not None and factors.macro_index is not None:
        out.append(macro_uncertainty(factors.macro_index, factors.months))
    return out


def _optional_inputs(cfg):
    factors = load_factors(cfg.factors) if cfg.factors else None
    bars = load_daily_bars(cfg.daily) if cfg.daily else None
    return factors, bars


NA = "NA"
MODEL_NAMES = {"CAPM": ("alpha", "MKT"), "FFTM": ("alpha", "MKT", "SMB", "HML"),
               "FFTM+D": ("alpha", "MKT", "SMB", "HML", "D")}


def cmd_regress(cfg: RunConfig) -> int:
    panel = _load_panel(cfg)
    factors = load_factors(_need(cfg.factors, "factors"))
    bars = load_daily_bars(cfg.daily) if cfg.daily else None
    regimes = build_regimes(cfg, factors, bars)
    fmt = lambda x: format_number(x, cfg.raw)  # noqa: E731
    fh, w = _writer(os.path.join(cfg.out, "regressions.csv"), cfg.header_line())
    with fh:
        w.writerow(["j", "k", "model", "dummy", "coef_name", "estimate", "hac_se", "t",
                    "stars", "n", "lag"])
        for j, k in cfg.cells:
            series = strategy_series(panel, cfg.strategy(j, k))
            models = [
                ("CAPM", "", MODEL_NAMES["CAPM"], lambda: fit_capm(series, factors, cfg.lag)),
                ("FFTM", "", MODEL_NAMES["FFTM"], lambda: fit_fftm(series, factors, cfg.lag)),
            ]
            for regime in regimes:
                models.append(("FFTM+D", regime.condition, MODEL_NAMES["FFTM+D"],
                               lambda r=regime: fit_fftm_dummy(series, factors, r, cfg.lag)))
            for model, dummy, names, fit in models:
                try:
                    res = fit()
                except (DegenerateInputError, RankDeficiencyError) as exc:
                    logger.warning("CON(%d,%d) %s%s unavailable: %s", j, k, model,
                                   f" {dummy}" if dummy else "", exc)
                    for name in names:
                        w.writerow([j, k, model, dummy, name, NA, NA, NA, "", NA, NA])
                    continue
                for name, b, se, t, star in res.rows():
                    w.writerow([j, k, model, dummy, name, fmt(b), fmt(se), fmt(t), star,
                                res.n_obs, res.lag])
    return EXIT_OK


def cmd_regimes(cfg: RunConfig) -> int:
    factors, bars = _optional_inputs(cfg)
    regimes = build_regimes(cfg, factors, bars)
    if not regimes:
        raise ConfigError("regimes needs factors with index_logret/macro_index, or daily bars")
    fmt = lambda x: format_number(x, cfg.raw)  # noqa: E731
    head = cfg.header_line()
    fh, w = _writer(os.path.join(cfg.out, "regimes.csv"), head)
    with fh:
        w.writerow(["condition", "year", "month", "raw_value", "dummy"])
        for r in regimes:
            for m, v, d in zip(r.months, r.raw_value, r.dummy):
                w.writerow([r.condition, m.year, m.month, fmt(v), int(d)])

    fitted = [r for r in regimes if r.model is not None]
    if fitted:
        fh, w = _writer(os.path.join(cfg.out, "garch_fit.csv"), head)
        with fh:
            w.writerow(["model", "parameter", "estimate", "std_error"])
            for r in fitted:
                fit = r.model
                label = "AR1-GJR-GARCH" if fit.spec.asymmetric else "AR1-GARCH"
                label = f"{label}:{r.condition}"
                for name in fit.spec.param_names:
                    w.writerow([label, name, fmt(getattr(fit, name)), fmt(fit.std_errors[name])])
                w.writerow([label, "loglik", fmt(fit.loglik), NA])
                w.writerow([label, "converged", int(fit.converged), NA])
        for r in fitted:
            name = "cond_variance.csv" if r.condition == "Volatility" else "cond_variance_macro.csv"
            fh, w = _writer(os.path.join(cfg.out, name), head)
            with fh:
                w.writerow(["year", "month", "sigma2"])
                for m, v in zip(r.months, r.raw_value):
                    w.writerow([m.year, m.month, fmt(v)])

    if cfg.returns:
        panel = _load_panel(cfg)
        fh, w = _writer(os.path.join(cfg.out, "regime_splits.csv"), head)
        with fh:
            w.writerow(["j", "k", "raw_mean", "raw_t", "high_mean", "high_t", "low_mean",
                        "low_t", "condition"])
            for j, k in cfg.cells:
                series = strategy_series(panel, cfg.strategy(j, k))
                raw_mean, raw_t, _, _ = _mean_row(series, cfg)
                for r in regimes:
                    try:
                        high, low = split_performance(series, r, cfg.lag)
                        cells = [high.mean, high.hac_t, low.mean, low.hac_t]
                    except (EmptyBucketError, DegenerateRegimeError, DegenerateInputError) as exc:
                        logger.warning("CON(%d,%d) %s split unavailable: %s", j, k, r.condition, exc)
                        cells = [float("nan")] * 4
                    w.writerow([j, k, fmt(raw_mean), fmt(raw_t), *map(fmt, cells), r.condition])
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    try:
        start = MonthKey.parse(cfg.start)
    except ValueError as exc:
        raise ConfigError(f"bad start month {cfg.start!r}: {exc}") from None
    spec = SynthSpec(seed=cfg.seed, n_stocks=cfg.n_stocks, n_months=cfg.n_months,
                     regimes=tuple(((a, b), rho) for a, b, rho in cfg.synth_regimes),
                     reversal_decay=cfg.reversal_decay, noise=cfg.noise, start=start)
    sample = gen_sample(spec)
    head = cfg.header_line()
    write_monthly_panel(sample.panel, os.path.join(cfg.out, "returns.csv"), head)
    write_factors(sample.factors, os.path.join(cfg.out, "factors.csv"), head)
    if cfg.with_daily:
        bars = gen_daily_bars(sample.panel.stocks, sample.panel.months, seed=cfg.seed + 1)
        write_daily_bars(bars, os.path.join(cfg.out, "daily.csv"), head)
    return EXIT_OK


HANDLERS = {"backtest": cmd_backtest, "scan": cmd_scan, "regress": cmd_regress,
            "regimes": cmd_regimes, "synth": cmd_synth}


def _echo_config(cfg: RunConfig) -> None:
    with open(os.path.join(cfg.out, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(cfg.header_line() + "\n")
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True, default_flow_style=None)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        _echo_config(cfg)
        return HANDLERS[args.command](cfg)
    except (DataValidationError, ConfigError, EmptyIntersectionError, OSError) as exc:
        print(f"anomalyscan: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (AnomalyScanError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"anomalyscan: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
