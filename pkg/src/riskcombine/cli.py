"""Command-line entry point: ``riskcombine {pool,combine,evaluate,synth,describe}``.

Settings come from an INI file (``--config``) with sections ``paths``,
``run``, ``pool``, ``combine``, ``evaluate`` and ``synth``; command-line flags
override it. Exit codes: 0 success, 2 configuration, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backtest import (DYNAMIC_SELECTION, BacktestConfig, ForecastPath, evaluate, format_tables,
                       hs_benchmark, load_path, run_backtest, save_path, write_summary)
from .backtest.evaluate import write_failures
from .combine import COMBINER_NAMES, GRAND_AVERAGE, make_combiner
from .combine.interval import GridRangeError
from .core import DataError, _fmt, describe, load_pool, load_returns, save_pool, save_returns
from .pool import DgpConfig, FitError, FitOptions, MethodError, parse_method_id, standard_specs
from .pool import generate_pool, synth_pool
from .score import VARIANTS, ScoreSpec

log = logging.getLogger("riskcombine")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _list(text: str) -> list:
    return [t for t in (x.strip() for x in text.replace("\n", ",").split(",")) if t]


@dataclass
class RunConfig:
    returns: Path | None = None
    pool: Path | None = None
    output: Path = Path("out")
    alpha: float = 0.025
    est_window: int = 1800
    eval_span: int | None = None
    methods: list = field(default_factory=lambda: ["all"])
    pool_refit_every: int = 1
    combiners: list = field(default_factory=lambda: list(COMBINER_NAMES))
    scores: list = field(default_factory=lambda: list(VARIANTS))
    benchmark: str = "HS-250"
    mcs_confidence: float = 0.75
    seed: int = 0
    threads: int = 1
    refit_stride: int = 1
    strict_appendix_b: bool = False
    synth: dict = field(default_factory=dict)


def read_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    ini = configparser.ConfigParser()
    try:
        ini.read(path)
        p = ini["paths"] if "paths" in ini else {}
        for key in ("returns", "pool", "output"):
            if key in p:
                setattr(cfg, key, Path(p[key]))
        run = ini["run"] if "run" in ini else None
        if run is not None:
            cfg.alpha = run.getfloat("alpha", cfg.alpha)
            cfg.est_window = run.getint("est_window", cfg.est_window)
            if "eval_span" in run:
                cfg.eval_span = run.getint("eval_span")
            cfg.seed = run.getint("seed", cfg.seed)
            cfg.threads = run.getint("threads", cfg.threads)
            cfg.refit_stride = run.getint("refit_stride", cfg.refit_stride)
            cfg.strict_appendix_b = run.getboolean("strict_appendix_b", cfg.strict_appendix_b)
        if "pool" in ini:
            cfg.methods = _list(ini["pool"].get("methods", "all"))
            cfg.pool_refit_every = ini["pool"].getint("refit_every", cfg.pool_refit_every)
        if "combine" in ini:
            cfg.combiners = _list(ini["combine"].get("combiners", ",".join(COMBINER_NAMES)))
        if "evaluate" in ini:
            ev = ini["evaluate"]
            cfg.scores = _list(ev.get("scores", ",".join(VARIANTS)))
            cfg.benchmark = ev.get("benchmark", cfg.benchmark)
            cfg.mcs_confidence = ev.getfloat("mcs_confidence", cfg.mcs_confidence)
        if "synth" in ini:
            cfg.synth = dict(ini["synth"])
    except (configparser.Error, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    for key in ("seed", "threads", "alpha"):
        if getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    if args.strict_appendix_b:
        cfg.strict_appendix_b = True
    for key in ("returns", "pool", "output"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, Path(val))
    for key in ("est_window", "eval_span", "refit_stride"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "methods", None):
        cfg.methods = _list(args.methods)
    if getattr(args, "combiners", None):
        cfg.combiners = _list(args.combiners)
    if not 0 < cfg.alpha < 0.5:
        raise ConfigError(f"alpha must lie in (0, 0.5), got {cfg.alpha}")
    if cfg.threads < 1:
        raise ConfigError("threads must be positive")
    unknown = [c for c in cfg.combiners if c not in COMBINER_NAMES]
    if unknown:
        raise ConfigError(f"unknown combiners: {', '.join(unknown)}")
    bad = [s for s in cfg.scores if s not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown score variants: {', '.join(bad)}")
    return cfg


def _need(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} path configured")
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _specs(cfg: RunConfig):
    if cfg.methods == ["all"]:
        return standard_specs()
    try:
        return [parse_method_id(m, cfg.est_window) for m in cfg.methods]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands

def cmd_pool(cfg: RunConfig) -> int:
    series = load_returns(_need(cfg.returns, "returns"))
    specs = _specs(cfg)
    pool = generate_pool(specs, series, cfg.est_window, cfg.alpha, cfg.pool_refit_every,
                         FitOptions(seed=cfg.seed), threads=cfg.threads)
    cfg.output.mkdir(parents=True, exist_ok=True)
    save_pool(pool, cfg.output / "pool.csv")
    log.info("wrote %d methods x %d origins to %s", *pool.shape, cfg.output / "pool.csv")
    return EXIT_OK


def _backtest_cfg(cfg: RunConfig, n_cols: int) -> BacktestConfig:
    span = cfg.eval_span if cfg.eval_span is not None else n_cols - cfg.est_window
    try:
        return BacktestConfig(cfg.est_window, span, cfg.alpha,
                              tuple(ScoreSpec(s, cfg.alpha) for s in cfg.scores),
                              cfg.benchmark, cfg.refit_stride, cfg.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_combine(cfg: RunConfig) -> int:
    pool = load_pool(_need(cfg.pool, "pool"))
    series = load_returns(_need(cfg.returns, "returns"))
    bt = _backtest_cfg(cfg, pool.shape[1])
    al = ScoreSpec("AL", cfg.alpha)
    combs = [c if c == GRAND_AVERAGE else
             make_combiner(c, al, strict=cfg.strict_appendix_b, seed=cfg.seed)
             for c in cfg.combiners]
    report = run_backtest(bt, pool, series, combs)
    cfg.output.mkdir(parents=True, exist_ok=True)
    for name, p in report.paths.items():
        save_path(p, report.returns, cfg.output / f"forecast_{name}.csv")
    write_failures(report.paths, cfg.output / "failures.csv")
    for name, p in report.paths.items():
        if p.failures:
            log.warning("%s failed at %d origins", name, len(p.failures))
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    folder = cfg.output
    files = sorted(folder.glob("forecast_*.csv"))
    if not files:
        raise DataError(f"no forecast files in {folder}")
    paths, rets = {}, None
    for f in files:
        p, r = load_path(f)
        if rets is not None and (not np.array_equal(r, rets) or
                                 not np.array_equal(p.dates, paths[next(iter(paths))].dates)):
            raise DataError(f"{f} covers different days from the other forecast files")
        paths[p.name], rets = p, r
    order = [c for c in COMBINER_NAMES if c in paths]
    order += [n for n in paths if n not in order and n not in (DYNAMIC_SELECTION, cfg.benchmark)]
    order += [n for n in (DYNAMIC_SELECTION,) if n in paths]
    if cfg.benchmark not in paths:
        series = load_returns(_need(cfg.returns, "returns"))
        dates = next(iter(paths.values())).dates
        pos = np.searchsorted(series.dates, dates)
        if np.any(pos >= len(series)) or np.any(series.dates[np.minimum(pos, len(series) - 1)] != dates):
            raise DataError("forecast dates are not in the return series")
        v, e = hs_benchmark(series.returns, pos, cfg.alpha, int(cfg.benchmark.split("-")[1]))
        paths[cfg.benchmark] = ForecastPath(cfg.benchmark, dates, v, e)
    order.append(cfg.benchmark)
    paths = {n: paths[n] for n in order}
    specs = [ScoreSpec(s, cfg.alpha) for s in cfg.scores]
    rows = evaluate(paths, rets, cfg.alpha, specs, cfg.benchmark, cfg.mcs_confidence, seed=cfg.seed)
    write_summary(rows, folder / "summary.csv")
    text = format_tables(rows, cfg.scores)
    (folder / "tables.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    s = cfg.synth
    try:
        dgp = DgpConfig(true_params=(float(s.get("omega", 0.02)), float(s.get("a", 0.08)),
                                     float(s.get("b", 0.9)), float(s.get("nu", 6.0))),
                        m_noise=(float(s.get("bias_sd", 0.1)), float(s.get("noise_sd", 0.1))),
                        seed=cfg.seed)
        M, T = int(s.get("m", 30)), int(s.get("t", 4000))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = synth_pool(dgp, M, T, cfg.alpha)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    save_returns(res.series, out / "returns.csv")
    save_pool(res.pool, out / "pool.csv")
    with (out / "truth.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "var", "es", "sigma"])
        for d, v, e, sd in zip(res.series.dates, res.true_var, res.true_es, res.sigma):
            w.writerow([str(d), _fmt(v), _fmt(e), _fmt(sd)])
    return EXIT_OK


def cmd_describe(cfg: RunConfig) -> int:
    stats = describe(load_returns(_need(cfg.returns, "returns")))
    for k, v in stats.items():
        print(f"{k:<10}{v:.6g}")
    return EXIT_OK


COMMANDS = {"pool": cmd_pool, "combine": cmd_combine, "evaluate": cmd_evaluate,
            "synth": cmd_synth, "describe": cmd_describe}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riskcombine", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, help="maximum worker processes")
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--strict-appendix-b", action="store_true",
                    help="step-rule VaR/ES extraction in probability averaging")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--returns")
        sp.add_argument("--output", "-o")
        if name in ("pool", "combine"):
            sp.add_argument("--est-window", dest="est_window", type=int)
        if name == "pool":
            sp.add_argument("--methods", help="comma-separated method ids or 'all'")
        if name == "combine":
            sp.add_argument("--pool")
            sp.add_argument("--eval-span", dest="eval_span", type=int)
            sp.add_argument("--refit-stride", dest="refit_stride", type=int)
            sp.add_argument("--combiners", help="comma-separated combiner names")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(read_config(args.config), args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MethodError, FitError, GridRangeError, np.linalg.LinAlgError, FloatingPointError,
            ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
