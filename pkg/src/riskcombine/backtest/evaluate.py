"""Out-of-sample evaluation: calibration tests, scores, skill, ranks and MCS,
plus the CSV/text serialization of a backtest."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from ..core import DataError, _fmt, _parse_date
from ..score import ScoreSpec, joint_score
from .calibration import cc_test, dq_test, es_bootstrap_test, uc_test
from .mcs import block_bootstrap_counts, mcs
from .run import BacktestReport, ForecastPath

MCS_CONFIDENCE = 0.75


def skill_scores(method_scores: Mapping[str, Sequence[float]], benchmark: Sequence[float]) -> dict:
    """100 * (1 - geometric mean over indices of method / benchmark average score)."""
    b = np.asarray(benchmark, float)
    if np.any(b <= 0):
        raise ValueError("benchmark average scores must be positive")
    out = {}
    for name, s in method_scores.items():
        s = np.asarray(s, float)
        if s.shape != b.shape:
            raise ValueError(f"{name}: expected {b.size} index scores")
        if np.any(s <= 0):
            raise ValueError(f"{name}: nonpositive average score")
        out[name] = 100.0 * (1.0 - math.exp(float(np.mean(np.log(s / b)))))
    return out


def average_ranks(table) -> np.ndarray:
    """Mean over columns of per-column midranks (rank 1 = lowest score).

    ``table`` is methods x indices.
    """
    T = np.atleast_2d(np.asarray(table, float))
    if T.shape[1] < 1:
        raise ValueError("need at least one index")
    return rankdata(T, axis=0).mean(axis=1)


def evaluate(paths: Mapping[str, ForecastPath], returns, alpha: float, specs: Sequence[ScoreSpec],
             benchmark: str, mcs_confidence: float = MCS_CONFIDENCE, n_boot_es: int = 10000,
             n_boot_mcs: int = 5000, block_len: int = 21, seed: int = 0) -> list[dict]:
    """One summary row per forecast path on a single index.

    Skill is measured against the ``benchmark`` path; the rank column is
    the mean rank over the score variants; MCS membership uses daily scores
    on the days where every path produced a forecast.
    """
    r = np.asarray(returns, float)
    names = list(paths)
    if benchmark not in paths:
        raise DataError(f"benchmark {benchmark!r} missing")
    ok_all = np.logical_and.reduce([paths[n].ok for n in names])
    daily = {s.variant: np.array([joint_score(s, paths[n].var[ok_all], paths[n].es[ok_all],
                                              r[ok_all]) for n in names]) for s in specs}
    rows = []
    for n in names:
        p = paths[n]
        ok = p.ok
        hits = r[ok] <= p.var[ok]
        row = {"method": n, "days": int(ok.sum()), "failures": len(p.failures),
               "hits": int(hits.sum()), "hit_rate": float(hits.mean()) if ok.any() else math.nan}
        tests = {"uc": lambda: uc_test(hits, alpha), "cc": lambda: cc_test(hits, alpha),
                 "dq": lambda: dq_test(hits, p.var[ok], alpha),
                 "es": lambda: es_bootstrap_test(r[ok], p.var[ok], p.es[ok], n_boot_es, seed)}
        for key, fn in tests.items():
            try:
                res = fn()
                row[f"{key}_p"] = res.p_value
                row[f"{key}_reject"] = res.reject_at_5pct
            except (ValueError, np.linalg.LinAlgError):
                row[f"{key}_p"] = math.nan
                row[f"{key}_reject"] = False
        for s in specs:
            sc = joint_score(s, p.var[ok], p.es[ok], r[ok])
            row[f"score_{s.variant}"] = float(np.mean(sc)) if sc.size else math.nan
        rows.append(row)
    bench = next(row for row in rows if row["method"] == benchmark)
    ranks = []
    for s in specs:
        key = f"score_{s.variant}"
        sk = skill_scores({row["method"]: [row[key]] for row in rows}, [bench[key]])
        for row in rows:
            row[f"skill_{s.variant}"] = sk[row["method"]]
        ranks.append(average_ranks([[row[key]] for row in rows]))
    mean_rank = np.mean(ranks, axis=0)
    for row, rk in zip(rows, mean_rank):
        row["rank"] = float(rk)
    if len(names) >= 2 and ok_all.sum() >= 250:
        counts = block_bootstrap_counts(int(ok_all.sum()), n_boot_mcs, block_len, seed)
        for s in specs:
            res = mcs(daily[s.variant], names, mcs_confidence, n_boot_mcs, block_len, seed, counts)
            for row in rows:
                row[f"mcs_{s.variant}"] = row["method"] in res.surviving
                row[f"mcs_p_{s.variant}"] = res.p_values[row["method"]]
    return rows


def evaluate_report(report: BacktestReport, **kw) -> list[dict]:
    cfg = report.cfg
    return evaluate(report.paths, report.returns, cfg.alpha, cfg.score_specs,
                    cfg.benchmark_method, **kw)


# ---------------------------------------------------------------------------
# files

FORECAST_HEADER = ["date", "var", "es", "return"]


def save_path(path: ForecastPath, returns, fname) -> None:
    """Per-day forecasts; failed origins are written with empty var/es."""
    with Path(fname).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for d, v, e, x in zip(path.dates, path.var, path.es, returns):
            ok = np.isfinite(v) and np.isfinite(e)
            w.writerow([str(d), _fmt(v) if ok else "", _fmt(e) if ok else "", _fmt(x)])


def load_path(fname, name: str | None = None):
    """Inverse of :func:`save_path`; returns ``(ForecastPath, returns)``."""
    fname = Path(fname)
    if not fname.exists():
        raise DataError(f"missing forecast file {fname}")
    dates, var, es, ret = [], [], [], []
    with fname.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != FORECAST_HEADER:
            raise DataError(f"{fname}: expected header {','.join(FORECAST_HEADER)}")
        for i, row in enumerate(reader, start=2):
            dates.append(_parse_date(row["date"], i))
            var.append(float(row["var"]) if row["var"] else math.nan)
            es.append(float(row["es"]) if row["es"] else math.nan)
            ret.append(float(row["return"]))
    name = name or fname.stem.removeprefix("forecast_")
    return ForecastPath(name, np.array(dates, "datetime64[D]"), np.array(var), np.array(es)), np.array(ret)


def save_report(report: BacktestReport, outdir) -> list[dict]:
    """Forecast CSV per path, ``summary.csv`` and ``tables.txt``; returns the summary rows."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, p in report.paths.items():
        save_path(p, report.returns, out / f"forecast_{name}.csv")
    write_failures(report.paths, out / "failures.csv")
    rows = evaluate_report(report)
    write_summary(rows, out / "summary.csv")
    (out / "tables.txt").write_text(format_tables(rows, [s.variant for s in report.cfg.score_specs]))
    return rows


def write_failures(paths: Mapping[str, ForecastPath], fname) -> None:
    with Path(fname).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "date", "message"])
        for name, p in paths.items():
            for d, msg in p.failures:
                w.writerow([name, str(d), msg])


def write_summary(rows: list[dict], fname) -> None:
    keys = list(rows[0])
    with Path(fname).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([_fmt(row[k]) if isinstance(row[k], float) else row[k] for k in keys])


def format_tables(rows: list[dict], variants: Sequence[str]) -> str:
    """Plain-text calibration, skill/rank and MCS tables."""
    width = max(len(r["method"]) for r in rows) + 2
    lines = ["Calibration (5% level rejections; hits out of evaluated days)", ""]
    lines.append(f"{'method':<{width}}{'days':>6}{'hits':>6}{'UC':>4}{'CC':>4}{'DQ':>4}{'ES':>4}")
    for r in rows:
        flags = "".join(f"{'x' if r[k + '_reject'] else '.':>4}" for k in ("uc", "cc", "dq", "es"))
        lines.append(f"{r['method']:<{width}}{r['days']:>6}{r['hits']:>6}{flags}")
    lines += ["", "Skill scores versus the benchmark and mean rank", ""]
    lines.append(f"{'method':<{width}}" + "".join(f"{v:>9}" for v in variants) + f"{'rank':>8}")
    for r in rows:
        lines.append(f"{r['method']:<{width}}"
                     + "".join(f"{r['skill_' + v]:>9.2f}" for v in variants) + f"{r['rank']:>8.2f}")
    if f"mcs_{variants[0]}" in rows[0]:
        lines += ["", f"Model confidence set membership at {MCS_CONFIDENCE:.0%}", ""]
        lines.append(f"{'method':<{width}}" + "".join(f"{v:>6}" for v in variants))
        for r in rows:
            lines.append(f"{r['method']:<{width}}"
                         + "".join(f"{'in' if r['mcs_' + v] else '-':>6}" for v in variants))
        lines.append(f"{'count':<{width}}"
                     + "".join(f"{sum(r['mcs_' + v] for r in rows):>6}" for v in variants))
    return "\n".join(lines) + "\n"
