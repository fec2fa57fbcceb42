"""Scenario harness: multi-seed runs, aggregation, comparison tables and
validation checks for promotion experiments."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, MarketConfig
from .instruments import PromotionStrategy

SERIES = (
    "market_share", "open_accounts", "accepted_applications", "interest_income", "fee_income",
    "writeoffs", "cumulative_interest", "discounted_interest", "discounted_profit",
    "balance", "accounts_opened", "accounts_missed",
)
PROMO_START, PROMO_END = 24, 48


@dataclass(frozen=True)
class Scenario:
    """A market set-up run once per seed.

    ``lender_overrides`` maps a lender id to field changes; a ``promotion``
    value may be a :class:`PromotionStrategy`, a dict of its fields or None.
    """

    name: str
    base: MarketConfig
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    lender_overrides: dict[int, dict] = field(default_factory=dict)
    series: tuple[str, ...] = SERIES
    keep_customers: bool = False
    primary: int = 0
    reference: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError(f"scenario {self.name!r} needs at least one seed")
        n = len(self.base.lenders)
        for k in self.lender_overrides:
            if not 0 <= k < n:
                raise ConfigError(f"scenario {self.name!r} overrides unknown lender {k}")
        if not (0 <= self.primary < n and 0 <= self.reference < n):
            raise ConfigError(f"scenario {self.name!r}: primary/reference lender out of range")

    def config(self, seed: int) -> MarketConfig:
        cfg = replace(self.base, name=self.name, seed=seed)
        for k, changes in sorted(self.lender_overrides.items()):
            changes = dict(changes)
            promo = changes.get("promotion")
            if isinstance(promo, dict):
                changes["promotion"] = PromotionStrategy(**promo)
            cfg = cfg.with_lender(k, **changes)
        return cfg

    def to_dict(self) -> dict:
        overrides = {}
        for k, changes in self.lender_overrides.items():
            c = dict(changes)
            if isinstance(c.get("promotion"), PromotionStrategy):
                p = c["promotion"]
                c["promotion"] = {"interest_free_duration": p.interest_free_duration,
                                  "window_start": p.window_start, "window_end": p.window_end}
            overrides[str(k)] = c
        return {"name": self.name, "seeds": list(self.seeds), "lender_overrides": overrides,
                "primary": self.primary, "reference": self.reference}


def promo(duration: int, start: int = PROMO_START, end: int = PROMO_END) -> dict:
    return {"promotion": PromotionStrategy(duration, start, end) if duration > 0 else None}


# ---------------------------------------------------------------------------
# running


@dataclass
class SeedRun:
    seed: int
    series: dict[str, np.ndarray]  # name -> (T, K)
    rows: list[list[str]]
    customers: dict[str, np.ndarray] | None = None


def run_seed(scenario: Scenario, seed: int) -> SeedRun:
    from .engine.simulation import frames_to_rows, run

    result = run(scenario.config(seed))
    series = {name: np.array([f.lender[name] for f in result.frames], dtype=float) for name in scenario.series}
    customers = result.state.customer_summary() if scenario.keep_customers else None
    return SeedRun(seed, series, frames_to_rows(result.frames), customers)


def _run_job(job):
    scenario, seed = job
    return run_seed(scenario, seed)


@dataclass
class ExperimentResult:
    scenario: Scenario
    runs: list[SeedRun]

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.runs]

    @property
    def single_seed(self) -> bool:
        return len(self.runs) < 2

    def stacked(self, name: str) -> np.ndarray:
        """Series ``name`` for every seed, shape (seeds, T, lenders)."""
        return np.stack([r.series[name] for r in self.runs])

    def mean(self, name: str) -> np.ndarray:
        return self.stacked(name).mean(axis=0)

    def std(self, name: str) -> np.ndarray:
        """Sample standard deviation across seeds (zero when only one seed ran)."""
        x = self.stacked(name)
        if len(x) < 2:
            return np.zeros(x.shape[1:])
        return x.std(axis=0, ddof=1)

    def final(self, name: str) -> np.ndarray:
        """Per-seed final-step values, shape (seeds, lenders)."""
        return self.stacked(name)[:, -1, :]

    def missed_fraction(self) -> np.ndarray:
        """Per-seed final fraction of each lender's opened accounts that ever missed a payment."""
        opened = self.final("accounts_opened")
        missed = self.final("accounts_missed")
        return np.divide(missed, opened, out=np.zeros_like(missed), where=opened > 0)

    def relative_difference(self, values: np.ndarray, reference: int | None = None) -> np.ndarray:
        """Per-seed percentage difference of each lender from the reference lender."""
        ref = self.scenario.reference if reference is None else reference
        base = values[:, ref:ref + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(base != 0, (values - base) / np.where(base != 0, base, 1.0) * 100.0, np.nan)

    def interest_difference(self, reference: int | None = None) -> np.ndarray:
        return self.relative_difference(self.final("discounted_interest"), reference)

    def profit_difference(self, reference: int | None = None) -> np.ndarray:
        return self.relative_difference(self.final("discounted_profit"), reference)


def _stats(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)), float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def run_scenarios(scenarios: Sequence[Scenario], workers: int = 1, out_dir: str | Path | None = None,
                  write_metrics: bool = True) -> list[ExperimentResult]:
    """Run every (scenario, seed) pair, optionally in a process pool.

    Results are collected in submission order, so the worker count never
    changes what is returned or written.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    jobs = [(s, seed) for s in scenarios for seed in s.seeds]
    if workers == 1 or len(jobs) == 1:
        runs = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            runs = list(pool.map(_run_job, jobs))
    results = []
    i = 0
    for s in scenarios:
        results.append(ExperimentResult(s, runs[i:i + len(s.seeds)]))
        i += len(s.seeds)
    if out_dir is not None:
        for r in results:
            write_result(r, out_dir, write_metrics)
    return results


def run_scenario(scenario: Scenario, workers: int = 1, out_dir: str | Path | None = None) -> ExperimentResult:
    return run_scenarios([scenario], workers, out_dir)[0]


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return repr(float(v))


def write_result(result: ExperimentResult, out_dir: str | Path, write_metrics: bool = True) -> Path:
    from . import __version__
    from .engine.simulation import CSV_COLUMNS

    s = result.scenario
    out = Path(out_dir) / s.name
    out.mkdir(parents=True, exist_ok=True)
    names = list(s.series)
    with open(out / "series.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "step", "lender_id", *names])
        for r in result.runs:
            T, K = r.series[names[0]].shape
            for t in range(T):
                for k in range(K):
                    w.writerow([r.seed, t, k, *[_fmt(r.series[n][t, k]) for n in names]])
    means = {n: result.mean(n) for n in names}
    stds = {n: result.std(n) for n in names}
    with open(out / "aggregates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "lender_id", *[f"{n}_{x}" for n in names for x in ("mean", "std")]])
        T, K = means[names[0]].shape
        for t in range(T):
            for k in range(K):
                w.writerow([t, k, *[_fmt(v[t, k]) for n in names for v in (means[n], stds[n])]])
    if write_metrics:
        for r in result.runs:
            with open(out / f"metrics_{s.name}_{r.seed}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                w.writerows(r.rows)
    manifest = {
        "scenario": s.to_dict(),
        "seeds": result.seeds,
        "config_sha256": {str(seed): s.config(seed).digest() for seed in result.seeds},
        "std_flag": "single seed: std reported as 0" if result.single_seed else "",
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def read_series_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Load ``series.csv`` back into name -> (seeds, T, lenders) arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    names = [c for c in rows[0] if c not in ("seed", "step", "lender_id")]
    seeds = sorted({int(r["seed"]) for r in rows}, key=[int(r["seed"]) for r in rows].index)
    T = max(int(r["step"]) for r in rows) + 1
    K = max(int(r["lender_id"]) for r in rows) + 1
    out = {n: np.zeros((len(seeds), T, K)) for n in names}
    idx = {s: i for i, s in enumerate(seeds)}
    for r in rows:
        i, t, k = idx[int(r["seed"])], int(r["step"]), int(r["lender_id"])
        for n in names:
            out[n][i, t, k] = float(r[n])
    return out


def experiment_table(result: ExperimentResult, label=lambda cfg, k: "None") -> list[dict]:
    """One row per lender: interest and missed-payment differences, final share (mean, std)."""
    cfg = result.scenario.config(result.seeds[0])
    diff = result.interest_difference()
    missed = result.relative_difference(result.missed_fraction())
    share = result.final("market_share")
    rows = []
    for k in range(diff.shape[1]):
        p = cfg.lenders[k].promotion
        rows.append({
            "scenario": result.scenario.name,
            "lender_id": k,
            "promotion": label(cfg, k) if p is None else f"{p.interest_free_duration}m {p.window_start}-{p.window_end}",
            "interest_difference": _stats(diff[:, k]),
            "missed_difference": _stats(missed[:, k]),
            "market_share": _stats(share[:, k]),
        })
    return rows


def write_table(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["scenario", "lender_id", "promotion"]
    stats = ["interest_difference", "missed_difference", "market_share"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + [f"{s}_{x}" for s in stats for x in ("mean", "std")])
        for r in rows:
            w.writerow([r[c] for c in cols] + [_fmt(v) for s in stats for v in r[s]])
    return path


# ---------------------------------------------------------------------------
# scenario builders


def duration_experiment(base: MarketConfig, seeds=(0, 1, 2, 3, 4),
                        durations=(0, 6, 12, 24, 36, 48)) -> list[Scenario]:
    """Primary lender 0 offers each interest-free duration over steps 24-48; lenders 1, 2 never do."""
    return [Scenario(f"duration_{d}", base, tuple(seeds), {0: promo(d)}) for d in durations]


def window_experiment(base: MarketConfig, seeds=(0, 1, 2, 3, 4), windows=(0, 6, 12, 24, 36, 48),
                      duration: int = 12, start: int = PROMO_START) -> list[Scenario]:
    """A 12-month promotion available for ``w`` steps from ``start``."""
    return [
        Scenario(f"window_{w}", base, tuple(seeds), {0: promo(duration if w > 0 else 0, start, start + w)})
        for w in windows
    ]


def competition_experiment(base: MarketConfig, seeds=(0, 1, 2, 3, 4),
                           durations=(6, 12, 18, 24)) -> dict[tuple[int, int], Scenario]:
    """Grid keyed by (competitor duration, primary duration); lender 2 has no promotion."""
    grid = {}
    for c in durations:
        for p in durations:
            grid[(c, p)] = Scenario(f"competition_c{c}_p{p}", base, tuple(seeds),
                                    {0: promo(p), 1: promo(c)}, reference=1)
    return grid


def delay_experiment(base: MarketConfig, seeds=(0, 1, 2, 3, 4), delays=(0, 1, 3, 6, 12),
                     duration: int = 12) -> list[Scenario]:
    """Competitor (lender 1) runs a 12-month promotion over 24-48; the primary answers ``d`` steps later."""
    length = PROMO_END - PROMO_START
    return [
        Scenario(f"delay_{d}", base, tuple(seeds),
                 {0: promo(duration, PROMO_START + d, PROMO_START + d + length),
                  1: promo(duration)}, reference=1)
        for d in delays
    ]


def population_stability(base: MarketConfig, seeds=(0, 1, 2, 3, 4),
                         sizes=(500, 1000, 2000, 5000, 10000, 20000, 30000, 50000)) -> list[Scenario]:
    return [Scenario(f"stability_n{n}", replace(base, n_customers=n), tuple(seeds),
                     series=("market_share",)) for n in sizes]


def seed_stability(base: MarketConfig, counts=range(2, 11)) -> list[Scenario]:
    return [Scenario(f"stability_seeds{c}", base, tuple(range(c)), series=("market_share",)) for c in counts]


TIMEWISE_LAUNCH, TIMEWISE_PROMO, TIMEWISE_T = 24, 60, 100


def timewise_scenario(base: MarketConfig, seeds=(0, 1, 2, 3, 4), launch: int = TIMEWISE_LAUNCH,
                      promo_start: int = TIMEWISE_PROMO, duration: int = 12) -> Scenario:
    """Lender 2 enters the market at ``launch`` and runs a promotion from ``promo_start`` to the end."""
    base = replace(base, T=TIMEWISE_T)
    return Scenario("timewise", base, tuple(seeds),
                    {2: {"launch_step": launch, **promo(duration, promo_start, TIMEWISE_T)}},
                    primary=2, reference=0)


def profit_difference_table(results: dict[tuple[int, int], ExperimentResult],
                            use_profit: bool = False) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Primary-vs-competitor percentage difference at the final step.

    Returns ``(durations, mean, std)`` with rows indexed by competitor
    duration and columns by primary duration. The interest-only variant of
    discounted profit is used unless ``use_profit``.
    """
    durations = sorted({c for c, _ in results} | {p for _, p in results})
    missing = [(c, p) for c in durations for p in durations if (c, p) not in results]
    if missing:
        raise ValueError(f"incomplete grid, missing {missing}")
    n = len(durations)
    mean = np.zeros((n, n))
    std = np.zeros((n, n))
    for i, c in enumerate(durations):
        for j, p in enumerate(durations):
            r = results[(c, p)]
            d = r.profit_difference() if use_profit else r.interest_difference()
            mean[i, j], std[i, j] = _stats(d[:, r.scenario.primary])
    return durations, mean, std


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class StylisedThresholds:
    n_income_bins: int = 5
    min_balance_expenditure_corr: float = 0.5
    min_balance_limit_corr: float = 0.5
    max_abs_utilisation_limit_corr: float = 0.2

    @classmethod
    def from_dict(cls, d: dict) -> "StylisedThresholds":
        return cls(**d)


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2 or np.std(x) == 0 or np.std(y) == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def stylised_fact_checks(customers: dict[str, np.ndarray],
                         thresholds: StylisedThresholds = StylisedThresholds()) -> dict[str, dict]:
    """Four cross-sectional checks over customers holding at least one open card.

    ``customers`` holds per-customer arrays ``net_income``,
    ``total_expenditure``, ``total_balance`` and ``total_limit`` (as returned
    by ``MarketState.customer_summary``).
    """
    holders = np.asarray(customers["total_limit"]) > 0
    income = np.asarray(customers["net_income"])[holders]
    expenditure = np.asarray(customers["total_expenditure"])[holders]
    balance = np.asarray(customers["total_balance"])[holders]
    limit = np.asarray(customers["total_limit"])[holders]

    bins = np.array_split(np.argsort(income, kind="stable"), thresholds.n_income_bins)
    bti = [float(np.mean(balance[b] / income[b])) if len(b) else 0.0 for b in bins]
    mid = len(bti) // 2
    c_exp = _corr(balance, expenditure)
    c_lim = _corr(balance, limit)
    c_util = _corr(balance / limit, limit) if len(limit) else 0.0
    return {
        "balance_to_income_hump": {"value": bti, "passed": bool(bti[mid] > bti[0] and bti[mid] > bti[-1])},
        "balance_expenditure_corr": {"value": c_exp, "passed": c_exp >= thresholds.min_balance_expenditure_corr},
        "balance_limit_corr": {"value": c_lim, "passed": c_lim >= thresholds.min_balance_limit_corr},
        "utilisation_limit_corr": {"value": c_util,
                                   "passed": abs(c_util) <= thresholds.max_abs_utilisation_limit_corr},
    }


def timewise_normalize(series, anchor: int) -> np.ndarray:
    """Index a series to its value at step ``anchor``."""
    x = np.asarray(series, dtype=float)
    if not -len(x) <= anchor < len(x):
        raise IndexError(f"anchor {anchor} outside series of length {len(x)}")
    if x[anchor] == 0:
        raise ValueError(f"cannot normalise: series is zero at anchor {anchor}")
    return x / x[anchor]


def load_historical_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a user-supplied history (column ``month`` plus one column per metric)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "month" not in rows[0]:
        raise ValueError(f"{path}: expected a 'month' column")
    out = {"month": np.array([int(r["month"]) for r in rows])}
    for name in rows[0]:
        if name != "month":
            out[name] = np.array([float(r[name]) if r[name] not in ("", None) else math.nan for r in rows])
    return out


TIMEWISE_METRICS = {
    "interest_income": "interest_income",
    "non_interest_income": "fee_income",
    "market_share": "market_share",
    "total_balance": "balance",
}


def timewise_overlay(result: ExperimentResult, out_path: str | Path, historical: dict | None = None,
                     anchor_after_launch: int = 48) -> Path:
    """Write indexed simulated series for the launched lender, next to history when supplied.

    Simulated months count from the lender's launch; every series is divided
    by its value ``anchor_after_launch`` months after launch. A series that is
    zero at the anchor is written as NaN.
    """
    cfg = result.scenario.config(result.seeds[0])
    k = result.scenario.primary
    launch = cfg.lenders[k].launch_step
    anchor = launch + anchor_after_launch
    cols, data = ["month"], [np.arange(cfg.T - launch)]
    for label, name in TIMEWISE_METRICS.items():
        m = result.mean(name)[:, k]
        s = result.std(name)[:, k]
        cols += [f"sim_{label}", f"sim_{label}_std"]
        if m[anchor] == 0:
            # nothing to index against; leave the metric blank rather than abort the overlay
            data += [np.full(cfg.T - launch, math.nan)] * 2
        else:
            data += [timewise_normalize(m, anchor)[launch:], (s / m[anchor])[launch:]]
        if historical is not None and label in historical:
            hist = dict(zip(historical["month"], historical[label]))
            h_anchor = hist.get(anchor_after_launch)
            vals = np.array([hist.get(int(mo), math.nan) for mo in data[0]])
            cols.append(f"hist_{label}")
            data.append(vals / h_anchor if h_anchor else np.full(len(vals), math.nan))
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([int(row[0])] + [_fmt(v) for v in row[1:]])
    return out


def timewise_smoke_checks(result: ExperimentResult) -> dict[str, dict]:
    """Yearly interest income of the launched lender never falls, and its share grows during the promotion."""
    cfg = result.scenario.config(result.seeds[0])
    k = result.scenario.primary
    launch = cfg.lenders[k].launch_step
    p = cfg.lenders[k].promotion
    interest = result.mean("interest_income")[:, k]
    n_years = (cfg.T - launch) // 12
    yearly = [float(interest[launch + 12 * y: launch + 12 * (y + 1)].sum()) for y in range(n_years)]
    share = result.mean("market_share")[:, k]
    end = min(p.window_end, cfg.T - 1)
    return {
        "interest_non_decreasing": {"value": yearly,
                                    "passed": all(b >= a for a, b in zip(yearly, yearly[1:]))},
        "share_rises_in_promotion": {"value": [float(share[p.window_start]), float(share[end])],
                                     "passed": bool(share[end] > share[p.window_start])},
    }


def monotone_non_increasing(means: Iterable[float], stds: Iterable[float] | None = None) -> bool:
    """True when each value is no larger than its predecessor, allowing one pooled std of slack."""
    m = list(means)
    s = list(stds) if stds is not None else [0.0] * len(m)
    for i in range(1, len(m)):
        slack = math.sqrt((s[i] ** 2 + s[i - 1] ** 2) / 2.0)
        if m[i] > m[i - 1] + slack:
            return False
    return True


# ---------------------------------------------------------------------------
# experiment specs and checks

EXPECTED_SIGN = lambda c, p: (p > c) - (p < c)  # noqa: E731  longer promotion wins


def pooled_std(a: float, b: float) -> float:
    return math.sqrt((a * a + b * b) / 2.0)


def duration_checks(results: Sequence[ExperimentResult], durations: Sequence[int],
                    share_target: tuple[float, float] = (0.43, 0.03),
                    diff_target: tuple[float, float] = (4.9, 3.0), best_duration: int = 12) -> dict:
    """Orderings of the single-promotion experiment, evaluated at the final step."""
    shares = [_stats(r.final("market_share")[:, r.scenario.primary]) for r in results]
    diffs = [_stats(r.interest_difference()[:, r.scenario.primary]) for r in results]
    longest = int(np.argmax(durations))
    b = list(durations).index(best_duration)
    best_ok = all(diffs[b][0] + pooled_std(diffs[b][1], s) >= m for m, s in diffs)
    return {
        "share_strictly_increasing": {"value": [m for m, _ in shares],
                                      "passed": all(y[0] > x[0] for x, y in zip(shares, shares[1:]))},
        "longest_share": {"value": shares[longest][0], "target": list(share_target),
                          "passed": abs(shares[longest][0] - share_target[0]) <= share_target[1]},
        f"best_interest_at_{best_duration}": {"value": [m for m, _ in diffs], "passed": best_ok},
        "longest_interest_difference": {"value": diffs[longest][0], "target": list(diff_target),
                                        "passed": abs(diffs[longest][0] - diff_target[0]) <= diff_target[1]},
    }


def competition_checks(durations: Sequence[int], mean: np.ndarray, diagonal_tol: float = 3.5,
                       min_matches: int = 14) -> dict:
    """Matched promotions draw; otherwise the longer promotion earns more.

    A diagonal cell counts as matching the sign pattern when it lies within
    ``diagonal_tol`` of zero.
    """
    diag = [float(mean[i, i]) for i in range(len(durations))]
    matches = 0
    for i, c in enumerate(durations):
        for j, p in enumerate(durations):
            sign = EXPECTED_SIGN(c, p)
            matches += abs(mean[i, j]) <= diagonal_tol if sign == 0 else np.sign(mean[i, j]) == sign
    return {
        "diagonal_near_zero": {"value": diag, "passed": all(abs(d) <= diagonal_tol for d in diag)},
        "sign_pattern": {"value": int(matches), "of": len(durations) ** 2, "passed": bool(matches >= min_matches)},
    }


def delay_checks(results: Sequence[ExperimentResult], delays: Sequence[int],
                 target_delay: int = 3, target: tuple[float, float] = (-2.4, 2.0)) -> dict:
    stats = [_stats(r.interest_difference()[:, r.scenario.primary]) for r in results]
    means = [m for m, _ in stats]
    k = list(delays).index(target_delay) if target_delay in delays else None
    out = {"monotone_non_increasing": {"value": means,
                                       "passed": monotone_non_increasing(means, [s for _, s in stats])}}
    if k is not None:
        out[f"delay_{target_delay}"] = {"value": means[k], "target": list(target),
                                        "passed": abs(means[k] - target[0]) <= target[1]}
    return out


def stability_summary(results: Sequence[ExperimentResult]) -> dict:
    """Final market share of each lender (mean, std) per scenario."""
    out = {}
    for r in results:
        sh = r.final("market_share")
        out[r.scenario.name] = {"mean": sh.mean(axis=0).tolist(),
                                "std": (sh.std(axis=0, ddof=1) if len(sh) > 1 else np.zeros(sh.shape[1])).tolist()}
    return out


EXPERIMENT_KINDS = ("duration", "window", "competition", "delay", "population_stability",
                    "seed_stability", "timewise", "scenarios")


@dataclass(frozen=True)
class ExperimentSpec:
    """Contents of an experiment config file.

    ``params`` feeds the scenario builder for ``kind`` (for example
    ``durations`` or ``delays``); kind ``scenarios`` takes an explicit
    ``scenarios`` list of ``{name, lender_overrides, seeds}`` objects.
    """

    kind: str
    base: MarketConfig
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    params: dict = field(default_factory=dict)
    scenarios: tuple[dict, ...] = ()
    historical: str | None = None
    stylised: StylisedThresholds = StylisedThresholds()

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment must be one of {EXPERIMENT_KINDS}, got {self.kind!r}")
        if not self.seeds:
            raise ConfigError("experiment needs at least one seed")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentSpec":
        from .config import load_config

        d = {k: v for k, v in d.items() if not k.startswith("_")}
        if "experiment" not in d:
            raise ConfigError("experiment config needs an 'experiment' field")
        market = d.get("market", {})
        if isinstance(market, str):
            p = Path(market)
            base = load_config(p if p.is_absolute() or base_dir is None else base_dir / p)
        else:
            base = MarketConfig.from_dict(market, base_dir)
        hist = d.get("historical")
        if hist and base_dir is not None and not Path(hist).is_absolute():
            hist = str(base_dir / hist)
        unknown = set(d) - {"experiment", "market", "seeds", "params", "scenarios", "historical", "stylised"}
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        try:
            return cls(d["experiment"], base, tuple(int(s) for s in d.get("seeds", (0, 1, 2, 3, 4))),
                       dict(d.get("params", {})), tuple(d.get("scenarios", ())), hist,
                       StylisedThresholds.from_dict(d.get("stylised", {})))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def build(self) -> list[Scenario]:
        p = dict(self.params)
        seeds = self.seeds
        try:
            if self.kind == "duration":
                return duration_experiment(self.base, seeds, **p)
            if self.kind == "window":
                return window_experiment(self.base, seeds, **p)
            if self.kind == "competition":
                return list(competition_experiment(self.base, seeds, **p).values())
            if self.kind == "delay":
                return delay_experiment(self.base, seeds, **p)
            if self.kind == "population_stability":
                return population_stability(self.base, seeds, **p)
            if self.kind == "seed_stability":
                return seed_stability(self.base, **p)
            if self.kind == "timewise":
                return [timewise_scenario(self.base, seeds, **p)]
        except TypeError as exc:
            raise ConfigError(f"bad params for {self.kind!r}: {exc}") from exc
        out = []
        for s in self.scenarios:
            overrides = {int(k): v for k, v in s.get("lender_overrides", {}).items()}
            out.append(Scenario(s["name"], self.base, tuple(s.get("seeds", seeds)), overrides,
                                primary=int(s.get("primary", 0)), reference=int(s.get("reference", 1))))
        return out


def load_experiment(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"experiment file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentSpec.from_dict(raw, base_dir=path.parent)


def _competition_grid_csv(durations, mean, std, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["competitor_months", *[f"primary_{p}_{x}" for p in durations for x in ("mean", "std")]])
        for i, c in enumerate(durations):
            w.writerow([c, *[_fmt(v) for j in range(len(durations)) for v in (mean[i, j], std[i, j])]])


def run_experiment(spec: ExperimentSpec, out_dir: str | Path, workers: int = 1,
                   name: str | None = None) -> dict:
    """Run all scenarios of ``spec``, write tables and ``report.json``; return the report."""
    out = Path(out_dir)
    name = name or spec.kind
    scenarios = spec.build()
    results = run_scenarios(scenarios, workers, out)
    tables = out / "tables"
    report: dict = {"experiment": spec.kind, "scenarios": [s.name for s in scenarios],
                    "seeds": list(spec.seeds), "checks": {}}
    rows = [row for r in results for row in experiment_table(r)]
    write_table(rows, tables / f"{name}.csv")

    if spec.kind == "duration":
        durations = spec.params.get("durations", (0, 6, 12, 24, 36, 48))
        report["checks"] = duration_checks(results, durations)
    elif spec.kind == "competition":
        grid = {}
        for s, r in zip(scenarios, results):
            c, p = (int(x[1:]) for x in s.name.split("_")[1:])
            grid[(c, p)] = r
        durations, mean, std = profit_difference_table(grid)
        _competition_grid_csv(durations, mean, std, tables / f"{name}_grid.csv")
        report["grid"] = {"durations": durations, "mean": mean.tolist(), "std": std.tolist()}
        report["checks"] = competition_checks(durations, mean)
    elif spec.kind == "delay":
        report["checks"] = delay_checks(results, spec.params.get("delays", (0, 1, 3, 6, 12)))
    elif spec.kind in ("population_stability", "seed_stability"):
        report["final_share"] = stability_summary(results)
    elif spec.kind == "timewise":
        hist = load_historical_csv(spec.historical) if spec.historical else None
        timewise_overlay(results[0], tables / "timewise_indexed.csv", hist)
        report["checks"] = timewise_smoke_checks(results[0])
    report["passed"] = all(c["passed"] for c in report["checks"].values())
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


@dataclass(frozen=True)
class ValidationSpec:
    """Calibration run plus the checks applied to it."""

    base: MarketConfig
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    window: int = 12
    max_mape: float = 25.0
    stylised: StylisedThresholds = StylisedThresholds()

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ValidationSpec":
        from .config import load_config

        d = {k: v for k, v in d.items() if not k.startswith("_")}
        if "market" not in d:
            return cls(MarketConfig.from_dict(d, base_dir))
        market = d["market"]
        if isinstance(market, str):
            p = Path(market)
            base = load_config(p if p.is_absolute() or base_dir is None else base_dir / p)
        else:
            base = MarketConfig.from_dict(market, base_dir)
        unknown = set(d) - {"market", "seeds", "window", "max_mape", "stylised"}
        if unknown:
            raise ConfigError(f"unknown validation fields: {sorted(unknown)}")
        return cls(base, tuple(int(s) for s in d.get("seeds", (0, 1, 2, 3, 4))), int(d.get("window", 12)),
                   float(d.get("max_mape", 25.0)), StylisedThresholds.from_dict(d.get("stylised", {})))


def validate_calibration(spec: ValidationSpec, out_dir: str | Path | None = None, workers: int = 1) -> dict:
    """Moments, MAPE and stylised facts of the calibration run, one simulation per seed.

    The stylised-fact checks pass only if they pass on every seed.
    """
    from .calibration import TARGETS, MomentSet, compute_moments, mape
    from .engine.simulation import run

    scenario = Scenario(spec.base.name, spec.base, spec.seeds, keep_customers=True)
    results = run_scenarios([scenario], workers, out_dir)[0]
    moments, mapes, facts = [], [], []
    for seed_run in results.runs:
        frames = _frames_from_rows(seed_run.rows, len(spec.base.lenders))
        m = compute_moments(frames, spec.window)
        moments.append(m.as_array())
        mapes.append(mape(m, TARGETS))
        facts.append(stylised_fact_checks(seed_run.customers, spec.stylised))
    mean_moments = MomentSet.from_array(np.mean(moments, axis=0))
    mape_mean, mape_std = _stats(mapes)
    checks = {"mape": {"value": mape_mean, "std": mape_std, "per_seed": mapes,
                       "passed": mape_mean <= spec.max_mape}}
    for name in facts[0]:
        checks[name] = {"value": [f[name]["value"] for f in facts],
                        "passed": all(f[name]["passed"] for f in facts)}
    report = {"scenario": scenario.name, "seeds": list(spec.seeds), "moments": mean_moments.to_dict(),
              "targets": TARGETS.to_dict(), "checks": checks,
              "passed": all(c["passed"] for c in checks.values())}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def _frames_from_rows(rows: list[list[str]], n_lenders: int):
    """Rebuild metrics frames from CSV-formatted rows (values round-trip exactly through repr)."""
    from .engine.simulation import CSV_COLUMNS, LENDER_FIELDS, MARKET_FIELDS, MetricsFrame, _column, parse_value

    idx = {c: i for i, c in enumerate(CSV_COLUMNS)}
    frames = []
    for i in range(0, len(rows), n_lenders):
        block = rows[i:i + n_lenders]
        lender = {f: _column([r[idx[f]] for r in block]) for f in LENDER_FIELDS}
        market = {f: parse_value(block[0][idx[f]]) for f in MARKET_FIELDS}
        frames.append(MetricsFrame(int(block[0][idx["step"]]), lender, market))
    return frames
