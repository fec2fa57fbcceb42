"""Market moments, the MAPE objective and simulated-moments parameter search."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, astuple, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .behaviour import BehaviouralParams
from .config import ConfigError, MarketConfig

DEFAULT_WINDOW = 12


@dataclass(frozen=True)
class MomentSet:
    avg_monthly_account_spend: float
    avg_account_balance: float
    payments_to_balance_ratio: float
    prop_adults_with_cards: float
    avg_cards_per_adult: float
    prop_paying_interest: float
    prop_accounts_missed: float
    prop_rational_applications: float

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "MomentSet":
        values = [float(v) for v in values]
        if len(values) != len(cls.names()):
            raise ValueError(f"expected {len(cls.names())} moment values, got {len(values)}")
        return cls(*values)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MomentSet":
        return cls(**{n: float(d[n]) for n in cls.names()})


TARGETS = MomentSet(655.0, 1720.0, 0.32, 0.62, 1.14, 0.36, 0.015, 0.60)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_moments(frames, window: int = DEFAULT_WINDOW) -> MomentSet:
    """Average the eight market moments over the final ``window`` frames.

    Flow moments (spend, payments, interest) use each step's own values;
    missed-payment and rational-choice proportions use cumulative counts
    up to each step. A ratio with an empty denominator counts as 0.
    """
    if not frames:
        raise ValueError("no frames")
    if not 0 < window <= len(frames):
        raise ValueError(f"window must lie in 1..{len(frames)}")
    apps = np.cumsum([f.total("applications") for f in frames])
    rational = np.cumsum([f.total("rational_applications") for f in frames])
    rows = []
    for i in range(len(frames) - window, len(frames)):
        f = frames[i]
        n_open = f.total("open_accounts")
        balance = f.total("balance")
        n = f.market["n_customers"]
        rows.append((
            _ratio(f.total("spend"), n_open),
            _ratio(balance, n_open),
            _ratio(f.total("payments"), balance),
            _ratio(f.market["customers_with_card"], n),
            _ratio(f.market["open_cards_total"], n),
            _ratio(f.total("interest_accounts"), f.total("post_promo_accounts")),
            _ratio(f.total("accounts_missed"), f.total("accounts_opened")),
            _ratio(rational[i], apps[i]),
        ))
    return MomentSet.from_array(np.mean(rows, axis=0))


def mape(simulated: MomentSet, target: MomentSet = TARGETS) -> float:
    """Mean absolute percentage error across the moment components."""
    sim = simulated.as_array() if isinstance(simulated, MomentSet) else np.asarray(simulated, dtype=float)
    tgt = target.as_array() if isinstance(target, MomentSet) else np.asarray(target, dtype=float)
    if np.any(tgt == 0):
        raise ValueError("target components must be non-zero")
    return float(np.mean(np.abs(sim - tgt) / np.abs(tgt)) * 100.0)


# ---------------------------------------------------------------------------
# parameter search


@dataclass(frozen=True)
class CalibrationSpec:
    """Search ranges per behavioural parameter plus the trial set-up.

    Parameters absent from ``ranges`` stay at their ``base`` values.
    """

    ranges: dict[str, tuple[float, float]]
    target: MomentSet = TARGETS
    n_agents: int = 5000
    T: int = 120
    seeds: tuple[int, ...] = (0,)
    budget: int = 50
    window: int = DEFAULT_WINDOW
    search_seed: int = 0
    base: MarketConfig = field(default_factory=lambda: MarketConfig(name="calibration").with_promotion(0, 12, 24, 48))

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        known = set(BehaviouralParams.names())
        for name, (lo, hi) in self.ranges.items():
            if name not in known:
                raise ConfigError(f"unknown parameter {name!r} in ranges")
            if not lo <= hi:
                raise ConfigError(f"empty range for {name}: [{lo}, {hi}]")
        if self.window > self.T:
            raise ConfigError("window must not exceed T")

    def to_dict(self) -> dict:
        return {
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "target": self.target.to_dict(),
            "n_agents": self.n_agents, "T": self.T, "seeds": list(self.seeds),
            "budget": self.budget, "window": self.window, "search_seed": self.search_seed,
            "base": self.base.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "CalibrationSpec":
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        try:
            kw = {
                "ranges": {k: (float(v[0]), float(v[1])) for k, v in d.pop("ranges").items()},
            }
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"calibration spec needs 'ranges' as name -> [lo, hi]: {exc}") from exc
        if "target" in d:
            kw["target"] = MomentSet.from_dict(d.pop("target"))
        if "base" in d:
            kw["base"] = MarketConfig.from_dict(d.pop("base"), base_dir)
        if "seeds" in d:
            kw["seeds"] = tuple(int(s) for s in d.pop("seeds"))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown calibration fields: {sorted(unknown)}")
        return cls(**kw, **d)


def load_spec(path: str | Path) -> CalibrationSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"spec file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return CalibrationSpec.from_dict(raw, base_dir=path.parent)


@dataclass
class Trial:
    trial_id: int
    params: dict[str, float]
    mape: float = math.nan
    seed_mapes: list[float] = field(default_factory=list)
    failed: bool = False
    error: str = ""


class SearchStrategy(Protocol):
    def propose(self, ranges: dict[str, tuple[float, float]], history: Sequence[Trial],
                rng: np.random.Generator) -> dict[str, float]: ...


class RandomSearch:
    """Independent uniform draws over the ranges."""

    def propose(self, ranges, history, rng):
        return {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()}


class AdaptiveSearch:
    """Uniform warm-up, then Gaussian perturbations of one of the best trials.

    The perturbation width shrinks as the number of completed trials grows,
    so later proposals concentrate around the best region found so far.
    """

    def __init__(self, n_startup: int = 10, top_fraction: float = 0.2, width: float = 0.25,
                 decay: float = 0.97):
        self.n_startup = n_startup
        self.top_fraction = top_fraction
        self.width = width
        self.decay = decay

    def propose(self, ranges, history, rng):
        done = [t for t in history if not t.failed]
        if len(done) < self.n_startup:
            return RandomSearch().propose(ranges, history, rng)
        done.sort(key=lambda t: (t.mape, t.trial_id))
        top = done[: max(1, int(math.ceil(self.top_fraction * len(done))))]
        centre = top[int(rng.integers(len(top)))].params
        scale = self.width * self.decay ** (len(done) - self.n_startup)
        out = {}
        for name, (lo, hi) in ranges.items():
            x = centre.get(name, 0.5 * (lo + hi)) + rng.normal(0.0, scale * (hi - lo))
            out[name] = float(min(max(x, lo), hi))
        return out


STRATEGIES = {"random": RandomSearch, "adaptive": AdaptiveSearch}


def simulation_objective(spec: CalibrationSpec, params: dict[str, float], seed: int) -> float:
    """MAPE of one simulation with ``params`` substituted into the base config."""
    from .engine.simulation import run

    behaviour = replace(spec.base.behaviour, **params)
    config = replace(spec.base, behaviour=behaviour, n_customers=spec.n_agents, T=spec.T, seed=seed)
    frames = run(config).frames
    return mape(compute_moments(frames, spec.window), spec.target)


def _evaluate(objective, spec, trial: Trial) -> Trial:
    try:
        trial.seed_mapes = [float(objective(spec, trial.params, s)) for s in spec.seeds]
        trial.mape = float(np.mean(trial.seed_mapes))
        if not math.isfinite(trial.mape):
            raise FloatingPointError("objective is not finite")
    except Exception as exc:  # a broken trial must not stop the search
        trial.failed = True
        trial.error = f"{type(exc).__name__}: {exc}"
        trial.mape = math.nan
    return trial


@dataclass
class CalibrationResult:
    best: Trial
    trials: list[Trial]

    @property
    def best_params(self) -> dict[str, float]:
        return dict(self.best.params)


def calibrate(spec: CalibrationSpec, search_strategy: str | SearchStrategy = "random", *,
              objective: Callable[[CalibrationSpec, dict, int], float] = simulation_objective,
              workers: int = 1, out_dir: str | Path | None = None) -> CalibrationResult:
    """Run ``spec.budget`` trials and return the best one with the full log.

    Proposals are made in rounds of ``workers`` trials, each round seeing the
    trials completed before it; with one worker the search is fully
    sequential. Every trial evaluates all ``spec.seeds`` and scores their
    mean MAPE.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    strategy = STRATEGIES[search_strategy]() if isinstance(search_strategy, str) else search_strategy
    rng = np.random.default_rng(spec.search_seed)
    trials: list[Trial] = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while len(trials) < spec.budget:
            batch = []
            for _ in range(min(workers, spec.budget - len(trials))):
                params = strategy.propose(spec.ranges, trials, rng)
                batch.append(Trial(len(trials) + len(batch), params))
            if pool is None:
                done = [_evaluate(objective, spec, t) for t in batch]
            else:
                done = list(pool.map(_evaluate, [objective] * len(batch), [spec] * len(batch), batch))
            trials.extend(done)
    finally:
        if pool is not None:
            pool.shutdown()
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise RuntimeError("every calibration trial failed; see the trial log")
    best = min(ok, key=lambda t: (t.mape, t.trial_id))
    result = CalibrationResult(best, trials)
    if out_dir is not None:
        write_trial_log(result, spec, out_dir)
    return result


def write_trial_log(result: CalibrationResult, spec: CalibrationSpec, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(spec.ranges)
    with open(out / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", *names, "mape", *[f"seed_{s}_mape" for s in spec.seeds], "status", "error"])
        for t in result.trials:
            seed_vals = t.seed_mapes if t.seed_mapes else [math.nan] * len(spec.seeds)
            w.writerow([t.trial_id, *[repr(t.params[n]) for n in names], repr(t.mape),
                        *[repr(v) for v in seed_vals], "failed" if t.failed else "ok", t.error])
    behaviour = replace(spec.base.behaviour, **result.best_params).to_dict()
    (out / "best_params.json").write_text(json.dumps(behaviour, indent=2) + "\n", encoding="utf-8")
    return out
