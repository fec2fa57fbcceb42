"""Market configuration and its JSON representation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .behaviour import WEIGHT_CREDIT_LIMIT, WEIGHT_INTEREST_RATE, BehaviouralParams
from .instruments import PromotionStrategy
from .lender import LenderAgent
from .population import DEFAULT_STRATEGY_MIX

WEIGHT_MODES = {"interest_rate": WEIGHT_INTEREST_RATE, "credit_limit": WEIGHT_CREDIT_LIMIT}

# symbol names of the behavioural parameters, written next to them in config files
SYMBOLS = {
    "rho": "ρ  application constant",
    "lambda_tend": "λ_tend  application tendency",
    "lambda_0": "λ₀  application minimum probability",
    "lambda_r": "λ_r  application rationality",
    "lambda_": "λ  application limit weighting",
    "theta_offer": "θ_offer  better offer weighting",
    "theta_tend": "θ_tend  usage tendency",
    "eta_tend": "η_tend  repayment tendency",
    "eta": "η  repayment constant (GBP)",
    "mu_i": "μ_i  interest rate payment weighting",
    "mu_B": "μ_B  balance payment weighting",
    "theta_lim": "θ_lim  credit limit weighting (GBP)",
    "p_miss": "P_miss  missing min. payment probability",
    "retail_apr": "i  retail APR",
    "late_fee": "late payment fee (GBP)",
    "min_payment_fraction": "percentage of balance for minimum payment",
    "limit_scale": "A  linear scalar of credit limit offered (GBP)",
    "limit_growth": "B  growth rate of credit limit offered (GBP)",
    "strategy_mix": "avalanche / anti-avalanche / random repayment fractions",
}


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class LenderConfig:
    id: int
    min_income: float = 7500.0
    min_score: float = 600.0
    limit_scale: float = 6000.0
    limit_growth: float = 6000.0
    retail_apr: float = 0.20
    late_fee: float = 12.0
    min_payment_fraction: float = 0.025
    promotion: PromotionStrategy | None = None
    launch_step: int = 0

    def to_agent(self) -> LenderAgent:
        return LenderAgent(
            id=self.id, min_income=self.min_income, min_score=self.min_score,
            limit_scale=self.limit_scale, limit_growth=self.limit_growth, retail_apr=self.retail_apr,
            promotion=self.promotion, late_fee=self.late_fee,
            min_payment_fraction=self.min_payment_fraction, launch_step=self.launch_step,
        )

    def with_promotion(self, duration: int, start: int, end: int) -> "LenderConfig":
        promo = PromotionStrategy(duration, start, end) if duration > 0 else None
        return replace(self, promotion=promo)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["promotion"] = asdict(self.promotion) if self.promotion is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LenderConfig":
        d = dict(d)
        promo = d.pop("promotion", None)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown lender fields: {sorted(unknown)}")
        return cls(promotion=PromotionStrategy(**promo) if promo else None, **d)


def default_lenders(n: int = 3) -> tuple[LenderConfig, ...]:
    return tuple(LenderConfig(id=k) for k in range(n))


@dataclass(frozen=True)
class MarketConfig:
    name: str = "base"
    n_customers: int = 30000
    T: int = 120
    seed: int = 0
    lenders: tuple[LenderConfig, ...] = field(default_factory=default_lenders)
    entrant_rate: float = 0.00091
    entrant_age: int = 18
    discount_rate: float = 0.035
    behaviour: BehaviouralParams = field(default_factory=BehaviouralParams)
    max_cards: int | None = None
    tables: str | None = None
    representative_balance: float = 1200.0
    cost_horizon: int = 48
    comfort_limit: float = 0.30
    benchmark_apr: float = 0.20
    usage_weight_mode: str = "interest_rate"
    strategy_mix: tuple[float, float, float] = DEFAULT_STRATEGY_MIX

    def __post_init__(self):
        self.validate()

    @property
    def card_cap(self) -> int:
        return len(self.lenders) if self.max_cards is None else self.max_cards

    def validate(self) -> None:
        if self.n_customers <= 0:
            raise ConfigError("n_customers must be positive")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if not self.lenders:
            raise ConfigError("at least one lender is required")
        ids = [l.id for l in self.lenders]
        if ids != list(range(len(ids))):
            raise ConfigError("lender ids must be 0..n-1 in order")
        if not 0.0 <= self.entrant_rate < 1.0:
            raise ConfigError("entrant_rate must lie in [0, 1)")
        if self.max_cards is not None and not 0 < self.max_cards <= len(self.lenders):
            raise ConfigError("max_cards must lie in 1..number of lenders")
        if self.usage_weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"usage_weight_mode must be one of {sorted(WEIGHT_MODES)}")
        if abs(sum(self.strategy_mix) - 1.0) > 1e-9 or min(self.strategy_mix) < 0:
            raise ConfigError("strategy_mix must be non-negative and sum to 1")
        if not 0.0 < self.comfort_limit <= 1.0:
            raise ConfigError("comfort_limit must lie in (0, 1]")
        if self.discount_rate < 0:
            raise ConfigError("discount_rate must be non-negative")

    def with_lender(self, k: int, **changes) -> "MarketConfig":
        lenders = list(self.lenders)
        lenders[k] = replace(lenders[k], **changes)
        return replace(self, lenders=tuple(lenders))

    def with_promotion(self, k: int, duration: int, start: int = 24, end: int = 48) -> "MarketConfig":
        lenders = list(self.lenders)
        lenders[k] = lenders[k].with_promotion(duration, start, end)
        return replace(self, lenders=tuple(lenders))

    def to_dict(self) -> dict:
        d = {
            "name": self.name, "n_customers": self.n_customers, "T": self.T, "seed": self.seed,
            "entrant_rate": self.entrant_rate, "entrant_age": self.entrant_age,
            "discount_rate": self.discount_rate, "max_cards": self.max_cards, "tables": self.tables,
            "representative_balance": self.representative_balance, "cost_horizon": self.cost_horizon,
            "comfort_limit": self.comfort_limit, "benchmark_apr": self.benchmark_apr,
            "usage_weight_mode": self.usage_weight_mode, "strategy_mix": list(self.strategy_mix),
            "behaviour": self.behaviour.to_dict(),
            "lenders": [l.to_dict() for l in self.lenders],
        }
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "MarketConfig":
        d = {k: v for k, v in copy.deepcopy(d).items() if not k.startswith("_")}
        try:
            if "behaviour" in d:
                unknown = set(d["behaviour"]) - set(BehaviouralParams.names())
                if unknown:
                    raise ConfigError(f"unknown behavioural parameters: {sorted(unknown)}")
                d["behaviour"] = BehaviouralParams.from_dict(d["behaviour"])
            if "lenders" in d:
                d["lenders"] = tuple(LenderConfig.from_dict(l) for l in d["lenders"])
            if "strategy_mix" in d:
                d["strategy_mix"] = tuple(float(x) for x in d["strategy_mix"])
            if d.get("tables") and base_dir is not None and not Path(d["tables"]).is_absolute():
                d["tables"] = str((base_dir / d["tables"]).resolve())
            unknown = set(d) - set(cls.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown config fields: {sorted(unknown)}")
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_json(self, annotate: bool = True) -> str:
        d = self.to_dict()
        if annotate:
            d = {"_symbols": SYMBOLS, **d}
        return json.dumps(d, indent=2, ensure_ascii=False)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str | Path) -> MarketConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "market" in raw:
        raw = raw["market"]
    return MarketConfig.from_dict(raw, base_dir=path.parent)


def save_config(config: MarketConfig, path: str | Path) -> None:
    Path(path).write_text(config.to_json() + "\n", encoding="utf-8")
