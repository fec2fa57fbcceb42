"""Simulation loop: initialisation, the per-step customer/lender sequence,
population turnover and metric collection.

State is held column-wise: one row per customer and one card slot per
lender (a customer can hold at most one card with each lender), so
``balance[j, l]`` is customer ``j``'s balance with lender ``l``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..behaviour import CustomerAgent
from ..config import WEIGHT_MODES, MarketConfig
from ..instruments import CreditCard
from ..lender import LenderAgent, current_offer
from ..population import STRATEGY_NAMES, CustomerAttributes, DemographicTables, load_tables, sample_population
from .kernel import MAX_LENDERS, get_kernel, pack_params

NONE, OPEN, DEFAULTED = 0, 1, 2

CUSTOMER_COLUMNS = {
    "id": np.int64,
    "age": np.int64,
    "gross_income": np.float64,
    "net_income": np.float64,
    "total_expenditure": np.float64,
    "creditable_expenditure": np.float64,
    "credit_score": np.float64,
    "strategy": np.int8,
}
CARD_COLUMNS = {
    "state": np.int8,
    "limit": np.float64,
    "apr": np.float64,
    "opened": np.int32,
    "duration": np.int32,
    "balance": np.float64,
    "min_due": np.float64,
    "paid": np.float64,
    "consec": np.int8,
    "ever_missed": np.uint8,
    "missed_now": np.uint8,
    "defaulted_now": np.uint8,
    "spent": np.float64,
    "interest_now": np.float64,
}
_PER_STEP = ("paid", "spent", "missed_now", "defaulted_now", "interest_now")

LENDER_FIELDS = (
    "interest_income", "fee_income", "writeoffs", "cumulative_profit", "discounted_profit",
    "open_accounts", "market_share", "accepted_applications",
    "applications", "rational_applications", "cumulative_interest", "discounted_interest",
    "fee_count", "interest_accounts", "post_promo_accounts", "spend", "payments", "balance",
    "credit_limit", "accounts_opened", "accounts_missed", "defaults", "exit_repayments",
)
MARKET_FIELDS = ("n_customers", "customers_with_card", "open_cards_total")
CSV_COLUMNS = ("step", "lender_id") + LENDER_FIELDS + MARKET_FIELDS


@dataclass
class MetricsFrame:
    """Market snapshot after step ``step``: per-lender arrays and market scalars."""

    step: int
    lender: dict[str, np.ndarray]
    market: dict[str, float]

    def total(self, name: str) -> float:
        return float(np.sum(self.lender[name]))


@dataclass
class MarketState:
    config: MarketConfig
    tables: DemographicTables
    lenders: list[LenderAgent]
    customers: dict[str, np.ndarray]
    cards: dict[str, np.ndarray]
    rng_behaviour: np.random.Generator
    rng_turnover: np.random.Generator
    kernel: object
    t: int = 0
    next_id: int = 0
    entrant_acc: float = 0.0
    accounts_opened: np.ndarray = None
    accounts_missed: np.ndarray = None
    cum_profit: np.ndarray = None
    cum_interest: np.ndarray = None
    dpr_net: np.ndarray = None
    dpr_interest: np.ndarray = None
    frames: list[MetricsFrame] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.customers["id"])

    @property
    def n_lenders(self) -> int:
        return len(self.lenders)

    def customer(self, j: int) -> CustomerAgent:
        """Object view of row ``j`` (a copy; mutating it does not change the state)."""
        c = self.customers
        attrs = CustomerAttributes(
            age=int(c["age"][j]), gross_income=float(c["gross_income"][j]),
            net_income=float(c["net_income"][j]), total_expenditure=float(c["total_expenditure"][j]),
            creditable_expenditure=float(c["creditable_expenditure"][j]),
            credit_score=int(c["credit_score"][j]), repayment_strategy=STRATEGY_NAMES[int(c["strategy"][j])],
        )
        cards = []
        k = self.cards
        for l in range(self.n_lenders):
            if k["state"][j, l] != NONE:
                cards.append(CreditCard(
                    lender_id=l, owner_id=int(c["id"][j]), credit_limit=float(k["limit"][j, l]),
                    retail_apr=float(k["apr"][j, l]), interest_free_duration=int(k["duration"][j, l]),
                    opened_at=int(k["opened"][j, l]), balance=float(k["balance"][j, l]),
                    min_payment_due=float(k["min_due"][j, l]), last_payment_made=float(k["paid"][j, l]),
                    consecutive_missed=int(k["consec"][j, l]), defaulted=k["state"][j, l] == DEFAULTED,
                    ever_missed=bool(k["ever_missed"][j, l]),
                ))
        return CustomerAgent(int(c["id"][j]), attrs, cards, self.config.comfort_limit)

    def customer_summary(self) -> dict[str, np.ndarray]:
        """Per-customer totals over open cards, for cross-sectional checks."""
        open_ = self.cards["state"] == OPEN
        return {
            "net_income": self.customers["net_income"].copy(),
            "total_expenditure": self.customers["total_expenditure"].copy(),
            "creditable_expenditure": self.customers["creditable_expenditure"].copy(),
            "total_balance": np.where(open_, self.cards["balance"], 0.0).sum(axis=1),
            "total_limit": np.where(open_, self.cards["limit"], 0.0).sum(axis=1),
            "n_open": open_.sum(axis=1),
        }


def _empty_cards(n: int, k: int) -> dict[str, np.ndarray]:
    return {name: np.zeros((n, k), dtype=dt) for name, dt in CARD_COLUMNS.items()}


def _new_customers(tables, rng, n, first_id, config, fixed_age=None) -> dict[str, np.ndarray]:
    cols = sample_population(tables, rng, n, fixed_age=fixed_age, strategy_mix=config.strategy_mix)
    out = {"id": np.arange(first_id, first_id + n, dtype=np.int64)}
    for name, dt in CUSTOMER_COLUMNS.items():
        if name != "id":
            out[name] = np.ascontiguousarray(cols[name], dtype=dt)
    return out


def initialize(config: MarketConfig, tables: DemographicTables | None = None,
               backend: str | None = None) -> MarketState:
    """Build the initial market: sampled customers holding no cards, fresh lenders.

    The master seed is split into three independent streams: initial
    population, per-step behaviour, and population turnover.
    """
    config.validate()
    if len(config.lenders) > MAX_LENDERS:
        raise ValueError(f"at most {MAX_LENDERS} lenders are supported")
    tables = tables if tables is not None else load_tables(config.tables)
    pop_ss, beh_ss, turn_ss = np.random.SeedSequence(config.seed).spawn(3)
    k = len(config.lenders)
    customers = _new_customers(tables, np.random.default_rng(pop_ss), config.n_customers, 0, config)
    zeros_f = lambda: np.zeros(k)
    return MarketState(
        config=config,
        tables=tables,
        lenders=[l.to_agent() for l in config.lenders],
        customers=customers,
        cards=_empty_cards(config.n_customers, k),
        rng_behaviour=np.random.default_rng(beh_ss),
        rng_turnover=np.random.default_rng(turn_ss),
        kernel=get_kernel(backend),
        next_id=config.n_customers,
        accounts_opened=np.zeros(k, dtype=np.int64),
        accounts_missed=np.zeros(k, dtype=np.int64),
        cum_profit=zeros_f(),
        cum_interest=zeros_f(),
        dpr_net=zeros_f(),
        dpr_interest=zeros_f(),
    )


def _billing(state: MarketState) -> dict[str, np.ndarray]:
    """Lender billing cycle for every card, vectorised over customers.

    Same per-card sequence as :func:`promosim.lender.billing_cycle`: late fee,
    interest on the fee-inclusive balance less this step's purchases,
    statement; write-off on default.
    """
    t = state.t
    k = state.cards
    fee = np.array([l.late_fee for l in state.lenders])
    frac = np.array([l.min_payment_fraction for l in state.lenders])

    open_ = k["state"] == OPEN
    late = open_ & (k["missed_now"] == 1)
    k["balance"] += np.where(late, fee[None, :], 0.0)

    charged = open_ & (t >= k["opened"] + k["duration"])
    interest = np.where(charged, np.maximum(k["balance"] - k["spent"], 0.0) * (k["apr"] / 12.0), 0.0)
    k["balance"] += interest
    k["interest_now"] = interest
    k["min_due"] = np.where(open_, frac[None, :] * k["balance"], k["min_due"])

    writeoffs = np.where(k["defaulted_now"] == 1, k["balance"], 0.0).sum(axis=0)
    return {
        "interest_income": interest.sum(axis=0),
        "fee_income": late.sum(axis=0) * fee,
        "fee_count": late.sum(axis=0),
        "writeoffs": writeoffs,
        "interest_accounts": (interest > 0.0).sum(axis=0),
        "post_promo_accounts": charged.sum(axis=0),
    }


def _turnover(state: MarketState) -> np.ndarray:
    """Replace a fraction of customers by age-``entrant_age`` entrants.

    Returns balances repaid by leaving customers, per lender.
    """
    cfg = state.config
    n_lenders = state.n_lenders
    state.entrant_acc += cfg.entrant_rate * state.n
    count = int(np.floor(state.entrant_acc))
    state.entrant_acc -= count
    exits = np.zeros(n_lenders)
    if count == 0:
        return exits
    leave = np.sort(state.rng_turnover.choice(state.n, size=count, replace=False))
    k = state.cards
    exits = np.where(k["state"][leave] == OPEN, k["balance"][leave], 0.0).sum(axis=0)
    keep = np.ones(state.n, dtype=bool)
    keep[leave] = False
    new = _new_customers(state.tables, state.rng_turnover, count, state.next_id, cfg, fixed_age=cfg.entrant_age)
    state.next_id += count
    for name in state.customers:
        state.customers[name] = np.ascontiguousarray(np.concatenate([state.customers[name][keep], new[name]]))
    fresh = _empty_cards(count, n_lenders)
    for name in k:
        k[name] = np.ascontiguousarray(np.concatenate([k[name][keep], fresh[name]]))
    return exits


def step(state: MarketState) -> MetricsFrame:
    """Advance one month: customers act (id order), then lenders bill, then turnover."""
    cfg = state.config
    if state.t >= cfg.T:
        raise RuntimeError("simulation already reached T")
    t = state.t
    n_lenders = state.n_lenders
    k = state.cards
    for name in _PER_STEP:
        k[name][:] = 0

    offers = [current_offer(l, t) for l in state.lenders]
    offer_dur = np.array([-1 if o is None else o.interest_free_duration for o in offers], dtype=np.int32)
    offer_apr = np.array([l.retail_apr for l in state.lenders])
    params = pack_params(cfg.behaviour, cfg.representative_balance, cfg.cost_horizon, cfg.comfort_limit,
                         cfg.benchmark_apr, WEIGHT_MODES[cfg.usage_weight_mode], cfg.card_cap)
    uniforms = state.rng_behaviour.random((state.n, 2 * n_lenders + 3))
    counts = np.zeros((n_lenders, 5), dtype=np.int64)
    c = state.customers
    state.kernel(
        t, c["net_income"], c["total_expenditure"], c["creditable_expenditure"], c["credit_score"],
        c["strategy"], k["state"], k["limit"], k["apr"], k["opened"], k["duration"], k["balance"],
        k["min_due"], k["paid"], k["consec"], k["ever_missed"], k["missed_now"], k["defaulted_now"],
        k["spent"], uniforms, offer_dur, offer_apr,
        np.array([l.min_income for l in state.lenders]), np.array([l.min_score for l in state.lenders]),
        np.array([l.limit_scale for l in state.lenders]), np.array([l.limit_growth for l in state.lenders]),
        params, counts,
    )

    bill = _billing(state)
    for l, lender in enumerate(state.lenders):
        lender.ledger.append(float(bill["interest_income"][l]), float(bill["fee_income"][l]),
                             float(bill["writeoffs"][l]))

    state.accounts_opened += counts[:, 2]
    state.accounts_missed += counts[:, 3]
    net = bill["interest_income"] + bill["fee_income"] - bill["writeoffs"]
    disc = (1.0 + cfg.discount_rate / 12.0) ** -float(t)
    state.cum_profit += net
    state.cum_interest += bill["interest_income"]
    state.dpr_net += net * disc
    state.dpr_interest += bill["interest_income"] * disc

    open_ = k["state"] == OPEN
    open_accounts = open_.sum(axis=0)
    total_open = int(open_accounts.sum())
    lender = dict(bill)
    lender.update(
        cumulative_profit=state.cum_profit.copy(),
        cumulative_interest=state.cum_interest.copy(),
        discounted_profit=state.dpr_net.copy(),
        discounted_interest=state.dpr_interest.copy(),
        open_accounts=open_accounts,
        market_share=open_accounts / total_open if total_open else np.zeros(n_lenders),
        applications=counts[:, 0].copy(),
        rational_applications=counts[:, 1].copy(),
        accepted_applications=counts[:, 2].copy(),
        defaults=counts[:, 4].copy(),
        accounts_opened=state.accounts_opened.copy(),
        accounts_missed=state.accounts_missed.copy(),
        spend=k["spent"].sum(axis=0),
        payments=k["paid"].sum(axis=0),
        balance=np.where(open_, k["balance"], 0.0).sum(axis=0),
        credit_limit=np.where(open_, k["limit"], 0.0).sum(axis=0),
    )
    market = {
        "n_customers": state.n,
        "customers_with_card": int(open_.any(axis=1).sum()),
        "open_cards_total": total_open,
    }

    lender["exit_repayments"] = _turnover(state)
    frame = MetricsFrame(t, lender, market)
    state.frames.append(frame)
    state.t += 1
    return frame


@dataclass
class RunResult:
    frames: list[MetricsFrame]
    state: MarketState


def run(config: MarketConfig, tables: DemographicTables | None = None, backend: str | None = None) -> RunResult:
    state = initialize(config, tables, backend)
    while state.t < config.T:
        step(state)
    return RunResult(state.frames, state)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def parse_value(text: str):
    """Inverse of the CSV number format: integers stay integers."""
    try:
        return int(text)
    except ValueError:
        return float(text)


def _column(values) -> np.ndarray:
    vals = [parse_value(v) for v in values]
    return np.array(vals, dtype=np.int64 if all(isinstance(v, int) for v in vals) else float)


def frames_to_rows(frames: list[MetricsFrame]) -> list[list[str]]:
    rows = []
    for f in frames:
        for l in range(len(f.lender["open_accounts"])):
            row = [str(f.step), str(l)]
            row += [_fmt(f.lender[name][l]) for name in LENDER_FIELDS]
            row += [_fmt(f.market[name]) for name in MARKET_FIELDS]
            rows.append(row)
    return rows


def write_metrics_csv(frames: list[MetricsFrame], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(frames_to_rows(frames))
    return path


def read_metrics_csv(path: str | Path) -> list[MetricsFrame]:
    """Inverse of :func:`write_metrics_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    by_step: dict[int, list[dict]] = {}
    for r in rows:
        by_step.setdefault(int(r["step"]), []).append(r)
    frames = []
    for s in sorted(by_step):
        rs = sorted(by_step[s], key=lambda r: int(r["lender_id"]))
        lender = {name: _column([r[name] for r in rs]) for name in LENDER_FIELDS}
        market = {name: parse_value(rs[0][name]) for name in MARKET_FIELDS}
        frames.append(MetricsFrame(s, lender, market))
    return frames
