"""Customer decisions: applying for cards, spending on them and repaying them.

Random decisions take their uniforms as arguments (indexed by lender id where
a draw belongs to a card) so that the compiled engine kernel can replay the
exact same decisions from the same draws. Passing a ``numpy`` Generator
instead draws them on the spot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .instruments import COST_HORIZON, REPRESENTATIVE_BALANCE, CardOffer, CreditCard, cost_of, expected_cost
from .population import ANTI_AVALANCHE, AVALANCHE, STRATEGY_NAMES, CustomerAttributes

COMFORT_LIMIT = 0.30
WEIGHT_INTEREST_RATE, WEIGHT_CREDIT_LIMIT = 0, 1
MAX_CONSECUTIVE_MISSES = 3


@dataclass(frozen=True)
class BehaviouralParams:
    """Calibrated behavioural parameters shared by every customer."""

    rho: float = 5.0
    lambda_tend: float = 0.001
    lambda_0: float = 0.08
    lambda_r: float = 0.007
    lambda_: float = 3.0
    theta_offer: float = 4.0e-5
    theta_tend: float = 1.8
    eta_tend: float = 0.024
    eta: float = 1700.0
    mu_i: float = 0.5
    mu_B: float = 0.9
    theta_lim: float = 2000.0
    p_miss: float = 0.0012

    def __post_init__(self):
        if not 0.0 <= self.lambda_0 <= 1.0:
            raise ValueError("lambda_0 must lie in [0, 1]")
        if not 0.0 <= self.p_miss <= 1.0:
            raise ValueError("p_miss must lie in [0, 1]")
        for name in ("lambda_tend", "lambda_r", "lambda_", "theta_offer", "theta_tend",
                     "eta_tend", "mu_i", "mu_B", "theta_lim"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in self.names()}

    @classmethod
    def from_dict(cls, d) -> "BehaviouralParams":
        known = set(cls.names())
        return cls(**{k: float(v) for k, v in d.items() if k in known})


@dataclass
class CustomerAgent:
    id: int
    attributes: CustomerAttributes
    cards: list[CreditCard] = field(default_factory=list)
    comfort_limit: float = COMFORT_LIMIT

    @property
    def open_cards(self) -> list[CreditCard]:
        return [c for c in self.cards if not c.defaulted]

    def holds(self, lender_id: int) -> bool:
        return any(c.lender_id == lender_id for c in self.cards)


@dataclass(frozen=True)
class Payment:
    lender_id: int
    amount: float
    missed: bool
    first_miss: bool
    defaulted: bool


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def prob_apply_first(X: float, I: float, params: BehaviouralParams) -> float:
    return max(sigmoid(params.lambda_tend * (X - I)), params.lambda_0)


def _min_offer_cost(offers, rep: float, horizon: int) -> float:
    if not offers:
        raise ValueError("no card offers available")
    return min(expected_cost(o, 0, rep, horizon) for o in offers)


def prob_apply_additional(
    customer: CustomerAgent,
    offers,
    current_time: int,
    params: BehaviouralParams,
    representative_balance: float = REPRESENTATIVE_BALANCE,
    horizon: int = COST_HORIZON,
) -> float:
    best = _min_offer_cost(offers, representative_balance, horizon)
    cards = customer.open_cards
    util = 0.0
    own = 0.0
    for c in cards:
        util += c.balance / c.credit_limit
        own += expected_cost(c, current_time, representative_balance, horizon)
    n = len(cards)
    U = params.lambda_ * (util / n)
    O = params.theta_offer * (own / n - best)
    return sigmoid(U + O - params.rho)


def prob_rational(
    customer: CustomerAgent,
    offers,
    current_time: int,
    params: BehaviouralParams,
    representative_balance: float = REPRESENTATIVE_BALANCE,
    horizon: int = COST_HORIZON,
    benchmark_apr: float = 0.20,
) -> float:
    """Chance of applying to the cheapest offer rather than one at random.

    A customer without cards compares against a plain card at ``benchmark_apr``.
    """
    best = _min_offer_cost(offers, representative_balance, horizon)
    cards = customer.open_cards
    if cards:
        worst = max(expected_cost(c, current_time, representative_balance, horizon) for c in cards)
    else:
        worst = cost_of(benchmark_apr, 0, representative_balance, horizon)
    return sigmoid(params.lambda_r * (worst - best))


def eligible_offers(customer: CustomerAgent, offers) -> list[CardOffer]:
    return sorted((o for o in offers if not customer.holds(o.lender_id)), key=lambda o: o.lender_id)


def choose_application_target(
    customer: CustomerAgent,
    offers,
    rng: np.random.Generator | None,
    params: BehaviouralParams,
    current_time: int = 0,
    *,
    u_rational: float | None = None,
    u_pick: float | None = None,
    representative_balance: float = REPRESENTATIVE_BALANCE,
    horizon: int = COST_HORIZON,
    benchmark_apr: float = 0.20,
) -> tuple[int | None, bool]:
    """Return ``(lender_id, rational)``; ``(None, False)`` when nothing is eligible."""
    pool = eligible_offers(customer, offers)
    if not pool:
        return None, False
    if u_rational is None:
        u_rational, u_pick = rng.random(2)
    p_r = prob_rational(customer, pool, current_time, params, representative_balance, horizon, benchmark_apr)
    rational = u_rational < p_r
    if rational:
        costs = [expected_cost(o, 0, representative_balance, horizon) for o in pool]
        best = min(costs)
        pool = [o for o, c in zip(pool, costs) if c == best]
    k = min(int(u_pick * len(pool)), len(pool) - 1)
    return pool[k].lender_id, rational


def usage_amount(customer: CustomerAgent, params: BehaviouralParams) -> float:
    sum_b = 0.0
    sum_l = 0.0
    for c in customer.open_cards:
        sum_b += c.balance
        sum_l += c.credit_limit
    if sum_l <= 0.0:
        return 0.0
    raw = params.theta_tend * customer.attributes.creditable_expenditure / 12.0 - params.theta_lim * (sum_b / sum_l)
    headroom = sum_l - sum_b
    if headroom < 0.0:
        headroom = 0.0
    if raw < 0.0:
        raw = 0.0
    return raw if raw < headroom else headroom


def usage_weight(card: CreditCard, current_time: int, params: BehaviouralParams,
                 mode: int = WEIGHT_INTEREST_RATE) -> float:
    if mode == WEIGHT_CREDIT_LIMIT:
        return params.mu_i * card.credit_limit + params.mu_B * card.balance
    return params.mu_i * (card.effective_apr(current_time) * 100.0) + params.mu_B * card.balance


def card_usage_order(customer: CustomerAgent, params: BehaviouralParams, current_time: int = 0,
                     mode: int = WEIGHT_INTEREST_RATE) -> list[CreditCard]:
    """Open cards, cheapest-to-use first; ties go to the older card, then lower lender id."""
    return sorted(
        customer.open_cards,
        key=lambda c: (usage_weight(c, current_time, params, mode), c.opened_at, c.lender_id),
    )


def spend(customer: CustomerAgent, amount: float, params: BehaviouralParams, current_time: int = 0,
          mode: int = WEIGHT_INTEREST_RATE) -> dict[int, float]:
    """Spread ``amount`` over the cards: up to the comfort limit first, then up to the limit."""
    order = card_usage_order(customer, params, current_time, mode)
    alloc = {c.lender_id: 0.0 for c in order}
    remaining = amount
    for cap in (customer.comfort_limit, 1.0):
        for c in order:
            if remaining <= 0.0:
                break
            room = cap * c.credit_limit - c.balance
            if room > 0.0:
                a = room if room < remaining else remaining
                c.balance += a
                c.purchases += a
                remaining -= a
                alloc[c.lender_id] += a
    return alloc


def repayment_budget(S: float, params: BehaviouralParams) -> float:
    return params.eta_tend * S + params.eta


def repayment_order(customer: CustomerAgent, current_time: int, shuffle_keys=None) -> list[CreditCard]:
    cards = customer.open_cards
    strategy = STRATEGY_NAMES.index(customer.attributes.repayment_strategy)
    if strategy == AVALANCHE:
        return sorted(cards, key=lambda c: (-c.effective_apr(current_time), c.opened_at, c.lender_id))
    if strategy == ANTI_AVALANCHE:
        return sorted(cards, key=lambda c: (c.effective_apr(current_time), c.opened_at, c.lender_id))
    return sorted(cards, key=lambda c: (shuffle_keys[c.lender_id], c.lender_id))


def repay(
    customer: CustomerAgent,
    budget: float,
    rng: np.random.Generator | None,
    params: BehaviouralParams,
    current_time: int = 0,
    *,
    shuffle_keys=None,
    miss_draws=None,
) -> list[Payment]:
    """Pay minimums, then balances, in strategy order; update miss/default state.

    Each card gets one miss draw per step in the minimum-payment pass. A
    card skipped there can still be paid in the balance pass, in which case
    no missed payment is recorded.
    """
    if shuffle_keys is None or miss_draws is None:
        width = max((c.lender_id for c in customer.cards), default=-1) + 1
        shuffle_keys = rng.random(width)
        miss_draws = rng.random(width)
    order = repayment_order(customer, current_time, shuffle_keys)
    paid = {c.lender_id: 0.0 for c in order}

    for c in order:
        if miss_draws[c.lender_id] > params.p_miss:
            pay = c.min_payment_due
            if budget < pay:
                pay = budget
            if c.balance < pay:
                pay = c.balance
            c.balance -= pay
            budget -= pay
            paid[c.lender_id] += pay
    for c in order:
        pay = budget if budget < c.balance else c.balance
        c.balance -= pay
        budget -= pay
        paid[c.lender_id] += pay

    records = []
    for c in sorted(order, key=lambda c: c.lender_id):
        amount = paid[c.lender_id]
        c.last_payment_made = amount
        missed = c.min_payment_due > 0.0 and amount < c.min_payment_due
        first = False
        newly_defaulted = False
        if missed:
            c.consecutive_missed += 1
            first = not c.ever_missed
            c.ever_missed = True
            if c.consecutive_missed >= MAX_CONSECUTIVE_MISSES:
                c.defaulted = True
                newly_defaulted = True
        else:
            c.consecutive_missed = 0
        records.append(Payment(c.lender_id, amount, missed, first, newly_defaulted))
    return records
