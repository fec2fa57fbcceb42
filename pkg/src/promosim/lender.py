"""Lender agents: underwriting, credit limits, billing and profit accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instruments import CardOffer, CardStateError, CreditCard, PromotionStrategy, charge_interest, statement
from .population import CustomerAttributes

DISCOUNT_RATE = 0.035


@dataclass
class ProfitLedger:
    interest_income: list[float] = field(default_factory=list)
    fee_income: list[float] = field(default_factory=list)
    writeoffs: list[float] = field(default_factory=list)

    def append(self, interest: float, fees: float, writeoffs: float) -> None:
        if writeoffs < 0:
            raise ValueError("writeoffs must be non-negative")
        self.interest_income.append(interest)
        self.fee_income.append(fees)
        self.writeoffs.append(writeoffs)

    def net(self) -> np.ndarray:
        return np.asarray(self.interest_income) + np.asarray(self.fee_income) - np.asarray(self.writeoffs)

    def cumulative_profit(self) -> np.ndarray:
        return np.cumsum(self.net())


@dataclass
class LenderAgent:
    id: int
    min_income: float = 7500.0
    min_score: float = 600.0
    limit_scale: float = 6000.0
    limit_growth: float = 6000.0
    retail_apr: float = 0.20
    promotion: PromotionStrategy | None = None
    late_fee: float = 12.0
    min_payment_fraction: float = 0.025
    # step from which the lender offers cards at all
    launch_step: int = 0
    ledger: ProfitLedger = field(default_factory=ProfitLedger)

    def __post_init__(self):
        if self.limit_scale <= 0 or self.limit_growth <= 0:
            raise ValueError("credit limit parameters must be positive")
        if self.late_fee < 0:
            raise ValueError("late_fee must be non-negative")
        if not 0.0 < self.min_payment_fraction < 1.0:
            raise ValueError("min_payment_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class BillingDeltas:
    interest: float
    fees: float
    writeoffs: float
    fee_count: int
    interest_accounts: int


def underwrite(applicant: CustomerAttributes, lender: LenderAgent) -> bool:
    return applicant.net_income > lender.min_income and applicant.credit_score > lender.min_score


def assign_credit_limit(I: float, lender: LenderAgent) -> float:
    """Limit grows with the log of income: ``A * ln(I / B)``."""
    return lender.limit_scale * math.log(I / lender.limit_growth)


def current_offer(lender: LenderAgent, t: int) -> CardOffer | None:
    """The card a new applicant would get at step ``t`` (``None`` before launch)."""
    if t < lender.launch_step:
        return None
    promo = lender.promotion
    duration = promo.interest_free_duration if promo is not None and promo.active(t) else 0
    return CardOffer(lender.id, lender.retail_apr, duration)


def billing_cycle(lender: LenderAgent, cards, t: int, written_off: set | None = None) -> BillingDeltas:
    """Run one billing cycle over ``lender``'s cards and append it to the ledger.

    Per card, in order: late fee if last payment fell short of the minimum,
    interest on the fee-inclusive balance, then the new statement. A card
    that defaulted this step is written off instead. ``written_off`` tracks
    cards already written off (by ``id``) so each is counted once.
    """
    written_off = set() if written_off is None else written_off
    interest = fees = losses = 0.0
    n_fees = n_interest = 0
    for card in cards:
        if card.lender_id != lender.id:
            raise CardStateError(f"card belongs to lender {card.lender_id}, not {lender.id}")
        if card.defaulted:
            if id(card) not in written_off:
                losses += card.balance
                written_off.add(id(card))
            continue
        if card.min_payment_due > 0.0 and card.last_payment_made < card.min_payment_due:
            card.balance += lender.late_fee
            fees += lender.late_fee
            n_fees += 1
        charged = charge_interest(card, t)
        if charged > 0.0:
            n_interest += 1
        interest += charged
        statement(card, lender.min_payment_fraction)
    lender.ledger.append(interest, fees, losses)
    return BillingDeltas(interest, fees, losses, n_fees, n_interest)


def discount_factors(n_steps: int, r_annual: float = DISCOUNT_RATE) -> np.ndarray:
    return (1.0 + r_annual / 12.0) ** -np.arange(n_steps, dtype=float)


def discounted_series(per_step: np.ndarray, r_annual: float = DISCOUNT_RATE) -> np.ndarray:
    """Running discounted sum of a per-step profit series."""
    per_step = np.asarray(per_step, dtype=float)
    if r_annual < 0:
        raise ValueError("discount rate must be non-negative")
    return np.cumsum(per_step * discount_factors(len(per_step), r_annual))


def discounted_profit(ledger: ProfitLedger, t: int, r_annual: float = DISCOUNT_RATE,
                      interest_only: bool = False) -> float:
    """Discounted profit accrued up to and including step ``t``.

    ``interest_only`` discounts gross interest income instead of net profit.
    """
    series = np.asarray(ledger.interest_income) if interest_only else ledger.net()
    return float(discounted_series(series[: t + 1], r_annual)[-1]) if t >= 0 else 0.0
