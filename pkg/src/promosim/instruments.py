"""Cards, offers and the interest arithmetic shared by customers and lenders."""

from __future__ import annotations

from dataclasses import dataclass

REPRESENTATIVE_BALANCE = 1200.0
COST_HORIZON = 48
# interest may carry a balance a little past the limit; beyond this something is wrong
LIMIT_OVERAGE_BOUND = 1.1


class CardStateError(RuntimeError):
    """Operation attempted on a card in a state that forbids it."""


@dataclass
class CreditCard:
    lender_id: int
    owner_id: int
    credit_limit: float
    retail_apr: float
    interest_free_duration: int
    opened_at: int
    balance: float = 0.0
    min_payment_due: float = 0.0
    last_payment_made: float = 0.0
    consecutive_missed: int = 0
    defaulted: bool = False
    ever_missed: bool = False
    # spend since the last statement; still inside its grace period
    purchases: float = 0.0

    def in_promotion(self, t: int) -> bool:
        return t < self.opened_at + self.interest_free_duration

    def remaining_interest_free(self, t: int) -> int:
        return max(0, self.opened_at + self.interest_free_duration - t)

    def effective_apr(self, t: int) -> float:
        return 0.0 if self.in_promotion(t) else self.retail_apr

    @property
    def headroom(self) -> float:
        return max(0.0, self.credit_limit - self.balance)


@dataclass(frozen=True)
class PromotionStrategy:
    interest_free_duration: int
    window_start: int
    window_end: int

    def __post_init__(self):
        if self.window_start > self.window_end:
            raise ValueError("promotion window_start must not exceed window_end")
        if self.interest_free_duration < 0:
            raise ValueError("interest_free_duration must be >= 0")

    def active(self, t: int) -> bool:
        return self.window_start <= t <= self.window_end


@dataclass(frozen=True)
class CardOffer:
    lender_id: int
    retail_apr: float
    interest_free_duration: int = 0

    def __post_init__(self):
        if self.interest_free_duration < 0:
            raise ValueError("interest_free_duration must be >= 0")


def monthly_rate(apr: float) -> float:
    """Nominal monthly rate: ``apr / 12``."""
    return apr / 12.0


def cost_of(apr: float, interest_free_months: int, balance: float, horizon: int) -> float:
    return balance * monthly_rate(apr) * max(0, horizon - interest_free_months)


def expected_cost(
    card: CardOffer | CreditCard,
    current_time: int = 0,
    representative_balance: float = REPRESENTATIVE_BALANCE,
    horizon: int = COST_HORIZON,
) -> float:
    """Interest a customer expects to pay on a card over a fixed horizon.

    An offer is judged on its full promotional duration; an owned card only on
    whatever is left of its interest-free period at ``current_time``.
    """
    if isinstance(card, CreditCard):
        free = card.remaining_interest_free(current_time)
    else:
        free = card.interest_free_duration
    return cost_of(card.retail_apr, free, representative_balance, horizon)


def charge_interest(card: CreditCard, current_time: int) -> float:
    """Charge a month's interest on the outstanding balance and return it.

    Purchases made since the last statement are not yet due, so they are
    excluded from the interest base.
    """
    if card.defaulted:
        raise CardStateError("cannot charge interest on a defaulted card")
    if card.in_promotion(current_time):
        return 0.0
    charge = max(0.0, card.balance - card.purchases) * monthly_rate(card.retail_apr)
    card.balance += charge
    return charge


def statement(card: CreditCard, min_payment_fraction: float) -> float:
    """Set and return the minimum payment due next month."""
    if not 0.0 <= min_payment_fraction <= 1.0:
        raise ValueError("min_payment_fraction must lie in [0, 1]")
    card.min_payment_due = min_payment_fraction * card.balance
    card.purchases = 0.0
    return card.min_payment_due
