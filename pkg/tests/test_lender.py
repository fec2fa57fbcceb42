import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from promosim.instruments import CreditCard, PromotionStrategy
from promosim.lender import (
    LenderAgent, ProfitLedger, assign_credit_limit, billing_cycle, current_offer, discounted_profit,
    discounted_series, underwrite,
)
from promosim.population import CustomerAttributes


def applicant(I, S):
    return CustomerAttributes(30, I, I, 10000.0, 5000.0, S, "random")


@pytest.mark.parametrize("I, S, ok", [(7500, 700, False), (20000, 601, True), (20000, 600, False)])
def test_underwrite_strict_thresholds(I, S, ok):
    assert underwrite(applicant(I, S), LenderAgent(0)) is ok


@pytest.mark.parametrize("I, L", [(6000 * math.e, 6000.0), (30000, 9656.63), (7500, 1338.87)])
def test_credit_limit(I, L):
    assert assign_credit_limit(I, LenderAgent(0)) == pytest.approx(L, abs=0.01)


def test_current_offer_window():
    lender = LenderAgent(0, promotion=PromotionStrategy(12, 24, 48))
    assert current_offer(lender, 30).interest_free_duration == 12
    assert current_offer(lender, 49).interest_free_duration == 0
    assert current_offer(LenderAgent(0), 30).interest_free_duration == 0
    assert current_offer(LenderAgent(0, launch_step=24), 10) is None


def _card(balance, min_due, paid, duration=0, opened=0):
    c = CreditCard(0, 0, 5000.0, 0.20, duration, opened, balance=balance, min_payment_due=min_due)
    c.last_payment_made = paid
    return c


def test_billing_paid_in_promotion():
    lender = LenderAgent(0)
    c = _card(1000.0, 25.0, 25.0, duration=12)
    d = billing_cycle(lender, [c], 5)
    assert (d.fees, d.interest) == (0, 0) and c.min_payment_due == pytest.approx(25.0)


def test_billing_late_fee_before_interest():
    lender = LenderAgent(0)
    c = _card(1200.0, 30.0, 0.0)
    d = billing_cycle(lender, [c], 20)
    assert d.fees == 12.0
    assert d.interest == pytest.approx(20.20)
    assert c.balance == pytest.approx(1232.20)
    assert lender.ledger.fee_income == [12.0]


def test_billing_writes_off_default_once():
    lender = LenderAgent(0)
    c = _card(500.0, 25.0, 0.0)
    c.defaulted = True
    seen = set()
    assert billing_cycle(lender, [c], 20, seen).writeoffs == 500.0
    assert billing_cycle(lender, [c], 21, seen).writeoffs == 0.0
    assert c.balance == 500.0


def test_discounted_profit_examples():
    ledger = ProfitLedger()
    for s in range(13):
        ledger.append(100.0 if s == 12 else 0.0, 0.0, 0.0)
    assert discounted_profit(ledger, 12, 0.035) == pytest.approx(96.568, abs=0.01)
    first = ProfitLedger()
    first.append(100.0, 0.0, 0.0)
    assert discounted_profit(first, 0) == 100.0
    assert discounted_profit(ledger, 12, 0.0) == pytest.approx(ledger.cumulative_profit()[12])


@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=40), st.floats(0, 0.2), st.floats(0, 0.2))
def test_dpr_bounded_and_monotone_in_rate(profits, r1, r2):
    lo, hi = sorted((r1, r2))
    d_lo = discounted_series(np.array(profits), lo)
    d_hi = discounted_series(np.array(profits), hi)
    assert np.all(d_lo <= np.cumsum(profits) + 1e-6)
    assert np.all(d_hi <= d_lo + 1e-6)


def test_ledger_rejects_negative_writeoffs():
    with pytest.raises(ValueError):
        ProfitLedger().append(0.0, 0.0, -1.0)
