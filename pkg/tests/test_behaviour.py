import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from promosim.behaviour import (
    BehaviouralParams, CustomerAgent, card_usage_order, choose_application_target, prob_apply_additional,
    prob_apply_first, prob_rational, repay, repayment_budget, sigmoid, spend, usage_amount, usage_weight,
)
from promosim.instruments import CardOffer, CreditCard
from promosim.population import CustomerAttributes

P = BehaviouralParams()


def customer(cards=(), strategy="avalanche", E=12000.0, score=700):
    attrs = CustomerAttributes(30, 30000.0, 24000.0, 20000.0, E, score, strategy)
    return CustomerAgent(0, attrs, list(cards))


def card(lender=0, limit=1000.0, balance=0.0, apr=0.20, duration=0, opened=0):
    return CreditCard(lender, 0, limit, apr, duration, opened, balance=balance)


def test_sigmoid_symmetry_and_extremes():
    assert sigmoid(0) == 0.5
    assert sigmoid(-800) == pytest.approx(0.0) and sigmoid(800) == 1.0
    assert sigmoid(2) + sigmoid(-2) == pytest.approx(1.0)


def test_prob_apply_first():
    assert prob_apply_first(20000, 20000, P) == 0.5
    assert sigmoid(-10) == pytest.approx(4.54e-5, abs=1e-7)
    assert prob_apply_first(10000, 20000, P) == 0.08
    assert prob_apply_first(22000, 20000, P) == pytest.approx(0.8808, abs=1e-4)


def test_prob_apply_additional_examples():
    plain = [CardOffer(1, 0.20, 0)]
    assert prob_apply_additional(customer([card()]), plain, 0, P) == pytest.approx(0.00669, abs=1e-5)
    full = customer([card(balance=1000.0)])
    assert prob_apply_additional(full, plain, 0, P) == pytest.approx(0.1192, abs=1e-4)
    promo = [CardOffer(1, 0.20, 12)]
    assert prob_apply_additional(customer([card()]), promo, 0, P) == pytest.approx(0.00676, abs=1e-5)
    with pytest.raises(ValueError):
        prob_apply_additional(customer([card()]), [], 0, P)


def test_prob_rational_examples():
    c = customer([card()])
    assert prob_rational(c, [CardOffer(1, 0.20, 0)], 0, P) == 0.5
    assert prob_rational(c, [CardOffer(1, 0.20, 48)], 0, P) == pytest.approx(0.99880, abs=1e-4)
    # own card is in a 12-month promotion (cost 720); best offer costs 960
    c2 = customer([card(duration=12)])
    assert prob_rational(c2, [CardOffer(1, 0.20, 0)], 0, P) == pytest.approx(0.1573, abs=1e-3)


def test_prob_rational_first_time_uses_benchmark():
    assert prob_rational(customer(), [CardOffer(1, 0.20, 48)], 0, P) == pytest.approx(sigmoid(0.007 * 960))


@given(st.floats(-1e5, 1e5), st.floats(1, 1e5))
def test_probabilities_in_range(x, i):
    p = prob_apply_first(x, i, P)
    assert P.lambda_0 <= p <= 1.0


def test_choose_target_single_and_argmin():
    c = customer([card(lender=0)])
    assert choose_application_target(c, [CardOffer(1, 0.2, 0)], None, P, u_rational=0.99, u_pick=0.99) == (1, False)
    offers = [CardOffer(1, 0.20, 0), CardOffer(2, 0.20, 12)]
    for u in np.linspace(0, 0.999, 20):
        lender, rational = choose_application_target(c, offers, None, P, u_rational=0.0, u_pick=u)
        assert lender == 2 and rational


def test_choose_target_excludes_held_and_defaulted():
    d = card(lender=1)
    d.defaulted = True
    c = customer([card(lender=0), d])
    assert choose_application_target(c, [CardOffer(0, .2), CardOffer(1, .2)], np.random.default_rng(0), P) == (None, False)


def test_identical_offers_split_evenly():
    c = customer([card(lender=0)])
    offers = [CardOffer(1, 0.2, 0), CardOffer(2, 0.2, 0)]
    rng = np.random.default_rng(3)
    picks = [choose_application_target(c, offers, None, P, u_rational=0.0, u_pick=u)[0] for u in rng.random(10_000)]
    assert np.mean(np.array(picks) == 1) == pytest.approx(0.5, abs=0.02)


def test_usage_amount():
    assert usage_amount(customer([card(limit=5000.0)]), P) == pytest.approx(1800.0)
    assert usage_amount(customer([card(balance=1000.0)]), P) == 0.0
    assert usage_amount(customer([card(limit=5000.0)], E=0.0), P) == 0.0
    # capped at remaining headroom
    assert usage_amount(customer([card(limit=1000.0)]), P) == pytest.approx(1000.0)


def test_usage_order_weights():
    a = card(lender=0, balance=1000.0, limit=5000.0)
    b = card(lender=1, balance=500.0, limit=5000.0, duration=12)
    c = customer([a, b])
    assert usage_weight(a, 0, P) == pytest.approx(910.0)
    assert usage_weight(b, 0, P) == pytest.approx(450.0)
    assert [x.lender_id for x in card_usage_order(c, P)] == [1, 0]


def test_usage_order_tie_break_by_opening_time():
    c = customer([card(lender=0, opened=5), card(lender=1, opened=2)])
    assert [x.lender_id for x in card_usage_order(c, P, 10)] == [1, 0]
    assert len(card_usage_order(customer([card()]), P)) == 1


def test_spend_two_pass():
    one = customer([card()])
    spend(one, 500.0, P)
    assert one.cards[0].balance == 500.0
    two = customer([card(lender=0), card(lender=1)])
    assert spend(two, 500.0, P) == {0: 300.0, 1: 200.0}
    cap = customer([card(lender=0), card(lender=1)])
    alloc = spend(cap, 5000.0, P)
    assert sum(alloc.values()) == 2000.0 and all(c.balance == c.credit_limit for c in cap.cards)


@given(st.lists(st.tuples(st.floats(100, 1e4), st.floats(0, 1)), min_size=1, max_size=3), st.floats(0, 3e4))
def test_spend_conserves_money(cards, amount):
    c = customer([card(lender=k, limit=l, balance=u * l) for k, (l, u) in enumerate(cards)])
    before = sum(x.balance for x in c.cards)
    headroom = sum(x.credit_limit - x.balance for x in c.cards)
    alloc = spend(c, amount, P)
    after = sum(x.balance for x in c.cards)
    assert after - before == pytest.approx(sum(alloc.values()), abs=1e-6)
    assert sum(alloc.values()) == pytest.approx(min(amount, headroom), abs=1e-6)
    assert all(x.balance <= x.credit_limit + 1e-9 for x in c.cards)


@pytest.mark.parametrize("score, budget", [(700, 1716.80), (300, 1707.20), (850, 1720.40)])
def test_repayment_budget(score, budget):
    assert repayment_budget(score, P) == pytest.approx(budget, abs=1e-9)


def test_repay_pays_off_small_balance():
    c = customer([card(balance=100.0)])
    c.cards[0].min_payment_due = 2.5
    (rec,) = repay(c, 1716.80, None, P, shuffle_keys=[0.5], miss_draws=[0.9])
    assert rec.amount == 100.0 and c.cards[0].balance == 0.0 and not rec.missed


def test_forced_skip_still_pays_in_second_pass():
    params = BehaviouralParams(p_miss=1.0)
    c = customer([card(balance=400.0)])
    c.cards[0].min_payment_due = 10.0
    (rec,) = repay(c, 1000.0, np.random.default_rng(0), params)
    assert rec.amount == 400.0 and not rec.missed


def test_three_misses_default():
    c = customer([card(balance=400.0)])
    for step in range(3):
        c.cards[0].min_payment_due = 10.0
        (rec,) = repay(c, 0.0, np.random.default_rng(step), P)
        assert rec.missed
        assert rec.defaulted == (step == 2)
    assert c.cards[0].defaulted and c.cards[0].consecutive_missed == 3
    assert c.open_cards == []


def test_avalanche_orders_by_rate():
    hi = card(lender=0, balance=800.0, apr=0.30)
    lo = card(lender=1, balance=800.0, apr=0.10)
    c = customer([lo, hi], strategy="avalanche")
    paid = {r.lender_id: r.amount for r in repay(c, 1000.0, None, P, shuffle_keys=[0, 0], miss_draws=[1, 1])}
    assert paid[0] == 800.0 and paid[1] == 200.0
    c = customer([card(lender=0, balance=800.0, apr=0.30), card(lender=1, balance=800.0, apr=0.10)],
                 strategy="anti-avalanche")
    paid = {r.lender_id: r.amount for r in repay(c, 1000.0, None, P, shuffle_keys=[0, 0], miss_draws=[1, 1])}
    assert paid[1] == 800.0 and paid[0] == 200.0


@given(st.lists(st.tuples(st.floats(0, 5000), st.floats(0, 200)), min_size=1, max_size=3),
       st.floats(0, 5000), st.sampled_from(["avalanche", "anti-avalanche", "random"]), st.integers(0, 10**6))
def test_repay_conserves_money(cards, budget, strategy, seed):
    c = customer([card(lender=k, limit=1e4, balance=b) for k, (b, _) in enumerate(cards)], strategy=strategy)
    for x, (_, m) in zip(c.cards, cards):
        x.min_payment_due = m
    before = sum(x.balance for x in c.cards)
    recs = repay(c, budget, np.random.default_rng(seed), P)
    total = sum(r.amount for r in recs)
    assert total <= budget + 1e-6
    assert before - sum(x.balance for x in c.cards) == pytest.approx(total, abs=1e-6)
    assert all(x.balance >= 0 for x in c.cards)


def test_params_validation_and_roundtrip():
    assert BehaviouralParams.from_dict(P.to_dict()) == P
    with pytest.raises(ValueError):
        BehaviouralParams(lambda_0=1.5)
    assert math.isclose(P.theta_offer, 4e-5)
