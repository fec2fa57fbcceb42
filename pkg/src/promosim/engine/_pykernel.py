"""Pure-Python customer phase built on the object-level behaviour functions.

Same signature and semantics as the compiled ``_kernel.customer_phase``.
"""

from __future__ import annotations

from ..behaviour import (
    BehaviouralParams,
    CustomerAgent,
    choose_application_target,
    eligible_offers,
    prob_apply_additional,
    prob_apply_first,
    repay,
    repayment_budget,
    spend,
    usage_amount,
)
from ..instruments import CardOffer, CreditCard
from ..lender import LenderAgent, assign_credit_limit
from ..population import STRATEGY_NAMES, CustomerAttributes

OPEN, DEFAULTED = 1, 2
C_APPS, C_RATIONAL, C_ACCEPTED, C_FIRST_MISS, C_DEFAULTS = range(5)


def customer_phase(t, income, expend_total, expend_cred, score, strategy, state, limit, apr, opened,
                   duration, balance, min_due, paid, consec, ever_missed, missed_now, defaulted_now,
                   spent, uniforms, offer_dur, offer_apr, min_income, min_score, limit_scale,
                   limit_growth, params, counts):
    K = state.shape[1]
    bp = BehaviouralParams(*[float(x) for x in params[:13]])
    rep, horizon, comfort, bench_apr = float(params[13]), int(params[14]), float(params[15]), float(params[16])
    weight_mode, max_cards = int(params[17]), int(params[18])
    offers = [CardOffer(l, float(offer_apr[l]), int(offer_dur[l])) for l in range(K) if offer_dur[l] >= 0]
    lenders = [
        LenderAgent(l, min_income=float(min_income[l]), min_score=float(min_score[l]),
                    limit_scale=float(limit_scale[l]), limit_growth=float(limit_growth[l]))
        for l in range(K)
    ]

    for j in range(income.shape[0]):
        attrs = CustomerAttributes(
            age=0, gross_income=0.0, net_income=float(income[j]),
            total_expenditure=float(expend_total[j]), creditable_expenditure=float(expend_cred[j]),
            credit_score=float(score[j]), repayment_strategy=STRATEGY_NAMES[int(strategy[j])],
        )
        cards = []
        for l in range(K):
            if state[j, l]:
                cards.append(CreditCard(
                    lender_id=l, owner_id=j, credit_limit=float(limit[j, l]), retail_apr=float(apr[j, l]),
                    interest_free_duration=int(duration[j, l]), opened_at=int(opened[j, l]),
                    balance=float(balance[j, l]), min_payment_due=float(min_due[j, l]),
                    consecutive_missed=int(consec[j, l]), defaulted=state[j, l] == DEFAULTED,
                    ever_missed=bool(ever_missed[j, l]),
                ))
        customer = CustomerAgent(j, attrs, cards, comfort)
        u = uniforms[j]

        if customer.open_cards:
            budget = repayment_budget(attrs.credit_score, bp)
            for rec in repay(customer, budget, None, bp, t, shuffle_keys=u[:K], miss_draws=u[K:2 * K]):
                paid[j, rec.lender_id] += rec.amount
                if rec.missed:
                    missed_now[j, rec.lender_id] = 1
                if rec.first_miss:
                    counts[rec.lender_id, C_FIRST_MISS] += 1
                if rec.defaulted:
                    defaulted_now[j, rec.lender_id] = 1
                    counts[rec.lender_id, C_DEFAULTS] += 1

        n_open = len(customer.open_cards)
        pool = eligible_offers(customer, offers)
        if n_open < max_cards and pool:
            if n_open == 0:
                p = prob_apply_first(attrs.total_expenditure, attrs.net_income, bp)
            else:
                p = prob_apply_additional(customer, pool, t, bp, rep, horizon)
            if u[2 * K] < p:
                l, rational = choose_application_target(
                    customer, pool, None, bp, t, u_rational=u[2 * K + 1], u_pick=u[2 * K + 2],
                    representative_balance=rep, horizon=horizon, benchmark_apr=bench_apr,
                )
                counts[l, C_APPS] += 1
                if rational:
                    counts[l, C_RATIONAL] += 1
                if attrs.net_income > min_income[l] and attrs.credit_score > min_score[l]:
                    offer = next(o for o in pool if o.lender_id == l)
                    customer.cards.append(CreditCard(
                        lender_id=l, owner_id=j, credit_limit=assign_credit_limit(attrs.net_income, lenders[l]),
                        retail_apr=offer.retail_apr, interest_free_duration=offer.interest_free_duration,
                        opened_at=t,
                    ))
                    customer.cards.sort(key=lambda c: c.lender_id)
                    counts[l, C_ACCEPTED] += 1

        if customer.open_cards:
            alloc = spend(customer, usage_amount(customer, bp), bp, t, weight_mode)
            for l, a in alloc.items():
                spent[j, l] += a

        for c in customer.cards:
            l = c.lender_id
            state[j, l] = DEFAULTED if c.defaulted else OPEN
            limit[j, l] = c.credit_limit
            apr[j, l] = c.retail_apr
            opened[j, l] = c.opened_at
            duration[j, l] = c.interest_free_duration
            balance[j, l] = c.balance
            consec[j, l] = c.consecutive_missed
            ever_missed[j, l] = c.ever_missed
