# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled customer phase of one simulation step.

Mirrors ``promosim.engine._pykernel`` operation for operation (same draws,
same floating-point evaluation order), so both produce identical states.
"""

from libc.math cimport exp, log

DEF MAXK = 32

# params layout, shared with kernel.pack_params
DEF P_RHO = 0
DEF P_LAM_TEND = 1
DEF P_LAM0 = 2
DEF P_LAM_R = 3
DEF P_LAM = 4
DEF P_THETA_OFFER = 5
DEF P_THETA_TEND = 6
DEF P_ETA_TEND = 7
DEF P_ETA = 8
DEF P_MU_I = 9
DEF P_MU_B = 10
DEF P_THETA_LIM = 11
DEF P_MISS = 12
DEF P_REP = 13
DEF P_HORIZON = 14
DEF P_COMFORT = 15
DEF P_BENCH_APR = 16
DEF P_WEIGHT_MODE = 17
DEF P_MAX_CARDS = 18

# card states
DEF NONE = 0
DEF OPEN = 1
DEF DEFAULTED = 2

# counts columns
DEF C_APPS = 0
DEF C_RATIONAL = 1
DEF C_ACCEPTED = 2
DEF C_FIRST_MISS = 3
DEF C_DEFAULTS = 4


cdef inline double sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double cost_of(double apr, int free, double rep, int horizon) noexcept nogil:
    cdef int m = horizon - free
    if m < 0:
        m = 0
    return rep * (apr / 12.0) * m


cdef inline int remaining_free(int opened, int duration, int t) noexcept nogil:
    cdef int r = opened + duration - t
    return r if r > 0 else 0


cdef inline double effective_apr(double apr, int opened, int duration, int t) noexcept nogil:
    if t < opened + duration:
        return 0.0
    return apr


cdef inline bint key_less(double k1a, int k2a, double k3a, double k1b, int k2b, double k3b) noexcept nogil:
    # lexicographic (k1, k2, k3) comparison
    if k1a < k1b:
        return True
    if k1a > k1b:
        return False
    if k2a < k2b:
        return True
    if k2a > k2b:
        return False
    return k3a < k3b


cdef inline void sort_slots(int* order, int n, double* k1, int* k2, double* k3) noexcept nogil:
    # stable insertion sort of order[0:n] by (k1, k2, k3) indexed by slot
    cdef int i, j, s
    for i in range(1, n):
        s = order[i]
        j = i - 1
        while j >= 0 and key_less(k1[s], k2[s], k3[s], k1[order[j]], k2[order[j]], k3[order[j]]):
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = s


def customer_phase(
    int t,
    const double[::1] income,
    const double[::1] expend_total,
    const double[::1] expend_cred,
    const double[::1] score,
    const signed char[::1] strategy,
    signed char[:, ::1] state,
    double[:, ::1] limit,
    double[:, ::1] apr,
    int[:, ::1] opened,
    int[:, ::1] duration,
    double[:, ::1] balance,
    const double[:, ::1] min_due,
    double[:, ::1] paid,
    signed char[:, ::1] consec,
    unsigned char[:, ::1] ever_missed,
    unsigned char[:, ::1] missed_now,
    unsigned char[:, ::1] defaulted_now,
    double[:, ::1] spent,
    const double[:, ::1] uniforms,
    const int[::1] offer_dur,
    const double[::1] offer_apr,
    const double[::1] min_income,
    const double[::1] min_score,
    const double[::1] limit_scale,
    const double[::1] limit_growth,
    const double[::1] params,
    long long[:, ::1] counts,
):
    cdef Py_ssize_t n = income.shape[0]
    cdef int K = state.shape[1]
    if K > MAXK:
        raise ValueError("too many lenders for the compiled kernel")
    if uniforms.shape[1] < 2 * K + 3:
        raise ValueError("uniforms has too few columns")

    cdef double rho = params[P_RHO]
    cdef double lam_tend = params[P_LAM_TEND]
    cdef double lam0 = params[P_LAM0]
    cdef double lam_r = params[P_LAM_R]
    cdef double lam = params[P_LAM]
    cdef double theta_offer = params[P_THETA_OFFER]
    cdef double theta_tend = params[P_THETA_TEND]
    cdef double eta_tend = params[P_ETA_TEND]
    cdef double eta = params[P_ETA]
    cdef double mu_i = params[P_MU_I]
    cdef double mu_b = params[P_MU_B]
    cdef double theta_lim = params[P_THETA_LIM]
    cdef double p_miss = params[P_MISS]
    cdef double rep = params[P_REP]
    cdef int horizon = <int>params[P_HORIZON]
    cdef double comfort = params[P_COMFORT]
    cdef double bench_apr = params[P_BENCH_APR]
    cdef int weight_mode = <int>params[P_WEIGHT_MODE]
    cdef int max_cards = <int>params[P_MAX_CARDS]

    cdef int order[MAXK]
    cdef int pool[MAXK]
    cdef double k1[MAXK]
    cdef int k2[MAXK]
    cdef double k3[MAXK]
    cdef double offer_cost[MAXK]

    cdef Py_ssize_t j
    cdef int l, i, n_open, n_pool, n_best, pick, cap_pass
    cdef double budget, pay, remaining, room, a, cap, eff
    cdef double util, own, best, worst, c, p, p_r, U, O
    cdef double sum_b, sum_l, raw, headroom, lim
    cdef int strat
    cdef bint rational

    with nogil:
        for l in range(K):
            if offer_dur[l] >= 0:
                offer_cost[l] = cost_of(offer_apr[l], offer_dur[l], rep, horizon)

        for j in range(n):
            strat = strategy[j]

            # ---- repay ----
            n_open = 0
            for l in range(K):
                if state[j, l] == OPEN:
                    order[n_open] = l
                    n_open += 1
            if n_open > 0:
                budget = eta_tend * score[j] + eta
                for i in range(n_open):
                    l = order[i]
                    eff = effective_apr(apr[j, l], opened[j, l], duration[j, l], t)
                    if strat == 0:
                        k1[l] = -eff
                        k2[l] = opened[j, l]
                        k3[l] = l
                    elif strat == 1:
                        k1[l] = eff
                        k2[l] = opened[j, l]
                        k3[l] = l
                    else:
                        k1[l] = uniforms[j, l]
                        k2[l] = l
                        k3[l] = 0.0
                sort_slots(order, n_open, k1, k2, k3)

                for i in range(n_open):
                    l = order[i]
                    if uniforms[j, K + l] > p_miss:
                        pay = min_due[j, l]
                        if budget < pay:
                            pay = budget
                        if balance[j, l] < pay:
                            pay = balance[j, l]
                        balance[j, l] -= pay
                        budget -= pay
                        paid[j, l] += pay
                for i in range(n_open):
                    l = order[i]
                    pay = budget if budget < balance[j, l] else balance[j, l]
                    balance[j, l] -= pay
                    budget -= pay
                    paid[j, l] += pay

                for i in range(n_open):
                    l = order[i]
                    if min_due[j, l] > 0.0 and paid[j, l] < min_due[j, l]:
                        missed_now[j, l] = 1
                        consec[j, l] += 1
                        if not ever_missed[j, l]:
                            ever_missed[j, l] = 1
                            counts[l, C_FIRST_MISS] += 1
                        if consec[j, l] >= 3:
                            state[j, l] = DEFAULTED
                            defaulted_now[j, l] = 1
                            counts[l, C_DEFAULTS] += 1
                    else:
                        consec[j, l] = 0

            # ---- apply ----
            n_open = 0
            n_pool = 0
            for l in range(K):
                if state[j, l] == OPEN:
                    n_open += 1
                if state[j, l] == NONE and offer_dur[l] >= 0:
                    pool[n_pool] = l
                    n_pool += 1
            if n_open < max_cards and n_pool > 0:
                best = offer_cost[pool[0]]
                for i in range(1, n_pool):
                    if offer_cost[pool[i]] < best:
                        best = offer_cost[pool[i]]
                if n_open == 0:
                    p = sigmoid(lam_tend * (expend_total[j] - income[j]))
                    if p < lam0:
                        p = lam0
                else:
                    util = 0.0
                    own = 0.0
                    for l in range(K):
                        if state[j, l] == OPEN:
                            util += balance[j, l] / limit[j, l]
                            own += cost_of(apr[j, l], remaining_free(opened[j, l], duration[j, l], t), rep, horizon)
                    U = lam * (util / n_open)
                    O = theta_offer * (own / n_open - best)
                    p = sigmoid(U + O - rho)
                if uniforms[j, 2 * K] < p:
                    if n_open == 0:
                        worst = cost_of(bench_apr, 0, rep, horizon)
                    else:
                        worst = -1.0
                        for l in range(K):
                            if state[j, l] == OPEN:
                                c = cost_of(apr[j, l], remaining_free(opened[j, l], duration[j, l], t), rep, horizon)
                                if worst < 0.0 or c > worst:
                                    worst = c
                    p_r = sigmoid(lam_r * (worst - best))
                    rational = uniforms[j, 2 * K + 1] < p_r
                    if rational:
                        n_best = 0
                        for i in range(n_pool):
                            if offer_cost[pool[i]] == best:
                                pool[n_best] = pool[i]
                                n_best += 1
                        n_pool = n_best
                    pick = <int>(uniforms[j, 2 * K + 2] * n_pool)
                    if pick > n_pool - 1:
                        pick = n_pool - 1
                    l = pool[pick]
                    counts[l, C_APPS] += 1
                    if rational:
                        counts[l, C_RATIONAL] += 1
                    if income[j] > min_income[l] and score[j] > min_score[l]:
                        lim = limit_scale[l] * log(income[j] / limit_growth[l])
                        state[j, l] = OPEN
                        limit[j, l] = lim
                        apr[j, l] = offer_apr[l]
                        opened[j, l] = t
                        duration[j, l] = offer_dur[l]
                        balance[j, l] = 0.0
                        consec[j, l] = 0
                        ever_missed[j, l] = 0
                        counts[l, C_ACCEPTED] += 1
                        n_open += 1

            # ---- use ----
            if n_open > 0:
                sum_b = 0.0
                sum_l = 0.0
                n_open = 0
                for l in range(K):
                    if state[j, l] == OPEN:
                        sum_b += balance[j, l]
                        sum_l += limit[j, l]
                        order[n_open] = l
                        n_open += 1
                if sum_l > 0.0:
                    raw = theta_tend * expend_cred[j] / 12.0 - theta_lim * (sum_b / sum_l)
                    headroom = sum_l - sum_b
                    if headroom < 0.0:
                        headroom = 0.0
                    if raw < 0.0:
                        raw = 0.0
                    remaining = raw if raw < headroom else headroom

                    for i in range(n_open):
                        l = order[i]
                        if weight_mode == 1:
                            k1[l] = mu_i * limit[j, l] + mu_b * balance[j, l]
                        else:
                            eff = effective_apr(apr[j, l], opened[j, l], duration[j, l], t)
                            k1[l] = mu_i * (eff * 100.0) + mu_b * balance[j, l]
                        k2[l] = opened[j, l]
                        k3[l] = l
                    sort_slots(order, n_open, k1, k2, k3)

                    for cap_pass in range(2):
                        cap = comfort if cap_pass == 0 else 1.0
                        for i in range(n_open):
                            if remaining <= 0.0:
                                break
                            l = order[i]
                            room = cap * limit[j, l] - balance[j, l]
                            if room > 0.0:
                                a = room if room < remaining else remaining
                                balance[j, l] += a
                                remaining -= a
                                spent[j, l] += a
