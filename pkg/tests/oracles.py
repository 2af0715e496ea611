"""Independent reference implementations used as test oracles.

These are deliberately written from the textbook formulas with plain loops
and share no code with the package.
"""
import math
from fractions import Fraction

import numpy as np


def brute_force_strategy(returns, stock_ids, j, k, skip=1, deciles=10, side="CSCON"):
    """Formation-index -> long-short buy-and-hold return, by direct loops.

    ``returns`` is a months x stocks list-of-lists with ``nan`` for missing.
    Formation row m ranks rows m-j..m-1 and holds rows m+skip..m+skip+k-1.
    """
    T = len(returns)
    out = {}
    for m in range(j, T - skip - k + 1):
        cands = []
        for col, sid in enumerate(stock_ids):
            est = [returns[t][col] for t in range(m - j, m)]
            hold = [returns[t][col] for t in range(m + skip, m + skip + k)]
            if any(math.isnan(v) for v in est + hold):
                continue
            cands.append((sum(est) / j, sid, hold))
        if len(cands) < deciles:
            continue
        cands.sort(key=lambda c: (c[0], c[1]))
        n = len(cands) // deciles

        def bh(group):
            total = 0.0
            for _, _, hold in group:
                growth = 1.0
                for r in hold:
                    growth *= 1.0 + r
                total += growth - 1.0
            return total / len(group)

        con = bh(cands[:n]) - bh(cands[-n:])
        out[m] = con if side == "CSCON" else -con
    return out


def textbook_nw_t(y, lag):
    """Mean / sqrt(S / T), S = g0 + 2 sum (1 - l/(L+1)) g_l, autocovariances over T."""
    T = len(y)
    ybar = sum(y) / T
    u = [v - ybar for v in y]

    def gamma(l):
        return sum(u[t] * u[t - l] for t in range(l, T)) / T

    S = gamma(0)
    for l in range(1, lag + 1):
        S += 2.0 * (1.0 - l / (lag + 1.0)) * gamma(l)
    return ybar / math.sqrt(S / T)


def textbook_hac_cov(y, X, lag):
    """(X'X)^-1 [sum_t sum_s w(|t-s|) x_t u_t u_s x_s'] (X'X)^-1 via normal equations."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    T, p = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    u = y - X @ beta
    meat = np.zeros((p, p))
    for t in range(T):
        for s in range(T):
            d = abs(t - s)
            if d > lag:
                continue
            w = 1.0 - d / (lag + 1.0)
            meat += w * u[t] * u[s] * np.outer(X[t], X[s])
    return beta, xtx_inv @ meat @ xtx_inv


def auto_lag(T):
    return int(4.0 * (T / 100.0) ** (2.0 / 9.0))


def garch_recursion(y, c, phi, k, gamma, alpha, xi):
    """Hand-unrolled variance recursion with pre-sample variance s2 and shock 0."""
    e = [y[t] - c - phi * y[t - 1] for t in range(1, len(y))]
    mean_e = sum(e) / len(e)
    s2 = sum((v - mean_e) ** 2 for v in e) / len(e)
    h_prev, e_prev = s2, 0.0
    h = []
    for t in range(len(e)):
        neg = 1.0 if e_prev < 0 else 0.0
        h_t = k + gamma * h_prev + (alpha + xi * neg) * e_prev * e_prev
        h.append(h_t)
        h_prev, e_prev = h_t, e[t]
    return h, e


def garch_loglik(y, c, phi, k, gamma, alpha, xi):
    h, e = garch_recursion(y, c, phi, k, gamma, alpha, xi)
    return sum(-0.5 * (math.log(2 * math.pi * ht) + et * et / ht) for ht, et in zip(h, e))


def trailing_sum_state(logret, lookback=36):
    """(index, sum, dummy) for every month with a full trailing window."""
    out = []
    for t in range(lookback, len(logret)):
        s = 0.0
        for v in logret[t - lookback:t]:
            s += v
        out.append((t, s, 1 if s >= 0 else 0))
    return out


def exact_mean(values):
    """Exact rational mean of floats."""
    values = [Fraction(v) for v in values]
    return sum(values, Fraction(0)) / len(values)
