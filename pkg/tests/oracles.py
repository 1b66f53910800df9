"""Slow, direct reference implementations used to cross-check the package.

None of these import from ``seqcomp``; they are written from the defining
formulas in the most literal way available.
"""

from __future__ import annotations

import math
from collections import defaultdict
from itertools import combinations

import numpy as np


def ppm_c_bits(symbols, lam: int, order: int) -> float:
    """PPM-C codelength with exclusion, using a dict of context tuples."""
    table: dict[tuple, dict[int, int]] = defaultdict(dict)
    seq = [int(s) for s in symbols]
    total = 0.0
    for t, s in enumerate(seq):
        excluded: set[int] = set()
        p_escape_path = 1.0
        coded = False
        for k in range(min(order, t), -1, -1):
            ctx = tuple(seq[t - k : t])
            seen = {a: c for a, c in table[ctx].items() if a not in excluded}
            if not seen:
                continue
            n = sum(seen.values())
            q = len(seen)
            deterministic = q == lam - len(excluded)
            denom = n if deterministic else n + q
            if s in seen:
                total -= math.log2(p_escape_path * seen[s] / denom)
                coded = True
                break
            p_escape_path *= q / denom
            excluded.update(seen)
        if not coded:
            total -= math.log2(p_escape_path / (lam - len(excluded)))
        for k in range(min(order, t) + 1):
            ctx = tuple(seq[t - k : t])
            table[ctx][s] = table[ctx].get(s, 0) + 1
    return total


def tau_b_pairs(q, o) -> float:
    """Kendall tau-b by enumerating every pair."""
    mc = md = mq = mo = 0
    for i, j in combinations(range(len(q)), 2):
        dq = q[i] - q[j]
        do = o[i] - o[j]
        if dq == 0 and do == 0:
            continue
        if dq == 0:
            mq += 1
        elif do == 0:
            mo += 1
        elif dq * do > 0:
            mc += 1
        else:
            md += 1
    return (mc - md) / math.sqrt((mc + md + mq) * (mc + md + mo))


def midranks(x) -> np.ndarray:
    x = list(x)
    out = np.empty(len(x))
    for i, v in enumerate(x):
        below = sum(1 for w in x if w < v)
        equal = sum(1 for w in x if w == v)
        out[i] = below + (equal + 1) / 2.0
    return out


def pearson(a, b) -> float:
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    return float(np.sum(a * b) / math.sqrt(np.sum(a * a) * np.sum(b * b)))


def gaussian_kld_full(mu1, var1, mu2, var2) -> float:
    """KL(N2 || N1) in matrix form with diagonal covariances:
    0.5 * [tr(S1^-1 S2) + (m1-m2)' S1^-1 (m1-m2) - h - ln(det S2 / det S1)].
    """
    S1 = np.diag(var1)
    S2 = np.diag(var2)
    d = np.asarray(mu1, float) - np.asarray(mu2, float)
    inv = np.linalg.inv(S1)
    h = len(d)
    return 0.5 * float(np.trace(inv @ S2) + d @ inv @ d - h - math.log(np.linalg.det(S2) / np.linalg.det(S1)))


def nearest_brute(query, ref) -> np.ndarray:
    out = np.empty(len(query), dtype=int)
    for i, v in enumerate(query):
        best, arg = math.inf, -1
        for j, w in enumerate(ref):
            dist = float(np.sum((v - w) ** 2))
            if dist < best:
                best, arg = dist, j
        out[i] = arg
    return out


def binary_logistic_enr(X, y01, eta, nu, iters=20000, tol=1e-13):
    """Penalised two-class logistic regression by FISTA.

    Minimises  -loglik + eta * (nu |b|_1 + (1 - nu) |b|^2 / 4)  over (c, b),
    the intercept c unpenalised. This is what the symmetric two-class softmax
    fit reduces to with b = beta_2 - beta_1.
    """
    X = np.asarray(X, float)
    n, p = X.shape
    Z = np.hstack([np.ones((n, 1)), X])
    L = 0.25 * np.linalg.eigvalsh(Z.T @ Z).max() + eta * (1 - nu) / 2
    step = 1.0 / L
    w = np.zeros(p + 1)
    v = w.copy()
    tk = 1.0

    def grad(w_):
        z = Z @ w_
        pr = 1.0 / (1.0 + np.exp(-z))
        g = Z.T @ (pr - y01)
        g[1:] += eta * (1 - nu) / 2 * w_[1:]
        return g

    for _ in range(iters):
        u = v - step * grad(v)
        new = u.copy()
        thr = step * eta * nu
        new[1:] = np.sign(u[1:]) * np.maximum(np.abs(u[1:]) - thr, 0.0)
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * tk * tk))
        v = new + (tk - 1) / t_next * (new - w)
        if np.max(np.abs(new - w)) < tol:
            w = new
            break
        w, tk = new, t_next
    return w[0], w[1:]


def bucket_windows(years, width_years, origin):
    """Group indices by the window their year falls in, scanning one by one."""
    groups: dict[int, list[int]] = {}
    for i, y in enumerate(years):
        k = 0
        while origin + (k + 1) * width_years <= y + 1e-9 * width_years:
            k += 1
        groups.setdefault(k, []).append(i)
    return groups


def ridge_multinomial_newton(X, yi, K, l2, iters=100):
    """Multinomial logistic regression with penalty ``l2/2 * |beta|^2`` by
    plain Newton's method. The first intercept is fixed at zero (shifting all
    intercepts together is unidentified); returns ``(beta K x P, gamma)``
    with ``gamma`` centred."""
    X = np.asarray(X, float)
    n, p = X.shape
    Y = np.zeros((n, K))
    Y[np.arange(n), yi] = 1.0
    # parameter vector: gamma_1..gamma_{K-1}, then beta row by row
    m = (K - 1) + K * p

    def unpack(w):
        gamma = np.concatenate([[0.0], w[: K - 1]])
        beta = w[K - 1 :].reshape(K, p)
        return gamma, beta

    w = np.zeros(m)
    for _ in range(iters):
        gamma, beta = unpack(w)
        Z = X @ beta.T + gamma
        Z -= Z.max(axis=1, keepdims=True)
        Pm = np.exp(Z)
        Pm /= Pm.sum(axis=1, keepdims=True)
        R = Pm - Y
        grad_g = R.sum(axis=0)[1:]
        grad_b = R.T @ X + l2 * beta
        grad = np.concatenate([grad_g, grad_b.ravel()])
        # design for each parameter: d eta_ik / d w
        H = np.zeros((m, m))
        Xa = np.hstack([np.ones((n, 1)), X])
        for k in range(K):
            for l in range(K):
                w_kl = Pm[:, k] * ((k == l) - Pm[:, l])
                B = Xa.T @ (Xa * w_kl[:, None])
                rows = ([k - 1] if k > 0 else []) + list(range(K - 1 + k * p, K - 1 + (k + 1) * p))
                cols = ([l - 1] if l > 0 else []) + list(range(K - 1 + l * p, K - 1 + (l + 1) * p))
                rk = slice(0, None) if k > 0 else slice(1, None)
                rl = slice(0, None) if l > 0 else slice(1, None)
                H[np.ix_(rows, cols)] += B[rk][:, rl]
        H[K - 1 :, K - 1 :] += l2 * np.eye(K * p)
        step = np.linalg.solve(H, grad)
        w = w - step
        if np.max(np.abs(step)) < 1e-13:
            break
    gamma, beta = unpack(w)
    return beta, gamma - gamma.mean()
