"""Elastic-net regression: multinomial for ordinal ratings, linear for
years.

Both penalties have the form ``eta * (nu * |b|_1 + (1 - nu) * |b|_2^2 / 2)``
with unpenalised intercepts. The multinomial model keeps one full
coefficient row per class (``beta`` is ``K x P``) and is fitted by
proximal Newton steps that use the full cross-class curvature, each
followed by a backtracking line search on the exact objective. The
linear model minimises the penalty plus the residual sum of squares by
coordinate descent on the Gram matrix, polished by an active-set solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import ConvergenceError, LeakageError, UndefinedStatisticError, ValidationError
from .metrics import STATISTICS

logger = logging.getLogger(__name__)

N_ETA = 50
ETA_RATIO = 1e-4
NU_GRID = (0.05, 0.1, 0.2, 0.5, 0.8, 1.0)
YEAR_RANGE = (1957.0, 2010.0)
LINEAR_TOL = 1e-8
MULTINOMIAL_TOL = 1e-5
_NU_FLOOR = 1e-3


# ---------------------------------------------------------------- standardise


@dataclass(frozen=True, eq=False)
class Standardisation:
    """Per-column centring and scaling estimated on one set of rows.

    ``provenance`` names the split the statistics came from; models refuse
    to predict with statistics that were not estimated on training rows.
    """

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray
    mode: str = "std"
    provenance: str = "train"

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.size:
            raise ValidationError(f"expected {self.mean.size} columns, got {X.shape[-1]}")
        return (X - self.mean) / self.scale

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "provenance": self.provenance,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "constant": self.constant.tolist(),
        }


def standardise(X, stats: Standardisation | None = None, scale: str = "std", provenance: str = "train"):
    """Centre and scale columns; returns ``(Z, stats)``.

    Without ``stats`` they are estimated from ``X``: column means and
    population standard deviations (``scale="std"``) or variances
    (``scale="variance"``). Constant columns are divided by 1 and flagged.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValidationError("standardise expects a non-empty 2-D matrix")
    if stats is None:
        mean = X.mean(axis=0)
        var = X.var(axis=0)
        constant = var <= 1e-24 * np.maximum(1.0, mean**2)
        if scale == "std":
            s = np.sqrt(var)
        elif scale == "variance":
            s = var.copy()
        else:
            raise ValidationError(f"unknown scale {scale!r}")
        s[constant] = 1.0
        stats = Standardisation(mean, s, constant, scale, provenance)
    return stats.apply(X), stats


def _check_stats(stats: Standardisation | None) -> None:
    if stats is not None and stats.provenance != "train":
        raise LeakageError(f"standardisation estimated on {stats.provenance!r} rows")


def _soft(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


_soft_nb = njit(cache=True)(_soft)


# ---------------------------------------------------------------- linear


@dataclass(eq=False)
class LinearModel:
    theta: np.ndarray
    alpha: float
    stats: Standardisation | None = None
    clamp: tuple[float, float] = YEAR_RANGE
    eta: float = 0.0
    nu: float = 0.0
    names: list[str] = field(default_factory=list)
    iterations: int = 0
    residual: float = 0.0
    objective_trace: list[float] = field(default_factory=list)

    def raw_predict(self, R) -> np.ndarray:
        """Unclamped predictions for raw (unstandardised) rows."""
        _check_stats(self.stats)
        R = np.asarray(R, dtype=np.float64)
        if R.shape[-1] != self.theta.size:
            raise ValidationError(f"expected {self.theta.size} values per row, got {R.shape[-1]}")
        Z = self.stats.apply(R) if self.stats is not None else R
        return Z @ self.theta + self.alpha

    def raw_coefficients(self) -> tuple[np.ndarray, float]:
        """Coefficients and intercept acting on unstandardised inputs."""
        if self.stats is None:
            return self.theta.copy(), self.alpha
        theta = self.theta / self.stats.scale
        return theta, self.alpha - float(theta @ self.stats.mean)


@njit(cache=True)
def _linear_cd(G, c, theta, l1, l2, sweeps, trace, yy):
    P = c.size
    for s in range(sweeps):
        Gt = G @ theta
        for j in range(P):
            old = theta[j]
            denom = 2.0 * G[j, j] + l2
            if denom <= 0.0:
                new = 0.0
            else:
                rho = 2.0 * (c[j] - Gt[j] + G[j, j] * old)
                new = _soft_nb(rho, l1) / denom
            if new != old:
                d = new - old
                for i in range(P):
                    Gt[i] += G[i, j] * d
                theta[j] = new
        trace[s] = _linear_objective(G, c, theta, l1, l2, yy)


@njit(cache=True)
def _linear_objective(G, c, theta, l1, l2, yy):
    Gt = G @ theta
    ssr = yy - 2.0 * (c @ theta) + theta @ Gt
    return ssr + l1 * np.abs(theta).sum() + 0.5 * l2 * (theta @ theta)


def _kkt(grad: np.ndarray, coef: np.ndarray, l1: float) -> float:
    """Largest violation of the soft-threshold stationarity conditions."""
    nz = coef != 0
    r = np.where(nz, np.abs(grad + l1 * np.sign(coef)), np.maximum(np.abs(grad) - l1, 0.0))
    return float(r.max()) if r.size else 0.0


def _polish(G, c, theta, l1, l2, max_drops=50):
    """Exact minimiser for the support and signs of ``theta``, or ``None``.

    A sign flip in the solve shortens the step to the first zero crossing
    (the objective is convex on the segment) and drops that coefficient
    before solving again.
    """
    out = theta.copy()
    for _ in range(max_drops):
        act = np.flatnonzero(out)
        if act.size == 0:
            return out
        s = np.sign(out[act])
        A = 2.0 * G[np.ix_(act, act)] + l2 * np.eye(act.size)
        try:
            sol = np.linalg.solve(A, 2.0 * c[act] - l1 * s)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        flip = np.sign(sol) != s
        if not flip.any():
            out[act] = sol
            return out
        cur = out[act]
        ratio = cur[flip] / (cur[flip] - sol[flip])
        t = float(ratio.min())
        step = cur + t * (sol - cur)
        step[np.flatnonzero(flip)[ratio <= t]] = 0.0
        out[act] = step
    return out


def fit_linear_enr(
    X,
    y,
    eta: float,
    nu: float,
    *,
    theta0=None,
    tol: float = LINEAR_TOL,
    max_sweeps: int = 200_000,
    stats: Standardisation | None = None,
    names: Sequence[str] | None = None,
    clamp: tuple[float, float] = YEAR_RANGE,
) -> LinearModel:
    """Minimise ``eta*(nu*|theta|_1 + (1-nu)*|theta|^2/2) + SSR(theta, alpha)``.

    The intercept is profiled out by centring, so the problem reduces to
    the Gram matrix of the centred design. Cyclic coordinate descent runs
    in blocks of sweeps; between blocks an exact solve on the current
    support is tried and kept when it lowers the objective. Stops when the
    stationarity residual falls below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError("X must be rows x P with one target per row")
    if eta < 0 or not 0.0 <= nu <= 1.0:
        raise ValidationError("need eta >= 0 and nu in [0, 1]")
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    G = Xc.T @ Xc
    c = Xc.T @ yc
    yy = float(yc @ yc)
    l1, l2 = eta * nu, eta * (1.0 - nu)
    theta = np.zeros(X.shape[1]) if theta0 is None else np.array(theta0, dtype=np.float64)
    trace = [float(_linear_objective(G, c, theta, l1, l2, yy))]
    block = 10
    done = 0
    residual = math.inf
    while done < max_sweeps:
        buf = np.empty(block)
        _linear_cd(G, c, theta, l1, l2, block, buf, yy)
        trace.extend(buf.tolist())
        done += block
        residual = _kkt(2.0 * (G @ theta - c) + l2 * theta, theta, l1)
        if residual < tol:
            break
        cand = _polish(G, c, theta, l1, l2)
        if cand is not None:
            f = float(_linear_objective(G, c, cand, l1, l2, yy))
            if f <= trace[-1]:
                theta = cand
                trace.append(f)
                residual = _kkt(2.0 * (G @ theta - c) + l2 * theta, theta, l1)
                if residual < tol:
                    break
        block = min(block * 2, 640)
    if residual >= tol:
        raise ConvergenceError(f"linear elastic net did not converge in {done} sweeps", residual)
    alpha = float(ym - xm @ theta)
    return LinearModel(
        theta, alpha, stats, clamp, eta, nu, list(names or []), done, residual, trace
    )


def predict_year(m: LinearModel, r) -> np.ndarray | float:
    """``theta . r + alpha`` for raw rows, clamped to the model's year range."""
    out = np.clip(m.raw_predict(r), m.clamp[0], m.clamp[1])
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- multinomial


@dataclass(eq=False)
class MultinomialModel:
    beta: np.ndarray  # K x P
    gamma: np.ndarray  # K
    classes: tuple = ()
    stats: Standardisation | None = None
    eta: float = 0.0
    nu: float = 0.0
    names: list[str] = field(default_factory=list)
    iterations: int = 0
    residual: float = 0.0
    objective_trace: list[float] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.gamma.size

    def probabilities(self, D) -> np.ndarray:
        """Class probabilities for raw distance rows (``n x K``)."""
        _check_stats(self.stats)
        D = np.asarray(D, dtype=np.float64)
        if D.shape[-1] != self.beta.shape[1]:
            raise ValidationError(f"expected {self.beta.shape[1]} values per row, got {D.shape[-1]}")
        Z = self.stats.apply(D) if self.stats is not None else D
        return softmax(Z @ self.beta.T + self.gamma)

    def raw_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        if self.stats is None:
            return self.beta.copy(), self.gamma.copy()
        beta = self.beta / self.stats.scale
        return beta, self.gamma - beta @ self.stats.mean


def softmax(E) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    Z = np.exp(E - E.max(axis=-1, keepdims=True))
    return Z / Z.sum(axis=-1, keepdims=True)


@njit(cache=True)
def _nll(E, y):
    n, K = E.shape
    total = 0.0
    for i in range(n):
        m = E[i, 0]
        for k in range(1, K):
            if E[i, k] > m:
                m = E[i, k]
        s = 0.0
        for k in range(K):
            s += math.exp(E[i, k] - m)
        total += m + math.log(s) - E[i, y[i]]
    return total


@njit(cache=True)
def _pen(beta, l1, l2):
    return l1 * np.abs(beta).sum() + 0.5 * l2 * (beta * beta).sum()


@njit(cache=True)
def _best_shift(b, l1, l2):
    """Constant ``c`` minimising ``sum_k l1*|b_k - c| + l2/2*(b_k - c)**2``
    and the resulting penalty decrease (0 and 0.0 when no shift helps)."""
    K = b.size
    s = np.sort(b)
    total = s.sum()
    f0 = 0.0
    for k in range(K):
        f0 += l1 * abs(b[k]) + 0.5 * l2 * b[k] * b[k]
    best = f0
    best_c = 0.0
    for q in range(2 * K + 1):
        if q < K:
            c = s[q]
        else:
            if l2 <= 0.0:
                break
            m = q - K
            c = (total - (l1 / l2) * (2 * m - K)) / K
            lo = s[m - 1] if m > 0 else -np.inf
            hi = s[m] if m < K else np.inf
            if not lo <= c <= hi:
                continue
        f = 0.0
        for k in range(K):
            f += l1 * abs(b[k] - c) + 0.5 * l2 * (b[k] - c) ** 2
        if f < best:
            best = f
            best_c = c
    return best_c, f0 - best


@njit(cache=True)
def _recentre(beta, l1, l2):
    """Shift each coefficient column across classes to minimise its penalty.

    Adding a constant to column ``j`` of every class leaves the likelihood
    unchanged, so this is an exact minimisation along directions the
    likelihood cannot identify. Returns the total penalty decrease.
    """
    gain = 0.0
    for j in range(beta.shape[1]):
        c, g = _best_shift(beta[:, j].copy(), l1, l2)
        if g > 0.0:
            beta[:, j] -= c
            gain += g
    return gain


def _hessian(Xa, prob) -> np.ndarray:
    """Hessian of the negative log-likelihood in the parameters ``[gamma_k,
    beta_k]`` stacked class by class: block ``(k, l)`` is
    ``Xa' diag(p_k (delta_kl - p_l)) Xa``."""
    n, P1 = Xa.shape
    K = prob.shape[1]
    H = np.empty((K * P1, K * P1))
    for k in range(K):
        for l in range(k, K):
            w = prob[:, k] * ((1.0 if k == l else 0.0) - prob[:, l])
            B = (Xa * w[:, None]).T @ Xa
            H[k * P1 : (k + 1) * P1, l * P1 : (l + 1) * P1] = B
            if l != k:
                H[l * P1 : (l + 1) * P1, k * P1 : (k + 1) * P1] = B.T
    return H


@njit(cache=True)
def _quad_cd(H, g, theta, K, P1, l1, l2, tol, max_sweeps):
    """Minimise ``g.d + d'Hd/2 + pen(theta + d)`` by coordinate descent.

    ``theta`` is ``K x P1`` flattened, column 0 of each class being the
    unpenalised intercept. Each sweep ends by shifting every coefficient
    column across classes to its penalty minimum; in exact arithmetic such a
    shift lies in the null space of ``H`` and is orthogonal to ``g``.
    Returns the new parameter vector.
    """
    m = theta.size
    cur = theta.copy()
    hd = np.zeros(m)  # H (cur - theta)
    col = np.empty(K)
    for sweep in range(max_sweeps):
        maxd = 0.0
        for idx in range(m):
            h = H[idx, idx]
            if h < 1e-12:
                continue
            G = g[idx] + hd[idx]
            old = cur[idx]
            if idx % P1 == 0:
                new = old - G / h
            else:
                new = _soft_nb(h * old - G, l1) / (h + l2)
            d = new - old
            if d != 0.0:
                cur[idx] = new
                for r in range(m):
                    hd[r] += d * H[idx, r]
                step = abs(d) * math.sqrt(h)
                if step > maxd:
                    maxd = step
        for j in range(1, P1):
            for k in range(K):
                col[k] = cur[k * P1 + j]
            c, gain = _best_shift(col, l1, l2)
            if gain > 0.0:
                for k in range(K):
                    idx = k * P1 + j
                    cur[idx] -= c
                    for r in range(m):
                        hd[r] -= c * H[idx, r]
        if maxd < tol:
            break
    return cur


@njit(cache=True)
def _line_search(prob, y, u, dy, beta, db, l1, l2, decrease):
    """Backtracking on the step size ``t`` using the exact objective change
    ``sum_i log1p(sum_k p_ik expm1(t u_ik)) - t dy + pen change``.
    Returns ``(t, change)``; ``t = 0`` when no decrease was found."""
    n, K = prob.shape
    pen_old = _pen(beta, l1, l2)
    t = 1.0
    while t > 1e-12:
        dnll = -t * dy
        for i in range(n):
            acc = 0.0
            for k in range(K):
                acc += prob[i, k] * math.expm1(t * u[i, k])
            dnll += math.log1p(acc)
        change = dnll + _pen(beta + t * db, l1, l2) - pen_old
        if change <= 1e-4 * t * decrease and change < 0.0:
            return t, change
        t *= 0.5
    return 0.0, 0.0


def _quad_parts(H, b, v, P1, l1, l2):
    """Objective and stationarity residual of ``b.v + v'Hv/2 + pen(v)``,
    intercepts (every ``P1``-th entry) unpenalised."""
    pen = np.ones(v.size, dtype=bool)
    pen[::P1] = False
    Hv = H @ v
    obj = float(b @ v + 0.5 * v @ Hv + l1 * np.abs(v[pen]).sum() + 0.5 * l2 * (v[pen] ** 2).sum())
    grad = b + Hv + np.where(pen, l2 * v, 0.0)
    res = max(
        float(np.abs(grad[~pen]).max()),
        _kkt(grad[pen], v[pen], l1),
    )
    return obj, res


def _quad_polish(H, b, v, P1, l1, l2, max_drops=50):
    """Exact minimiser of the quadratic for the support and signs of ``v``.

    If that minimiser flips a sign, the step from ``v`` stops where the
    first coefficient reaches zero (the objective is convex on the segment,
    so this still does not raise it), that coefficient leaves the support
    and the solve is repeated. Returns ``None`` when a solve fails. The
    first intercept is held fixed: shifting every intercept together
    changes nothing.
    """
    pen = np.ones(v.size, dtype=bool)
    pen[::P1] = False
    out = v.copy()
    for _ in range(max_drops):
        act = np.flatnonzero(~pen | (out != 0))
        act = act[act != 0]
        s = np.where(pen[act], np.sign(out[act]), 0.0)
        A = H[np.ix_(act, act)] + np.diag(np.where(pen[act], l2, 0.0))
        rhs = -b[act] - l1 * s - H[act, 0] * out[0]
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        flip = (s != 0) & (np.sign(sol) != s)
        if not flip.any():
            out[act] = sol
            break
        cur = out[act]
        ratio = cur[flip] / (cur[flip] - sol[flip])
        t = float(ratio.min())
        step = cur + t * (sol - cur)
        step[np.flatnonzero(flip)[ratio <= t]] = 0.0
        out[act] = step
    return out


def _quad_solve(H, g, theta, K, P1, l1, l2, tol, max_rounds=40, sweeps=30):
    """Minimiser of ``g.d + d'Hd/2 + pen(theta + d)`` over ``v = theta + d``.

    Alternates short coordinate-descent runs (which find the support) with
    exact solves on that support; a solve is kept when it does not raise the
    objective.
    """
    b = g - H @ theta
    v = theta.copy()
    for _ in range(max_rounds):
        v = _quad_cd(H, b + H @ v, v, K, P1, l1, l2, tol, sweeps)
        obj, res = _quad_parts(H, b, v, P1, l1, l2)
        if res < tol:
            break
        cand = _quad_polish(H, b, v, P1, l1, l2)
        if cand is not None:
            obj_c, res_c = _quad_parts(H, b, cand, P1, l1, l2)
            if obj_c <= obj + 1e-12 * max(1.0, abs(obj)):
                v = cand
                if res_c < tol:
                    break
    return v


def _mn_step(Xa, yi, beta, gamma, E, l1, l2, inner_tol) -> float:
    """One proximal Newton step on all classes jointly, with the full
    cross-class curvature. Updates the parameters and ``E`` in place and
    returns the exact objective change (never positive)."""
    n, P1 = Xa.shape
    K = gamma.size
    prob = softmax(E)
    resid = prob.copy()
    resid[np.arange(n), yi] -= 1.0
    g = (resid.T @ Xa).ravel()
    H = _hessian(Xa, prob)
    theta = np.column_stack([gamma, beta]).ravel()
    new = _quad_solve(H, g, theta, K, P1, l1, l2, inner_tol).reshape(K, P1)
    dg = new[:, 0] - gamma
    db = new[:, 1:] - beta
    u = Xa @ np.column_stack([dg, db]).T
    dy = float(u[np.arange(n), yi].sum())
    slope = float(np.sum(prob * u)) - dy
    decrease = min(slope + float(_pen(new[:, 1:], l1, l2) - _pen(beta, l1, l2)), 0.0)
    t, change = _line_search(prob, yi, u, dy, beta, db, l1, l2, decrease)
    if t > 0.0:
        beta += t * db
        gamma += t * dg
        E += t * u
    return change


def _mn_kkt(X, Y, beta, gamma, l1, l2) -> float:
    Pm = softmax(X @ beta.T + gamma)
    G = (Pm - Y).T @ X + l2 * beta
    return max(_kkt(G.ravel(), beta.ravel(), l1), float(np.abs((Pm - Y).sum(axis=0)).max()))


def _class_index(y, classes) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[v] for v in np.asarray(y).tolist()], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"label {exc.args[0]!r} not among classes {list(classes)}") from None


def fit_multinomial_enr(
    X,
    y,
    eta: float,
    nu: float,
    *,
    classes: Sequence | None = None,
    beta0=None,
    gamma0=None,
    tol: float = MULTINOMIAL_TOL,
    max_iter: int = 2000,
    stats: Standardisation | None = None,
    names: Sequence[str] | None = None,
) -> MultinomialModel:
    """Minimise ``eta*(nu*|beta|_1 + (1-nu)*|beta|^2/2) - loglik(beta, gamma)``.

    ``y`` holds labels from ``classes`` (default: 1..max(y)); every class
    must occur. Each iteration first shifts every coefficient column across
    classes to its penalty minimum (the likelihood cannot see such shifts),
    then takes one proximal Newton step on all parameters with a line
    search, so the objective never increases. Stops when the stationarity
    residual is below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-D matrix")
    if classes is None:
        classes = tuple(range(1, int(np.max(y)) + 1))
    classes = tuple(classes)
    yi = _class_index(y, classes)
    n, P = X.shape
    K = len(classes)
    if yi.size != n:
        raise ValidationError("one label per row required")
    if n < K:
        raise ValidationError(f"need at least {K} rows for {K} classes")
    counts = np.bincount(yi, minlength=K)
    if np.any(counts == 0):
        missing = [classes[k] for k in np.flatnonzero(counts == 0)]
        raise ValidationError(f"classes absent from training labels: {missing}")
    if eta < 0 or not 0.0 <= nu <= 1.0:
        raise ValidationError("need eta >= 0 and nu in [0, 1]")
    l1, l2 = eta * nu, eta * (1.0 - nu)
    beta = np.zeros((K, P)) if beta0 is None else np.array(beta0, dtype=np.float64)
    if gamma0 is None:
        lp = np.log(counts / n)
        gamma = lp - lp.mean()
    else:
        gamma = np.array(gamma0, dtype=np.float64)
    Y = np.zeros((n, K))
    Y[np.arange(n), yi] = 1.0
    Xa = np.column_stack([np.ones(n), X])
    E = X @ beta.T + gamma
    trace = [float(_nll(E, yi) + _pen(beta, l1, l2))]
    residual = _mn_kkt(X, Y, beta, gamma, l1, l2)
    it = 0
    while residual >= tol and it < max_iter:
        gain = _recentre(beta, l1, l2)
        if gain > 0.0:
            trace.append(trace[-1] - gain)
            E = X @ beta.T + gamma
        change = _mn_step(Xa, yi, beta, gamma, E, l1, l2, max(1e-3 * residual, 1e-10))
        trace.append(trace[-1] + change)
        it += 1
        E = X @ beta.T + gamma  # refresh to avoid drift from incremental updates
        residual = _mn_kkt(X, Y, beta, gamma, l1, l2)
    if residual >= tol:
        raise ConvergenceError(f"multinomial elastic net did not converge in {it} iterations", residual)
    return MultinomialModel(beta, gamma, classes, stats, eta, nu, list(names or []), it, residual, trace)


def predict_rating(m: MultinomialModel, d):
    """Most probable class for raw distance row(s); ties go to the lowest class."""
    Pm = m.probabilities(d)
    idx = np.argmax(Pm, axis=-1)  # first maximum, i.e. lowest class
    if np.ndim(idx) == 0:
        return m.classes[int(idx)]
    return np.array([m.classes[i] for i in idx.tolist()])


# ---------------------------------------------------------------- tuning


def eta_max(kind: str, X, y, nu: float, classes: Sequence | None = None) -> float:
    """Smallest ``eta`` at which all coefficients are zero (``nu`` floored
    at 1e-3 so pure ridge gets a finite grid)."""
    X = np.asarray(X, dtype=np.float64)
    nu = max(nu, _NU_FLOOR)
    Xc = X - X.mean(axis=0)
    if kind == "linear":
        y = np.asarray(y, dtype=np.float64)
        g = 2.0 * Xc.T @ (y - y.mean())
    elif kind == "multinomial":
        if classes is None:
            classes = tuple(range(1, int(np.max(y)) + 1))
        yi = _class_index(y, classes)
        Y = np.zeros((yi.size, len(classes)))
        Y[np.arange(yi.size), yi] = 1.0
        g = Xc.T @ (Y - Y.mean(axis=0))
    else:
        raise ValidationError(f"unknown model kind {kind!r}")
    top = float(np.abs(g).max()) / nu
    return top if top > 0 else 1.0


def eta_grid(kind: str, X, y, nu: float, n: int = N_ETA, ratio: float = ETA_RATIO, classes=None) -> np.ndarray:
    top = eta_max(kind, X, y, nu, classes)
    return np.geomspace(top, top * ratio, n)


@dataclass
class TuneTrace:
    etas: np.ndarray
    nu: float
    scores: np.ndarray
    chosen_eta: float
    statistic: str
    protocol: str
    seed: int
    resamples: int = 0

    @property
    def best_score(self) -> float:
        return float(self.scores[self.etas.tolist().index(self.chosen_eta)])

    def as_dict(self) -> dict:
        return {
            "nu": self.nu,
            "statistic": self.statistic,
            "protocol": self.protocol,
            "seed": self.seed,
            "resamples": self.resamples,
            "eta": self.etas.tolist(),
            "score": [None if not np.isfinite(s) else float(s) for s in self.scores],
            "chosen_eta": self.chosen_eta,
        }


def _path(kind, X, y, etas, nu, classes, max_iter: int = 2000):
    """Fits along a descending eta grid with warm starts.

    A multinomial path stops early once the fit explains 99.9% of the null
    deviance or the deviance drops by less than 1e-5 of the null deviance between
    grid points (checked from the fifth point on); smaller penalties then
    only chase a (near-)separable optimum. It also stops at the first grid point that fails to converge.
    """
    warm: dict = {}
    prev_dev = None
    null_dev = None
    fitted = 0
    for eta in etas:
        try:
            if kind == "linear":
                m = fit_linear_enr(X, y, eta, nu, theta0=warm.get("theta"))
                warm["theta"] = m.theta
            else:
                m = fit_multinomial_enr(
                    X, y, eta, nu, classes=classes, beta0=warm.get("beta"),
                    gamma0=warm.get("gamma"), max_iter=max_iter,
                )
                warm["beta"], warm["gamma"] = m.beta, m.gamma
        except ConvergenceError as exc:
            logger.warning("path stopped at eta=%.6g: %s", eta, exc)
            return
        yield m
        if kind == "multinomial":
            dev = 2.0 * (m.objective_trace[-1] - float(_pen(m.beta, eta * nu, eta * (1.0 - nu))))
            if null_dev is None:
                counts = np.bincount(_class_index(y, m.classes), minlength=m.K)
                p = counts[counts > 0] / counts.sum()
                null_dev = -2.0 * float(counts[counts > 0] @ np.log(p))
            fitted += 1
            if fitted >= 5 and (dev <= 1e-3 * null_dev or prev_dev - dev < 1e-5 * null_dev):
                logger.info("path stopped at eta=%.6g: deviance saturated", eta)
                return
            prev_dev = dev


def _score(statistic: str, pred, obs) -> float:
    try:
        return float(STATISTICS[statistic](pred, obs))
    except UndefinedStatisticError:
        return math.nan


def _choose(etas, scores, maximise: bool) -> float:
    s = np.where(np.isnan(scores), -np.inf if maximise else np.inf, scores)
    k = int(np.argmax(s) if maximise else np.argmin(s))
    return float(etas[k])


def tune(
    kind: str,
    X,
    y,
    nu: float,
    eta_grid_: Sequence[float] | None = None,
    protocol: str | None = None,
    seed: int = 0,
    *,
    statistic: str | None = None,
    classes: Sequence | None = None,
    holdout_fraction: float = 0.6,
    n_folds: int = 5,
    scale: str = "std",
    max_resamples: int = 100,
    max_iter: int = 200,
) -> TuneTrace:
    """Pick ``eta`` for fixed ``nu`` on training rows only.

    ``protocol="holdout"`` (default for ``kind="multinomial"``) fits on a
    seeded ``holdout_fraction`` of rows and maximises ``statistic``
    (``tau_b``, ``rho_s`` or ``ba``) on the rest; inner splits missing a
    class are redrawn. ``protocol="kfold"`` (default for ``"linear"``)
    minimises the mean squared error over ``n_folds`` folds. Columns are
    re-standardised on each inner training part. Ties between grid points
    go to the larger ``eta``. Grid points a path never reached (see
    ``_path``) score NaN and are never chosen.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    if protocol is None:
        protocol = "holdout" if kind == "multinomial" else "kfold"
    if statistic is None:
        statistic = "tau_b" if kind == "multinomial" else "mse"
    if kind == "multinomial" and classes is None:
        classes = tuple(range(1, int(np.max(y)) + 1))
    etas = np.asarray(
        eta_grid(kind, X, y, nu, classes=classes) if eta_grid_ is None else eta_grid_, dtype=np.float64
    )
    if etas.size == 0:
        raise ValidationError("eta grid is empty")
    etas = np.sort(etas)[::-1]
    resamples = 0
    if protocol == "holdout":
        n_tr = int(round(holdout_fraction * n))
        if not 0 < n_tr < n:
            raise ValidationError("holdout split leaves an empty part")
        attempt = 0
        while True:
            perm = np.random.default_rng([seed, attempt]).permutation(n)
            tr, va = np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
            if kind != "multinomial" or len(np.unique(y[tr])) == len(classes):
                break
            attempt += 1
            resamples += 1
            logger.info("inner split %d lacks a class; redrawing", attempt)
            if attempt >= max_resamples:
                raise ValidationError("could not draw an inner split containing every class")
        folds = [(tr, va)]
    elif protocol == "kfold":
        if not 2 <= n_folds <= n:
            raise ValidationError(f"cannot make {n_folds} folds from {n} rows")
        perm = np.random.default_rng(seed).permutation(n)
        parts = np.array_split(perm, n_folds)
        folds = [
            (np.sort(np.concatenate(parts[:f] + parts[f + 1 :])), np.sort(parts[f])) for f in range(n_folds)
        ]
    else:
        raise ValidationError(f"unknown protocol {protocol!r}")
    maximise = statistic != "mse"
    totals = np.zeros(etas.size)
    fitted = np.zeros(etas.size, dtype=bool)
    for f, (tr, va) in enumerate(folds):
        Ztr, st = standardise(X[tr], scale=scale)
        Zva = st.apply(X[va])
        reached = np.zeros(etas.size, dtype=bool)
        for e, m in enumerate(_path(kind, Ztr, y[tr], etas, nu, classes, max_iter)):
            reached[e] = True
            if kind == "linear":
                pred = Zva @ m.theta + m.alpha
                totals[e] += float(np.mean((pred - y[va].astype(np.float64)) ** 2)) * va.size / n
            else:
                pred = np.asarray(m.classes)[np.argmax(Zva @ m.beta.T + m.gamma, axis=1)]
                totals[e] += _score(statistic, pred, y[va])
        fitted = reached if f == 0 else fitted & reached
    totals[~fitted] = np.nan
    if not fitted.any():
        raise ConvergenceError(f"no grid point converged for nu={nu}")
    chosen = _choose(etas, totals, maximise)
    logger.info("nu=%g: chose eta=%.6g (%s, %s)", nu, chosen, protocol, statistic)
    return TuneTrace(etas, float(nu), totals, chosen, statistic, protocol, seed, resamples)


def tune_nu(kind: str, X, y, nu_grid: Sequence[float] = NU_GRID, seed: int = 0, **kwargs):
    """Tune ``eta`` for every ``nu`` in the grid; returns the ``nu`` with the
    best validation score and the per-``nu`` traces."""
    traces = [tune(kind, X, y, nu, seed=seed, **kwargs) for nu in nu_grid]
    maximise = traces[0].statistic != "mse"
    best = np.array([t.best_score for t in traces])
    best = np.where(np.isnan(best), -np.inf if maximise else np.inf, best)
    k = int(np.argmax(best) if maximise else np.argmin(best))
    return float(nu_grid[k]), traces


def fit_tuned(kind: str, X, y, trace: TuneTrace, *, classes=None, max_iter: int = 2000, **attrs):
    """Refit on all rows at the chosen ``eta``, warm-starting down the grid.

    Keyword ``attrs`` (e.g. ``stats``, ``names``) are set on the model.
    """
    etas = trace.etas[trace.etas >= trace.chosen_eta]
    model = None
    for eta in etas:
        if kind == "linear":
            model = fit_linear_enr(X, y, eta, trace.nu, theta0=None if model is None else model.theta)
        else:
            model = fit_multinomial_enr(
                X, y, eta, trace.nu, classes=classes, max_iter=max_iter,
                beta0=None if model is None else model.beta,
                gamma0=None if model is None else model.gamma,
            )
    for key, value in attrs.items():
        setattr(model, key, value)
    return model


# ---------------------------------------------------------------- reporting


def normalised_magnitudes(coef) -> tuple[np.ndarray, bool]:
    """Coefficient magnitudes per column, summed over classes for a ``K x P``
    matrix, scaled to sum to one. All-zero coefficients give zeros and
    ``True`` as the second value."""
    a = np.abs(np.asarray(coef, dtype=np.float64))
    mag = a.sum(axis=0) if a.ndim == 2 else a
    total = mag.sum()
    if total == 0:
        return np.zeros_like(mag), True
    return mag / total, False


# ---------------------------------------------------------------- windows


@dataclass(frozen=True, eq=False)
class WindowedRows:
    X: np.ndarray
    centers: np.ndarray
    members: list[list[str]]


def window_group(track_ids: Sequence[str], years, X, window_days: int, origin: float | None = None) -> WindowedRows:
    """Average descriptor rows over non-overlapping chart-date windows.

    Windows are ``window_days`` long and start at ``origin`` (default: the
    earliest date in the set). The target of a window is its centre in
    fractional years; empty windows are dropped.
    """
    if window_days <= 0:
        raise ValidationError(f"window_days must be positive, got {window_days}")
    years = np.asarray(years, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if years.size != X.shape[0] or len(track_ids) != years.size:
        raise ValidationError("one date and one descriptor row per track required")
    if years.size == 0:
        raise ValidationError("no tracks to group")
    width = window_days / 365.25
    if origin is None:
        origin = float(years.min())
    slot = np.floor((years - origin) / width + 1e-9).astype(np.int64)
    uniq, inv = np.unique(slot, return_inverse=True)
    sums = np.zeros((uniq.size, X.shape[1]))
    np.add.at(sums, inv, X)
    counts = np.bincount(inv, minlength=uniq.size)
    members: list[list[str]] = [[] for _ in uniq]
    for k in np.argsort(years, kind="stable"):
        members[inv[k]].append(track_ids[k])
    return WindowedRows(sums / counts[:, None], origin + (uniq + 0.5) * width, members)
