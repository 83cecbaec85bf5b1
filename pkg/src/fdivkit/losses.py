"""Multiclass loss families and their correspondences with U and f.

A loss family is a vector ``(loss_1, ..., loss_k)`` of functions of a decision
vector ``alpha`` in R^k.  This module builds the standard families, solves the
pointwise Bayes problem ``inf_alpha sum_i pi_i loss_i(alpha)``, and implements
the three constructions linking losses, uncertainty functions and generators:

* ``loss_from_uncertainty``: ``loss_i(alpha) = -alpha_i + (-U)^*(alpha)``
* ``generator_from_loss``: the f whose divergence is the prior/posterior risk gap
* ``loss_from_generator``: ``U(p) = -k p_k f(p_1/p_k, ...)`` and its loss
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .divergences import Generator, perspective_eval
from .experiment import cost_matrix, zero_one_costs
from .optim import bisect_decreasing, maximize_concave_simplex, project_sum_zero
from .uncertainty import (
    UncertaintyFn,
    make_uncertainty,
    max_order_conjugate,
)

LOSS_KINDS = ("zero-one", "weighted-zero-one", "hinge", "logistic", "family-wise")
DISCRETE_KINDS = ("zero-one", "weighted-zero-one")
LOG_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class LossFamily:
    """Component losses ``loss_1..loss_k`` evaluated together.

    ``evaluate(alpha)`` maps ``(..., k)`` decision vectors to ``(..., k)``
    component values (``+inf`` off the feasible set).  ``subgradients(alpha)``
    returns a ``k x k`` array whose row ``i`` is a subgradient of ``loss_i``.
    """

    kind: str
    k: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    subgradients: Callable[[np.ndarray], np.ndarray] | None = None
    constraint: str = "none"  # or "sum-zero"
    translation_invariant: bool = False
    lower_bound: float = 0.0
    C: np.ndarray | None = None
    uncertainty: UncertaintyFn | None = None
    approximate: bool = False
    params: dict = field(default_factory=dict)

    @property
    def discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    def values(self, alpha) -> np.ndarray:
        return np.asarray(self.evaluate(np.asarray(alpha, dtype=float)), dtype=float)

    def risk(self, pi, alpha) -> float:
        """``sum_i pi_i loss_i(alpha)`` with ``0 * inf = 0``."""
        pi = np.asarray(pi, dtype=float)
        v = self.values(alpha)
        on = pi > 0
        return float(np.dot(pi[on], v[..., on].T) if v.ndim == 1 else v[..., on] @ pi[on])

    def feasible(self, alpha) -> bool:
        if self.constraint != "sum-zero":
            return True
        alpha = np.asarray(alpha, dtype=float)
        return abs(alpha.sum()) <= 1e-9 * (1.0 + np.max(np.abs(alpha)))


@dataclass(frozen=True)
class BayesSolution:
    value: float
    alpha: np.ndarray
    gap_estimate: float
    method: str

    def to_dict(self) -> dict:
        return {"value": self.value, "alpha": self.alpha.tolist(),
                "gap_estimate": self.gap_estimate, "method": self.method}


# -- built-in families --------------------------------------------------------

def _argmax_mask(alpha):
    return alpha == alpha.max(axis=-1, keepdims=True)


def _weighted_zero_one(k: int, C) -> LossFamily:
    def evaluate(alpha):
        mask = _argmax_mask(alpha)
        # loss_y = max_i {c_yi : alpha_i attains max alpha}
        return np.max(np.where(mask[..., None, :], C, -np.inf), axis=-1)

    kind = "zero-one" if np.array_equal(C, zero_one_costs(k)) else "weighted-zero-one"
    return LossFamily(kind, k, evaluate, None, lower_bound=0.0, C=C)


def _sum_zero_guard(alpha, vals):
    s = np.abs(alpha.sum(axis=-1))
    bad = s > 1e-9 * (1.0 + np.max(np.abs(alpha), axis=-1))
    return np.where(bad[..., None], np.inf, vals)


def _hinge(k: int, C) -> LossFamily:
    def evaluate(alpha):
        plus = np.maximum(1.0 + alpha, 0.0)
        return _sum_zero_guard(alpha, plus @ C.T)

    def subgradients(alpha):
        return C * (alpha > -1.0)[None, :]

    return LossFamily("hinge", k, evaluate, subgradients, constraint="sum-zero",
                      lower_bound=0.0, C=C)


def _logistic(k: int) -> LossFamily:
    def evaluate(alpha):
        return logsumexp(alpha, axis=-1, keepdims=True) - alpha

    def subgradients(alpha):
        return softmax(alpha)[None, :] - np.eye(k)

    return LossFamily("logistic", k, evaluate, subgradients,
                      translation_invariant=True, lower_bound=0.0,
                      uncertainty=make_uncertainty("entropy", k))


def familywise_conjugate(alpha) -> float:
    """``1 + max_l (mean of the l largest entries of alpha - 1/l)``."""
    return max_order_conjugate(alpha)


def make_loss(kind: str, k: int, C=None) -> LossFamily:
    """``zero-one``, ``weighted-zero-one`` (needs C), ``hinge`` (C optional),
    ``logistic`` or ``family-wise``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if kind == "zero-one":
        return _weighted_zero_one(k, zero_one_costs(k))
    if kind == "weighted-zero-one":
        if C is None:
            raise ValueError("weighted-zero-one needs a cost matrix")
        return _weighted_zero_one(k, cost_matrix(C))
    if kind == "hinge":
        C = zero_one_costs(k) if C is None else cost_matrix(C)
        return _hinge(k, C)
    if kind == "logistic":
        return _logistic(k)
    if kind == "family-wise":
        loss = loss_from_uncertainty(make_uncertainty("zero-one", k))
        return _retag(loss, "family-wise")
    raise ValueError(f"unknown loss kind {kind!r}")


def _retag(loss: LossFamily, kind: str) -> LossFamily:
    return LossFamily(kind, loss.k, loss.evaluate, loss.subgradients, loss.constraint,
                      loss.translation_invariant, loss.lower_bound, loss.C,
                      loss.uncertainty, loss.approximate, loss.params)


def loss_from_dict(spec) -> LossFamily:
    if isinstance(spec, str):
        raise ValueError("loss description needs k")
    C = spec.get("C")
    return make_loss(spec["kind"], int(spec["k"]), None if C is None else np.asarray(C))


def zero_loss(k: int) -> LossFamily:
    """All components identically zero; calibrated nowhere."""
    return LossFamily("zero", k, lambda a: np.zeros(np.shape(a)),
                      lambda a: np.zeros((k, k)), translation_invariant=True)


# -- loss from an uncertainty function ----------------------------------------

def _conjugate_fn(U: UncertaintyFn, tol: float):
    if U.conjugate is not None:
        return U.conjugate, False

    def numeric(alpha):
        alpha = np.asarray(alpha, dtype=float)
        sg = None
        if U.supergradient is not None:
            sg = lambda p: alpha + U.supergradient(p)  # noqa: E731
        res = maximize_concave_simplex(lambda P: P @ alpha + U(P), U.k, grad=sg, tol=tol)
        return res.value

    return numeric, True


def loss_from_uncertainty(U: UncertaintyFn, tol: float = 1e-7) -> LossFamily:
    """``loss_i(alpha) = -alpha_i + (-U)^*(alpha)``.

    Uses the closed-form conjugate when ``U`` carries one; otherwise each
    query maximizes ``p.alpha + U(p)`` over the simplex numerically and the
    family is flagged approximate.
    """
    conj, approx = _conjugate_fn(U, tol)
    k = U.k

    def evaluate(alpha):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim == 1:
            return conj(alpha) - alpha
        flat = alpha.reshape(-1, k)
        c = np.array([conj(a) for a in flat]).reshape(alpha.shape[:-1] + (1,))
        return c - alpha

    def subgradients(alpha, h=1e-7):
        # Danskin: grad of the conjugate is the maximizing p; estimated by differences
        alpha = np.asarray(alpha, dtype=float)
        base = conj(alpha)
        g = np.empty(k)
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            g[j] = (conj(alpha + e) - base) / h
        return g[None, :] - np.eye(k)

    return LossFamily("from-uncertainty", k, evaluate, subgradients,
                      translation_invariant=True, lower_bound=_lower_bound(U),
                      uncertainty=U, approximate=approx,
                      params={"uncertainty": U.provenance})


def _lower_bound(U: UncertaintyFn) -> float:
    # loss_i(alpha) >= U(e_i); the vertices give the bound
    return float(np.min(U(np.eye(U.k))))


# -- pointwise Bayes ----------------------------------------------------------

def pointwise_bayes(loss: LossFamily, pi, *, iters: int = 5000, seed: int = 0,
                    radius: float | None = None) -> BayesSolution:
    """Minimize ``sum_i pi_i loss_i(alpha)`` over decision vectors.

    Discrete and hinge losses are solved combinatorially (winner coordinate
    ``k-1``, the rest ``-1``; ties to the lowest index), logistic in closed
    form, losses built from an uncertainty function through its supergradient
    (with the value of ``U`` as a certified lower bound), and anything else by
    multi-start projected subgradient descent.
    """
    pi = np.asarray(pi, dtype=float)
    k = loss.k
    if pi.shape != (k,):
        raise ValueError(f"pi must have length {k}")
    if loss.discrete or loss.kind == "hinge":
        risks = pi @ loss.C
        l = int(np.argmin(risks))
        alpha = np.full(k, -1.0)
        alpha[l] = k - 1.0
        scale = 1.0 if loss.discrete else float(k)
        return BayesSolution(scale * float(risks[l]), alpha, 0.0, "combinatorial")
    if loss.kind == "logistic":
        alpha = project_sum_zero(np.log(np.maximum(pi, 1e-300)))
        value = float(-xlogy(pi, pi).sum())
        return BayesSolution(value, alpha, 0.0, "closed-form")
    if loss.uncertainty is not None:
        sol = _dual_solution(loss, pi)
        if sol is not None and sol.gap_estimate <= 1e-9 * (1.0 + abs(sol.value)):
            return sol
        sub = subgradient_minimize(loss, pi, iters=iters, seed=seed, radius=radius,
                                   extra_starts=[] if sol is None else [sol.alpha])
        lower = loss.uncertainty(pi)
        best = sub if sol is None or sub.value < sol.value else sol
        return BayesSolution(best.value, best.alpha, max(0.0, best.value - lower),
                             best.method)
    return subgradient_minimize(loss, pi, iters=iters, seed=seed, radius=radius)


def _dual_solution(loss: LossFamily, pi) -> BayesSolution | None:
    U = loss.uncertainty
    if U.supergradient is None:
        return None
    lower = U(pi)
    best = None
    # on the boundary the supergradient may be infinite; nudge toward the centre
    for eps in (0.0, 1e-13, 1e-10, 1e-7):
        p = pi if eps == 0 else (1 - eps) * pi + eps / pi.size
        g = np.asarray(U.supergradient(p), dtype=float)
        if not np.all(np.isfinite(g)):
            continue
        alpha = project_sum_zero(-g)
        value = loss.risk(pi, alpha)
        if np.isfinite(value) and (best is None or value < best.value):
            best = BayesSolution(value, alpha, max(0.0, value - lower), "conjugate-dual")
        if best is not None and best.gap_estimate <= 1e-12 * (1.0 + abs(lower)):
            break
    return best


def subgradient_minimize(loss: LossFamily, pi, *, iters: int = 5000, seed: int = 0,
                         radius: float | None = None, project=None,
                         extra_starts=()) -> BayesSolution:
    """Multi-start projected subgradient descent on ``sum_i pi_i loss_i``.

    Iterates stay in the ball of the given radius (default ``10 k``) and, for
    sum-zero or translation-invariant families, on ``{1.alpha = 0}``.
    ``project`` adds a further projection (used for constrained problems).
    The gap estimate is the spread of the final values across starts.
    """
    if loss.subgradients is None:
        raise ValueError(f"loss {loss.kind!r} has no subgradients")
    pi = np.asarray(pi, dtype=float)
    k = loss.k
    R = 10.0 * k if radius is None else radius
    center = loss.constraint == "sum-zero" or loss.translation_invariant
    rng = np.random.default_rng(seed)

    def proj(a):
        if project is not None:
            a = project(a)
        if center:
            a = project_sum_zero(a)
        n = np.linalg.norm(a)
        return a if n <= R else a * (R / n)

    starts = [np.zeros(k)] + [np.eye(k)[j] * k - 1.0 for j in range(k)]
    starts += [rng.normal(size=k) for _ in range(2)] + [np.asarray(s) for s in extra_starts]
    on = pi > 0
    results = []
    for s in starts:
        a = proj(np.asarray(s, dtype=float))
        best_a, best_v = a, loss.risk(pi, a)
        step0 = 1.0
        for t in range(iters):
            G = loss.subgradients(a)
            g = pi[on] @ G[on]
            if center:
                g = g - g.mean()
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            a = proj(a - (step0 / np.sqrt(t + 1.0)) * g / gn)
            v = loss.risk(pi, a)
            if v < best_v:
                best_a, best_v = a, v
        results.append((best_v, best_a))
    vals = np.array([r[0] for r in results])
    i = int(np.argmin(vals))
    spread = float(np.max(vals[np.isfinite(vals)]) - vals[i]) if np.any(np.isfinite(vals)) else np.inf
    return BayesSolution(float(vals[i]), results[i][1], spread, "subgradient")


# -- generator from a loss ----------------------------------------------------

def achievable_loss_vectors(loss: LossFamily) -> np.ndarray:
    """Loss vectors ``(max_{i in T} c_yi)_y`` over nonempty argmax sets T."""
    if not loss.discrete:
        raise ValueError("only discrete losses have a finite set of loss vectors")
    k = loss.k
    rows = []
    for r in range(1, k + 1):
        for T in combinations(range(k), r):
            rows.append(loss.C[:, list(T)].max(axis=1))
    return np.unique(np.array(rows), axis=0)


def generator_from_loss(loss: LossFamily, pi) -> Generator:
    """``f(t) = sup_alpha {U(pi) - sum_{i<k} pi_i loss_i(alpha) t_i - pi_k loss_k(alpha)}``.

    Discrete losses take the max over their finitely many loss vectors.  For
    the rest the supremum is ``U(pi) - s U(w / s)`` with ``w = (pi_{<k} t,
    pi_k)`` and ``s = sum w``, evaluated by the pointwise Bayes solver.  The
    largest solver gap seen is kept in ``params["gap"]``.
    """
    pi = np.asarray(pi, dtype=float)
    k = loss.k
    if pi.shape != (k,):
        raise ValueError(f"pi must have length {k}")
    if np.any(pi <= 0):
        raise ValueError("generator_from_loss needs a strictly positive prior")
    if not np.isfinite(loss.lower_bound):
        raise ValueError("generator_from_loss needs a loss bounded below")
    base = pointwise_bayes(loss, pi)
    U0 = base.value
    diag = {"loss": loss.kind, "pi": pi.tolist(), "gap": base.gap_estimate}

    if loss.discrete:
        L = achievable_loss_vectors(loss)
        slope = L[:, :-1] * pi[:-1]  # (n_vec, k-1)
        offset = U0 - pi[-1] * L[:, -1]

        def fn(t):
            t = np.asarray(t, dtype=float)
            return np.max(offset - t @ slope.T if t.ndim > 1 else offset - slope @ t, axis=-1)

        def rec(d):
            d = np.asarray(d, dtype=float)
            return np.max(-(d @ slope.T) if d.ndim > 1 else -(slope @ d), axis=-1)

        return Generator("from-loss", k - 1, fn, rec, params=diag)

    def inner(w):
        s = w.sum()
        if s <= 0:
            return 0.0
        sol = pointwise_bayes(loss, w / s)
        diag["gap"] = max(diag["gap"], s * sol.gap_estimate)
        return s * sol.value

    def fn(t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_2d(t).reshape(-1, k - 1)
        out = np.array([U0 - inner(np.append(pi[:-1] * row, pi[-1])) for row in flat])
        return out[0] if t.ndim == 1 else out.reshape(t.shape[:-1])

    def rec(d):
        d = np.asarray(d, dtype=float)
        flat = np.atleast_2d(d).reshape(-1, k - 1)
        out = np.array([-inner(np.append(pi[:-1] * row, 0.0)) for row in flat])
        return out.reshape(d.shape[:-1]) if d.ndim > 1 else out[0]

    return Generator("from-loss", k - 1, fn, rec, params=diag)


# -- loss from a generator ----------------------------------------------------

def uncertainty_from_generator(g: Generator) -> UncertaintyFn:
    """``U(p) = -k p_k f(p_1/p_k, ..., p_{k-1}/p_k)`` via the closed perspective."""
    k = g.k

    def fn(P):
        return -k * perspective_eval(g, P[:, :-1], P[:, -1])

    conj = None
    if g.conjugate is not None:
        def conj(alpha):
            alpha = np.asarray(alpha, dtype=float)

            def phi(lam):
                with np.errstate(over="ignore", invalid="ignore"):
                    v = alpha[-1] - lam + k * float(g.conjugate((alpha[:-1] - lam) / k))
                return np.inf if np.isnan(v) else v

            hi = float(alpha.max())
            step = 1.0
            while phi(hi) > 0:
                hi += step
                step *= 2.0
            return bisect_decreasing(phi, hi - 1.0, hi)

    sg = None
    if g.grad is not None:
        def sg(p):
            p = np.asarray(p, dtype=float)
            if p[-1] <= 0:
                return np.full(k, np.nan)
            t = p[:-1] / p[-1]
            with np.errstate(invalid="ignore"):
                gr = np.asarray(g.grad(t), dtype=float)
                last = float(g.fn(t)) - float(gr @ t)
            return -k * np.append(gr, last)

    return UncertaintyFn(k, fn, "from-generator", conjugate=conj, supergradient=sg,
                         params={"generator": g.name})


def loss_from_generator(g: Generator, k: int | None = None):
    """Return ``(U, loss)`` whose information/risk gap at the uniform prior is
    the ``g``-divergence."""
    if k is not None and k != g.k:
        raise ValueError(f"generator arity {g.arity} does not match k={k}")
    U = uncertainty_from_generator(g)
    return U, _retag(loss_from_uncertainty(U), "from-generator")


def uncertainty_of(loss: LossFamily) -> UncertaintyFn:
    """Closed-form ``U_loss`` for built-in families, else the solver-backed one."""
    k = loss.k
    if loss.kind in ("zero-one", "family-wise"):
        return make_uncertainty("zero-one", k)
    if loss.kind == "weighted-zero-one":
        return make_uncertainty("cost-weighted", k, loss.C)
    if loss.kind == "hinge":
        return make_uncertainty("hinge-induced", k, loss.C)
    if loss.kind == "logistic":
        return make_uncertainty("entropy", k)
    if loss.uncertainty is not None:
        return loss.uncertainty
    from .uncertainty import uncertainty_from_loss

    return uncertainty_from_loss(loss)
