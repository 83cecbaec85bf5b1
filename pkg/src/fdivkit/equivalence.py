"""Deciding whether two losses rank quantizers identically.

Two losses order all quantizers the same way for every experiment exactly
when their uncertainty functions are related by ``U1 = a U2 + b.p + c`` with
``a > 0`` (equivalently ``f1 = a f2 + b.t + c`` for the generators).  The fit
routines check that identity on a grid and validate it on a finer one;
``ranking_compare`` and ``counterexample_search`` test its consequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb

import numpy as np

from .divergences import Generator, OrderInstance, build_order_instance
from .experiment import DiscreteExperiment, simplex_grid
from .losses import LossFamily, uncertainty_of
from .quantize import quantized_bayes_risk
from .uncertainty import UncertaintyFn, statistical_information

REL_TOL = 1e-6
RANK_TOL = 1e-9
MAX_GRID = 60000


@dataclass(frozen=True)
class AffineFit:
    a: float
    b: np.ndarray
    c: float
    max_residual: float
    sample: dict
    equivalent: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b.tolist(), "c": self.c,
                "max_residual": self.max_residual, "sample": self.sample,
                "equivalent": self.equivalent, "reason": self.reason}


def _default_resolution(k: int) -> int:
    r = 20
    while r > 1 and comb(2 * r + k - 1, k - 1) > MAX_GRID:
        r -= 1
    return r


def _affine_residual(y, X):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, float(np.max(np.abs(X @ coef - y))) if y.size else 0.0


def _finite_pairs(U1, U2, pts):
    y, x = np.asarray(U1(pts), dtype=float), np.asarray(U2(pts), dtype=float)
    f1, f2 = np.isfinite(y), np.isfinite(x)
    ok = f1 & f2
    return pts[ok], y[ok], x[ok], bool(np.array_equal(f1, f2))


def affine_equivalence_U(U1: UncertaintyFn, U2: UncertaintyFn, resolution: int | None = None,
                         tol: float = REL_TOL) -> AffineFit:
    """Fit ``U1 = a U2 + b.p + c`` on a simplex grid, validate on the 2x grid.

    ``(b, c)`` is the minimal-norm choice among the equivalent ones (on the
    simplex ``b + t 1`` and ``c - t`` agree).  The verdict needs ``a > 1e-6``
    and a validation residual within ``tol (1 + max |U1|)``.  Only points where
    both functions are finite enter the fit; differing finite sets mean no
    affine relation.
    """
    if U1.k != U2.k:
        raise ValueError(f"dimension mismatch: {U1.k} vs {U2.k}")
    k = U1.k
    r = _default_resolution(k) if resolution is None else resolution
    grid, y, x, agree1 = _finite_pairs(U1, U2, simplex_grid(k, r))
    fine, y_f, x_f, agree2 = _finite_pairs(U1, U2, simplex_grid(k, 2 * r))
    sample = {"kind": "simplex-grid", "resolution": r, "validation_resolution": 2 * r,
              "points": int(len(grid)), "validation_points": int(len(fine)),
              "domains_agree": agree1 and agree2}
    if len(grid) < k + 2:
        raise ValueError(f"only {len(grid)} finite sample points; need at least {k + 2}")
    if not sample["domains_agree"]:
        # an affine relation maps finite values to finite values
        return AffineFit(0.0, np.zeros(k), 0.0, float("inf"), sample, False, "domains differ")
    scale = 1.0 + float(np.max(np.abs(y_f)))
    _, res2 = _affine_residual(x_f, fine)
    if res2 <= tol * (1.0 + float(np.max(np.abs(x_f)))):
        d, res1 = _affine_residual(y_f, fine)
        c = float(d.sum() / (k + 1))
        both = res1 <= tol * scale
        return AffineFit(1.0 if both else 0.0, d - c, c, res1, sample, both,
                         "both affine" if both else "U2 is affine while U1 is not")
    coef, _ = _affine_residual(y, np.column_stack([x, grid]))
    a, d = float(coef[0]), coef[1:]
    c = float(d.sum() / (k + 1))
    b = d - c
    resid = float(np.max(np.abs(y_f - (a * x_f + fine @ b + c))))
    ok = a > 1e-6 and resid <= tol * scale
    reason = "" if ok else ("non-positive scale" if a <= 1e-6 else "residual above tolerance")
    return AffineFit(a, b, c, resid, sample, bool(ok), reason)


def _lattice(d: int, T: float, res: int, shift: float) -> np.ndarray:
    ticks = (np.arange(res + (shift == 0)) + shift) * (T / res)
    return np.array(list(product(ticks, repeat=d)), dtype=float)


def affine_equivalence_f(g1: Generator, g2: Generator, pi=None, T: float = 4.0,
                         resolution: int | None = None, tol: float = REL_TOL) -> AffineFit:
    """Fit ``f1 = a f2 + b.t + c`` on the lattice ``[0, T]^(k-1)``.

    Only points where both generators are finite enter; the cell-centre
    lattice validates the fit.  ``sample["domains_agree"]`` reports whether
    the two finite sets coincide.
    """
    if g1.arity != g2.arity:
        raise ValueError(f"arity mismatch: {g1.arity} vs {g2.arity}")
    d = g1.arity
    res = resolution
    if res is None:
        res = 8
        while res > 2 and (res + 1) ** d > 4000:
            res -= 1
    fit_pts, val_pts = _lattice(d, T, res, 0.0), _lattice(d, T, res, 0.5)

    def finite(pts):
        v1, v2 = np.asarray(g1(pts), dtype=float), np.asarray(g2(pts), dtype=float)
        f1, f2 = np.isfinite(v1), np.isfinite(v2)
        ok = f1 & f2
        return pts[ok], v1[ok], v2[ok], bool(np.array_equal(f1, f2))

    P, y, x, agree1 = finite(fit_pts)
    V, y_v, x_v, agree2 = finite(val_pts)
    if len(P) < d + 3:
        raise ValueError(f"only {len(P)} finite sample points; need at least {d + 3}")
    sample = {"kind": "lattice", "box": T, "resolution": res, "points": int(len(P)),
              "validation_points": int(len(V)), "domains_agree": agree1 and agree2,
              "pi": None if pi is None else np.asarray(pi, dtype=float).tolist()}
    ones = np.ones((len(P), 1))
    _, res2 = _affine_residual(x, np.hstack([P, ones]))
    scale = 1.0 + float(np.max(np.abs(y_v))) if y_v.size else 1.0
    if res2 <= tol * (1.0 + float(np.max(np.abs(x)))):
        coef, res1 = _affine_residual(y, np.hstack([P, ones]))
        both = res1 <= tol * scale
        return AffineFit(1.0 if both else 0.0, coef[:-1], float(coef[-1]), res1, sample, both,
                         "both affine" if both else "f2 is affine while f1 is not")
    coef, _ = _affine_residual(y, np.column_stack([x, P, ones]))
    a, b, c = float(coef[0]), coef[1:-1], float(coef[-1])
    resid = float(np.max(np.abs(y_v - (a * x_v + V @ b + c)))) if y_v.size else 0.0
    ok = a > 1e-6 and resid <= tol * scale
    reason = "" if ok else ("non-positive scale" if a <= 1e-6 else "residual above tolerance")
    return AffineFit(a, b, c, resid, sample, bool(ok), reason)


# -- rankings -----------------------------------------------------------------

@dataclass(frozen=True)
class RankingReport:
    quantizers: list
    info_a: np.ndarray  # (n_experiments, n_quantizers)
    info_b: np.ndarray
    orders_a: np.ndarray
    orders_b: np.ndarray
    agreement: bool
    first_disagreement: tuple | None = None

    def to_dict(self) -> dict:
        return {"quantizers": [q.assignment.tolist() for q in self.quantizers],
                "info_a": self.info_a.tolist(), "info_b": self.info_b.tolist(),
                "agreement": self.agreement,
                "first_disagreement": self.first_disagreement}


def weak_order(values, tol: float = RANK_TOL) -> np.ndarray:
    """Rank ``r_i`` = number of entries strictly above ``v_i`` (beyond the tie
    tolerance, relative to the value scale)."""
    v = np.asarray(values, dtype=float)
    eps = tol * (1.0 + np.max(np.abs(v)))
    return np.sum(v[None, :] > v[:, None] + eps, axis=1)


def _pair_signs(v, tol):
    eps = tol * (1.0 + np.max(np.abs(v)))
    diff = v[:, None] - v[None, :]
    return np.where(diff > eps, 1, np.where(diff < -eps, -1, 0))


def quantized_information(exp: DiscreteExperiment, loss: LossFamily, q) -> float:
    """``U_loss(prior) - quantized Bayes risk``."""
    from .losses import pointwise_bayes

    return pointwise_bayes(loss, exp.prior).value - quantized_bayes_risk(exp, loss, q)


def ranking_compare(exps, quantizers, loss_a: LossFamily, loss_b: LossFamily,
                    tol: float = RANK_TOL) -> RankingReport:
    """Compare the weak orders two losses induce on a quantizer list, per
    experiment.  The first disagreement is ``(experiment, q_i, q_j)``."""
    quantizers = list(quantizers)
    ia = np.array([[quantized_information(e, loss_a, q) for q in quantizers] for e in exps])
    ib = np.array([[quantized_information(e, loss_b, q) for q in quantizers] for e in exps])
    first = None
    for e in range(len(exps)):
        bad = np.argwhere(_pair_signs(ia[e], tol) != _pair_signs(ib[e], tol))
        if bad.size:
            first = (e, int(bad[0][0]), int(bad[0][1]))
            break
    oa = np.array([weak_order(row, tol) for row in ia])
    ob = np.array([weak_order(row, tol) for row in ib])
    return RankingReport(quantizers, ia, ib, oa, ob, first is None, first)


# -- counterexample search ----------------------------------------------------

@dataclass(frozen=True)
class Witness:
    instance: OrderInstance
    columns_a: np.ndarray
    columns_b: np.ndarray
    info_a: tuple  # (q1, q2) under loss A
    info_b: tuple
    validated: bool

    def to_dict(self) -> dict:
        return {"columns_a": self.columns_a.tolist(), "columns_b": self.columns_b.tolist(),
                "M": self.instance.M, "info_a": list(self.info_a),
                "info_b": list(self.info_b), "validated": self.validated,
                "experiment": self.instance.experiment.to_dict()}


@dataclass(frozen=True)
class SearchResult:
    witness: Witness | None
    examined: int
    params: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.witness is not None

    def to_dict(self) -> dict:
        return {"found": self.found, "examined": self.examined, "params": self.params,
                "witness": None if self.witness is None else self.witness.to_dict()}


def _centered_perturbation(rng, v, m):
    """``m`` columns ``v + e_i`` in the simplex with ``sum_i e_i = 0``."""
    k = v.size
    E = rng.normal(size=(k, m))
    E -= E.mean(axis=0, keepdims=True)
    E -= E.mean(axis=1, keepdims=True)
    neg = E < 0
    lim = np.min(v[:, None].repeat(m, 1)[neg] / -E[neg]) if np.any(neg) else 1.0
    return v[:, None] + rng.uniform(0.2, 1.0) * lim * E


def _validate(inst: OrderInstance, UA, UB, margin: float):
    exp = inst.experiment
    ia = tuple(statistical_information(exp, UA, q).information for q in (inst.q1, inst.q2))
    ib = tuple(statistical_information(exp, UB, q).information for q in (inst.q1, inst.q2))
    da, db = ia[0] - ia[1], ib[0] - ib[1]
    return ia, ib, bool(da * db < 0 and abs(da) > margin and abs(db) > margin)


def counterexample_search(loss_a: LossFamily, loss_b: LossFamily, k: int,
                          max_outcomes: int = 100, budget: int = 100000, seed: int = 0,
                          margin: float = 1e-9) -> SearchResult:
    """Random search for an experiment on which two quantizers are ranked in
    opposite orders by the two losses.

    Each candidate is a pair of column matrices with equal row sums, columns
    in the simplex, compared through ``sum U(a_i)`` against ``sum U(b_j)``.
    A flip is turned into a finite experiment (at most ``max_outcomes``
    outcomes) and accepted only if recomputing both informations reproduces
    it.  Runs sequentially; the result depends only on the arguments.
    """
    if loss_a.k != k or loss_b.k != k:
        raise ValueError("losses must both have k classes")
    UA, UB = uncertainty_of(loss_a), uncertainty_of(loss_b)
    rng = np.random.default_rng(seed)
    side = int(np.floor(np.sqrt(max_outcomes)))
    params = {"k": k, "max_outcomes": max_outcomes, "budget": budget, "seed": seed}
    for t in range(budget):
        v = rng.dirichlet(np.full(k, 4.0))
        M0 = max(1, int(np.ceil(k * v.max() - 1.0 - 1e-12)))
        m_max = side // (M0 + 1)
        if m_max < 2:
            continue
        m = int(rng.integers(2, m_max + 1))
        A = _centered_perturbation(rng, v, m)
        B = _centered_perturbation(rng, v, m)
        A, B = np.clip(A, 0, None), np.clip(B, 0, None)
        A /= A.sum(axis=0, keepdims=True)
        B /= B.sum(axis=0, keepdims=True)
        # renormalizing may move the row sums; re-centre B on A's mean
        B += (A.sum(axis=1, keepdims=True) - B.sum(axis=1, keepdims=True)) / m
        if np.any(B < 0):
            continue
        sa = UA(A.T).sum() - UA(B.T).sum()
        sb = UB(A.T).sum() - UB(B.T).sum()
        if not (sa * sb < 0 and abs(sa) > margin and abs(sb) > margin):
            continue
        try:
            inst = build_order_instance(A, B, mode="uncertainty")
        except (ValueError, RuntimeError):
            continue
        if inst.M ** 2 > max_outcomes:
            continue
        ia, ib, ok = _validate(inst, UA, UB, margin)
        if ok:
            return SearchResult(Witness(inst, A, B, ia, ib, True), t + 1, params)
    return SearchResult(None, budget, params)


def validate_witness(w: Witness, loss_a: LossFamily, loss_b: LossFamily) -> bool:
    """Recompute both quantized informations from the loss solvers."""
    exp, q1, q2 = w.instance.experiment, w.instance.q1, w.instance.q2
    da = quantized_information(exp, loss_a, q1) - quantized_information(exp, loss_a, q2)
    db = quantized_information(exp, loss_b, q1) - quantized_information(exp, loss_b, q2)
    return bool(da * db < 0)
