"""Concave uncertainty functions on the simplex and DeGroot information.

An uncertainty function ``U`` measures how hard it is to guess the label from
a posterior; the information of an experiment is ``U(prior) - E[U(posterior)]``
with the expectation under the (possibly quantized) marginal.  ``U`` is only
ever evaluated on the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp, xlogy

from .experiment import (
    DiscreteExperiment,
    Quantizer,
    cost_matrix,
    posterior_from_joint,
    zero_one_costs,
)

UNCERTAINTY_KINDS = ("zero-one", "cost-weighted", "entropy", "hinge-induced")


@dataclass(frozen=True)
class UncertaintyFn:
    """Concave ``U`` on the k-simplex.

    ``fn`` maps ``(n, k)`` rows to ``n`` values.  ``conjugate(alpha)`` returns
    ``sup_p {p.alpha + U(p)}`` when a closed form exists; ``supergradient(p)``
    returns some element of the superdifferential (up to adding a multiple of
    the ones vector).
    """

    k: int
    fn: Callable[[np.ndarray], np.ndarray]
    provenance: str
    conjugate: Callable[[np.ndarray], float] | None = None
    supergradient: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.k:
            raise ValueError(f"U is defined on the {self.k}-simplex, got length {p.shape[-1]}")
        if p.ndim == 1:
            return float(np.asarray(self.fn(p[None]))[0])
        return np.asarray(self.fn(p), dtype=float)


def max_order_conjugate(alpha) -> float:
    """``sup_{p in simplex} {p.alpha + 1 - max_j p_j}`` in closed form.

    Equals ``1 + max_l (sum of the l largest entries - 1) / l``.
    """
    a = np.sort(np.asarray(alpha, dtype=float))[::-1]
    l = np.arange(1, a.size + 1)
    return float(1.0 + np.max((np.cumsum(a) - 1.0) / l))


def _zero_one(k: int) -> UncertaintyFn:
    def sg(p):
        g = np.zeros(k)
        g[int(np.argmax(p))] = -1.0
        return g

    return UncertaintyFn(k, lambda P: 1.0 - P.max(axis=1), "zero-one",
                         conjugate=max_order_conjugate, supergradient=sg)


def _entropy(k: int) -> UncertaintyFn:
    def sg(p):
        with np.errstate(divide="ignore"):
            return -np.log(p) - 1.0

    return UncertaintyFn(k, lambda P: -xlogy(P, P).sum(axis=1), "entropy",
                         conjugate=lambda a: float(logsumexp(a)), supergradient=sg)


def min_linear_conjugate(alpha, C, scale: float = 1.0) -> float:
    """``sup_p {p.alpha + scale * min_l p.c_l}`` over the simplex, by LP."""
    alpha = np.asarray(alpha, dtype=float)
    k = alpha.size
    # variables (p_1..p_k, z); maximize alpha.p + z
    cost = -np.append(alpha, 1.0)
    A_ub = np.hstack([-scale * C.T, np.ones((k, 1))])
    res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(k),
                  A_eq=np.append(np.ones(k), 0.0)[None], b_eq=[1.0],
                  bounds=[(0, None)] * k + [(None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(f"conjugate LP failed: {res.message}")
    return float(-res.fun)


def _min_linear(k: int, C, scale: float, name: str) -> UncertaintyFn:
    C = cost_matrix(C)
    if C.shape[0] != k:
        raise ValueError(f"cost matrix must be {k} x {k}")

    def sg(p):
        return scale * C[:, int(np.argmin(p @ C))]

    return UncertaintyFn(k, lambda P: scale * (P @ C).min(axis=1), name,
                         conjugate=lambda a: min_linear_conjugate(a, C, scale),
                         supergradient=sg, params={"C": C.tolist()})


def make_uncertainty(kind: str, k: int, C=None) -> UncertaintyFn:
    """Built-in uncertainty functions.

    ``zero-one``: ``1 - max p``; ``cost-weighted``: ``min_l p.c_l``;
    ``entropy``: Shannon entropy in nats; ``hinge-induced``: ``k min_l p.c_l``
    (``C`` defaults to the zero-one costs for the last two).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if kind == "zero-one":
        return _zero_one(k)
    if kind == "entropy":
        return _entropy(k)
    if kind in ("cost-weighted", "hinge-induced"):
        C = zero_one_costs(k) if C is None else C
        return _min_linear(k, C, 1.0 if kind == "cost-weighted" else float(k), kind)
    raise ValueError(f"unknown uncertainty kind {kind!r}")


def uncertainty_from_dict(spec: dict) -> UncertaintyFn:
    return make_uncertainty(spec["kind"], int(spec["k"]), spec.get("C"))


def infimal_uncertainty(loss, pi, **opts):
    """``inf_alpha sum_i pi_i loss_i(alpha)``, solved by the pointwise Bayes solver.

    Returns the full :class:`~fdivkit.losses.BayesSolution` (value, argmin,
    gap estimate, method).
    """
    from .losses import pointwise_bayes

    return pointwise_bayes(loss, pi, **opts)


def uncertainty_from_loss(loss, **opts) -> UncertaintyFn:
    """``U_loss`` evaluated pointwise through the Bayes solver."""

    def fn(P):
        return np.array([infimal_uncertainty(loss, p, **opts).value for p in P])

    return UncertaintyFn(loss.k, fn, "from-loss", params={"loss": loss.kind})


@dataclass(frozen=True)
class InformationReport:
    prior_uncertainty: float
    posterior_uncertainty: float
    information: float
    quantizer: list | None = None

    def to_dict(self) -> dict:
        return {
            "prior_uncertainty": self.prior_uncertainty,
            "posterior_uncertainty": self.posterior_uncertainty,
            "information": self.information,
            "quantizer": self.quantizer,
        }


def expected_posterior_uncertainty(joint, U: UncertaintyFn) -> float:
    """``sum_x marginal(x) U(posterior(x))`` over outcomes with positive mass."""
    table = posterior_from_joint(joint)
    ok = table.defined
    if not np.any(ok):
        return 0.0
    vals = U(table.posteriors[ok])
    return float(np.dot(table.marginal[ok], vals))


def statistical_information(exp: DiscreteExperiment, U: UncertaintyFn,
                            q: Quantizer | None = None) -> InformationReport:
    if U.k != exp.k:
        raise ValueError(f"U has dimension {U.k}, experiment has k={exp.k}")
    joint = exp.joint
    if q is not None:
        joint = q.aggregate(joint)
    prior_u = U(exp.prior)
    post_u = expected_posterior_uncertainty(joint, U)
    return InformationReport(prior_u, post_u, prior_u - post_u,
                             None if q is None else q.assignment.tolist())
