"""Pointwise classification-calibration checks and surrogate gap inequalities.

A loss is calibrated at ``(pi, i*)`` when forcing the decision toward a
suboptimal class ``i*`` (``alpha_{i*} >= max_j alpha_j``) strictly raises the
minimal conditional risk.  Verdicts carry the solver gaps of both problems so
a positive margin is only trusted when it beats them.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linprog
from scipy.special import xlogy

from .experiment import cost_matrix, zero_one_costs
from .losses import BayesSolution, LossFamily, make_loss, pointwise_bayes, subgradient_minimize
from .optim import project_sum_zero, project_top

LP_GAP = 1e-9


@dataclass(frozen=True)
class CalibrationVerdict:
    pi: np.ndarray
    i_star: int
    unconstrained: float
    constrained: float
    margin: float
    calibrated: bool
    gaps: tuple[float, float]
    argmin_norm: float

    def to_dict(self) -> dict:
        return {
            "pi": self.pi.tolist(),
            "i_star": self.i_star,
            "unconstrained": self.unconstrained,
            "constrained": self.constrained,
            "margin": self.margin,
            "calibrated": self.calibrated,
            "gaps": list(self.gaps),
            "argmin_norm": self.argmin_norm,
        }


def _winner(k: int, i: int) -> np.ndarray:
    alpha = np.full(k, -1.0)
    alpha[i] = k - 1.0
    return alpha


def _hinge_constrained(loss: LossFamily, pi, i_star: int) -> BayesSolution:
    k = loss.k
    w = pi @ loss.C
    # variables (alpha, s): min w.s  s.t. s >= 1 + alpha, s >= 0, sum alpha = 0, alpha_j <= alpha_i*
    cost = np.concatenate([np.zeros(k), w])
    rows = [np.hstack([np.eye(k), -np.eye(k)])]
    rhs = [-np.ones(k)]
    top = np.zeros((k - 1, 2 * k))
    for r, j in enumerate(j for j in range(k) if j != i_star):
        top[r, j], top[r, i_star] = 1.0, -1.0
    rows.append(top)
    rhs.append(np.zeros(k - 1))
    res = linprog(cost, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                  A_eq=np.concatenate([np.ones(k), np.zeros(k)])[None], b_eq=[0.0],
                  bounds=[(None, None)] * k + [(0, None)] * k, method="highs")
    if res.status != 0:
        raise RuntimeError(f"constrained hinge LP failed: {res.message}")
    return BayesSolution(float(res.fun), project_sum_zero(res.x[:k]), LP_GAP, "lp")


def _familywise_constrained(k: int, pi, i_star: int) -> BayesSolution:
    # min -pi.alpha + z  s.t. z >= 1 + (sum_S alpha - 1)/|S| for every nonempty S
    rows, rhs = [], []
    for r in range(1, k + 1):
        for S in combinations(range(k), r):
            row = np.zeros(k + 1)
            row[list(S)] = 1.0 / r
            row[-1] = -1.0
            rows.append(row)
            rhs.append(1.0 / r - 1.0)
    for j in range(k):
        if j != i_star:
            row = np.zeros(k + 1)
            row[j], row[i_star] = 1.0, -1.0
            rows.append(row)
            rhs.append(0.0)
    res = linprog(np.append(-pi, 1.0), A_ub=np.array(rows), b_ub=np.array(rhs),
                  A_eq=np.append(np.ones(k), 0.0)[None], b_eq=[0.0],
                  bounds=[(None, None)] * (k + 1), method="highs")
    if res.status != 0:
        raise RuntimeError(f"constrained family-wise LP failed: {res.message}")
    return BayesSolution(float(res.fun), res.x[:k], LP_GAP, "lp")


def _logistic_constrained(pi, i_star: int) -> BayesSolution:
    # cross-entropy minimized over p with p_i* maximal: pool i* with the
    # largest competitors while they exceed the pooled average
    k = pi.size
    others = [j for j in np.argsort(-pi, kind="stable") if j != i_star]
    pooled, total = [i_star], pi[i_star]
    for j in others:
        if pi[j] <= total / len(pooled):
            break
        pooled.append(j)
        total += pi[j]
    p = pi.copy()
    p[pooled] = total / len(pooled)
    value = float(-xlogy(pi, p).sum())
    alpha = project_sum_zero(np.log(np.maximum(p, 1e-300)))
    return BayesSolution(value, alpha, 0.0, "pooling")


def constrained_bayes(loss: LossFamily, pi, i_star: int, **opts) -> BayesSolution:
    """``inf {sum_i pi_i loss_i(alpha) : alpha_{i*} >= alpha_j for all j}``."""
    pi = np.asarray(pi, dtype=float)
    k = loss.k
    if not 0 <= i_star < k:
        raise ValueError(f"i* must lie in 0..{k - 1}")
    if loss.discrete:
        # the argmax set must contain i*; the singleton is cheapest
        return BayesSolution(float(pi @ loss.C[:, i_star]), _winner(k, i_star), 0.0,
                             "combinatorial")
    if loss.kind == "hinge":
        return _hinge_constrained(loss, pi, i_star)
    if loss.kind == "family-wise":
        return _familywise_constrained(k, pi, i_star)
    if loss.kind == "logistic":
        return _logistic_constrained(pi, i_star)
    return subgradient_minimize(loss, pi, project=lambda a: project_top(a, i_star), **opts)


def calibration_check(loss: LossFamily, pi, i_star: int, C=None) -> CalibrationVerdict:
    """Compare the unconstrained and the ``i*``-constrained pointwise minima.

    Without ``C`` the precondition is ``pi_{i*} < max pi``; with a cost matrix
    it is ``c_{i*}.pi > min_j c_j.pi``.  The verdict is true only when the
    margin exceeds the sum of both solver gaps plus 1e-9.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (loss.k,):
        raise ValueError(f"pi must have length {loss.k}")
    if C is None:
        if not pi[i_star] < pi.max():
            raise ValueError(f"i*={i_star} is already a Bayes decision at pi")
    else:
        risks = pi @ cost_matrix(C)
        if not risks[i_star] > risks.min():
            raise ValueError(f"i*={i_star} is already a Bayes decision for the costs")
    free = pointwise_bayes(loss, pi)
    tied = constrained_bayes(loss, pi, i_star)
    margin = tied.value - free.value
    gaps = (free.gap_estimate, tied.gap_estimate)
    return CalibrationVerdict(pi, int(i_star), free.value, tied.value, margin,
                              bool(margin > sum(gaps) + 1e-9), gaps,
                              float(np.linalg.norm(tied.alpha)))


def gap_inequality_check(mode: str, pi, alpha, C=None):
    """Pointwise gap inequality at ``(pi, alpha)``; returns ``(lhs, rhs, holds)``.

    ``family-wise``: lhs = zero-one gap / k, rhs = family-wise surrogate gap.
    ``hinge``: lhs = weighted zero-one gap, rhs = (1 + 1/k) hinge gap; alpha
    must sum to zero.  ``holds`` allows 1e-9 slack.
    """
    pi = np.asarray(pi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    k = pi.size
    if alpha.shape != (k,):
        raise ValueError("alpha and pi must have the same length")
    if mode == "family-wise":
        zo = make_loss("zero-one", k)
        fw = make_loss("family-wise", k)
        bayes = 1.0 - pi.max()
        lhs = (zo.risk(pi, alpha) - bayes) / k
        rhs = fw.risk(pi, alpha) - bayes
    elif mode == "hinge":
        C = zero_one_costs(k) if C is None else cost_matrix(C)
        hinge = make_loss("hinge", k, C)
        if not hinge.feasible(alpha):
            raise ValueError("hinge decision vectors must sum to zero")
        wzo = make_loss("weighted-zero-one", k, C)
        bayes = float((pi @ C).min())
        lhs = wzo.risk(pi, alpha) - bayes
        rhs = (1.0 + 1.0 / k) * (hinge.risk(pi, alpha) - k * bayes)
    else:
        raise ValueError(f"unknown gap mode {mode!r}")
    return float(lhs), float(rhs), bool(lhs <= rhs + 1e-9)
