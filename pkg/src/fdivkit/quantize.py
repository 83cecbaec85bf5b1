"""Quantized Bayes risk, quantizer search, ERM and the consistency harness.

A quantizer ``q: X -> Z`` merges outcomes into cells; decisions may depend on
the cell only.  The quantized Bayes risk solves one pointwise Bayes problem
per cell, weighted by the cell mass.  ERM does the same with empirical cell
frequencies and picks the best quantizer from a finite family.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .experiment import DiscreteExperiment, Quantizer, zero_one_costs
from .losses import LossFamily, make_loss, pointwise_bayes

BELL_GUARD = 12
TIE_TOL = 1e-12


class QuantizerChoice(NamedTuple):
    quantizer: Quantizer
    value: float


def _cell_solutions(joint_q: np.ndarray, loss: LossFamily):
    """Per-cell (alpha, mass * value, mass * gap); empty cells get alpha = 0."""
    k, n_codes = joint_q.shape
    alphas = np.zeros((n_codes, k))
    risk = gap = 0.0
    for z in range(n_codes):
        s = joint_q[:, z].sum()
        if s <= 0:
            continue
        sol = pointwise_bayes(loss, joint_q[:, z] / s)
        alphas[z] = sol.alpha
        risk += s * sol.value
        gap += s * sol.gap_estimate
    return alphas, risk, gap


def quantized_bayes_risk(exp: DiscreteExperiment, loss: LossFamily, q: Quantizer) -> float:
    """``sum_z inf_alpha sum_i pi_i P_i(q^-1(z)) loss_i(alpha)``; empty cells add 0."""
    if loss.k != exp.k:
        raise ValueError(f"loss has k={loss.k}, experiment has k={exp.k}")
    return float(_cell_solutions(q.aggregate(exp.joint), loss)[1])


def enumerate_quantizers(m: int, max_codes: int | None = None):
    """All set partitions of ``range(m)`` into at most ``max_codes`` blocks.

    Yields restricted growth strings (``a[0] = 0``, ``a[i] <= max(a[:i]) + 1``)
    in lexicographic order.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > BELL_GUARD:
        raise ValueError(f"m={m} exceeds the exhaustive-search guard of {BELL_GUARD}")
    max_codes = m if max_codes is None else max_codes
    if not 1 <= max_codes <= m:
        raise ValueError(f"max_codes must lie in 1..{m}")
    a = [0] * m

    def rec(i, top):
        if i == m:
            yield Quantizer(np.array(a), top + 1)
            return
        for v in range(min(top + 1, max_codes - 1) + 1):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0)


def _argmin(values) -> int:
    best = 0
    for i, v in enumerate(values):
        if v < values[best] - TIE_TOL:
            best = i
    return best


def greedy_quantizer(exp: DiscreteExperiment, loss: LossFamily, max_codes: int) -> QuantizerChoice:
    """Merge the pair of cells whose union raises the risk least until at most
    ``max_codes`` remain.  Not guaranteed optimal."""
    blocks = [[x] for x in range(exp.m)]

    def q_of(bl):
        a = np.empty(exp.m, dtype=np.int64)
        for z, b in enumerate(bl):
            a[b] = z
        return Quantizer(a, len(bl))

    while len(blocks) > max_codes:
        cands = []
        for i in range(len(blocks)):
            for j in range(i + 1, len(blocks)):
                bl = [b for t, b in enumerate(blocks) if t not in (i, j)] + [blocks[i] + blocks[j]]
                cands.append((quantized_bayes_risk(exp, loss, q_of(bl)), bl))
        blocks = cands[_argmin([c[0] for c in cands])][1]
        blocks = sorted((sorted(b) for b in blocks), key=lambda b: b[0])
    q = q_of(blocks)
    return QuantizerChoice(q, quantized_bayes_risk(exp, loss, q))


def optimize_quantizer(exp: DiscreteExperiment, loss: LossFamily, max_codes: int) -> QuantizerChoice:
    """Exhaustive argmin of the quantized Bayes risk, ties to the first
    partition in canonical order.  Above the guard the greedy merge is used
    and a warning flags the result as approximate."""
    if exp.m > BELL_GUARD:
        warnings.warn("alphabet beyond the exhaustive guard; greedy result is approximate",
                      RuntimeWarning, stacklevel=2)
        return greedy_quantizer(exp, loss, max_codes)
    qs = list(enumerate_quantizers(exp.m, max_codes))
    vals = [quantized_bayes_risk(exp, loss, q) for q in qs]
    i = _argmin(vals)
    return QuantizerChoice(qs[i], vals[i])


# -- samples and ERM ----------------------------------------------------------

@dataclass(frozen=True)
class SampleSet:
    x: np.ndarray
    y: np.ndarray
    k: int
    m: int
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if self.x.size and (self.x.min() < 0 or self.x.max() >= self.m):
            raise ValueError("outcome index out of range")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.k):
            raise ValueError("label index out of range")

    @property
    def n(self) -> int:
        return self.x.size

    def empirical_joint(self) -> np.ndarray:
        """``k x m`` table of empirical frequencies."""
        N = np.zeros((self.k, self.m))
        np.add.at(N, (self.y, self.x), 1.0)
        return N / self.n


def draw_samples(exp: DiscreteExperiment, n: int, seed: int | np.random.Generator = 0,
                 source: str = "") -> SampleSet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    joint = exp.joint.ravel()
    idx = rng.choice(joint.size, size=n, p=joint / joint.sum())
    y, x = np.divmod(idx, exp.m)
    return SampleSet(x, y, exp.k, exp.m, None if isinstance(seed, np.random.Generator) else seed,
                     source)


@dataclass(frozen=True)
class DiscriminantTable:
    """Decision vector per code; row ``z`` is ``alpha(z)``."""

    alphas: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.alphas)):
            raise ValueError("discriminant table has non-finite entries")

    def risk(self, joint_q: np.ndarray, loss: LossFamily) -> float:
        """``sum_z sum_y joint_q[y, z] loss_y(alpha(z))`` with ``0 * inf = 0``."""
        vals = loss.values(self.alphas)  # (n_codes, k)
        w = joint_q.T
        on = w > 0
        return float(np.sum(w[on] * vals[on]))


@dataclass(frozen=True)
class ERMResult:
    quantizer: Quantizer
    table: DiscriminantTable
    risk: float
    solver_gap: float
    index: int


def erm_joint(joint, loss: LossFamily, quantizers) -> ERMResult:
    """Jointly minimize risk over the quantizer family and per-cell tables for
    a given ``k x m`` joint table (empirical or true)."""
    joint = np.asarray(joint, dtype=float)
    quantizers = list(quantizers)
    if not quantizers:
        raise ValueError("quantizer family is empty")
    fits = [_cell_solutions(q.aggregate(joint), loss) for q in quantizers]
    i = _argmin([f[1] for f in fits])
    alphas, risk, gap = fits[i]
    return ERMResult(quantizers[i], DiscriminantTable(alphas), float(risk), float(gap), i)


def erm_fit(samples: SampleSet, loss: LossFamily, quantizers=None, max_codes: int | None = None) -> ERMResult:
    """Empirical risk minimizer over a quantizer family with per-cell tables.

    The family is ``quantizers`` if given, else every partition of the
    alphabet into at most ``max_codes`` cells.
    """
    if samples.n == 0:
        raise ValueError("empty sample")
    if quantizers is None:
        quantizers = enumerate_quantizers(samples.m, max_codes)
    return erm_joint(samples.empirical_joint(), loss, quantizers)


# -- consistency harness ------------------------------------------------------

class PreconditionError(ValueError):
    """The loss is not shown calibrated and equivalent to the target loss."""


@dataclass
class ConsistencyReport:
    schedule: list
    mean_gap: list
    std_gap: list
    reference_risk: float
    surrogate_reference: float
    chosen: list
    eps_opt: list
    eps_est: list
    eps_app: list
    fisher_violations: int | None
    gaps: list = field(repr=False, default_factory=list)
    preconditions: dict = field(default_factory=dict)
    forced: bool = False

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule,
            "mean_gap": self.mean_gap,
            "std_gap": self.std_gap,
            "reference_risk": self.reference_risk,
            "surrogate_reference": self.surrogate_reference,
            "chosen": self.chosen,
            "eps_opt": self.eps_opt,
            "eps_est": self.eps_est,
            "eps_app": self.eps_app,
            "fisher_violations": self.fisher_violations,
            "preconditions": self.preconditions,
            "forced": self.forced,
        }


def check_preconditions(loss: LossFamily, C, trials: int = 20, seed: int = 0) -> dict:
    """Sampled calibration verdicts plus the affine-equivalence verdict of
    ``U_loss`` against the cost-weighted uncertainty for ``C``."""
    from .calibration import calibration_check
    from .equivalence import affine_equivalence_U
    from .losses import uncertainty_of
    from .uncertainty import make_uncertainty

    rng = np.random.default_rng(seed)
    k = loss.k
    calibrated = True
    for _ in range(trials):
        pi = rng.dirichlet(np.ones(k))
        risks = pi @ C
        cand = np.flatnonzero(risks > risks.min() + 1e-9)
        if cand.size == 0:
            continue
        v = calibration_check(loss, pi, int(rng.choice(cand)), C)
        calibrated &= v.calibrated
    fit = affine_equivalence_U(uncertainty_of(loss), make_uncertainty("cost-weighted", k, C))
    return {"calibrated": bool(calibrated), "equivalent": bool(fit.equivalent),
            "affine_a": fit.a, "affine_residual": fit.max_residual}


def consistency_experiment(exp: DiscreteExperiment, loss: LossFamily, schedule, reps: int,
                           seed: int = 0, *, force: bool = False, max_codes: int = 3,
                           quantizers=None, C=None) -> ConsistencyReport:
    """Fit by ERM at each sample size and measure the true weighted zero-one
    risk gap to the best quantized Bayes risk over the family.

    Refuses (``PreconditionError``) unless the loss is calibrated and
    equivalent to the weighted zero-one loss for ``C`` (``force`` overrides).
    For hinge losses each replication also checks that the true gap is at
    most ``(1 + 1/k)`` times the surrogate risk gap.
    """
    k = exp.k
    if C is None:
        C = loss.C if loss.C is not None else zero_one_costs(k)
    C = np.asarray(C, dtype=float)
    pre = check_preconditions(loss, C, seed=seed)
    if not (pre["calibrated"] and pre["equivalent"]) and not force:
        raise PreconditionError(
            f"loss {loss.kind!r} failed the preconditions {pre}; pass force=True to run anyway")
    family = list(quantizers) if quantizers is not None else list(enumerate_quantizers(exp.m, max_codes))
    target = make_loss("weighted-zero-one", k, C)
    r_star = min(quantized_bayes_risk(exp, target, q) for q in family)
    s_star = min(quantized_bayes_risk(exp, loss, q) for q in family)
    fisher = loss.kind == "hinge"
    violations = 0
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(schedule))
    means, stds, chosen, e_opt, e_est, all_gaps = [], [], [], [], [], []
    for n, child in zip(schedule, children):
        gaps, opt, est, picks = [], [], [], {}
        for rep_seq in child.spawn(reps):
            rng = np.random.default_rng(rep_seq)
            samples = draw_samples(exp, int(n), rng)
            fit = erm_fit(samples, loss, family)
            joint_q = fit.quantizer.aggregate(exp.joint)
            true_risk = fit.table.risk(joint_q, target)
            surrogate = fit.table.risk(joint_q, loss)
            gap = true_risk - r_star
            if fisher and gap > (1.0 + 1.0 / k) * (surrogate - s_star) + 1e-9:
                violations += 1
            gaps.append(gap)
            opt.append(fit.solver_gap)
            est.append(abs(fit.risk - surrogate))
            key = "".join(map(str, fit.quantizer.assignment.tolist()))
            picks[key] = picks.get(key, 0) + 1
        gaps = np.array(gaps)
        all_gaps.append(gaps.tolist())
        means.append(float(gaps.mean()))
        stds.append(float(gaps.std()))
        chosen.append(dict(sorted(picks.items())))
        e_opt.append(float(np.mean(opt)))
        e_est.append(float(np.mean(est)))
    return ConsistencyReport(
        [int(n) for n in schedule], means, stds, float(r_star), float(s_star), chosen,
        e_opt, e_est, [0.0] * len(schedule), violations if fisher else None,
        all_gaps, pre, bool(force))
