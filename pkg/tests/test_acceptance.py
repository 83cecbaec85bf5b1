"""End-to-end acceptance criteria, one test per criterion.

Each test appends a PASS/FAIL line to ``REPORT`` (echoed in the terminal
summary) and prints it, then asserts.
"""

import time

import numpy as np
import pytest

from fdivkit.calibration import gap_inequality_check
from fdivkit.divergences import (
    BUILTIN_GENERATORS,
    f_divergence,
    f_divergence_quantized,
    kernel_pushforward,
    make_generator,
    transport_matrix,
)
from fdivkit.equivalence import (
    affine_equivalence_U,
    counterexample_search,
    ranking_compare,
    validate_witness,
)
from fdivkit.experiment import Quantizer, make_experiment, random_experiment, simplex_grid
from fdivkit.losses import familywise_conjugate, loss_from_generator, make_loss, pointwise_bayes
from fdivkit.quantize import consistency_experiment, enumerate_quantizers
from fdivkit.uncertainty import infimal_uncertainty, make_uncertainty, statistical_information

REPORT = []


def _report(num, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {num}. {name}: {detail}"
    REPORT.append(line)
    print(line)
    assert ok, line


def _costs(rng, k):
    C = rng.uniform(0.1, 1.0, size=(k, k))
    np.fill_diagonal(C, 0.0)
    return C


def _entropy(P):
    P = np.atleast_2d(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(P > 0, P * np.log(P), 0.0).sum(axis=1)


def test_closed_form_uncertainty():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst_exact, worst_log = 0.0, 0.0
    for k in (2, 3, 4):
        grid = simplex_grid(k, 20)
        C = _costs(rng, k)
        oracles = [
            (make_loss("zero-one", k), 1 - grid.max(axis=1)),
            (make_loss("weighted-zero-one", k, C), (grid @ C).min(axis=1)),
            (make_loss("hinge", k, C), k * (grid @ C).min(axis=1)),
            (make_loss("hinge", k), k * (1 - grid.max(axis=1))),
        ]
        for loss, want in oracles:
            got = np.array([infimal_uncertainty(loss, p).value for p in grid])
            worst_exact = max(worst_exact, np.abs(got - want).max())
        lg = make_loss("logistic", k)
        got = np.array([infimal_uncertainty(lg, p).value for p in grid])
        worst_log = max(worst_log, np.abs(got - _entropy(grid)).max())
    elapsed = time.perf_counter() - start
    ok = worst_exact <= 1e-12 and worst_log <= 1e-6 and elapsed < 30
    _report(1, "closed-form uncertainty", ok,
            f"combinatorial err {worst_exact:.2e}, logistic err {worst_log:.2e}, {elapsed:.1f}s")


def test_familywise_conjugate():
    rng = np.random.default_rng(2)
    bad = 0
    for k in (2, 3, 4):
        grid = simplex_grid(k, 400)
        # the objective is symmetric under permuting pi and alpha together, so with
        # alpha sorted descending the grid sup is attained on descending grid points
        grid = grid[np.all(np.diff(grid, axis=1) <= 0, axis=1)]
        base = 1 - grid[:, 0]
        A = rng.normal(size=(1000, k))
        sorted_a = -np.sort(-A, axis=1)
        brute = np.concatenate([np.max(grid @ chunk.T + base[:, None], axis=0)
                                for chunk in np.array_split(sorted_a, 20)])
        exact = np.array([familywise_conjugate(a) for a in A])
        # grid points are within 1/400 of any simplex point; both terms are Lipschitz
        slack = (np.abs(A).max(axis=1) + 1) / 400
        bad += int(np.sum((exact < brute - 1e-12) | (exact > brute + slack + 1e-12)))
    _report(2, "family-wise conjugate", bad == 0, f"{bad} of 3000 outside the grid slack")


def test_divergence_identities():
    rng = np.random.default_rng(3)
    worst_loss, worst_u = 0.0, 0.0
    for name in BUILTIN_GENERATORS:
        g = make_generator(name, 3)
        U, loss = loss_from_generator(g)
        unif = np.full(3, 1 / 3)
        prior_risk = pointwise_bayes(loss, unif).value
        for _ in range(200):
            exp = make_experiment(unif, random_experiment(rng, 3, 4).conditionals)
            D = f_divergence(exp.conditionals, g)
            post = exp.joint.sum(axis=0)
            posterior_risk = sum(post[x] * pointwise_bayes(loss, exp.joint[:, x] / post[x]).value
                                 for x in range(exp.m))
            worst_loss = max(worst_loss, abs(prior_risk - posterior_risk - D))
            worst_u = max(worst_u, abs(statistical_information(exp, U).information - D))
    ok = worst_loss <= 1e-6 and worst_u <= 1e-10
    _report(3, "divergence identities", ok,
            f"loss route err {worst_loss:.2e}, uncertainty route err {worst_u:.2e}")


def test_dpi_and_refinement():
    rng = np.random.default_rng(4)
    kernel_bad, refine_bad = 0, 0
    names = list(BUILTIN_GENERATORS)
    for t in range(1000):
        g = make_generator(names[t % len(names)], 3)
        P = random_experiment(rng, 3, 5).conditionals
        K = rng.dirichlet(np.ones(4), size=5)
        kernel_bad += f_divergence(kernel_pushforward(P, K), g) > f_divergence(P, g) + 1e-10
        fine = Quantizer.from_assignment(rng.integers(0, 4, size=5), 4)
        coarse = Quantizer(rng.integers(0, 2, size=fine.n_codes)[fine.assignment], 2)
        refine_bad += f_divergence_quantized(P, g, coarse) > f_divergence_quantized(P, g, fine) + 1e-10
    ok = kernel_bad == 0 and refine_bad == 0
    _report(4, "data processing and refinement", ok,
            f"{kernel_bad} kernel and {refine_bad} refinement violations in 1000 each")


def test_equivalence_verdicts():
    scales = []
    for k in range(2, 7):
        fit = affine_equivalence_U(make_uncertainty("zero-one", k), make_uncertainty("hinge-induced", k))
        scales.append(fit.equivalent and abs(fit.a - 1 / k) <= 1e-10)
    neg = affine_equivalence_U(make_uncertainty("zero-one", 3), make_uncertainty("entropy", 3))
    rng = np.random.default_rng(5)
    zo, hinge = make_loss("zero-one", 3), make_loss("hinge", 3)
    disagreements = 0
    for m in range(1, 6):
        qs = list(enumerate_quantizers(m))
        exps = [random_experiment(rng, 3, m) for _ in range(100)]
        rep = ranking_compare(exps, qs, zo, hinge)
        disagreements += int(np.any(rep.orders_a != rep.orders_b, axis=1).sum())
    ok = all(scales) and not neg.equivalent and neg.max_residual > 1e-3 and disagreements == 0
    _report(5, "equivalence verdicts", ok,
            f"a=1/k for k=2..6: {all(scales)}, logistic residual {neg.max_residual:.3f}, "
            f"{disagreements} ranking disagreements")


def test_counterexample_existence():
    zo, lg = make_loss("zero-one", 3), make_loss("logistic", 3)
    budget = 10 ** 5
    while True:
        res = counterexample_search(zo, lg, 3, budget=budget, seed=7)
        if res.found or budget >= 10 ** 7:
            break
        budget *= 2
    ok = res.found and res.witness.validated and validate_witness(res.witness, zo, lg)
    detail = (f"witness after {res.examined} instances (budget {budget}), "
              f"M={res.witness.instance.M}" if res.found else f"none within budget {budget}")
    _report(6, "counterexample existence", ok, detail)


def test_gap_inequalities():
    rng = np.random.default_rng(7)
    fw_bad, hinge_bad = 0, 0
    for _ in range(10000):
        k = int(rng.integers(2, 6))
        pi = rng.dirichlet(np.ones(k))
        a = rng.normal(size=k) * rng.choice([0.1, 1.0, 5.0])
        fw_bad += not gap_inequality_check("family-wise", pi, a)[2]
        a = a - a.mean()
        hinge_bad += not gap_inequality_check("hinge", pi, a, _costs(rng, k))[2]
    _report(7, "gap inequalities", fw_bad == 0 and hinge_bad == 0,
            f"{fw_bad} family-wise and {hinge_bad} hinge violations in 10000 each")


def test_transport():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 9))
        a = rng.uniform(size=m) * (rng.uniform(size=m) > 0.2)
        b = rng.uniform(size=m) + 1e-3
        if a.sum() == 0:
            a[0] = 1.0
        b *= a.sum() / b.sum()
        Z = transport_matrix(a, b)
        worst = max(worst, -Z.min(), np.abs(Z.sum(1) - a).max(), np.abs(Z.sum(0) - b).max())
    _report(8, "transport", worst <= 1e-12, f"worst invariant error {worst:.2e} over 1000 pairs")


CONSISTENCY_EXPERIMENT = make_experiment(
    np.full(3, 1 / 3),
    [[0.30, 0.25, 0.10, 0.10, 0.15, 0.10],
     [0.10, 0.10, 0.30, 0.25, 0.10, 0.15],
     [0.15, 0.10, 0.10, 0.15, 0.25, 0.25]],
)


def test_consistency():
    start = time.perf_counter()
    rep = consistency_experiment(CONSISTENCY_EXPERIMENT, make_loss("hinge", 3),
                                 [100, 1000, 10000], 50, seed=0, max_codes=3)
    elapsed = time.perf_counter() - start
    g = rep.mean_gap
    ok = (all(g[i + 1] <= g[i] for i in range(len(g) - 1)) and g[-1] <= 0.02
          and rep.fisher_violations == 0 and elapsed < 300)
    _report(9, "consistency", ok,
            "mean gaps " + ", ".join(f"{x:.4g}" for x in g)
            + f", {rep.fisher_violations} Fisher violations, {elapsed:.1f}s")
