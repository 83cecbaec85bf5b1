"""Quick invariant sweep used by ``fdivkit selftest``.

Each check returns True on success; sizes are small so the whole run takes a
few seconds.
"""

from __future__ import annotations

import numpy as np

from .calibration import gap_inequality_check
from .divergences import (
    BUILTIN_GENERATORS,
    f_divergence,
    f_divergence_quantized,
    kernel_pushforward,
    make_generator,
    transport_matrix,
)
from .equivalence import affine_equivalence_U, counterexample_search
from .experiment import Quantizer, make_experiment, random_experiment, simplex_grid
from .losses import familywise_conjugate, loss_from_generator, make_loss, pointwise_bayes
from .uncertainty import make_uncertainty, statistical_information


def _closed_forms(rng) -> bool:
    k = 3
    grid = simplex_grid(k, 10)
    zo, hinge = make_loss("zero-one", k), make_loss("hinge", k)
    lg = make_loss("logistic", k)
    H = make_uncertainty("entropy", k)
    for p in grid:
        if abs(pointwise_bayes(zo, p).value - (1 - p.max())) > 1e-12:
            return False
        if abs(pointwise_bayes(hinge, p).value - k * (1 - p.max())) > 1e-12:
            return False
        if abs(pointwise_bayes(lg, p).value - H(p)) > 1e-6:
            return False
    return True


def _conjugate(rng) -> bool:
    grid = simplex_grid(3, 60)
    for _ in range(50):
        a = rng.normal(size=3)
        brute = np.max(grid @ a + 1 - grid.max(axis=1))
        exact = familywise_conjugate(a)
        if not (brute - 1e-12 <= exact <= brute + 2 * np.abs(a).max() / 60 + 1 / 60):
            return False
    return True


def _identities(rng) -> bool:
    for name in BUILTIN_GENERATORS:
        g = make_generator(name, 3)
        U, _ = loss_from_generator(g)
        for _ in range(10):
            e = random_experiment(rng, 3, 4)
            unif = np.full(3, 1 / 3)
            eu = make_experiment(unif, e.conditionals)
            if abs(statistical_information(eu, U).information - f_divergence(e.conditionals, g)) > 1e-10:
                return False
    return True


def _dpi(rng) -> bool:
    g = make_generator("kl", 3)
    for _ in range(50):
        e = random_experiment(rng, 3, 5)
        K = rng.dirichlet(np.ones(3), size=5)
        if f_divergence(kernel_pushforward(e.conditionals, K), g) > f_divergence(e.conditionals, g) + 1e-10:
            return False
        fine = Quantizer.from_assignment(rng.integers(0, 3, size=5), 3)
        coarse = Quantizer.from_assignment(fine.assignment // 2, 2)
        if f_divergence_quantized(e.conditionals, g, coarse) > \
                f_divergence_quantized(e.conditionals, g, fine) + 1e-10:
            return False
    return True


def _transport(rng) -> bool:
    for _ in range(50):
        a = rng.uniform(size=4)
        b = rng.uniform(size=4)
        b *= a.sum() / b.sum()
        Z = transport_matrix(a, b)
        if np.any(Z < -1e-12) or np.abs(Z.sum(1) - a).max() > 1e-12 or np.abs(Z.sum(0) - b).max() > 1e-12:
            return False
    return True


def _equivalence(rng) -> bool:
    fit = affine_equivalence_U(make_uncertainty("zero-one", 3), make_uncertainty("hinge-induced", 3))
    bad = affine_equivalence_U(make_uncertainty("zero-one", 3), make_uncertainty("entropy", 3))
    return fit.equivalent and abs(fit.a - 1 / 3) < 1e-10 and not bad.equivalent


def _gaps(rng) -> bool:
    for _ in range(200):
        pi = rng.dirichlet(np.ones(3))
        a = rng.normal(size=3)
        a -= a.mean()
        if not gap_inequality_check("family-wise", pi, a)[2]:
            return False
        if not gap_inequality_check("hinge", pi, a)[2]:
            return False
    return True


def _search(rng) -> bool:
    r = counterexample_search(make_loss("zero-one", 3), make_loss("logistic", 3), 3,
                              budget=1000, seed=7)
    return r.found and r.witness.validated


CHECKS = [
    ("closed-form-uncertainty", _closed_forms),
    ("familywise-conjugate", _conjugate),
    ("divergence-identity", _identities),
    ("data-processing", _dpi),
    ("transport", _transport),
    ("equivalence", _equivalence),
    ("gap-inequalities", _gaps),
    ("counterexample", _search),
]


def run_selftest(seed: int = 0) -> list[tuple[str, bool]]:
    out = []
    for name, fn in CHECKS:
        try:
            ok = bool(fn(np.random.default_rng(seed)))
        except Exception:  # a crash counts as a failed check
            ok = False
        out.append((name, ok))
    return out
