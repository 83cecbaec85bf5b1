import numpy as np
import pytest
from hypothesis import given, settings
from numpy.testing import assert_allclose
from scipy.special import xlogy

from fdivkit.experiment import Quantizer, make_experiment, random_experiment, simplex_grid
from fdivkit.losses import make_loss
from fdivkit.uncertainty import (
    UNCERTAINTY_KINDS,
    infimal_uncertainty,
    make_uncertainty,
    statistical_information,
)

from conftest import simplex_vectors

PI3 = np.array([0.5, 0.3, 0.2])


def _mutual_information(exp):
    """I(X;Y) from the joint table, written independently of the library."""
    joint = exp.joint
    px = joint.sum(axis=0)
    outer = exp.prior[:, None] * px[None, :]
    on = joint > 0
    return float(np.sum(joint[on] * np.log(joint[on] / outer[on])))


def _random_costs(rng, k):
    C = rng.uniform(0, 1, size=(k, k))
    np.fill_diagonal(C, 0)
    return C


class TestBuiltins:
    def test_values(self):
        assert make_uncertainty("zero-one", 3)(PI3) == 0.5
        assert_allclose(make_uncertainty("entropy", 3)(np.full(3, 1 / 3)), np.log(3), rtol=1e-15)
        assert_allclose(make_uncertainty("hinge-induced", 3)(PI3), 1.5, rtol=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown uncertainty"):
            make_uncertainty("gini", 3)

    def test_off_simplex_length_rejected(self):
        with pytest.raises(ValueError):
            make_uncertainty("entropy", 3)(np.array([0.5, 0.5]))

    @pytest.mark.parametrize("k", [2, 3, 6])
    def test_zero_one_vanishes_at_vertices(self, k):
        assert np.all(make_uncertainty("zero-one", k)(np.eye(k)) == 0)

    @pytest.mark.parametrize("kind", UNCERTAINTY_KINDS)
    def test_midpoint_concavity(self, kind, rng):
        U = make_uncertainty(kind, 4, _random_costs(rng, 4) if kind != "entropy" else None)
        x = rng.dirichlet(np.ones(4), size=400)
        y = rng.dirichlet(np.full(4, 0.3), size=400)
        assert np.all(U((x + y) / 2) >= (U(x) + U(y)) / 2 - 1e-9)

    @pytest.mark.parametrize("kind", UNCERTAINTY_KINDS)
    def test_conjugate_against_grid(self, kind, rng):
        C = _random_costs(rng, 3) if kind != "entropy" else None
        U = make_uncertainty(kind, 3, C)
        grid = simplex_grid(3, 200)
        Ug = U(grid)
        for _ in range(30):
            a = rng.normal(size=3) * 2
            brute = np.max(grid @ a + Ug)
            exact = U.conjugate(a)
            assert brute - 1e-9 <= exact <= brute + 0.05

    def test_entropy_supergradient(self, rng):
        U = make_uncertainty("entropy", 3)
        for _ in range(50):
            p, q = rng.dirichlet(np.ones(3), size=2)
            g = U.supergradient(p)
            assert U(q) <= U(p) + g @ (q - p) + 1e-12


class TestInfimal:
    def test_examples(self):
        assert_allclose(infimal_uncertainty(make_loss("logistic", 2), [0.7, 0.3]).value,
                        -xlogy([0.7, 0.3], [0.7, 0.3]).sum(), rtol=1e-12)
        assert_allclose(infimal_uncertainty(make_loss("logistic", 2), [0.7, 0.3]).value,
                        0.6108643020548935, rtol=1e-12)
        assert infimal_uncertainty(make_loss("zero-one", 3), PI3).value == 0.5
        assert infimal_uncertainty(make_loss("hinge", 3), PI3).value == 1.5

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_grid_match(self, k, rng):
        C = _random_costs(rng, k)
        cases = [
            (make_loss("zero-one", k), make_uncertainty("zero-one", k), 1e-12),
            (make_loss("weighted-zero-one", k, C), make_uncertainty("cost-weighted", k, C), 1e-12),
            (make_loss("hinge", k, C), make_uncertainty("hinge-induced", k, C), 1e-12),
            (make_loss("logistic", k), make_uncertainty("entropy", k), 1e-6),
        ]
        for p in simplex_grid(k, 20 if k < 4 else 10):
            for loss, U, tol in cases:
                assert abs(infimal_uncertainty(loss, p).value - U(p)) <= tol


class TestInformation:
    def test_identical_conditionals(self):
        exp = make_experiment([0.3, 0.7], [[0.2, 0.8], [0.2, 0.8]])
        rep = statistical_information(exp, make_uncertainty("entropy", 2))
        assert abs(rep.information) < 1e-15

    def test_separating_zero_one(self):
        exp = make_experiment([0.5, 0.5], [[1, 0], [0, 1]])
        rep = statistical_information(exp, make_uncertainty("zero-one", 2))
        assert rep.information == 0.5
        assert rep.posterior_uncertainty == 0.0

    def test_entropy_gives_mutual_information(self, rng):
        for _ in range(100):
            exp = random_experiment(rng, 3, 5, concentration=0.5)
            rep = statistical_information(exp, make_uncertainty("entropy", 3))
            assert_allclose(rep.information, _mutual_information(exp), rtol=1e-10, atol=1e-14)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimension"):
            statistical_information(random_experiment(rng, 3, 4), make_uncertainty("entropy", 2))

    @pytest.mark.parametrize("kind", UNCERTAINTY_KINDS)
    def test_nonnegative(self, kind, rng):
        U = make_uncertainty(kind, 3)
        for _ in range(1000):
            exp = random_experiment(rng, 3, 4, concentration=0.4)
            assert statistical_information(exp, U).information >= -1e-10

    @pytest.mark.parametrize("kind", UNCERTAINTY_KINDS)
    def test_quantizing_loses_information(self, kind, rng):
        U = make_uncertainty(kind, 3)
        for _ in range(200):
            exp = random_experiment(rng, 3, 6)
            q = Quantizer.from_assignment(rng.integers(0, 3, size=6), 3)
            full = statistical_information(exp, U).information
            assert statistical_information(exp, U, q).information <= full + 1e-10

    def test_empty_cells_skipped(self):
        exp = make_experiment([0.5, 0.5], [[0.5, 0.5, 0], [0.2, 0.8, 0]])
        q = Quantizer(np.array([0, 0, 1]), 3)
        rep = statistical_information(exp, make_uncertainty("entropy", 2), q)
        assert abs(rep.information) < 1e-15

    @given(simplex_vectors(3))
    @settings(max_examples=200, deadline=None)
    def test_prior_uncertainty_is_reported(self, pi):
        exp = make_experiment(pi, np.full((3, 2), 0.5))
        rep = statistical_information(exp, make_uncertainty("zero-one", 3))
        assert rep.prior_uncertainty == pytest.approx(1 - pi.max(), abs=1e-15)
