import numpy as np
import pytest
from numpy.testing import assert_allclose

from fdivkit.calibration import calibration_check, constrained_bayes, gap_inequality_check
from fdivkit.losses import make_loss, pointwise_bayes, subgradient_minimize, zero_loss
from fdivkit.optim import project_top

PI3 = np.array([0.5, 0.3, 0.2])


def _random_costs(rng, k):
    C = rng.uniform(0, 1, size=(k, k))
    np.fill_diagonal(C, 0)
    return C


def _random_suboptimal(rng, scores):
    return int(rng.choice(np.flatnonzero(scores > scores.min() + 1e-9)))


class TestCalibrationCheck:
    def test_logistic_binary(self):
        v = calibration_check(make_loss("logistic", 2), [0.7, 0.3], 1)
        assert_allclose(v.unconstrained, 0.6108643020548935, rtol=1e-12)
        assert_allclose(v.constrained, np.log(2), rtol=1e-12)
        assert v.calibrated

    def test_zero_loss_is_not_calibrated(self):
        v = calibration_check(zero_loss(3), PI3, 2)
        assert v.margin == 0 and not v.calibrated

    def test_optimal_index_rejected(self):
        with pytest.raises(ValueError, match="already a Bayes decision"):
            calibration_check(make_loss("logistic", 3), PI3, 0)

    def test_weighted_precondition(self):
        C = np.array([[0, 1, 1], [5, 0, 1], [5, 1, 0]], dtype=float)
        # expected costs (2.5, 0.7, 0.8): class 2 is best although pi_1 is largest
        with pytest.raises(ValueError, match="costs"):
            calibration_check(make_loss("hinge", 3, C), PI3, 1, C)
        assert calibration_check(make_loss("hinge", 3, C), PI3, 0, C).calibrated

    def test_hinge_with_costs(self, rng):
        for _ in range(500):
            k = int(rng.choice([2, 3, 4]))
            C = _random_costs(rng, k)
            pi = rng.dirichlet(np.ones(k))
            i = _random_suboptimal(rng, pi @ C)
            assert calibration_check(make_loss("hinge", k, C), pi, i, C).calibrated

    def test_logistic_random(self, rng):
        for _ in range(500):
            k = int(rng.choice([2, 3, 5]))
            pi = rng.dirichlet(np.ones(k))
            assert calibration_check(make_loss("logistic", k), pi, _random_suboptimal(rng, -pi)).calibrated

    def test_familywise_random(self, rng):
        for _ in range(200):
            pi = rng.dirichlet(np.ones(3))
            assert calibration_check(make_loss("family-wise", 3), pi, _random_suboptimal(rng, -pi)).calibrated

    def test_zero_one_margin_is_probability_gap(self):
        v = calibration_check(make_loss("zero-one", 3), PI3, 2)
        assert_allclose(v.margin, 0.3, rtol=1e-12)


class TestConstrainedSolvers:
    """Exact constrained solvers agree with projected descent."""

    @pytest.mark.parametrize("kind", ["hinge", "logistic", "family-wise"])
    def test_against_descent(self, kind, rng):
        loss = make_loss(kind, 3)
        for _ in range(3):
            pi = rng.dirichlet(np.ones(3))
            i = _random_suboptimal(rng, -pi)
            exact = constrained_bayes(loss, pi, i)
            approx = subgradient_minimize(loss, pi, iters=800,
                                          project=lambda a, i=i: project_top(a, i))
            assert exact.alpha[i] >= exact.alpha.max() - 1e-9
            assert exact.value <= approx.value + 1e-9
            assert approx.value - exact.value <= 5e-3

    def test_constrained_at_least_unconstrained(self, rng):
        for kind in ["hinge", "logistic", "family-wise", "zero-one"]:
            loss = make_loss(kind, 4)
            for _ in range(50):
                pi = rng.dirichlet(np.ones(4))
                for i in range(4):
                    assert constrained_bayes(loss, pi, i).value >= pointwise_bayes(loss, pi).value - 1e-9

    def test_bad_index(self):
        with pytest.raises(ValueError):
            constrained_bayes(make_loss("logistic", 3), PI3, 3)


class TestGapInequalities:
    def test_optimum_has_zero_gaps(self):
        for mode in ("family-wise", "hinge"):
            alpha = pointwise_bayes(make_loss(mode, 3), PI3).alpha
            lhs, rhs, holds = gap_inequality_check(mode, PI3, alpha)
            assert abs(lhs) < 1e-15 and abs(rhs) < 1e-15 and holds

    def test_familywise_example(self):
        lhs, rhs, holds = gap_inequality_check("family-wise", PI3, [0, 1, -1])
        # zero-one gap 0.2, surrogate gap 0.9 - 0.5
        assert_allclose(lhs, 0.2 / 3, rtol=1e-12)
        assert_allclose(rhs, 0.4, rtol=1e-12)
        assert holds

    def test_hinge_example(self):
        lhs, rhs, holds = gap_inequality_check("hinge", PI3, [-1, 2, -1])
        assert_allclose(lhs, 0.2, rtol=1e-12)
        assert_allclose(rhs, (4 / 3) * 0.6, rtol=1e-12)
        assert holds

    def test_hinge_needs_sum_zero(self):
        with pytest.raises(ValueError, match="sum to zero"):
            gap_inequality_check("hinge", PI3, [1, 0, 0])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            gap_inequality_check("squared", PI3, [0, 0, 0])

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_random_pairs(self, k, rng):
        for _ in range(2000):
            pi = rng.dirichlet(np.ones(k))
            a = rng.normal(size=k) * rng.uniform(0, 3)
            a -= a.mean()
            C = _random_costs(rng, k)
            assert gap_inequality_check("family-wise", pi, a)[2]
            assert gap_inequality_check("hinge", pi, a, C)[2]
