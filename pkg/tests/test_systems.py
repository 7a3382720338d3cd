import numpy as np
import pytest

from krasovskii.histories import constant_history, random_history, zero_history
from krasovskii.systems import (
    DelaySystem,
    UncertaintyPair,
    build_system,
    constant_input,
    make_example1,
    make_example2,
    make_example3,
    make_linear_baseline,
    piecewise_noise_input,
    shift_input,
    sinusoid_input,
    step_input,
    zero_input,
)

V0 = np.zeros(1)


class TestExample1:
    def test_origin(self):
        sys = make_example1(1.0)
        assert np.array_equal(sys.field(zero_history(1.0, 2), V0), [0.0, 0.0])

    def test_hand_substitution_x1(self):
        sys = make_example1(1.0)
        f = sys.field(constant_history(1.0, [1.0, 0.0]), V0)
        assert np.allclose(f, [-0.5, -1.0], atol=0)

    def test_hand_substitution_with_input(self):
        sys = make_example1(0.5)
        f = sys.field(constant_history(0.5, [0.0, 1.0]), np.array([2.0]))
        assert np.allclose(f, [2.0, 0.0], atol=0)

    def test_right_growth_bound_on_samples(self):
        sys = make_example1(1.0)
        rng = np.random.default_rng(8)
        for i in range(300):
            phi = random_history((31, i), 2, 1.0, (0.1, 1.0, 10.0)[i % 3], i % 4)
            v = rng.standard_normal(1) * (0.0, 0.5, 2.0)[i % 3]
            lhs = float(phi.eval(0.0) @ sys.field(phi, v))
            assert lhs <= phi.sup_norm() ** 2 + v[0] ** 2 + 1e-9

    def test_left_growth_bound_on_samples(self):
        sys = make_example1(1.0)
        rng = np.random.default_rng(9)
        for i in range(300):
            phi = random_history((37, i), 2, 1.0, (0.1, 1.0, 10.0)[i % 3], i % 4)
            v = rng.standard_normal(1) * (0.0, 0.5, 2.0)[i % 3]
            lhs = float(phi.eval(0.0) @ sys.field(phi, v))
            assert lhs >= -3.0 * (phi.sup_norm() ** 2 + v[0] ** 2) - 1e-9

    def test_pointwise_matches_field(self):
        sys = make_example1(1.0)
        for i in range(20):
            phi = random_history((41, i), 2, 1.0, 2.0, 3)
            v = np.array([float(i) / 7.0])
            assert np.allclose(sys.field(phi, v),
                               sys.pointwise(phi.eval(0.0), phi.eval(-1.0), v),
                               rtol=0, atol=0)


class TestExample2:
    def test_unperturbed_uses_x1_delay(self):
        sys = make_example2(1.0)
        f = sys.field(constant_history(1.0, [1.0, 0.0]), V0)
        assert np.allclose(f, [0.5, -1.0], atol=0)

    def test_uncertainty_enters_scaled(self):
        d = UncertaintyPair(lambda phi: float(phi.eval(0.0)[0]), lambda phi: 0.0)
        sys = make_example2(1.0, epsilon=0.1, d=d)
        f = sys.field(constant_history(1.0, [1.0, 0.0]), V0)
        assert np.allclose(f, [0.6, -1.0], atol=1e-15)

    def test_origin(self):
        sys = make_example2(2.0, epsilon=0.3,
                            d=UncertaintyPair(lambda p: float(p.eval(-1.0)[1]),
                                              lambda p: 0.5 * float(p.eval(0.0)[0])))
        assert np.allclose(sys.field(zero_history(2.0, 2), V0), 0.0, atol=0)

    def test_unbounded_uncertainty_rejected(self):
        bad = UncertaintyPair(lambda phi: 2.0 * phi.sup_norm() + 1.0,
                              lambda phi: 0.0)
        with pytest.raises(ValueError, match="d1"):
            make_example2(1.0, epsilon=0.5, d=bad)


class TestExample3:
    def test_origin(self):
        sys = make_example3(1.0)
        assert np.array_equal(sys.field(zero_history(1.0, 2), V0), [0.0, 0.0])

    def test_hand_substitution(self):
        sys = make_example3(1.0)
        f = sys.field(constant_history(1.0, [0.0, 1.0]), V0)
        assert np.allclose(f, [1.0, -3.0], atol=0)

    def test_cubic_damping_symbolic(self):
        sys = make_example3(1.0)
        for s in (0.5, 2.0, -3.0, 10.0):
            f = sys.field(constant_history(1.0, [0.0, s]), V0)
            assert f[1] == pytest.approx(-2.0 * s - s ** 3, rel=1e-15)

    def test_defeats_quadratic_lower_bound(self):
        # scaling family (0, s): x(0)'f drops like -s^4
        sys = make_example3(1.0)
        M = 10.0
        found = False
        for s in (1.0, 3.0, 10.0, 30.0):
            phi = constant_history(1.0, [0.0, s])
            lhs = float(phi.eval(0.0) @ sys.field(phi, V0))
            if lhs < -M * phi.sup_norm() ** 2:
                found = True
        assert found


class TestLinearBaseline:
    def test_origin(self):
        sys = make_linear_baseline(1.0, -0.5, 1.0)
        assert sys.field(zero_history(1.0, 1), V0)[0] == 0.0

    def test_field_formula(self):
        sys = make_linear_baseline(2.0, 0.5, 1.0)
        phi = constant_history(1.0, [3.0])
        assert sys.field(phi, np.array([1.0]))[0] == pytest.approx(
            -2.0 * 3.0 + 0.5 * 3.0 + 1.0, abs=0)


class TestConstructionContract:
    def test_nonvanishing_field_rejected(self):
        with pytest.raises(ValueError, match="f\\(0, 0\\)"):
            DelaySystem(1, 1, 0.0, lambda phi, v: np.array([1.0]))


class TestInputSignals:
    def brute_sup(self, u, t1, t2):
        ts = np.linspace(t1, t2, 3001)
        return max(float(np.linalg.norm(u.evaluate(t))) for t in ts)

    @pytest.mark.parametrize("make", [
        lambda: zero_input(2),
        lambda: constant_input([1.0, -2.0]),
        lambda: step_input(1.5, [0.5], [2.0]),
        lambda: sinusoid_input(1.3, 2.0, 0.4),
        lambda: piecewise_noise_input(5, 1.0, 0.25),
    ])
    def test_window_sup_dominates_and_monotone(self, make):
        u = make()
        windows = [(0.0, 1.0), (0.0, 2.0), (0.5, 1.7), (0.0, 4.0)]
        for t1, t2 in windows:
            assert u.window_sup(t1, t2) >= self.brute_sup(u, t1, t2) - 1e-9
        # monotone under inclusion
        assert u.window_sup(0.5, 1.7) <= u.window_sup(0.0, 2.0) + 1e-15
        assert u.window_sup(0.0, 2.0) <= u.window_sup(0.0, 4.0) + 1e-15

    def test_sinusoid_exact_peak(self):
        u = sinusoid_input(2.0, np.pi, 0.0)
        assert u.window_sup(0.0, 1.0) == pytest.approx(2.0, abs=0)
        assert u.window_sup(0.0, 0.25) == pytest.approx(
            2.0 * np.sin(np.pi * 0.25), rel=1e-12)

    def test_noise_deterministic(self):
        a = piecewise_noise_input(9, 2.0, 0.5)
        b = piecewise_noise_input(9, 2.0, 0.5)
        for t in (0.0, 0.3, 1.9, 7.2):
            assert np.array_equal(a.evaluate(t), b.evaluate(t))

    def test_shift(self):
        u = step_input(1.0, [0.0], [3.0])
        shifted = shift_input(u, 1.0)
        assert shifted.evaluate(0.0)[0] == 3.0
        assert shifted.window_sup(0.0, 1.0) == 3.0


class TestRegistry:
    def test_known_names(self):
        for name in ("example1", "example2", "example3", "linear"):
            sys = build_system(name, 1.0, {})
            assert sys.delay == 1.0

    def test_linear_params(self):
        sys = build_system("linear", 0.5, {"a": "2.0", "b": "-1.0"})
        assert sys.field(constant_history(0.5, [1.0]), V0)[0] == pytest.approx(-3.0)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown system"):
            build_system("vanderpol", 1.0, {})

    def test_unknown_param(self):
        with pytest.raises(ValueError, match="unknown linear parameter"):
            build_system("linear", 1.0, {"q": "2"})
