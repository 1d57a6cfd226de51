import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from huberloc import (
    LossFamily,
    NoiseModel,
    StackedVariables,
    apply_noise,
    ball_projection,
    build_incidence,
    convex_cost_f,
    cost_F,
    generate_geometric_network,
    grad_F,
    huber_loss,
    inner_minimized,
    lipschitz_constant,
    nonconvex_cost_g,
    project_feasible,
    psi,
    sq_dist_ball,
    variational_inner_min,
)

finite_floats = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
radii = st.floats(0.01, 10, allow_nan=False, allow_infinity=False)


def random_feasible_z(scenario, rng, spread=1.0):
    """Random stacked point with auxiliaries inside their measurement balls."""
    x = rng.normal(scale=spread, size=(scenario.n, scenario.dim))
    y = rng.normal(scale=spread, size=(scenario.num_edges, scenario.dim))
    w = rng.normal(scale=spread, size=(scenario.num_links, scenario.dim))
    return project_feasible(StackedVariables(x, y, w), scenario)


class TestHuberLoss:
    def test_quadratic_branch(self):
        assert huber_loss(0.5, 1.0) == 0.25

    def test_linear_branch(self):
        assert huber_loss(2.0, 1.0) == 3.0

    def test_knee_continuity(self):
        R = 0.73
        assert huber_loss(R, R) == pytest.approx(R * R, abs=1e-15)
        assert huber_loss(-R, R) == pytest.approx(R * R, abs=1e-15)

    @given(t=finite_floats, R=radii)
    @settings(max_examples=200, deadline=None)
    def test_even_and_nonnegative(self, t, R):
        assert huber_loss(t, R) >= 0
        assert huber_loss(-t, R) == huber_loss(t, R)

    @given(t=st.floats(0, 50), R=radii)
    @settings(max_examples=200, deadline=None)
    def test_below_quadratic(self, t, R):
        assert huber_loss(t, R) <= t * t + 1e-12


class TestBallProjection:
    def test_rescales_outside(self):
        np.testing.assert_allclose(ball_projection([3.0, 4.0], 1.0), [0.6, 0.8])

    def test_interior_untouched(self):
        np.testing.assert_array_equal(ball_projection([0.1, 0.0], 1.0), [0.1, 0.0])

    def test_origin_safe(self):
        np.testing.assert_array_equal(ball_projection([0.0, 0.0], 1.0), [0.0, 0.0])

    @given(st.lists(finite_floats, min_size=1, max_size=4), radii)
    @settings(max_examples=200, deadline=None)
    def test_odd(self, u, R):
        u = np.asarray(u)
        np.testing.assert_array_equal(ball_projection(-u, R), -ball_projection(u, R))

    @given(
        st.lists(finite_floats, min_size=2, max_size=2),
        st.lists(finite_floats, min_size=2, max_size=2),
        radii,
    )
    @settings(max_examples=200, deadline=None)
    def test_nonexpansive(self, u, v, R):
        u, v = np.asarray(u), np.asarray(v)
        lhs = np.linalg.norm(ball_projection(u, R) - ball_projection(v, R))
        assert lhs <= np.linalg.norm(u - v) + 1e-9


class TestSqDistBall:
    def test_inside_zero(self):
        assert sq_dist_ball([0.5, 0.0], 1.0) == 0.0

    def test_outside(self):
        assert sq_dist_ball([2.0, 0.0], 1.0) == pytest.approx(1.0)

    def test_gradient_matches_finite_differences(self):
        # oracle: central differences of the halved squared distance match
        # u - P(u) componentwise
        rng = np.random.default_rng(0)
        h = 1e-6
        for _ in range(50):
            p = rng.integers(1, 4)
            u = rng.normal(scale=2.0, size=p)
            R = rng.uniform(0.2, 2.0)
            if abs(np.linalg.norm(u) - R) < 1e-3:
                continue  # skip the kink itself
            grad = u - ball_projection(u, R)
            for c in range(p):
                e = np.zeros(p)
                e[c] = h
                fd = (
                    0.5 * sq_dist_ball(u + e, R) - 0.5 * sq_dist_ball(u - e, R)
                ) / (2 * h)
                assert fd == pytest.approx(grad[c], abs=2e-6)


class TestPsi:
    def test_inside_ball_is_squared_norm(self):
        u = np.array([0.3, -0.2])
        assert psi(u, 1.0) == pytest.approx(float(u @ u))

    def test_outside_example(self):
        assert psi(np.array([2.0, 0.0]), 1.0) == pytest.approx(3.0)

    @given(st.lists(finite_floats, min_size=1, max_size=3), radii)
    @settings(max_examples=300, deadline=None)
    def test_identity_with_huber_of_norm(self, u, R):
        u = np.asarray(u)
        lhs = psi(u, R)
        rhs = huber_loss(np.linalg.norm(u), R)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, float(u @ u))


class TestVariationalInnerMin:
    def test_interior_case(self):
        y = variational_inner_min([0.2, 0.1], [0.0, 0.0], 1.0)
        np.testing.assert_allclose(y, [0.2, 0.1])

    def test_boundary_case(self):
        y = variational_inner_min([2.0, 0.0], [0.0, 0.0], 1.0)
        np.testing.assert_allclose(y, [1.0, 0.0])

    def test_attains_hinge_value(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            p = rng.integers(1, 4)
            xi = rng.normal(scale=1.5, size=p)
            xj = rng.normal(scale=1.5, size=p)
            d = rng.uniform(0.05, 2.0)
            R = rng.uniform(0.05, 1.0)
            y = variational_inner_min(xi, xj, d)
            assert np.linalg.norm(y) <= d + 1e-12
            hinge = max(np.linalg.norm(xi - xj) - d, 0.0)
            attained = huber_loss(np.linalg.norm(xi - xj - y), R)
            assert attained == pytest.approx(huber_loss(hinge, R), abs=1e-12)

    def test_grid_search_finds_no_better_point(self):
        # brute-force oracle over the constraint ball at coarse resolution
        rng = np.random.default_rng(2)
        for _ in range(10):
            d = rng.uniform(0.1, 0.4)
            u = rng.normal(scale=2 * d, size=2)
            R = rng.uniform(0.05, 0.5)
            y_star = ball_projection(u, d)
            val_star = huber_loss(np.linalg.norm(u - y_star), R)
            grid = np.arange(-d, d + 1e-2, 1e-2)
            gx, gy = np.meshgrid(grid, grid)
            pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
            pts = pts[np.linalg.norm(pts, axis=1) <= d]
            vals = huber_loss(np.linalg.norm(u[None, :] - pts, axis=1), R)
            assert vals.min() >= val_star - 1e-9


def outlier_scenario(seed=3):
    scen = generate_geometric_network(10, seed=seed)
    return apply_noise(scen, NoiseModel.outlier(0.04, (7,), 4.0), seed=seed + 100)


class TestCostsGAndF:
    def test_zero_noise_zero_cost_at_truth(self):
        scen = generate_geometric_network(8, seed=4)
        noiseless = apply_noise(scen, NoiseModel.gaussian(0.0), seed=0)
        for loss in (LossFamily.huber(), LossFamily.quadratic(), LossFamily.absolute()):
            assert nonconvex_cost_g(noiseless.true_positions, noiseless, loss) == pytest.approx(0.0, abs=1e-24)

    def test_single_edge_1d_example(self):
        # two sensors on a line, measured range 1, placed 2 apart: the edge
        # discrepancy of 1 at radius 0.5 contributes 0.5 * (2*0.5*1 - 0.25)
        # = 0.375; the anchor term has discrepancy -1 and contributes the same
        scen = NetworkScenario_1d_pair()
        x = np.array([[0.0], [2.0]])
        val = nonconvex_cost_g(x, scen, LossFamily.huber(0.5))
        assert huber_loss(1.0, 0.5) == 0.75
        assert val == pytest.approx(0.375 + 0.375)

    def test_f_underestimates_g(self):
        scen = outlier_scenario()
        rng = np.random.default_rng(5)
        for loss in (LossFamily.huber(), LossFamily.quadratic(), LossFamily.absolute()):
            for _ in range(50):
                x = rng.normal(scale=0.7, size=(scen.n, scen.dim))
                assert convex_cost_f(x, scen, loss) <= nonconvex_cost_g(x, scen, loss) + 1e-12

    def test_f_equals_g_when_expanded(self):
        # scale positions up so every estimated distance exceeds its range
        scen = outlier_scenario()
        x = scen.true_positions * 50.0
        for loss in (LossFamily.huber(), LossFamily.quadratic(), LossFamily.absolute()):
            f = convex_cost_f(x, scen, loss)
            g = nonconvex_cost_g(x, scen, loss)
            assert f == pytest.approx(g, rel=1e-12)

    def test_f_zero_when_contracted(self):
        # all sensors on one point inside every anchor ball: hinge clips to 0
        scen = outlier_scenario()
        center = scen.anchors.mean(axis=0)
        x = np.tile(center, (scen.n, 1))
        ok = convex_cost_f(x, scen, LossFamily.huber())
        g = nonconvex_cost_g(x, scen, LossFamily.huber())
        if (np.linalg.norm(x[scen.link_nodes] - scen.anchors[scen.link_anchors], axis=1)
                <= scen.link_dists).all():
            assert ok == pytest.approx(0.0, abs=1e-20)
        assert g > ok

    def test_f_equals_F_at_inner_minimizer(self):
        scen = outlier_scenario()
        rng = np.random.default_rng(6)
        for _ in range(30):
            x = rng.normal(scale=0.7, size=(scen.n, scen.dim))
            z = inner_minimized(x, scen)
            f = convex_cost_f(x, scen, LossFamily.huber())
            F = cost_F(z, scen)
            assert F == pytest.approx(f, rel=1e-12, abs=1e-12)


def NetworkScenario_1d_pair():
    from huberloc import NetworkScenario

    return NetworkScenario(
        dim=1,
        true_positions=[[0.0], [1.0]],
        anchors=[[0.0]],
        edges=[[0, 1]],
        edge_dists=[1.0],
        edge_radii=[0.5],
        link_nodes=[0],
        link_anchors=[0],
        link_dists=[1.0],
        link_radii=[0.5],
    )


class TestCostFAndGradient:
    def test_F_zero_at_consistent_point(self):
        scen = generate_geometric_network(8, seed=4)
        noiseless = apply_noise(scen, NoiseModel.gaussian(0.0), seed=0)
        z = inner_minimized(noiseless.true_positions, noiseless)
        assert cost_F(z, noiseless) == pytest.approx(0.0, abs=1e-24)

    def test_F_nonnegative(self):
        scen = outlier_scenario()
        rng = np.random.default_rng(7)
        for _ in range(50):
            z = random_feasible_z(scen, rng)
            assert cost_F(z, scen) >= 0.0

    def test_gradient_matches_finite_differences(self):
        scen = outlier_scenario()
        rng = np.random.default_rng(8)
        h = 1e-6
        checked = 0
        while checked < 20:
            z = random_feasible_z(scen, rng)
            g = grad_F(z, scen).flat()
            vec = z.flat()
            idx = rng.choice(vec.size, size=10, replace=False)
            for c in idx:
                e = np.zeros(vec.size)
                e[c] = h
                fp = cost_F(StackedVariables.from_flat(scen, vec + e), scen)
                fm = cost_F(StackedVariables.from_flat(scen, vec - e), scen)
                fd = (fp - fm) / (2 * h)
                assert abs(fd - g[c]) <= 1e-6 * max(1.0, abs(g[c]))
            checked += 1

    def test_gradient_is_quadratic_inside_balls(self):
        # with huge robustness radii every projection is the identity and the
        # gradient must equal the quadratic-cost gradient
        scen = outlier_scenario().with_radii(1e6)
        rng = np.random.default_rng(9)
        z = random_feasible_z(scen, rng)
        g = grad_F(z, scen)
        gx = np.zeros_like(z.x)
        res_e = z.x[scen.edges[:, 0]] - z.x[scen.edges[:, 1]] - z.y
        res_l = z.x[scen.link_nodes] - scen.anchors[scen.link_anchors] - z.w
        np.add.at(gx, scen.edges[:, 0], res_e)
        np.subtract.at(gx, scen.edges[:, 1], res_e)
        np.add.at(gx, scen.link_nodes, res_l)
        np.testing.assert_allclose(g.x, gx, atol=1e-12)
        np.testing.assert_allclose(g.y, -res_e, atol=1e-12)
        np.testing.assert_allclose(g.w, -res_l, atol=1e-12)

    def test_sampled_lipschitz_bound(self):
        scen = outlier_scenario()
        L = lipschitz_constant(build_incidence(scen))
        rng = np.random.default_rng(10)
        for _ in range(200):
            za = random_feasible_z(scen, rng)
            zb = random_feasible_z(scen, rng)
            num = np.linalg.norm(grad_F(za, scen).flat() - grad_F(zb, scen).flat())
            den = np.linalg.norm(za.flat() - zb.flat())
            assert num <= L * den * (1 + 1e-12)


class TestLossFamily:
    def test_validation(self):
        with pytest.raises(ValueError):
            LossFamily("nope")
        with pytest.raises(ValueError):
            LossFamily.huber(0.0)
        with pytest.raises(ValueError):
            LossFamily("quadratic", radius=1.0)

    def test_huber_uses_scenario_radii_when_unset(self):
        fam = LossFamily.huber()
        t = np.array([0.05, 3.0])
        out = fam.value(t, np.array([0.1, 0.1]))
        np.testing.assert_allclose(out, huber_loss(t, 0.1))

    def test_huber_explicit_radius_wins(self):
        fam = LossFamily.huber(1.0)
        assert fam.value(2.0, 0.1) == huber_loss(2.0, 1.0)

    def test_huber_without_any_radius_fails(self):
        with pytest.raises(ValueError):
            LossFamily.huber().value(1.0)
