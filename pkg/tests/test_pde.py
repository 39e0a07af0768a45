import numpy as np
import pytest

from enkfcontrol.pde import (
    BlowUpError,
    BurgersSimulator,
    GridSpec,
    HeatSimulator,
    InvalidBasisError,
    LinearSimulator,
    build_control_matrix,
    burgers_rhs,
    heat_rhs,
    integrate,
    l2_norm,
    sample_initial_condition,
    second_difference_matrix,
)


class TestGridSpec:
    def test_spacing(self):
        grid = GridSpec(p=100, L=1.0)
        assert grid.dy == pytest.approx(0.01)
        assert grid.points[0] == pytest.approx(0.005)
        assert grid.points[-1] == pytest.approx(0.995)

    def test_invalid(self):
        with pytest.raises(ValueError):
            GridSpec(p=2)
        with pytest.raises(ValueError):
            GridSpec(p=10, L=0.0)


class TestControlMatrix:
    def test_p4_m2_halves(self):
        B = build_control_matrix(GridSpec(p=4), 2)
        assert np.array_equal(B[:, 0], [1, 1, 0, 0])
        assert np.array_equal(B[:, 1], [0, 0, 1, 1])

    def test_single_channel_all_ones(self):
        B = build_control_matrix(GridSpec(p=100), 1)
        assert np.array_equal(B, np.ones((100, 1)))

    def test_p128_m10_partition(self):
        grid = GridSpec(p=128)
        B = build_control_matrix(grid, 10)
        # oracle: direct membership of each cell center in [j/10, (j+1)/10)
        for i, y in enumerate(grid.points):
            expected = np.zeros(10)
            for j in range(10):
                if j / 10 <= y < (j + 1) / 10:
                    expected[j] = 1.0
            assert np.array_equal(B[i], expected), f"row {i}"
        sizes = B.sum(axis=0)
        assert sizes.sum() == 128  # disjoint and covering
        assert np.array_equal(np.sort(sizes)[::-1], sorted(sizes, reverse=True))
        assert np.all(B.sum(axis=1) == 1)

    def test_m_exceeds_p(self):
        with pytest.raises(InvalidBasisError):
            build_control_matrix(GridSpec(p=4), 5)


class TestHeatRhs:
    def test_zero_state(self):
        grid = GridSpec(p=16)
        B = build_control_matrix(grid, 2)
        out = heat_rhs(np.zeros(16), np.zeros(2), 0.01, grid, B)
        assert np.array_equal(out, np.zeros(16))

    def test_constant_in_kernel_periodic(self):
        grid = GridSpec(p=16)
        B = build_control_matrix(grid, 2)
        out = heat_rhs(np.full(16, 3.7), np.zeros(2), 0.01, grid, B)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_delta_stencil(self):
        grid = GridSpec(p=16)
        B = build_control_matrix(grid, 2)
        k = 5
        z = np.eye(16)[k]
        out = heat_rhs(z, np.zeros(2), 1.0, grid, B)
        expected = (np.eye(16)[k - 1] - 2 * z + np.eye(16)[k + 1]) / grid.dy**2
        assert np.allclose(out, expected)

    def test_dimension_mismatch(self):
        grid = GridSpec(p=16)
        B = build_control_matrix(grid, 2)
        with pytest.raises(ValueError):
            heat_rhs(np.zeros(15), np.zeros(2), 0.01, grid, B)


class TestBurgersRhs:
    def test_zero_and_constant(self):
        grid = GridSpec(p=16)
        B = build_control_matrix(grid, 2)
        assert np.array_equal(
            burgers_rhs(np.zeros(16), np.zeros(2), 0.01, grid, B), np.zeros(16)
        )
        out = burgers_rhs(np.full(16, -1.3), np.zeros(2), 0.01, grid, B)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_sine_field_matches_analytic(self):
        nu = 0.01
        grid = GridSpec(p=256)
        B = build_control_matrix(grid, 4)
        y = grid.points
        w = 2 * np.pi / grid.L
        z = np.sin(w * y)
        out = burgers_rhs(z, np.zeros(4), nu, grid, B)
        analytic = -z * w * np.cos(w * y) + nu * (-(w**2)) * z
        # second-order stencils: error bounded by C dy^2 with C ~ w^3/6
        assert np.max(np.abs(out - analytic)) < (w**3 / 6 + 5.0) * grid.dy**2

    def test_second_order_convergence(self):
        nu = 0.01

        def err(p):
            grid = GridSpec(p=p)
            B = build_control_matrix(grid, 4)
            y = grid.points
            w = 2 * np.pi
            z = np.sin(w * y)
            out = burgers_rhs(z, np.zeros(4), nu, grid, B)
            analytic = -z * w * np.cos(w * y) - nu * w**2 * z
            return np.max(np.abs(out - analytic))

        ratio = err(128) / err(256)
        assert 3.5 < ratio < 4.5  # halving dy quarters the error


class TestAffinity:
    @pytest.mark.parametrize("make", ["heat", "burgers", "linear"])
    def test_affine_in_control(self, make):
        rng = np.random.default_rng(3)
        grid = GridSpec(p=24)
        if make == "heat":
            sim = HeatSimulator(grid, 0.01, 4)
        elif make == "burgers":
            sim = BurgersSimulator(grid, 0.01, 4)
        else:
            sim = LinearSimulator(rng.normal(size=(24, 24)), rng.normal(size=(24, 4)))
        x = rng.normal(size=24)
        u1, u2 = rng.normal(size=4), rng.normal(size=4)
        a, b = 0.7, -2.1
        base = sim.rhs(x, np.zeros(4))
        lhs = sim.rhs(x, a * u1 + b * u2) - base
        rhs = a * (sim.rhs(x, u1) - base) + b * (sim.rhs(x, u2) - base)
        assert np.linalg.norm(lhs - rhs) <= 1e-10

    def test_undisclosed_hides_matrix(self):
        sim = HeatSimulator(GridSpec(p=16), 0.01, 2).undisclosed()
        with pytest.raises(AttributeError):
            _ = sim.control_matrix
        # evaluation still works
        assert sim.rhs(np.zeros(16), np.zeros(2)).shape == (16,)


class TestIntegrate:
    def test_constant_trajectory(self):
        sim = LinearSimulator(np.zeros((3, 3)), np.zeros((3, 1)))
        ts, xs = integrate(sim, np.array([1.0, -2.0, 0.5]), lambda t: np.zeros(1), 0.0, 1.0, 0.1)
        assert np.allclose(xs, xs[0])
        assert ts[0] == 0.0 and ts[-1] == 1.0

    def test_scalar_exponential(self):
        sim = LinearSimulator(np.array([[-1.0]]), np.zeros((1, 1)))
        ts, xs = integrate(sim, np.array([1.0]), lambda t: np.zeros(1), 0.0, 1.0, 1e-3)
        assert xs[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-8)

    def test_backward_forward_roundtrip_heat(self):
        grid = GridSpec(p=32)
        sim = HeatSimulator(grid, 0.002, 4)
        rng = np.random.default_rng(0)
        z0 = sample_initial_condition(rng, grid)
        u_fn = lambda t: np.zeros(4)
        _, back = integrate(sim, z0, u_fn, 0.1, 0.0, 1e-3, direction="backward")
        _, forth = integrate(sim, back[-1], u_fn, 0.0, 0.1, 1e-3)
        rel = np.linalg.norm(forth[-1] - z0) / np.linalg.norm(z0)
        assert rel < 1e-6

    def test_blowup_raises(self):
        sim = LinearSimulator(np.array([[50.0]]), np.zeros((1, 1)))
        with pytest.raises(BlowUpError) as err:
            integrate(sim, np.array([1e300]), lambda t: np.zeros(1), 0.0, 20.0, 0.1)
        assert 0.0 <= err.value.t_last < 20.0

    def test_direction_validation(self):
        sim = LinearSimulator(np.zeros((1, 1)), np.zeros((1, 1)))
        with pytest.raises(ValueError):
            integrate(sim, np.zeros(1), lambda t: np.zeros(1), 1.0, 0.0, 0.1, "forward")
        with pytest.raises(ValueError):
            integrate(sim, np.zeros(1), lambda t: np.zeros(1), 0.0, 1.0, 0.1, "backward")


class TestInitialCondition:
    def test_peak_at_center(self):
        # odd p puts a grid point exactly at y = 1/2
        grid = GridSpec(p=101)
        rng = np.random.default_rng(0)
        z = sample_initial_condition(rng, grid)
        assert np.argmax(z) == 50

    def test_range_and_symmetry(self):
        grid = GridSpec(p=101)
        for seed in range(100):
            z = sample_initial_condition(np.random.default_rng(seed), grid)
            assert np.all(z > 0) and np.all(z <= 1.1)
            assert np.allclose(z, z[::-1], atol=1e-12)  # symmetric about 1/2

    def test_determinism(self):
        grid = GridSpec(p=64)
        z1 = sample_initial_condition(np.random.default_rng(42), grid)
        z2 = sample_initial_condition(np.random.default_rng(42), grid)
        assert np.array_equal(z1, z2)


class TestL2Norm:
    def test_zero_and_unit(self):
        grid = GridSpec(p=64)
        assert l2_norm(np.zeros(64), grid) == 0.0
        assert l2_norm(np.ones(64), grid) == pytest.approx(1.0)

    def test_sine(self):
        grid = GridSpec(p=256)
        z = np.sin(2 * np.pi * grid.points)
        assert l2_norm(z, grid) == pytest.approx(np.sqrt(0.5), abs=1e-3)


class TestHeatDissipation:
    def test_uncontrolled_l2_nonincreasing(self):
        grid = GridSpec(p=64)
        sim = HeatSimulator(grid, 0.002, 4)
        for seed in range(100):
            z0 = sample_initial_condition(np.random.default_rng(seed), grid)
            _, xs = integrate(sim, z0, lambda t: np.zeros(4), 0.0, 0.05, 1e-3)
            norms = np.array([l2_norm(x, grid) for x in xs])
            assert np.all(np.diff(norms) <= 1e-12)


class TestDirichlet:
    def test_constant_not_in_kernel(self):
        grid = GridSpec(p=16)
        B = build_control_matrix(grid, 2)
        out = heat_rhs(np.ones(16), np.zeros(2), 0.01, grid, B, bc="dirichlet")
        assert not np.allclose(out, 0.0)
        # interior rows are unchanged from the periodic stencil
        out_per = heat_rhs(np.ones(16), np.zeros(2), 0.01, grid, B)
        assert np.allclose(out[1:-1], out_per[1:-1])

    def test_dissipation(self):
        grid = GridSpec(p=32)
        sim = HeatSimulator(grid, 0.01, 2, bc="dirichlet")
        z0 = sample_initial_condition(np.random.default_rng(1), grid)
        _, xs = integrate(sim, z0, lambda t: np.zeros(2), 0.0, 0.2, 1e-3)
        norms = [l2_norm(x, grid) for x in xs]
        assert norms[-1] < norms[0]


def test_second_difference_matrix_matches_operator():
    grid = GridSpec(p=20)
    D2 = second_difference_matrix(grid)
    rng = np.random.default_rng(5)
    z = rng.normal(size=20)
    from enkfcontrol.pde import second_difference

    assert np.allclose(D2 @ z, second_difference(z, grid))
    # circulant: row sums zero
    assert np.allclose(D2.sum(axis=1), 0.0)
