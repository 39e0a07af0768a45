import numpy as np
import pytest
from scipy.linalg import expm

from enkfcontrol.dmdc import (
    ConversionError,
    FitError,
    ReducedModel,
    SnapshotData,
    collect_snapshots,
    fit_dmdc,
    lift_state,
    reduce_state,
    to_continuous,
)
from enkfcontrol.pde import BurgersSimulator, GridSpec, LinearSimulator, sample_initial_condition


def exact_discretization(A, B, dt):
    """Oracle: exact ZOH discretization via the block matrix exponential."""
    n, m = B.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A * dt
    block[:n, n:] = B * dt
    E = expm(block)
    return E[:n, :n], E[:n, n:]


def lti_snapshots(A, B, dt, K, rng, amplitude=1.0):
    """Snapshot data generated exactly by the discrete map of an LTI system."""
    Ad, Bd = exact_discretization(A, B, dt)
    n, m = B.shape
    xs, xnexts, us = [], [], []
    x = rng.normal(size=n)
    for _ in range(K):
        u = rng.uniform(-amplitude, amplitude, size=m)
        x_next = Ad @ x + Bd @ u
        xs.append(x)
        xnexts.append(x_next)
        us.append(u)
        x = x_next
    return SnapshotData(X=np.array(xs).T, Xnext=np.array(xnexts).T, U=np.array(us).T, dt=dt)


class TestCollect:
    def test_column_count(self):
        sim = LinearSimulator(-np.eye(3), np.eye(3))
        data = collect_snapshots(
            sim, lambda rng: rng.normal(size=3), n_traj=1, steps=5,
            dt=0.01, amplitude=0.5, rng=np.random.default_rng(0),
        )
        assert data.K == 5
        data2 = collect_snapshots(
            sim, lambda rng: rng.normal(size=3), n_traj=4, steps=5,
            dt=0.01, amplitude=0.5, rng=np.random.default_rng(0),
        )
        assert data2.K == 20

    def test_zero_excitation_matches_expm(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(4, 4))
        A -= (np.max(np.linalg.eigvals(A).real) + 1.0) * np.eye(4)
        sim = LinearSimulator(A, np.eye(4))
        data = collect_snapshots(
            sim, lambda r: r.normal(size=4), n_traj=3, steps=10,
            dt=1e-3, amplitude=0.0, rng=np.random.default_rng(2),
        )
        Ad = expm(A * 1e-3)
        assert np.allclose(data.Xnext, Ad @ data.X, atol=1e-10)
        assert np.allclose(data.U, 0.0)

    def test_deterministic(self):
        grid = GridSpec(p=32)
        sim = BurgersSimulator(grid, 0.01, 4)
        kwargs = dict(n_traj=2, steps=8, dt=1e-3, amplitude=0.5)
        d1 = collect_snapshots(sim, lambda r: sample_initial_condition(r, grid),
                               rng=np.random.default_rng(9), **kwargs)
        d2 = collect_snapshots(sim, lambda r: sample_initial_condition(r, grid),
                               rng=np.random.default_rng(9), **kwargs)
        assert np.array_equal(d1.X, d2.X)
        assert np.array_equal(d1.U, d2.U)


class TestFit:
    def test_recovers_full_order_lti(self):
        rng = np.random.default_rng(3)
        A = np.array([[0.0, 1.0, 0.0], [-1.0, -0.4, 0.2], [0.0, 0.3, -0.8]])
        B = rng.normal(size=(3, 2))
        data = lti_snapshots(A, B, dt=0.05, K=60, rng=rng)
        model = fit_dmdc(data, n=3)
        Ad, Bd = exact_discretization(A, B, 0.05)
        # recovery is up to the orthogonal basis Phi; compare after lifting
        A_lift = model.Phi.T @ model.A @ model.Phi
        B_lift = model.Phi.T @ model.B
        assert np.linalg.norm(A_lift - Ad, "fro") < 1e-8
        assert np.linalg.norm(B_lift - Bd, "fro") < 1e-8

    def test_prediction_residual_full_rank(self):
        rng = np.random.default_rng(4)
        A = -np.eye(4) + 0.2 * rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 2))
        data = lti_snapshots(A, B, dt=0.02, K=100, rng=rng)
        model = fit_dmdc(data, n=4)
        pred = model.Phi.T @ (model.A @ (model.Phi @ data.X) + model.B @ data.U)
        assert np.linalg.norm(data.Xnext - pred) <= 1e-8

    def test_input_free_data_gives_zero_b(self):
        rng = np.random.default_rng(5)
        A = np.array([[0.9, 0.1], [0.0, 0.8]])
        xs, xnexts = [], []
        x = rng.normal(size=2)
        for _ in range(30):
            x_next = A @ x
            xs.append(x)
            xnexts.append(x_next)
            x = x_next
        data = SnapshotData(
            X=np.array(xs).T, Xnext=np.array(xnexts).T, U=np.zeros((1, 30)), dt=0.1
        )
        model = fit_dmdc(data, n=2)
        assert np.linalg.norm(model.B) <= 1e-8

    def test_rank_deficiency_reported(self):
        # rank-1 snapshot data cannot support a rank-3 basis
        x = np.ones((5, 1)) @ np.ones((1, 40))
        data = SnapshotData(X=x, Xnext=x, U=np.zeros((1, 40)), dt=0.1)
        with pytest.raises(FitError, match="rank"):
            fit_dmdc(data, n=3)

    def test_too_few_columns(self):
        data = SnapshotData(X=np.ones((5, 3)), Xnext=np.ones((5, 3)), U=np.zeros((1, 3)), dt=0.1)
        with pytest.raises(FitError):
            fit_dmdc(data, n=4)

    def test_phi_orthonormal_rows(self):
        rng = np.random.default_rng(6)
        grid = GridSpec(p=48)
        sim = BurgersSimulator(grid, 0.02, 4)
        data = collect_snapshots(
            sim, lambda r: sample_initial_condition(r, grid), n_traj=4, steps=30,
            dt=1e-3, amplitude=0.5, rng=rng,
        )
        model = fit_dmdc(data, n=6)
        assert np.linalg.norm(model.Phi @ model.Phi.T - np.eye(6)) < 1e-10


class TestToContinuous:
    def test_identity_map(self):
        model = ReducedModel(A=np.eye(3), B=np.full((3, 2), 2.0), Phi=np.eye(3),
                             dt=0.5, discrete=True)
        cont = to_continuous(model)
        assert np.allclose(cont.A, 0.0, atol=1e-12)
        assert np.allclose(cont.B, model.B / 0.5)

    def test_scalar_closed_form(self):
        a = -1.7
        dt = 0.05
        model = ReducedModel(A=np.array([[np.exp(a * dt)]]), B=np.array([[1.0]]),
                             Phi=np.eye(1), dt=dt, discrete=True)
        cont = to_continuous(model)
        assert cont.A[0, 0] == pytest.approx(a, abs=1e-10)

    def test_roundtrip_random_stable(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(5, 5))
        A -= (np.max(np.linalg.eigvals(A).real) + 0.6) * np.eye(5)
        B = rng.normal(size=(5, 2))
        dt = 0.01
        Ad, Bd = exact_discretization(A, B, dt)
        model = ReducedModel(A=Ad, B=Bd, Phi=np.eye(5), dt=dt, discrete=True)
        cont = to_continuous(model)
        assert np.linalg.norm(cont.A - A, "fro") < 1e-8
        assert np.linalg.norm(cont.B - B, "fro") < 1e-8

    def test_negative_real_eigenvalue_rejected(self):
        model = ReducedModel(A=np.array([[-0.5]]), B=np.ones((1, 1)), Phi=np.eye(1),
                             dt=0.1, discrete=True)
        with pytest.raises(ConversionError):
            to_continuous(model)


class TestReduceLift:
    @pytest.fixture
    def model(self):
        rng = np.random.default_rng(8)
        M = rng.normal(size=(3, 10))
        Phi = np.linalg.qr(M.T)[0].T  # orthonormal rows
        return ReducedModel(A=np.eye(3), B=np.eye(3), Phi=Phi, dt=0.1, discrete=False)

    def test_projection_identity_in_span(self, model):
        rng = np.random.default_rng(9)
        z = model.Phi.T @ rng.normal(size=3)
        assert np.linalg.norm(lift_state(model, reduce_state(model, z)) - z) < 1e-10

    def test_orthogonal_component_maps_to_zero(self, model):
        rng = np.random.default_rng(10)
        z = rng.normal(size=10)
        z -= model.Phi.T @ (model.Phi @ z)
        assert np.linalg.norm(reduce_state(model, z)) < 1e-10

    def test_projection_contracts(self, model):
        rng = np.random.default_rng(11)
        for _ in range(20):
            z = rng.normal(size=10)
            assert np.linalg.norm(lift_state(model, reduce_state(model, z))) <= np.linalg.norm(z) + 1e-12

    def test_dimension_mismatch(self, model):
        with pytest.raises(ValueError):
            reduce_state(model, np.zeros(9))
        with pytest.raises(ValueError):
            lift_state(model, np.zeros(4))


def test_one_step_prediction_heldout_lti():
    # data from a true low-order LTI: held-out one-step error ~ machine precision
    rng = np.random.default_rng(12)
    A = np.array([[-0.3, 1.0], [-1.0, -0.3]])
    B = np.array([[0.0], [1.0]])
    train = lti_snapshots(A, B, dt=0.02, K=80, rng=rng)
    test = lti_snapshots(A, B, dt=0.02, K=40, rng=rng)
    model = fit_dmdc(train, n=2)
    pred = model.Phi.T @ (model.A @ (model.Phi @ test.X) + model.B @ test.U)
    err = np.linalg.norm(test.Xnext - pred) / np.linalg.norm(test.Xnext)
    assert err <= 1e-6
