import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoidesign.errors import InvalidArgumentError
from qoidesign.models import (
    PAIRWISE_GD_MATRIX,
    SKEWED_MAP,
    DiffusionModel,
    LinearMapModel,
    PlateExperiment,
    PolynomialMapModel,
    QoIFunctional,
    TemperatureTrajectory,
    analytic_polynomial_jacobian,
    apply_region_average,
    default_sensor_layout,
    desk_sensor_layout,
    eval_linear,
    eval_polynomial,
    solve_diffusion,
)
from qoidesign.models.diffusion import stiffness_matrix


# -- linear -------------------------------------------------------------------

def test_eval_linear_examples():
    np.testing.assert_allclose(eval_linear(LinearMapModel(np.eye(2)), [0.3, 0.7]), [0.3, 0.7])
    np.testing.assert_allclose(eval_linear(LinearMapModel(PAIRWISE_GD_MATRIX), [1, 1]),
                               [1.0, 3.0, 0.1], atol=1e-15)
    np.testing.assert_allclose(eval_linear(LinearMapModel(SKEWED_MAP), [1, 0]), [1.0, 0.74])


def test_eval_linear_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        eval_linear(LinearMapModel(np.eye(2)), [1.0, 2.0, 3.0])


def test_linear_jacobian_constant(linear_model):
    for lam in ([0, 0], [0.3, 0.9], [5, -2]):
        np.testing.assert_array_equal(linear_model.jacobian(lam), PAIRWISE_GD_MATRIX)


def test_pairwise_gd_minors(linear_model):
    minors = [np.linalg.det(PAIRWISE_GD_MATRIX[[a, b]]) for a, b in ((0, 1), (0, 2), (1, 2))]
    np.testing.assert_allclose(np.abs(minors), [1.0, 0.25, 0.85], rtol=1e-12)
    assert linear_model.pairwise_gd()
    assert not LinearMapModel([[1, 2], [2, 4], [0, 1]]).pairwise_gd()


# -- polynomial ---------------------------------------------------------------

def test_eval_polynomial_examples():
    assert np.all(eval_polynomial(PolynomialMapModel(np.zeros((3, 6))), [0.2, 0.3]) == 0)
    lin = PolynomialMapModel([[0, 0, 0, 1, 1, 0]])
    assert eval_polynomial(lin, [0.2, 0.3])[0] == pytest.approx(0.5)


def test_eval_polynomial_term_by_term():
    model = PolynomialMapModel.random(10, seed=4)
    assert np.all(np.abs(model.coefficients) <= 1)
    l1 = l2 = 0.5
    expected = [r[0] * l1 ** 5 + r[1] * l2 ** 3 + r[2] * l1 ** 3 * l2 + r[3] * l1 + r[4] * l2 + r[5]
                for r in model.coefficients]
    np.testing.assert_allclose(eval_polynomial(model, [l1, l2]), expected, rtol=1e-14)


def test_polynomial_jacobian_special_rows():
    model = PolynomialMapModel([[0, 0, 0, 0, 0, 3.0], [0, 0, 0, 0.7, -1.1, 0]])
    for lam in ([0.1, 0.2], [0.9, 0.4]):
        np.testing.assert_allclose(analytic_polynomial_jacobian(model, lam),
                                   [[0, 0], [0.7, -1.1]], atol=1e-15)


def _central_difference(model, lam, step=1e-5):
    lam = np.asarray(lam, dtype=float)
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        cols.append((model(lam + e) - model(lam - e)) / (2 * step))
    return np.stack(cols, axis=1)


def test_polynomial_jacobian_finite_difference_example():
    model = PolynomialMapModel.random(5, seed=11)
    lam = [0.4, 0.9]
    np.testing.assert_allclose(analytic_polynomial_jacobian(model, lam),
                               _central_difference(model, lam), atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0, 1), st.floats(0, 1))
def test_polynomial_jacobian_finite_difference_property(seed, l1, l2):
    model = PolynomialMapModel.random(3, seed=seed)
    np.testing.assert_allclose(model.jacobian([l1, l2]), _central_difference(model, [l1, l2]),
                               atol=1e-6)


def test_polynomial_batch_matches_pointwise():
    model = PolynomialMapModel.random(4, seed=2)
    pts = np.random.default_rng(0).random((6, 2))
    np.testing.assert_allclose(model(pts), np.array([model(p) for p in pts]))
    np.testing.assert_allclose(model.jacobian(pts), np.array([model.jacobian(p) for p in pts]))


# -- diffusion ----------------------------------------------------------------

SMALL = DiffusionModel(cells=20, steps=20, num_saved=10)


def test_initial_state_is_zero():
    traj = solve_diffusion(SMALL, (0.05, 0.1))
    assert traj.fields.shape == (11, 20, 20)
    assert np.all(traj.fields[0] == 0)
    assert traj.times[-1] == pytest.approx(SMALL.t_final)


def test_symmetry_equal_kappa():
    T = solve_diffusion(SMALL, (0.1, 0.1)).fields
    scale = np.abs(T).max()
    assert np.abs(T - T[:, :, ::-1]).max() <= 1e-8 * scale
    assert np.abs(T - T[:, ::-1, :]).max() <= 1e-8 * scale


def test_weld_line_breaks_symmetry():
    T = solve_diffusion(SMALL, (0.02, 0.15)).fields[-1]
    assert np.abs(T - T[:, ::-1]).max() > 1e-3 * np.abs(T).max()


@pytest.mark.parametrize("kappa", [(0.01, 0.2), (0.1, 0.1), (0.2, 0.03)])
def test_heat_budget(kappa):
    model = SMALL
    traj = solve_diffusion(model, kappa)
    heat = traj.total_heat(model.rho_c)
    t = traj.times
    injected = model.source_field().sum() * model.h ** 2
    on = t <= model.t_source + 1e-12
    # the source is constant per step, so the heat gain is exact while it is on
    np.testing.assert_allclose(heat[on], injected * t[on], rtol=1e-10)
    off = heat[~on]
    np.testing.assert_allclose(off, heat[on][-1], rtol=1e-8)


def test_stiffness_matrix_properties():
    K = stiffness_matrix(SMALL, (0.03, 0.17)).toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-15)
    np.testing.assert_allclose(K @ np.ones(K.shape[0]), 0.0, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(K) > -1e-12)


@pytest.mark.parametrize("kappa", [(0.0, 0.1), (-0.1, 0.1), (0.1,)])
def test_bad_kappa(kappa):
    with pytest.raises(InvalidArgumentError):
        solve_diffusion(SMALL, kappa)


def test_bad_discretisation():
    with pytest.raises(InvalidArgumentError):
        DiffusionModel(cells=2)
    with pytest.raises(InvalidArgumentError):
        DiffusionModel(steps=30, num_saved=20)
    with pytest.raises(InvalidArgumentError):
        DiffusionModel(steps=15, num_saved=5)


def test_self_convergence():
    f = QoIFunctional("disc", 0, (0.2, 0.1), 0.05)
    vals = []
    for cells in (20, 40, 80):
        model = DiffusionModel(cells=cells, steps=cells, num_saved=2)
        traj = solve_diffusion(model, (0.1, 0.1))
        vals.append(apply_region_average(traj, QoIFunctional("disc", 2, f.center, f.radius)))
    coarse, mid = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    order = np.log2(coarse / mid)
    assert mid < coarse
    assert order > 1.0
    # Richardson: the fine value is within the extrapolated error of the mid value
    assert abs(vals[2] - vals[1]) <= coarse / 2 ** order * 1.5


def _trajectory(field, cells):
    return TemperatureTrajectory(np.array([0.0]), field[None], 1.0 / cells)


def test_region_average_constant_and_global():
    cells = 20
    c = 3.25
    traj = _trajectory(np.full((cells, cells), c), cells)
    for f in (QoIFunctional("disc", 0, (0.1, -0.3), 0.05), QoIFunctional("strip", 0),
              QoIFunctional("disc", 0, (0.49, 0.49), 0.05)):
        assert apply_region_average(traj, f) == pytest.approx(c, rel=1e-12)
    field = np.random.default_rng(1).random((cells, cells))
    whole = QoIFunctional("strip", 0, x_range=(-0.5, 0.5), y_range=(-0.5, 0.5))
    assert apply_region_average(_trajectory(field, cells), whole) == pytest.approx(field.mean(),
                                                                                   rel=1e-12)


def test_region_average_disc_oracle():
    cells = 40
    s = 0.02
    x = (np.arange(cells) + 0.5) / cells - 0.5
    xx, yy = np.meshgrid(x, x)
    traj = _trajectory(np.exp(-(xx ** 2 + yy ** 2) / s), cells)
    R = 0.05
    exact = s * (1 - np.exp(-R ** 2 / s)) / R ** 2
    assert apply_region_average(traj, QoIFunctional("disc", 0, (0.0, 0.0), R)) == pytest.approx(
        exact, rel=0.01)


def test_region_average_rejects_bad_regions():
    traj = _trajectory(np.zeros((10, 10)), 10)
    with pytest.raises(InvalidArgumentError):
        apply_region_average(traj, QoIFunctional("strip", 0, x_range=(0.6, 0.8)))
    with pytest.raises(InvalidArgumentError):
        apply_region_average(traj, QoIFunctional("disc", 0, (2.0, 2.0), 0.05))
    with pytest.raises(InvalidArgumentError):
        apply_region_average(traj, QoIFunctional("disc", 3))
    with pytest.raises(InvalidArgumentError):
        QoIFunctional("ring", 0)


def test_sensor_layouts():
    full = default_sensor_layout()
    assert full.shape == (20, 2)
    assert np.sum(full[:, 0] < 0) == 10
    assert np.all(np.abs(full) < 0.5)
    desk = desk_sensor_layout()
    assert desk.shape == (10, 2)
    assert np.sum(desk[:, 0] < 0) == 5
    # no sensor mirrors another about the source symmetry axes
    for p in full:
        for mirror in ((-p[0], p[1]), (p[0], -p[1]), (-p[0], -p[1])):
            assert not np.any(np.all(np.isclose(full, mirror), axis=1))


def test_plate_experiment_layout_and_values():
    exp = PlateExperiment(SMALL, levels=(1, 5))
    assert exp.num_qoi == 20
    assert exp.describe(3) == (1, 5)
    q, pred = exp.evaluate([0.05, 0.1])
    assert q.shape == (20,) and np.all(np.isfinite(q))
    assert pred > 0
    qs, preds = exp.evaluate_samples(np.array([[0.05, 0.1], [0.15, 0.02]]))
    np.testing.assert_allclose(qs[0], q)
    assert preds[0] == pred
    with pytest.raises(InvalidArgumentError):
        PlateExperiment(SMALL, levels=(0,))
