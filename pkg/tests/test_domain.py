import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qoidesign.domain import (
    ParameterBox,
    SampleSet,
    box_volume,
    make_rng,
    nearest_index,
    nearest_indices,
    sample_uniform,
    voronoi_volumes,
)
from qoidesign.errors import InvalidArgumentError, InvalidDomainError


@pytest.mark.parametrize("lower, upper, expected", [
    ([0, 0], [1, 1], 1.0),
    ([0.01, 0.01], [0.2, 0.2], 0.0361),
    ([0, 0], [2, 0.5], 1.0),
])
def test_box_volume(lower, upper, expected):
    assert box_volume(ParameterBox(lower, upper)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("lower, upper", [([0, 0], [1, 0]), ([0, 1], [1, 0.5]), ([0], [0, 1])])
def test_degenerate_box_rejected(lower, upper):
    with pytest.raises(InvalidDomainError):
        ParameterBox(lower, upper)


def test_box_volume_checks_raw_bounds():
    class Raw:
        lower = np.array([0.0, 0.0])
        upper = np.array([1.0, 0.0])
    with pytest.raises(InvalidDomainError):
        box_volume(Raw())


def test_sample_uniform_contained_and_reproducible():
    box = ParameterBox.unit(2)
    a = sample_uniform(box, 4, 7)
    b = sample_uniform(box, 4, 7)
    assert a.points.shape == (4, 2)
    assert np.all(box.contains(a.points))
    np.testing.assert_array_equal(a.points, b.points)
    assert a.seed == 7 and a.qoi_values is None


def test_sample_uniform_scaled_box():
    box = ParameterBox([0.01, 0.01], [0.2, 0.2])
    pts = sample_uniform(box, 1000, 3).points
    assert np.all(box.contains(pts))


def test_sample_uniform_zero_rejected():
    with pytest.raises(InvalidArgumentError):
        sample_uniform(ParameterBox.unit(2), 0, 1)


def test_sample_mean_and_ks_uniformity():
    pts = sample_uniform(ParameterBox.unit(2), 10 ** 5, 1).points
    np.testing.assert_allclose(pts.mean(axis=0), 0.5, atol=0.01)
    # 1% critical value of the one-sample KS statistic for large N
    crit = 1.628 / np.sqrt(len(pts))
    for j in range(2):
        assert stats.kstest(pts[:, j], "uniform").statistic < crit


def test_streams_are_independent_and_stable():
    a = make_rng(5, 0).random(3)
    b = make_rng(5, 1).random(3)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, make_rng(5, 0).random(3))


def test_sample_set_validates_shapes():
    box = ParameterBox.unit(2)
    with pytest.raises(InvalidArgumentError):
        SampleSet(box, np.zeros((3, 3)))
    with pytest.raises(InvalidArgumentError):
        SampleSet(box, np.zeros((3, 2)), qoi_values=np.zeros((2, 1)))
    s = SampleSet(box, np.zeros((3, 2))).with_qoi(np.arange(3.0))
    assert s.num_qoi == 1 and len(s) == 3


def test_nearest_index_basic_cases():
    sites = np.array([[0.0, 0.0], [1.0, 0.0], [0.2, 0.9], [0.7, 0.7]])
    assert nearest_index(sites[3], sites) == 3
    assert nearest_index([0.5, 0.0], sites) == 0
    with pytest.raises(InvalidArgumentError):
        nearest_index([0.5, 0.5], np.empty((0, 2)))
    with pytest.raises(InvalidArgumentError):
        nearest_index([0.5, 0.5, 0.5], sites)


def test_nearest_indices_match_brute_force():
    rng = np.random.default_rng(0)
    sites = rng.random((50, 2))
    queries = rng.random((10 ** 4, 2))
    brute = np.argmin(((queries[:, None, :] - sites[None]) ** 2).sum(axis=2), axis=1)
    np.testing.assert_array_equal(nearest_indices(queries, sites), brute)
    np.testing.assert_array_equal(nearest_indices(queries, sites, workers=2), brute)


def test_nearest_indices_tie_break_matches_scalar():
    sites = np.array([[1.0, 0.0], [0.0, 0.0], [2.0, 0.0]])
    # (0.5, 0) is equidistant from sites 0 and 1; (1.5, 0) from sites 0 and 2
    q = np.array([[0.5, 0.0], [1.5, 0.0]])
    np.testing.assert_array_equal(nearest_indices(q, sites), [0, 0])
    assert [nearest_index(p, sites) for p in q] == [0, 0]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2 ** 31))
def test_voronoi_volumes_partition_box(n_sites, seed):
    box = ParameterBox([0.0, -1.0], [2.0, 1.0])
    sites = sample_uniform(box, n_sites, seed).points
    vols = voronoi_volumes(sites, box, 2000, seed + 1)
    assert vols.shape == (n_sites,)
    assert np.all(vols >= 0)
    assert vols.sum() == pytest.approx(box.volume(), rel=1e-12)
