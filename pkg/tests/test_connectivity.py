import numpy as np
import pytest

from core.errors import DegenerateInputError, DimensionError, DomainError
from models.matrices import TimeSeries
from services.connectivity import R_CLAMP, connectivity_matrix, fisher_z, pearson


def direct_pearson(x, y):
    dx, dy = x - x.mean(), y - y.mean()
    return float(np.sum(dx * dy) / np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))


def test_pearson_known_value():
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.981981, abs=1e-6)


def test_pearson_self_and_negated():
    x = np.random.default_rng(0).normal(size=20)
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)


def test_pearson_matches_direct_formula():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        x, y = rng.normal(size=(2, 30))
        assert pearson(x, y) == pytest.approx(direct_pearson(x, y), abs=1e-10)


def test_pearson_affine_invariance():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(2, 50))
    assert pearson(3.5 * x + 7.0, y) == pytest.approx(pearson(x, y), abs=1e-12)


def test_pearson_errors():
    with pytest.raises(DegenerateInputError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        pearson([1.0, 2.0, 3.0], [1.0, 2.0])
    with pytest.raises(DimensionError):
        pearson([1.0, 2.0], [2.0, 1.0])


@pytest.mark.parametrize("r, expected", [(0.0, 0.0), (0.5, 0.549306)])
def test_fisher_z_values(r, expected):
    assert fisher_z(r) == pytest.approx(expected, abs=1e-6)


def test_fisher_z_clamps_perfect_correlation():
    z = fisher_z(1.0)
    assert np.isfinite(z)
    assert z == pytest.approx(np.arctanh(R_CLAMP))
    assert 8.3 < z < 8.5


def test_fisher_z_is_odd():
    r = np.linspace(-0.99, 0.99, 41)
    np.testing.assert_array_equal(fisher_z(-r), -fisher_z(r))


def test_fisher_z_domain():
    with pytest.raises(DomainError):
        fisher_z(1.5)


def test_connectivity_matrix_symmetric_zero_diagonal():
    ts = TimeSeries(np.random.default_rng(3).normal(size=(10, 40)))
    m = connectivity_matrix(ts)
    np.testing.assert_array_equal(m.values, m.values.T)
    np.testing.assert_array_equal(np.diag(m.values), np.zeros(10))


def test_connectivity_matrix_entries_match_pipeline():
    values = np.random.default_rng(4).normal(size=(5, 25))
    m = connectivity_matrix(TimeSeries(values))
    assert m.values[1, 3] == pytest.approx(fisher_z(pearson(values[1], values[3])), abs=1e-12)


def test_identical_rows_hit_the_clamp():
    rng = np.random.default_rng(5)
    row = rng.normal(size=30)
    values = np.vstack([row, row, rng.normal(size=30)])
    m = connectivity_matrix(TimeSeries(values))
    assert m.values[0, 1] == pytest.approx(np.arctanh(R_CLAMP))


def test_white_noise_gives_small_z():
    ts = TimeSeries(np.random.default_rng(6).normal(size=(6, 1000)))
    assert np.all(np.abs(connectivity_matrix(ts).values) < 0.2)


def test_zero_variance_roi_is_named():
    values = np.random.default_rng(7).normal(size=(4, 10))
    values[2] = 1.0
    with pytest.raises(DegenerateInputError, match="ROI 2"):
        TimeSeries(values)
