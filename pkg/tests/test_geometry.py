import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dprgmi.errors import DegenerateGeometryError, InputError, PairingError, UndefinedStatisticError
from dprgmi.geometry import covariance, covariance_summary, displacement, effective_dimension


def eig_deff(Z):
    """Oracle: participation ratio from the eigenvalues of the covariance."""
    C = Z - Z.mean(axis=0)
    lam = np.linalg.eigvalsh(C.T @ C / Z.shape[0])
    return lam.sum() ** 2 / np.sum(lam ** 2)


def test_two_axis_hand_case():
    r3 = np.sqrt(3.0)
    Z = np.array([[r3, 1], [r3, -1], [-r3, 1], [-r3, -1]])
    np.testing.assert_allclose(covariance(Z), np.diag([3.0, 1.0]), atol=1e-15)
    assert effective_dimension(Z) == pytest.approx(1.6, rel=1e-14)


def test_plus_minus_unit_vector():
    Z = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
    assert effective_dimension(Z) == pytest.approx(1.0, rel=1e-14)


def test_rank_one(rng):
    u = rng.standard_normal(6)
    Z = rng.standard_normal((40, 1)) * u
    assert effective_dimension(Z) == pytest.approx(1.0, rel=1e-10)


def test_isotropic_gaussian():
    Z = np.random.default_rng(0).standard_normal((100_000, 8))
    assert 7.5 <= effective_dimension(Z) <= 8.0


def test_random_matrices_match_oracle_and_bounds(rng):
    for _ in range(200):
        n, d = rng.integers(2, 30), rng.integers(1, 12)
        Z = rng.standard_normal((n, d)) * rng.uniform(0.01, 10, d)
        de = effective_dimension(Z)
        assert 1 - 1e-12 <= de <= min(d, n - 1) + 1e-9
        assert de == pytest.approx(eig_deff(Z), rel=1e-9)


def test_rotation_and_scale_invariance(rng):
    Z = rng.standard_normal((60, 5)) * [5, 2, 1, 0.5, 0.1]
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    base = effective_dimension(Z)
    assert effective_dimension(Z @ Q) == pytest.approx(base, rel=1e-10)
    assert effective_dimension(7.5 * Z) == pytest.approx(base, rel=1e-10)
    assert effective_dimension(Z + 100.0) == pytest.approx(base, rel=1e-8)


def test_identical_rows_undefined():
    Z = np.ones((10, 3))
    with pytest.raises(DegenerateGeometryError):
        effective_dimension(Z)
    # dropped like any other undefined statistic during resampling
    assert issubclass(DegenerateGeometryError, UndefinedStatisticError)
    assert np.isnan(covariance_summary(Z).d_eff)


def test_displacement_hand_case():
    Z0 = np.zeros((2, 2))
    Z1 = np.array([[3.0, 4.0], [1.0, 0.0]])
    assert displacement(Z1, Z0) == pytest.approx(13.0)


def test_displacement_laws(rng):
    A = rng.standard_normal((50, 4))
    B = rng.standard_normal((50, 4))
    t = rng.standard_normal(4)
    d = displacement(A, B)
    assert displacement(A, A) == 0.0
    assert displacement(B, A) == d
    assert displacement(A + t, B + t) == pytest.approx(d, rel=1e-12)
    assert displacement(3 * A, 3 * B) == pytest.approx(9 * d, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 6)),
              elements=st.floats(-1e3, 1e3)))
def test_displacement_nonnegative(A):
    assert displacement(A, A[::-1]) >= 0


def test_pairing_and_input_errors():
    with pytest.raises(PairingError):
        displacement(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(InputError):
        displacement(np.array([[np.nan]]), np.array([[0.0]]))
    with pytest.raises(InputError):
        effective_dimension(np.zeros((1, 3)))
    with pytest.raises(InputError):
        covariance(np.zeros(5))


def test_displacement_translation_law(rng):
    Z = rng.standard_normal((80, 5))
    t = rng.standard_normal(5)
    assert displacement(Z + t, Z) == pytest.approx(float(t @ t), rel=1e-10)
