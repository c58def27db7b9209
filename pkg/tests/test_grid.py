import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dense_laplacian, energy_loop
from pdemask.grid import InvalidInputError, as_image, energy, laplacian, neighbour_count, rms255


def test_laplacian_constant_is_zero():
    assert np.all(laplacian(np.full((7, 9), 0.5)) == 0.0)


def test_laplacian_quadratic_interior():
    x = np.arange(10, dtype=float)
    f = np.tile(x**2, (6, 1))
    assert laplacian(f)[3, 4] == pytest.approx(2.0)


@pytest.mark.parametrize("shape,h", [((8, 8), 1.0), ((5, 7), 0.5), ((3, 3), 2.0)])
def test_laplacian_matches_dense_matrix(rng, shape, h):
    f = rng.random(shape)
    L = dense_laplacian(*shape, h)
    np.testing.assert_allclose(laplacian(f, h).ravel(), L @ f.ravel(), rtol=1e-13, atol=1e-12)


def test_laplacian_symmetric(rng):
    u, v = rng.random((2, 9, 6))
    assert np.vdot(laplacian(u), v) == pytest.approx(np.vdot(u, laplacian(v)), rel=1e-12)


def test_neighbour_count():
    c = neighbour_count((4, 5))
    assert c[0, 0] == 2 and c[0, 2] == 3 and c[2, 2] == 4 and c.sum() == 2 * (3 * 5 + 4 * 4)


def test_too_small_or_bad_input():
    with pytest.raises(InvalidInputError):
        laplacian(np.zeros((2, 5)))
    with pytest.raises(InvalidInputError):
        as_image(np.zeros(9))
    with pytest.raises(InvalidInputError):
        as_image(np.array([[0, 1, np.nan]] * 3))


def test_energy_identity_and_constant_shift():
    f = np.random.default_rng(0).random((6, 6))
    assert energy(f, f, 2.0) == 0.0
    assert energy(f + 0.1, f, 3.0, p=2) == pytest.approx(0.5 * 0.01 * 36)


@pytest.mark.parametrize("p", [1, 2])
def test_energy_matches_loop(rng, p):
    u, f = rng.random((2, 5, 7))
    assert energy(u, f, 0.7, p, h=0.5) == pytest.approx(energy_loop(u, f, 0.7, p, 0.5), rel=1e-12)


def test_energy_shape_mismatch():
    with pytest.raises(InvalidInputError):
        energy(np.zeros((4, 4)), np.zeros((4, 5)), 1.0)


def test_rms255():
    a = np.zeros((4, 4))
    assert rms255(a, a) == 0.0
    assert rms255(a, a + 1 / 255) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        rms255(a, np.zeros((3, 4)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 5), elements=st.floats(-10, 10)))
def test_laplacian_sums_to_zero(u):
    # Neumann: the stencil conserves mass
    assert abs(laplacian(u).sum()) <= 1e-9 * max(1.0, np.abs(u).max())
