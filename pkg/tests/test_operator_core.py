import numpy as np
import pytest

from conftest import make_problem
from funcs.errors import CoefficientError, ConfigurationError, DomainError
from funcs.operator_core import (
	build_coefficients,
	builtin_coefficients,
	interior_coordinates,
	level_operators,
	level_positions,
	h_transform,
	build_grid,
	discretize,
	adjoint,
	restrict,
	locate,
)
from vars.exports import WARNINGS


#* ---------------------------------------------------------------------------
#* Grid and exhaustion
#* ---------------------------------------------------------------------------

@pytest.mark.parametrize(
	"dim, half_width, spacing, radii",
	[
		(3, 1.0, 0.25, [1.0]),
		(1, 1.0, 0.25, [0.3, 1.0]),
		(1, 1.0, 0.25, [0.5, 0.5, 1.0]),
		(1, 1.0, 0.25, [0.5, 0.75]),
		(1, 1.0, 0.0, [1.0]),
		(1, 1.0, 0.25, []),
	],
)
def test_build_grid_rejects_inconsistent_settings(dim, half_width, spacing, radii):
	with pytest.raises(ConfigurationError):
		build_grid(dim, half_width, spacing, radii)


def test_interior_nodes_per_level():
	_, exhaustion = build_grid(1, 1.0, 0.25, [0.5, 1.0])
	assert interior_coordinates(exhaustion, 0)[:, 0].tolist() == pytest.approx([-0.25, 0.0, 0.25])
	assert interior_coordinates(exhaustion, 1).shape == (7, 1)

	_, square = build_grid(2, 1.0, 0.25, [0.5, 1.0])
	coords = interior_coordinates(square, 0)
	assert coords.shape == (9, 2)
	#? lexicographic, first axis slowest
	assert coords[1].tolist() == pytest.approx([-0.25, 0.0])
	assert coords[3].tolist() == pytest.approx([0.0, -0.25])


def test_locate_refuses_boundary_and_off_grid_points():
	_, exhaustion = build_grid(1, 1.0, 0.25, [0.5, 1.0])
	assert locate(exhaustion, 0, (0.0,)) == 1
	assert locate(exhaustion, 1, (0.5,)) == 5

	with pytest.raises(DomainError, match="not interior"):
		locate(exhaustion, 0, (0.5,))
	with pytest.raises(DomainError, match="not a grid node"):
		locate(exhaustion, 1, (0.1,))
	with pytest.raises(DomainError):
		locate(exhaustion, 1, (2.0,))


def test_level_positions_and_restrict():
	_, exhaustion = build_grid(1, 1.0, 0.25, [0.5, 1.0])
	assert level_positions(exhaustion, 0, 1).tolist() == [2, 3, 4]

	values = np.arange(7.0)
	assert restrict(values, exhaustion, 1, 0).tolist() == [2.0, 3.0, 4.0]
	with pytest.raises(ConfigurationError):
		level_positions(exhaustion, 1, 0)


#* ---------------------------------------------------------------------------
#* Coefficients
#* ---------------------------------------------------------------------------

def test_coefficients_must_be_elliptic():
	grid, _ = build_grid(2, 1.0, 0.5, [1.0])
	with pytest.raises(CoefficientError, match="positive definite") as excinfo:
		build_coefficients(grid, [[1.0, 2.0], [2.0, 1.0]])
	assert excinfo.value.node is not None

	with pytest.raises(CoefficientError, match="symmetric"):
		build_coefficients(grid, [[1.0, 0.5], [0.0, 1.0]])


def test_coefficients_must_be_finite():
	grid, _ = build_grid(1, 1.0, 0.25, [1.0])
	b = np.zeros(grid.size)
	b[3] = np.nan
	with pytest.raises(CoefficientError) as excinfo:
		build_coefficients(grid, 1.0, b)
	assert excinfo.value.node == pytest.approx((-0.25,))


def test_builtin_operator_dimension_is_checked():
	grid, _ = build_grid(2, 1.0, 0.5, [1.0])
	with pytest.raises(ConfigurationError, match="1D grid"):
		builtin_coefficients(grid, "ou_1d")
	with pytest.raises(ConfigurationError, match="Unknown"):
		builtin_coefficients(grid, "bessel_2d")


#* ---------------------------------------------------------------------------
#* Discretization
#* ---------------------------------------------------------------------------

def test_laplacian_stencil():
	coeffs, exhaustion = make_problem("laplacian_1d", 1.0, 0.25, [1.0])
	matrix = discretize(coeffs, exhaustion, 0).matrix.toarray()

	expected = 32.0 * np.eye(7) - 16.0 * (np.eye(7, k=1) + np.eye(7, k=-1))
	np.testing.assert_allclose(matrix, expected, rtol=0, atol=1e-12)


def test_drift_stencil_and_conservation():
	coeffs, exhaustion = make_problem("drifted_bm_1d", 1.0, 0.25, [1.0], b=1.0)
	matrix = discretize(coeffs, exhaustion, 0).matrix.toarray()

	assert matrix[3, 4] == pytest.approx(-16.0 + 2.0)
	assert matrix[3, 2] == pytest.approx(-16.0 - 2.0)
	#* interior rows of a P with c = 0 sum to zero
	np.testing.assert_allclose(matrix[1:-1].sum(axis=1), 0.0, atol=1e-12)


def test_mixed_derivative_stencil():
	grid, exhaustion = build_grid(2, 1.0, 0.5, [1.0])
	coeffs = build_coefficients(grid, [[1.0, 0.5], [0.5, 1.0]])
	matrix = discretize(coeffs, exhaustion, 0).matrix.toarray()

	#? the centre node is position 4 of the 3 x 3 interior
	assert matrix[4, 4] == pytest.approx(16.0)
	assert matrix[4, 8] == pytest.approx(-1.0)
	assert matrix[4, 0] == pytest.approx(-1.0)
	assert matrix[4, 6] == pytest.approx(1.0)
	assert matrix[4, 2] == pytest.approx(1.0)


def test_peclet_warning():
	coeffs, exhaustion = make_problem("drifted_bm_1d", 5.0, 0.5, [5.0], b=10.0)
	op = discretize(coeffs, exhaustion, 0)

	assert op.peclet == pytest.approx(2.5)
	assert any("Peclet" in message for message in WARNINGS)


def test_adjoint_is_the_transpose():
	coeffs, exhaustion = make_problem("ou_1d", 2.0, 0.25, [1.0, 2.0])
	op = discretize(coeffs, exhaustion, 1)
	star = adjoint(op)

	assert star.adjoint and not adjoint(star).adjoint
	assert (star.matrix != op.matrix.T).nnz == 0
	assert (adjoint(star).matrix != op.matrix).nnz == 0


def test_h_transform():
	coeffs, exhaustion = make_problem("ou_1d", 2.0, 0.25, [2.0])
	op = discretize(coeffs, exhaustion, 0)

	same = h_transform(op, np.ones(op.size))
	assert np.array_equal(same.matrix.toarray(), op.matrix.toarray())

	h = np.linspace(1.0, 2.0, op.size)
	expected = op.matrix.toarray() * h[None, :] / h[:, None]
	np.testing.assert_allclose(h_transform(op, h).matrix.toarray(), expected, rtol=1e-14)

	bad = np.ones(op.size)
	bad[2] = 0.0
	with pytest.raises(DomainError, match="strictly positive"):
		h_transform(op, bad)


def test_level_operators_are_cached():
	coeffs, exhaustion = make_problem("laplacian_1d", 2.0, 0.25, [1.0, 2.0])
	ops = level_operators(coeffs, exhaustion)

	assert level_operators(coeffs, exhaustion) is ops
	assert [op.level for op in ops] == [0, 1]
	assert [op.size for op in ops] == [7, 15]
