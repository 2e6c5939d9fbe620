import math

import numpy as np
import pytest

from conftest import make_problem
from funcs.asymptotics import product_coefficients, product_exhaustion, skew_product
from funcs.errors import ConfigurationError, PreconditionError, SpectralError
from funcs.extrapolation import aitken_limit, inverse_square_consistent, richardson_inverse_square
from funcs.oracles import interval_green
from funcs.operator_core import interior_coordinates, level_operators, locate
from funcs.spectral import (
	normalize_to_assumption_A,
	principal_eigenpair,
	lambda0_estimate,
	green_function,
	abelian_limit,
	limit_constant,
	classify,
)
from vars.exports import Criticality


@pytest.fixture(scope="module")
def ou_report(ou_1d):
	coeffs, exhaustion = ou_1d
	return classify(coeffs, exhaustion)


@pytest.fixture(scope="module")
def laplacian_report(laplacian_1d):
	coeffs, exhaustion = laplacian_1d
	return classify(coeffs, exhaustion)


#* ---------------------------------------------------------------------------
#* Extrapolation
#* ---------------------------------------------------------------------------

def test_richardson_removes_the_inverse_square_term():
	radii = [10.0, 20.0, 40.0]
	values = [0.25 + 3.0 / r**2 for r in radii]
	assert richardson_inverse_square(values, radii) == pytest.approx(0.25, abs=1e-12)
	assert inverse_square_consistent(values, radii, 0.25)
	assert not inverse_square_consistent([1.0, 0.5, 0.49], radii, 0.25)


def test_aitken_limit():
	limit, fitted = aitken_limit([1.0 + 0.5**m for m in range(5)])
	assert fitted and limit == pytest.approx(1.0, abs=1e-12)

	assert aitken_limit([1.0, 2.0, 1.5]) == (1.5, False)
	assert aitken_limit([3.0, 2.0]) == (2.0, False)


#* ---------------------------------------------------------------------------
#* Eigenpairs and Green functions
#* ---------------------------------------------------------------------------

def test_dirichlet_laplacian_eigenpair():
	coeffs, exhaustion = make_problem("laplacian_1d", 5.0, 0.1, [5.0])
	op = level_operators(coeffs, exhaustion)[0]
	lam, phi = principal_eigenpair(op)

	h, r = 0.1, 5.0
	assert lam == pytest.approx(4.0 / h**2 * math.sin(math.pi * h / (4.0 * r)) ** 2, rel=1e-10)
	x = interior_coordinates(exhaustion, 0)[:, 0]
	np.testing.assert_allclose(phi.values, np.cos(math.pi * x / (2.0 * r)), atol=1e-8)
	assert phi.values[locate(exhaustion, 0, (0.0,))] == 1.0


def test_drifted_lambda0_is_the_gauge_constant(drifted_bm_1d):
	coeffs, exhaustion = drifted_bm_1d
	spectral = lambda0_estimate(coeffs, exhaustion)

	assert spectral.extrapolation == "richardson"
	assert spectral.lambda0 == pytest.approx(0.25, abs=0.005)
	assert list(spectral.lambda0_per_level) == sorted(spectral.lambda0_per_level, reverse=True)


def test_lambda0_needs_two_levels():
	coeffs, exhaustion = make_problem("laplacian_1d", 5.0, 0.1, [5.0])
	with pytest.raises(ConfigurationError):
		lambda0_estimate(coeffs, exhaustion)


def test_interval_green_function():
	coeffs, exhaustion = make_problem("laplacian_1d", 10.0, 0.1, [10.0])
	op = level_operators(coeffs, exhaustion)[0]
	sample = green_function(op, 0.0, (0.0,))

	x = interior_coordinates(exhaustion, 0)[:, 0]
	expected = [interval_green(xi, 0.0, 10.0) for xi in x]
	np.testing.assert_allclose(sample.values.values, expected, rtol=1e-9)
	assert sample.values.values[locate(exhaustion, 0, (0.0,))] == pytest.approx(5.0)


def test_green_function_refuses_shifts_at_the_spectrum():
	coeffs, exhaustion = make_problem("laplacian_1d", 5.0, 0.1, [5.0])
	op = level_operators(coeffs, exhaustion)[0]
	principal = principal_eigenpair(op)[0]

	with pytest.raises(SpectralError) as excinfo:
		green_function(op, principal + 0.01, (0.0,), principal)
	assert excinfo.value.principal == principal


#* ---------------------------------------------------------------------------
#* Classification
#* ---------------------------------------------------------------------------

def test_classification_of_the_model_operators(laplacian_report, ou_report, drifted_bm_1d):
	assert laplacian_report.cls is Criticality.NULL_CRITICAL
	assert ou_report.cls is Criticality.POSITIVE_CRITICAL

	drifted = classify(*drifted_bm_1d)
	assert drifted.cls is Criticality.SUBCRITICAL
	assert drifted.lambda0 == pytest.approx(0.25, abs=0.005)

	for report in (laplacian_report, ou_report, drifted):
		assert report.confidence == "high"
		assert report.to_json()["class"] == report.cls.value


def test_critical_green_diagonal_grows_with_the_level(laplacian_report):
	diagonal = laplacian_report.green_diag_per_level
	assert diagonal[0] < diagonal[1] < diagonal[2]
	assert laplacian_report.thresholds["level_increment"] > laplacian_report.thresholds["increment"]


def test_ou_ground_states(ou_1d, ou_report):
	_, exhaustion = ou_1d
	spectral = ou_report.spectral
	x = interior_coordinates(exhaustion, exhaustion.top)[:, 0]
	near = np.abs(x) <= 3.0

	np.testing.assert_allclose(spectral.phi_star.values[near], np.exp(-x[near] ** 2 / 2.0), rtol=0.02)
	np.testing.assert_allclose(spectral.phi.values[near], 1.0, rtol=0.02)
	assert ou_report.phiphi_mass_per_level[-1] == pytest.approx(math.sqrt(2.0 * math.pi), rel=0.02)


def test_skew_product_of_ou_is_positive_critical():
	coeffs, exhaustion = make_problem("ou_1d", 6.0, 0.2, [2.0, 4.0, 6.0])
	report = classify(product_coefficients(coeffs, coeffs), product_exhaustion(exhaustion))
	assert report.cls is Criticality.POSITIVE_CRITICAL


def test_kronecker_eigenvalues_add():
	coeffs, exhaustion = make_problem("drifted_bm_1d", 2.0, 0.1, [2.0], b=1.0)
	op = level_operators(coeffs, exhaustion)[0]
	lam = principal_eigenpair(op)[0]
	lam_bar = principal_eigenpair(skew_product(op, op).operator)[0]
	assert abs(lam_bar - 2.0 * lam) <= 1e-8


def test_classify_needs_three_levels():
	coeffs, exhaustion = make_problem("laplacian_1d", 5.0, 0.1, [2.5, 5.0])
	with pytest.raises(ConfigurationError, match="3 exhaustion levels"):
		classify(coeffs, exhaustion)


#* ---------------------------------------------------------------------------
#* Normalization and Abelian limit
#* ---------------------------------------------------------------------------

def test_normalized_family_is_conservative(ou_1d, ou_report):
	coeffs, exhaustion = ou_1d
	family = normalize_to_assumption_A(coeffs, exhaustion, ou_report.spectral, ou_report)

	assert len(family) == exhaustion.levels
	rows = np.asarray(family[-1].matrix.sum(axis=1)).ravel()
	assert np.abs(rows).max() <= 1e-6


def test_normalization_needs_a_critical_operator(drifted_bm_1d):
	coeffs, exhaustion = drifted_bm_1d
	report = classify(coeffs, exhaustion)
	with pytest.raises(PreconditionError, match="Subcritical"):
		normalize_to_assumption_A(coeffs, exhaustion, report.spectral, report)


def test_abelian_limit_of_ou(ou_1d, ou_report):
	coeffs, exhaustion = ou_1d
	estimate = abelian_limit(coeffs, exhaustion, (0.0,), (0.0,), ou_report)

	assert estimate.extrapolated == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=0.05)
	assert estimate.theoretical_F == pytest.approx(limit_constant(exhaustion, ou_report.spectral, ou_report, (0.0,), (0.0,)))
	assert estimate.verdict == "matches"


def test_abelian_limit_of_the_laplacian(laplacian_1d, laplacian_report):
	coeffs, exhaustion = laplacian_1d
	estimate = abelian_limit(coeffs, exhaustion, (0.0,), (0.0,), laplacian_report)

	assert abs(estimate.extrapolated) <= 0.02
	assert estimate.theoretical_F == 0.0
	assert estimate.notes["level_limited"]
