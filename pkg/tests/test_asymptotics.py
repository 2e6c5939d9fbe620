import math

import numpy as np
import pytest

from conftest import make_problem
from funcs.asymptotics import (
	varadhan_sup_difference,
	product_identity_check,
	calibrate_ks_ratio,
	large_time_limit,
	check_truncation,
	ball_indicator,
	ks_oscillation,
	exterior_mass,
	cesaro_ladder,
	clipped_sign,
	cauchy_limit,
	davies_ratio,
	skew_product,
	cesaro_mean,
	ks_profile,
	ks_radii,
)
from funcs.errors import ConfigurationError, PreconditionError
from funcs.oracles import (
	laplacian_cesaro_mean,
	gaussian_interval_mass,
	absorbed_interval_mass,
	sign_data_solution,
	mehler_variance,
	mehler_kernel,
)
from funcs.operator_core import interior_coordinates, level_operators, locate
from funcs.semigroup import dirichlet_heat_kernel, time_ladder
from funcs.spectral import classify
from vars.exports import Criticality, TimeCurve, WARNINGS, replace


@pytest.fixture(scope="module")
def ou_report(ou_1d):
	return classify(*ou_1d)


@pytest.fixture(scope="module")
def laplacian_report(laplacian_1d):
	return classify(*laplacian_1d)


#* ---------------------------------------------------------------------------
#* Large-time limit
#* ---------------------------------------------------------------------------

def test_null_critical_kernel_decays(laplacian_1d, laplacian_report):
	coeffs, exhaustion = laplacian_1d
	estimate = large_time_limit(coeffs, exhaustion, (0.0,), (0.0,), laplacian_report, 0.005, 10.0)

	assert estimate.times[-1] == pytest.approx(10.0)
	assert estimate.series[-1] == pytest.approx(1.0 / math.sqrt(40.0 * math.pi), rel=0.01)
	assert abs(estimate.extrapolated) <= 0.01
	assert estimate.verdict == "matches"


def test_positive_critical_kernel_converges(ou_1d, ou_report):
	coeffs, exhaustion = ou_1d
	estimate = large_time_limit(coeffs, exhaustion, (0.0,), (0.0,), ou_report, 0.005, 20.0, allow_truncation=True)

	assert estimate.series[-1] == pytest.approx(float(mehler_kernel(0.0, 0.0, 20.0)), rel=0.02)
	assert estimate.theoretical_F == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=0.02)
	assert estimate.verdict == "matches"
	assert estimate.notes["truncation_margin"] < 1.0


def test_truncation_margin(ou_1d):
	coeffs, exhaustion = ou_1d
	with pytest.raises(ConfigurationError, match="enlarge the domain"):
		check_truncation(coeffs, exhaustion, 20.0, allow=False)

	margin = check_truncation(coeffs, exhaustion, 20.0, allow=True)
	assert margin == pytest.approx(8.0 / (5.0 * math.sqrt(40.0)))
	assert any("continuing on request" in message for message in WARNINGS)


#* ---------------------------------------------------------------------------
#* Skew products
#* ---------------------------------------------------------------------------

def test_product_identity_with_dense_propagators():
	coeffs, exhaustion = make_problem("drifted_bm_1d", 0.8, 0.1, [0.8], b=1.0)
	op = level_operators(coeffs, exhaustion)[0]
	assert op.size == 15
	assert product_identity_check(op, op, (0.0, 0.0), 0.5, 0.01, mode="expm") <= 1e-9


def test_product_identity_with_the_time_stepper():
	coeffs, exhaustion = make_problem("laplacian_1d", 5.0, 0.1, [5.0])
	op = level_operators(coeffs, exhaustion)[0]
	assert product_identity_check(op, op, (0.0, 0.5), 1.0, 0.005) <= 1e-2


def test_skew_product_layout():
	coeffs, exhaustion = make_problem("laplacian_1d", 1.0, 0.25, [0.5, 1.0])
	ops = level_operators(coeffs, exhaustion)
	product = skew_product(ops[1], ops[1])

	assert product.operator.size == 49
	assert product.operator.exhaustion.grid.dim == 2
	#? i1-major: the right neighbour in x2 is the next row
	assert product.matrix[0, 1] == pytest.approx(-16.0)
	assert product.matrix[0, 7] == pytest.approx(-16.0)
	assert product.matrix[0, 0] == pytest.approx(64.0)

	with pytest.raises(ConfigurationError, match="share"):
		skew_product(ops[0], ops[1])


#* ---------------------------------------------------------------------------
#* Bounded data
#* ---------------------------------------------------------------------------

def test_varadhan_sup_difference_decays(laplacian_1d):
	coeffs, exhaustion = laplacian_1d
	coords = interior_coordinates(exhaustion, exhaustion.top)[:, 0]
	K = [(x,) for x in coords[np.abs(coords) <= 1.0 + 1e-9]]
	times = time_ladder(0.005, [0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0])

	curve, verdict = varadhan_sup_difference(coeffs, exhaustion, clipped_sign(exhaustion), K, times)

	assert verdict == "matches"
	assert curve.values[-1] <= 0.01
	assert np.all(np.diff(curve.values[1:]) <= 1e-3)
	#? the nodes at +-2 carry full cells, so the discrete data reach 2 + h/2
	expected = 2.0 * float(sign_data_solution(1.0, 10.0, 2.0 + 0.05))
	assert curve.values[4] == pytest.approx(expected, abs=1e-3)


def test_varadhan_is_context_only_for_a_subcritical_product(laplacian_report):
	coeffs, exhaustion = make_problem("laplacian_1d", 10.0, 0.1, [5.0, 10.0])
	times = time_ladder(0.01, [1.0, 2.0])
	report = replace(laplacian_report, cls=Criticality.SUBCRITICAL)

	_, verdict = varadhan_sup_difference(coeffs, exhaustion, clipped_sign(exhaustion), [(0.5,), (-0.5,)], times, report)
	assert verdict == "context-only"


def test_cesaro_mean_of_the_laplacian(laplacian_1d, laplacian_report):
	coeffs, exhaustion = laplacian_1d
	top = level_operators(coeffs, exhaustion)[-1]
	ladder = cesaro_ladder(0.005, 0.1, 100.0)
	kernel = dirichlet_heat_kernel(top, (0.0,), ladder)
	curve = TimeCurve(times=ladder, values=kernel.values[:, locate(exhaustion, top.level, (0.0,))], label="kernel_diag")

	mean = cesaro_mean(curve, laplacian_report.lambda0, 100.0, 0.1)
	half = cesaro_mean(curve, laplacian_report.lambda0, 50.0, 0.1)

	assert mean <= 0.06
	assert mean == pytest.approx(laplacian_cesaro_mean(0.1, 100.0), rel=0.02)
	assert mean / half == pytest.approx(1.0 / math.sqrt(2.0), rel=0.1)

	with pytest.raises(ConfigurationError, match="does not cover"):
		cesaro_mean(curve, 0.0, 200.0, 0.1)


def test_exterior_mass_of_the_laplacian(laplacian_report):
	coeffs, exhaustion = make_problem("laplacian_1d", 40.0, 0.1, [5.0, 20.0, 40.0])
	times = time_ladder(0.005, [10.0, 50.0, 100.0])
	curve, estimate = exterior_mass(coeffs, exhaustion, 0, (0.0,), times, laplacian_report)

	for t, value in zip(times.sample_times, curve.values):
		outside = absorbed_interval_mass(0.0, t, 40.0, -40.0, -5.0) + absorbed_interval_mass(0.0, t, 40.0, 5.0, 40.0)
		assert value == pytest.approx(outside, abs=0.01)
	assert np.all(np.diff(curve.values) > 0.0)
	assert estimate.theoretical_F == 1.0
	assert estimate.verdict == "inconclusive"


def test_exterior_mass_of_ou(ou_1d, ou_report):
	coeffs, exhaustion = ou_1d
	times = time_ladder(0.005, [1.0, 5.0, 20.0])
	curve, estimate = exterior_mass(coeffs, exhaustion, 0, (0.0,), times, ou_report)

	tail = 1.0 - float(gaussian_interval_mass(0.0, mehler_variance(20.0), -2.0, 2.0))
	assert curve.values[-1] == pytest.approx(tail, rel=0.2)
	assert estimate.verdict == "matches"


def test_exterior_mass_refuses_a_potential(laplacian_report):
	coeffs, exhaustion = make_problem("laplacian_1d", 10.0, 0.1, [5.0, 10.0], c=0.1)
	with pytest.raises(PreconditionError):
		exterior_mass(coeffs, exhaustion, 0, (0.0,), time_ladder(0.01, [1.0]), laplacian_report)

	coeffs, exhaustion = make_problem("laplacian_1d", 10.0, 0.1, [5.0, 10.0])
	with pytest.raises(ConfigurationError, match="top level"):
		exterior_mass(coeffs, exhaustion, 1, (0.0,), time_ladder(0.01, [1.0]), laplacian_report)


def test_cauchy_limit_of_ou(ou_1d, ou_report):
	coeffs, exhaustion = ou_1d
	times = time_ladder(0.005, t_max=20.0, count=40)
	curve, estimate = cauchy_limit(coeffs, exhaustion, ball_indicator(exhaustion, (0.0,), 1.0), [(0.0,), (1.0,)], times, ou_report)

	share = float(gaussian_interval_mass(0.0, 1.0, -1.0, 1.0))
	assert estimate.notes["F"] == pytest.approx([share, share], rel=0.03)
	assert curve.values[-1] <= 0.01
	assert estimate.verdict == "matches"


def test_davies_ratio_of_the_laplacian():
	coeffs, exhaustion = make_problem("laplacian_1d", 20.0, 0.1, [10.0, 20.0])
	times = time_ladder(0.005, [1.0, 10.0])

	diagonal = davies_ratio(coeffs, exhaustion, (0.0,), (0.0,), (0.0,), times)
	assert np.array_equal(diagonal.values, np.ones(2))

	off = davies_ratio(coeffs, exhaustion, (1.0,), (0.0,), (0.0,), times)
	assert off.values[-1] == pytest.approx(math.exp(-1.0 / 40.0), rel=1e-3)


#* ---------------------------------------------------------------------------
#* Oscillating data
#* ---------------------------------------------------------------------------

def test_shell_profile():
	radii = ks_radii(10.0, 3)
	assert radii == pytest.approx((1.0, 10.0, 100.0))
	assert ks_profile(radii, [0.5, -1.5, 15.0, 150.0]).tolist() == [2.0, 1.0, 3.0, 1.0]

	with pytest.raises(ConfigurationError):
		ks_radii(1.0, 3)


def test_shell_data_oscillate():
	estimate = ks_oscillation(10.0, levels=7)
	assert estimate.verdict == "oscillates"
	assert estimate.notes["amplitude"] >= 0.5
	assert len(estimate.series) == 6

	control = ks_oscillation(10.0, levels=7, constant=True)
	assert control.verdict == "no oscillation"
	assert control.series == pytest.approx((2.0,) * 6)


def test_doubly_exponential_shells_oscillate():
	radii = [math.exp(math.e), math.exp(math.e**2), math.exp(math.e**3)]
	estimate = ks_oscillation(radii=radii)
	assert estimate.verdict == "oscillates"
	assert estimate.notes["amplitude"] >= 0.9


def test_calibrated_ratio_oscillates():
	ratio = calibrate_ks_ratio()
	assert ratio in (4.0, 10.0)
	assert ks_oscillation(ratio, levels=7).verdict == "oscillates"
