from .errors import ConfigurationError, NumericalError, PreconditionError
from .extrapolation import aitken_limit
from .imports import Sequence, math, trapezoid
from .logs import log, warn
from .oracles import dense_propagator, shell_masses
from .spectral import limit_constant, tolerance_table, ground_states, lambda0_estimate
from .operator_core import (
	interior_coordinates,
	interior_indices,
	build_coefficients,
	level_operators,
	adjoint,
	build_grid,
	locate,
)
from .semigroup import (
	minimal_cauchy_solution,
	dirichlet_heat_kernel,
	geometric_ladder,
	time_ladder,
	march,
	delta,
)
from vars.exports import (
	CriticalityReport,
	ExhaustionFamily,
	CoefficientField,
	DiscreteOperator,
	ProductOperator,
	LimitEstimate,
	LEVEL_SLACK,
	CartesianGrid,
	SpectralData,
	Criticality,
	ScalarField,
	TimeLadder,
	TimeCurve,
	Node,
	np,
	sp,
)


def _verdict(distance: float, tolerance: float, report: CriticalityReport | None) -> str:
	if report is not None and report.cls is Criticality.INDETERMINATE:
		return "inconclusive"
	return "matches" if distance <= tolerance else "violates"


def _spectral(coeffs, exhaustion, report: CriticalityReport, tol) -> SpectralData:
	if report.spectral is not None and report.spectral.phi is not None:
		return report.spectral
	return ground_states(coeffs, exhaustion, lambda0_estimate(coeffs, exhaustion, tol), tol)


#* ---------------------------------------------------------------------------
#* Large-time limit
#* ---------------------------------------------------------------------------

def truncation_margin(coeffs: CoefficientField, exhaustion: ExhaustionFamily, t_max: float, factor: float) -> float:
	"""r_J / (factor·sqrt(2 a_max t_max)); below 1 the boundary is felt by t_max."""
	return exhaustion.radii[-1] / (factor * math.sqrt(2.0 * coeffs.a_max * t_max))


def check_truncation(coeffs, exhaustion, t_max: float, allow: bool, tolerances: dict[str, float] | None = None) -> float:
	"""
	Refuse time horizons at which the largest level no longer stands in for the whole space.

	Raises:
		ConfigurationError: If the margin is below 1 and allow is False.
	"""
	factor = tolerance_table(tolerances)["truncation_factor"]
	margin = truncation_margin(coeffs, exhaustion, t_max, factor)
	if margin < 1.0:
		needed = factor * math.sqrt(2.0 * coeffs.a_max * t_max)
		message = f"radius {exhaustion.radii[-1]} is below {needed:.4g} needed for t_max {t_max} (margin {margin:.3f})"
		if not allow:
			raise ConfigurationError(f"{message}; enlarge the domain or shorten t_max.")
		warn(f"{message}; continuing on request.")
	return margin


def large_time_limit(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	x: Node,
	y: Node,
	report: CriticalityReport,
	step: float,
	t_max: float,
	allow_truncation: bool = False,
	tolerances: dict[str, float] | None = None,
) -> LimitEstimate:
	"""
	e^{lambda0 t} k(x, y, t) on geometric times up to t_max, its limit and the predicted value.

	The prediction is phi(x) phi*(y) / sum phi phi* for positive-critical operators and 0 otherwise.

	Raises:
		ConfigurationError: If the truncation margin is violated and not allowed.
	"""
	tol = tolerance_table(tolerances)
	margin = check_truncation(coeffs, exhaustion, t_max, allow_truncation, tol)
	spectral = _spectral(coeffs, exhaustion, report, tol)

	ladder = geometric_ladder(step, t_max, int(tol["limit_samples"]))
	top = level_operators(coeffs, exhaustion)[-1]
	kernel = dirichlet_heat_kernel(top, y, ladder)

	times = np.asarray(ladder.sample_times)
	series = np.exp(report.lambda0 * times) * kernel.values[:, locate(exhaustion, top.level, x)]
	extrapolated, fitted = aitken_limit(series)

	theory = limit_constant(exhaustion, spectral, report, x, y)
	tolerance = max(tol["limit_rel"] * abs(theory), tol["limit_abs"])
	verdict = _verdict(abs(extrapolated - theory), tolerance, report)

	log(f"Large-time limit at ({x}, {y}): {extrapolated:.6g} vs {theory:.6g} ({verdict}).")
	return LimitEstimate(
		quantity="large_time_limit",
		times=tuple(float(t) for t in times),
		series=tuple(float(v) for v in series),
		extrapolated=float(extrapolated),
		theoretical_F=theory,
		verdict=verdict,
		tolerance=tolerance,
		notes={"truncation_margin": margin, "extrapolated": fitted},
	)


#* ---------------------------------------------------------------------------
#* Skew products
#* ---------------------------------------------------------------------------

def product_exhaustion(exhaustion: ExhaustionFamily) -> ExhaustionFamily:
	"""The square exhaustion M_j x M_j of a 1D exhaustion."""
	grid = exhaustion.grid
	return build_grid(2, grid.half_width, grid.spacing, exhaustion.radii)[1]


def skew_product(op_a: DiscreteOperator, op_b: DiscreteOperator) -> ProductOperator:
	"""
	Kronecker sum A (x) I + I (x) B on the product level, nodes ordered i1-major.

	Raises:
		ConfigurationError: If a factor is not 1D or the factors live on different levels or grids.
	"""
	if op_a.grid.dim != 1 or op_b.grid.dim != 1:
		raise ConfigurationError(
			f"skew products take two 1D factors, got {op_a.grid.dim}D and {op_b.grid.dim}D."
		)
	if op_a.exhaustion != op_b.exhaustion or op_a.level != op_b.level:
		raise ConfigurationError("skew product factors must share grid, radii and level.")

	eye = sp.identity(op_a.size, format="csr")
	matrix = (sp.kron(op_a.matrix, eye) + sp.kron(eye, op_b.matrix)).tocsr()
	matrix.sort_indices()

	operator = DiscreteOperator(
		exhaustion=product_exhaustion(op_a.exhaustion),
		level=op_a.level,
		matrix=matrix,
		peclet=max(op_a.peclet, op_b.peclet),
		label=f"{op_a.label}+{op_b.label}",
	)
	return ProductOperator(factors=(op_a, op_b), operator=operator)


def product_coefficients(coeffs_a: CoefficientField, coeffs_b: CoefficientField) -> CoefficientField:
	"""
	Coefficients of P_{x1} + P_{x2} on the square grid: a = diag(a1, a2), b = (b1, b2), c = c1 + c2.

	Raises:
		ConfigurationError: If a factor is not 1D or the factor grids differ.
	"""
	grid = coeffs_a.grid
	if grid.dim != 1 or coeffs_b.grid != grid:
		raise ConfigurationError("product coefficients need two 1D fields on the same grid.")

	n = grid.size
	a = np.zeros((n * n, 2, 2))
	a[:, 0, 0] = np.repeat(coeffs_a.a[:, 0, 0], n)
	a[:, 1, 1] = np.tile(coeffs_b.a[:, 0, 0], n)
	b = np.stack([np.repeat(coeffs_a.b[:, 0], n), np.tile(coeffs_b.b[:, 0], n)], axis=1)
	c = np.repeat(coeffs_a.c, n) + np.tile(coeffs_b.c, n)

	square = CartesianGrid(dim=2, half_width=grid.half_width, spacing=grid.spacing, steps=grid.steps)
	return build_coefficients(square, a, b, c, label=f"{coeffs_a.label}+{coeffs_b.label}")


def product_identity_check(
	op_a: DiscreteOperator,
	op_b: DiscreteOperator,
	y0: tuple[float, float],
	t: float,
	step: float,
	mode: str = "cn",
) -> float:
	"""
	max |k_bar(., y0, t) - k_a(x1, y1, t) k_b(x2, y2, t)| / max k_bar.

	mode "expm" builds the three kernels from dense propagators applied to the discrete deltas.
	"""
	product = skew_product(op_a, op_b)

	if mode == "expm":
		k_a = dense_propagator(op_a.matrix, t) @ delta(op_a, (y0[0],))
		k_b = dense_propagator(op_b.matrix, t) @ delta(op_b, (y0[1],))
		k_bar = dense_propagator(product.matrix, t) @ delta(product.operator, tuple(y0))
		return float(np.abs(k_bar - np.outer(k_a, k_b).ravel()).max() / np.abs(k_bar).max())
	if mode != "cn":
		raise ConfigurationError(f"Unknown product check mode {mode!r}.")

	ladder = time_ladder(step, [t])
	k_a = dirichlet_heat_kernel(op_a, (y0[0],), ladder).values[-1]
	k_b = dirichlet_heat_kernel(op_b, (y0[1],), ladder).values[-1]
	k_bar = dirichlet_heat_kernel(product.operator, tuple(y0), ladder).values[-1]
	return float(np.abs(k_bar - np.outer(k_a, k_b).ravel()).max() / np.abs(k_bar).max())


#* ---------------------------------------------------------------------------
#* Bounded initial data
#* ---------------------------------------------------------------------------

def clipped_sign(exhaustion: ExhaustionFamily, width: float = 2.0) -> ScalarField:
	"""
	sign(x_1) for |x_1| <= width, 0 outside, on the top level.

	Nodes at +-width keep full weight, so the data cover |x_1| < width + h/2 as cell averages.
	"""
	first = interior_coordinates(exhaustion, exhaustion.top)[:, 0]
	return ScalarField(np.where(np.abs(first) <= width, np.sign(first), 0.0), exhaustion.top)


def ball_indicator(exhaustion: ExhaustionFamily, center: Sequence[float], radius: float) -> ScalarField:
	"""1 on the closed discrete ball, 0 elsewhere, on the top level."""
	coords = interior_coordinates(exhaustion, exhaustion.top)
	inside = np.linalg.norm(coords - np.asarray(center, dtype=float), axis=1) <= radius
	return ScalarField(inside.astype(float), exhaustion.top)


def varadhan_sup_difference(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	f: ScalarField | np.ndarray,
	K: Sequence[Node],
	times: TimeLadder,
	product_report: CriticalityReport | None = None,
	tolerances: dict[str, float] | None = None,
) -> tuple[TimeCurve, str]:
	"""
	s(t) = max over x1, x2 in K of |u(x1, t) - u(x2, t)| for the minimal Cauchy solution u.

	The decay to 0 is only claimed when the skew product of the operator with
	itself is critical; a subcritical product gives the verdict context-only.
	"""
	tol = tolerance_table(tolerances)
	for node in K:
		locate(exhaustion, 0, node)

	data = np.asarray(getattr(f, "values", f), dtype=float)
	fields, _ = minimal_cauchy_solution(coeffs, exhaustion, data, times)
	positions = [locate(exhaustion, exhaustion.top, node) for node in K]
	values = np.array([field.values[positions] for field in fields])
	curve = TimeCurve(times=times, values=values.max(axis=1) - values.min(axis=1), label="varadhan")

	oscillation = float(data.max() - data.min())
	tolerance = max(tol["varadhan_tol"] * oscillation, 1e-10)
	late = curve.values[np.asarray(times.sample_times) >= 1.0]
	settled = late.size < 2 or np.diff(late).max() <= tol["varadhan_slack"]

	if product_report is not None and not product_report.cls.is_critical:
		verdict = "context-only"
	else:
		verdict = "matches" if curve.values[-1] <= tolerance and settled else "violates"

	log(f"Varadhan sup difference at t={times.t_max}: {curve.values[-1]:.3e} ({verdict}).")
	return curve, verdict


def cesaro_ladder(step: float, t_first: float, T: float) -> TimeLadder:
	"""Uniform ladder t_first, 2 t_first, ..., T."""
	count = int(round(T / t_first))
	return time_ladder(step, [k * t_first for k in range(1, count + 1)])


def cesaro_mean(curve: TimeCurve, lambda0: float, T: float, t_first: float) -> float:
	"""
	(1/T) times the trapezoidal integral of e^{lambda0 t} k over [t_first, T].

	Raises:
		ConfigurationError: If the curve does not cover [t_first, T].
	"""
	times = np.asarray(curve.times.sample_times)
	keep = (times >= t_first - 1e-12) & (times <= T + 1e-12)
	chosen = times[keep]
	if chosen.size < 2 or abs(chosen[0] - t_first) > 1e-9 or abs(chosen[-1] - T) > 1e-9:
		raise ConfigurationError(f"the time ladder does not cover [{t_first}, {T}].")

	weighted = np.exp(lambda0 * chosen) * np.asarray(curve.values)[keep]
	return float(trapezoid(weighted, chosen) / T)


#* ---------------------------------------------------------------------------
#* Exterior mass
#* ---------------------------------------------------------------------------

def exterior_mass(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	level: int,
	x: Node,
	times: TimeLadder,
	report: CriticalityReport,
	tolerances: dict[str, float] | None = None,
) -> tuple[TimeCurve, LimitEstimate]:
	"""
	m_j(t) = h^dim sum over y outside M_j of k(x, y, t), against its large-time value.

	The value is the phi*-share of the exterior for positive-critical operators and 1 otherwise.

	Raises:
		PreconditionError:  If the operator has a potential term.
		ConfigurationError: If level is the top level.
	"""
	tol = tolerance_table(tolerances)
	if not coeffs.conservative:
		raise PreconditionError("exterior mass needs P1 = 0 (no potential term).")
	if not 0 <= level < exhaustion.top:
		raise ConfigurationError(f"exterior of level {level} is empty or undefined (top level {exhaustion.top}).")

	top = level_operators(coeffs, exhaustion)[-1]
	transposed = adjoint(top)
	rows = march(transposed, delta(transposed, x), times)

	outside = ~np.isin(interior_indices(exhaustion, exhaustion.top), interior_indices(exhaustion, level))
	volume = exhaustion.grid.cell_volume
	curve = TimeCurve(times=times, values=volume * rows[:, outside].sum(axis=1), label="exterior_mass", probe=tuple(x))

	if report.cls is Criticality.POSITIVE_CRITICAL:
		phi_star = _spectral(coeffs, exhaustion, report, tol).phi_star.values
		branch = float(phi_star[outside].sum() / phi_star.sum())
	else:
		branch = 1.0

	gap = np.abs(curve.values - branch)
	tolerance = tol["exterior_rel"] * branch
	if report.cls is Criticality.INDETERMINATE:
		verdict = "inconclusive"
	elif gap[-1] <= tolerance:
		verdict = "matches"
	elif np.all(np.diff(gap) <= LEVEL_SLACK):
		verdict = "inconclusive"
	else:
		verdict = "violates"

	estimate = LimitEstimate(
		quantity="exterior_mass",
		times=tuple(times.sample_times),
		series=tuple(float(v) for v in curve.values),
		extrapolated=float(curve.values[-1]),
		theoretical_F=branch,
		verdict=verdict,
		tolerance=tolerance,
		notes={"level": level, "radius": exhaustion.radii[level]},
	)
	return curve, estimate


#* ---------------------------------------------------------------------------
#* Oscillating initial data
#* ---------------------------------------------------------------------------

def ks_radii(ratio: float, levels: int, r1: float = 1.0) -> tuple[float, ...]:
	"""R_j = r1·ratio^{j-1}, j = 1..levels."""
	if not ratio > 1.0:
		raise ConfigurationError(f"radius ratio {ratio!r} must exceed 1.")
	return tuple(r1 * ratio**j for j in range(levels))


def _ks_values(radii: Sequence[float]) -> np.ndarray:
	"""2 inside R_1, 2 + (-1)^j on R_j <= |x| < R_{j+1}, continued beyond the last radius."""
	return np.array([2.0] + [2.0 + (-1.0) ** j for j in range(1, len(radii) + 1)])


def ks_profile(radii: Sequence[float], x) -> np.ndarray:
	"""The alternating shell data at the points x."""
	shell = np.searchsorted(np.asarray(radii, dtype=float), np.abs(np.asarray(x, dtype=float)), side="right")
	return _ks_values(radii)[shell]


def ks_solution(radii: Sequence[float], t: float, values: Sequence[float] | None = None, a: float = 1.0) -> float:
	"""
	u(0, t) of the free heat flow of shell data, by exact error-function quadrature.

	values gives the data on [0, R_1), the shells, and beyond the last radius; defaults to the alternating profile.
	"""
	values = _ks_values(radii) if values is None else np.asarray(values, dtype=float)
	edges = [0.0, *radii, math.inf]
	return float(2.0 + ((values - 2.0) * shell_masses(edges, t, a)).sum())


def ks_oscillation(
	ratio: float | None = None,
	levels: int = 7,
	r1: float = 1.0,
	radii: Sequence[float] | None = None,
	constant: bool = False,
	min_amplitude: float = 0.2,
) -> LimitEstimate:
	"""
	u(0, t_j) - 2 at t_j = R_j R_{j+1}: oscillates when consecutive signs alternate with amplitude >= min_amplitude.

	radii may be given explicitly; constant replaces the data by 2 everywhere.

	Raises:
		ConfigurationError: Without radii or ratio, or with ratio <= 1.
	"""
	if radii is None:
		if ratio is None:
			raise ConfigurationError("ks_oscillation needs a ratio or explicit radii.")
		radii = ks_radii(ratio, levels, r1)
	radii = tuple(float(r) for r in radii)

	values = np.full(len(radii) + 1, 2.0) if constant else None
	times = tuple(radii[j] * radii[j + 1] for j in range(len(radii) - 1))
	series = tuple(ks_solution(radii, t, values) for t in times)

	deviation = np.asarray(series) - 2.0
	amplitude = float(np.abs(deviation).min()) if deviation.size else 0.0
	alternating = deviation.size > 1 and bool(np.all(deviation[1:] * deviation[:-1] < 0.0))
	verdict = "oscillates" if alternating and amplitude >= min_amplitude else "no oscillation"

	return LimitEstimate(
		quantity="ks_oscillation",
		times=times,
		series=series,
		extrapolated=series[-1],
		theoretical_F=2.0,
		verdict=verdict,
		tolerance=min_amplitude,
		notes={"radii": list(radii), "amplitude": amplitude},
	)


def calibrate_ks_ratio(candidates: Sequence[float] = (4.0, 10.0, 100.0), epochs: int = 6, min_amplitude: float = 0.2) -> float:
	"""
	Smallest candidate ratio whose first epochs alternate with at least min_amplitude.

	Raises:
		NumericalError: If no candidate does.
	"""
	for ratio in sorted(candidates):
		estimate = ks_oscillation(ratio, levels=epochs + 1, min_amplitude=min_amplitude)
		if estimate.verdict == "oscillates":
			log(f"Shell ratio {ratio:g}: amplitude {estimate.notes['amplitude']:.3f}.", silent=True)
			return float(ratio)
	raise NumericalError(f"no shell ratio in {list(candidates)} alternates with amplitude {min_amplitude}.")


#* ---------------------------------------------------------------------------
#* Supplementary limits
#* ---------------------------------------------------------------------------

def cauchy_limit(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	f: ScalarField | np.ndarray,
	K: Sequence[Node],
	times: TimeLadder,
	report: CriticalityReport,
	tolerances: dict[str, float] | None = None,
) -> tuple[TimeCurve, LimitEstimate]:
	"""
	sup over K of |e^{lambda0 t} u(x, t) - F(x)| for the minimal Cauchy solution u.

	F = phi·(sum phi* f)/(sum phi* phi) for positive-critical operators, 0 otherwise.
	"""
	tol = tolerance_table(tolerances)
	data = np.asarray(getattr(f, "values", f), dtype=float)
	fields, _ = minimal_cauchy_solution(coeffs, exhaustion, data, times)
	positions = [locate(exhaustion, exhaustion.top, node) for node in K]

	if report.cls is Criticality.POSITIVE_CRITICAL:
		spectral = _spectral(coeffs, exhaustion, report, tol)
		phi, phi_star = spectral.phi.values, spectral.phi_star.values
		target = phi[positions] * (phi_star @ data) / (phi_star @ phi)
	else:
		target = np.zeros(len(positions))

	growth = np.exp(report.lambda0 * np.asarray(times.sample_times))
	sup = np.array([np.abs(g * field.values[positions] - target).max() for g, field in zip(growth, fields)])
	curve = TimeCurve(times=times, values=sup, label="cauchy_sup")

	extrapolated, _ = aitken_limit(sup)
	extrapolated = max(float(extrapolated), 0.0)
	tolerance = max(tol["limit_rel"] * float(np.abs(target).max(initial=0.0)), tol["limit_abs"])

	if report.cls is Criticality.INDETERMINATE:
		verdict = "inconclusive"
	elif extrapolated <= tolerance:
		verdict = "matches"
	elif np.all(np.diff(sup) <= LEVEL_SLACK):
		verdict = "inconclusive"
	else:
		verdict = "violates"

	estimate = LimitEstimate(
		quantity="cauchy_limit",
		times=tuple(times.sample_times),
		series=tuple(float(v) for v in sup),
		extrapolated=extrapolated,
		theoretical_F=0.0,
		verdict=verdict,
		tolerance=tolerance,
		notes={"F": [float(v) for v in target]},
	)
	return curve, estimate


def davies_ratio(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	x: Node,
	y: Node,
	x0: Node,
	times: TimeLadder,
) -> TimeCurve:
	"""k(x, y, t) / k(x0, x0, t) on the top level; a diagnostic series without a limit claim."""
	top = level_operators(coeffs, exhaustion)[-1]
	numerator = dirichlet_heat_kernel(top, y, times).values[:, locate(exhaustion, top.level, x)]
	denominator = dirichlet_heat_kernel(top, x0, times).values[:, locate(exhaustion, top.level, x0)]
	return TimeCurve(times=times, values=numerator / denominator, label="davies_ratio", probe=tuple(x))
