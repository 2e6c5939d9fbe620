from .errors import ConfigurationError, ConsistencyError, NumericalError, PreconditionError, SpectralError
from .extrapolation import aitken_limit, inverse_square_consistent, richardson_inverse_square
from .imports import Sequence, spla
from .logs import log, warn
from .semigroup import delta
from .operator_core import (
	level_operators,
	level_positions,
	anchor_node,
	h_transform,
	shifted,
	adjoint,
	locate,
)
from vars.exports import (
	GreenFunctionSample,
	CriticalityReport,
	ExhaustionFamily,
	CoefficientField,
	DiscreteOperator,
	NEGATIVE_SLACK,
	LimitEstimate,
	SpectralData,
	Criticality,
	ScalarField,
	TOLERANCES,
	Node,
	replace,
	np,
	sp,
)


def tolerance_table(overrides: dict[str, float] | None = None) -> dict[str, float]:
	"""TOLERANCES with per-experiment overrides applied."""
	return {**TOLERANCES, **(overrides or {})}


def _factor(matrix: sp.spmatrix, what: str):
	try:
		return spla.splu(matrix.tocsc())
	except RuntimeError as exc:
		raise NumericalError(f"Factorization failed for {what}: {exc}") from exc


#* ---------------------------------------------------------------------------
#* Principal eigenpairs
#* ---------------------------------------------------------------------------

def principal_eigenpair(op: DiscreteOperator, tolerances: dict[str, float] | None = None) -> tuple[float, ScalarField]:
	"""
	Eigenvalue of smallest real part of A_j and its positive eigenvector, normalized to 1 at the anchor.

	Shifted inverse power iteration from the all-ones vector. The first shift sits
	just below the smallest row sum, which bounds the principal eigenvalue of a
	Z-matrix from below; the shift then moves towards the Rayleigh estimate once it settles.

	Raises:
		NumericalError: If iteration does not converge or the vector changes sign.
	"""
	tol = tolerance_table(tolerances)
	matrix = op.matrix
	identity = sp.identity(op.size, format="csr")
	scale = float(np.abs(matrix).sum(axis=1).max())

	sigma = float(np.asarray(matrix.sum(axis=1)).min()) - 1e-6 * max(1.0, float(np.abs(matrix.diagonal()).max()))
	lu = _factor(matrix - sigma * identity, f"the eigen-shift {sigma:.6g} on level {op.level}")

	vector = np.ones(op.size) / np.sqrt(op.size)
	lam, previous, shifts, residual = sigma, None, 0, np.inf

	for iteration in range(int(tol["eig_max_iter"])):
		vector = lu.solve(vector)
		vector /= np.linalg.norm(vector)
		image = matrix @ vector
		lam = float(vector @ image)
		residual = float(np.linalg.norm(image - lam * vector))

		if residual <= tol["eig_vector_tol"] * scale:
			break

		settled = previous is not None and abs(lam - previous) <= 1e-4 * abs(lam - sigma)
		if settled and shifts < tol["eig_max_shifts"] and lam > sigma:
			sigma = lam - 0.05 * (lam - sigma)
			lu = _factor(matrix - sigma * identity, f"the eigen-shift {sigma:.6g} on level {op.level}")
			shifts += 1
		previous = lam
	else:
		if residual > tol["eig_residual"]:
			raise NumericalError(
				f"Eigen-iteration on level {op.level} stopped at residual {residual:.3e} after {iteration + 1} iterations."
			)

	if vector.sum() < 0:
		vector = -vector
	if vector.min() < -tol["eig_sign"] * np.abs(vector).max():
		raise NumericalError(f"principal pair not found; refine shift (level {op.level}, lambda {lam:.6g}).")

	vector = vector / vector[locate(op.exhaustion, op.level, anchor_node(op.exhaustion))]
	log(f"Level {op.level}{' adjoint' if op.adjoint else ''}: lambda {lam:.10g}, {iteration + 1} iterations, {shifts} shifts.", silent=True)
	return lam, ScalarField(vector, op.level)


def lambda0_estimate(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	tolerances: dict[str, float] | None = None,
) -> SpectralData:
	"""
	Principal eigenvalue per level and the limit lambda0.

	Zero-potential operators whose level values settle like 1/r^2 are extrapolated
	by Richardson; otherwise the top value is kept. The result stays in
	[lam_J - (lam_{J-1} - lam_J), lam_J].

	Raises:
		ConfigurationError: With fewer than 2 levels.
		ConsistencyError:   If an eigenvalue grows with the level beyond the slack.
	"""
	tol = tolerance_table(tolerances)
	if exhaustion.levels < 2:
		raise ConfigurationError(f"lambda0 needs at least 2 exhaustion levels, got {exhaustion.levels}.")

	values = [principal_eigenpair(op, tol)[0] for op in level_operators(coeffs, exhaustion)]

	for level, (inner, outer) in enumerate(zip(values, values[1:])):
		if outer > inner + tol["lambda_slack"]:
			raise ConsistencyError(
				f"Principal eigenvalue grows from {inner!r} (level {level}) to {outer!r} (level {level + 1})."
			)

	lam_top, lam_prev = values[-1], values[-2]
	method, lambda0 = "last", lam_top
	if coeffs.conservative and inverse_square_consistent(values, exhaustion.radii, tol["richardson_ratio"]):
		method, lambda0 = "richardson", richardson_inverse_square(values, exhaustion.radii)

	lambda0 = float(min(lam_top, max(lam_top - (lam_prev - lam_top), lambda0)))
	log(f"lambda0 = {lambda0:.8g} ({method}); per level {', '.join(f'{v:.8g}' for v in values)}.")

	return SpectralData(
		lambda0_per_level=tuple(values),
		lambda0=lambda0,
		anchor=anchor_node(exhaustion),
		extrapolation=method,
	)


def ground_states(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	spectral: SpectralData,
	tolerances: dict[str, float] | None = None,
) -> SpectralData:
	"""Top-level principal eigenvectors of A_J and its transpose, anchor-normalized."""
	top = level_operators(coeffs, exhaustion)[-1]
	lam, phi = principal_eigenpair(top, tolerances)
	lam_star, phi_star = principal_eigenpair(adjoint(top), tolerances)

	if abs(lam - lam_star) > 1e-9 * max(1.0, abs(lam)):
		warn(f"primal and adjoint principal eigenvalues differ: {lam!r} vs {lam_star!r}.")

	return replace(spectral, phi=phi, phi_star=phi_star)


#* ---------------------------------------------------------------------------
#* Green functions
#* ---------------------------------------------------------------------------

def green_function(op: DiscreteOperator, lam: float, y0: Node, principal: float | None = None) -> GreenFunctionSample:
	"""
	Solve (A_j - lam) g = delta_{y0}: the Dirichlet Green function of P - lam on the level.

	Raises:
		SpectralError:  If lam is not below the level's principal eigenvalue (minus 1e-10).
		NumericalError: If the solution is not positive.
	"""
	if principal is None:
		principal = principal_eigenpair(op)[0]
	if lam >= principal - NEGATIVE_SLACK:
		raise SpectralError(lam, principal)

	lu = _factor(shifted(op, lam).matrix, f"the resolvent at lambda {lam:.6g} on level {op.level}")
	values = lu.solve(delta(op, y0))

	if values.min() < -NEGATIVE_SLACK * np.abs(values).max():
		raise NumericalError(f"Green function at lambda {lam:.6g} is not positive on level {op.level}.")

	return GreenFunctionSample(source=tuple(y0), lam=lam, values=ScalarField(values, op.level))


def green_diagonal(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	spectral: SpectralData,
	lam: float,
	x0: Node,
) -> tuple[float, ...]:
	"""G_j(x0, x0; lam) on every level, checked to increase with the level."""
	ops = level_operators(coeffs, exhaustion)
	values = tuple(
		float(green_function(op, lam, x0, principal).values.values[locate(exhaustion, op.level, x0)])
		for op, principal in zip(ops, spectral.lambda0_per_level)
	)
	for level, (inner, outer) in enumerate(zip(values, values[1:])):
		if inner > outer * (1.0 + NEGATIVE_SLACK):
			raise ConsistencyError(f"Green function decreases from level {level} ({inner!r}) to level {level + 1} ({outer!r}).")
	return values


def phiphi_masses(exhaustion: ExhaustionFamily, spectral: SpectralData) -> tuple[float, ...]:
	"""h^dim sum over M_j of phi·phi* for every level, from the top-level ground states."""
	product = spectral.phi.values * spectral.phi_star.values
	volume = exhaustion.grid.cell_volume
	return tuple(
		float(volume * product[level_positions(exhaustion, level, exhaustion.top)].sum())
		for level in range(exhaustion.levels)
	)


#* ---------------------------------------------------------------------------
#* Classification
#* ---------------------------------------------------------------------------

def _increment(values: Sequence[float]) -> float:
	return (values[-1] - values[-2]) / abs(values[-2])


def _near(value: float, threshold: float, band: float) -> bool:
	return abs(value - threshold) <= band * threshold


def classify(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	tolerances: dict[str, float] | None = None,
) -> CriticalityReport:
	"""
	Subcritical, PositiveCritical, NullCritical or Indeterminate.

	lambda0 above tau_lambda is subcritical. Otherwise the Green diagonal at
	lam = lambda0 - tau·4^{-m} tells bounded from divergent: it diverges when it
	grows over the last radius doubling or over the last shift refinement by more
	than the increment threshold. A critical operator is positive-critical when
	the phi·phi* mass settles within the same threshold. Increments within the
	band around a threshold give Indeterminate.

	Raises:
		ConfigurationError: With fewer than 3 levels.
	"""
	tol = tolerance_table(tolerances)
	if exhaustion.levels < 3:
		raise ConfigurationError(f"classify needs at least 3 exhaustion levels, got {exhaustion.levels}.")

	spectral = ground_states(coeffs, exhaustion, lambda0_estimate(coeffs, exhaustion, tol), tol)
	x0, lambda0 = spectral.anchor, spectral.lambda0
	tau, threshold, band = tol["tau_lambda"], tol["increment"], tol["band"]

	masses = phiphi_masses(exhaustion, spectral)
	thresholds = {"tau_lambda": tau, "increment": threshold, "band": band}

	shifts = [lambda0 - tau * 4.0**-m for m in range(int(tol["sweep_depth"]) + 1)]
	if lambda0 > tau:
		shifts = shifts[:1]
	sweep = tuple(green_diagonal(coeffs, exhaustion, spectral, lam, x0) for lam in shifts)
	diagonal = sweep[-1]

	def report(cls: Criticality) -> CriticalityReport:
		log(f"{coeffs.label or 'operator'}: {cls.value} (lambda0 {lambda0:.6g}).")
		return CriticalityReport(
			cls=cls,
			lambda0=lambda0,
			confidence="low" if cls is Criticality.INDETERMINATE else "high",
			lambda0_per_level=spectral.lambda0_per_level,
			green_diag_per_level=diagonal,
			phiphi_mass_per_level=masses,
			thresholds=thresholds,
			spectral=spectral,
			green_sweep=sweep,
		)

	if lambda0 > tau:
		return report(Criticality.SUBCRITICAL)

	level_growth = _increment(diagonal)
	shift_growth = _increment([levels[-1] for levels in sweep]) if len(sweep) > 1 else 0.0
	growth = max(level_growth, shift_growth)
	thresholds.update({"level_increment": level_growth, "shift_increment": shift_growth})

	if _near(growth, threshold, band):
		return report(Criticality.INDETERMINATE)
	if growth < threshold:
		return report(Criticality.SUBCRITICAL)

	mass_growth = _increment(masses)
	thresholds["mass_increment"] = mass_growth
	if _near(mass_growth, threshold, band):
		return report(Criticality.INDETERMINATE)

	return report(Criticality.POSITIVE_CRITICAL if mass_growth < threshold else Criticality.NULL_CRITICAL)


def normalize_to_assumption_A(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	spectral: SpectralData,
	report: CriticalityReport,
	tolerances: dict[str, float] | None = None,
) -> tuple[DiscreteOperator, ...]:
	"""
	The conservative critical family (1/phi)(A_j - lam_J)(phi ·) on every level.

	The shift is the top-level eigenvalue, so the top level has zero row sums up
	to solver precision; its adjoint ground state is phi·phi*.

	Raises:
		PreconditionError: If the operator is not classified critical.
	"""
	tol = tolerance_table(tolerances)
	if not report.cls.is_critical:
		raise PreconditionError(f"normalization needs a critical operator, got {report.cls.value}.")
	if spectral.phi is None:
		spectral = ground_states(coeffs, exhaustion, spectral, tol)

	shift, top = spectral.lambda_top, exhaustion.top
	family = tuple(
		h_transform(shifted(op, shift), spectral.phi.values[level_positions(exhaustion, op.level, top)])
		for op in level_operators(coeffs, exhaustion)
	)

	rows = float(np.abs(np.asarray(family[-1].matrix.sum(axis=1))).max())
	if rows > tol["row_sum"]:
		warn(f"normalized operator has row sums up to {rows:.3e} on the top level.")
	return family


#* ---------------------------------------------------------------------------
#* Abelian limit
#* ---------------------------------------------------------------------------

def limit_constant(exhaustion: ExhaustionFamily, spectral: SpectralData, report: CriticalityReport, x: Node, y: Node) -> float:
	"""phi(x)·phi*(y) / (h^dim sum phi·phi*) for a positive-critical operator, 0 otherwise."""
	if report.cls is not Criticality.POSITIVE_CRITICAL:
		return 0.0
	top = exhaustion.top
	return float(
		spectral.phi.values[locate(exhaustion, top, x)]
		* spectral.phi_star.values[locate(exhaustion, top, y)]
		/ phiphi_masses(exhaustion, spectral)[-1]
	)


def abelian_limit(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	x: Node,
	y: Node,
	report: CriticalityReport,
	offsets: Sequence[float] | None = None,
	tolerances: dict[str, float] | None = None,
) -> LimitEstimate:
	"""
	(lambda0 - lam_m)·G(x, y; lam_m) along lam_m = lambda0 - s_m and its limit.

	Each term uses the smallest level whose eigenvalue is within a fraction of s_m
	of lambda0, the top level otherwise (noted as level_limited).
	"""
	tol = tolerance_table(tolerances)
	spectral = report.spectral
	if spectral is None or spectral.phi is None:
		spectral = ground_states(coeffs, exhaustion, lambda0_estimate(coeffs, exhaustion, tol), tol)

	if offsets is None:
		offsets = [0.2 * 4.0**-m for m in range(int(tol["abelian_depth"]) + 1)]

	lambda0 = spectral.lambda0
	ops = level_operators(coeffs, exhaustion)
	series, levels, limited = [], [], False

	for s in offsets:
		close = [j for j, lam in enumerate(spectral.lambda0_per_level) if lam - lambda0 <= tol["abelian_level_fraction"] * s]
		level = close[0] if close else exhaustion.top
		limited = limited or not close
		sample = green_function(ops[level], lambda0 - s, y, spectral.lambda0_per_level[level])
		series.append(s * float(sample.values.values[locate(exhaustion, level, x)]))
		levels.append(level)

	extrapolated, fitted = aitken_limit(series)
	theory = limit_constant(exhaustion, spectral, report, x, y)
	tolerance = max(tol["abelian_rel"] * abs(theory), tol["abelian_abs"])

	oscillating = False
	if len(series) >= 3:
		d1, d2 = series[-2] - series[-3], series[-1] - series[-2]
		oscillating = d1 * d2 < 0 and abs(d2) > tol["abelian_oscillation"] * abs(series[-1])

	if oscillating or report.cls is Criticality.INDETERMINATE:
		verdict = "inconclusive"
	else:
		verdict = "matches" if abs(extrapolated - theory) <= tolerance else "violates"

	log(f"Abelian limit at ({x}, {y}): {extrapolated:.6g} vs {theory:.6g} ({verdict}).")
	return LimitEstimate(
		quantity="abelian",
		times=tuple(offsets),
		series=tuple(series),
		extrapolated=float(extrapolated),
		theoretical_F=theory,
		verdict=verdict,
		tolerance=tolerance,
		notes={"levels": levels, "level_limited": limited, "indeterminate": oscillating, "extrapolated": fitted},
	)
