from .errors import ConfigurationError, ConsistencyError, DomainError, NumericalError
from .imports import Sequence, spla, sla
from .logs import log, warn
from .operator_core import (
	adjoint as transpose,
	interior_coordinates,
	level_operators,
	level_positions,
	anchor_node,
	locate,
)
from vars.exports import (
	FACTORIZATION_LIMIT,
	CONVERGENCE_FLOOR,
	ConvergenceReport,
	ExhaustionFamily,
	CoefficientField,
	DiscreteOperator,
	HeatKernelSlice,
	FACTORIZATIONS,
	NEGATIVE_SLACK,
	LEVEL_SLACK,
	ScalarField,
	TOLERANCES,
	OPERATORS,
	TimeLadder,
	TimeCurve,
	NODE_MATCH,
	Ball,
	Node,
	np,
	sp,
)


#* ---------------------------------------------------------------------------
#* Time ladders
#* ---------------------------------------------------------------------------

def time_ladder(step: float, sample_times: Sequence[float] | None = None, t_max: float | None = None, count: int = 100) -> TimeLadder:
	"""
	Validate sample times, or spread count of them evenly over (0, t_max].

	Raises:
		ConfigurationError: If step <= 0, a time is not a multiple of step, or times do not ascend.
	"""
	if not step > 0:
		raise ConfigurationError(f"time step {step!r} must be positive.")

	if not sample_times:
		if t_max is None:
			raise ConfigurationError("either sample_times or t_max is needed.")
		total = int(round(t_max / step))
		steps = sorted({max(1, int(round(total * k / count))) for k in range(1, count + 1)})
		return TimeLadder(step=step, sample_times=tuple(s * step for s in steps), sample_steps=tuple(steps))

	steps = []
	for t in sample_times:
		n = int(round(t / step))
		if n < 0 or abs(n * step - t) > NODE_MATCH * max(1.0, abs(t)):
			raise ConfigurationError(f"sample time {t!r} is not a nonnegative multiple of the step {step!r}.")
		steps.append(n)

	if any(b <= a for a, b in zip(steps, steps[1:])):
		raise ConfigurationError(f"sample times {list(sample_times)} are not strictly ascending.")

	return TimeLadder(step=step, sample_times=tuple(float(t) for t in sample_times), sample_steps=tuple(steps))


def geometric_ladder(step: float, t_max: float, count: int) -> TimeLadder:
	"""Times t_max/2^k, k = count-1..0, rounded to multiples of step."""
	total = int(round(t_max / step))
	steps = sorted({max(1, int(round(total / 2**k))) for k in range(count)})
	return TimeLadder(step=step, sample_times=tuple(s * step for s in steps), sample_steps=tuple(steps))


#* ---------------------------------------------------------------------------
#* Crank-Nicolson stepping
#* ---------------------------------------------------------------------------

def _propagator(op: DiscreteOperator, step: float):
	"""
	LU factors of I + (dt/2)A and the explicit half I - (dt/2)A, cached per (operator, dt).

	The same factors drive the implicit Euler half steps of the start-up.

	Raises:
		NumericalError: If the factorization fails.
	"""
	key = (id(op), step)
	cached = FACTORIZATIONS.get(key)
	if cached is not None and cached[0] is op:
		return cached[1]

	identity = sp.identity(op.size, format="csr")
	implicit = (identity + 0.5 * step * op.matrix).tocsc()
	explicit = (identity - 0.5 * step * op.matrix).tocsr()

	try:
		lu = spla.splu(implicit)
	except RuntimeError as exc:
		raise NumericalError(f"Factorization failed on level {op.level} (n={op.size}, dt={step}): {exc}") from exc

	if len(FACTORIZATIONS) >= FACTORIZATION_LIMIT:
		FACTORIZATIONS.pop(next(iter(FACTORIZATIONS)))
	FACTORIZATIONS[key] = (op, (lu, explicit))
	return lu, explicit


def clear_caches() -> None:
	"""Forget cached operators and factorizations."""
	FACTORIZATIONS.clear()
	OPERATORS.clear()


def march(op: DiscreteOperator, initial: np.ndarray, times: TimeLadder) -> np.ndarray:
	"""
	Solve u_t + Au = 0 from u(0) = initial; returns u at every sample time, one row (or slab) per time.

	Crank-Nicolson, with the first step replaced by two implicit Euler half steps.
	initial may carry several right-hand sides as columns.
	"""
	u = np.array(initial, dtype=float)
	if u.shape[0] != op.size:
		raise DomainError(f"Initial data has {u.shape[0]} values, level {op.level} has {op.size} nodes.")

	lu, explicit = _propagator(op, times.step)
	out = np.empty((len(times), *u.shape))
	done = 0

	for k, target in enumerate(times.sample_steps):
		while done < target:
			if done == 0:
				u = lu.solve(lu.solve(u))
			else:
				u = lu.solve(explicit @ u)
			done += 1
		if not np.all(np.isfinite(u)):
			raise NumericalError(f"Non-finite values at t={times.sample_times[k]} on level {op.level} (dt={times.step}).")
		out[k] = u

	return out


def evolve(op: DiscreteOperator, initial: ScalarField | np.ndarray, times: TimeLadder) -> list[ScalarField]:
	"""u(., t) for each sample time of u_t + Au = 0 with homogeneous Dirichlet data."""
	values = np.asarray(getattr(initial, "values", initial), dtype=float)
	return [ScalarField(row, op.level) for row in march(op, values, times)]


def _check_undershoot(values: np.ndarray, what: str, level: int, step: float) -> None:
	lowest = float(values.min()) if values.size else 0.0
	if lowest < -NEGATIVE_SLACK:
		raise NumericalError(
			f"{what} undershoots to {lowest:.3e} on level {level}; reduce the time step {step}."
		)


#* ---------------------------------------------------------------------------
#* Heat kernels
#* ---------------------------------------------------------------------------

def delta(op: DiscreteOperator, y0: Node) -> np.ndarray:
	"""Discrete delta at y0: (1/h)^dim at the node, 0 elsewhere."""
	values = np.zeros(op.size)
	values[locate(op.exhaustion, op.level, y0)] = op.grid.delta_height
	return values


def dirichlet_heat_kernel(op: DiscreteOperator, y0: Node, times: TimeLadder) -> HeatKernelSlice:
	"""
	k^{M_j}(., y0, t) at every sample time, by evolving the discrete delta at y0.

	Raises:
		DomainError:    If y0 is not interior to the level.
		NumericalError: If the kernel undershoots below -1e-10.
	"""
	values = march(op, delta(op, y0), times)
	_check_undershoot(values, "Heat kernel", op.level, times.step)
	return HeatKernelSlice(source=tuple(float(v) for v in y0), level=op.level, times=times, values=values)


def _check_level_monotone(lower: np.ndarray, upper: np.ndarray, exhaustion: ExhaustionFamily, level: int, what: str) -> None:
	excess = lower - upper[..., level_positions(exhaustion, level, level + 1)]
	worst = float(excess.max()) if excess.size else 0.0
	if worst > LEVEL_SLACK:
		raise ConsistencyError(
			f"{what} decreases from level {level} to level {level + 1} by {worst:.3e}."
		)


def _convergence(per_level: list[float], rel_tol: float, what: str) -> ConvergenceReport:
	if len(per_level) < 2:
		rel = float("inf")
	else:
		rel = abs(per_level[-1] - per_level[-2]) / max(per_level[-1], CONVERGENCE_FLOOR)

	report = ConvergenceReport(
		probe_per_level=tuple(per_level), rel_change=rel, rel_tol=rel_tol, converged=rel <= rel_tol
	)
	if not report.converged:
		warn(f"{what} not converged in the exhaustion level (relative change {rel:.3e} > {rel_tol:g}).")
	return report


def level_kernels(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	y0: Node,
	times: TimeLadder,
	adjoint: bool = False,
) -> list[HeatKernelSlice]:
	"""
	Dirichlet kernels with source y0 on every level, checked for monotonicity in the level.

	Raises:
		DomainError:      If y0 is not interior to M_1.
		ConsistencyError: If a kernel decreases from one level to the next beyond 1e-8.
	"""
	locate(exhaustion, 0, y0)
	ops = level_operators(coeffs, exhaustion)
	if adjoint:
		ops = tuple(transpose(op) for op in ops)

	slices = [dirichlet_heat_kernel(op, y0, times) for op in ops]
	for level in range(len(slices) - 1):
		_check_level_monotone(slices[level].values, slices[level + 1].values, exhaustion, level, "Heat kernel")
	return slices


def minimal_heat_kernel(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	y0: Node,
	times: TimeLadder,
	rel_tol: float = TOLERANCES["kernel_rel_tol"],
	x0: Node | None = None,
) -> tuple[HeatKernelSlice, ConvergenceReport]:
	"""
	Top-level kernel as the approximation of the minimal heat kernel, plus the level convergence of k(x0, y0, t_max).

	x0 defaults to y0 (the kernel diagonal).
	"""
	x0 = y0 if x0 is None else x0
	slices = level_kernels(coeffs, exhaustion, y0, times)
	diagonal = [float(s.values[-1, locate(exhaustion, s.level, x0)]) for s in slices]

	report = _convergence(diagonal, rel_tol, f"Heat kernel k({x0}, {y0}, {times.t_max})")
	log(f"Minimal heat kernel at {x0}: {', '.join(f'{v:.6g}' for v in diagonal)} per level.", silent=True)
	return slices[-1], report


def minimal_cauchy_solution(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	f: ScalarField | np.ndarray,
	times: TimeLadder,
	rel_tol: float = TOLERANCES["kernel_rel_tol"],
	x0: Node | None = None,
) -> tuple[list[ScalarField], ConvergenceReport]:
	"""
	Minimal solution of the Cauchy problem with data f given on the top level.

	Each level evolves f restricted to it; the top level is returned, with the
	level convergence of u(x0, t_max) (x0 defaults to the anchor node).

	Raises:
		NumericalError: If f is not finite.
	"""
	top = exhaustion.top
	data = np.asarray(getattr(f, "values", f), dtype=float)
	if not np.all(np.isfinite(data)):
		raise NumericalError("Cauchy data must be bounded.")

	x0 = anchor_node(exhaustion) if x0 is None else x0
	ops = level_operators(coeffs, exhaustion)
	runs = [march(op, data[..., level_positions(exhaustion, op.level, top)], times) for op in ops]

	if np.all(data >= 0.0):
		for level in range(top):
			_check_level_monotone(runs[level], runs[level + 1], exhaustion, level, "Cauchy solution")

	probe = [float(run[-1, locate(exhaustion, level, x0)]) for level, run in enumerate(runs)]
	report = _convergence(probe, rel_tol, f"Cauchy solution at {x0}")
	return [ScalarField(row, top) for row in runs[-1]], report


#* ---------------------------------------------------------------------------
#* Initial-boundary problems outside a ball
#* ---------------------------------------------------------------------------

def ball_mask(exhaustion: ExhaustionFamily, level: int, ball: Ball) -> np.ndarray:
	"""
	Nodes of the closed discrete ball |x - center| <= radius among the interior nodes of M_level.

	Raises:
		ConfigurationError: If the ball is empty, of wrong dimension, or not strictly inside M_1.
	"""
	center, radius = np.asarray(ball[0], dtype=float), float(ball[1])
	if center.size != exhaustion.grid.dim:
		raise ConfigurationError(f"Ball center {tuple(center)} does not have dimension {exhaustion.grid.dim}.")
	if not radius > 0:
		raise ConfigurationError(f"Ball radius {radius!r} must be positive.")
	if float(np.abs(center).max()) + radius >= exhaustion.radii[0]:
		raise ConfigurationError(
			f"Ball (center {tuple(center)}, radius {radius}) is not strictly inside M_1 (radius {exhaustion.radii[0]})."
		)

	coords = interior_coordinates(exhaustion, level)
	mask = np.linalg.norm(coords - center, axis=1) <= radius + NODE_MATCH
	if not mask.any():
		raise ConfigurationError(f"Ball (center {tuple(center)}, radius {radius}) contains no grid node.")
	return mask


def _exterior_operator(op: DiscreteOperator, outside: np.ndarray) -> DiscreteOperator:
	"""A_j restricted to the nodes outside the ball, cached alongside the level operators."""
	key = (id(op), "outside", outside.tobytes())
	cached = OPERATORS.get(key)
	if cached is not None and cached[0] is op:
		return cached[1]

	keep = np.flatnonzero(outside)
	matrix = op.matrix[keep][:, keep].tocsr()
	matrix.sort_indices()
	exterior = DiscreteOperator(exhaustion=op.exhaustion, level=op.level, matrix=matrix, label=f"{op.label} outside ball")

	if len(OPERATORS) >= FACTORIZATION_LIMIT:
		OPERATORS.pop(next(iter(OPERATORS)))
	OPERATORS[key] = (op, exterior)
	return exterior


def _ball_harmonic(op: DiscreteOperator, mask: np.ndarray, exterior: DiscreteOperator) -> np.ndarray:
	"""
	Stationary h outside the ball: A h = 0 there, h = 1 on the ball nodes, 0 on the boundary of M_j.

	Raises:
		NumericalError: If the solve returns non-finite values.
	"""
	coupling = -(op.matrix[np.flatnonzero(~mask)][:, np.flatnonzero(mask)] @ np.ones(int(mask.sum())))
	h = spla.spsolve(exterior.matrix.tocsc(), coupling)
	if not np.all(np.isfinite(h)):
		raise NumericalError(f"Stationary solve outside the ball failed on level {op.level}.")
	return np.atleast_1d(h)


def _ibvp_level(op: DiscreteOperator, mask: np.ndarray, f: np.ndarray, g: float, times: TimeLadder) -> np.ndarray:
	"""
	u = S f + g(h - S h) outside the ball, g on it; S the Dirichlet semigroup of B* inside M_j.

	u carries g on the ball and 0 on the boundary of M_j, so it increases with j for f, g >= 0.
	"""
	outside = ~mask
	exterior = _exterior_operator(op, outside)
	f_out = f[outside]

	if np.any(f_out):
		carried = march(exterior, f_out, times)
	else:
		carried = np.zeros((len(times), exterior.size))

	values = np.full((len(times), op.size), float(g))
	values[:, outside] = carried
	if g != 0.0:
		h = _ball_harmonic(op, mask, exterior)
		values[:, outside] += g * (h - march(exterior, h, times))
	return values


def _ibvp_levels(coeffs, exhaustion, ball, f, g, times) -> list[np.ndarray]:
	top = exhaustion.top
	data = np.asarray(getattr(f, "values", f), dtype=float)
	if data.ndim == 0:
		data = np.full(interior_coordinates(exhaustion, top).shape[0], float(data))

	runs = []
	for op in level_operators(coeffs, exhaustion):
		mask = ball_mask(exhaustion, op.level, ball)
		runs.append(_ibvp_level(op, mask, data[level_positions(exhaustion, op.level, top)], g, times))

	if np.all(data >= 0.0) and g >= 0.0:
		for level in range(top):
			_check_level_monotone(runs[level], runs[level + 1], exhaustion, level, "Initial-boundary solution")
	return runs


def minimal_ibvp_solution(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	ball: Ball,
	f: ScalarField | np.ndarray | float,
	g: float,
	times: TimeLadder,
) -> list[ScalarField]:
	"""
	Minimal solution outside the ball with initial data f, constant data g on the ball, 0 at infinity.

	f is given on the top level (a scalar means constant data); ball nodes carry g.

	Raises:
		ConfigurationError: If the ball is not strictly inside M_1.
		ConsistencyError:   If nonnegative data give a solution decreasing in the level.
	"""
	runs = _ibvp_levels(coeffs, exhaustion, ball, f, float(g), times)
	return [ScalarField(row, exhaustion.top, domain="B*") for row in runs[-1]]


def _probe_curves(exhaustion: ExhaustionFamily, fields: np.ndarray, probes: Sequence[Node], times: TimeLadder, label: str) -> list[TimeCurve]:
	top = exhaustion.top
	return [
		TimeCurve(times=times, values=fields[:, locate(exhaustion, top, p)].copy(), label=label, probe=tuple(p))
		for p in probes
	]


def heat_content(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	ball: Ball,
	times: TimeLadder,
	probes: Sequence[Node],
) -> tuple[list[TimeCurve], list[ScalarField]]:
	"""
	Heat content w of B*: the minimal solution with f = 1 and g = 0.

	Returns curves of w at the probe nodes and the top-level fields.

	Raises:
		NumericalError: If w leaves [-1e-8, 1 + 1e-8] or increases in t at a probe beyond 1e-9.
	"""
	fields = _ibvp_levels(coeffs, exhaustion, ball, 1.0, 0.0, times)[-1]

	slack = TOLERANCES["heat_content_range"]
	if fields.min() < -slack or fields.max() > 1.0 + slack:
		raise NumericalError(
			f"Heat content leaves [0, 1]: range [{fields.min():.3e}, {fields.max():.6g}] (dt={times.step})."
		)

	curves = _probe_curves(exhaustion, fields, probes, times, "heat_content")
	for curve in curves:
		rise = np.diff(curve.values)
		if rise.size and rise.max() > TOLERANCES["heat_content_slack"]:
			raise NumericalError(
				f"Heat content increases by {rise.max():.3e} at probe {curve.probe}; reduce the time step {times.step}."
			)

	return curves, [ScalarField(row, exhaustion.top, domain="B*") for row in fields]


def capacitory_potential(
	coeffs: CoefficientField,
	exhaustion: ExhaustionFamily,
	ball: Ball,
	times: TimeLadder,
	probes: Sequence[Node],
) -> tuple[list[TimeCurve], list[ScalarField]]:
	"""
	Capacitory potential v of B*: the minimal solution with f = 0 and g = 1, increasing in t.

	On a truncated level 1 - v - w is the mass that left through the boundary of M_j; it vanishes
	in the limit for a conservative operator, where v = 1 - w.

	Raises:
		NumericalError:   If v leaves [-1e-8, 1 + 1e-8] or decreases in t at a probe beyond 1e-9.
		ConsistencyError: If v + w exceeds 1 beyond 1e-8.
	"""
	fields = _ibvp_levels(coeffs, exhaustion, ball, 0.0, 1.0, times)[-1]

	slack = TOLERANCES["heat_content_range"]
	if fields.min() < -slack or fields.max() > 1.0 + slack:
		raise NumericalError(
			f"Capacitory potential leaves [0, 1]: range [{fields.min():.3e}, {fields.max():.6g}] (dt={times.step})."
		)

	curves = _probe_curves(exhaustion, fields, probes, times, "capacitory_potential")
	for curve in curves:
		drop = -np.diff(curve.values)
		if drop.size and drop.max() > TOLERANCES["heat_content_slack"]:
			raise NumericalError(
				f"Capacitory potential decreases by {drop.max():.3e} at probe {curve.probe}; reduce the time step {times.step}."
			)

	w = _ibvp_levels(coeffs, exhaustion, ball, 1.0, 0.0, times)[-1]
	escaped = 1.0 - fields - w
	if escaped.min() < -slack:
		raise ConsistencyError(f"Capacitory potential and heat content add up to {1.0 - escaped.min():.6g} > 1.")
	log(f"Capacitory potential: mass escaped through the top level boundary at t={times.sample_times[-1]} is {escaped[-1].max():.3e}")

	return curves, [ScalarField(row, exhaustion.top, domain="B*") for row in fields]


#* ---------------------------------------------------------------------------
#* Diagnostics
#* ---------------------------------------------------------------------------

def semigroup_identity_check(op: DiscreteOperator, y0: Node, t: float, s: float, step: float, mode: str = "cn") -> float:
	"""
	max_x |k(x, y0, t+s) - h^dim sum_z k(x, z, t) k(z, y0, s)| / max k(., y0, t+s).

	mode "cn" evolves k(., y0, s) by t with the time stepper; "expm" builds every kernel from the
	dense propagator, k(., z, t) = exp(-tA) delta_z, and sums the convolution over all nodes z.

	Raises:
		ConfigurationError: On an unknown mode or times that are not multiples of step.
	"""
	if mode == "expm":
		dense = op.matrix.toarray()
		source = delta(op, y0)
		kernels_t = sla.expm(-t * dense) * op.grid.delta_height
		composed = op.grid.cell_volume * kernels_t @ (sla.expm(-s * dense) @ source)
		target = sla.expm(-(t + s) * dense) @ source
		return float(np.abs(target - composed).max() / np.abs(target).max())

	if mode != "cn":
		raise ConfigurationError(f"Unknown semigroup check mode {mode!r}.")

	target = dirichlet_heat_kernel(op, y0, time_ladder(step, [t + s])).values[-1]
	if s == 0:
		start = delta(op, y0)
	else:
		start = dirichlet_heat_kernel(op, y0, time_ladder(step, [s])).values[-1]

	composed = march(op, start, time_ladder(step, [t]))[-1]
	return float(np.abs(target - composed).max() / np.abs(target).max())


def kernel_mass(kernel: HeatKernelSlice, cell_volume: float) -> TimeCurve:
	"""m(t) = h^dim sum_x k(x, y0, t)."""
	return TimeCurve(
		times=kernel.times, values=cell_volume * kernel.values.sum(axis=1), label="mass", probe=kernel.source
	)


def invariance_defect(op: DiscreteOperator, phi: ScalarField | np.ndarray, lam: float, times: TimeLadder) -> TimeCurve:
	"""max |S_t phi - e^{-lam t} phi| / max phi for a discrete ground state phi with A phi = lam phi."""
	values = np.asarray(getattr(phi, "values", phi), dtype=float)
	evolved = march(op, values, times)
	decay = np.exp(-lam * np.asarray(times.sample_times))[:, None] * values
	return TimeCurve(
		times=times,
		values=np.abs(evolved - decay).max(axis=1) / np.abs(values).max(),
		label="invariance",
	)
