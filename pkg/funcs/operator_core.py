from .errors import ConfigurationError, CoefficientError, DomainError
from .imports import Sequence
from .logs import log, warn
from vars.exports import (
	ExhaustionFamily,
	CoefficientField,
	DiscreteOperator,
	FACTORIZATION_LIMIT,
	PECLET_WARNING,
	CartesianGrid,
	OPERATORS,
	ScalarField,
	NODE_MATCH,
	Node,
	replace,
	np,
	sp,
)


#* ---------------------------------------------------------------------------
#* Grid and exhaustion
#* ---------------------------------------------------------------------------

def _multiple_of(value: float, spacing: float, name: str) -> int:
	"""
	Return value/spacing as an int, refusing values that are not positive multiples.

	Raises:
		ConfigurationError: Naming the offending value.
	"""
	steps = int(round(value / spacing))
	if steps < 1 or abs(steps * spacing - value) > NODE_MATCH * max(1.0, abs(value)):
		raise ConfigurationError(
			f"{name} {value!r} is not a positive integer multiple of the spacing {spacing!r}."
		)
	return steps


def build_grid(
	dim: int,
	half_width: float,
	spacing: float,
	radii: Sequence[float],
) -> tuple[CartesianGrid, ExhaustionFamily]:
	"""
	Build the box [-half_width, half_width]^dim and its nested box exhaustion.

	Args:
		dim:        1 or 2.
		half_width: Half side of the full box; a multiple of spacing.
		spacing:    Grid step h > 0.
		radii:      Strictly ascending half widths of M_1..M_J; the last one is half_width.

	Raises:
		ConfigurationError: On any violated precondition, naming the offending value.
	"""
	if dim not in (1, 2):
		raise ConfigurationError(f"dim {dim!r} is not supported; use 1 or 2.")
	if not spacing > 0:
		raise ConfigurationError(f"spacing {spacing!r} must be positive.")
	if not radii:
		raise ConfigurationError("radii must name at least one exhaustion level.")

	steps = _multiple_of(half_width, spacing, "half_width")
	level_steps = tuple(_multiple_of(r, spacing, "radius") for r in radii)

	for inner, outer, r_outer in zip(level_steps, level_steps[1:], radii[1:]):
		if outer <= inner:
			raise ConfigurationError(f"radius {r_outer!r} does not exceed the previous radius.")
	if level_steps[-1] != steps:
		raise ConfigurationError(
			f"largest radius {radii[-1]!r} must equal half_width {half_width!r}."
		)

	grid = CartesianGrid(dim=dim, half_width=float(half_width), spacing=float(spacing), steps=steps)
	exhaustion = ExhaustionFamily(
		grid=grid,
		radii=tuple(float(m * spacing) for m in level_steps),
		steps=level_steps,
	)
	return grid, exhaustion


def _check_level(exhaustion: ExhaustionFamily, level: int) -> None:
	if not 0 <= level < exhaustion.levels:
		raise ConfigurationError(
			f"level {level!r} is outside the exhaustion (0..{exhaustion.top})."
		)


def level_index_range(exhaustion: ExhaustionFamily, level: int) -> tuple[int, int]:
	"""Inclusive per-axis index range of the interior nodes of M_level."""
	_check_level(exhaustion, level)
	center, m = exhaustion.grid.steps, exhaustion.steps[level]
	return center - m + 1, center + m - 1


def interior_indices(exhaustion: ExhaustionFamily, level: int) -> np.ndarray:
	"""Full-grid flat indices of the interior nodes of M_level, ascending (lexicographic)."""
	lo, hi = level_index_range(exhaustion, level)
	axis = np.arange(lo, hi + 1)
	grid = exhaustion.grid

	if grid.dim == 1:
		return axis

	first, second = np.meshgrid(axis, axis, indexing="ij")
	return np.ravel_multi_index((first.ravel(), second.ravel()), grid.shape)


def node_coordinates(grid: CartesianGrid, flat: np.ndarray) -> np.ndarray:
	"""Coordinates (k, dim) of full-grid flat indices; x_i = (i - steps)·h."""
	multi = np.stack(np.unravel_index(np.asarray(flat), grid.shape), axis=-1)
	return (multi - grid.steps) * grid.spacing


def interior_coordinates(exhaustion: ExhaustionFamily, level: int) -> np.ndarray:
	return node_coordinates(exhaustion.grid, interior_indices(exhaustion, level))


def grid_index(grid: CartesianGrid, point: Sequence[float]) -> int:
	"""
	Map a coordinate tuple to its full-grid flat index.

	Raises:
		DomainError: If point has the wrong dimension, is not a grid node or lies outside the box.
	"""
	coords = np.asarray(point, dtype=float).ravel()
	if coords.size != grid.dim:
		raise DomainError(f"Point {tuple(point)} does not have dimension {grid.dim}.")

	multi = np.rint(coords / grid.spacing).astype(int) + grid.steps
	if np.any(np.abs((multi - grid.steps) * grid.spacing - coords) > NODE_MATCH * max(1.0, grid.spacing)):
		raise DomainError(f"Point {tuple(point)} is not a grid node (spacing {grid.spacing}).")
	if np.any(multi < 0) or np.any(multi >= grid.nodes_per_axis):
		raise DomainError(f"Point {tuple(point)} lies outside the grid box.")

	return int(np.ravel_multi_index(tuple(multi), grid.shape))


def locate(exhaustion: ExhaustionFamily, level: int, point: Sequence[float]) -> int:
	"""
	Position of point in the interior ordering of M_level.

	Raises:
		DomainError: If point is not an interior node of M_level (boundary nodes included).
	"""
	flat = grid_index(exhaustion.grid, point)
	indices = interior_indices(exhaustion, level)
	position = int(np.searchsorted(indices, flat))

	if position >= indices.size or indices[position] != flat:
		raise DomainError(
			f"Point {tuple(point)} is not interior to level {level} (radius {exhaustion.radii[level]})."
		)
	return position


def anchor_node(exhaustion: ExhaustionFamily) -> Node:
	"""The grid node nearest the origin; the center node of the symmetric box."""
	return (0.0,) * exhaustion.grid.dim


def level_positions(exhaustion: ExhaustionFamily, inner: int, outer: int) -> np.ndarray:
	"""Positions of the interior nodes of M_inner inside the interior ordering of M_outer."""
	if inner > outer:
		raise ConfigurationError(f"level {inner} is not contained in level {outer}.")
	return np.searchsorted(interior_indices(exhaustion, outer), interior_indices(exhaustion, inner))


def restrict(values: np.ndarray, exhaustion: ExhaustionFamily, from_level: int, to_level: int) -> np.ndarray:
	"""Restrict nodal values on M_from to the interior nodes of the smaller M_to."""
	return np.asarray(values)[..., level_positions(exhaustion, to_level, from_level)]


#* ---------------------------------------------------------------------------
#* Coefficients
#* ---------------------------------------------------------------------------

def _matrix_field(a, size: int, dim: int) -> np.ndarray:
	arr = np.asarray(a, dtype=float)
	if arr.ndim == 0:
		arr = arr * np.eye(dim)
	elif arr.ndim == 1 and dim == 1:
		arr = arr.reshape(-1, 1, 1)
	return np.array(np.broadcast_to(arr, (size, dim, dim)))


def _vector_field(b, size: int, dim: int) -> np.ndarray:
	arr = np.asarray(b, dtype=float)
	if arr.ndim == 1 and dim == 1 and arr.size == size:
		arr = arr.reshape(-1, 1)
	return np.array(np.broadcast_to(arr, (size, dim)))


def build_coefficients(grid: CartesianGrid, a, b=0.0, c=0.0, label: str = "") -> CoefficientField:
	"""
	Sample a, b and c on every node of grid and validate ellipticity.

	Scalars broadcast (a scalar means a·I), per-node arrays are taken as they are.

	Raises:
		CoefficientError: On non-finite samples, non-symmetric a, or a not positive definite.
	"""
	size, dim = grid.size, grid.dim
	try:
		a_field = _matrix_field(a, size, dim)
		b_field = _vector_field(b, size, dim)
		c_field = np.array(np.broadcast_to(np.asarray(c, dtype=float), (size,)))
	except ValueError as exc:
		raise CoefficientError(f"Coefficient samples do not match a grid of {size} nodes: {exc}") from exc

	coords = node_coordinates(grid, np.arange(size))

	for name, values in (("a", a_field), ("b", b_field), ("c", c_field)):
		bad = ~np.isfinite(values.reshape(size, -1)).all(axis=1)
		if bad.any():
			raise CoefficientError(f"Non-finite sample of {name}", tuple(coords[np.argmax(bad)]))

	asym = np.abs(a_field - np.swapaxes(a_field, 1, 2)).reshape(size, -1).max(axis=1)
	if np.any(asym > 1e-12 * max(1.0, float(np.abs(a_field).max()))):
		raise CoefficientError("Diffusion matrix is not symmetric", tuple(coords[np.argmax(asym)]))

	#* Cholesky per node is the ellipticity test; eigenvalues only locate the failure
	try:
		np.linalg.cholesky(a_field)
	except np.linalg.LinAlgError:
		lowest = np.linalg.eigvalsh(a_field).min(axis=1)
		node = tuple(coords[np.argmin(lowest)])
		raise CoefficientError(
			f"Diffusion matrix is not positive definite (min eigenvalue {lowest.min():.3e})", node
		) from None

	return CoefficientField(grid=grid, a=a_field, b=b_field, c=c_field, label=label)


def builtin_coefficients(grid: CartesianGrid, name: str, params: dict[str, float] | None = None) -> CoefficientField:
	"""
	Coefficients of a named model operator.

	laplacian_1d / laplacian_2d: a·I (a defaults to 1), optional constant c.
	ou_1d:                       a = 1, b(x) = kappa·x (harmonic-oscillator drift).
	drifted_bm_1d:               a = 1, constant drift b.

	Raises:
		ConfigurationError: On an unknown name or a grid of the wrong dimension.
	"""
	params = dict(params or {})
	dims = {"laplacian_1d": 1, "laplacian_2d": 2, "ou_1d": 1, "drifted_bm_1d": 1}

	if name not in dims:
		raise ConfigurationError(f"Unknown built-in operator {name!r}.")
	if grid.dim != dims[name]:
		raise ConfigurationError(f"Operator {name!r} needs a {dims[name]}D grid, got {grid.dim}D.")

	c = params.get("c", 0.0)

	if name in ("laplacian_1d", "laplacian_2d"):
		return build_coefficients(grid, params.get("a", 1.0), 0.0, c, label=name)

	coords = node_coordinates(grid, np.arange(grid.size))
	if name == "ou_1d":
		return build_coefficients(grid, 1.0, params.get("kappa", 1.0) * coords, c, label=name)

	return build_coefficients(grid, 1.0, params.get("b", 1.0), c, label=name)


#* ---------------------------------------------------------------------------
#* Discretization
#* ---------------------------------------------------------------------------

def _peclet(a: np.ndarray, b: np.ndarray, spacing: float) -> float:
	min_eig = float(np.linalg.eigvalsh(a).min())
	return float(np.abs(b).max()) * spacing / (2.0 * min_eig) if b.size else 0.0


def discretize(coeffs: CoefficientField, exhaustion: ExhaustionFamily, level: int) -> DiscreteOperator:
	"""
	Centered second-order finite differences of P on the interior nodes of M_level.

	Diffusion uses the 3-point stencil per axis, a_12 the 4-point cross stencil,
	drift centered differences. Neighbours on or beyond the boundary of M_level
	are eliminated (homogeneous Dirichlet data), so the matrix acts on interior
	unknowns only, rows and columns in lexicographic node order.

	Raises:
		ConfigurationError: If coeffs live on another grid or level is invalid.
	"""
	grid = exhaustion.grid
	if coeffs.grid != grid:
		raise ConfigurationError("Coefficient field and exhaustion use different grids.")

	lo, hi = level_index_range(exhaustion, level)
	full = interior_indices(exhaustion, level)
	n, h, dim = full.size, grid.spacing, grid.dim

	multi = np.stack(np.unravel_index(full, grid.shape), axis=1)
	a, b, c = coeffs.a[full], coeffs.b[full], coeffs.c[full]

	local = np.full(grid.size, -1, dtype=np.int64)
	local[full] = np.arange(n)
	rows_all = np.arange(n)

	rows: list[np.ndarray] = [rows_all]
	cols: list[np.ndarray] = [rows_all]
	vals: list[np.ndarray] = [c + sum(2.0 * a[:, k, k] for k in range(dim)) / h**2]

	def couple(offset: tuple[int, ...], weights: np.ndarray) -> None:
		neighbours = multi + np.asarray(offset)
		inside = np.all((neighbours >= lo) & (neighbours <= hi), axis=1)
		target = np.ravel_multi_index(tuple(neighbours[inside].T), grid.shape)
		rows.append(rows_all[inside])
		cols.append(local[target])
		vals.append(weights[inside])

	for k in range(dim):
		for sign in (1, -1):
			offset = tuple(sign if axis == k else 0 for axis in range(dim))
			couple(offset, -a[:, k, k] / h**2 + sign * b[:, k] / (2.0 * h))

	if dim == 2 and np.any(a[:, 0, 1] != 0.0):
		mixed = a[:, 0, 1] / (2.0 * h**2)
		for offset, sign in (((1, 1), -1.0), ((1, -1), 1.0), ((-1, 1), 1.0), ((-1, -1), -1.0)):
			couple(offset, sign * mixed)

	matrix = sp.csr_matrix(
		(np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
	)
	matrix.sum_duplicates()
	matrix.sort_indices()

	peclet = _peclet(a, b, h)
	if peclet > PECLET_WARNING:
		warn(f"grid Peclet number {peclet:.3g} exceeds {PECLET_WARNING:g} on level {level}; centered drift may oscillate.")

	log(f"Discretized {coeffs.label or 'operator'} on level {level}: {n} unknowns, Peclet {peclet:.3g}.", silent=True)
	return DiscreteOperator(
		exhaustion=exhaustion, level=level, matrix=matrix, peclet=peclet, label=coeffs.label
	)


def adjoint(op: DiscreteOperator) -> DiscreteOperator:
	"""Discrete adjoint: the exact matrix transpose, with the adjoint flag toggled."""
	matrix = op.matrix.T.tocsr()
	matrix.sort_indices()
	return replace(op, matrix=matrix, adjoint=not op.adjoint)


def shifted(op: DiscreteOperator, lam: float) -> DiscreteOperator:
	"""The operator A - lam·I on the same level."""
	matrix = (op.matrix - lam * sp.identity(op.size, format="csr")).tocsr()
	matrix.sort_indices()
	return replace(op, matrix=matrix)


def h_transform(op: DiscreteOperator, h_field: ScalarField | np.ndarray) -> DiscreteOperator:
	"""
	Doob transform A^h = D_h^{-1} A D_h, entry by entry: a_ij·h_j/h_i.

	The sparsity pattern is kept, so h ≡ 1 returns the same matrix bit for bit.

	Raises:
		DomainError: If h_field has the wrong size or a nonpositive entry (with its node).
	"""
	h = np.asarray(getattr(h_field, "values", h_field), dtype=float)
	if h.shape != (op.size,):
		raise DomainError(f"h-field has {h.size} values, level {op.level} has {op.size} nodes.")

	bad = ~(np.isfinite(h) & (h > 0.0))
	if bad.any():
		node = tuple(interior_coordinates(op.exhaustion, op.level)[np.argmax(bad)])
		raise DomainError(f"h-field must be strictly positive; got {h[np.argmax(bad)]!r} at node {node}.")

	source = op.matrix
	row_of = np.repeat(np.arange(op.size), np.diff(source.indptr))
	data = source.data * (h[source.indices] / h[row_of])
	matrix = sp.csr_matrix((data, source.indices.copy(), source.indptr.copy()), shape=source.shape)
	return replace(op, matrix=matrix)


def level_operators(coeffs: CoefficientField, exhaustion: ExhaustionFamily) -> tuple[DiscreteOperator, ...]:
	"""
	Discretize coeffs on every level of exhaustion, once per (coeffs, exhaustion).

	Reusing the operator objects lets the time steppers reuse their factorizations.
	"""
	key = (id(coeffs), exhaustion)
	cached = OPERATORS.get(key)
	if cached is not None and cached[0] is coeffs:
		return cached[1]

	if len(OPERATORS) >= FACTORIZATION_LIMIT:
		OPERATORS.pop(next(iter(OPERATORS)))

	ops = tuple(discretize(coeffs, exhaustion, level) for level in range(exhaustion.levels))
	OPERATORS[key] = (coeffs, ops)
	return ops
