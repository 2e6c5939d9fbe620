from .errors import ConfigurationError, CoefficientError
from .logs import log, write_to_file
from .imports import pd, json, Any
from vars.exports import (
	CSV_FLOAT_FORMAT,
	HeatKernelSlice,
	CartesianGrid,
	TimeCurve,
	os,
	np,
)


_AXES = ("x", "y")


#* ---------------------------------------------------------------------------
#* Tabulated coefficients
#* ---------------------------------------------------------------------------

def _table_columns(dim: int) -> list[str]:
	if dim == 1:
		return ["x", "a11", "b1", "c"]
	return ["x", "y", "a11", "a12", "a22", "b1", "b2", "c"]


def read_tabulated_coefficients(path: str, grid: CartesianGrid) -> dict[str, np.ndarray]:
	"""
	Read per-node coefficients from a CSV with header x[,y],a11[,a12,a22],b1[,b2],c.

	Rows may come in any order but must cover every grid node exactly once.

	Returns:
		dict with "a" (size, dim, dim), "b" (size, dim) and "c" (size,), lexicographic node order.

	Raises:
		ConfigurationError: If the file is missing, a column is absent or the nodes do not match the grid.
		CoefficientError:   If a sample cannot be read as a number.
	"""
	if not os.path.exists(path):
		raise ConfigurationError(f"Coefficient table {path!r} does not exist.")

	df = pd.read_csv(path)
	df.columns = [str(col).strip() for col in df.columns]
	expected = _table_columns(grid.dim)

	missing = [col for col in expected if col not in df.columns]
	if missing:
		raise ConfigurationError(f"Coefficient table {path!r} lacks column(s): {', '.join(missing)}.")

	values = df[expected].apply(pd.to_numeric, errors="coerce")
	if values.isna().any().any():
		row = int(values.isna().any(axis=1).to_numpy().argmax())
		node = tuple(df.loc[row, list(_AXES[: grid.dim])])
		raise CoefficientError(f"Unreadable coefficient sample in {path!r}", node)

	if len(values) != grid.size:
		raise ConfigurationError(f"Coefficient table {path!r} has {len(values)} rows, the grid has {grid.size} nodes.")

	multi = np.rint(values[list(_AXES[: grid.dim])].to_numpy() / grid.spacing).astype(int) + grid.steps
	if np.any(multi < 0) or np.any(multi >= grid.nodes_per_axis):
		raise ConfigurationError(f"Coefficient table {path!r} has nodes outside the grid box.")

	flat = np.ravel_multi_index(tuple(multi.T), grid.shape)
	if np.unique(flat).size != grid.size:
		raise ConfigurationError(f"Coefficient table {path!r} repeats or misses grid nodes.")

	order = np.argsort(flat)
	table = values.to_numpy()[order]

	if grid.dim == 1:
		a = table[:, 1].reshape(-1, 1, 1)
		b = table[:, 2].reshape(-1, 1)
		c = table[:, 3]
	else:
		a = np.stack([table[:, [2, 3]], table[:, [3, 4]]], axis=1)
		b = table[:, [5, 6]]
		c = table[:, 7]

	log(f"Read {grid.size} coefficient rows from {path}.", silent=True)
	return {"a": a, "b": b, "c": c}


#* ---------------------------------------------------------------------------
#* Frames
#* ---------------------------------------------------------------------------

def slice_to_frame(kernel: HeatKernelSlice, coords: np.ndarray) -> pd.DataFrame:
	"""Long frame t, x[, y], value of a kernel slice; coords are the level's interior coordinates."""
	n_times, n_nodes = kernel.values.shape
	dim = coords.shape[1]

	frame = pd.DataFrame({"t": np.repeat(np.asarray(kernel.times.sample_times), n_nodes)})
	for k in range(dim):
		frame[_AXES[k]] = np.tile(coords[:, k], n_times)
	frame["value"] = kernel.values.ravel()
	return frame


def curve_to_frame(curve: TimeCurve) -> pd.DataFrame:
	frame = pd.DataFrame({"t": list(curve.times.sample_times)})
	if curve.probe is not None:
		for k, coord in enumerate(curve.probe):
			frame[_AXES[k]] = coord
	frame["value"] = np.asarray(curve.values, dtype=float)
	return frame


#* ---------------------------------------------------------------------------
#* Writers
#* ---------------------------------------------------------------------------

def write_frame(frame: pd.DataFrame, path: str) -> str:
	"""Write frame as CSV with round-trip float precision; returns path."""
	folder = os.path.dirname(path)
	if folder:
		os.makedirs(folder, exist_ok=True)
	frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
	return path


def artifact_path(output_dir: str, experiment: str, quantity: str, level: int) -> str:
	return os.path.join(output_dir, experiment, f"{quantity}_level{level}.csv")


def write_json(data: Any, path: str) -> str:
	"""Write data as indented JSON with sorted keys, so equal reports give equal files."""
	write_to_file(path, json.dumps(data, indent=2, sort_keys=True, default=_json_default))
	return path


def _json_default(value: Any) -> Any:
	if isinstance(value, np.generic):
		return value.item()
	if isinstance(value, np.ndarray):
		return value.tolist()
	raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def field_to_frame(values: np.ndarray, coords: np.ndarray) -> pd.DataFrame:
	"""Frame x[, y], value of nodal values on a level."""
	frame = pd.DataFrame({_AXES[k]: coords[:, k] for k in range(coords.shape[1])})
	frame["value"] = np.asarray(values, dtype=float)
	return frame
