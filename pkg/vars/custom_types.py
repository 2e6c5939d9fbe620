from .imports import np, sp, Enum, dataclass, field, TypedDict, Any


Node = tuple[float, ...]
Ball = tuple[Node, float]


class Criticality(str, Enum):
	SUBCRITICAL = "Subcritical"
	POSITIVE_CRITICAL = "PositiveCritical"
	NULL_CRITICAL = "NullCritical"
	INDETERMINATE = "Indeterminate"

	@property
	def is_critical(self) -> bool:
		return self in (Criticality.POSITIVE_CRITICAL, Criticality.NULL_CRITICAL)


#* ---------------------------------------------------------------------------
#* Grids and coefficients
#* ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CartesianGrid:
	"""Box [-half_width, half_width]^dim sampled with spacing h; nodes ordered lexicographically."""

	dim: int
	half_width: float
	spacing: float
	steps: int

	@property
	def nodes_per_axis(self) -> int:
		return 2 * self.steps + 1

	@property
	def size(self) -> int:
		return self.nodes_per_axis ** self.dim

	@property
	def shape(self) -> tuple[int, ...]:
		return (self.nodes_per_axis,) * self.dim

	@property
	def cell_volume(self) -> float:
		return self.spacing ** self.dim

	@property
	def delta_height(self) -> float:
		#? (1/h)^dim, so that product deltas factor bit-exactly
		return (1.0 / self.spacing) ** self.dim

	def axis(self) -> np.ndarray:
		return (np.arange(self.nodes_per_axis) - self.steps) * self.spacing


@dataclass(frozen=True)
class ExhaustionFamily:
	grid: CartesianGrid
	radii: tuple[float, ...]
	steps: tuple[int, ...]

	@property
	def levels(self) -> int:
		return len(self.radii)

	@property
	def top(self) -> int:
		return len(self.radii) - 1


@dataclass(frozen=True, eq=False)
class CoefficientField:
	"""Per-node samples of a (dim x dim), b (dim) and c on the full grid."""

	grid: CartesianGrid
	a: np.ndarray
	b: np.ndarray
	c: np.ndarray
	label: str = ""

	@property
	def conservative(self) -> bool:
		return bool(np.all(self.c == 0.0))

	@property
	def a_max(self) -> float:
		return float(np.linalg.eigvalsh(self.a).max())


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
	exhaustion: ExhaustionFamily
	level: int
	matrix: sp.csr_matrix
	adjoint: bool = False
	peclet: float = 0.0
	label: str = ""

	@property
	def grid(self) -> CartesianGrid:
		return self.exhaustion.grid

	@property
	def size(self) -> int:
		return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class ScalarField:
	values: np.ndarray
	level: int
	domain: str = "M_j"


#* ---------------------------------------------------------------------------
#* Time evolution
#* ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeLadder:
	step: float
	sample_times: tuple[float, ...]
	sample_steps: tuple[int, ...]

	@property
	def t_max(self) -> float:
		return self.sample_times[-1]

	def __len__(self) -> int:
		return len(self.sample_times)


@dataclass(frozen=True, eq=False)
class HeatKernelSlice:
	"""k^{M_j}(x, y0, t) for every interior x of level j; values has one row per sample time."""

	source: Node
	level: int
	times: TimeLadder
	values: np.ndarray

	def field(self, index: int) -> ScalarField:
		return ScalarField(self.values[index], self.level)


@dataclass(frozen=True, eq=False)
class TimeCurve:
	times: TimeLadder
	values: np.ndarray
	label: str
	probe: Node | None = None


@dataclass(frozen=True)
class ConvergenceReport:
	probe_per_level: tuple[float, ...]
	rel_change: float
	rel_tol: float
	converged: bool


#* ---------------------------------------------------------------------------
#* Spectral data
#* ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralData:
	lambda0_per_level: tuple[float, ...]
	lambda0: float
	anchor: Node
	extrapolation: str = "last"
	phi: ScalarField | None = None
	phi_star: ScalarField | None = None

	@property
	def lambda_top(self) -> float:
		return self.lambda0_per_level[-1]


@dataclass(frozen=True, eq=False)
class GreenFunctionSample:
	source: Node
	lam: float
	values: ScalarField


@dataclass(frozen=True, eq=False)
class CriticalityReport:
	cls: Criticality
	lambda0: float
	confidence: str
	lambda0_per_level: tuple[float, ...]
	green_diag_per_level: tuple[float, ...]
	phiphi_mass_per_level: tuple[float, ...]
	thresholds: dict[str, float]
	spectral: SpectralData | None = None
	green_sweep: tuple[tuple[float, ...], ...] = ()

	def to_json(self) -> dict[str, Any]:
		return {
			"class": self.cls.value,
			"lambda0": self.lambda0,
			"confidence": self.confidence,
			"lambda0_per_level": list(self.lambda0_per_level),
			"green_diag_per_level": list(self.green_diag_per_level),
			"phiphi_mass_per_level": list(self.phiphi_mass_per_level),
			"thresholds": dict(self.thresholds),
		}


#* ---------------------------------------------------------------------------
#* Asymptotics
#* ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LimitEstimate:
	quantity: str
	times: tuple[float, ...]
	series: tuple[float, ...]
	extrapolated: float
	theoretical_F: float
	verdict: str
	tolerance: float
	notes: dict[str, Any] = field(default_factory=dict)

	def to_json(self) -> dict[str, Any]:
		return {
			"quantity": self.quantity,
			"times": list(self.times),
			"series": list(self.series),
			"extrapolated": self.extrapolated,
			"theoretical_F": self.theoretical_F,
			"verdict": self.verdict,
			"tolerance": self.tolerance,
			**({"notes": self.notes} if self.notes else {}),
		}


@dataclass(frozen=True, eq=False)
class ProductOperator:
	factors: tuple[DiscreteOperator, DiscreteOperator]
	operator: DiscreteOperator

	@property
	def matrix(self) -> sp.csr_matrix:
		return self.operator.matrix


#* ---------------------------------------------------------------------------
#* Runner
#* ---------------------------------------------------------------------------

class TaskEntry(TypedDict, total=False):
	status: str
	verdict: str
	artifacts: list[str]
	message: str
	result: dict[str, Any]


class RunReport(TypedDict):
	config: dict[str, Any]
	tasks: dict[str, TaskEntry]
	wall_times: dict[str, float]
	version: str
	warnings: list[str]
