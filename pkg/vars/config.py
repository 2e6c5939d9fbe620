from .imports import BaseModel, Field, Literal, field_validator, model_validator
from .rules import TASKS, TOLERANCES
from .env import OUTPUT_DIR


OperatorName = Literal["laplacian_1d", "laplacian_2d", "ou_1d", "drifted_bm_1d", "tabulated"]
TaskName = Literal[TASKS]


class OperatorSpec(BaseModel):
	name: OperatorName
	params: dict[str, float] = Field(default_factory=dict)
	#? CSV path, only for name == "tabulated"
	table: str | None = None
	#? run every task on P_{x1} + P_{x2} instead of P
	self_product: bool = False

	@model_validator(mode="after")
	def _table_present(self) -> "OperatorSpec":
		if self.name == "tabulated" and not self.table:
			raise ValueError("operator 'tabulated' needs a 'table' path")
		return self


class GridSpec(BaseModel):
	dim: Literal[1, 2]
	half_width: float = Field(gt=0)
	spacing: float = Field(gt=0)
	radii: list[float] = Field(min_length=1)


class TimeSpec(BaseModel):
	step: float = Field(gt=0)
	t_max: float = Field(gt=0)
	sample_times: list[float] = Field(default_factory=list)
	t_first: float = 0.1


class BallSpec(BaseModel):
	center: list[float] = Field(default_factory=lambda: [0.0])
	radius: float = Field(default=1.0, gt=0)


class KsSpec(BaseModel):
	#? None: calibrate over the default candidates
	ratio: float | None = None
	levels: int = Field(default=7, ge=3)
	r1: float = Field(default=1.0, gt=0)


class ExperimentConfig(BaseModel):
	name: str = "experiment"
	operator: OperatorSpec
	grid: GridSpec
	time: TimeSpec
	tasks: list[TaskName] = Field(min_length=1)
	probes: list[list[float]] = Field(default_factory=lambda: [[0.0]])
	ball: BallSpec = Field(default_factory=BallSpec)
	ks: KsSpec = Field(default_factory=KsSpec)
	tolerances: dict[str, float] = Field(default_factory=dict)
	allow_truncation: bool = False
	output_dir: str = OUTPUT_DIR
	seed: int = 0

	@field_validator("tolerances")
	@classmethod
	def _known_tolerances(cls, value: dict[str, float]) -> dict[str, float]:
		unknown = sorted(set(value) - set(TOLERANCES))
		if unknown:
			raise ValueError(f"unknown tolerance key(s): {', '.join(unknown)}")
		return value
