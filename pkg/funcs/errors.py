#* ---------------------------------------------------------------------------
#* Exceptions
#* ---------------------------------------------------------------------------

class LabError(Exception):
	"""Base class for every error raised by the laboratory."""


class ConfigurationError(LabError, ValueError):
	"""Raised when grids, radii, balls, ladders or experiment settings are inconsistent."""


class CoefficientError(LabError, ValueError):
	"""Raised when coefficient samples are non-finite or the diffusion matrix is not SPD."""

	def __init__(self, message: str, node: tuple[float, ...] | None = None) -> None:
		self.node = node
		super().__init__(message if node is None else f"{message} at node {node}")


class DomainError(LabError, ValueError):
	"""Raised when a node or field does not belong to the domain it is used on."""


class NumericalError(LabError, RuntimeError):
	"""Raised when a solver fails or a computed quantity breaks a numerical guarantee."""


class ConsistencyError(LabError, RuntimeError):
	"""Raised when a sequence that must be monotone in the exhaustion level is not."""


class SpectralError(LabError, ValueError):
	"""Raised when a resolvent shift sits at or above the principal eigenvalue."""

	def __init__(self, lam: float, principal: float) -> None:
		self.lam = lam
		self.principal = principal
		super().__init__(
			f"Shift lambda={lam!r} is not below the level principal eigenvalue {principal!r}."
		)


class PreconditionError(LabError, ValueError):
	"""Raised when an operation is applied outside its hypotheses."""
