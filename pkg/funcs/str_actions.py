from .imports import json, Any
from .errors import ConfigurationError


def parse_override(text: str) -> tuple[list[str], Any]:
	"""
	Split a "dotted.path=value" override into its path and value.

	The value is parsed as JSON when possible ("0.03", "true", "[1, 2]"),
	otherwise kept as a plain string.

	Raises:
		ConfigurationError: If text has no "=" or an empty path.
	"""
	if "=" not in text:
		raise ConfigurationError(f"Override {text!r} is not of the form key=value.")

	path, raw = text.split("=", maxsplit=1)
	keys = [key for key in path.strip().split(".") if key]
	if not keys:
		raise ConfigurationError(f"Override {text!r} has an empty key.")

	try:
		value = json.loads(raw)
	except json.JSONDecodeError:
		value = raw.strip()

	return keys, value


def set_dotted(target: dict[str, Any], keys: list[str], value: Any) -> dict[str, Any]:
	"""Set target[k1][k2]...[kn] = value, creating intermediate dicts as needed."""
	node = target
	for key in keys[:-1]:
		if not isinstance(node.get(key), dict):
			node[key] = {}
		node = node[key]
	node[keys[-1]] = value
	return target


def point_label(point: tuple[float, ...]) -> str:
	"""Compact, file-name safe label of a node: (0.0, -1.5) -> "0_-1.5"."""
	return "_".join(f"{coord:g}" for coord in point)
