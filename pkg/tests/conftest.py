import pytest

from funcs.operator_core import build_grid, builtin_coefficients
from funcs.semigroup import clear_caches
from vars.exports import BUILTINS, LOGS, VERBOSITY, WARNINGS


def make_problem(name: str, half_width: float, spacing: float, radii: list[float], **params):
	"""Coefficients and exhaustion of a built-in operator."""
	grid, exhaustion = build_grid(BUILTINS[name]["dim"], half_width, spacing, radii)
	return builtin_coefficients(grid, name, params), exhaustion


@pytest.fixture(autouse=True)
def quiet_lab(tmp_path, monkeypatch):
	"""Silent logging into a temporary file, fresh caches and warnings for every test."""
	monkeypatch.setitem(VERBOSITY, "silent", True)
	monkeypatch.setitem(LOGS, "path", str(tmp_path / "lab_logs.txt"))
	monkeypatch.setitem(LOGS, "content", "")
	clear_caches()
	WARNINGS.clear()
	yield
	clear_caches()
	WARNINGS.clear()


@pytest.fixture(scope="module")
def laplacian_1d():
	return make_problem("laplacian_1d", 40.0, 0.1, [10.0, 20.0, 40.0])


@pytest.fixture(scope="module")
def ou_1d():
	return make_problem("ou_1d", 8.0, 0.05, [2.0, 4.0, 8.0])


@pytest.fixture(scope="module")
def drifted_bm_1d():
	return make_problem("drifted_bm_1d", 40.0, 0.1, [10.0, 20.0, 40.0], b=1.0)
