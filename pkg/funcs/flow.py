from .imports import Any, Callable, Sequence, ValidationError, argparse, json, math, pd, time, tb
from .errors import ConfigurationError, DomainError, LabError
from .logs import drain_warnings, log, warn
from .str_actions import parse_override, set_dotted, point_label
from .semigroup import (
	dirichlet_heat_kernel,
	geometric_ladder,
	capacitory_potential,
	clear_caches,
	heat_content,
	time_ladder,
)
from .spectral import abelian_limit, classify, limit_constant, principal_eigenpair, tolerance_table
from .operator_core import (
	interior_coordinates,
	builtin_coefficients,
	build_coefficients,
	level_operators,
	build_grid,
	locate,
)
from .asymptotics import (
	product_identity_check,
	varadhan_sup_difference,
	product_coefficients,
	product_exhaustion,
	calibrate_ks_ratio,
	large_time_limit,
	ball_indicator,
	ks_oscillation,
	exterior_mass,
	cesaro_ladder,
	clipped_sign,
	skew_product,
	cauchy_limit,
	cesaro_mean,
)
from .dataframe import (
	read_tabulated_coefficients,
	slice_to_frame,
	curve_to_frame,
	field_to_frame,
	artifact_path,
	write_frame,
	write_json,
)
from vars.exports import (
	EXPECTED_INCONCLUSIVE,
	CLASSIFY_DEPENDENT,
	ExperimentConfig,
	CriticalityReport,
	EXIT_CODES,
	OUTPUT_DIR,
	Criticality,
	TaskEntry,
	RunReport,
	BUILTINS,
	VERSION,
	SUITES,
	TimeCurve,
	os,
	np,
)


#? verdicts that do not count against a selftest suite
_ACCEPTED = {"matches", "oscillates", "ok", "context-only"}
#? nodes per axis above which the skew-product context of varadhan is computed on a coarser grid
_CONTEXT_STEPS = 100


#* ---------------------------------------------------------------------------
#* Configuration
#* ---------------------------------------------------------------------------

def load_config(source: str | dict[str, Any], overrides: Sequence[str] = ()) -> ExperimentConfig:
	"""
	Read an experiment config from a JSON path (or a dict), apply dotted overrides and validate it.

	Raises:
		ConfigurationError: If the file is missing or not JSON, or an override is malformed.
		ValidationError:    If the config does not match the schema.
	"""
	if isinstance(source, dict):
		raw = json.loads(json.dumps(source))
	else:
		if not os.path.exists(source):
			raise ConfigurationError(f"Config file {source!r} does not exist.")
		try:
			with open(source, "r", encoding="utf-8") as f:
				raw = json.load(f)
		except json.JSONDecodeError as exc:
			raise ConfigurationError(f"Config file {source!r} is not valid JSON: {exc}") from exc

	for text in overrides:
		set_dotted(raw, *parse_override(text))

	return ExperimentConfig.model_validate(raw)


def validation_messages(exc: ValidationError) -> list[str]:
	"""One "path: message" line per schema error; path is the dotted JSON location."""
	return [
		f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
		for error in exc.errors()
	]


def list_builtin_operators() -> dict[str, Any]:
	"""Names, parameter schemas and known facts of the built-in operators."""
	return json.loads(json.dumps(BUILTINS))


#* ---------------------------------------------------------------------------
#* Problem set-up
#* ---------------------------------------------------------------------------

def _coefficients(config: ExperimentConfig, grid):
	spec = config.operator
	if spec.name == "tabulated":
		return build_coefficients(grid, **read_tabulated_coefficients(spec.table, grid), label="tabulated")
	return builtin_coefficients(grid, spec.name, spec.params)


def build_problem(config: ExperimentConfig) -> dict[str, Any]:
	"""
	Grid, exhaustion and coefficients of a config, with probes checked against M_1.

	Raises:
		ConfigurationError: On an inconsistent grid, a self product of a 2D operator, or a probe outside M_1.
	"""
	grid_spec = config.grid
	grid, exhaustion = build_grid(grid_spec.dim, grid_spec.half_width, grid_spec.spacing, grid_spec.radii)
	factor = _coefficients(config, grid)
	coeffs = factor

	if config.operator.self_product:
		if grid.dim != 1:
			raise ConfigurationError("self_product needs a 1D operator.")
		coeffs = product_coefficients(factor, factor)
		exhaustion = product_exhaustion(exhaustion)

	probes = [tuple(float(v) for v in p) for p in config.probes]
	for probe in probes:
		try:
			locate(exhaustion, 0, probe)
		except DomainError as exc:
			raise ConfigurationError(f"probe {probe} is not inside M_1: {exc}") from exc

	return {
		"config": config,
		"coeffs": coeffs,
		"factor": factor,
		"exhaustion": exhaustion,
		"probes": probes,
		"tolerances": tolerance_table(config.tolerances),
		"report": None,
		"folder": os.path.join(config.output_dir, config.name),
	}


def _classification(ctx: dict[str, Any]) -> CriticalityReport:
	"""Classify once per run; dependent tasks reuse the report."""
	if ctx["report"] is None:
		ctx["report"] = classify(ctx["coeffs"], ctx["exhaustion"], ctx["tolerances"])
	return ctx["report"]


def _ladder(ctx: dict[str, Any]):
	spec = ctx["config"].time
	return time_ladder(spec.step, spec.sample_times, spec.t_max)


def _write(ctx: dict[str, Any], frame: pd.DataFrame, quantity: str, level: int) -> str:
	config = ctx["config"]
	return write_frame(frame, artifact_path(config.output_dir, config.name, quantity, level))


def _worst(verdicts: Sequence[str]) -> str:
	for verdict in ("violates", "inconclusive"):
		if verdict in verdicts:
			return verdict
	return verdicts[0] if verdicts else "ok"


#* ---------------------------------------------------------------------------
#* Tasks
#* ---------------------------------------------------------------------------

def task_classify(ctx: dict[str, Any]) -> TaskEntry:
	report = _classification(ctx)
	exhaustion, spectral = ctx["exhaustion"], report.spectral
	coords = interior_coordinates(exhaustion, exhaustion.top)

	artifacts = [
		_write(ctx, field_to_frame(spectral.phi.values, coords), "phi", exhaustion.top),
		_write(ctx, field_to_frame(spectral.phi_star.values, coords), "phi_star", exhaustion.top),
	]
	return {"status": "ok", "verdict": report.cls.value, "artifacts": artifacts, "result": report.to_json()}


def task_limit(ctx: dict[str, Any]) -> TaskEntry:
	report, config, exhaustion = _classification(ctx), ctx["config"], ctx["exhaustion"]
	estimates = [
		large_time_limit(
			ctx["coeffs"], exhaustion, probe, probe, report,
			config.time.step, config.time.t_max, config.allow_truncation, ctx["tolerances"],
		)
		for probe in ctx["probes"]
	]

	#? the slice of the first probe on the limit's own time samples
	top = level_operators(ctx["coeffs"], exhaustion)[-1]
	ladder = geometric_ladder(config.time.step, config.time.t_max, int(ctx["tolerances"]["limit_samples"]))
	kernel = dirichlet_heat_kernel(top, ctx["probes"][0], ladder)
	frame = slice_to_frame(kernel, interior_coordinates(exhaustion, top.level))

	return {
		"status": "ok",
		"verdict": _worst([e.verdict for e in estimates]),
		"artifacts": [_write(ctx, frame, "heat_kernel", top.level)],
		"result": {point_label(p): e.to_json() for p, e in zip(ctx["probes"], estimates)},
	}


def task_abelian(ctx: dict[str, Any]) -> TaskEntry:
	report = _classification(ctx)
	estimates = [
		abelian_limit(ctx["coeffs"], ctx["exhaustion"], probe, probe, report, tolerances=ctx["tolerances"])
		for probe in ctx["probes"]
	]
	return {
		"status": "ok",
		"verdict": _worst([e.verdict for e in estimates]),
		"artifacts": [],
		"result": {point_label(p): e.to_json() for p, e in zip(ctx["probes"], estimates)},
	}


def _ball(ctx: dict[str, Any]):
	ball = ctx["config"].ball
	return tuple(ball.center), ball.radius


def task_heat_content(ctx: dict[str, Any]) -> TaskEntry:
	exhaustion = ctx["exhaustion"]
	curves, _ = heat_content(ctx["coeffs"], exhaustion, _ball(ctx), _ladder(ctx), ctx["probes"])
	frame = pd.concat([curve_to_frame(c) for c in curves], ignore_index=True)
	return {
		"status": "ok",
		"verdict": "ok",
		"artifacts": [_write(ctx, frame, "heat_content", exhaustion.top)],
		"result": {point_label(c.probe): float(c.values[-1]) for c in curves},
	}


def task_capacitory(ctx: dict[str, Any]) -> TaskEntry:
	exhaustion = ctx["exhaustion"]
	curves, _ = capacitory_potential(ctx["coeffs"], exhaustion, _ball(ctx), _ladder(ctx), ctx["probes"])
	frame = pd.concat([curve_to_frame(c) for c in curves], ignore_index=True)
	return {
		"status": "ok",
		"verdict": "ok",
		"artifacts": [_write(ctx, frame, "capacitory_potential", exhaustion.top)],
		"result": {point_label(c.probe): float(c.values[-1]) for c in curves},
	}


def _half_horizon(T: float, t_first: float) -> float:
	return round(T / (2.0 * t_first)) * t_first


def task_cesaro(ctx: dict[str, Any]) -> TaskEntry:
	report, spec, exhaustion = _classification(ctx), ctx["config"].time, ctx["exhaustion"]
	top = level_operators(ctx["coeffs"], exhaustion)[-1]
	ladder = cesaro_ladder(spec.step, spec.t_first, spec.t_max)
	half_T = _half_horizon(spec.t_max, spec.t_first)

	verdicts, frames, result = [], [], {}
	for probe in ctx["probes"]:
		kernel = dirichlet_heat_kernel(top, probe, ladder)
		curve = TimeCurve(times=ladder, values=kernel.values[:, locate(exhaustion, top.level, probe)], label="kernel_diag", probe=probe)
		mean = cesaro_mean(curve, report.lambda0, spec.t_max, spec.t_first)
		half = cesaro_mean(curve, report.lambda0, half_T, spec.t_first)

		if report.cls is Criticality.POSITIVE_CRITICAL:
			target = limit_constant(exhaustion, report.spectral, report, probe, probe)
			verdict = "matches" if abs(mean - target) <= ctx["tolerances"]["abelian_rel"] * target else "inconclusive"
		else:
			verdict = "matches" if mean < half else "violates"

		verdicts.append(verdict)
		frames.append(curve_to_frame(curve))
		result[point_label(probe)] = {
			"mean": mean,
			"half_horizon": half_T,
			"half_horizon_mean": half,
			"ratio": mean / half,
			"t_first": spec.t_first,
		}

	artifacts = [_write(ctx, pd.concat(frames, ignore_index=True), "kernel_diag", exhaustion.top)]
	return {"status": "ok", "verdict": _worst(verdicts), "artifacts": artifacts, "result": result}


def task_exterior_mass(ctx: dict[str, Any]) -> TaskEntry:
	report, exhaustion = _classification(ctx), ctx["exhaustion"]
	pairs = [
		exterior_mass(ctx["coeffs"], exhaustion, 0, probe, _ladder(ctx), report, ctx["tolerances"])
		for probe in ctx["probes"]
	]
	frame = pd.concat([curve_to_frame(curve) for curve, _ in pairs], ignore_index=True)
	return {
		"status": "ok",
		"verdict": _worst([estimate.verdict for _, estimate in pairs]),
		"artifacts": [_write(ctx, frame, "exterior_mass", 0)],
		"result": {point_label(p): estimate.to_json() for p, (_, estimate) in zip(ctx["probes"], pairs)},
	}


def _product_context(ctx: dict[str, Any]) -> CriticalityReport | None:
	"""
	Classification of the operator's skew product with itself, on a grid coarse enough for a 2D solve.

	None when the operator is not a 1D built-in or no coarse spacing divides the radii.
	"""
	config, exhaustion = ctx["config"], ctx["exhaustion"]
	if config.grid.dim != 1 or config.operator.self_product or config.operator.name == "tabulated":
		return None

	radii, spacing = exhaustion.radii, config.grid.spacing
	factor = max(1, math.ceil(radii[-1] / (_CONTEXT_STEPS * spacing) - 1e-9))

	while factor * spacing < radii[0]:
		try:
			grid, family = build_grid(1, radii[-1], factor * spacing, radii)
		except ConfigurationError:
			factor += 1
			continue
		coarse = builtin_coefficients(grid, config.operator.name, config.operator.params)
		return classify(product_coefficients(coarse, coarse), product_exhaustion(family), ctx["tolerances"])

	return None


def task_varadhan(ctx: dict[str, Any]) -> TaskEntry:
	exhaustion = ctx["exhaustion"]
	coords = interior_coordinates(exhaustion, exhaustion.top)
	K = [tuple(c) for c in coords[np.all(np.abs(coords) <= 1.0 + 1e-9, axis=1)]]

	try:
		context = _product_context(ctx)
	except LabError as exc:
		warn(f"skew-product context unavailable: {exc}")
		context = None

	curve, verdict = varadhan_sup_difference(
		ctx["coeffs"], exhaustion, clipped_sign(exhaustion), K, _ladder(ctx), context, ctx["tolerances"]
	)
	return {
		"status": "ok",
		"verdict": verdict,
		"artifacts": [_write(ctx, curve_to_frame(curve), "varadhan", exhaustion.top)],
		"result": {
			"sup_difference": float(curve.values[-1]),
			"product_class": context.cls.value if context is not None else None,
		},
	}


def task_ks(ctx: dict[str, Any]) -> TaskEntry:
	spec, minimum = ctx["config"].ks, ctx["tolerances"]["ks_min_amplitude"]
	ratio = spec.ratio if spec.ratio is not None else calibrate_ks_ratio(min_amplitude=minimum)

	estimate = ks_oscillation(ratio, spec.levels, spec.r1, min_amplitude=minimum)
	control = ks_oscillation(ratio, spec.levels, spec.r1, constant=True, min_amplitude=minimum)
	verdict = "oscillates" if estimate.verdict == "oscillates" and control.verdict == "no oscillation" else "violates"

	frame = pd.DataFrame({"t": list(estimate.times), "value": list(estimate.series)})
	return {
		"status": "ok",
		"verdict": verdict,
		"artifacts": [_write(ctx, frame, "ks_oscillation", 0)],
		"result": {"ratio": ratio, "oscillation": estimate.to_json(), "constant_control": control.to_json()},
	}


def task_product_check(ctx: dict[str, Any]) -> TaskEntry:
	config, tol = ctx["config"], ctx["tolerances"]
	if config.grid.dim != 1 or config.operator.self_product:
		raise ConfigurationError("product_check needs a 1D operator without self_product.")

	op = level_operators(ctx["coeffs"], ctx["exhaustion"])[-1]
	step = config.time.step
	t = round(min(1.0, config.time.t_max) / step) * step
	source = ctx["probes"][0][0]

	defect = product_identity_check(op, op, (source, source), t, step)
	lam = principal_eigenpair(op, tol)[0]
	lam_bar = principal_eigenpair(skew_product(op, op).operator, tol)[0]
	additivity = abs(lam_bar - 2.0 * lam)

	ok = defect <= tol["product_defect"] and additivity <= 1e-8 * max(1.0, abs(lam_bar))
	return {
		"status": "ok",
		"verdict": "matches" if ok else "violates",
		"artifacts": [],
		"result": {"t": t, "kernel_defect": defect, "eigenvalue_additivity": additivity},
	}


def task_cauchy_limit(ctx: dict[str, Any]) -> TaskEntry:
	report, exhaustion = _classification(ctx), ctx["exhaustion"]
	center, radius = _ball(ctx)
	curve, estimate = cauchy_limit(
		ctx["coeffs"], exhaustion, ball_indicator(exhaustion, center, radius), ctx["probes"], _ladder(ctx), report, ctx["tolerances"]
	)
	return {
		"status": "ok",
		"verdict": estimate.verdict,
		"artifacts": [_write(ctx, curve_to_frame(curve), "cauchy_sup", exhaustion.top)],
		"result": estimate.to_json(),
	}


TASK_HANDLERS: dict[str, Callable[[dict[str, Any]], TaskEntry]] = {
	"classify": task_classify,
	"limit": task_limit,
	"abelian": task_abelian,
	"varadhan": task_varadhan,
	"heat_content": task_heat_content,
	"capacitory": task_capacitory,
	"cesaro": task_cesaro,
	"exterior_mass": task_exterior_mass,
	"ks": task_ks,
	"product_check": task_product_check,
	"cauchy_limit": task_cauchy_limit,
}


#* ---------------------------------------------------------------------------
#* Runs
#* ---------------------------------------------------------------------------

def _log_traceback() -> None:
	for line in tb.format_exc().splitlines():
		if line.strip():
			log(line, silent=True)


def _failed(message: str) -> TaskEntry:
	return {"status": "error", "verdict": "error", "artifacts": [], "message": message}


def run(config: ExperimentConfig) -> RunReport:
	"""
	Run every task of config, containing failures per task, and write report.json.

	Tasks that need the classification share one report computed on first use.
	"""
	clear_caches()
	drain_warnings()
	log(f"Running {config.name}: {', '.join(config.tasks)}.", left_nl=1)

	tasks: dict[str, TaskEntry] = {}
	wall_times: dict[str, float] = {}

	try:
		ctx = build_problem(config)
	except Exception as e:
		log(f"Error: {e}")
		_log_traceback()
		ctx = None
		for name in config.tasks:
			tasks[name] = _failed(f"{type(e).__name__}: {e}")

	if "classify" not in config.tasks and any(name in CLASSIFY_DEPENDENT for name in config.tasks):
		log("Classification runs implicitly for the dependent tasks.", silent=True)

	for name in dict.fromkeys(config.tasks) if ctx is not None else ():
		start = time.perf_counter()
		try:
			tasks[name] = TASK_HANDLERS[name](ctx)
			log(f"{name}: {tasks[name]['verdict']}")
		except Exception as e:
			log(f"Error in {name}: {e}")
			_log_traceback()
			tasks[name] = _failed(f"{type(e).__name__}: {e}")
		wall_times[name] = round(time.perf_counter() - start, 6)

	report: RunReport = {
		"config": config.model_dump(mode="json"),
		"tasks": tasks,
		"wall_times": wall_times,
		"version": VERSION,
		"warnings": drain_warnings(),
	}
	write_json(report, os.path.join(config.output_dir, config.name, "report.json"))
	return report


def exit_code(report: RunReport) -> int:
	failed = any(entry["status"] == "error" for entry in report["tasks"].values())
	return EXIT_CODES["task failure"] if failed else EXIT_CODES["ok"]


def suite_failures(suite: dict[str, Any], report: RunReport) -> list[str]:
	"""Failure messages of one canned suite; inconclusive verdicts only pass where the catalog expects them."""
	expected = BUILTINS[suite["operator"]["name"]]["facts"].get("class", {}).get("value")
	failures = []

	for name, entry in report["tasks"].items():
		verdict = entry.get("verdict")
		if entry["status"] != "ok":
			failures.append(f"{suite['name']}.{name}: {entry.get('message')}")
		elif name == "classify":
			if expected is not None and verdict != expected:
				failures.append(f"{suite['name']}.classify: {verdict}, expected {expected}")
		elif verdict == "inconclusive":
			if (suite["name"], name) not in EXPECTED_INCONCLUSIVE:
				failures.append(f"{suite['name']}.{name}: inconclusive")
		elif verdict not in _ACCEPTED:
			failures.append(f"{suite['name']}.{name}: {verdict}")

	return failures


def selftest(output_dir: str | None = None) -> int:
	"""
	Run the canned suites and compare classes and verdicts with the catalog.

	Returns:
		0 when every suite passes, 1 otherwise.
	"""
	folder = output_dir or os.path.join(OUTPUT_DIR, "selftest")
	failures: list[str] = []

	for suite in SUITES:
		report = run(load_config({**suite, "output_dir": folder}))
		failures.extend(suite_failures(suite, report))

	for failure in failures:
		log(f"FAILED {failure}")
	log(f"Selftest: {len(SUITES)} suites, {len(failures)} failure(s).", left_nl=1)
	return EXIT_CODES["ok"] if not failures else EXIT_CODES["task failure"]


#* ---------------------------------------------------------------------------
#* Entry point
#* ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(prog="heatlab", description="Heat kernel criticality laboratory.")
	commands = parser.add_subparsers(dest="command", required=True)

	run_parser = commands.add_parser("run", help="run an experiment config")
	run_parser.add_argument("config", help="path to the experiment JSON")
	run_parser.add_argument("--out", help="output directory (overrides output_dir)")
	run_parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="dotted-path config override")

	commands.add_parser("catalog", help="print the built-in operators")

	self_parser = commands.add_parser("selftest", help="run the canned acceptance suites")
	self_parser.add_argument("--out", help="output directory")
	return parser


def _run_command(args: argparse.Namespace) -> int:
	overrides = list(args.override) + ([f"output_dir={json.dumps(args.out)}"] if args.out else [])
	try:
		config = load_config(args.config, overrides)
	except ValidationError as e:
		for message in validation_messages(e):
			log(f"Config error: {message}")
		return EXIT_CODES["config error"]
	except ConfigurationError as e:
		log(f"Config error: {e}")
		return EXIT_CODES["config error"]

	return exit_code(run(config))


def main(argv: Sequence[str] | None = None) -> int:
	"""
	Parse the command line and dispatch: run, catalog or selftest.

	Returns the process exit code: 0 ok, 1 task failure, 2 config error.
	"""
	args = _parser().parse_args(argv)
	log("START", silent=True, right_nl=2)

	try:
		if args.command == "catalog":
			print(json.dumps(list_builtin_operators(), indent=2, sort_keys=True))
			code = EXIT_CODES["ok"]
		elif args.command == "selftest":
			code = selftest(args.out)
		else:
			code = _run_command(args)
	except Exception as e:
		code = EXIT_CODES["task failure"]
		log(f"Error: {e}", left_nl=1, right_nl=2)
		_log_traceback()

	log("END", silent=True, write=True, left_nl=1, right_nl=3)
	return code
