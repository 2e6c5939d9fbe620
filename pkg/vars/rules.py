VERSION = "heatlab 1.0.0"

NEGATIVE_SLACK = 1e-10
LEVEL_SLACK = 1e-8
CONVERGENCE_FLOOR = 1e-12
PECLET_WARNING = 2.0
NODE_MATCH = 1e-9
CSV_FLOAT_FORMAT = "%.17g"

TOLERANCES: dict[str, float] = {
	#? minimal heat kernel / exhaustion
	"kernel_rel_tol": 1e-3,
	"heat_content_slack": 1e-9,
	"heat_content_range": 1e-8,
	"semigroup_defect": 1e-3,
	#? eigen-solves
	"eig_vector_tol": 1e-13,
	"eig_residual": 1e-8,
	"eig_sign": 1e-10,
	"eig_max_iter": 4000,
	"eig_max_shifts": 8,
	"lambda_slack": 1e-10,
	"richardson_ratio": 0.25,
	#? classification
	"tau_lambda": 1e-2,
	"increment": 0.05,
	"band": 0.05,
	"sweep_depth": 4,
	"row_sum": 1e-6,
	#? limits
	"limit_rel": 0.02,
	"limit_abs": 0.01,
	"limit_samples": 5,
	"abelian_rel": 0.05,
	"abelian_abs": 0.02,
	"abelian_depth": 5,
	"abelian_level_fraction": 0.1,
	"abelian_oscillation": 0.2,
	"truncation_factor": 5.0,
	"product_defect": 1e-2,
	"varadhan_tol": 0.01,
	"varadhan_slack": 1e-3,
	"exterior_rel": 0.05,
	"ks_min_amplitude": 0.2,
}

TASKS = (
	"classify",
	"limit",
	"abelian",
	"varadhan",
	"heat_content",
	"capacitory",
	"cesaro",
	"exterior_mass",
	"ks",
	"product_check",
	"cauchy_limit",
)
#? tasks that read the criticality report of the same run
CLASSIFY_DEPENDENT = ("limit", "abelian", "cesaro", "exterior_mass", "cauchy_limit")
EXIT_CODES = {
	"ok": 0,
	"task failure": 1,
	"config error": 2
}
