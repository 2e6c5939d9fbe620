"""
Closed-form, quadrature and Monte Carlo reference values for the model operators.

Conventions follow the lab: P = -a d^2 + b d + c and u_t + Pu = 0, so the
diffusion behind P moves with drift -b and generator a·d^2 (variance 2at).
"""

from .imports import Callable, Sequence, erf, sla, math
from vars.exports import Ball, np


#* ---------------------------------------------------------------------------
#* Kernels
#* ---------------------------------------------------------------------------

def gaussian_kernel(x, y, t: float, a: float = 1.0, dim: int = 1) -> np.ndarray:
	"""(4 pi a t)^{-dim/2} exp(-|x - y|^2 / (4 a t)); x and y broadcast over leading axes when dim > 1."""
	x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
	dist2 = (x - y) ** 2 if dim == 1 else ((x - y) ** 2).sum(axis=-1)
	return (4.0 * math.pi * a * t) ** (-dim / 2) * np.exp(-dist2 / (4.0 * a * t))


def drifted_kernel(x, y, t: float, b: float) -> np.ndarray:
	"""Kernel of -d^2 + b d: the particle drifts with -b."""
	x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
	return (4.0 * math.pi * t) ** -0.5 * np.exp(-((y - x + b * t) ** 2) / (4.0 * t))


def mehler_variance(t: float, kappa: float = 1.0) -> float:
	return -math.expm1(-2.0 * kappa * t) / kappa


def mehler_kernel(x, y, t: float, kappa: float = 1.0) -> np.ndarray:
	"""Kernel of -d^2 + kappa x d: Gaussian in y with mean x e^{-kappa t} and variance (1 - e^{-2 kappa t})/kappa."""
	x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
	var = mehler_variance(t, kappa)
	return np.exp(-((y - x * math.exp(-kappa * t)) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def absorbed_kernel(x, y, t: float, r: float, a: float = 1.0, terms: int = 20) -> np.ndarray:
	"""Dirichlet kernel of -a d^2 on (-r, r) by the method of images."""
	x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
	total = np.zeros(np.broadcast(x, y).shape)
	for n in range(-terms, terms + 1):
		shift = 4.0 * n * r
		total = total + gaussian_kernel(x - y + shift, 0.0, t, a) - gaussian_kernel(x + y - 2.0 * r + shift, 0.0, t, a)
	return total


def dense_propagator(matrix, t: float) -> np.ndarray:
	"""exp(-t A) for a small matrix A, densely."""
	dense = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix, dtype=float)
	return sla.expm(-t * dense)


def interval_green(x: float, y: float, r: float, a: float = 1.0) -> float:
	"""Green function of -a d^2 on (-r, r) with zero boundary values."""
	lo, hi = min(x, y), max(x, y)
	return (r - hi) * (r + lo) / (2.0 * r * a)


#* ---------------------------------------------------------------------------
#* Masses
#* ---------------------------------------------------------------------------

def gaussian_interval_mass(mean, var: float, lo: float, hi: float) -> np.ndarray:
	"""P(lo <= X <= hi) for X ~ N(mean, var)."""
	scale = math.sqrt(2.0 * var)
	return 0.5 * (erf((hi - np.asarray(mean)) / scale) - erf((lo - np.asarray(mean)) / scale))


def absorbed_interval_mass(x: float, t: float, r: float, lo: float, hi: float, a: float = 1.0, terms: int = 20) -> float:
	"""Integral over [lo, hi] of the absorbed kernel on (-r, r) with source x."""
	var = 2.0 * a * t
	total = 0.0
	for n in range(-terms, terms + 1):
		shift = 4.0 * n * r
		total += float(gaussian_interval_mass(x + shift, var, lo, hi))
		total -= float(gaussian_interval_mass(2.0 * r - x + shift, var, lo, hi))
	return total


def halfline_heat_content(distance, t: float, a: float = 1.0) -> np.ndarray:
	"""Probability that a particle started at distance from an absorbing point survives up to t."""
	return erf(np.asarray(distance, dtype=float) / (2.0 * math.sqrt(a * t)))


def drifted_hitting_probability(distance: float, b: float, a: float = 1.0) -> float:
	"""Probability of ever reaching a point at distance upstream of a particle drifting away with speed |b|."""
	return math.exp(-abs(b) * distance / a)


def laplacian_cesaro_mean(t_first: float, T: float, a: float = 1.0) -> float:
	"""(1/T) integral over [t_first, T] of (4 pi a t)^{-1/2}."""
	return (math.sqrt(T) - math.sqrt(t_first)) / (math.sqrt(math.pi * a) * T)


def sign_data_solution(x, t: float, width: float, a: float = 1.0) -> np.ndarray:
	"""Free heat flow of f = sign(x) on [-width, width], 0 outside."""
	var = 2.0 * a * t
	return gaussian_interval_mass(x, var, 0.0, width) - gaussian_interval_mass(x, var, -width, 0.0)


def shell_masses(edges: Sequence[float], t: float, a: float = 1.0) -> np.ndarray:
	"""
	Heat-flow mass at the origin of the symmetric shells between consecutive edges.

	edges run from 0 upwards and may end with inf; shell k is edges[k] <= |y| < edges[k+1].
	"""
	scaled = np.asarray(edges, dtype=float) / (2.0 * math.sqrt(a * t))
	return np.diff(erf(scaled))


#* ---------------------------------------------------------------------------
#* Monte Carlo
#* ---------------------------------------------------------------------------

def mc_hitting_probability(
	x0: float,
	drift: Callable[[np.ndarray], np.ndarray] | float,
	ball: Ball,
	t_max: float,
	bound: float,
	dt: float = 0.01,
	paths: int = 100_000,
	seed: int = 0,
	a: float = 1.0,
) -> float:
	"""
	Share of Euler-Maruyama paths of dX = -b(X) dt + sqrt(2a) dW that enter the ball before t_max.

	Paths leaving (-bound, bound) are killed without a hit.
	"""
	rng = np.random.default_rng(seed)
	center, radius = float(np.ravel(ball[0])[0]), float(ball[1])
	field = drift if callable(drift) else (lambda x, b=float(drift): np.full_like(x, b))

	position = np.full(paths, float(x0))
	alive = np.ones(paths, dtype=bool)
	hit = np.zeros(paths, dtype=bool)
	noise = math.sqrt(2.0 * a * dt)

	for _ in range(int(round(t_max / dt))):
		idx = np.flatnonzero(alive)
		if idx.size == 0:
			break
		moved = position[idx] - field(position[idx]) * dt + noise * rng.standard_normal(idx.size)
		position[idx] = moved
		entered = np.abs(moved - center) <= radius
		hit[idx[entered]] = True
		alive[idx[entered | (np.abs(moved) >= bound)]] = False

	return float(hit.mean())
