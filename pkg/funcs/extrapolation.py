from .imports import Sequence


def richardson_inverse_square(values: Sequence[float], radii: Sequence[float]) -> float:
	"""
	Extrapolate lam(r) = lam_inf + C/r^2 from the last two (r, lam) pairs.

	Example:
		>>> richardson_inverse_square([1.25, 0.5], [2.0, 4.0])
		0.25
	"""
	(r1, r2), (v1, v2) = radii[-2:], values[-2:]
	w1, w2 = 1.0 / r1**2, 1.0 / r2**2
	return (v2 * w1 - v1 * w2) / (w1 - w2)


def inverse_square_consistent(values: Sequence[float], radii: Sequence[float], tolerance: float) -> bool:
	"""True when the last two level differences shrink like 1/r^2 within a relative tolerance."""
	if len(values) < 3:
		return len(values) == 2
	v0, v1, v2 = values[-3:]
	r0, r1, r2 = radii[-3:]
	d1, d2 = v0 - v1, v1 - v2
	if d1 == 0.0:
		return d2 == 0.0
	expected = (r1**-2 - r2**-2) / (r0**-2 - r1**-2)
	return abs(d2 / d1 - expected) <= tolerance * expected


def aitken_limit(series: Sequence[float]) -> tuple[float, bool]:
	"""
	Three-point limit of s_m = L + C q^m from the last three terms.

	Falls back to the last term when the increments are not geometric with 0 < q < 1.

	Returns:
		(limit, extrapolated) where extrapolated is False on fallback.
	"""
	if len(series) < 3:
		return float(series[-1]), False

	s1, s2, s3 = (float(v) for v in series[-3:])
	d1, d2 = s2 - s1, s3 - s2
	if d1 == 0.0 or d1 == d2:
		return s3, False

	ratio = d2 / d1
	if not 0.0 < ratio < 1.0:
		return s3, False

	return s3 - d2 * d2 / (d2 - d1), True
