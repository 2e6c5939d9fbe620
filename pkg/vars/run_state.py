from .imports import Any


#? (id of operator, step) -> (operator, propagator); the operator is held so its id stays unique
FACTORIZATIONS: dict[tuple[int, float], tuple[Any, Any]] = {}
FACTORIZATION_LIMIT = 32
WARNINGS: list[str] = []
#? (id of coefficients, exhaustion) -> (coefficients, per-level operators)
OPERATORS: dict[tuple[int, Any], tuple[Any, Any]] = {}
