import logging
import math
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm
from tqdm.contrib.concurrent import thread_map

from src.kernel_operator import SignPattern, output_l1

METHODS = ("exact", "alternating", "restarts", "bound_only")
REL_TOL = 1e-12
MAX_ENUMERATION = 25


class EnumerationLimitError(RuntimeError):
    """Raised when exhaustive enumeration is requested above the size guard."""


class InvariantViolation(RuntimeError):
    """An identity or monotonicity guaranteed by construction failed (a bug, not bad input)."""


def _slack(value):
    return REL_TOL * max(1.0, abs(value))


def sign_keep(x, previous):
    """Componentwise sign of x; exact zeros keep the previous sign."""
    return np.where(x > 0, 1.0, np.where(x < 0, -1.0, previous))


def objective(matrix, weight, u):
    """w * sum |K u| for a raw vector u."""
    return float(np.abs(matrix @ u).sum() * weight)


@dataclass(frozen=True, eq=False)
class NormEstimate:
    """
    Lower/upper bracket on the (inf,1) norm of a discretized kernel operator.
    `lower` is attained by `argmax`.
    """
    lower: float
    upper: float
    argmax: SignPattern
    method: str
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method '{self.method}'")
        if self.lower > self.upper + _slack(self.upper):
            raise InvariantViolation(f"lower {self.lower!r} exceeds upper {self.upper!r}")

    def to_dict(self):
        upper = self.upper if math.isfinite(self.upper) else "inf"
        return {
            "lower": self.lower,
            "upper": upper,
            "method": self.method,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "argmax": [int(s) for s in self.argmax.signs],
        }


def norm_upper(op):
    """
    Entrywise bound w * sum_ij |K_ij|, sound for every ||u||_inf <= 1.
    Computed as the objective of |K| at u = 1 so that it matches the value of
    u = 1 bit for bit on nonnegative matrices.
    """
    return objective(np.abs(op.matrix), op.grid.weight, np.ones(op.n))


def norm_exact(op, limit=MAX_ENUMERATION, block_size=1 << 15):
    """
    Exhaustive maximization of ||K u||_1 over the 2^(n-1) sign patterns with u_1 = +1.

    Raises:
        EnumerationLimitError: if the grid has more than `limit` nodes, or more
            than MAX_ENUMERATION whatever the limit.
    """
    n = op.n
    limit = min(limit, MAX_ENUMERATION)
    if n > limit:
        raise EnumerationLimitError(f"exact enumeration refused for n={n} (limit {limit})")
    matrix_t = op.matrix.T
    total = 1 << (n - 1)
    shifts = np.arange(n - 1, dtype=np.int64)

    best_value, best_index = -1.0, 0
    for start in range(0, total, block_size):
        index = np.arange(start, min(start + block_size, total), dtype=np.int64)
        signs = np.ones((len(index), n))
        signs[:, 1:] = 1.0 - 2.0 * ((index[:, None] >> shifts) & 1)
        values = np.abs(signs @ matrix_t).sum(axis=1)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_index = float(values[k]), int(index[k])

    pattern = np.ones(n)
    pattern[1:] = 1.0 - 2.0 * ((best_index >> shifts) & 1)
    argmax = SignPattern(pattern, op.grid)
    value = output_l1(op, argmax)
    return NormEstimate(lower=value, upper=value, argmax=argmax, method="exact",
                        iterations=total, converged=True)


def _alternate(matrix, weight, u, max_half_steps):
    """
    Alternating sign ascent on the bilinear form s^T W K u. Returns
    (u, value, iterations, converged).
    """
    u = np.array(u, dtype=float)
    y = matrix @ u
    value = float(np.abs(y).sum() * weight)
    s = sign_keep(y, np.ones_like(y))
    half_steps = 0
    converged = False
    while half_steps < max_half_steps:
        s = sign_keep(y, s)
        u_new = sign_keep(matrix.T @ s, u)
        y_new = matrix @ u_new
        bilinear = float(s @ y_new * weight)
        value_new = float(np.abs(y_new).sum() * weight)
        half_steps += 2
        if bilinear < value - _slack(value) or value_new < bilinear - _slack(bilinear):
            raise InvariantViolation(
                f"alternating ascent decreased: {value!r} -> {bilinear!r} -> {value_new!r}")
        if value_new <= value:
            converged = True
            break
        u, y, value = u_new, y_new, value_new
    return u, value, half_steps // 2, converged


def norm_alternating(op, u0, upper=None):
    """
    Local maximization of ||K u||_1 from a starting sign pattern by alternating
    s <- sign(W K u) and u <- sign(K^T W s) until the objective stops increasing.
    """
    if len(u0.values) != op.n:
        raise ValueError(f"length mismatch: operator has {op.n} nodes, start has {len(u0.values)}")
    start = sign_keep(np.asarray(u0.values, dtype=float), np.ones(op.n))
    u, _, iterations, converged = _alternate(
        op.matrix, op.grid.weight, start, max_half_steps=max(10 * op.n, 2))
    argmax = SignPattern(u, op.grid)
    return NormEstimate(
        lower=output_l1(op, argmax),
        upper=norm_upper(op) if upper is None else upper,
        argmax=argmax,
        method="alternating",
        iterations=iterations,
        converged=converged,
    )


def restart_rng(seed, index):
    """Independent, reproducible stream for restart `index`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def random_signs(rng, n):
    return rng.integers(0, 2, size=n).astype(float) * 2.0 - 1.0


def norm_restarts(op, restarts, seed, starts=(), workers=1, progress=False):
    """
    Multistart alternating ascent.

    Start order (and tie-break order): the given warm `starts`, u = 1, the
    sign of the row sums, then `restarts` uniform random sign patterns drawn
    from per-restart streams of `seed`.

    Args:
        op (DiscreteOperator): operator to maximize over.
        restarts (int): number of random starts (>= 1).
        seed (int): base seed.
        starts (sequence of SignPattern): extra deterministic starts.
        workers (int): threads used to run the starts.
        progress (bool): show a tqdm bar.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    n = op.n
    upper = norm_upper(op)

    initial = [np.asarray(s.values, dtype=float) for s in starts]
    initial.append(np.ones(n))
    initial.append(sign_keep(op.matrix.sum(axis=1), np.ones(n)))
    initial.extend(random_signs(restart_rng(seed, i), n) for i in range(restarts))

    def run(u0):
        return norm_alternating(op, SignPattern(u0, op.grid), upper=upper)

    if workers > 1:
        results = thread_map(run, initial, max_workers=workers, desc="Restarts",
                             disable=not progress, leave=False)
    else:
        results = [run(u0) for u0 in tqdm(initial, desc="Restarts", disable=not progress, leave=False)]

    best = results[0]
    for result in results[1:]:
        if result.lower > best.lower:
            best = result
    logging.info(f"Restarts: best {best.lower:.6g} of {len(results)} starts (upper {upper:.6g})")
    return NormEstimate(
        lower=best.lower,
        upper=upper,
        argmax=best.argmax,
        method="restarts",
        iterations=best.iterations,
        converged=best.converged,
    )


def norm_bound_only(op):
    ones = SignPattern.ones(op.grid)
    return NormEstimate(lower=output_l1(op, ones), upper=norm_upper(op), argmax=ones,
                        method="bound_only", iterations=0, converged=False)


class NormEstimator:
    """
    Norm estimation settings for a batch of operators: exact enumeration up
    to `enum_limit` nodes, multistart ascent above it.
    """

    DEFAULT_ENUM_LIMIT = 20
    DEFAULT_RESTARTS = 16

    def __init__(self, enum_limit=DEFAULT_ENUM_LIMIT, restarts=DEFAULT_RESTARTS, seed=0, workers=1, progress=False):
        if enum_limit < 1:
            raise ValueError(f"enum_limit must be >= 1, got {enum_limit}")
        if restarts < 0:
            raise ValueError(f"restarts must be >= 0, got {restarts}")
        self.enum_limit = enum_limit
        self.restarts = restarts
        self.seed = seed
        self.workers = workers
        self.progress = progress

    def estimate(self, op, starts=()):
        return estimate_norm(op, enum_limit=self.enum_limit, restarts=self.restarts, seed=self.seed,
                             starts=starts, workers=self.workers, progress=self.progress)


def estimate_norm(op, enum_limit=NormEstimator.DEFAULT_ENUM_LIMIT, restarts=NormEstimator.DEFAULT_RESTARTS,
                  seed=0, starts=(), workers=1, progress=False):
    """Exact enumeration when the grid is small enough, multistart ascent otherwise."""
    if op.n <= enum_limit:
        return norm_exact(op, limit=enum_limit)
    if restarts == 0:
        return norm_bound_only(op)
    return norm_restarts(op, restarts, seed, starts=starts, workers=workers, progress=progress)


def box_sample_max(op, samples, seed, block_size=1024):
    """
    Largest ||K u||_1 over `samples` draws u uniform in [-1, 1]^n, each
    rescaled so that max |u_i| = 1.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    matrix_t = op.matrix.T
    best = 0.0
    for start in range(0, samples, block_size):
        size = min(block_size, samples - start)
        u = rng.uniform(-1.0, 1.0, size=(size, op.n))
        peak = np.abs(u).max(axis=1, keepdims=True)
        u = u / np.where(peak > 0, peak, 1.0)
        values = np.abs(u @ matrix_t).sum(axis=1) * op.grid.weight
        best = max(best, float(values.max()))
    return best
