import logging
from dataclasses import dataclass, field

import numpy as np

from src.kernel_operator import SignPattern, TestFunction, l1_norm, output_l1
from src.norms import InvariantViolation, norm_alternating, norm_upper

REL_TOL = 1e-12
MAX_SIGNIFY_STEPS = 52  # a_n reaches 1 in double precision past this


def _slack(value):
    return REL_TOL * max(1.0, abs(value))


@dataclass(frozen=True)
class BoostStep:
    stage: str
    x: float
    set_size: int
    objective: float

    def to_dict(self):
        return {"stage": self.stage, "x": self.x, "set_size": self.set_size, "objective": self.objective}


@dataclass
class BoostTrace:
    """Endpoint choices of the boosting constructions and the objective after each."""
    initial_objective: float
    steps: list = field(default_factory=list)
    stop_index: int = None

    @property
    def final_objective(self):
        return self.steps[-1].objective if self.steps else self.initial_objective

    @property
    def objectives(self):
        return [self.initial_objective] + [step.objective for step in self.steps]

    def record(self, stage, x, set_size, objective):
        previous = self.final_objective
        if objective < previous - _slack(previous):
            raise InvariantViolation(f"{stage}: objective decreased {previous!r} -> {objective!r}")
        self.steps.append(BoostStep(stage, float(x), int(set_size), float(objective)))

    def concat(self, other):
        return BoostTrace(self.initial_objective, self.steps + other.steps,
                          other.stop_index if other.stop_index is not None else self.stop_index)

    def to_dict(self):
        data = {
            "steps": [step.to_dict() for step in self.steps],
            "initial_objective": self.initial_objective,
            "final_objective": self.final_objective,
        }
        if self.stop_index is not None:
            data["stop_index"] = self.stop_index
        return data


def sign_of(f):
    """+1 where f >= 0, -1 elsewhere."""
    return SignPattern(np.where(f.values >= 0, 1.0, -1.0), f.grid)


def bibo_single(f):
    """
    ||f||_1 of a single impulse response, checked against the pairing
    sum f_i * sign(f_i) * w, which attains the supremum over sign inputs.
    """
    value = l1_norm(f)
    pairing = float(np.sum(f.values * sign_of(f).values) * f.grid.weight)
    if abs(pairing - value) > _slack(value):
        raise InvariantViolation(f"sign pairing {pairing!r} differs from 1-norm {value!r}")
    return value


def level_set(u, a, b):
    """Indices i with a <= |u_i| < b."""
    if not (0 <= a < b <= 1):
        raise ValueError(f"level set needs 0 <= a < b <= 1, got [{a}, {b})")
    magnitude = np.abs(u.values)
    return np.flatnonzero((magnitude >= a) & (magnitude < b))


def _best_endpoint(op, values, index, candidates, combine):
    """
    Evaluates the perturbation at both endpoints and keeps the larger
    objective; ties go to the positive endpoint.
    """
    best = None
    for x in sorted(candidates, reverse=True):
        trial = np.array(values)
        trial[index] = combine(trial[index], x)
        trial = np.clip(trial, -1.0, 1.0)
        value = output_l1(op, TestFunction(trial, op.grid))
        if best is None or value > best[2]:
            best = (x, trial, value)
    return best


def _scale_stage(op, values, index, endpoint, stage, trace):
    if len(index) == 0:
        trace.record(stage, 1.0, 0, trace.final_objective)
        return values
    x, values, value = _best_endpoint(op, values, index, (-endpoint, endpoint), lambda v, x: v * x)
    trace.record(stage, x, len(index), value)
    return values


def lemma2_boost(op, u):
    """
    Lifts every entry of u to magnitude >= 1/2 without decreasing ||K u||_1.

    Stage 1 scales the entries with 1/4 <= |u_i| < 1/2 by -2 or +2; stage 2
    adds -3/4 or +3/4 to the entries with |z_i| < 1/4. Each endpoint pair
    brackets the identity, so by convexity the better endpoint never loses.

    Returns:
        (TestFunction, BoostTrace)
    """
    if u.sup_norm() > 1.0:
        raise ValueError(f"lemma2_boost needs ||u||_inf <= 1, got {u.sup_norm():g}")
    trace = BoostTrace(initial_objective=output_l1(op, u))

    values = np.array(u.values)
    values = _scale_stage(op, values, level_set(u, 0.25, 0.5), 2.0, "lemma2-scale", trace)
    z = TestFunction(values, u.grid)

    if len(level_set(z, 0.25, 0.5)) != 0:
        raise InvariantViolation("entries left in [1/4, 1/2) after the scaling stage")
    small = level_set(z, 0.0, 0.25)
    if len(small) == 0:
        trace.record("lemma2-shift", 0.0, 0, trace.final_objective)
    else:
        x, values, value = _best_endpoint(op, values, small, (-0.75, 0.75), lambda v, x: v + x)
        trace.record("lemma2-shift", x, len(small), value)

    v = TestFunction(values, u.grid)
    magnitude = np.abs(v.values)
    if magnitude.min() < 0.5 or magnitude.max() > 1.0:
        raise InvariantViolation(f"boosted magnitudes outside [1/2, 1]: [{magnitude.min()!r}, {magnitude.max()!r}]")
    logging.info(f"Boost to |v| >= 1/2: {trace.initial_objective:.6g} -> {trace.final_objective:.6g}")
    return v, trace


def signify_thresholds(n):
    """
    (lower, upper, gap_end) of step n: the level set [lower, upper) is scaled
    by +-1/upper, then the gap [upper, gap_end) by +-1/gap_end, leaving every
    entry at magnitude >= gap_end = 1 - 2^-(n+1).
    """
    lower = (2 ** n - 1) / 2 ** n
    upper = 2 * (2 ** n - 1) / (2 ** (n + 1) - 1)
    gap_end = (2 ** (n + 1) - 1) / 2 ** (n + 1)
    return lower, upper, gap_end


def lemma3_signify(op, u, eps):
    """
    Turns u with 1/2 <= |u_i| <= 1 into a sign pattern s with
    ||K s||_1 >= ||K u||_1 - eps.

    Step n pushes the entries in [(2^n-1)/2^n, 2(2^n-1)/(2^(n+1)-1)) up by the
    better of the scalings +-(2^(n+1)-1)/(2(2^n-1)), then sweeps the remaining
    gap below (2^(n+1)-1)/2^(n+1) the same way. The loop stops at the first n
    with norm_upper * 2^-(n+1) <= eps and returns the sign of the current
    function, which is within 2^-(n+1) of it entrywise.

    Returns:
        (SignPattern, BoostTrace): the trace carries the stopping index.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    magnitude = np.abs(u.values)
    if magnitude.min() < 0.5 or magnitude.max() > 1.0:
        raise ValueError("lemma3_signify needs 1/2 <= |u_i| <= 1 for every entry")
    upper_bound = norm_upper(op)
    if upper_bound * 2.0 ** -(MAX_SIGNIFY_STEPS + 1) > eps:
        raise ValueError(f"eps={eps:g} is below floating resolution for norm bound {upper_bound:g}")

    trace = BoostTrace(initial_objective=output_l1(op, u))
    values = np.array(u.values)
    n = 0
    while True:
        n += 1
        lower, upper, gap_end = signify_thresholds(n)
        current = TestFunction(values, u.grid)
        values = _scale_stage(op, values, level_set(current, lower, upper), 1.0 / upper,
                              f"lemma3-scale-{n}", trace)
        current = TestFunction(values, u.grid)
        values = _scale_stage(op, values, level_set(current, upper, gap_end), 1.0 / gap_end,
                              f"lemma3-gap-{n}", trace)
        if np.abs(values).min() < gap_end:
            raise InvariantViolation(f"step {n} left entries below {gap_end!r}")
        if upper_bound * 2.0 ** -(n + 1) <= eps:
            break

    v = TestFunction(values, u.grid)
    s = sign_of(v)
    distance = float(np.max(np.abs(s.values - v.values)))
    if distance > 2.0 ** -(n + 1) + _slack(1.0):
        raise InvariantViolation(f"sign distance {distance!r} exceeds 2^-{n + 1}")
    final = output_l1(op, s)
    if final < trace.initial_objective - eps - _slack(trace.initial_objective):
        raise InvariantViolation(f"signification lost more than eps: {trace.initial_objective!r} -> {final!r}")
    logging.info(f"Signify: stopped at n={n}, objective {trace.initial_objective:.6g} -> {final:.6g}")
    trace.stop_index = n
    return s, trace


class SignBooster:
    """
    Boost-then-signify on a test function: lift to |v| >= 1/2, then round to
    a sign pattern losing at most eps. Without an explicit eps the loss
    budget is RELATIVE_EPS times the entrywise bound of the operator.
    """

    RELATIVE_EPS = 1e-3

    def __init__(self, eps=None):
        if eps is not None and eps <= 0:
            raise ValueError(f"eps must be > 0, got {eps}")
        self.eps = eps

    def eps_for(self, op):
        if self.eps is not None:
            return self.eps
        bound = norm_upper(op)
        return self.RELATIVE_EPS * bound if bound > 0 else self.RELATIVE_EPS

    def process(self, op, u):
        """Returns (SignPattern, combined BoostTrace, eps used)."""
        eps = self.eps_for(op)
        v, boost = lemma2_boost(op, u)
        s, signify = lemma3_signify(op, v, eps)
        return s, boost.concat(signify), eps


def maximize_sign(op, u0, eps):
    """
    Boost, signify and polish: lift to |v| >= 1/2, round to signs within eps, then
    alternating ascent from the resulting sign pattern. A zero start is
    replaced by u = 1.
    """
    if u0.sup_norm() > 1.0:
        raise ValueError(f"maximize_sign needs ||u0||_inf <= 1, got {u0.sup_norm():g}")
    if not np.any(u0.values):
        u0 = SignPattern.ones(u0.grid)
    v, _ = lemma2_boost(op, u0)
    s, _ = lemma3_signify(op, v, eps)
    estimate = norm_alternating(op, s)
    if estimate.lower < output_l1(op, u0) - eps - _slack(estimate.lower):
        raise InvariantViolation("maximize_sign fell below the starting objective minus eps")
    return estimate
