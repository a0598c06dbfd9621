import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from tqdm import tqdm

from src.kernel_operator import (SignPattern, build_grid, operator_from_spec, output_l1,
                                 rectangular_output)
from src.kernels import diagonal_entries, make_evaluator
from src.norms import InvariantViolation, norm_restarts

REL_TOL = 1e-12
MODELS = ("bounded", "logarithmic", "polynomial")
VERDICTS = {"bounded": "stable", "logarithmic": "unstable", "polynomial": "unstable"}


@dataclass
class GrowthFit:
    model: str
    params: dict
    residuals: dict

    def to_dict(self):
        return {"model": self.model, "params": self.params, "residuals": self.residuals}


@dataclass
class TruncationReport:
    """
    Norm estimates of the kernel restricted to [0, T]^2 for an increasing
    sequence of horizons T.
    """
    mode: str
    step: float
    horizons: list
    a_values: list = field(default_factory=list)
    upper_values: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    warm_starts: list = field(default_factory=list)
    tail_fractions: list = field(default_factory=list)
    classification: str = None
    growth_model: GrowthFit = None

    TAIL_THRESHOLD = 0.01

    @property
    def tail_warnings(self):
        return [h for h, frac in zip(self.horizons, self.tail_fractions)
                if frac is not None and frac > self.TAIL_THRESHOLD]

    def to_frame(self):
        return pd.DataFrame({
            "horizon": self.horizons,
            "a_value": self.a_values,
            "upper": self.upper_values,
            "converged": self.converged,
            "tail_fraction": self.tail_fractions,
        })

    def verdict(self):
        fit = self.growth_model
        return {
            "classification": self.classification,
            "growth_model": fit.model if fit else None,
            "growth_params": fit.params if fit else None,
            "fit_residuals": fit.residuals if fit else None,
            "heuristic": True,
            "note": "finite horizons cannot certify boundedness of the truncation sequence",
            "tail_warnings": self.tail_warnings,
        }


class StabilityAnalyzer:
    """
    Runs the truncation sequence of a kernel over increasing horizons and
    classifies its growth.
    """

    TIE_RATIO = 1.5
    MIN_HORIZONS = 4
    FLAT_TOLERANCE = 1e-12
    Q_BOUNDS = (0.5, 3.0)

    def __init__(self, restarts=16, seed=0, step=None, workers=1, progress=False):
        if restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {restarts}")
        self.restarts = restarts
        self.seed = seed
        self.step = step
        self.workers = workers
        self.progress = progress

    def analyze(self, spec, horizons):
        """Returns the classified TruncationReport."""
        if len(horizons) < self.MIN_HORIZONS:
            raise ValueError(f"classification needs at least {self.MIN_HORIZONS} horizons, got {len(horizons)}")
        report = truncation_norms(spec, horizons, step=self.step, restarts=self.restarts, seed=self.seed,
                                  workers=self.workers, progress=self.progress)
        classify(report, tie_ratio=self.TIE_RATIO, min_horizons=self.MIN_HORIZONS)
        return report


def default_horizons(horizon, mode, levels=4):
    """Doubling sequence of `levels` horizons ending at `horizon`."""
    horizons = [horizon / 2 ** k for k in range(levels - 1, -1, -1)]
    if mode == "discrete":
        horizons = [int(round(h)) for h in horizons]
    if len(set(horizons)) != len(horizons) or min(horizons) <= 0:
        raise ValueError(f"horizon {horizon} is too small for {levels} doubling levels")
    return horizons


def _check_horizons(horizons):
    if len(horizons) == 0:
        raise ValueError("at least one horizon is required")
    if any(h <= 0 for h in horizons):
        raise ValueError(f"horizons must be positive, got {list(horizons)}")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError(f"horizons must be strictly increasing, got {list(horizons)}")


def extend_sign(prev, new_grid, op):
    """
    Extends a sign pattern from a prefix grid to `new_grid`, filling the tail
    with the constant (+1 or -1) that gives the larger ||K u||_1 under `op`.
    Ties go to +1.
    """
    if not prev.grid.is_prefix_of(new_grid):
        raise ValueError("previous grid is not a prefix of the new grid (different step or horizon)")
    if op.n != new_grid.n:
        raise ValueError(f"operator has {op.n} nodes, new grid {new_grid.n}")
    k = prev.grid.n
    if k == new_grid.n:
        return SignPattern(prev.values, new_grid)

    best = None
    for x in (1.0, -1.0):
        values = np.empty(new_grid.n)
        values[:k] = prev.values
        values[k:] = x
        candidate = SignPattern(values, new_grid)
        value = output_l1(op, candidate)
        if best is None or value > best[1]:
            best = (candidate, value)
    return best[0]


def _tail_fraction(evaluator, grid, pattern):
    """Share of the output 1-norm on (T, 2T] when the input lives on [0, T]."""
    matrix, _ = rectangular_output(evaluator, grid, factor=2)
    y = np.abs(matrix @ pattern.values)
    total = y.sum()
    if total == 0:
        return 0.0
    return float(y[grid.n:].sum() / total)


def _diagonal_sequence(spec, horizons, report):
    partial = np.cumsum(np.abs(diagonal_entries(spec, int(horizons[-1]))))
    for horizon in horizons:
        value = float(partial[int(horizon) - 1])
        report.a_values.append(value)
        report.upper_values.append(value)
        report.converged.append(True)
        report.warm_starts.append(SignPattern.ones(build_grid(horizon, mode="discrete")))
        report.tail_fractions.append(0.0)
        logging.info(f"Horizon {horizon}: a = {value:.6g} (closed form)")
    return report


def truncation_norms(spec, horizons, step=None, restarts=16, seed=0, workers=1, progress=False):
    """
    Estimates a_T = ||K_T||_(inf,1) for the kernel restricted to [0, T]^2 at
    each horizon. Grids are nested (same step), and each horizon is seeded with
    the previous maximizer extended to the new tail, which keeps the reported
    sequence nondecreasing.

    Args:
        spec (KernelSpec): kernel to analyze.
        horizons (sequence): strictly increasing T (continuous) or n (discrete).
        step (float): quadrature step for continuous kernels.
        restarts (int): random restarts per horizon.
        seed (int): base seed for the restarts.
    """
    _check_horizons(horizons)
    report = TruncationReport(mode=spec.time_mode, step=step if spec.time_mode == "continuous" else 1.0,
                              horizons=list(horizons))
    if spec.family == "diagonal":
        return _diagonal_sequence(spec, horizons, report)

    evaluator = make_evaluator(spec) if spec.family != "matrix" else None
    previous = None
    for horizon in tqdm(horizons, desc="Horizons", disable=not progress):
        grid = build_grid(horizon, step if spec.time_mode == "continuous" else None, spec.time_mode)
        op = operator_from_spec(spec, grid)
        starts = [extend_sign(previous, grid, op)] if previous is not None else []
        estimate = norm_restarts(op, restarts, seed, starts=starts, workers=workers)

        value = estimate.lower
        if report.a_values:
            last = report.a_values[-1]
            if value < last - REL_TOL * max(1.0, last):
                raise InvariantViolation(f"truncation norm decreased at T={horizon}: {last!r} -> {value!r}")
            value = max(value, last)

        report.a_values.append(value)
        report.upper_values.append(estimate.upper)
        report.converged.append(estimate.converged)
        report.warm_starts.append(estimate.argmax)
        tail = _tail_fraction(evaluator, grid, estimate.argmax) if evaluator is not None else None
        report.tail_fractions.append(tail)
        if tail is not None and tail > report.TAIL_THRESHOLD:
            logging.warning(f"Horizon {horizon}: {tail:.1%} of the output 1-norm lies beyond the input horizon")
        logging.info(f"Horizon {horizon}: a = {value:.6g} (upper {estimate.upper:.6g}, n={grid.n})")
        previous = estimate.argmax
    return report


def _linear_fit(x, y):
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sum((design @ coef - y) ** 2))
    return coef, residual


def fit_growth_models(horizons, a_values, q_bounds=StabilityAnalyzer.Q_BOUNDS):
    """
    Least-squares fits of a(T) against
      bounded:     a_inf - c / T
      logarithmic: c1 log T + c2
      polynomial:  c1 T^q + c2, q in q_bounds
    Returns {model: (params, residual)}.
    """
    T = np.asarray(horizons, dtype=float)
    a = np.asarray(a_values, dtype=float)

    fits = {}
    (slope, a_inf), residual = _linear_fit(-1.0 / T, a)
    fits["bounded"] = ({"a_inf": float(a_inf), "c": float(slope)}, residual)

    (c1, c2), residual = _linear_fit(np.log(T), a)
    fits["logarithmic"] = ({"c1": float(c1), "c2": float(c2)}, residual)

    scale = T / T.max()  # keeps T^q well conditioned

    def poly_residual(q):
        return _linear_fit(scale ** q, a)[1]

    best = minimize_scalar(poly_residual, bounds=q_bounds, method="bounded")
    q = float(best.x)
    (c1, c2), residual = _linear_fit(scale ** q, a)
    # c1 is fitted against (T / T_max)^q
    fits["polynomial"] = ({"c1": float(c1 / T.max() ** q), "c2": float(c2), "q": q}, residual)
    return fits


def classify(report, tie_ratio=StabilityAnalyzer.TIE_RATIO, min_horizons=StabilityAnalyzer.MIN_HORIZONS,
             flat_tolerance=StabilityAnalyzer.FLAT_TOLERANCE):
    """
    Heuristic stability verdict from the growth of the truncation sequence:
    the best-fitting model decides (bounded -> stable, log/polynomial ->
    unstable), unless the best model of the opposite verdict fits within
    `tie_ratio` of it, in which case the verdict is inconclusive.

    A sequence that does not move (spread within `flat_tolerance`) is
    bounded. Logarithmic or polynomial fits with c1 <= 0 do not describe
    growth and are not candidates.
    """
    if len(report.horizons) < min_horizons:
        raise ValueError(f"classification needs at least {min_horizons} horizons, got {len(report.horizons)}")
    a = np.asarray(report.a_values, dtype=float)
    fits = fit_growth_models(report.horizons, a)
    residuals = {model: fits[model][1] for model in MODELS}

    if a.max() - a.min() <= flat_tolerance * max(1.0, float(np.abs(a).max())):
        report.classification = "stable"
        report.growth_model = GrowthFit(model="bounded", params={"a_inf": float(a.max()), "c": 0.0},
                                        residuals=residuals)
        logging.info("Classification (heuristic): stable, flat sequence")
        return report.classification, report.growth_model

    candidates = [m for m in MODELS if VERDICTS[m] == "stable" or fits[m][0]["c1"] > 0]
    best = min(candidates, key=lambda model: residuals[model])
    verdict = VERDICTS[best]
    rivals = [m for m in candidates if VERDICTS[m] != verdict]
    if rivals:
        rival = min(rivals, key=lambda model: residuals[model])
        if residuals[rival] <= tie_ratio * residuals[best]:
            verdict = "inconclusive"

    report.classification = verdict
    report.growth_model = GrowthFit(model=best, params=fits[best][0], residuals=residuals)
    logging.info(f"Classification (heuristic): {verdict}, best model {best}")
    return report.classification, report.growth_model
