import logging
from dataclasses import dataclass

import numpy as np

from src.kernels import Kernel, KernelSpecError, leading_block, make_evaluator

MODES = ("continuous", "discrete")


def _frozen(values):
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Uniform quadrature grid. Continuous grids use midpoint nodes (i + 1/2) h on
    [0, T) with weight h; discrete grids use nodes 1..n with the counting
    measure (weight 1).
    """
    mode: str
    horizon: float
    step: float
    nodes: np.ndarray

    @property
    def n(self):
        return len(self.nodes)

    @property
    def weight(self):
        return self.step

    def header(self):
        """JSON-able grid metadata: {mode, horizon, step}."""
        horizon = int(self.horizon) if self.mode == "discrete" else float(self.horizon)
        return {"mode": self.mode, "horizon": horizon, "step": float(self.step)}

    def is_prefix_of(self, other):
        return (
            self.mode == other.mode
            and self.step == other.step
            and self.n <= other.n
            and np.array_equal(self.nodes, other.nodes[:self.n])
        )


def build_grid(horizon, step=None, mode="continuous"):
    """
    Builds a quadrature grid.

    Args:
        horizon (float): T > 0 (continuous) or node count n >= 1 (discrete).
        step (float, optional): h > 0 (continuous); must be 1 or omitted in discrete mode.
        mode (str): 'continuous' or 'discrete'.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got '{mode}'")
    if not np.isfinite(horizon) or horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")

    if mode == "discrete":
        if step is not None and step != 1:
            raise ValueError(f"discrete grids use step 1 (counting measure), got {step}")
        if horizon != int(horizon):
            raise ValueError(f"discrete horizon must be an integer node count, got {horizon}")
        n = int(horizon)
        return Grid(mode=mode, horizon=n, step=1.0, nodes=_frozen(np.arange(1, n + 1)))

    if step is None or not np.isfinite(step) or step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    n = int(round(horizon / step))
    if n >= 1 and (n - 0.5) * step >= horizon:
        n -= 1
    if n < 1:
        raise ValueError(f"grid T={horizon} h={step} has no nodes")
    nodes = (np.arange(n) + 0.5) * step
    return Grid(mode=mode, horizon=float(horizon), step=float(step), nodes=_frozen(nodes))


def grid_from_header(header):
    try:
        mode = header["mode"]
        return build_grid(header["horizon"], header.get("step"), mode)
    except (KeyError, TypeError) as e:
        raise ValueError(f"invalid grid header {header}: {e}")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Values of a test function on the nodes of a grid."""
    values: np.ndarray
    grid: Grid

    __test__ = False  # not a pytest class

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or len(values) != self.grid.n:
            raise ValueError(f"test function has {values.size} values for a grid of {self.grid.n} nodes")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def on_unit_boundary(self):
        """Membership in the discretized boundary of the unit ball: max |u_i| = 1."""
        return self.sup_norm() == 1.0

    def scaled(self, factor):
        return TestFunction(self.values * factor, self.grid)


@dataclass(frozen=True, eq=False)
class SignPattern(TestFunction):
    """A test function with every value exactly -1 or +1."""

    def __post_init__(self):
        super().__post_init__()
        if not np.all(np.abs(self.values) == 1.0):
            raise ValueError("sign pattern entries must be exactly -1 or +1")

    @property
    def signs(self):
        return self.values

    @classmethod
    def ones(cls, grid):
        return cls(np.ones(grid.n), grid)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Dense n x n matrix realizing the kernel operator on a grid."""
    matrix: np.ndarray
    grid: Grid

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        if matrix.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"operator matrix {matrix.shape} does not match grid of {self.grid.n} nodes")
        object.__setattr__(self, "matrix", matrix)

    @property
    def n(self):
        return self.grid.n

    def negated(self):
        return DiscreteOperator(-self.matrix, self.grid)


def discretize(kernel, grid):
    """
    Discretizes a kernel on a grid. Continuous grids give K(t_i, t_j) * h (the
    column weight realizes d tau); discrete grids take the matrix as is. The
    output-side weight is applied by `l1_norm`.
    """
    if isinstance(kernel, Kernel):
        t = grid.nodes
        matrix = kernel(t[:, None], t[None, :]) * grid.weight
    else:
        matrix = np.asarray(kernel, dtype=float)
        if grid.mode == "continuous":
            raise ValueError("a continuous grid needs a kernel evaluator, not a matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("kernel evaluation produced non-finite values")
    return DiscreteOperator(matrix, grid)


def operator_from_spec(spec, grid):
    """Builds the discretized operator of a kernel spec on a grid of the same time mode."""
    if spec.time_mode != grid.mode:
        raise KernelSpecError(f"{spec.family} spec is {spec.time_mode} but the grid is {grid.mode}")
    if grid.mode == "continuous":
        op = discretize(make_evaluator(spec), grid)
    else:
        op = discretize(leading_block(spec, grid.n), grid)
    logging.info(f"Discretized {spec.describe()} on {grid.n} nodes")
    return op


def rectangular_output(kernel, grid, factor=2):
    """
    Kernel on the rectangle (output horizon factor * T) x (input horizon T),
    with the input column weight folded in. Returns the matrix and output nodes.
    """
    if grid.mode == "continuous":
        n_out = int(round(factor * grid.n))
        out_nodes = (np.arange(n_out) + 0.5) * grid.step
    else:
        out_nodes = np.arange(1, factor * grid.n + 1, dtype=float)
    matrix = kernel(out_nodes[:, None], grid.nodes[None, :]) * grid.weight
    return matrix, out_nodes


def _check_length(op, u):
    if len(u.values) != op.n:
        raise ValueError(f"length mismatch: operator has {op.n} nodes, test function {len(u.values)}")


def apply(op, u):
    """y = K u on the operator's grid."""
    _check_length(op, u)
    return TestFunction(op.matrix @ u.values, op.grid)


def l1_norm(y):
    """Quadrature 1-norm: sum |y_i| * weight."""
    return float(np.abs(y.values).sum() * y.grid.weight)


def output_l1(op, u):
    """||L_K[u]||_1 on the grid."""
    return l1_norm(apply(op, u))
