import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd


class KernelSpecError(ValueError):
    """Raised for malformed or invalid kernel specification files."""

    def __init__(self, message, column=None):
        self.column = column
        if column is not None:
            message = f"column {column}: {message}"
        super().__init__(message)


# family -> (allowed modes, parameter defaults, description)
FAMILIES = {
    "tc": (("continuous", "discrete"), {"beta": 1.0},
           "tuned/correlated kernel exp(-beta*max(s,t)); stable"),
    "gaussian": (("continuous", "discrete"), {"sigma": 1.0},
                 "gaussian kernel exp(-(s-t)^2/sigma^2); unstable"),
    "rank_one": (("continuous", "discrete"), {"decay": 1.0, "scale": 1.0},
                 "f(s)f(t) with f(t)=scale*exp(-decay*t); stable"),
    "diagonal": (("discrete",), {"p": 1.0},
                 "diag(i^-p); stable iff p > 1"),
    "matrix": (("discrete",), {},
               "explicit symmetric matrix (rows= or file=)"),
}

KEYS = {"family", "mode", "beta", "sigma", "p", "decay", "scale", "rows", "file"}
POSITIVE_PARAMS = {"beta", "sigma", "p", "decay"}


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """
    Declarative description of a kernel: a builtin family with its parameters,
    or an explicit symmetric matrix.
    """
    family: str
    params: dict = field(default_factory=dict)
    time_mode: str = "continuous"
    matrix: np.ndarray = None

    def describe(self):
        text = f"{self.family} ({self.time_mode})"
        if self.params:
            text += " " + " ".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        if self.matrix is not None:
            text += f" {self.matrix.shape[0]}x{self.matrix.shape[1]}"
        return text


def zoo():
    """Rows describing the builtin kernel families, for the `zoo` listing."""
    rows = []
    for family, (modes, defaults, description) in FAMILIES.items():
        rows.append({
            "family": family,
            "modes": "/".join(modes),
            "params": " ".join(f"{k}={v:g}" for k, v in defaults.items()) or "rows|file",
            "description": description,
        })
    return pd.DataFrame(rows, columns=["family", "modes", "params", "description"])


def _split_tokens(text):
    """Splits on whitespace outside brackets. Yields (column, token)."""
    depth = 0
    start = None
    for i, char in enumerate(text):
        if char.isspace() and depth == 0:
            if start is not None:
                yield start + 1, text[start:i]
                start = None
            continue
        if start is None:
            start = i
        if char == "[":
            depth += 1
        elif char == "]":
            depth -= 1
            if depth < 0:
                raise KernelSpecError("unbalanced ']'", column=i + 1)
    if depth != 0:
        raise KernelSpecError("unbalanced '['", column=len(text))
    if start is not None:
        yield start + 1, text[start:]


def _parse_pairs(text):
    pairs = {}
    for column, token in _split_tokens(text):
        if "=" not in token:
            raise KernelSpecError(f"expected key=value, got '{token}'", column=column)
        key, value = token.split("=", 1)
        key = key.strip().lower()
        if not key or not value:
            raise KernelSpecError(f"empty key or value in '{token}'", column=column)
        if key in pairs:
            raise KernelSpecError(f"duplicate key '{key}'", column=column)
        if key not in KEYS:
            raise KernelSpecError(f"unknown key '{key}'", column=column)
        pairs[key] = value
    return pairs


def _check_matrix(matrix):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise KernelSpecError(f"matrix must be square and non-empty, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise KernelSpecError("matrix has non-finite entries")
    if not np.array_equal(matrix, matrix.T):
        raise KernelSpecError("non-symmetric matrix")
    matrix = matrix.copy()
    matrix.setflags(write=False)
    return matrix


def _read_matrix_rows(value):
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as e:
            raise KernelSpecError(f"rows is not a valid nested array: {e.msg}")
    try:
        return np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise KernelSpecError("rows must be a nested array of numbers")


def _read_matrix_file(path, base_dir=None):
    path = Path(path)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.exists():
        raise KernelSpecError(f"matrix file not found: {path}")
    try:
        df = pd.read_csv(path, header=None)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise KernelSpecError(f"cannot read matrix file {path}: {e}")
    return df.to_numpy(dtype=float)


def _to_float(key, value):
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise KernelSpecError(f"parameter {key} must be a number, got '{value}'")
    if not np.isfinite(number):
        raise KernelSpecError(f"parameter {key} must be finite")
    if key in POSITIVE_PARAMS and number <= 0:
        raise KernelSpecError(f"parameter {key} must be > 0, got {number:g}")
    return number


def parse_spec(text, base_dir=None):
    """
    Parses a kernel specification, either whitespace-separated key=value tokens
    or a JSON object with the same keys.

    Args:
        text (str): Spec-file contents.
        base_dir (str or Path, optional): Directory used to resolve relative `file=` paths.

    Returns:
        KernelSpec: validated specification.
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise KernelSpecError(f"invalid JSON: {e.msg}", column=e.colno)
        if not isinstance(raw, dict):
            raise KernelSpecError("JSON spec must be an object")
        pairs = {str(k).lower(): v for k, v in raw.items()}
        unknown = sorted(set(pairs) - KEYS)
        if unknown:
            raise KernelSpecError(f"unknown key '{unknown[0]}'")
    else:
        pairs = _parse_pairs(stripped)

    family = str(pairs.pop("family", "")).lower()
    if family not in FAMILIES:
        raise KernelSpecError(f"unknown family '{family}' (expected one of {sorted(FAMILIES)})")
    modes, defaults, _ = FAMILIES[family]

    mode = str(pairs.pop("mode", modes[0])).lower()
    if mode not in ("continuous", "discrete"):
        raise KernelSpecError(f"mode must be continuous or discrete, got '{mode}'")
    if mode not in modes:
        raise KernelSpecError(f"family {family} only supports mode={modes[0]}")

    matrix = None
    if family == "matrix":
        if ("rows" in pairs) == ("file" in pairs):
            raise KernelSpecError("family matrix needs exactly one of rows= or file=")
        if "rows" in pairs:
            matrix = _read_matrix_rows(pairs.pop("rows"))
        else:
            matrix = _read_matrix_file(pairs.pop("file"), base_dir)
        matrix = _check_matrix(matrix)

    extra = sorted(set(pairs) - set(defaults))
    if extra:
        raise KernelSpecError(f"key '{extra[0]}' does not apply to family {family}")

    params = {key: _to_float(key, pairs.get(key, default)) for key, default in defaults.items()}
    return KernelSpec(family=family, params=params, time_mode=mode, matrix=matrix)


def load_spec(path):
    """Reads and parses a spec file; relative matrix files resolve next to it."""
    path = Path(path)
    if not path.exists():
        raise KernelSpecError(f"spec file not found: {path}")
    spec = parse_spec(path.read_text(), base_dir=path.parent)
    logging.info(f"Loaded kernel spec {spec.describe()} from {path}")
    return spec


class Kernel:
    """
    Base class for kernel evaluators. Calling the evaluator broadcasts over
    numpy arrays of times s and t.
    """
    family = None

    def __call__(self, s, t):
        return self.evaluate(np.asarray(s, dtype=float), np.asarray(t, dtype=float))

    def evaluate(self, s, t):
        raise NotImplementedError


class TCKernel(Kernel):
    """Tuned/correlated kernel, exp(-beta * max(s, t))."""
    family = "tc"

    def __init__(self, beta=1.0):
        self.beta = beta

    def evaluate(self, s, t):
        return np.exp(-self.beta * np.maximum(s, t))


class GaussianKernel(Kernel):
    """Gaussian kernel, exp(-(s - t)^2 / sigma^2)."""
    family = "gaussian"

    def __init__(self, sigma=1.0):
        self.sigma = sigma

    def evaluate(self, s, t):
        return np.exp(-((s - t) ** 2) / self.sigma ** 2)


class RankOneKernel(Kernel):
    """Rank-one kernel f(s) f(t) with f(t) = scale * exp(-decay * t)."""
    family = "rank_one"

    def __init__(self, decay=1.0, scale=1.0):
        self.decay = decay
        self.scale = scale

    def profile(self, t):
        return self.scale * np.exp(-self.decay * np.asarray(t, dtype=float))

    def evaluate(self, s, t):
        return self.profile(s) * self.profile(t)


EVALUATORS = {
    "tc": TCKernel,
    "gaussian": GaussianKernel,
    "rank_one": RankOneKernel,
}


def make_evaluator(spec):
    """Returns the pointwise evaluator K(s, t) for a builtin continuous family."""
    if spec.family not in EVALUATORS:
        raise KernelSpecError(f"family {spec.family} is discrete-only and has no evaluator")
    return EVALUATORS[spec.family](**spec.params)


def diagonal_entries(spec, n):
    """d_i = i^(-p) for i = 1..n, without building the matrix."""
    if spec.family != "diagonal":
        raise KernelSpecError(f"diagonal entries requested for family {spec.family}")
    if n < 1:
        raise ValueError(f"size must be >= 1, got {n}")
    return np.arange(1, n + 1, dtype=float) ** (-spec.params["p"])


def leading_block(spec, n):
    """n x n leading principal block of a discrete-time kernel."""
    if spec.time_mode != "discrete":
        raise KernelSpecError(f"{spec.family} spec is continuous; discretize it on a grid instead")
    if n < 1:
        raise ValueError(f"size must be >= 1, got {n}")
    if spec.family == "diagonal":
        return np.diag(diagonal_entries(spec, n))
    if spec.family == "matrix":
        size = spec.matrix.shape[0]
        if n > size:
            raise ValueError(f"requested block {n} exceeds matrix size {size}")
        return np.array(spec.matrix[:n, :n])
    index = np.arange(1, n + 1, dtype=float)
    return make_evaluator(spec)(index[:, None], index[None, :])


def make_matrix(spec, n):
    """
    The n x n truncation of a discrete-time kernel. Continuous families are
    sampled at integer arguments 1..n.
    """
    if spec.family == "matrix" and n != spec.matrix.shape[0]:
        raise ValueError(f"size mismatch: matrix is {spec.matrix.shape[0]}x{spec.matrix.shape[0]}, requested {n}")
    return leading_block(spec, n)
