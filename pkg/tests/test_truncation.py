import numpy as np
import pytest

from src.kernel_operator import DiscreteOperator, SignPattern, build_grid
from src.kernels import parse_spec
from src.truncation import (StabilityAnalyzer, TruncationReport, classify, default_horizons, extend_sign,
                            fit_growth_models, truncation_norms)

DOUBLING = [5.0, 10.0, 20.0, 40.0]


def test_default_horizons():
    assert default_horizons(40.0, "continuous") == [5.0, 10.0, 20.0, 40.0]
    assert default_horizons(64, "discrete") == [8, 16, 32, 64]
    with pytest.raises(ValueError, match="too small"):
        default_horizons(2, "discrete")


def test_extend_sign_picks_better_constant_tail():
    matrix = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    grid = build_grid(3, mode="discrete")
    op = DiscreteOperator(matrix, grid)
    short = build_grid(2, mode="discrete")

    assert extend_sign(SignPattern([1.0, -1.0], short), grid, op).signs.tolist() == [1.0, -1.0, 1.0]
    assert extend_sign(SignPattern([-1.0, 1.0], short), grid, op).signs.tolist() == [-1.0, 1.0, -1.0]


def test_extend_sign_ties_go_to_plus():
    grid = build_grid(4, mode="discrete")
    op = DiscreteOperator(np.eye(4), grid)
    extended = extend_sign(SignPattern([1.0, -1.0], build_grid(2, mode="discrete")), grid, op)
    assert extended.signs.tolist() == [1.0, -1.0, 1.0, 1.0]


def test_extend_sign_needs_prefix_grid():
    grid = build_grid(2.0, 0.1)
    op = DiscreteOperator(np.eye(grid.n), grid)
    with pytest.raises(ValueError, match="prefix"):
        extend_sign(SignPattern.ones(build_grid(1.0, 0.05)), grid, op)


def test_gaussian_sequence_grows_linearly():
    report = truncation_norms(parse_spec("family=gaussian sigma=1"), DOUBLING, step=0.1, seed=20240607)
    a = np.array(report.a_values)
    ratios = a[2:] / a[1:-1]
    assert np.all((ratios >= 1.8) & (ratios <= 2.2))

    classification, fit = classify(report)
    assert classification == "unstable"
    assert fit.model == "polynomial"
    assert fit.params["q"] == pytest.approx(1.0, abs=0.1)
    assert report.verdict()["heuristic"] is True


def test_diagonal_square_summable_is_stable():
    spec = parse_spec("family=diagonal p=2")
    report = truncation_norms(spec, [1250, 2500, 5000, 10_000])
    assert report.a_values[-1] == pytest.approx(np.pi ** 2 / 6, rel=1e-3)
    classification, fit = classify(report)
    assert classification == "stable"
    assert fit.model == "bounded"


def test_harmonic_diagonal_grows_logarithmically():
    spec = parse_spec("family=diagonal p=1")
    report = truncation_norms(spec, [100, 1000, 10_000, 100_000])
    classification, fit = classify(report)
    assert classification == "unstable"
    assert fit.model == "logarithmic"
    assert fit.params["c1"] == pytest.approx(1.0, rel=0.01)


def test_tc_sequence_is_bounded():
    report = truncation_norms(parse_spec("family=tc"), DOUBLING, step=0.1, restarts=4, seed=1)
    assert report.a_values[-1] == pytest.approx(2.0, rel=0.02)
    classification, _ = classify(report)
    assert classification == "stable"


@pytest.mark.parametrize("text, horizons, step", [
    ("family=tc", [2.0, 4.0, 8.0], 0.1),
    ("family=gaussian sigma=0.5", [2.0, 4.0, 8.0], 0.1),
    ("family=rank_one decay=0.5", [2.0, 4.0, 8.0], 0.1),
    ("family=tc mode=discrete", [4, 8, 16], None),
    ("family=gaussian mode=discrete sigma=3", [4, 8, 16], None),
    ("family=diagonal p=1.5", [4, 8, 16], None),
    ("family=matrix rows=[[1,-2,0,1],[-2,3,1,0],[0,1,-1,2],[1,0,2,1]]", [1, 2, 4], None),
])
def test_sequence_is_nondecreasing_across_zoo(text, horizons, step):
    report = truncation_norms(parse_spec(text), horizons, step=step, restarts=4, seed=7)
    assert np.all(np.diff(report.a_values) >= 0)
    assert len(report.warm_starts) == len(horizons)
    assert report.to_frame().shape == (len(horizons), 5)


def test_matrix_family_has_no_tail_check():
    spec = parse_spec("family=matrix rows=[[2,1],[1,2]]")
    report = truncation_norms(spec, [1, 2], restarts=2, seed=0)
    assert report.tail_fractions == [None, None]
    assert report.a_values == [2.0, 6.0]


def test_slowly_decaying_kernel_raises_tail_warning():
    report = truncation_norms(parse_spec("family=rank_one decay=0.05"), [2.5, 5.0], step=0.1, restarts=2, seed=0)
    assert report.tail_warnings == [2.5, 5.0]
    assert report.verdict()["tail_warnings"] == [2.5, 5.0]


def test_fast_decaying_kernel_has_small_tail():
    report = truncation_norms(parse_spec("family=tc beta=2"), [10.0, 20.0], step=0.1, restarts=2, seed=0)
    assert report.tail_warnings == []


def test_horizons_must_increase():
    with pytest.raises(ValueError, match="strictly increasing"):
        truncation_norms(parse_spec("family=tc"), [4.0, 2.0], step=0.1)


def test_classify_needs_four_horizons():
    report = TruncationReport(mode="discrete", step=1.0, horizons=[1, 2, 3], a_values=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="at least 4"):
        classify(report)


def test_polynomial_fit_recovers_affine_growth():
    horizons = np.array([5.0, 10.0, 20.0, 40.0, 80.0])
    fits = fit_growth_models(horizons, 3.0 * horizons + 1.0)
    params, residual = fits["polynomial"]
    assert params["q"] == pytest.approx(1.0, abs=1e-3)
    assert params["c1"] == pytest.approx(3.0, rel=1e-2)
    assert residual < fits["logarithmic"][1]
    assert residual < fits["bounded"][1]


def test_tc_doubling_ratios_settle_near_one():
    report = truncation_norms(parse_spec("family=tc"), DOUBLING, step=0.1, restarts=4, seed=1)
    a = np.array(report.a_values)
    ratios = a[1:] / a[:-1]
    assert np.all((ratios >= 1.0) & (ratios <= 1.05))


def test_flat_sequence_is_stable():
    report = TruncationReport(mode="discrete", step=1.0, horizons=[1, 2, 3, 4], a_values=[1.0, 1.0, 1.0, 1.0])
    classification, fit = classify(report)
    assert classification == "stable"
    assert fit.model == "bounded"
    assert fit.params == {"a_inf": 1.0, "c": 0.0}
    assert all(np.isfinite(list(fit.residuals.values())))


def test_finite_matrix_is_stable():
    spec = parse_spec("family=matrix rows=[[1,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]]")
    report = truncation_norms(spec, [1, 2, 3, 4], restarts=2, seed=0)
    assert report.a_values == [1.0, 1.0, 1.0, 1.0]
    classification, fit = classify(report)
    assert classification == "stable"
    assert fit.model == "bounded"


def test_saturating_sequence_is_stable():
    report = TruncationReport(mode="continuous", step=0.1, horizons=DOUBLING, a_values=[1.0, 1.5, 1.75, 1.875])
    classification, fit = classify(report)
    assert classification == "stable"
    assert fit.model == "bounded"


def test_analyzer_runs_and_classifies():
    analyzer = StabilityAnalyzer(restarts=2, seed=0)
    report = analyzer.analyze(parse_spec("family=diagonal p=2"), [1250, 2500, 5000, 10_000])
    assert report.classification == "stable"
    assert report.verdict()["growth_model"] == "bounded"


def test_analyzer_validates_settings():
    with pytest.raises(ValueError, match="restarts"):
        StabilityAnalyzer(restarts=0)
    with pytest.raises(ValueError, match="at least 4"):
        StabilityAnalyzer().analyze(parse_spec("family=tc"), [1.0, 2.0, 4.0])
    assert StabilityAnalyzer.TIE_RATIO == 1.5 and StabilityAnalyzer.Q_BOUNDS == (0.5, 3.0)


def test_shrinking_fits_never_mean_unstable():
    report = TruncationReport(mode="continuous", step=0.1, horizons=DOUBLING, a_values=[4.0, 3.0, 2.0, 1.0])
    classification, fit = classify(report)
    assert classification == "stable"
    assert fit.model == "bounded"
