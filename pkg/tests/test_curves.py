import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import PchipInterpolator

from vcmlab.errors import DataError, NoOverlapError
from vcmlab.evaluation import RDCurve, RDPoint, bd_quality, bd_rate, bd_report


def curve(name, bpps, values, metric="miou"):
    return RDCurve(name, [RDPoint(bpp=b, task_metrics={metric: v}, model_id=f"{name}{i}")
                          for i, (b, v) in enumerate(zip(bpps, values))])


ANCHOR = curve("a", [0.1, 0.2, 0.4, 0.8], [0.50, 0.58, 0.64, 0.68])


def shifted(c, dq=0.0, rate=1.0, name="t"):
    return curve(name, [p.bpp * rate for p in c.points], [p.task_metrics["miou"] + dq for p in c.points])


def test_identical_curves_have_zero_deltas():
    assert bd_quality(ANCHOR, ANCHOR, "miou") == 0.0
    assert bd_rate(ANCHOR, ANCHOR, "miou") == 0.0


def test_constant_offset_is_one_pp():
    assert bd_quality(ANCHOR, shifted(ANCHOR, dq=0.01), "miou") == pytest.approx(1.0, abs=1e-9)


def test_rate_scaling():
    assert bd_rate(ANCHOR, shifted(ANCHOR, rate=2.0), "miou") == pytest.approx(100.0, abs=1e-9)
    assert bd_rate(ANCHOR, shifted(ANCHOR, rate=0.5), "miou") == pytest.approx(-50.0, abs=1e-9)


def test_better_curve_gets_negative_rate_and_positive_quality():
    better = shifted(ANCHOR, dq=0.02)
    assert bd_rate(ANCHOR, better, "miou") < 0
    assert bd_quality(ANCHOR, better, "miou") > 0


def test_bd_quality_matches_trapezoid_oracle():
    test = curve("t", [0.12, 0.25, 0.5, 1.0], [0.49, 0.60, 0.67, 0.70])
    xa, xt = np.log2(ANCHOR.rates()), np.log2(test.rates())
    fa = PchipInterpolator(xa, 100 * ANCHOR.values("miou"))
    ft = PchipInterpolator(xt, 100 * test.values("miou"))
    grid = np.linspace(max(xa[0], xt[0]), min(xa[-1], xt[-1]), 200_001)
    oracle = np.trapezoid(ft(grid) - fa(grid), grid) / (grid[-1] - grid[0])
    assert bd_quality(ANCHOR, test, "miou") == pytest.approx(oracle, abs=0.01)


@st.composite
def smooth_curves(draw):
    lo = draw(st.floats(0.02, 0.2))
    ratio = draw(st.floats(1.5, 2.5))
    bpps = lo * ratio ** np.arange(4)
    a, b = draw(st.floats(0.3, 0.6)), draw(st.floats(0.02, 0.1))
    return bpps, a + b * np.log2(bpps / lo)


@given(smooth_curves(), smooth_curves())
@settings(max_examples=50, deadline=None)
def test_antisymmetry_on_smooth_curves(c1, c2):
    a, b = curve("a", *c1), curve("b", *c2)
    try:
        forward = bd_quality(a, b, "miou")
    except NoOverlapError:
        return
    assert forward == pytest.approx(-bd_quality(b, a, "miou"), abs=0.05)
    assert bd_quality(a, a, "miou") == 0.0 and bd_rate(a, a, "miou") == 0.0


def test_no_overlap():
    far = shifted(ANCHOR, rate=100.0)
    with pytest.raises(NoOverlapError):
        bd_quality(ANCHOR, far, "miou")
    with pytest.raises(NoOverlapError):
        bd_rate(ANCHOR, curve("t", [1, 2], [0.9, 0.95]), "miou")
    rep = bd_report(ANCHOR, far, "miou")
    assert rep.bd_quality is None and rep.overlap is None and "no overlap" in rep.error


def test_curve_invariants():
    with pytest.raises(DataError):
        curve("d", [0.1, 0.1], [0.5, 0.6])
    c = curve("s", [0.4, 0.1, 0.2], [0.6, 0.4, 0.5])
    assert list(c.rates()) == [0.1, 0.2, 0.4]
    with pytest.raises(DataError):
        bd_quality(curve("one", [0.1], [0.5]), ANCHOR, "miou")


def test_curve_file_round_trip(tmp_path):
    path = ANCHOR.save(tmp_path / "anchor.jsonl")
    assert RDCurve.load(path) == ANCHOR


def test_psnr_infinite_points_are_excluded_from_fitting():
    pts = [RDPoint(bpp=b, psnr_db=v) for b, v in [(0.1, 30.0), (0.2, 33.0), (0.4, 36.0), (8.0, float("inf"))]]
    test = RDCurve("t", [RDPoint(bpp=p.bpp, psnr_db=p.psnr_db + 1) for p in pts])
    assert bd_quality(RDCurve("a", pts), test, "psnr_db") == pytest.approx(1.0)
