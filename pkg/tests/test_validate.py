import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from gridfill.series import HighResSeries
from gridfill.validate import (
    ValidationReport,
    baseline_wasserstein,
    interval_percentile_gaps,
    interval_wasserstein,
    percentile_compare,
    r_squared,
    validate,
    wasserstein1,
)
from oracles import w1_by_cdf

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_r_squared_examples():
    y = [1.0, 2.0, 3.0]
    assert r_squared(y, y) == 1.0
    assert r_squared(y, [2.0, 2.0, 2.0]) == 0.0
    assert r_squared(y, [1.0, 2.0, 4.0]) == 0.5


def test_r_squared_undefined():
    with pytest.warns(RuntimeWarning):
        assert math.isnan(r_squared([1.0, 1.0], [1.0, 2.0]))


@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=30), finite,
       st.floats(0.01, 100).flatmap(lambda c: st.sampled_from([c, -c])))
def test_r_squared_affine_invariance(pairs, shift, scale):
    y = np.array([p[0] for p in pairs])
    yhat = np.array([p[1] for p in pairs])
    assume(np.ptp(y) > 1e-3)
    base = r_squared(y, yhat)
    moved = r_squared((y + shift) * scale, (yhat + shift) * scale)
    assert moved == pytest.approx(base, rel=1e-6, abs=1e-6)
    assert base <= 1.0


def test_percentile_examples():
    a = np.arange(1.0, 101.0)
    rows = percentile_compare(a, a)
    assert all(r["abs_diff"] == 0 for r in rows)
    rows = percentile_compare(a, a + 1, [0, 25, 50, 90, 100])
    assert [r["abs_diff"] for r in rows] == pytest.approx([1.0] * 5)
    assert rows[0]["actual"] == 1.0 and rows[-1]["enriched"] == 101.0


def test_wasserstein_examples():
    assert wasserstein1([0, 0, 1, 1], [0, 1, 1, 1]) == 0.25
    assert wasserstein1([1, 2, 3], [3, 1, 2]) == 0.0
    assert wasserstein1([1.0, 5.0], [3.5, 7.5]) == pytest.approx(2.5)


@given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=1, max_size=40))
def test_wasserstein_matches_independent_oracles(a, b):
    w = wasserstein1(a, b)
    assert w == pytest.approx(wasserstein_distance(a, b), rel=1e-9, abs=1e-9)
    assert w == pytest.approx(w1_by_cdf(np.array(a), np.array(b)), rel=1e-9, abs=1e-9)


@given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=1, max_size=40))
def test_wasserstein_metric_properties(a, b):
    assert wasserstein1(a, b) >= 0
    assert wasserstein1(a, b) == pytest.approx(wasserstein1(b, a), rel=1e-12, abs=1e-12)
    assert wasserstein1(a, a) == 0
    if sorted(a) != sorted(b) and len(a) == len(b):
        assert wasserstein1(a, b) > 0


@given(st.lists(finite, min_size=1, max_size=40), st.floats(-100, 100))
def test_wasserstein_translation(a, c):
    assert wasserstein1(a, np.asarray(a) + c) == pytest.approx(abs(c), abs=1e-9)


def test_interval_metrics():
    a = np.r_[np.zeros(2), np.ones(2), np.full(4, 5.0)]
    e = np.r_[np.ones(4), np.full(4, 5.0)]
    np.testing.assert_allclose(interval_wasserstein(a, e, 4), [0.5, 0.0])
    np.testing.assert_allclose(baseline_wasserstein(a, 4), [0.5, 0.0])
    g = interval_percentile_gaps(a, e, 4, percentiles=(0, 50, 100))
    np.testing.assert_allclose(g, [[1.0, 0.5, 0.0], [0.0, 0.0, 0.0]])
    g = interval_percentile_gaps(a, a + 1, 4, percentiles=(50,))
    assert g[0, 0] == 1.0 and math.isinf(g[1, 0])


def test_interval_wasserstein_matches_scipy():
    rng = np.random.default_rng(0)
    a, e = rng.random(3 * 50), rng.random(3 * 50)
    w = interval_wasserstein(a, e, 50)
    for i in range(3):
        assert w[i] == pytest.approx(wasserstein_distance(a[i * 50:(i + 1) * 50], e[i * 50:(i + 1) * 50]))


def test_validate_report(tmp_path):
    rng = np.random.default_rng(1)
    a = HighResSeries("T", 0.0, 1.0, rng.random(7200) + np.repeat([1.0, 3.0], 3600))
    e = HighResSeries("T", 0.0, 1.0, rng.random(7200) + np.repeat([1.0, 3.0], 3600))
    block = a.values.reshape(2, 3600)
    rep = validate(a, e, 3600, bounds_max=block.max(axis=1), bounds_min=block.min(axis=1) + [0.0, 0.1])
    assert rep.r2_max == 1.0 and rep.r2_min < 1.0
    assert len(rep.wasserstein_per_hour) == 2 and all(w >= 0 for w in rep.wasserstein_per_hour)
    assert rep.fraction_beating_baseline == 1.0
    assert [r["percentile"] for r in rep.percentile_table] == [0, 1, 5, 10, 25, 50, 75, 90, 95, 99, 100]
    assert sum(rep.histogram_actual) == 7200 == sum(rep.histogram_enriched)
    json.dumps(rep.to_dict())
    rep.write_histogram_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_lo_kw,bin_hi_kw,actual_count,enriched_count" and len(lines) == 51


def test_validate_rejects_mismatched_dt():
    from gridfill.errors import InputError

    with pytest.raises(InputError):
        validate(HighResSeries("T", 0, 1.0, np.ones(10)), HighResSeries("T", 0, 2.0, np.ones(10)), 5)
    assert isinstance(ValidationReport(None, None, [], [], []).fraction_beating_baseline, float)
