import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridfill.errors import ConfigurationError, InputError
from gridfill.series import (
    CustomerSeries,
    HighResSeries,
    LowResSeries,
    aggregate_customers,
    interval_arrays,
    read_customer_csv,
    read_highres_csv,
    segment_and_aggregate,
    sniff_csv_kind,
    write_customer_csv,
    write_series_csv,
)


def hr(values, dt=1.0, t0=0.0, tid="T1"):
    return HighResSeries(tid, t0, dt, values)


def test_constant_hour():
    (s,) = segment_and_aggregate(hr(np.full(3600, 2.0)), 3600)
    assert (s.p_avg, s.p_max, s.p_min, s.n_samples) == (2.0, 2.0, 2.0, 3600)


def test_hand_computed_interval():
    (s,) = segment_and_aggregate(hr([1, 2, 3, 6]), 4)
    assert (s.p_avg, s.p_max, s.p_min) == (3.0, 6.0, 1.0)
    assert s.t == 1


def test_trailing_partial_interval_dropped():
    stats = segment_and_aggregate(hr(np.arange(10.0)), 4)
    assert len(stats) == 2
    assert stats[1].p_max == 7.0


def test_non_divisible_dt():
    with pytest.raises(ConfigurationError):
        segment_and_aggregate(hr(np.ones(10), dt=7.0), 3600)


def test_empty_and_short_series():
    with pytest.raises(InputError):
        segment_and_aggregate(hr([]), 4)
    with pytest.raises(InputError):
        segment_and_aggregate(hr([1.0, 2.0]), 4)


def test_non_finite_rejected():
    with pytest.raises(InputError):
        hr([1.0, np.nan])


def test_values_are_read_only():
    s = hr([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 5.0


@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=4, max_size=64),
    st.floats(-100, 100, allow_nan=False),
)
def test_interval_invariants(vals, c):
    n_prime = 4
    s = hr(vals)
    stats = segment_and_aggregate(s, n_prime)
    shifted = segment_and_aggregate(hr(np.asarray(vals) + c), n_prime)
    for i, (a, b) in enumerate(zip(stats, shifted)):
        block = np.asarray(vals[i * n_prime:(i + 1) * n_prime])
        assert a.p_min <= a.p_avg <= a.p_max
        assert a.p_avg == pytest.approx(block.mean(), rel=1e-9, abs=1e-12)
        # extrema shift sample by sample; the mean up to rounding of the sum
        assert b.p_max == (block + c).max()
        assert b.p_min == (block + c).min()
        assert b.p_avg == pytest.approx(a.p_avg + c, abs=1e-9)


def test_interval_arrays_match_list_form():
    rng = np.random.default_rng(3)
    s = hr(rng.random(40))
    avg, hi, lo = interval_arrays(s, 8)
    stats = segment_and_aggregate(s, 8)
    assert avg.tolist() == [x.p_avg for x in stats]
    assert hi.tolist() == [x.p_max for x in stats]
    assert lo.tolist() == [x.p_min for x in stats]


def cust(cid, vals, t0=0.0, dt=3600.0):
    return CustomerSeries(cid, "T1", t0, dt, vals)


def test_aggregate_customers_arithmetic():
    a, b = cust("a", [1, 1]), cust("b", [2, 2])
    assert aggregate_customers([a, b], 0.0).values.tolist() == [3.0, 3.0]
    np.testing.assert_allclose(aggregate_customers([a, b], 0.02).values, [3.06, 3.06], rtol=1e-12)
    assert aggregate_customers([a], 0.0).values.tolist() == [1.0, 1.0]


def test_aggregate_customers_errors():
    with pytest.raises(InputError):
        aggregate_customers([cust("a", [1, 1]), cust("b", [1, 1], t0=3600.0)], 0.0)
    with pytest.raises(InputError):
        aggregate_customers([cust("a", [1, 1]), cust("b", [1, 1, 1])], 0.0)
    with pytest.raises(ConfigurationError):
        aggregate_customers([cust("a", [1, 1])], 0.2)
    with pytest.raises(InputError):
        aggregate_customers([], 0.0)


def test_highres_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = hr(rng.normal(3, 1, 3600), t0=1.6e9)
    b = hr(rng.normal(1, 1, 3600), t0=1.6e9, tid="T2")
    path = tmp_path / "hr.csv"
    write_series_csv(path, [a, b])
    back = read_highres_csv(path)
    assert [s.transformer_id for s in back] == ["T1", "T2"]
    assert back[0] == a and back[1] == b
    assert len(back[0]) == 3600
    assert sniff_csv_kind(path) == "transformer"


def test_lowres_written_like_highres(tmp_path):
    low = LowResSeries("T9", 0.0, 3600.0, [1.5, 2.5, 3.5])
    path = tmp_path / "low.csv"
    write_series_csv(path, [low])
    (back,) = read_highres_csv(path)
    assert back.dt == 3600.0 and back.values.tolist() == [1.5, 2.5, 3.5]


def test_customer_round_trip_converts_energy(tmp_path):
    c = CustomerSeries("c1", "T1", 0.0, 900.0, [4.0, 2.0, 1.0])
    path = tmp_path / "c.csv"
    write_customer_csv(path, [c])
    text = path.read_text().splitlines()
    assert text[1] == "0,c1,T1,1.0"  # 4 kW over 15 minutes
    (back,) = read_customer_csv(path)
    np.testing.assert_allclose(back.values, c.values, atol=1e-9)
    assert sniff_csv_kind(path) == "customer"


def test_gap_is_named(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("timestamp_s,transformer_id,p_kw\n0,T1,1\n1,T1,1\n2,T1,1\n4,T1,1\n")
    with pytest.raises(InputError, match=r":5: gap in timestamps for T1: expected 3, found 4"):
        read_highres_csv(path)


def test_out_of_order_rejected(tmp_path):
    path = tmp_path / "ooo.csv"
    path.write_text("timestamp_s,transformer_id,p_kw\n0,T1,1\n2,T1,1\n1,T1,1\n")
    with pytest.raises(InputError, match="not strictly increasing"):
        read_highres_csv(path)


def test_malformed_row_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp_s,transformer_id,p_kw\n0,T1,1\n1,T1,abc\n")
    with pytest.raises(InputError, match=r"bad.csv:3: cannot parse p_kw"):
        read_highres_csv(path)
    path.write_text("wrong,header\n")
    with pytest.raises(InputError, match="expected header"):
        read_highres_csv(path)
