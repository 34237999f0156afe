import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfill.errors import ConfigurationError, InputError
from gridfill.series import HighResSeries, interval_arrays
from gridfill.synthgen import (
    DAY,
    ApplianceSpec,
    ScenarioSpec,
    add_pv,
    generate_scenario,
    pv_profile,
    simulate_appliance,
    simulate_transformer,
)

BASE = ApplianceSpec(1.0, 1.0, 1.0, "baseload")


def test_baseload_only_has_small_hourly_range():
    s = simulate_transformer([BASE], 1, seed=1)
    avg, hi, lo = interval_arrays(s, 3600)
    assert np.all((hi - lo) / avg < 0.1)


def test_spec_cycling_example_one_week():
    ac = ApplianceSpec(3.0, 300.0, 600.0)
    s = simulate_transformer([BASE, ac], 7, seed=2)
    base = simulate_transformer([BASE], 7, seed=2)
    extra = s.values.mean() - base.values.mean()
    # renewal oracle: duty = 300 / 900; 7-day sampling sd of the mean is about 0.036 kW
    assert extra == pytest.approx(1.0, abs=0.15)


def test_duty_cycle_long_run_exact_case():
    spec = ApplianceSpec(3.0, 300.0, 600.0)
    x = simulate_appliance(spec, int(400 * DAY / 60), 60.0, 0.0, np.random.default_rng(5))
    assert x.mean() == pytest.approx(1.0, rel=0.02)


@settings(max_examples=15, derandomize=True)
@given(
    st.floats(0.1, 5.0),
    st.floats(30.0, 600.0),
    st.floats(30.0, 600.0),
    st.integers(0, 2**32 - 1),
)
def test_duty_cycle_property(p_on, mean_on, mean_off, seed):
    spec = ApplianceSpec(p_on, mean_on, mean_off)
    x = simulate_appliance(spec, int(400 * DAY / 60), 60.0, 0.0, np.random.default_rng(seed))
    expected = p_on * mean_on / (mean_on + mean_off)
    assert x.mean() == pytest.approx(expected, rel=0.02)


def test_simulated_load_is_piecewise_constant():
    s = simulate_transformer([ApplianceSpec(2.0, 120.0, 240.0)], 1, seed=0)
    assert set(np.unique(s.values)) <= {0.0, 2.0}
    jumps = np.count_nonzero(np.diff(s.values))
    assert 200 < jumps < 1000  # about 2 * 86400 / 360 switchings


def test_determinism_and_seed_sensitivity():
    apps = [BASE, ApplianceSpec(1.5, 100.0, 200.0, hours=(17.0, 2.0), day_jitter=0.3)]
    a = simulate_transformer(apps, 2, seed=11, noise_kw=0.01)
    b = simulate_transformer(apps, 2, seed=11, noise_kw=0.01)
    c = simulate_transformer(apps, 2, seed=12, noise_kw=0.01)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_hours_window_wraps_midnight():
    spec = ApplianceSpec(1.0, 1e6, 1e-3, hours=(22.0, 2.0))  # effectively always on
    x = simulate_appliance(spec, int(DAY), 1.0, 0.0, np.random.default_rng(0))
    tod = np.arange(int(DAY)) / 3600.0
    inside = (tod >= 22) | (tod < 2)
    assert np.all(x[~inside] == 0)
    assert x[inside].mean() > 0.99


def test_simulate_transformer_errors():
    with pytest.raises(InputError):
        simulate_transformer([], 1)
    with pytest.raises(ConfigurationError):
        simulate_transformer([BASE], 1, dt=120.0)
    with pytest.raises(InputError):
        ApplianceSpec(0.0, 1.0, 1.0)
    with pytest.raises(InputError):
        ApplianceSpec(1.0, 0.0, 1.0)


def test_pv_profile_shape():
    t = np.array([0.0, 6 * 3600.0, 12 * 3600.0, 18 * 3600.0, 23 * 3600.0])
    np.testing.assert_array_equal(pv_profile(t), [0.0, 0.0, 1.0, 0.0, 0.0])


def test_add_pv():
    hr = HighResSeries("T", 0.0, 1.0, np.full(int(DAY), 3.0))
    assert add_pv(hr, 0.0, 1) is hr
    out = add_pv(hr, 4.0, 1)
    assert out.values[0] == 3.0  # midnight
    noon = int(12 * 3600)
    assert 3.0 - 4.0 <= out.values[noon] < 3.0
    assert np.all(out.values >= 3.0 - 4.0 - 1e-12)
    assert out.values.min() < 0  # net load may go negative
    with pytest.raises(InputError):
        add_pv(hr, -1.0, 1)


def test_scenario_shape_and_reproducibility():
    spec = ScenarioSpec(n_teachers=2, n_students=1, customers_per_transformer=2, days=1, seed=4)
    a = generate_scenario(spec)
    b = generate_scenario(ScenarioSpec.from_dict(spec.to_dict()))
    assert [t.transformer_id for t in a.teachers] == ["T01", "T02"]
    assert [t.transformer_id for t in a.students] == ["S01"]
    assert [c.customer_id for c in a.students[0].customers] == ["S01_C01", "S01_C02"]
    for x, y in zip(a.teachers + a.students, b.teachers + b.students):
        assert x.highres == y.highres
        assert all(c == d for c, d in zip(x.customers, y.customers))
    s = a.students[0]
    # smart-meter readings are hourly averages; the transformer adds loss and noise
    sm = np.sum([c.values for c in s.customers], axis=0)
    avg, hi, lo = interval_arrays(s.highres, 3600)
    np.testing.assert_allclose(avg, sm * 1.02, atol=0.01)
    assert np.max(hi / avg) > 1.1


def test_scenario_pv_flags():
    spec = ScenarioSpec(n_teachers=1, n_students=1, customers_per_transformer=3, days=1, pv="students_only",
                        pv_share=1.0)
    sc = generate_scenario(spec)
    none = generate_scenario(ScenarioSpec(n_teachers=1, n_students=1, customers_per_transformer=3, days=1))
    assert sc.teachers[0].highres == none.teachers[0].highres
    noon = slice(11 * 3600, 13 * 3600)
    assert sc.students[0].highres.values[noon].mean() < none.students[0].highres.values[noon].mean() - 1.0


def test_scenario_validation():
    with pytest.raises(ConfigurationError):
        ScenarioSpec(n_teachers=0)
    with pytest.raises(ConfigurationError):
        ScenarioSpec(pv="sometimes")
    with pytest.raises(ConfigurationError):
        ScenarioSpec.from_dict({"bogus": 1})
