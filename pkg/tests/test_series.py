import math

import numpy as np
import pytest

from recordwalk.core import analytic
from recordwalk.core.analytic import DriftParams
from recordwalk.core.series import (IRWIN_HALL_EXACT_MAX, JumpFamily, PowerSeries, RecordSeries,
                                    first_passage_from_survival, gaussian_sign_probabilities,
                                    mean_record_series, record_number_distribution,
                                    record_number_distributions, record_rate_from_mean,
                                    resolve_pi_symmetric_variant, series_exp, series_inv, series_mul,
                                    sparre_andersen_survival, uniform_sign_probabilities,
                                    validate_pi_symmetric_variants)


def _series(*coeffs) -> PowerSeries:
    return PowerSeries(np.array(coeffs, dtype=float))


def test_power_series_is_read_only():
    a = _series(1, 2, 3)
    assert a.order == 2
    with pytest.raises(ValueError):
        a.coeffs[0] = 5.0


def test_series_mul_small_cases():
    assert series_mul(_series(1, 1, 0), _series(1, -1, 0)).coeffs.tolist() == [1, 0, -1]
    a = _series(0.3, 0.2, 0.5)
    assert series_mul(a, PowerSeries.identity(2)).coeffs.tolist() == a.coeffs.tolist()
    ones = PowerSeries(np.ones(5))
    assert series_mul(ones, ones).coeffs.tolist() == [1, 2, 3, 4, 5]


def test_series_mul_truncates_to_the_smaller_order():
    assert series_mul(PowerSeries(np.ones(6)), PowerSeries(np.ones(3))).order == 2


def test_series_inv_small_cases():
    assert series_inv(_series(1, -1, 0, 0)).coeffs.tolist() == [1, 1, 1, 1]
    assert series_inv(PowerSeries.identity(3)).coeffs.tolist() == [1, 0, 0, 0]


def test_series_inv_rejects_zero_constant_term():
    with pytest.raises(ValueError, match="non-invertible series"):
        series_inv(_series(0.0, 1.0))
    with pytest.raises(ValueError, match="non-invertible series"):
        series_inv(_series(1e-31, 1.0))


def test_series_inv_round_trip(rng):
    for _ in range(1000):
        order = int(rng.integers(1, 12))
        coeffs = rng.random(order + 1) * 0.5 ** np.arange(order + 1)
        coeffs[0] = 1.0
        a = PowerSeries(coeffs)
        inverse = series_inv(a)
        assert np.allclose(series_inv(inverse).coeffs, a.coeffs, atol=1e-10, rtol=0)
        assert np.allclose(series_mul(a, inverse).coeffs, PowerSeries.identity(order).coeffs,
                           atol=1e-12, rtol=0)


def test_series_exp_small_cases():
    e = series_exp(_series(0, 1, 0, 0, 0))
    assert np.allclose(e.coeffs, [1, 1, 1 / 2, 1 / 6, 1 / 24], atol=1e-15)
    assert series_exp(PowerSeries(np.zeros(4))).coeffs.tolist() == [1, 0, 0, 0]


def test_series_exp_of_the_symmetric_inner_series():
    n = np.arange(1, 31)
    inner = np.concatenate([[0.0], 1.0 / (2.0 * n)])
    result = series_exp(PowerSeries(inner))
    assert np.allclose(result.coeffs, analytic.record_rate_symmetric_table(30), atol=1e-14)


def test_series_exp_requires_zero_constant_term():
    with pytest.raises(ValueError):
        series_exp(_series(0.1, 1.0))


def test_sparre_andersen_small_cases():
    q = sparre_andersen_survival(np.full(3, 0.5))
    assert np.allclose(q.coeffs, [1, 0.5, 0.375, 0.3125], atol=1e-15)
    assert sparre_andersen_survival(np.zeros(4)).coeffs.tolist() == [1, 0, 0, 0, 0]
    assert np.allclose(sparre_andersen_survival(np.ones(6)).coeffs, np.ones(7), atol=1e-13)


def test_sparre_andersen_rejects_non_probabilities():
    with pytest.raises(ValueError, match=r"p\(2\)"):
        sparre_andersen_survival([0.5, 1.5, 0.5])


def test_symmetric_survival_matches_the_closed_form_to_two_thousand_steps():
    q = sparre_andersen_survival(np.full(2000, 0.5))
    closed = analytic.record_rate_symmetric_table(2000)
    assert np.max(np.abs(q.coeffs - closed)) <= 1e-10


def test_gaussian_sign_probabilities():
    params = DriftParams(c=0.3, sigma=1.5)
    plus = gaussian_sign_probabilities(params, "+", 50)
    minus = gaussian_sign_probabilities(params, "-", 50)
    assert np.allclose(plus + minus, 1.0, atol=1e-15)
    assert np.all(gaussian_sign_probabilities(DriftParams(), "+", 10) == 0.5)
    assert gaussian_sign_probabilities(params, "+", 0).size == 0


def test_uniform_sign_probabilities():
    assert np.all(uniform_sign_probabilities(DriftParams(), "-", 45) == 0.5)
    first = uniform_sign_probabilities(DriftParams(c=0.1), "-", 1)[0]
    assert first == pytest.approx(0.5 - 0.1 / (2 * math.sqrt(3.0)), abs=1e-12)
    params = DriftParams(c=0.05)
    values = uniform_sign_probabilities(params, "-", IRWIN_HALL_EXACT_MAX + 5)
    assert np.all(np.diff(values) < 0)
    # 厳密な Irwin–Hall 値と中心極限近似の継ぎ目での段差はガウスの一歩分に近い
    gaussian = gaussian_sign_probabilities(params, "-", IRWIN_HALL_EXACT_MAX + 1)
    seam = values[IRWIN_HALL_EXACT_MAX] - values[IRWIN_HALL_EXACT_MAX - 1]
    step = gaussian[IRWIN_HALL_EXACT_MAX] - gaussian[IRWIN_HALL_EXACT_MAX - 1]
    assert abs(seam - step) < 1e-3
    plus = uniform_sign_probabilities(DriftParams(c=0.05), "+", 10)
    assert np.allclose(plus + values[:10], 1.0, atol=1e-15)


def test_first_passage_small_cases():
    q = sparre_andersen_survival(np.full(3, 0.5))
    assert np.allclose(first_passage_from_survival(q).coeffs, [0, 0.5, 0.125, 0.0625], atol=1e-15)
    assert np.all(first_passage_from_survival(PowerSeries(np.ones(5))).coeffs == 0)


def test_first_passage_telescopes(rng):
    for _ in range(1000):
        order = int(rng.integers(1, 40))
        params = DriftParams(c=float(rng.normal(scale=0.5)), sigma=float(rng.uniform(0.5, 2.0)))
        q = sparre_andersen_survival(gaussian_sign_probabilities(params, "-", order))
        f = first_passage_from_survival(q)
        assert f.coeffs[0] == 0
        assert f.coeffs[1:].sum() == pytest.approx(1 - q.coeffs[-1], abs=1e-12)
        assert np.all(f.coeffs >= -1e-12)


def test_first_passage_requires_unit_start():
    with pytest.raises(ValueError):
        first_passage_from_survival(_series(0.5, 0.2))


def test_record_number_distribution_small_cases():
    bundle = RecordSeries.from_params(DriftParams(), order=10)
    assert np.array_equal(bundle.pi(1).coeffs, bundle.q_minus.coeffs)
    assert bundle.pi(2).coeffs[2] == pytest.approx(3 / 8, abs=1e-15)
    drifted = RecordSeries.from_params(DriftParams(c=0.1), order=10)
    total = sum(drifted.pi(m).coeffs[10] for m in range(1, 12))
    assert total == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        record_number_distribution(bundle.f_minus, bundle.q_minus, 0)


@pytest.mark.parametrize("c", [0.0, 0.01, 0.1, 1.0])
def test_record_number_normalization_and_first_moment(c):
    bundle = RecordSeries.from_params(DriftParams(c=c), order=200)
    table = record_number_distributions(bundle.f_minus, bundle.q_minus, 201)
    assert np.max(np.abs(table.sum(axis=0) - 1.0)) <= 1e-10
    first_moment = (np.arange(1, 202)[:, None] * table).sum(axis=0)
    assert np.max(np.abs(first_moment - bundle.mean_records.coeffs)) <= 1e-9


def test_mean_record_series_symmetric():
    q = sparre_andersen_survival(np.full(40, 0.5))
    mean = mean_record_series(q)
    assert np.allclose(mean.coeffs[:3], [1, 1.5, 1.875], atol=1e-14)
    expected = [analytic.mean_records_symmetric(n) for n in range(41)]
    assert np.allclose(mean.coeffs, expected, atol=1e-12)


@pytest.mark.parametrize("c", [0.0, 0.05, 0.5, 3.0])
def test_record_series_monotonicity(c):
    bundle = RecordSeries.from_params(DriftParams(c=c), order=300)
    assert bundle.mean_records.coeffs[0] == pytest.approx(1.0, abs=1e-15)
    assert np.all(np.diff(bundle.q_minus.coeffs) <= 1e-12)
    assert np.all(np.diff(bundle.q_plus.coeffs) <= 1e-12)
    assert np.all(np.diff(bundle.mean_records.coeffs) >= -1e-12)
    rate = bundle.record_rate.coeffs
    assert np.all((rate >= -1e-12) & (rate <= 1 + 1e-12))


def test_symmetric_record_rate_equals_survival():
    bundle = RecordSeries.from_params(DriftParams(), order=100)
    assert np.allclose(bundle.record_rate.coeffs, bundle.q_minus.coeffs, atol=1e-12)
    assert record_rate_from_mean(bundle.mean_records).coeffs[0] == 1.0


def test_large_drift_limit():
    bundle = RecordSeries.from_params(DriftParams(c=10.0), order=50)
    expected = analytic.asymptotic_rate_large(10.0)
    assert np.all(np.abs(bundle.record_rate.coeffs[10:] - expected) < 1e-3)


def test_order_zero_bundle():
    bundle = RecordSeries.from_params(DriftParams(c=0.2), order=0)
    assert bundle.order == 0
    assert bundle.mean_records.coeffs.tolist() == [1.0]


def test_uniform_bundle_is_a_valid_walk():
    bundle = RecordSeries.from_params(DriftParams(c=0.01), order=100, family=JumpFamily.UNIFORM)
    gaussian = RecordSeries.from_params(DriftParams(c=0.01), order=100)
    assert bundle.family is JumpFamily.UNIFORM
    # ジャンプ分布によらず記録率は同じ漸近形に近づく
    assert bundle.record_rate.coeffs[100] == pytest.approx(gaussian.record_rate.coeffs[100], rel=0.05)


def test_corrected_variant_matches_the_oracle():
    deviations = validate_pi_symmetric_variants(20)
    assert deviations["corrected"] <= 1e-12
    assert deviations["printed"] > 0.1
    assert resolve_pi_symmetric_variant(20) == "corrected"
