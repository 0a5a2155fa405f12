import math

import numpy as np
import pytest

from aoicorr.aoi import INFINITE, aoi_result, average_aoi, interdeparture_moments, sum_aoi
from aoicorr.model import derive_rates

from conftest import make_config, random_config


def single_source_age(total_rate, service_rate):
    """Known zero-buffer single-source average age (independent oracle)."""
    lam, mu = total_rate, service_rate
    return (2 * lam**2 + 2 * lam * mu + mu**2) / (lam * mu * (lam + mu))


def informative_renewal_age(total_rate, service_rate, prob):
    """Alternate route: effective rate times informative inter-departure moments."""
    ey, ey2 = interdeparture_moments(total_rate, service_rate)
    ey_inf = ey / prob
    ey2_inf = ey2 / prob + 2 * ey**2 * (1 - prob) / prob**2
    eff = service_rate * (total_rate * prob) / (service_rate + total_rate)
    return eff * (ey2_inf / 2 + ey_inf / service_rate)


class TestInterdepartureMoments:
    def test_unit_rates(self):
        assert interdeparture_moments(1.0, 1.0) == (2.0, 6.0)

    def test_reference_rates(self):
        ey, ey2 = interdeparture_moments(10.0, 4.0)
        assert ey == pytest.approx(0.35, abs=1e-15)
        assert ey2 == pytest.approx(0.195, abs=1e-15)

    def test_server_limited_regime(self):
        ey, _ = interdeparture_moments(1e12, 4.0)
        assert ey == pytest.approx(0.25, rel=1e-11)

    def test_variance_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            lam, mu = rng.uniform(0.05, 50.0, size=2)
            ey, ey2 = interdeparture_moments(lam, mu)
            assert ey2 >= ey * ey

    def test_rejects_bad_rates(self):
        with pytest.raises(ValueError):
            interdeparture_moments(0.0, 1.0)


class TestAverageAoi:
    def test_single_source_unit_rates(self):
        cfg = make_config(sensor_rates=[1.0], service_rate=1.0, correlation=[[1.0]], zetas=[1.0])
        assert average_aoi(cfg, 0) == pytest.approx(2.5, abs=1e-14)

    def test_reference_point(self):
        # lam=[2,8], mu=4, column [1,0]: serving probability 0.2
        cfg = make_config(correlation=[[1.0, 0.5], [0.0, 1.0]])
        assert average_aoi(cfg, 0) == pytest.approx(13.5 / 7.0, rel=1e-14)

    def test_untracked_process_is_infinite(self):
        cfg = make_config(correlation=[[1.0, 0.0], [0.5, 0.0]])
        assert average_aoi(cfg, 1) == INFINITE
        assert math.isinf(sum_aoi(cfg))

    def test_single_source_reduction(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            lam, mu = rng.uniform(0.1, 30.0, size=2)
            cfg = make_config(sensor_rates=[lam], service_rate=mu, correlation=[[1.0]], zetas=[1.0])
            expected = single_source_age(lam, mu)
            assert average_aoi(cfg, 0) == pytest.approx(expected, rel=1e-12)

    def test_matches_informative_renewal_route(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            cfg = random_config(rng)
            rates = derive_rates(cfg)
            for j in range(cfg.num_processes):
                p = rates.informative_probs[j]
                if p <= 0:
                    continue
                expected = informative_renewal_age(rates.total_rate, cfg.service_rate, p)
                assert average_aoi(cfg, j) == pytest.approx(expected, rel=1e-12)

    def test_strictly_decreasing_in_serving_probability(self):
        grid = np.linspace(0.05, 1.0, 20)
        for lam_c, mu in [(1.0, 1.0), (10.0, 4.0), (3.0, 7.0)]:
            ages = []
            for p in grid:
                cfg = make_config(
                    sensor_rates=[lam_c * p, lam_c * (1 - p)] if p < 1 else [lam_c],
                    service_rate=mu,
                    correlation=[[1.0], [0.0]] if p < 1 else [[1.0]],
                    zetas=[1.0],
                )
                ages.append(average_aoi(cfg, 0))
            assert all(a > b for a, b in zip(ages, ages[1:]))

    def test_age_never_beats_service_time(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            cfg = random_config(rng)
            res = aoi_result(cfg)
            finite = res.per_process[np.isfinite(res.per_process)]
            assert np.all(finite >= 1.0 / cfg.service_rate)

    def test_column_locality(self):
        base = make_config(correlation=[[1.0, 0.5], [0.25, 1.0]])
        bumped = make_config(correlation=[[1.0, 0.9], [0.25, 0.1]])
        assert average_aoi(base, 0) == average_aoi(bumped, 0)

    def test_independent_of_process_dynamics(self):
        # ages depend on rates and correlation only, never on zeta or omega
        slow = make_config(zetas=[0.01, 4.0])
        fast = make_config(zetas=[500.0, 4.0])
        other = make_config(
            zetas=[4.0, 4.0],
            omegas=[np.array([[0.9, 0.1], [0.2, 0.8]]), np.array([[0.4, 0.6], [0.3, 0.7]])],
        )
        ref = make_config()
        for j in range(2):
            assert average_aoi(slow, j) == average_aoi(ref, j)
            assert average_aoi(fast, j) == average_aoi(ref, j)
            assert average_aoi(other, j) == average_aoi(ref, j)

    def test_index_out_of_range(self, fig_config):
        with pytest.raises(IndexError):
            average_aoi(fig_config, 2)


class TestSumAoi:
    def test_single_process_equals_average(self):
        cfg = make_config(sensor_rates=[1.5], service_rate=2.0, correlation=[[0.7]], zetas=[1.0])
        assert sum_aoi(cfg) == average_aoi(cfg, 0)

    def test_symmetric_processes_double(self):
        cfg = make_config(correlation=[[0.6, 0.6], [0.3, 0.3]])
        assert sum_aoi(cfg) == pytest.approx(2 * average_aoi(cfg, 0), rel=1e-15)

    def test_two_process_reference(self):
        cfg = make_config(correlation=[[1.0, 0.0], [0.0, 1.0]])
        expected = average_aoi(cfg, 0) + average_aoi(cfg, 1)
        assert sum_aoi(cfg) == pytest.approx(expected, rel=1e-15)
        rates = derive_rates(cfg)
        assert np.allclose(rates.informative_probs, [0.2, 0.8])

    def test_sum_matches_result_total(self):
        rng = np.random.default_rng(59)
        for _ in range(20):
            cfg = random_config(rng)
            res = aoi_result(cfg)
            if np.all(np.isfinite(res.per_process)):
                assert res.total == pytest.approx(res.per_process.sum(), rel=1e-15)
