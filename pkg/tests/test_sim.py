import numpy as np
import pytest

import aoicorr.sim as sim_mod
from aoicorr import _kernels
from aoicorr.aoi import average_aoi, interdeparture_moments
from aoicorr.error import error_ratio
from aoicorr.model import derive_rates
from aoicorr.sim import SimParams, replicate, run_simulation

from conftest import make_config, random_config


def metrics_equal(a, b):
    return (
        np.array_equal(a.aoi_mean, b.aoi_mean)
        and np.array_equal(a.error_ratio, b.error_ratio)
        and np.array_equal(a.informative_departures, b.informative_departures)
        and (a.arrivals, a.drops, a.departures, a.in_flight)
        == (b.arrivals, b.drops, b.departures, b.in_flight)
        and a.interdeparture_mean == b.interdeparture_mean
        and a.interdeparture_second_moment == b.interdeparture_second_moment
    )


class TestParams:
    def test_buffer_capacity_checked(self):
        with pytest.raises(ValueError):
            SimParams(horizon=10.0, seed=1, buffer_capacity=2)

    def test_warmup_bounds_checked(self):
        with pytest.raises(ValueError):
            SimParams(horizon=10.0, seed=1, warmup=10.0)
        with pytest.raises(ValueError):
            SimParams(horizon=10.0, seed=1, warmup=-1.0)

    def test_default_warmup_is_one_percent(self):
        assert SimParams(horizon=1000.0, seed=1).warmup == 10.0


class TestDeterminism:
    def test_same_seed_bit_identical(self, fig_config):
        params = SimParams(horizon=5e3, seed=77)
        a = run_simulation(fig_config, params)
        b = run_simulation(fig_config, params)
        assert metrics_equal(a, b)

    def test_different_seeds_differ(self, fig_config):
        a = run_simulation(fig_config, SimParams(horizon=5e3, seed=1))
        b = run_simulation(fig_config, SimParams(horizon=5e3, seed=2))
        assert not np.array_equal(a.aoi_mean, b.aoi_mean)

    def test_lanes_agree_exactly(self, fig_config):
        # compiled and pure-Python kernels must produce identical streams
        params = SimParams(horizon=2e3, seed=123)
        a = run_simulation(fig_config, params, collect_occupancy=True, log_events=True)
        old = sim_mod._USE_NUMBA
        sim_mod._USE_NUMBA = False
        try:
            b = run_simulation(fig_config, params, collect_occupancy=True, log_events=True)
        finally:
            sim_mod._USE_NUMBA = old
        assert metrics_equal(a, b)
        assert np.array_equal(a.occupancy, b.occupancy)
        assert np.array_equal(a.events.time, b.events.time)
        assert np.array_equal(a.events.carry_mask, b.events.carry_mask)


class TestAgainstClosedForms:
    def test_single_source_age(self):
        cfg = make_config(sensor_rates=[1.0], service_rate=1.0, correlation=[[1.0]], zetas=[1.0])
        m = run_simulation(cfg, SimParams(horizon=2e5, seed=5))
        assert m.aoi_mean[0] == pytest.approx(2.5, rel=0.02)

    def test_reference_grid_ages(self, fig_config):
        m = run_simulation(fig_config, SimParams(horizon=2e5, seed=31))
        for j in range(2):
            assert m.aoi_mean[j] == pytest.approx(average_aoi(fig_config, j), rel=0.03)

    def test_empirical_interdeparture_moments(self, fig_config):
        m = run_simulation(fig_config, SimParams(horizon=2e5, seed=11))
        ey, ey2 = interdeparture_moments(10.0, 4.0)
        assert m.interdeparture_mean == pytest.approx(ey, rel=0.02)
        assert m.interdeparture_second_moment == pytest.approx(ey2, rel=0.02)

    def test_informative_departure_fraction(self, fig_config):
        m = run_simulation(fig_config, SimParams(horizon=2e5, seed=13))
        frac = m.informative_departures / m.departures
        probs = derive_rates(fig_config).informative_probs
        assert np.allclose(frac, probs, atol=0.01)

    def test_mixed_state_space_sizes(self):
        # processes with different K share one padded kernel layout
        rng = np.random.default_rng(3)
        omega4 = rng.dirichlet(np.full(4, 2.0), size=4)
        omega2 = np.array([[0.2, 0.8], [0.5, 0.5]])
        cfg = make_config(
            sensor_rates=[3.0, 5.0],
            service_rate=4.0,
            correlation=[[0.9, 0.4], [0.3, 0.8]],
            zetas=[2.0, 6.0],
            omegas=[omega4, omega2],
        )
        m = run_simulation(cfg, SimParams(horizon=3e5, seed=404))
        for j in range(2):
            assert m.aoi_mean[j] == pytest.approx(average_aoi(cfg, j), rel=0.03)
            assert abs(m.error_ratio[j] - error_ratio(cfg, j).ratio) < 0.01


class TestCounts:
    def test_arrival_balance(self):
        rng = np.random.default_rng(8)
        for trial in range(5):
            cfg = random_config(rng)
            for buffer_capacity in (0, 1):
                m = run_simulation(
                    cfg, SimParams(horizon=500.0, seed=trial, buffer_capacity=buffer_capacity)
                )
                assert m.arrivals == m.drops + m.departures + m.in_flight

    def test_buffer_reduces_drops(self, fig_config):
        zero = run_simulation(fig_config, SimParams(horizon=2e4, seed=3, buffer_capacity=0))
        one = run_simulation(fig_config, SimParams(horizon=2e4, seed=3, buffer_capacity=1))
        assert one.drops < zero.drops
        assert one.departures > zero.departures


class TestEventLog:
    def test_carried_values_are_generation_time_states(self, fig_config):
        m = run_simulation(fig_config, SimParams(horizon=2e3, seed=55), log_events=True)
        ev = m.events
        served_arrival = None
        for n in range(ev.time.shape[0]):
            kind = int(ev.kind[n])
            if kind == _kernels.EV_ARRIVAL:
                served_arrival = n
            elif kind == _kernels.EV_DEPARTURE:
                assert served_arrival is not None
                mask = int(ev.carry_mask[served_arrival])
                for j in range(2):
                    if mask & (1 << j):
                        # monitor takes the state sampled when the packet was generated
                        assert ev.y[n, j] == ev.x[served_arrival, j]
        assert served_arrival is not None

    def test_monitor_changes_only_at_informative_departures(self, fig_config):
        m = run_simulation(fig_config, SimParams(horizon=2e3, seed=56), log_events=True)
        ev = m.events
        for n in range(1, ev.time.shape[0]):
            if int(ev.kind[n]) != _kernels.EV_DEPARTURE:
                assert np.array_equal(ev.y[n], ev.y[n - 1])

    def test_csv_schema(self, fig_config, tmp_path):
        m = run_simulation(fig_config, SimParams(horizon=50.0, seed=1), log_events=True)
        path = tmp_path / "events.csv"
        m.events.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "time,event_type,sensor,process,x,y,z"
        assert len(lines) == 1 + 2 * ev_count(m)


def ev_count(metrics):
    return metrics.events.time.shape[0]


class TestReplicate:
    def test_single_rep_matches_run(self, fig_config):
        params = SimParams(horizon=5e3, seed=21)
        single = run_simulation(fig_config, params)
        agg = replicate(fig_config, params, 1)
        assert np.array_equal(agg.aoi_mean, single.aoi_mean)
        assert np.array_equal(agg.error_ratio, single.error_ratio)
        assert np.all(agg.aoi_se == 0.0)

    def test_reps_validated(self, fig_config):
        with pytest.raises(ValueError):
            replicate(fig_config, SimParams(horizon=10.0, seed=1), 0)

    def test_aggregation_order_independent(self, fig_config, monkeypatch):
        params = SimParams(horizon=2e3, seed=9)
        agg = replicate(fig_config, params, 6)
        monkeypatch.setenv("AOI_CORR_THREADS", "1")
        serial = replicate(fig_config, params, 6)
        assert np.array_equal(agg.aoi_mean, serial.aoi_mean)
        assert np.array_equal(agg.aoi_se, serial.aoi_se)
        # replication r is a fixed stream: reversing execution order changes nothing
        for r, run in enumerate(serial.replicates):
            again = sim_mod._run_one(
                fig_config, params, r, False, False, sim_mod._pack_processes(fig_config)
            )
            assert np.array_equal(run.aoi_mean, again.aoi_mean)

    def test_standard_errors_shrink(self, fig_config):
        params = SimParams(horizon=5e3, seed=33)
        few = replicate(fig_config, params, 4)
        many = replicate(fig_config, params, 16)
        assert np.all(many.aoi_se < few.aoi_se * 1.5)
        assert many.n_reps == 16

    def test_error_se_small_on_reference_grid(self, fig_config):
        agg = replicate(fig_config, SimParams(horizon=1e5, seed=2), 16)
        assert np.all(agg.error_se < 0.003)
