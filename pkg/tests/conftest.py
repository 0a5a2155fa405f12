import numpy as np
import pytest

from aoicorr.model import ProcessModel, SystemConfig, validate_config

OMEGA = np.array([[0.4, 0.6], [0.3, 0.7]])
FIXTURES = "tests/fixtures"


def make_config(
    sensor_rates=(2.0, 8.0),
    service_rate=4.0,
    correlation=((1.0, 0.5), (0.5, 1.0)),
    zetas=(4.0, 4.0),
    omegas=None,
):
    """Two-sensor two-process system in the default study setup."""
    correlation = np.atleast_2d(np.asarray(correlation, dtype=float))
    m = correlation.shape[1]
    if omegas is None:
        omegas = [OMEGA] * m
    processes = tuple(ProcessModel(om, z) for om, z in zip(omegas, zetas))
    return validate_config(
        SystemConfig(
            sensor_rates=np.asarray(sensor_rates, dtype=float),
            service_rate=service_rate,
            correlation=correlation,
            processes=processes,
        )
    )


def random_config(rng, n=None, m=None, k_choices=(2, 3, 4), allow_zero_corr=False):
    """Random valid system; dense Dirichlet rows keep every chain primitive."""
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 4))
    processes = []
    for _ in range(m):
        k = int(rng.choice(k_choices))
        omega = rng.dirichlet(np.full(k, 1.5), size=k)
        omega = np.clip(omega, 1e-9, None)
        omega /= omega.sum(axis=1, keepdims=True)
        processes.append(ProcessModel(omega, float(rng.uniform(0.1, 10.0))))
    lo = 0.0 if allow_zero_corr else 0.05
    correlation = rng.uniform(lo, 1.0, size=(n, m))
    return validate_config(
        SystemConfig(
            sensor_rates=rng.uniform(0.2, 10.0, size=n),
            service_rate=float(rng.uniform(0.5, 10.0)),
            correlation=correlation,
            processes=tuple(processes),
        )
    )


@pytest.fixture
def fig_config():
    return make_config()
