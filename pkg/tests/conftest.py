import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LW_LINKAGES = ["average", "weighted", "ward", "centroid", "median"]
EXACT_LINKAGES = LW_LINKAGES + ["single"]


def random_instance(rng, linkage, n_range=(8, 20), qs=(2, 5), ks=(2, 3)):
    """Gaussian data, its clustering and a random pair of final clusters."""
    from selclust import run_agglomerative

    n = int(rng.integers(n_range[0], n_range[1] + 1))
    q = int(rng.choice(qs))
    k = int(rng.choice(ks))
    x = rng.standard_normal((n, q))
    history = run_agglomerative(x, linkage, k)
    clusters = history.final_clusters
    i, j = sorted(rng.choice(k, size=2, replace=False))
    return x, history, (clusters[i], clusters[j])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def record_criterion(label, passed, detail):
    line = f"criterion {label}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
