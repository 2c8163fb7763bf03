"""Shared fixtures: one reference benchmark per test session.

Building the 779-run benchmark takes a couple of seconds, so it is
generated once into a session temp directory and shared by every test
that needs curated data. Tests that need fresh, never-curated runs
simulate their own with seeds far away from the benchmark's streams.
"""

import pytest

from rftlab.curate import curate_benchmark, default_plan, load_benchmark
from rftlab.detection import calibrate, compute_threshold


@pytest.fixture(scope="session")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    curate_benchmark(default_plan(), out)
    return out


@pytest.fixture(scope="session")
def benchmark(bench_dir):
    return load_benchmark(bench_dir)


@pytest.fixture(scope="session")
def bench_runs(benchmark):
    return benchmark[1]


@pytest.fixture(scope="session")
def bench_manifest(benchmark):
    return benchmark[0]


@pytest.fixture(scope="session")
def normal_runs(bench_runs):
    return [r for r in bench_runs if r.label.is_normal]


@pytest.fixture(scope="session")
def fault_runs(bench_runs):
    return [r for r in bench_runs if not r.label.is_normal]


@pytest.fixture(scope="session")
def profile20(normal_runs):
    return calibrate(normal_runs, 20)


@pytest.fixture(scope="session")
def tau20(profile20, normal_runs):
    return compute_threshold(profile20, normal_runs, horizon=20)
