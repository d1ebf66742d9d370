from __future__ import annotations

import math

import numpy as np
import pytest

from mringlab.errors import DomainError
from mringlab.expansion import (
    ExperimentConfig,
    coverage_experiment,
    diagonal_table,
    image_set,
    image_size,
    mixing_sum_bound,
    predicted_bound,
    run_experiment,
    sample_subset,
    sharpness_check,
    threshold_sweep,
    trial_rng,
)
from mringlab.graphs import GraphSpec, build_graph
from mringlab.matrix import enumerate_tables
from mringlab.spectral import second_eigenvalue


def test_sample_subset():
    T = enumerate_tables(3)
    assert np.array_equal(np.sort(sample_subset(T.sl2, 24, trial_rng(1, 0))), T.sl2)
    a = sample_subset(T.all, 30, trial_rng(42, 3))
    b = sample_subset(T.all, 30, trial_rng(42, 3))
    assert np.array_equal(a, b) and len(set(a)) == 30
    small = sample_subset(T.all, 10, trial_rng(42, 3))
    assert np.array_equal(small, a[:10])
    with pytest.raises(DomainError):
        sample_subset(T.sl2, 25, trial_rng(0, 0))


def test_image_examples():
    T = enumerate_tables(2)
    assert image_size(2, "sum", T.all, T.all) == 16
    assert image_size(2, "product", np.array([0]), T.sl2) == 1
    assert image_size(2, "x_plus_yz", T.sl2, T.sl2, T.sl2) == 16
    plus, times = image_set(2, "sumproduct_max", T.sl2)
    assert image_size(2, "sumproduct_max", T.sl2) == max(len(plus), len(times))
    with pytest.raises(DomainError):
        image_size(2, "sum", T.all)
    with pytest.raises(DomainError):
        image_size(2, "power", T.all)


def test_image_simple_invariants():
    T = enumerate_tables(5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        A = rng.choice(T.sl2, 7, replace=False)
        B = rng.choice(T.all, 9, replace=False)
        assert image_size(5, "sum", A, B) <= len(A) * len(B)
        C = rng.choice(T.sl2, 40, replace=False)
        assert image_size(5, "product", C, C) <= 5**3 - 5
        assert np.isin(image_set(5, "product", C, C), T.sl2).all()


def test_predicted_bounds():
    assert predicted_bound("product", [60, 60], 5) == 125
    assert predicted_bound("sum", [5, 0], 3) == 0
    assert predicted_bound("sumproduct", [27], 3) == pytest.approx(27**2 / 3**3.5)
    assert predicted_bound("sumproduct", [27], 3) == pytest.approx(15.588, abs=1e-3)
    assert predicted_bound("triple", [81, 81, 81], 3) == 81
    assert predicted_bound("sum_eps", [8], 3, eps=0.5) == pytest.approx(8 ** (4 / 3))
    with pytest.raises(DomainError):
        predicted_bound("nonsense", [1], 3)
    with pytest.raises(DomainError):
        predicted_bound("sum_eps", [1], 3)


def test_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(3, "sum", ("SL2",), (5,))
    with pytest.raises(DomainError):
        ExperimentConfig(3, "sum", ("SL2", "M2"), (25, 5))
    with pytest.raises(DomainError):
        ExperimentConfig(3, "sum", ("SL2", "XX"), (2, 5))
    with pytest.raises(DomainError):
        ExperimentConfig(3, "sum", ("SL2", "M2"), (2, 5), trials=0)
    cfg = ExperimentConfig(3, "x_plus_yz", ("SL2",), (2.5,), variables="AAA")
    assert cfg.absolute_sizes() == (16,)


def test_run_experiment_record():
    cfg = ExperimentConfig(3, "product", ("SL2", "SL2"), (10, 10), trials=4, seed=9)
    rec = run_experiment(cfg)
    assert rec.theorem == "product" and rec.predicted_bound == min(27, 100 / 9)
    assert len(rec.images) == 4 and all(i <= 81 for i in rec.images)
    assert rec.covered == [i == 81 for i in rec.images]
    assert rec.to_dict(timing=False)["runtime_ms"] is None
    again = run_experiment(cfg, threads=3)
    assert again.images == rec.images


def test_coverage():
    full = coverage_experiment(ExperimentConfig(2, "xy_plus_z_plus_t", ("M2",), (16,), 1, 0, "AAAA"))
    assert full.covered == [True]
    rec = coverage_experiment(ExperimentConfig(3, "xy_plus_z_plus_t", ("M2",), (81,), 2, 0, "AAAA"))
    assert rec.extra["coverage_frequency"] == 1.0
    mixed = coverage_experiment(ExperimentConfig(3, "xy_plus_z_plus_t", ("SL2", "M2"), (24, 81), 1, 0, "AABB"))
    assert mixed.covered == [True]
    with pytest.raises(DomainError):
        coverage_experiment(ExperimentConfig(3, "sum", ("SL2", "M2"), (2, 2)))


@pytest.mark.parametrize("q", [2, 3, 5])
def test_sharpness(q):
    r = sharpness_check(q)
    assert r["image_size"] == q**3 + q * q - q and r["equals_singular"] and r["subset_of_singular"]


def test_sweep_monotone_and_format():
    res = threshold_sweep("x_plus_yz", [3], [2.0, 2.25, 2.5, 2.75, 3.0], trials=20, seed=4)
    means = [c["mean_ratio"] for c in res.cells]
    assert all(x <= y for x, y in zip(means, means[1:]))
    text = res.csv_text(timing=False)
    header = text.splitlines()[0]
    assert header == "q,poly,domains,sizes,image,q4,ratio,predicted_bound,bound_ratio,seed,trial,ms"
    assert len(text.splitlines()) == 1 + 5 * 20
    table = diagonal_table(res.cells)
    assert table.splitlines()[0] == "q,e,mean_ratio,min_ratio,trials"
    with pytest.raises(DomainError):
        threshold_sweep("x_plus_yz", [3], [3.5], trials=1)


def test_full_domain_gives_ratio_one():
    res = threshold_sweep("x_plus_yz", [2], [4.0], trials=2, domains=("M2", "M2", "M2"))
    assert res.cells[0]["mean_ratio"] == 1.0


def test_epsilon_rows_reported():
    res = threshold_sweep("sum", [3], [2.0, 3.0], trials=2, domains=("SL2", "SL2"))
    assert {r["eps"] for r in res.epsilon} == {0.1, 0.25, 0.5}


@pytest.mark.parametrize("q", [3, 5])
def test_mixing_consistent_sum_bound(q):
    lam = second_eigenvalue(build_graph(GraphSpec("unit-cayley", q))).lambda2
    T = enumerate_tables(q)
    for trial in range(20):
        rng = trial_rng(17, trial)
        na, nb = rng.integers(1, len(T.sl2) + 1), rng.integers(1, q**4 + 1)
        A = sample_subset(T.sl2, na, rng)
        B = sample_subset(T.all, nb, rng)
        measured = image_size(q, "sum", A, B)
        assert measured >= mixing_sum_bound(na, nb, q, lam) * (1 - 1e-12)
    assert math.isfinite(mixing_sum_bound(1, 1, q, lam))
