import json
import os

import numpy as np
import pytest

from proxcd.bench import (
    BenchConfig,
    compute_fstar,
    gen_hetero,
    gen_uniform,
    load_objective,
    run_benchmark,
    save_objective,
)
from proxcd.errors import BudgetExhausted, InputError
from proxcd.objective import DiagonalQuadratic, SoftMaxObjective
from proxcd.sparse import from_triplets, write_matrix_market


def test_gen_uniform_full_density():
    A, b = gen_uniform(5, 4, density=1.0, seed=0)
    assert A.nnz == 20
    assert np.all(A.data == 1.0)
    assert b.shape == (4,)


def test_gen_uniform_density_concentration():
    A, _ = gen_uniform(1000, 1000, density=0.2, seed=1)
    frac = A.nnz / 1e6
    assert abs(frac - 0.2) < 0.01


def test_gen_uniform_seed_replay_byte_identical(tmp_path):
    A1, b1 = gen_uniform(30, 40, 0.3, seed=9)
    A2, b2 = gen_uniform(30, 40, 0.3, seed=9)
    np.testing.assert_array_equal(b1, b2)
    p1, p2 = tmp_path / "a1.mtx", tmp_path / "a2.mtx"
    write_matrix_market(A1, p1)
    write_matrix_market(A2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_gen_uniform_rejects_bad_density():
    with pytest.raises(InputError):
        gen_uniform(5, 5, density=0.0, seed=0)


def test_gen_hetero_row_structure():
    m, n = 40, 50
    A, _ = gen_hetero(m, n, seed=2)
    row_nnz = np.bincount(A.rows, minlength=m)
    assert row_nnz[0] == n  # dense row
    light, heavy = int(0.1 * n), int(0.9 * n)
    counts = {}
    for k in row_nnz[1:]:
        counts[int(k)] = counts.get(int(k), 0) + 1
    assert set(counts) == {light, heavy}
    assert counts[light] == int(0.9 * m)
    assert counts[heavy] == m - 1 - int(0.9 * m)


def test_gen_hetero_smoothness_separation():
    # the family's point: the worst row norm is ~n while the mean
    # componentwise constant stays O(1)
    A, b = gen_hetero(100, 200, seed=3)
    obj = SoftMaxObjective(A, b=b, gamma=0.6)
    L, L_vec = obj.smoothness()
    assert L / L_vec.mean() > 50


def test_gen_bounded_b_is_in_row_space():
    A, b = gen_uniform(20, 30, 0.3, seed=4)
    # b = -A^T p for simplex weights p: residual of least squares must vanish
    D = A.to_dense()
    p, *_ = np.linalg.lstsq(D.T, -b, rcond=None)
    np.testing.assert_allclose(D.T @ p, -b, atol=1e-10)


def test_gen_normal_b_mode():
    _, b1 = gen_uniform(10, 15, 0.4, seed=5, b_mode="normal")
    rng = np.random.default_rng(5)
    rng.random((10, 15))
    np.testing.assert_array_equal(b1, rng.standard_normal(15))


def test_compute_fstar_zero_matrix():
    A = from_triplets(7, 3, [])
    obj = SoftMaxObjective(A, gamma=0.4)
    # constant objective: the search stalls immediately
    assert compute_fstar(obj, 1e-8, max_iters=5000) == pytest.approx(0.4 * np.log(7), rel=1e-12)


def test_compute_fstar_quadratic_hook():
    quad = DiagonalQuadratic(np.array([2.0, 1.0]), target=np.array([1.0, -1.0]))
    assert compute_fstar(quad, 1e-9) == pytest.approx(0.0, abs=1e-12)


def test_compute_fstar_certified_mode_on_softmax():
    A, b = gen_uniform(12, 8, 0.5, seed=6)
    obj = SoftMaxObjective(A, b=b, gamma=0.5)
    loose = compute_fstar(obj, 1e-4, r2=10.0)
    tight = compute_fstar(obj, 1e-8, r2=10.0)
    assert tight <= loose + 1e-4  # refinement never backtracks beyond the old slack
    free = compute_fstar(obj, 1e-10, max_iters=400000)
    assert abs(free - tight) < 1e-6


def test_compute_fstar_budget_exhaustion_carries_best():
    A, b = gen_uniform(15, 10, 0.5, seed=7)
    obj = SoftMaxObjective(A, b=b, gamma=0.5)
    with pytest.raises(BudgetExhausted) as err:
        compute_fstar(obj, 1e-30, max_iters=600)
    assert err.value.best is not None
    assert err.value.best <= obj.value(np.zeros(obj.n))


def test_compute_fstar_cache(tmp_path):
    A, b = gen_uniform(10, 6, 0.5, seed=8)
    obj = SoftMaxObjective(A, b=b, gamma=0.5)
    v1 = compute_fstar(obj, 1e-8, cache_dir=tmp_path, max_iters=300000)
    assert len(list(tmp_path.glob("fstar_*.json"))) == 1
    v2 = compute_fstar(obj, 1e-8, cache_dir=tmp_path, max_iters=1)  # served from cache
    assert v1 == v2
    fresh = compute_fstar(obj, 1e-8, max_iters=300000)
    assert abs(v1 - fresh) <= 1e-8 + 1e-12


def test_objective_file_roundtrip(tmp_path):
    A, b = gen_uniform(9, 7, 0.4, seed=10)
    obj = SoftMaxObjective(A, b=b, r=np.linspace(0, 0.5, 9), c=0.25, gamma=0.7)
    save_objective(obj, tmp_path)
    back = load_objective(os.path.join(tmp_path, "objective.json"))
    np.testing.assert_allclose(back.A.to_dense(), A.to_dense(), atol=0)
    np.testing.assert_allclose(back.b, b, atol=0)
    np.testing.assert_allclose(back.r, obj.r, atol=0)
    assert back.gamma == obj.gamma and back.c == obj.c
    x = np.linspace(-1, 1, 7)
    assert back.value(x) == pytest.approx(obj.value(x), rel=1e-14)


def test_load_objective_rejects_garbage(tmp_path):
    path = tmp_path / "obj.json"
    path.write_text("{\"matrix\": \"missing.mtx\", \"gamma\": 0.5}")
    with pytest.raises(InputError):
        load_objective(path)


def test_bench_config_validation(tmp_path):
    with pytest.raises(InputError):
        BenchConfig(methods=())
    with pytest.raises(InputError):
        BenchConfig(methods=("gm", "nope"))
    cfg = BenchConfig(m=20, n=30, methods=("gm",), time_budget_seconds=5.0)
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    back = BenchConfig.from_json(path)
    assert back == cfg


def test_run_benchmark_gm_monotone_and_persisted(tmp_path):
    cfg = BenchConfig(
        kind="uniform", m=15, n=10, density=0.4, instance_seed=1, gamma=0.5,
        methods=("gm",), time_budget_seconds=5.0, eps=1e-2,
        fstar_accuracy=1e-8, max_steps=20000,
    )
    summary, traces = run_benchmark(cfg, out_dir=tmp_path)
    assert (tmp_path / "trace_gm.csv").exists()
    assert (tmp_path / "meta_gm.json").exists()
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "A.mtx").exists()
    tr = traces["gm"]
    assert all(b <= a + 1e-12 for a, b in zip(tr.f_values, tr.f_values[1:]))
    meta = json.loads((tmp_path / "meta_gm.json").read_text())
    assert set(meta) == {"method", "seed", "H", "N_outer", "N_inner", "epsilon", "delta"}


def test_run_benchmark_replay_identical_modulo_wall(tmp_path):
    cfg = BenchConfig(
        kind="uniform", m=12, n=8, density=0.5, instance_seed=2, gamma=0.5,
        methods=("cdm", "ccdm"), time_budget_seconds=30.0, eps=1e-2,
        fstar_accuracy=1e-8, max_steps=5000, n_inner=50,
    )
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    run_benchmark(cfg, out_dir=out1)
    run_benchmark(cfg, out_dir=out2)
    for name in ("trace_cdm.csv", "trace_ccdm.csv"):
        rows1 = (out1 / name).read_text().splitlines()
        rows2 = (out2 / name).read_text().splitlines()
        strip = lambda rows: [(r.split(",")[0], r.split(",")[2]) for r in rows[1:]]
        assert strip(rows1) == strip(rows2)


def test_run_benchmark_isolates_method_failures(tmp_path, monkeypatch):
    import proxcd.bench as bench_mod

    cfg = BenchConfig(
        kind="uniform", m=12, n=8, density=0.5, instance_seed=3, gamma=0.5,
        methods=("gm", "fgm"), time_budget_seconds=5.0, fstar_accuracy=1e-8,
        max_steps=2000,
    )
    orig = bench_mod.gm_solve

    def broken(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(bench_mod, "gm_solve", broken)
    summary, traces = run_benchmark(cfg, out_dir=tmp_path)
    assert "error" in summary["methods"]["gm"]
    assert "fgm" in traces  # the other method still ran and persisted
    assert (tmp_path / "trace_fgm.csv").exists()
    monkeypatch.setattr(bench_mod, "gm_solve", orig)
