import math

import numpy as np
import pytest

import lfoica


def test_kernel_and_mmd_values():
    assert lfoica.gaussian_kernel([0.0, 0.0], [3.0, 4.0], 12.5) == pytest.approx(math.exp(-1))
    assert lfoica.mmd2(np.array([[0.0]]), np.array([[2.0]]), [2.0]) == pytest.approx(2 - 2 * math.exp(-1))
    x = np.random.default_rng(0).normal(size=(2, 20))
    assert abs(lfoica.mmd2(x, x, [0.5, 1.0, 2.0])) < 1e-12
    real = [np.array([[0.0]]), np.array([[0.0]])]
    gen = [np.array([[2.0]]), np.array([[2.0]])]
    assert lfoica.joint_mmd2(real, gen, [2.0]) == pytest.approx(1.729329, abs=1e-6)
    assert lfoica.median_bandwidth(np.array([[0.0, 1.0, 2.0]])) == (1.0, False)


def test_prox_and_mse():
    out = lfoica.prox_l1(np.array([[0.5, 0.1, -0.5]]), 0.2)
    np.testing.assert_allclose(out, [[0.3, 0.0, -0.3]])
    assert lfoica.mse(np.zeros((1, 1)), np.full((1, 1), 0.2)) == pytest.approx(0.04)


def test_align_round_trip():
    truth = np.random.default_rng(1).normal(size=(3, 4))
    est = truth[:, [2, 0, 3, 1]] * np.array([1.0, -2.0, 0.5, 3.0])
    r = lfoica.align(est, truth)
    assert r["residual_mse"] < 1e-20
    np.testing.assert_allclose(r["aligned"], truth, atol=1e-12)
    np.testing.assert_allclose(lfoica.normalize_first_column(np.array([[3.0, 1.0], [4.0, 2.0]]))[:, 0], [0.6, 0.8])


def test_structural_helpers():
    np.testing.assert_allclose(lfoica.build_L(np.array([[0.5]]), 3), [[1.0, 0.5, 0.25]])
    m0, m1 = lfoica.build_M0_M1(np.array([[0.5]]), 2)
    np.testing.assert_allclose(m0, [[1.0, 1.5]])
    np.testing.assert_allclose(m1, [[0.5, 0.0]])
    np.testing.assert_allclose(lfoica.measurement_mixing(np.array([[0.0, 0.0], [0.6, 0.0]]))[:, :2],
                               [[1.0, 0.0], [0.6, 1.0]])
    np.testing.assert_allclose(lfoica.subsample(np.arange(6.0).reshape(1, 6), 2), [[0, 2, 4]])
    np.testing.assert_allclose(lfoica.aggregate(np.array([[1.0, 3.0, 5.0, 7.0]]), 2), [[2.0, 6.0]])


def test_generators_are_seeded():
    a = lfoica.gen_oica(2, 4, 100, seed=3)
    b = lfoica.gen_oica(2, 4, 100, seed=3)
    np.testing.assert_array_equal(a["mixtures"], b["mixtures"])
    np.testing.assert_allclose(a["mixtures"], a["mixing"] @ a["sources"], atol=1e-12)
    me = lfoica.gen_measurement_error(4, 50, seed=1)
    assert np.all(np.diag(me["adjacency"]) == 0)
    var = lfoica.gen_var(2, 40, 2, scheme="aggregate", seed=2)
    assert var["observed"].shape == (2, 40)


def test_training_entry_points():
    data = lfoica.gen_oica(2, 3, 400, seed=4)
    r = lfoica.train_lfoica(data["mixtures"], 3, batch=32, iters=5, seed=1)
    assert r["mixing"].shape == (2, 3)
    assert len(r["loss_trace"]) == 5

    var = lfoica.gen_var(2, 80, 2, seed=5)
    s = lfoica.train_subsampled(var["observed"], 2, batch=16, iters=5)
    assert s["transition"].shape == (2, 2)
    agg = lfoica.gen_var(2, 60, 2, scheme="aggregate", seed=6)
    t = lfoica.train_aggregated(agg["observed"], 2, 5, batch=8, iters=5)
    assert t["pieces"] == 12

    me = lfoica.gen_measurement_error(3, 300, seed=7)
    m = lfoica.train_measurement_error(me["observed"], batch=64, iters=5, lam=1e-3)
    assert np.all(np.diag(m["adjacency"]) == 0)

    with pytest.raises(ValueError):
        lfoica.train_lfoica(data["mixtures"], 3, batch=1000, iters=1)


def test_run_experiment_from_dict():
    cfg = {"task": "subsampled", "seed": 2, "replications": 2, "data.n": 2, "data.T": 60, "data.k": 2,
           "train.batch": 16, "train.iters": 5}
    a = lfoica.run_experiment(cfg)
    b = lfoica.run_experiment(cfg)
    assert [r["seed"] for r in a["replications"]] == [2, 3]
    a.pop("timing")
    b.pop("timing")
    assert a == b
    with pytest.raises(lfoica.ConfigError):
        lfoica.run_experiment({"task": "subsampled", "data.n": 2, "data.T": 10, "data.k": 2, "train.batch": 16})


def test_csv_loader(tmp_path):
    p = tmp_path / "series.csv"
    p.write_text("a,b\r\n1,2\r\n3,4\r\n5,6\r\n")
    values, names = lfoica.load_timeseries_csv(str(p))
    assert names == ["a", "b"]
    np.testing.assert_array_equal(values, [[1, 3, 5], [2, 4, 6]])
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError, match="line 3"):
        lfoica.load_timeseries_csv(str(tmp_path / "bad.csv"))
