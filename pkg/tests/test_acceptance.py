"""Acceptance gate: one test per criterion, summarised at the end of the run."""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from ddcs_eval.cli import main
from ddcs_eval.data import save_feature_set
from ddcs_eval.ddcs import DdcsConfig, accumulate_sets, compute_ddcs
from ddcs_eval.distance import nearest_target
from ddcs_eval.metrics import CoverageConfig, GaussianStats, coverage, fid
from ddcs_eval.ngd import (
    ToyWorld,
    chain_to_generator,
    entropy_loss,
    generate,
    hvp_finite_diff,
    make_toy_world,
    paired_runs,
    perceptual_sq_distance_grad,
    toy_augmentation_run,
    vanilla_loss,
)
from ddcs_eval.synth import SweepSpec, gen_synthetic_targets, run_sweep

import oracles


def _report(capsys, line):
    with capsys.disabled():
        print(f"\n  {line}")


@pytest.fixture(scope="module")
def synth_targets():
    return gen_synthetic_targets(50, 16, 32, seed=1)


@pytest.mark.criterion(1, "DDCS equals naive oracle on 200 instances, < 5 s")
def test_oracle_equivalence(capsys):
    rng = np.random.default_rng(12345)
    cases = []
    for _ in range(200):
        d = int(rng.integers(1, 9))
        tar = rng.standard_normal((int(rng.integers(1, 31)), d))
        rec = rng.standard_normal((int(rng.integers(1, 31)), d))
        if rng.random() < 0.3:
            rec[: min(len(rec), len(tar))] = tar[: min(len(rec), len(tar))]
        cases.append((rec, tar, float(rng.choice([0.5, 1.0, 2.0]))))

    start = time.perf_counter()
    results = []
    for rec, tar, c in cases:
        sets = accumulate_sets(nearest_target(rec, tar), len(tar))
        results.append(compute_ddcs(sets, DdcsConfig(c=c)))
    elapsed = time.perf_counter() - start

    worst = 0.0
    for (rec, tar, c), res in zip(cases, results):
        avg, best, _ = oracles.ddcs(rec.tolist(), tar.tolist(), c)
        worst = max(worst, abs(res.ddcs_avg - avg), abs(res.ddcs_best - best))
    _report(capsys, f"max abs error {worst:.3g}, runtime {elapsed:.3f} s")
    assert worst <= 1e-12
    assert elapsed < 5.0


@pytest.mark.criterion(2, "D1 sweep: ddcs_avg strictly increasing, accuracy exactly 1")
def test_d1_trend(synth_targets, capsys):
    table = run_sweep(synth_targets, SweepSpec("d1", range(1, 17), seed=1,
                                               metrics=("ddcs_avg", "synthetic_accuracy")))
    avg = table.column("ddcs_avg")
    _report(capsys, f"ddcs_avg {avg[0]:.4f} .. {avg[-1]:.4f}")
    assert np.all(np.diff(avg) > 0)
    assert np.all(table.column("synthetic_accuracy") == 1.0)


@pytest.mark.criterion(3, "D2 sweep: DDCS invariant within 1e-12, FID strictly increasing")
def test_d2_trend(synth_targets, capsys):
    table = run_sweep(synth_targets, SweepSpec("d2", (0, 5, 10, 25, 50),
                                               metrics=("ddcs_avg", "ddcs_best", "fid")))
    avg, best, f = table.column("ddcs_avg"), table.column("ddcs_best"), table.column("fid")
    _report(capsys, f"fid {np.array2string(f, precision=4)}")
    assert np.max(np.abs(avg - avg[0])) <= 1e-12
    assert np.max(np.abs(best - best[0])) <= 1e-12
    assert np.all(np.diff(f) > 0)


@pytest.mark.criterion(4, "score bounds and best-score monotonicity on 500 inputs")
def test_bounds_and_monotonicity():
    rng = np.random.default_rng(4)
    for _ in range(500):
        d = int(rng.integers(1, 9))
        tar = rng.standard_normal((int(rng.integers(1, 31)), d))
        rec = rng.standard_normal((int(rng.integers(1, 31)), d))
        if rng.random() < 0.3:
            rec[0] = tar[0]
        cfg = DdcsConfig(c=float(rng.choice([0.1, 1.0, 5.0])))
        res = compute_ddcs(accumulate_sets(nearest_target(rec, tar), len(tar)), cfg)
        assert 0.0 <= res.ddcs_avg <= res.ddcs_best <= 1.0 / cfg.c
        extra = np.concatenate([rec, rng.standard_normal((int(rng.integers(1, 6)), d))])
        more = compute_ddcs(accumulate_sets(nearest_target(extra, tar), len(tar)), cfg)
        assert more.ddcs_best >= res.ddcs_best


@pytest.mark.criterion(5, "FID identity, 1-D closed forms and symmetry")
def test_fid_correctness():
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = int(rng.integers(1, 9))
        a = rng.standard_normal((d, d))
        s = GaussianStats(rng.standard_normal(d), a @ a.T + 0.1 * np.eye(d), 100)
        assert fid(s, s) <= 1e-6
        b = rng.standard_normal((d, d))
        t = GaussianStats(rng.standard_normal(d), b @ b.T, 100)
        assert abs(fid(s, t) - fid(t, s)) <= 1e-9
    unit = GaussianStats(np.zeros(1), np.eye(1), 2)
    assert abs(fid(unit, GaussianStats(np.full(1, 2.0), np.eye(1), 2)) - 4.0) <= 1e-9
    assert abs(fid(unit, GaussianStats(np.zeros(1), np.full((1, 1), 4.0), 2)) - 1.0) <= 1e-9


@pytest.mark.criterion(6, "coverage equals brute-force ball membership; rec = tar gives 1")
def test_coverage_oracle():
    rng = np.random.default_rng(6)
    for i in range(100):
        k = (1, 2, 5)[i % 3]
        d = int(rng.integers(1, 6))
        tar = rng.standard_normal((int(rng.integers(k + 1, 21)), d))
        rec = rng.standard_normal((int(rng.integers(1, 21)), d))
        if i % 4 == 0:
            rec[0] = tar[-1]
        assert coverage(rec, tar, CoverageConfig(k)) == oracles.coverage(rec.tolist(), tar.tolist(), k)
        assert coverage(tar, tar, CoverageConfig(k)) == 1.0


def _world(rng):
    d_img = int(rng.integers(2, 13))
    d_z = int(rng.integers(1, 13))
    k = int(rng.integers(2, 6))
    a = rng.standard_normal((d_img, d_img))
    return ToyWorld(
        gen_w=rng.standard_normal((d_img, d_z)) / np.sqrt(d_z),
        gen_b=0.5 * rng.standard_normal(d_img),
        victim_w=rng.standard_normal((k, d_img)) / np.sqrt(d_img),
        phi=rng.standard_normal((d_img, d_img)),
        aux_mean=rng.standard_normal(d_img),
        aux_cov=a @ a.T / d_img + np.eye(d_img),
    )


@pytest.mark.criterion(7, "entropy, vanilla, composed gradients and HVP match finite differences")
def test_gradient_suite(capsys):
    rng = np.random.default_rng(7)
    worst_grad = worst_hvp = 0.0
    for _ in range(50):
        w = _world(rng)
        z = rng.standard_normal((int(rng.integers(2, 9)), w.d_z))
        X = generate(w, z)

        _, g_img = entropy_loss(w, X)
        fd = oracles.central_diff_grad(lambda x: entropy_loss(w, x)[0], X)
        worst_grad = max(worst_grad, oracles.rel_err(g_img, fd))

        _, gw, gb = vanilla_loss(w, z)
        fd_w = oracles.central_diff_grad(lambda m: vanilla_loss(replace(w, gen_w=m), z)[0], w.gen_w)
        fd_b = oracles.central_diff_grad(lambda m: vanilla_loss(replace(w, gen_b=m), z)[0], w.gen_b)
        worst_grad = max(worst_grad, oracles.rel_err(gw, fd_w), oracles.rel_err(gb, fd_b))

        cw, cb = chain_to_generator(g_img, z)
        fd_cw = oracles.central_diff_grad(lambda m: entropy_loss(w, generate(replace(w, gen_w=m), z))[0], w.gen_w)
        fd_cb = oracles.central_diff_grad(lambda m: entropy_loss(w, generate(replace(w, gen_b=m), z))[0], w.gen_b)
        worst_grad = max(worst_grad, oracles.rel_err(cw, fd_cw), oracles.rel_err(cb, fd_cb))

        x, y, v = rng.standard_normal((3, w.d_img))
        hv = hvp_finite_diff(lambda p: perceptual_sq_distance_grad(w, p, y), x, v)
        exact = 2.0 * w.phi.T @ (w.phi @ v)
        worst_hvp = max(worst_hvp, oracles.rel_err(hv, exact))
    _report(capsys, f"worst gradient rel err {worst_grad:.3g}, worst HVP rel err {worst_hvp:.3g}")
    assert worst_grad < 1e-4
    assert worst_hvp < 1e-6


@pytest.mark.criterion(8, "projection reduces off-manifold drift; identity distance gives rescaled steps")
def test_ngd_trend(capsys):
    world = make_toy_world(seed=0, condition=100.0)
    plain, proj, weight = paired_runs(world, 500, 0.02, 64, seed=0)
    drop_plain = plain.entropy_loss[0] - plain.entropy_loss[-1]
    drop_proj = proj.entropy_loss[0] - proj.entropy_loss[-1]
    ratio = proj.manifold_deviation[-1] / plain.manifold_deviation[-1]
    _report(capsys, f"deviation plain {plain.manifold_deviation[-1]:.4g}, projected "
                    f"{proj.manifold_deviation[-1]:.4g}, ratio {ratio:.3f}; entropy drop "
                    f"{drop_plain:.4g} vs {drop_proj:.4g} (weight {weight:.4g})")
    assert drop_proj >= drop_plain
    assert ratio <= 0.8

    d = world.d_img
    flat = replace(world, phi=np.eye(d))
    for delta, factor in ((1e-6, 2.0 + 1e-6), (0.0, 2.0)):
        proj = toy_augmentation_run(flat, 50, 0.02, 16, seed=3, projection=True, entropy_weight=1.0,
                                    delta=delta, record_params=True)
        plain = toy_augmentation_run(flat, 50, 0.02, 16, seed=3, projection=False,
                                     entropy_weight=1.0 / factor, record_params=True)
        for (wp, bp), (wq, bq) in zip(proj.params, plain.params):
            assert np.max(np.abs(wp - wq)) <= 1e-9
            assert np.max(np.abs(bp - bq)) <= 1e-9


@pytest.mark.criterion(9, "10k x 10k x 128 nearest target within 10 s, identical at 1 and 8 threads")
def test_performance_and_determinism(capsys):
    rng = np.random.default_rng(9)
    rec = rng.standard_normal((10_000, 128))
    tar = rng.standard_normal((10_000, 128))
    start = time.perf_counter()
    eight = nearest_target(rec, tar, n_jobs=8)
    elapsed = time.perf_counter() - start
    one = nearest_target(rec, tar, n_jobs=1)
    _report(capsys, f"8-thread runtime {elapsed:.2f} s")
    assert elapsed <= 10.0
    assert eight.target_index.tobytes() == one.target_index.tobytes()
    assert eight.distance.tobytes() == one.distance.tobytes()


@pytest.mark.criterion(10, "CLI ddcs on a perfect attack reports 1.0 and reruns byte-identically")
def test_cli_end_to_end(tmp_path):
    fs = gen_synthetic_targets(5, 10, 8, seed=0)
    tar = tmp_path / "tar.fmat"
    rec = tmp_path / "rec.fmat"
    save_feature_set(fs, tar)
    save_feature_set(fs, rec)
    outputs = []
    for i in range(2):
        out = tmp_path / f"report{i}.json"
        assert main(["ddcs", "--rec", str(rec), "--tar", str(tar), "--out", str(out)]) == 0
        outputs.append(out.read_bytes())
    rep = json.loads(outputs[0])
    assert rep["ddcs_avg"] == rep["ddcs_best"] == rep["match_fraction"] == 1.0
    assert outputs[0] == outputs[1]
