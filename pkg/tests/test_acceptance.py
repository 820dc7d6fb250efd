"""Exit criteria, one test per criterion, at the tolerances they state.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import build_cub_tree, random_scores
from oracles import central_difference, naive_pck, rel_error, render, smooth_image
from pairs.aggregate.gate import GateModel, constant_gate, gate_predict_batch
from pairs.aggregate.mlp import PARAMS, accuracy, init_mlp, mlp_loss, mlp_loss_and_grads, mlp_train
from pairs.aggregate.scores import ScoreTensor, read_scores, write_scores
from pairs.aggregate.selection import average_predict, beam_search_subsets, brute_force_best_subset
from pairs.cli import main
from pairs.dataset import PoseAnnotation, load_cub, write_cub
from pairs.evaluation import difficulty_histogram, pck_correct, pck_report
from pairs.geometry import invert_affine, pair_rectangle, patch_transform, warp_patch
from pairs.posetensor import PoseTensor, read_pose_tensor, write_pose_tensor
from pairs.schema import CUB_SCHEMA, KeypointSchema, enumerate_raw_pairs, merge_symmetric


def test_ac1_geometry_exactness():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    pts = rng.uniform(-2000, 2000, (1000, 2, 2))
    for p_i, p_j in pts:
        corners = pair_rectangle(p_i, p_j)
        spec = patch_transform(p_i, p_j, 512, 256)

        r = p_j - p_i
        d = math.sqrt(r[0] ** 2 + r[1] ** 2)
        r_hat = r / d
        t_hat = np.array([-r_hat[1], r_hat[0]])  # z x r in the right-handed frame
        h = d / 2
        expected = np.array([
            (p_i - h * r_hat) + h * t_hat,
            (p_j + h * r_hat) - h * t_hat,
            (p_i - h * r_hat) - h * t_hat,
            (p_j + h * r_hat) + h * t_hat,
        ])
        scale = np.maximum(np.abs(expected), 1.0)
        assert np.all(np.abs(corners - expected) <= 1e-9 * scale)

        mapped = spec.apply([p_i, p_j])
        assert np.all(np.abs(mapped - [(128, 128), (384, 128)]) <= 1e-6)
    assert time.perf_counter() - start < 1.0


def _similarity(angle_deg, scale, src_centre, dst_centre):
    a = math.radians(angle_deg)
    lin = scale * np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return np.hstack([lin, (np.asarray(dst_centre) - lin @ src_centre)[:, None]])


def test_ac2_pose_invariance():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    base = 256
    centre = np.array([base / 2, base / 2])
    worst = 0.0
    for seed in range(5):
        f = smooth_image(seed)
        mid = centre + rng.uniform(-20, 20, 2)
        theta = rng.uniform(0, 2 * np.pi)
        d = rng.uniform(40, 80)
        off = d / 2 * np.array([np.cos(theta), np.sin(theta)])
        p_i, p_j = mid - off, mid + off
        reference = warp_patch(render(f, base, base), patch_transform(p_i, p_j))
        for angle in (30, 90, 137):
            for scale in (0.5, 2.0):
                size = int(math.ceil(base * scale))
                S = _similarity(angle, scale, centre, (size / 2, size / 2))
                image = render(f, size, size, inverse=invert_affine(S))
                q_i = S[:, :2] @ p_i + S[:, 2]
                q_j = S[:, :2] @ p_j + S[:, 2]
                patch = warp_patch(image, patch_transform(q_i, q_j))
                err = float(np.mean(np.abs(patch - reference)))
                worst = max(worst, err)
                assert err <= 0.02, (seed, angle, scale, err)
    print(f"worst mean abs difference {worst:.5f}")
    assert time.perf_counter() - start < 30.0


def test_ac3_combinatorics():
    start = time.perf_counter()
    raw = enumerate_raw_pairs(CUB_SCHEMA)
    assert len(raw) == 105
    assert len(merge_symmetric(CUB_SCHEMA, raw)) == 69
    eleven = KeypointSchema(tuple(f"kp{i}" for i in range(11)))
    assert len(enumerate_raw_pairs(eleven)) == 55
    assert time.perf_counter() - start < 1.0


def test_ac4_beam_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    width = math.comb(8, 4)
    for _ in range(50):
        n_patches = int(rng.integers(1, 9))
        st = random_scores(rng, int(rng.integers(1, 41)), n_patches, int(rng.integers(2, 6)), 0.7)
        steps = beam_search_subsets(st, width)
        assert [s.size for s in steps] == list(range(1, n_patches + 1))
        for step in steps:
            subset, acc = brute_force_best_subset(st, step.size)
            assert step.accuracy == acc
            assert step.subset == subset
    assert time.perf_counter() - start < 120.0


def test_ac5_gate_reductions():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n_patches, n_classes = int(rng.integers(1, 12)), int(rng.integers(2, 8))
        st = random_scores(rng, int(rng.integers(1, 50)), n_patches, n_classes)
        X = st.features()

        full = constant_gate(X.shape[1], n_patches, n_patches, value=float(rng.normal()))
        np.testing.assert_array_equal(gate_predict_batch(full, X, st.data), average_predict(st)[0])

        single = GateModel(rng.normal(size=(X.shape[1], n_patches)), rng.normal(size=n_patches), 1)
        top = np.argmax(X @ single.W + single.b, axis=1)
        expected = np.argmax(st.data[np.arange(st.n_images), top], axis=1)
        np.testing.assert_array_equal(gate_predict_batch(single, X, st.data), expected)


def test_ac6_mlp_gradients_and_training():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        d, h, c, n = int(rng.integers(2, 21)), int(rng.integers(2, 9)), int(rng.integers(2, 6)), int(rng.integers(3, 10))
        model = init_mlp(d, c, h, rng)
        model.gamma[...] = rng.uniform(0.5, 1.5, h)
        model.beta[...] = rng.normal(0, 0.5, h)
        model.b2[...] = rng.normal(0, 0.5, c)
        X, y = rng.normal(size=(n, d)), rng.integers(0, c, n)
        _, grads, _ = mlp_loss_and_grads(model, X, y)
        num = central_difference(lambda: mlp_loss(model, X, y, "train"),
                                 {p: getattr(model, p) for p in PARAMS}, h=1e-4)
        worst = max(worst, max(rel_error(grads[p], num[p]).max() for p in PARAMS))
    print(f"worst gradient relative error {worst:.2e}")
    assert worst <= 1e-4

    rng = np.random.default_rng(6)
    n, p, c = 300, 10, 3
    labels = rng.integers(0, c, n)
    data = rng.random((n, p, c)) * 0.5
    data[np.arange(n), :, labels] += 0.3  # every patch ranks the true class first
    st = ScoreTensor(data, labels, np.ones(n, bool))
    first = mlp_train(st, epochs=100, seed=11)
    second = mlp_train(st, epochs=100, seed=11)
    for name in PARAMS:
        np.testing.assert_array_equal(getattr(first.model, name), getattr(second.model, name))
    acc = accuracy(first.model, st.features(), labels)
    print(f"train accuracy after 100 epochs {acc:.4f}")
    assert acc >= 0.99


def test_ac7_pck_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n_images, n_kp = int(rng.integers(1, 11)), int(rng.integers(1, 6))
        c = float(rng.uniform(0.02, 0.3))
        gts, preds, boxes = {}, {}, {}
        for i in range(n_images):
            xy = rng.uniform(0, 200, (n_kp, 2))
            gts[f"im{i}"] = PoseAnnotation(xy, rng.random(n_kp) < 0.75)
            preds[f"im{i}"] = xy + rng.normal(0, 15, (n_kp, 2))
            boxes[f"im{i}"] = (0.0, 0.0, float(rng.uniform(10, 200)), float(rng.uniform(10, 200)))
        rep = pck_report(preds, gts, boxes, [f"k{k}" for k in range(n_kp)], c)
        correct, evaluated = naive_pck(preds, gts, boxes, n_kp, c)
        assert rep.correct.tolist() == correct
        assert rep.evaluated.tolist() == evaluated
    assert pck_correct((10.0, 0.0), (0.0, 0.0), 100, 50, c=0.1)
    assert not pck_correct((10.001, 0.0), (0.0, 0.0), 100, 50, c=0.1)


def _cli_outputs(root, cub, scores, tensor, pred):
    root.mkdir()
    argvs = [
        ["extract", "--root", cub, "--out", root / "patches", "--size", "64x32", "--merge-symmetric"],
        ["decode", "--tensor", tensor, "--out", root / "kp.json"],
        ["pck", "--pred", pred, "--gt", cub, "--tsv", root / "pck.tsv"],
        ["aggregate", "beam", "--scores", scores, "--beam-width", 4, "--out", root / "beam.tsv",
         "--figure", root / "beam.png"],
        ["aggregate", "mlp", "--scores", scores, "--hidden", 32, "--epochs", 5, "--seed", 3,
         "--out", root / "mlp.tsv", "--model-out", root / "mlp.bin"],
        ["aggregate", "gate", "--scores", scores, "--k", 3, "--epochs", 5, "--seed", 3,
         "--out", root / "gate.tsv", "--model-out", root / "gate.bin"],
        ["difficulty", "--scores", scores, "--out", root / "hist.csv", "--figure", root / "hist.png"],
    ]
    for argv in argvs:
        assert main([str(a) for a in argv]) == 0
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_ac8_format_roundtrips(tmp_path, capsys):
    cub = build_cub_tree(tmp_path / "cub")
    index = load_cub(cub)
    write_cub(index, tmp_path / "cub2")
    assert load_cub(tmp_path / "cub2") == index

    st = random_scores(np.random.default_rng(8), 17, 9, 6, 0.5)
    write_scores(tmp_path / "s.pscr", st)
    assert read_scores(tmp_path / "s.pscr") == st

    pt = PoseTensor(np.random.default_rng(9).random((4, 8, 6)).astype(np.float32), 120, 160)
    write_pose_tensor(tmp_path / "t.ptns", pt)
    back = read_pose_tensor(tmp_path / "t.ptns")
    assert np.array_equal(back.channels, pt.channels) and (back.img_w, back.img_h) == (120, 160)

    pred = tmp_path / "pred.json"
    pred.write_text(json.dumps({r.id: (index.poses[r.id].xy + 1.5).tolist() for r in index.records}))
    first = _cli_outputs(tmp_path / "run1", cub, tmp_path / "s.pscr", tmp_path / "t.ptns", pred)
    out1 = capsys.readouterr().out
    second = _cli_outputs(tmp_path / "run2", cub, tmp_path / "s.pscr", tmp_path / "t.ptns", pred)
    out2 = capsys.readouterr().out
    assert len(first) > 10
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], name
    assert out1 == out2


def test_ac9_difficulty_histogram():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n, p, c = int(rng.integers(0, 40)), int(rng.integers(1, 10)), int(rng.integers(1, 6))
        hist = difficulty_histogram(rng.random((n, p, c)), rng.integers(0, c, n))
        assert len(hist) == p + 1 and hist.sum() == n

    scores = np.zeros((3, 3, 2))
    scores[..., 1] = 1.0
    for i in range(3):
        scores[i, :i] = [1.0, 0.0]  # image i: exactly i patches predict class 0
    assert difficulty_histogram(scores, [0, 0, 0]).tolist() == [1, 1, 1, 0]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
