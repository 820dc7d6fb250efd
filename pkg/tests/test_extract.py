import json

import numpy as np
import pytest

from pairs.dataset import DatasetIndex, ImageRecord, PoseAnnotation
from pairs.errors import BadAspect
from pairs.extract import extract_all, plan_pairs
from pairs.geometry import load_image
from pairs.schema import CUB_SCHEMA


def test_policy_all(cub_index, tmp_path):
    out = tmp_path / "out"
    m = extract_all(cub_index, out, size=(32, 16))
    assert m["pairs_per_image"] == 6
    # image 2 has coincident back/left-eye keypoints
    assert m["skipped_degenerate"] == 1 and m["written"] == 17
    assert m["written"] + m["skipped_degenerate"] + m["skipped_invisible"] == 3 * 6
    side = json.loads((out / "2.json").read_text())
    assert side["skipped_degenerate"] == [["back", "left-eye"]]
    patch = load_image(out / "1__back__tail.png")
    assert patch.shape == (16, 32, 3)


def test_policy_visible_only(cub_index, tmp_path):
    m = extract_all(cub_index, tmp_path / "out", size=(32, 16), policy="visible-only")
    # image 3's invisible left-eye touches n - 1 = 3 pairs
    assert m["per_image"][2]["skipped_invisible"] == 3
    assert m["skipped_invisible"] == 3


def test_merge_writes_hybrid_directories(cub_index, tmp_path):
    out = tmp_path / "out"
    extract_all(cub_index, out, size=(32, 16), merge_symmetric=True)
    dirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert dirs == ["back__eye", "back__tail", "eye__eye", "eye__tail"]
    assert (out / "eye__tail" / "1__left-eye__tail.png").exists()
    assert (out / "eye__tail" / "1__right-eye__tail.png").exists()
    assert (out / "back__eye" / "1__right-eye__back.png").exists() is False
    assert (out / "back__eye" / "1__back__right-eye.png").exists()


def test_missing_image_is_recorded(cub_index, tmp_path):
    (cub_index.root / "images" / cub_index.records[0].path).unlink()
    m = extract_all(cub_index, tmp_path / "out", size=(32, 16))
    assert [e["image_id"] for e in m["errors"]] == ["1"]
    assert m["written"] == 11


def test_bad_aspect_rejected_up_front(cub_index, tmp_path):
    with pytest.raises(BadAspect):
        extract_all(cub_index, tmp_path / "out", size=(30, 20))


def test_worker_count_does_not_change_output(cub_index, tmp_path):
    extract_all(cub_index, tmp_path / "a", size=(32, 16))
    extract_all(cub_index, tmp_path / "b", size=(32, 16), workers=3)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def cub_like_index(tmp_path, visible=None):
    from PIL import Image
    rng = np.random.default_rng(0)
    (tmp_path / "images").mkdir()
    Image.fromarray(rng.integers(0, 256, (60, 80, 3), dtype=np.uint8)).save(tmp_path / "images" / "x.png")
    xy = rng.uniform(5, 55, (15, 2))
    vis = np.ones(15, bool) if visible is None else visible
    rec = ImageRecord("7", "x.png", "1", (0, 0, 80, 60), True, 80, 60)
    return DatasetIndex([rec], {"7": PoseAnnotation(xy, vis)}, CUB_SCHEMA, 1, tmp_path)


def test_cub_schema_counts(tmp_path):
    index = cub_like_index(tmp_path)
    m = extract_all(index, tmp_path / "out", size=(16, 8))
    assert m["written"] == 105
    index.poses["7"].visible[4] = False
    m = extract_all(index, tmp_path / "out2", size=(16, 8), policy="visible-only")
    assert m["skipped_invisible"] == 14 and m["written"] == 91
    assert len(plan_pairs(CUB_SCHEMA, True)) == 105


def test_keypoint_override(cub_index, tmp_path):
    kps = {rid: np.array([[1, 1, .9], [5, 1, .9], [9, 1, .9], [13, 1, .9]]) for rid in ("1", "2", "3")}
    m = extract_all(cub_index, tmp_path / "o", size=(32, 16), policy="visible-only", keypoints=kps)
    assert m["skipped_invisible"] == 0 and m["skipped_degenerate"] == 0 and m["written"] == 18
