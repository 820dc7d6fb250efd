import numpy as np
import pytest
from PIL import Image

from pairs.aggregate.scores import ScoreTensor
from pairs.dataset import load_cub, write_cub

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _ACCEPTANCE.get(report.nodeid)
        if prev != "failed":
            _ACCEPTANCE[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _ACCEPTANCE.items():
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


def random_scores(rng, n_images, n_patches, n_classes, train_fraction=1.0):
    data = rng.random((n_images, n_patches, n_classes))
    labels = rng.integers(0, n_classes, n_images)
    is_train = rng.random(n_images) < train_fraction
    if not is_train.any():
        is_train[0] = True
    return ScoreTensor(data, labels, is_train)


# Three images, four keypoints (one symmetric pair); image 3 has an
# invisible keypoint and image 2 has two coincident keypoints.
FIXTURE_PARTS = ["back", "left eye", "right eye", "tail"]
FIXTURE_IMAGES = [
    # id, path, class, bbox, train, size, keypoints (x, y, visible)
    ("1", "001.Albatross/a.png", "1", (2.0, 3.0, 40.0, 20.0), 1, (48, 32),
     [(10.0, 10.0, 1), (20.5, 8.0, 1), (24.0, 9.0, 1), (40.0, 20.0, 1)]),
    ("2", "001.Albatross/b.png", "1", (0.0, 0.0, 30.0, 30.0), 0, (40, 40),
     [(5.0, 5.0, 1), (5.0, 5.0, 1), (30.0, 12.25, 1), (35.0, 35.0, 1)]),
    ("3", "002.Auklet/c.png", "2", (1.5, 1.5, 20.0, 36.0), 1, (32, 48),
     [(6.0, 7.0, 1), (0.0, 0.0, 0), (12.0, 20.0, 1), (25.0, 40.0, 1)]),
]


def build_cub_tree(root, images=True):
    root.mkdir(parents=True, exist_ok=True)
    (root / "parts").mkdir(exist_ok=True)
    (root / "images.txt").write_text("".join(f"{i} {p}\n" for i, p, *_ in FIXTURE_IMAGES))
    (root / "image_class_labels.txt").write_text("".join(f"{r[0]} {r[2]}\n" for r in FIXTURE_IMAGES))
    (root / "bounding_boxes.txt").write_text(
        "".join(f"{r[0]} " + " ".join(str(v) for v in r[3]) + "\n" for r in FIXTURE_IMAGES))
    (root / "train_test_split.txt").write_text("".join(f"{r[0]} {r[4]}\n" for r in FIXTURE_IMAGES))
    (root / "parts" / "parts.txt").write_text("".join(f"{k + 1} {n}\n" for k, n in enumerate(FIXTURE_PARTS)))
    locs = []
    for r in FIXTURE_IMAGES:
        for k, (x, y, v) in enumerate(r[6]):
            locs.append(f"{r[0]} {k + 1} {x} {y} {v}\n")
    (root / "parts" / "part_locs.txt").write_text("".join(locs))
    if images:
        rng = np.random.default_rng(7)
        for r in FIXTURE_IMAGES:
            w, h = r[5]
            path = root / "images" / r[1]
            path.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)).save(path)
    return root


@pytest.fixture
def cub_root(tmp_path):
    return build_cub_tree(tmp_path / "cub")


@pytest.fixture
def cub_index(cub_root):
    return load_cub(cub_root)


__all__ = ["random_scores", "build_cub_tree", "load_cub", "write_cub"]
