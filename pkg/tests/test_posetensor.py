import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pairs.errors import BadMagic, EmptyTensor, InconsistentCounts
from pairs.posetensor import PoseTensor, decode, read_pose_tensor, write_pose_tensor


def test_single_cell():
    pose = decode(PoseTensor(np.ones((1, 1, 1)), 100, 100))
    np.testing.assert_allclose(pose.xy, [[50, 50]])
    assert pose.confidence[0] == 1.0 and pose.visible.all()


def test_hand_scaled_cell_centre():
    ch = np.zeros((1, 4, 4))
    ch[0, 1, 2] = 1.0
    pose = decode(PoseTensor(ch, 64, 64))
    np.testing.assert_allclose(pose.xy, [[40, 24]])  # (2.5, 1.5) * 16


def test_uniform_channel_breaks_ties_row_major():
    pose = decode(PoseTensor(np.full((2, 3, 5), 0.25), 50, 30))
    np.testing.assert_allclose(pose.xy, [[5, 5], [5, 5]])


def test_non_square_scaling():
    ch = np.zeros((1, 2, 8))
    ch[0, 1, 7] = 3.0
    pose = decode(PoseTensor(ch, 80, 10))
    np.testing.assert_allclose(pose.xy, [[75, 7.5]])


def test_empty_channel():
    with pytest.raises(EmptyTensor):
        decode(PoseTensor(np.zeros((2, 0, 4)), 10, 10))


def test_rejects_negative_values():
    with pytest.raises(ValueError):
        PoseTensor(-np.ones((1, 2, 2)), 10, 10)


def test_threshold_option():
    ch = np.zeros((2, 2, 2))
    ch[0, 0, 0] = 0.9
    ch[1, 1, 1] = 0.1
    assert decode(PoseTensor(ch, 4, 4)).visible.tolist() == [True, True]
    assert decode(PoseTensor(ch, 4, 4), threshold=0.5).visible.tolist() == [True, False]


maps = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(0, 10, allow_nan=False))


@given(maps, st.integers(1, 500), st.integers(1, 500), st.floats(0.01, 100))
def test_decode_properties(ch, w, h, scale):
    t = PoseTensor(ch, w, h)
    pose = decode(t)
    assert np.all((pose.xy[:, 0] >= 0) & (pose.xy[:, 0] < w))
    assert np.all((pose.xy[:, 1] >= 0) & (pose.xy[:, 1] < h))
    np.testing.assert_array_equal(decode(PoseTensor(ch * scale, w, h)).xy, pose.xy)


def test_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    t = PoseTensor(rng.random((15, 7, 9)).astype(np.float32), 500, 375)
    path = tmp_path / "t.ptns"
    write_pose_tensor(path, t)
    back = read_pose_tensor(path)
    np.testing.assert_array_equal(back.channels, t.channels)
    assert (back.img_w, back.img_h) == (500, 375)
    raw = path.read_bytes()
    assert raw[:4] == b"PTNS" and len(raw) == 24 + 4 * 15 * 7 * 9


def test_binary_errors(tmp_path):
    path = tmp_path / "t.ptns"
    write_pose_tensor(path, PoseTensor(np.ones((1, 2, 2), np.float32), 4, 4))
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BadMagic):
        read_pose_tensor(path)
    path.write_bytes(raw[:-4])
    with pytest.raises(InconsistentCounts):
        read_pose_tensor(path)
