import os
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from shallownet import data
from shallownet.data import AugmentParams, augment, augment_with
from shallownet.errors import DataError
from oracles import bilinear_2x2_to_4x4


def make_tree(root, n_per_class, extra=()):
    for name in ("Parasitized", "Uninfected"):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for k in range(n_per_class):
            Image.fromarray(np.full((8, 8, 3), 40 * k % 255, np.uint8)).save(d / f"{k}.png")
        for e in extra:
            (d / e).write_bytes(b"junk")
    return root


def test_ingest_balanced_fixture(fixture_dataset):
    m = data.ingest(fixture_dataset)
    assert len(m) == 20
    assert sum(s.label for s in m.samples) == 10
    assert [s.path for s in m.samples] == sorted(s.path for s in m.samples)
    for s in m.samples:
        assert s.label == (os.path.basename(os.path.dirname(s.path)) == "Parasitized")


def test_ingest_case_insensitive_and_skips(tmp_path):
    for name in ("PARASITIZED", "uninfected"):
        (tmp_path / name).mkdir()
        Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / name / "a.PNG")
    (tmp_path / "uninfected" / "Thumbs.db").write_bytes(b"x")
    m = data.ingest(tmp_path)
    assert len(m) == 2 and m.skipped == 1


def test_ingest_empty_dirs(tmp_path):
    (tmp_path / "Parasitized").mkdir()
    (tmp_path / "Uninfected").mkdir()
    with pytest.raises(DataError, match="no images"):
        data.ingest(tmp_path)


def test_ingest_missing_root(tmp_path):
    with pytest.raises(DataError, match="no images"):
        data.ingest(tmp_path / "nope")


def test_ingest_missing_class_dir(tmp_path):
    (tmp_path / "Parasitized").mkdir()
    with pytest.raises(DataError, match="Uninfected"):
        data.ingest(tmp_path)


def test_split_sizes_and_determinism(fixture_dataset):
    m = data.ingest(fixture_dataset)
    a = data.split(m, 0.8, seed=3)
    assert len(a.train) == 16 and len(a.test) == 4
    assert data.split(m, 0.8, seed=3) == a
    assert data.split(m, 0.8, seed=4).train != a.train


def test_split_full_dataset_size():
    samples = tuple(data.Sample(f"/x/{i:05d}.png", i % 2) for i in range(27_558))
    m = data.split(data.DatasetManifest(samples), 0.8, seed=0)
    assert len(m.test) == 5512 and len(m.train) == 22046
    # Table 1's 1-layer row: (TP + TN) / (P + N) = (2754 + 0) / 5512 = 49.96%
    assert round(100 * 2754 / len(m.test), 2) == 49.96


def test_split_degenerate(fixture_dataset):
    m = data.ingest(fixture_dataset)
    with pytest.raises(DataError):
        data.split(m, 0.01)
    with pytest.raises(ValueError):
        data.split(m, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_split_is_partition_independent_of_order(n, seed, ratio):
    samples = [data.Sample(f"p{i:03d}.png", i % 2) for i in range(n)]
    n_train = int(np.floor(ratio * n + 0.5))
    if n_train in (0, n):
        return
    shuffled = samples[:]
    random.Random(seed).shuffle(shuffled)
    a = data.split(data.DatasetManifest(tuple(samples)), ratio, seed)
    b = data.split(data.DatasetManifest(tuple(shuffled)), ratio, seed)
    assert a.samples == b.samples
    assert {s.path for s in a.train} | {s.path for s in a.test} == {s.path for s in samples}
    assert not {s.path for s in a.train} & {s.path for s in a.test}
    assert len(a.train) == n_train


def test_manifest_csv_roundtrip(fixture_dataset, tmp_path):
    m = data.split(data.ingest(fixture_dataset), 0.8, 1)
    data.write_manifest_csv(m, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "path,label,split"
    assert data.read_manifest_csv(tmp_path / "m.csv").samples == m.samples


# -------------------------------------------------------------- load_image

def test_load_solid_red(tmp_path):
    p = tmp_path / "red.png"
    Image.fromarray(np.tile(np.array([255, 0, 0], np.uint8), (80, 100, 1))).save(p)
    t = data.load_image(p)
    assert t.shape == (1, 3, 64, 64) and t.dtype == np.float32
    assert np.all(t[0, 0] == 1) and not t[0, 1:].any()


def test_load_rgba_drops_alpha(tmp_path):
    p = tmp_path / "rgba.png"
    arr = np.zeros((64, 64, 4), np.uint8)
    arr[..., 2] = 255
    arr[..., 3] = 10
    Image.fromarray(arr, "RGBA").save(p)
    t = data.load_image(p)
    assert np.all(t[0, 2] == 1) and not t[0, :2].any()


def test_load_64_is_identity(tmp_path, rng):
    arr = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    p = tmp_path / "a.png"
    Image.fromarray(arr).save(p)
    expected = (arr.astype(np.float64) / 255).astype(np.float32).transpose(2, 0, 1)
    assert data.load_image(p)[0].tobytes() == expected.tobytes()


def test_bilinear_checkerboard_oracle():
    board = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = data.resize_bilinear(board[None], 4, 4)[0]
    np.testing.assert_allclose(out, bilinear_2x2_to_4x4(board), atol=1e-12)


def test_load_bad_file(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"not a png")
    with pytest.raises(DataError, match="bad.png"):
        data.load_image(p)


# ---------------------------------------------------------------- augment

def image(rng):
    return rng.random((1, 3, 64, 64)).astype(np.float32)


def test_identity_params(rng):
    x = image(rng)
    p = AugmentParams(0.0, (1.0, 1.0), 0.0, 0.0)
    assert augment(x, p, np.random.default_rng(0)).tobytes() == x.tobytes()


def test_flips_are_involutions(rng):
    x = image(rng)
    for kw in ({"hflip": True}, {"vflip": True}):
        once = augment_with(x, **kw)
        assert not np.array_equal(once, x)
        assert augment_with(once, **kw).tobytes() == x.tobytes()
    np.testing.assert_array_equal(augment_with(x, hflip=True), x[..., ::-1])


def test_forced_hflip_via_params_twice(rng):
    x = image(rng)
    p = AugmentParams(0.0, (1.0, 1.0), 1.0, 0.0)
    twice = augment(augment(x, p, np.random.default_rng(1)), p, np.random.default_rng(2))
    assert twice.tobytes() == x.tobytes()


def test_rotate_90_matches_permutation(rng):
    x = np.zeros((1, 3, 64, 64), np.float32)
    x[0, :, 5:20, 10:14] = 1.0  # asymmetric bar
    x[0, 0, 40, 50] = 0.5
    out = augment_with(x, angle_deg=90.0)
    expected = np.rot90(x, k=1, axes=(2, 3))  # counter-clockwise
    np.testing.assert_allclose(out, expected, atol=1e-6)


def test_zoom_about_centre(rng):
    x = image(rng)
    out = augment_with(x, zoom=2.0)
    # centre 2x2 block of the output samples the four centre pixels' neighbourhood
    assert out.shape == x.shape
    np.testing.assert_allclose(out[0, :, 31:33, 31:33].mean(), x[0, :, 31:33, 31:33].mean(), atol=0.2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_augment_shape_and_range(seed):
    r = np.random.default_rng(seed)
    x = r.random((1, 3, 64, 64)).astype(np.float32)
    out = augment(x, AugmentParams(), r)
    assert out.shape == x.shape and out.dtype == x.dtype
    assert out.min() >= 0 and out.max() <= 1


def test_augment_batch_independent_of_batch_order(rng):
    imgs = rng.random((4, 3, 64, 64)).astype(np.float32)
    idx = np.array([7, 3, 9, 1])
    a = data.augment_batch(imgs, AugmentParams(), 5, 2, idx)
    b = data.augment_batch(imgs[::-1], AugmentParams(), 5, 2, idx[::-1])
    np.testing.assert_array_equal(a, b[::-1])


def test_augment_params_validation():
    with pytest.raises(ValueError):
        AugmentParams(zoom_range=(0, 1))
    with pytest.raises(ValueError):
        AugmentParams(rotation_max_deg=200)
