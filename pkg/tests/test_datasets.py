import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacsw.bounds import estimate_diameter
from pacsw.datasets import (
    SyntheticSpec,
    generate,
    load_csv,
    load_idx_images,
    random_psd,
    read_idx_images,
    read_idx_labels,
    save_csv,
    write_idx,
)
from pacsw.errors import DataError
from pacsw.measures import PointCloud
from pacsw.rng import Stream
from pacsw.sliced import sw_estimate
from pacsw.sphere import UniformSlices

# --- synthetic pairs ----------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(
    st.sampled_from(["gaussian", "uniform_cube"]),
    st.integers(1, 6),
    st.integers(1, 50),
    st.integers(0, 2**31),
    st.sampled_from(["identity", "random_psd"]),
)
def test_generate_is_deterministic(kind, dim, n, seed, covariance):
    spec = SyntheticSpec(kind=kind, dim=dim, n=n, seed=seed, covariance=covariance, mean_shift=1.0)
    (a, b), (c, e) = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.points, c.points)
    np.testing.assert_array_equal(b.points, e.points)
    assert a.points.shape == (n, dim) and b.points.shape == (n, dim)


def test_seeds_differ():
    a, _ = generate(SyntheticSpec(seed=1))
    b, _ = generate(SyntheticSpec(seed=2))
    assert not np.array_equal(a.points, b.points)


def test_cube_diameter():
    d = 4
    mu, nu = generate(SyntheticSpec(kind="uniform_cube", dim=d, n=2000, side=5.0, seed=3))
    assert estimate_diameter(mu) <= 5.0 * math.sqrt(d)
    assert estimate_diameter(nu) <= 5.0 * math.sqrt(d)
    assert mu.points.min() >= 0.0 and mu.points.max() <= 5.0


def test_cube_support_diameter_covers_shifted_pair():
    spec = SyntheticSpec(kind="uniform_cube", dim=3, n=1000, side=2.0, mean_shift=1.5, seed=4)
    mu, nu = generate(spec)
    assert estimate_diameter(mu, nu) <= spec.support_diameter()
    with pytest.raises(ValueError):
        SyntheticSpec(kind="gaussian").support_diameter()


def test_gaussian_mean_difference():
    n = 5000
    mu, nu = generate(SyntheticSpec(dim=2, n=n, mean_shift=4.0, seed=5))
    diff = nu.points.mean(axis=0) - mu.points.mean(axis=0)
    # each coordinate mean has variance 1/n; the difference 2/n
    assert np.all(np.abs(diff - 4.0) <= 3 * math.sqrt(2 / n))


def test_gaussian_covariance():
    spec = SyntheticSpec(dim=3, n=200_000, covariance="random_psd", cov_seed=9, seed=6)
    mu, _ = generate(spec)
    np.testing.assert_allclose(np.cov(mu.points.T), random_psd(3, 9), atol=0.03)


def test_random_psd_shape():
    s = random_psd(5, 1)
    np.testing.assert_allclose(s, s.T)
    assert np.linalg.eigvalsh(s).min() >= -1e-12
    np.testing.assert_array_equal(s, random_psd(5, 1))


def test_no_shift_gives_small_sw():
    values = []
    for n in (100, 10_000):
        mu, nu = generate(SyntheticSpec(dim=3, n=n, seed=7))
        values.append(sw_estimate(mu, nu, UniformSlices(3), 2, 200, Stream(0)).value)
    assert values[1] < values[0] / 10
    assert values[1] < 0.01


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="ball"), dict(covariance="full"), dict(n=0), dict(dim=0), dict(side=0.0), dict(mean_shift=-1.0)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SyntheticSpec(**kwargs)


# --- CSV ------------------------------------------------------------------------------


def write(tmp_path, text, name="x.csv", newline="\n"):
    path = tmp_path / name
    path.write_bytes(text.replace("\n", newline).encode())
    return path


def test_csv_example(tmp_path):
    cloud = load_csv(write(tmp_path, "1,2\n3,4\n"))
    np.testing.assert_array_equal(cloud.points, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(cloud.weights, [0.5, 0.5])


def test_csv_crlf(tmp_path):
    cloud = load_csv(write(tmp_path, "1,2\n3,4\n", newline="\r\n"))
    assert cloud.n == 2 and cloud.dim == 2


def test_csv_ragged_row(tmp_path):
    with pytest.raises(DataError, match="line=2") as info:
        load_csv(write(tmp_path, "1,2\n3\n"))
    assert info.value.line == 2


@pytest.mark.parametrize("text, line", [("1,2\n3,x\n", 2), ("nan,1\n", 1), ("1,2\n0,1\n1,inf\n", 3)])
def test_csv_bad_values(tmp_path, text, line):
    with pytest.raises(DataError) as info:
        load_csv(write(tmp_path, text))
    assert info.value.line == line


def test_csv_empty(tmp_path):
    with pytest.raises(DataError, match="empty"):
        load_csv(write(tmp_path, ""))


def test_csv_missing(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_csv_large(tmp_path):
    x = np.random.default_rng(0).normal(size=(100_000, 3))
    path = tmp_path / "big.csv"
    save_csv(PointCloud(x), path)
    cloud = load_csv(path)
    assert cloud.n == 100_000
    np.testing.assert_array_equal(cloud.points, x)


# --- IDX --------------------------------------------------------------------------------


@pytest.fixture
def idx_pair(tmp_path):
    images = np.array([[[0, 255], [10, 20]], [[1, 2], [3, 4]]], dtype=np.uint8)
    labels = np.array([4, 5], dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(images, labels, ip, lp)
    return images, labels, ip, lp


def test_idx_round_trip(idx_pair):
    images, labels, ip, lp = idx_pair
    np.testing.assert_array_equal(read_idx_images(ip), images)
    np.testing.assert_array_equal(read_idx_labels(lp), labels)


def test_idx_class_clouds(idx_pair):
    images, _, ip, lp = idx_pair
    clouds = load_idx_images(ip, lp, {4, 5})
    assert set(clouds) == {4, 5}
    assert clouds[4].n == 1 and clouds[4].dim == 4
    np.testing.assert_allclose(clouds[4].points[0], [0, 1, 10 / 255, 20 / 255])
    raw = load_idx_images(ip, lp, [5], flatten_scale=1.0)
    np.testing.assert_array_equal(raw[5].points[0], images[1].ravel())


def test_idx_pixel_range(tmp_path):
    g = np.random.default_rng(1)
    images = g.integers(0, 256, size=(50, 4, 4), dtype=np.uint8)
    labels = np.repeat([4, 5], 25).astype(np.uint8)
    ip, lp = tmp_path / "i", tmp_path / "l"
    write_idx(images, labels, ip, lp)
    for cloud in load_idx_images(ip, lp, (4, 5)).values():
        assert cloud.points.min() >= 0.0 and cloud.points.max() <= 1.0
        assert estimate_diameter(cloud) <= math.sqrt(16)


def test_idx_wrong_magic(idx_pair, tmp_path):
    _, _, ip, lp = idx_pair
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">I", 0x00000802) + ip.read_bytes()[4:])
    with pytest.raises(DataError, match="unexpected magic") as info:
        load_idx_images(bad, lp, {4})
    assert info.value.offset == 0


def test_idx_truncated_payload(idx_pair, tmp_path):
    _, _, ip, lp = idx_pair
    short = tmp_path / "short.idx"
    short.write_bytes(ip.read_bytes()[:-1])
    with pytest.raises(DataError, match="truncated") as info:
        read_idx_images(short)
    assert info.value.offset == 16 + 8 - 1


def test_idx_truncated_header(tmp_path):
    path = tmp_path / "h.idx"
    path.write_bytes(b"\x00\x00\x08")
    with pytest.raises(DataError, match="truncated header"):
        read_idx_labels(path)


def test_idx_count_mismatch(idx_pair, tmp_path):
    images, _, ip, _ = idx_pair
    lp = tmp_path / "three.idx"
    write_idx(images, np.array([4, 5, 4]), tmp_path / "unused", lp)
    with pytest.raises(DataError, match="does not match") as info:
        load_idx_images(ip, lp, {4})
    assert info.value.offset == 4


def test_idx_missing_class(idx_pair):
    _, _, ip, lp = idx_pair
    with pytest.raises(DataError, match="label 7"):
        load_idx_images(ip, lp, {7})
