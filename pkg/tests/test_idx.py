import gzip
import struct

import numpy as np
import pytest

from pflego.errors import FormatError
from pflego.idx import load_idx, read_idx_images, read_idx_labels, write_idx

# two 2x2 images and their labels, byte for byte
IMAGES = bytes.fromhex("00000803" "00000002" "00000002" "00000002") + bytes([0, 255, 51, 102, 255, 0, 0, 204])
LABELS = bytes.fromhex("00000801" "00000002") + bytes([7, 3])


@pytest.fixture
def pair(tmp_path):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    img.write_bytes(IMAGES)
    lab.write_bytes(LABELS)
    return img, lab


def test_crafted_pair(pair):
    img, lab = pair
    x = read_idx_images(img)
    np.testing.assert_array_equal(x, [[0.0, 1.0, 0.2, 0.4], [1.0, 0.0, 0.0, 0.8]])
    np.testing.assert_array_equal(read_idx_labels(lab), [7, 3])


def test_grouped_by_class(pair):
    groups = load_idx(*pair)
    assert len(groups) == 8
    np.testing.assert_array_equal(groups[7], [[0.0, 1.0, 0.2, 0.4]])
    np.testing.assert_array_equal(groups[3], [[1.0, 0.0, 0.0, 0.8]])
    assert all(len(groups[c]) == 0 for c in (0, 1, 2, 4, 5, 6))


def test_gzip_is_transparent(tmp_path):
    img, lab = tmp_path / "img.idx.gz", tmp_path / "lab.idx.gz"
    img.write_bytes(gzip.compress(IMAGES))
    lab.write_bytes(gzip.compress(LABELS))
    np.testing.assert_array_equal(read_idx_labels(lab), [7, 3])
    assert read_idx_images(img).shape == (2, 4)


def test_labels_with_image_magic(tmp_path):
    bad = tmp_path / "lab.idx"
    bad.write_bytes(bytes.fromhex("00000803") + LABELS[4:])
    with pytest.raises(FormatError, match="0x00000803.*offset 0") as info:
        read_idx_labels(bad)
    assert info.value.offset == 0


def test_truncated_payload(tmp_path):
    bad = tmp_path / "img.idx"
    bad.write_bytes(IMAGES[:-3])
    with pytest.raises(FormatError, match="truncated") as info:
        read_idx_images(bad)
    assert info.value.offset == len(IMAGES) - 3


def test_truncated_header(tmp_path):
    bad = tmp_path / "img.idx"
    bad.write_bytes(IMAGES[:10])
    with pytest.raises(FormatError, match="header"):
        read_idx_images(bad)


def test_trailing_bytes(tmp_path):
    bad = tmp_path / "lab.idx"
    bad.write_bytes(LABELS + b"\x00")
    with pytest.raises(FormatError, match="trailing") as info:
        read_idx_labels(bad)
    assert info.value.offset == len(LABELS)


def test_count_mismatch(tmp_path, pair):
    img, _ = pair
    lab = tmp_path / "three.idx"
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes([1, 2, 3]))
    with pytest.raises(FormatError, match="2 images but 3 labels") as info:
        load_idx(img, lab)
    assert info.value.offset == 4


def test_write_round_trip(tmp_path, gen):
    images = gen.integers(0, 256, (5, 3, 4), dtype=np.uint8)
    labels = gen.integers(0, 10, 5, dtype=np.uint8)
    write_idx(tmp_path / "i", images)
    write_idx(tmp_path / "l", labels)
    np.testing.assert_array_equal(read_idx_images(tmp_path / "i"), images.reshape(5, 12) / 255.0)
    np.testing.assert_array_equal(read_idx_labels(tmp_path / "l"), labels)
    assert (tmp_path / "l").read_bytes()[:8] == struct.pack(">II", 0x801, 5)
