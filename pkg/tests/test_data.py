import struct

import numpy as np
import pytest

from bnn_rebasin.data import (Dataset, batches, load_idx, load_mnist_dir,
                              subset, synthetic_blobs, synthetic_mnist_like,
                              write_idx)
from bnn_rebasin.errors import DataFormatError
from bnn_rebasin.numerics import Rng


@pytest.fixture
def idx_pair(tmp_path):
    rng = Rng(0)
    images = (rng.uniform(0.0, 1.0, size=(37, 28, 28)) * 255).astype(np.uint8)
    labels = rng.integers(0, 10, size=37).astype(np.uint8)
    ip = str(tmp_path / "imgs")
    lp = str(tmp_path / "lbls")
    write_idx(ip, lp, images, labels)
    return ip, lp, images, labels


class TestLoadIdx:
    def test_round_trip(self, idx_pair):
        ip, lp, images, labels = idx_pair
        d = load_idx(ip, lp)
        assert d.images.shape == (37, 784)
        np.testing.assert_array_equal(d.labels, labels)
        np.testing.assert_allclose(d.images,
                                   images.reshape(37, -1) / 255.0, atol=0)
        assert d.images.min() >= 0.0 and d.images.max() <= 1.0

    def test_bad_magic(self, idx_pair, tmp_path):
        _, lp, _, _ = idx_pair
        bad = tmp_path / "bad"
        bad.write_bytes(struct.pack(">IIII", 0, 5, 28, 28) + b"\x00" * (5 * 784))
        with pytest.raises(DataFormatError, match="magic"):
            load_idx(str(bad), lp)

    def test_truncated_payload(self, idx_pair, tmp_path):
        ip, lp, _, _ = idx_pair
        raw = open(ip, "rb").read()
        cut = tmp_path / "cut"
        cut.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(DataFormatError, match="byte"):
            load_idx(str(cut), lp)

    def test_count_mismatch(self, idx_pair, tmp_path):
        ip, _, _, _ = idx_pair
        lp2 = tmp_path / "short_labels"
        lp2.write_bytes(struct.pack(">II", 0x00000801, 5) + bytes(5))
        with pytest.raises(DataFormatError, match="mismatch"):
            load_idx(ip, str(lp2))

    def test_gzip_transparent(self, idx_pair, tmp_path):
        import gzip
        ip, lp, _, labels = idx_pair
        gz = tmp_path / "lbls.gz"
        gz.write_bytes(gzip.compress(open(lp, "rb").read()))
        d = load_idx(ip, str(gz))
        np.testing.assert_array_equal(d.labels, labels)

    def test_mnist_dir_conventional_names(self, tmp_path):
        rng = Rng(1)
        for stem, n in (("train", 23), ("t10k", 11)):
            images = (rng.uniform(size=(n, 28, 28)) * 255).astype(np.uint8)
            labels = rng.integers(0, 10, size=n).astype(np.uint8)
            write_idx(str(tmp_path / f"{stem}-images-idx3-ubyte"),
                      str(tmp_path / f"{stem}-labels-idx1-ubyte"),
                      images, labels)
        train, test = load_mnist_dir(str(tmp_path))
        assert train.size == 23 and test.size == 11

    def test_mnist_dir_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="missing"):
            load_mnist_dir(str(tmp_path))


class TestSubset:
    def test_full_size_is_permutation(self):
        rng = Rng(2)
        d = synthetic_blobs(3, 10, 4, rng.split("d"))
        s = subset(d, d.size, rng.split("s"))
        assert sorted(map(tuple, s.images)) == sorted(map(tuple, d.images))

    def test_empty_subset(self):
        rng = Rng(3)
        d = synthetic_blobs(2, 5, 3, rng.split("d"))
        s = subset(d, 0, rng.split("s"))
        assert s.size == 0

    def test_deterministic(self):
        rng1, rng2 = Rng(4), Rng(4)
        d = synthetic_blobs(3, 10, 4, rng1.split("d"))
        d2 = synthetic_blobs(3, 10, 4, rng2.split("d"))
        s1 = subset(d, 7, rng1.split("s"))
        s2 = subset(d2, 7, rng2.split("s"))
        np.testing.assert_array_equal(s1.images, s2.images)

    def test_oversized_request_rejected(self):
        d = synthetic_blobs(2, 5, 3, Rng(5))
        with pytest.raises(ValueError, match="exceeds"):
            subset(d, d.size + 1, Rng(0))


class TestBatches:
    def test_partition_covers_every_index_once(self):
        rng = Rng(6)
        d = Dataset(np.arange(10.0)[:, None] / 10.0, np.zeros(10, dtype=int),
                    num_classes=2)
        sizes = []
        seen = []
        for x, y in batches(d, 3, rng):
            sizes.append(x.shape[0])
            seen.extend((x[:, 0] * 10).round().astype(int).tolist())
        assert sizes == [3, 3, 3, 1]
        assert sorted(seen) == list(range(10))

    def test_single_full_batch(self):
        rng = Rng(7)
        d = synthetic_blobs(2, 5, 3, rng.split("d"))
        out = list(batches(d, 100, rng.split("b")))
        assert len(out) == 1 and out[0][0].shape[0] == d.size

    def test_epochs_with_different_rngs_reorder(self):
        rng = Rng(8)
        d = synthetic_blobs(2, 10, 3, rng.split("d"))
        e1 = np.concatenate([y for _, y in batches(d, 4, rng.split("e1"))])
        e2 = np.concatenate([y for _, y in batches(d, 4, rng.split("e2"))])
        assert not np.array_equal(e1, e2)
        np.testing.assert_array_equal(np.sort(e1), np.sort(e2))

    def test_bad_batch_size(self):
        d = synthetic_blobs(2, 5, 3, Rng(9))
        with pytest.raises(ValueError, match="batch_size"):
            list(batches(d, 0, Rng(0)))


class TestSyntheticBlobs:
    def test_construction_counts_and_balance(self):
        d = synthetic_blobs(10, 20, 16, Rng(10))
        assert d.size == 200
        assert np.bincount(d.labels, minlength=10).tolist() == [20] * 10

    def test_pixel_range(self):
        d = synthetic_blobs(4, 50, 8, Rng(11), std=0.5)
        assert d.images.min() >= 0.0 and d.images.max() <= 1.0

    def test_deterministic(self):
        d1 = synthetic_blobs(3, 10, 5, Rng(12))
        d2 = synthetic_blobs(3, 10, 5, Rng(12))
        np.testing.assert_array_equal(d1.images, d2.images)

    def test_two_blobs_learnable_by_tiny_mlp(self):
        from bnn_rebasin.inference import train_map
        from bnn_rebasin.model import ModelConfig, accuracy
        d = synthetic_blobs(2, 60, 2, Rng(13), std=0.04)
        w = train_map(d, ModelConfig(hidden_size=1), epochs=300, lr=1e-2,
                      batch_size=120, seed=0)
        assert accuracy(w, d) > 0.95

    def test_dim_validation(self):
        with pytest.raises(ValueError, match="dim"):
            synthetic_blobs(2, 5, 0, Rng(14))


class TestSyntheticMnistLike:
    def test_shapes_and_range(self):
        train, test = synthetic_mnist_like(300, 100, Rng(15))
        assert train.images.shape == (300, 784)
        assert test.images.shape == (100, 784)
        assert train.images.min() >= 0.0 and train.images.max() <= 1.0

    def test_deterministic(self):
        t1, _ = synthetic_mnist_like(50, 10, Rng(16))
        t2, _ = synthetic_mnist_like(50, 10, Rng(16))
        np.testing.assert_array_equal(t1.images, t2.images)

    def test_learnable(self):
        from bnn_rebasin.inference import train_map
        from bnn_rebasin.model import ModelConfig, accuracy
        train, test = synthetic_mnist_like(1000, 300, Rng(17),
                                           prototypes_per_class=2,
                                           label_noise=0.0)
        w = train_map(train, ModelConfig(hidden_size=16), epochs=10, lr=1e-3,
                      seed=0)
        assert accuracy(w, test) > 0.95


class TestDatasetInvariants:
    def test_label_range_validated(self):
        with pytest.raises(ValueError, match="labels"):
            Dataset(np.zeros((2, 3)), np.array([0, 10]), num_classes=10)

    def test_count_mismatch_validated(self):
        with pytest.raises(ValueError, match="images"):
            Dataset(np.zeros((2, 3)), np.array([0]))
