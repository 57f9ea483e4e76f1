"""Dataset plumbing: binary records, synthetic corpus, subsets, normalization."""

import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wavemix import data
from wavemix.errors import ConfigError, DataError

RECORD10 = 1 + data.CIFAR_IMAGE_BYTES
RECORD100 = 2 + data.CIFAR_IMAGE_BYTES


def fake_records(n, seed, classes=10):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, 3, 32, 32), dtype=np.uint8)
    labels = rng.integers(0, classes, size=n, dtype=np.uint8)
    return images, labels


class TestBinaryFormat:
    def test_record_arithmetic(self, tmp_path):
        assert RECORD10 == 3073
        assert 10000 * RECORD10 == 30730000
        images, labels = fake_records(4, 0)
        path = tmp_path / "b.bin"
        data.write_cifar_binary(path, images, labels)
        assert os.path.getsize(path) == 4 * RECORD10

    def test_roundtrip_bit_exact(self, tmp_path):
        images, labels = fake_records(6, 1)
        path = tmp_path / "b.bin"
        data.write_cifar_binary(path, images, labels)
        lab, img = data.read_cifar_binary(path, 1)
        assert (lab[:, 0] == labels).all()
        assert (img == images).all()
        assert img.dtype == np.uint8

    def test_label_byte_precedes_pixels(self, tmp_path):
        images, labels = fake_records(2, 2)
        path = tmp_path / "b.bin"
        data.write_cifar_binary(path, images, labels)
        raw = path.read_bytes()
        assert raw[0] == labels[0]
        assert raw[1] == images[0, 0, 0, 0]
        assert raw[RECORD10] == labels[1]

    def test_truncated_file_reports_offset(self, tmp_path):
        images, labels = fake_records(2, 3)
        path = tmp_path / "b.bin"
        data.write_cifar_binary(path, images, labels)
        path.write_bytes(path.read_bytes()[:6100])
        with pytest.raises(DataError, match="partial record starts at byte 3073"):
            data.read_cifar_binary(path, 1)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "b.bin"
        path.write_bytes(b"")
        with pytest.raises(DataError):
            data.read_cifar_binary(path, 1)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            data.read_cifar_binary(tmp_path / "nope.bin", 1)

    def test_zero_pixels_are_legal(self, tmp_path):
        path = tmp_path / "b.bin"
        data.write_cifar_binary(path, np.zeros((1, 3, 32, 32), np.uint8),
                                np.zeros(1, np.uint8))
        lab, img = data.read_cifar_binary(path, 1)
        assert lab[0, 0] == 0 and (img == 0).all()


def make_cifar10_root(tmp_path, per_batch=2, bad_label=None):
    base = tmp_path / "cifar-10-batches-bin"
    base.mkdir()
    all_images, all_labels = [], []
    for i in range(1, 6):
        images, labels = fake_records(per_batch, 10 + i)
        if bad_label is not None and i == 1:
            labels[0] = bad_label
        data.write_cifar_binary(base / f"data_batch_{i}.bin", images, labels)
        all_images.append(images)
        all_labels.append(labels)
    test_images, test_labels = fake_records(per_batch, 99)
    data.write_cifar_binary(base / "test_batch.bin", test_images, test_labels)
    return tmp_path, np.concatenate(all_images), np.concatenate(all_labels)


class TestCifarLoaders:
    def test_cifar10_scaling_and_order(self, tmp_path):
        root, images, labels = make_cifar10_root(tmp_path)
        ds = data.load_cifar10(root)
        assert ds.classes == 10
        assert ds.train_x.shape == (10, 3, 32, 32)
        assert (ds.train_y == labels).all()
        assert (ds.train_x == images / 255.0).all()
        assert ds.train_x.min() >= 0.0 and ds.train_x.max() <= 1.0

    def test_cifar10_bad_label_names_record(self, tmp_path):
        root, _, _ = make_cifar10_root(tmp_path, bad_label=10)
        with pytest.raises(DataError, match=r"label 10 out of range \[0, 10\) in record 0"):
            data.load_cifar10(root)

    def test_cifar100_uses_fine_label_byte(self, tmp_path):
        base = tmp_path / "cifar-100-binary"
        base.mkdir()
        rng = np.random.default_rng(4)
        for fname, n in (("train.bin", 3), ("test.bin", 2)):
            images = rng.integers(0, 256, size=(n, 3, 32, 32), dtype=np.uint8)
            coarse = rng.integers(0, 20, size=n, dtype=np.uint8)
            fine = rng.integers(0, 100, size=n, dtype=np.uint8)
            data.write_cifar_binary(base / fname, images,
                                    np.stack([coarse, fine], axis=1))
            if fname == "train.bin":
                want = fine.astype(np.int64)
        ds = data.load_cifar100(tmp_path)
        assert ds.classes == 100
        assert (ds.train_y == want).all()

    def test_loader_requires_root(self):
        with pytest.raises(ConfigError, match="root"):
            data.load_dataset("cifar10")

    def test_unknown_dataset(self):
        with pytest.raises(ConfigError, match="unknown dataset"):
            data.load_dataset("imagenet")


class TestSynthetic:
    def test_shapes_range_dtype(self):
        x, y = data.synthetic_classification(30, classes=10, size=16, seed=5)
        assert x.shape == (30, 3, 16, 16) and y.shape == (30,)
        assert x.dtype == np.float64 and y.dtype == np.int64
        assert x.min() >= 0.0 and x.max() <= 1.0

    def test_exact_label_balance(self):
        _, y = data.synthetic_classification(40, classes=10, seed=6)
        assert (np.bincount(y, minlength=10) == 4).all()
        _, y = data.synthetic_classification(45, classes=10, seed=6)
        counts = np.bincount(y, minlength=10)
        assert (counts[:5] == 5).all() and (counts[5:] == 4).all()

    def test_deterministic_in_seed(self):
        a = data.synthetic_classification(20, seed=7)
        b = data.synthetic_classification(20, seed=7)
        c = data.synthetic_classification(20, seed=8)
        assert (a[0] == b[0]).all() and (a[1] == b[1]).all()
        assert not (a[0] == c[0]).all()

    def test_classes_are_visually_distinct(self):
        # Means over the labelled quadrant differ from the background, so a
        # classifier has an actual signal to find.
        x, y = data.synthetic_classification(200, classes=4, size=8, seed=9)
        for k, (r0, c0) in enumerate(((0, 0), (0, 4), (4, 0), (4, 4))):
            sel = x[y == k]
            quad = sel[:, :, r0:r0 + 4, c0:c0 + 4]
            assert quad.std() > 1.5 * sel[:, :, (4 - r0):(8 - r0), (4 - c0):(8 - c0)].std()

    def test_too_many_classes_rejected(self):
        with pytest.raises(ConfigError):
            data.synthetic_classification(10, classes=20, size=8)


class TestLoadDataset:
    def test_synthetic_default_split_sizes(self):
        ds = data.load_dataset("synthetic", seed=0, image_size=8)
        assert ds.train_x.shape == (2048, 3, 8, 8)
        assert ds.test_x.shape == (512, 3, 8, 8)

    def test_subset_sizes_and_purity(self):
        ds = data.load_dataset("synthetic", seed=0, subset=50, image_size=8)
        assert ds.train_x.shape[0] == 50 and ds.test_x.shape[0] == 10
        ds7 = data.load_dataset("synthetic", seed=0, subset=7, image_size=8)
        assert ds7.train_x.shape[0] == 7 and ds7.test_x.shape[0] == 1
        full = data.load_dataset("synthetic", seed=0, image_size=8)
        # Subset rows are rows of the full corpus, not resampled data.
        key = {full.train_x[i].tobytes(): full.train_y[i]
               for i in range(full.train_x.shape[0])}
        for i in range(50):
            assert key[ds.train_x[i].tobytes()] == ds.train_y[i]

    def test_subset_grows_synthetic_pool(self):
        ds = data.load_dataset("synthetic", seed=0, subset=3000, image_size=8)
        assert ds.train_x.shape[0] == 3000 and ds.test_x.shape[0] == 600

    def test_subset_bounds(self):
        with pytest.raises(ConfigError, match="subset"):
            data.load_dataset("synthetic", seed=0, subset=0, image_size=8)

    def test_deterministic_across_calls(self):
        a = data.load_dataset("synthetic", seed=3, subset=20, image_size=8)
        b = data.load_dataset("synthetic", seed=3, subset=20, image_size=8)
        assert (a.train_x == b.train_x).all() and (a.train_y == b.train_y).all()
        assert (a.test_x == b.test_x).all()


class TestNormalize:
    def test_train_statistics_only(self):
        ds = data.load_dataset("synthetic", seed=1, subset=64, image_size=8)
        train_before = ds.train_x.copy()
        test_before = ds.test_x.copy()
        mean = train_before.mean(axis=(0, 2, 3), keepdims=True)
        std = train_before.std(axis=(0, 2, 3), keepdims=True)
        data.normalize_(ds)
        assert_allclose(ds.train_x.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
        assert_allclose(ds.train_x.std(axis=(0, 2, 3)), 1.0, atol=1e-12)
        assert_allclose(ds.test_x, (test_before - mean) / std, atol=1e-12)
        assert_allclose(ds.norm_mean, mean[0, :, 0, 0], atol=0)

    def test_constant_channel_does_not_divide_by_zero(self):
        x = np.zeros((4, 3, 8, 8))
        ds = data.Dataset("t", 2, x.copy(), np.zeros(4, np.int64),
                          x.copy(), np.zeros(4, np.int64))
        data.normalize_(ds)
        assert np.isfinite(ds.train_x).all()
        assert (ds.norm_std == 1.0).all()


class TestOrderingAndAugment:
    def test_epoch_order_pure_and_permutes(self):
        a = data.epoch_order(100, seed=5, epoch=2)
        b = data.epoch_order(100, seed=5, epoch=2)
        c = data.epoch_order(100, seed=5, epoch=3)
        assert (a == b).all()
        assert not (a == c).all()
        assert (np.sort(a) == np.arange(100)).all()

    def test_augment_shape_and_determinism(self):
        x = np.random.default_rng(11).random((8, 3, 8, 8))
        a = data.augment_batch(x, np.random.default_rng(42))
        b = data.augment_batch(x, np.random.default_rng(42))
        assert a.shape == x.shape and a.dtype == x.dtype
        assert (a == b).all()

    def test_augment_center_crop_recovers_input(self):
        # Force offsets to the pad midpoint and flips off via a stub rng.
        class Stub:
            def integers(self, low, high, size):
                return np.full(size, 4)

            def random(self, n):
                return np.ones(n)

        x = np.random.default_rng(12).random((3, 3, 8, 8))
        assert (data.augment_batch(x, Stub()) == x).all()
