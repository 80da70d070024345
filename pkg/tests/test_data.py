import struct

import numpy as np
import pytest

from miscal import (
    Dataset,
    FormatError,
    InvalidConfigError,
    InvalidInputError,
    load_dataset,
    parse_dataset_spec,
    save_cifar_bin,
    split_dataset,
    synth_blobs,
)


def idx_images_bytes(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape
    return struct.pack(">iiii", 2051, n, rows, cols) + images.astype(np.uint8).tobytes()


def idx_labels_bytes(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">ii", 2049, labels.size) + labels.tobytes()


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (3, 4, 4), dtype=np.uint8)
    labels = np.array([0, 7, 9], dtype=np.uint8)
    img_path = tmp_path / "images.idx"
    lab_path = tmp_path / "labels.idx"
    img_path.write_bytes(idx_images_bytes(images))
    lab_path.write_bytes(idx_labels_bytes(labels))
    return img_path, lab_path, images, labels


class TestIdxLoader:
    def test_parses_and_scales(self, idx_pair):
        img_path, lab_path, images, labels = idx_pair
        ds = load_dataset(img_path, "idx", labels_path=lab_path)
        assert len(ds) == 3 and ds.dim == 16
        np.testing.assert_allclose(
            ds.features, images.reshape(3, 16).astype(np.float32) / 255.0, atol=0
        )
        np.testing.assert_array_equal(ds.labels, labels)

    def test_bad_image_magic(self, idx_pair, tmp_path):
        img_path, lab_path, images, _ = idx_pair
        bad = tmp_path / "bad.idx"
        bad.write_bytes(struct.pack(">iiii", 2052, 3, 4, 4) + images.tobytes())
        with pytest.raises(FormatError) as exc:
            load_dataset(bad, "idx", labels_path=lab_path)
        assert "offset 0" in str(exc.value)

    def test_truncated_image_payload(self, idx_pair, tmp_path):
        img_path, lab_path, _, _ = idx_pair
        data = img_path.read_bytes()
        cut = tmp_path / "cut.idx"
        cut.write_bytes(data[:-5])
        with pytest.raises(FormatError) as exc:
            load_dataset(cut, "idx", labels_path=lab_path)
        assert "byte offset" in str(exc.value)

    def test_truncated_header(self, tmp_path, idx_pair):
        _, lab_path, _, _ = idx_pair
        short = tmp_path / "short.idx"
        short.write_bytes(b"\x00\x00\x08\x03\x00\x00")
        with pytest.raises(FormatError):
            load_dataset(short, "idx", labels_path=lab_path)

    def test_label_out_of_range_names_its_offset(self, idx_pair, tmp_path):
        img_path, _, _, _ = idx_pair
        lab = tmp_path / "labels.idx"
        lab.write_bytes(idx_labels_bytes([0, 12, 3]))
        with pytest.raises(FormatError) as exc:
            load_dataset(img_path, "idx", labels_path=lab)
        assert "offset 9" in str(exc.value)  # header is 8 bytes, bad label is second

    def test_count_mismatch_between_files(self, idx_pair, tmp_path):
        img_path, _, _, _ = idx_pair
        lab = tmp_path / "labels.idx"
        lab.write_bytes(idx_labels_bytes([1, 2]))
        with pytest.raises(FormatError):
            load_dataset(img_path, "idx", labels_path=lab)

    def test_labels_path_required(self, idx_pair):
        img_path, _, _, _ = idx_pair
        with pytest.raises(InvalidConfigError):
            load_dataset(img_path, "idx")


class TestCifarLoader:
    def make_file(self, tmp_path, n=10, seed=1):
        rng = np.random.default_rng(seed)
        records = np.empty((n, 3073), dtype=np.uint8)
        records[:, 0] = rng.integers(0, 10, n)
        records[:, 1:] = rng.integers(0, 256, (n, 3072))
        path = tmp_path / "batch.bin"
        path.write_bytes(records.tobytes())
        return path, records

    def test_parses_fixed_records(self, tmp_path):
        path, records = self.make_file(tmp_path)
        ds = load_dataset(path, "cifar_bin")
        assert len(ds) == 10 and ds.dim == 3072
        np.testing.assert_array_equal(ds.labels, records[:, 0])
        np.testing.assert_allclose(ds.features, records[:, 1:].astype(np.float32) / 255.0)

    def test_truncated_final_record_returns_nothing(self, tmp_path):
        path, records = self.make_file(tmp_path)
        cut = tmp_path / "cut.bin"
        cut.write_bytes(records.tobytes()[:-100])
        with pytest.raises(FormatError) as exc:
            load_dataset(cut, "cifar_bin")
        assert "byte offset" in str(exc.value)

    def test_label_out_of_range_names_record_offset(self, tmp_path):
        path, records = self.make_file(tmp_path)
        records[3, 0] = 11
        bad = tmp_path / "bad.bin"
        bad.write_bytes(records.tobytes())
        with pytest.raises(FormatError) as exc:
            load_dataset(bad, "cifar_bin")
        assert f"offset {3 * 3073}" in str(exc.value)

    def test_round_trip_reproduces_bytes(self, tmp_path):
        path, _ = self.make_file(tmp_path, n=7, seed=2)
        ds = load_dataset(path, "cifar_bin")
        out = tmp_path / "again.bin"
        save_cifar_bin(ds, out)
        assert out.read_bytes() == path.read_bytes()

    def test_save_rejects_wrong_feature_width(self, tmp_path):
        with pytest.raises(InvalidConfigError):
            save_cifar_bin(synth_blobs(3, 4, 8, 0.05, seed=3), tmp_path / "x.bin")

    def test_unknown_format_rejected(self, tmp_path):
        path, _ = self.make_file(tmp_path)
        with pytest.raises(InvalidConfigError):
            load_dataset(path, "cifar")


class TestSynthBlobs:
    def test_same_seed_is_identical(self):
        a = synth_blobs(4, 10, 8, 0.03, seed=5)
        b = synth_blobs(4, 10, 8, 0.03, seed=5)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_zero_spread_collapses_to_centers(self):
        ds = synth_blobs(3, 5, 6, 0.0, seed=6)
        for label in range(3):
            points = ds.features[ds.labels == label]
            assert np.all(points == points[0])

    def test_all_classes_present_in_any_prefix(self):
        ds = synth_blobs(10, 200, 32, 0.05, seed=7)
        assert len(set(ds.take(500).labels.tolist())) == 10

    def test_bounds_and_label_range(self):
        ds = synth_blobs(5, 20, 16, 0.4, seed=8)
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
        assert ds.labels.min() >= 0 and ds.labels.max() < 5

    def test_invalid_configs_rejected(self):
        with pytest.raises(InvalidConfigError):
            synth_blobs(1, 5, 8, 0.1, seed=0)
        with pytest.raises(InvalidConfigError):
            synth_blobs(3, 5, 1, 0.1, seed=0)
        with pytest.raises(InvalidConfigError):
            synth_blobs(3, 5, 8, -0.1, seed=0)


class TestDatasetInvariants:
    def test_features_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.array([[0.5, 1.5]], np.float32), np.array([0]), 2, "bad")

    def test_label_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.array([[0.5, 0.5]], np.float32), np.array([2]), 2, "bad")

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.zeros((3, 2), np.float32), np.array([0, 1]), 2, "bad")

    def test_features_are_frozen(self):
        ds = synth_blobs(3, 4, 5, 0.05, seed=9)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 0.0


class TestSpecStrings:
    def test_synth_spec_round_trip(self):
        spec = "synth:K=10,n=200,dim=32,spread=0.05,seed=7"
        ds = parse_dataset_spec(spec)
        assert ds.name == spec
        assert len(ds) == 2000 and ds.dim == 32 and ds.num_classes == 10
        direct = synth_blobs(10, 200, 32, 0.05, seed=7)
        assert np.array_equal(ds.features, direct.features)

    def test_idx_spec(self, idx_pair):
        img_path, lab_path, _, labels = idx_pair
        ds = parse_dataset_spec(f"idx:images={img_path},labels={lab_path},k=10")
        np.testing.assert_array_equal(ds.labels, labels)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(InvalidConfigError):
            parse_dataset_spec("webdataset:foo")

    def test_malformed_synth_spec_rejected(self):
        with pytest.raises(InvalidConfigError):
            parse_dataset_spec("synth:K=10,n=200")

    def test_missing_scheme_rejected(self):
        with pytest.raises(InvalidConfigError):
            parse_dataset_spec("just-a-path.bin")


class TestSplit:
    def test_deterministic_and_disjoint(self):
        ds = synth_blobs(4, 25, 6, 0.05, seed=10)
        a_train, a_test = split_dataset(ds, 0.8, seed=3)
        b_train, b_test = split_dataset(ds, 0.8, seed=3)
        assert np.array_equal(a_train.features, b_train.features)
        assert len(a_train) == 80 and len(a_test) == 20

    def test_bad_fraction_rejected(self):
        ds = synth_blobs(3, 5, 6, 0.05, seed=11)
        with pytest.raises(InvalidConfigError):
            split_dataset(ds, 1.0, seed=0)
