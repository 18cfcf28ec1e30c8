"""Tests for IDX parsing, sequence encoding, permutation, synthetic task."""

import gzip

import numpy as np
import pytest

from brfnet.data import (
    DataFormatError,
    PermutationSpec,
    SequenceDataset,
    load_idx_images,
    load_idx_labels,
    load_mnist,
    load_mnist_idx,
    permute,
    synthetic_resonance_task,
    to_sequential,
    write_idx_images,
    write_idx_labels,
)


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (12, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 12, dtype=np.uint8)
    ipath = tmp_path / "imgs-idx3-ubyte"
    lpath = tmp_path / "lbls-idx1-ubyte"
    write_idx_images(ipath, images)
    write_idx_labels(lpath, labels)
    return ipath, lpath, images, labels


class TestIdxLoading:
    def test_round_trip(self, idx_pair):
        ipath, lpath, images, labels = idx_pair
        np.testing.assert_array_equal(load_idx_images(ipath), images)
        np.testing.assert_array_equal(load_idx_labels(lpath), labels)

    def test_scaled_pair(self, idx_pair):
        ipath, lpath, images, labels = idx_pair
        flat, lab = load_mnist_idx(ipath, lpath)
        assert flat.shape == (12, 784)
        assert flat.min() >= 0.0 and flat.max() <= 1.0
        np.testing.assert_allclose(flat[0], images[0].reshape(-1) / 255.0)
        np.testing.assert_array_equal(lab, labels)

    def test_gzip_accepted(self, idx_pair, tmp_path):
        ipath, _, images, _ = idx_pair
        gz = tmp_path / "imgs-idx3-ubyte.gz"
        with open(ipath, "rb") as f, gzip.open(gz, "wb") as g:
            g.write(f.read())
        np.testing.assert_array_equal(load_idx_images(gz), images)

    def test_bad_magic(self, idx_pair):
        ipath, lpath, _, _ = idx_pair
        with pytest.raises(DataFormatError, match="magic"):
            load_idx_images(lpath)
        with pytest.raises(DataFormatError, match="magic"):
            load_idx_labels(ipath)

    def test_truncated_file(self, idx_pair, tmp_path):
        ipath, _, _, _ = idx_pair
        cut = tmp_path / "cut-idx3-ubyte"
        cut.write_bytes(ipath.read_bytes()[:-100])
        with pytest.raises(DataFormatError, match="truncated"):
            load_idx_images(cut)
        head = tmp_path / "head-idx3-ubyte"
        head.write_bytes(ipath.read_bytes()[:10])
        with pytest.raises(DataFormatError, match="truncated"):
            load_idx_images(head)

    def test_count_mismatch(self, idx_pair, tmp_path):
        ipath, _, _, _ = idx_pair
        short = tmp_path / "short-idx1-ubyte"
        write_idx_labels(short, np.zeros(5, dtype=np.uint8))
        with pytest.raises(DataFormatError, match="mismatch"):
            load_mnist_idx(ipath, short)

    def test_load_mnist_by_convention(self, tmp_path, idx_pair):
        ipath, lpath, images, labels = idx_pair
        (tmp_path / "train-images-idx3-ubyte").write_bytes(ipath.read_bytes())
        (tmp_path / "train-labels-idx1-ubyte").write_bytes(lpath.read_bytes())
        flat, lab = load_mnist(tmp_path, "train")
        assert flat.shape == (12, 784)
        with pytest.raises(FileNotFoundError):
            load_mnist(tmp_path, "test")


class TestToSequential:
    def test_zero_image(self):
        ds = to_sequential(np.zeros((1, 28, 28)), np.array([0]))
        assert ds.n_steps == 784 and ds.n_in == 1
        np.testing.assert_array_equal(ds.sequences, 0.0)

    def test_pixel_order_is_row_major(self):
        img = np.zeros((1, 28, 28))
        img[0, 3, 5] = 1.0
        ds = to_sequential(img, np.array([7]))
        assert ds.sequences[0, 28 * 3 + 5, 0] == 1.0
        assert ds.sequences.sum() == 1.0

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        imgs = rng.random((4, 28, 28))
        ds = to_sequential(imgs, np.zeros(4, dtype=int))
        np.testing.assert_array_equal(ds.sequences.reshape(4, 28, 28), imgs)

    def test_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            to_sequential(np.zeros((1, 27, 28)), np.array([0]))


class TestPermutation:
    def test_identity_leaves_dataset(self):
        ds = synthetic_resonance_task(0, n_steps=64, n_samples=8)
        spec = PermutationSpec(seed=0, permutation=np.arange(64))
        out = permute(ds, spec)
        np.testing.assert_array_equal(out.sequences, ds.sequences)

    def test_inverse_restores(self):
        ds = synthetic_resonance_task(0, n_steps=64, n_samples=8)
        spec = PermutationSpec.from_seed(3, length=64)
        out = permute(permute(ds, spec), spec.inverse())
        np.testing.assert_array_equal(out.sequences, ds.sequences)

    def test_same_seed_same_permutation(self):
        a = PermutationSpec.from_seed(9, length=784)
        b = PermutationSpec.from_seed(9, length=784)
        np.testing.assert_array_equal(a.permutation, b.permutation)

    def test_rejects_non_bijection(self):
        with pytest.raises(ValueError):
            PermutationSpec(seed=0, permutation=np.array([0, 0, 2]))

    def test_length_mismatch(self):
        ds = synthetic_resonance_task(0, n_steps=64, n_samples=8)
        with pytest.raises(ValueError, match="length"):
            permute(ds, PermutationSpec.from_seed(0, length=100))

    def test_moves_the_right_timestep(self):
        ds = synthetic_resonance_task(0, n_steps=64, n_samples=4)
        spec = PermutationSpec.from_seed(5, length=64)
        out = permute(ds, spec)
        np.testing.assert_array_equal(out.sequences[:, 10],
                                      ds.sequences[:, spec.permutation[10]])


class TestSyntheticTask:
    def test_noise_free_sequences_are_exact_sinusoids(self):
        ds = synthetic_resonance_task(0, n_classes=2, n_steps=80,
                                      noise_level=0.0, n_samples=16)
        # reconstruct each sample from its first two values' implied phase
        omegas = 5.0 + (np.arange(2) + 0.5) * 5.0 / 2
        t = np.arange(80) * 0.01
        for i in range(16):
            k = ds.labels[i]
            phi = np.arcsin(np.clip(ds.sequences[i, 0, 0], -1, 1))
            # two phase branches; accept whichever reconstructs
            cands = [phi, np.pi - phi]
            ok = any(np.allclose(np.sin(omegas[k] * t + c),
                                 ds.sequences[i, :, 0], atol=1e-9)
                     for c in cands)
            assert ok

    def test_deterministic(self):
        a = synthetic_resonance_task(7)
        b = synthetic_resonance_task(7)
        np.testing.assert_array_equal(a.sequences, b.sequences)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_distinct_frequencies_and_balance(self):
        ds = synthetic_resonance_task(1, n_classes=4, n_samples=100)
        counts = np.bincount(ds.labels, minlength=4)
        assert counts.max() - counts.min() <= 1
        # frequencies are distinct by construction: spot-check via FFT peaks
        # (long window so neighboring class frequencies land in separate bins)
        ds0 = synthetic_resonance_task(1, n_classes=4, n_steps=2000,
                                       noise_level=0.0, n_samples=8)
        peaks = set()
        for i in range(8):
            spec = np.abs(np.fft.rfft(ds0.sequences[i, :, 0]))
            peaks.add((ds0.labels[i], int(spec.argmax())))
        by_class = {}
        for label, peak in peaks:
            by_class.setdefault(label, set()).add(peak)
        bins = [next(iter(v)) for v in by_class.values()]
        assert len(set(bins)) == len(bins)

    def test_amplitude_bound(self):
        ds = synthetic_resonance_task(2, noise_level=0.1, n_samples=64)
        assert np.abs(ds.sequences).max() <= 1.0 + 3 * 0.1 + 1.0  # loose sanity

    def test_validation(self):
        with pytest.raises(ValueError):
            synthetic_resonance_task(0, n_classes=1)
        with pytest.raises(ValueError):
            synthetic_resonance_task(0, n_steps=10)


class TestSequenceDataset:
    def test_rejects_label_out_of_range(self):
        with pytest.raises(DataFormatError):
            SequenceDataset(np.zeros((2, 5, 1)), np.array([0, 4]), n_classes=3)

    def test_rejects_count_mismatch(self):
        with pytest.raises(DataFormatError):
            SequenceDataset(np.zeros((2, 5, 1)), np.array([0]), n_classes=3)

    def test_subset(self):
        ds = synthetic_resonance_task(0, n_samples=10)
        sub = ds.subset(np.array([1, 3]), split="val")
        assert len(sub) == 2 and sub.split == "val"
        np.testing.assert_array_equal(sub.sequences, ds.sequences[[1, 3]])
