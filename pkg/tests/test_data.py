import os
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxnet.data import (
    Dataset,
    filter_binary,
    load_mnist,
    parse_idx,
    partition_heterogeneous,
    serialize_idx,
    synthetic_binary,
)
from proxnet.errors import DataError, DataFormatError


class TestIdxParser:
    def test_minimal_label_file(self):
        data = struct.pack(">II", 0x00000801, 2) + bytes([5, 0])
        out = parse_idx(data)
        assert out.tolist() == [5, 0]

    def test_minimal_image_file(self):
        data = struct.pack(">IIII", 0x00000803, 2, 2, 2) + bytes(range(8))
        out = parse_idx(data)
        assert out.shape == (2, 2, 2)
        assert out[1, 1, 1] == 7

    def test_truncated_payload_names_lengths(self):
        data = struct.pack(">II", 0x00000801, 3) + bytes([1, 2])
        with pytest.raises(DataFormatError, match="expected 3 bytes .* got 2"):
            parse_idx(data)

    def test_wrong_magic(self):
        data = struct.pack(">II", 0x00000805, 1) + bytes([0])
        with pytest.raises(DataFormatError, match="magic"):
            parse_idx(data)

    def test_truncated_header(self):
        with pytest.raises(DataFormatError, match="header"):
            parse_idx(struct.pack(">I", 0x00000803))

    @given(arrays(np.uint8, st.integers(1, 40)))
    @settings(max_examples=50, deadline=None)
    def test_label_round_trip(self, tensor):
        assert np.array_equal(parse_idx(serialize_idx(tensor)), tensor)

    @given(arrays(np.uint8, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))))
    @settings(max_examples=50, deadline=None)
    def test_image_round_trip(self, tensor):
        assert np.array_equal(parse_idx(serialize_idx(tensor)), tensor)


class TestFilterBinary:
    def _dataset(self, labels):
        labels = np.asarray(labels)
        feats = np.arange(len(labels), dtype=np.float64)[:, None]
        return Dataset(features=feats, labels=labels)

    def test_drops_other_labels(self):
        ds = self._dataset([2, 6, 7, 2, 6])
        out = filter_binary(ds, 2, 6)
        assert out.n == 4
        assert set(out.labels.tolist()) == {1, -1}
        assert 2.0 not in out.features[:, 0]  # the sample labeled 7 sat at index 2

    def test_single_class_input(self):
        out = filter_binary(self._dataset([2, 2, 2]), 2, 6)
        assert np.array_equal(out.labels, [1, 1, 1])

    def test_empty_result_rejected(self):
        with pytest.raises(DataError):
            filter_binary(self._dataset([3, 4]), 2, 6)

    def test_bad_digits_rejected(self):
        ds = self._dataset([2, 6])
        with pytest.raises(DataError):
            filter_binary(ds, 2, 2)
        with pytest.raises(DataError):
            filter_binary(ds, -1, 6)


@pytest.mark.skipif(
    not (Path(os.environ.get("PROXNET_DATA_DIR", ".")) / "train-images-idx3-ubyte").is_file(),
    reason="MNIST files not present under PROXNET_DATA_DIR",
)
def test_mnist_digit_counts():
    root = Path(os.environ["PROXNET_DATA_DIR"])
    ds = load_mnist(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte")
    out = filter_binary(ds, 2, 6)
    assert int((out.labels == 1).sum()) == 5958
    assert int((out.labels == -1).sum()) == 5918


class TestPartition:
    def test_sort_then_halve(self):
        ds = Dataset(features=np.arange(4, dtype=np.float64)[:, None],
                     labels=np.array([1, 0, 1, 0]))
        part = partition_heterogeneous(ds, 2)
        assert sorted(part.per_agent[0].tolist()) == [1, 3]
        assert sorted(part.per_agent[1].tolist()) == [0, 2]

    def test_single_agent_takes_all(self):
        ds = Dataset(features=np.zeros((5, 1)), labels=np.array([3, 1, 2, 1, 0]))
        part = partition_heterogeneous(ds, 1)
        assert len(part.per_agent[0]) == 5

    def test_one_sample_each_in_sorted_order(self):
        labels = np.array([2, 0, 1])
        ds = Dataset(features=np.zeros((3, 1)), labels=labels)
        part = partition_heterogeneous(ds, 3)
        got = [labels[idx[0]] for idx in part.per_agent]
        assert got == [0, 1, 2]

    def test_too_many_agents_rejected(self):
        ds = Dataset(features=np.zeros((2, 1)), labels=np.array([0, 1]))
        with pytest.raises(DataError):
            partition_heterogeneous(ds, 3)

    def test_stable_within_label(self):
        ds = Dataset(features=np.arange(6, dtype=np.float64)[:, None],
                     labels=np.array([1, 0, 1, 0, 1, 0]))
        part = partition_heterogeneous(ds, 2)
        assert part.per_agent[0].tolist() == [1, 3, 5]
        assert part.per_agent[1].tolist() == [0, 2, 4]

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=60), st.data())
    @settings(max_examples=100, deadline=None)
    def test_true_partition(self, labels, data):
        labels = np.array(labels)
        n = data.draw(st.integers(1, len(labels)))
        ds = Dataset(features=np.zeros((len(labels), 1)), labels=labels)
        part = partition_heterogeneous(ds, n)
        seen = np.concatenate(part.per_agent)
        assert sorted(seen.tolist()) == list(range(len(labels)))
        sizes = [len(idx) for idx in part.per_agent]
        assert max(sizes) - min(sizes) <= 1
        again = partition_heterogeneous(ds, n)
        assert all(np.array_equal(a, b) for a, b in zip(part.per_agent, again.per_agent))

    def test_heterogeneity_metric(self):
        # single-label agents >= n - (labels - 1) >= ceil(n/2) once n >= 2*labels - 1
        rng = np.random.default_rng(0)
        for trial in range(10):
            k_labels = int(rng.integers(2, 5))
            labels = rng.integers(0, k_labels, size=120)
            n = int(rng.integers(2 * k_labels - 1, 14))
            ds = Dataset(features=np.zeros((120, 1)), labels=labels)
            part = partition_heterogeneous(ds, n)
            single = sum(len(np.unique(labels[idx])) == 1 for idx in part.per_agent)
            assert single >= -(-n // 2)  # at least ceil(n/2) one-class agents

    def test_heterogeneity_in_experiment_regimes(self):
        rng = np.random.default_rng(1)
        for k_labels, n in [(2, 30), (10, 30), (2, 50), (10, 50)]:
            labels = rng.integers(0, k_labels, size=2000)
            ds = Dataset(features=np.zeros((2000, 1)), labels=labels)
            part = partition_heterogeneous(ds, n)
            single = sum(len(np.unique(labels[idx])) == 1 for idx in part.per_agent)
            assert single >= -(-n // 2)


class TestSyntheticBinary:
    def test_deterministic_per_seed(self):
        a = synthetic_binary(50, 8, seed=3)
        b = synthetic_binary(50, 8, seed=3)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        c = synthetic_binary(50, 8, seed=4)
        assert not np.array_equal(a.features, c.features)

    def test_zero_margin_detaches_labels(self):
        ds = synthetic_binary(20000, 5, seed=5, margin=0.0)
        centroid_gap = ds.features[ds.labels == 1].mean(axis=0) \
            - ds.features[ds.labels == -1].mean(axis=0)
        assert np.linalg.norm(centroid_gap) < 0.1  # ~sqrt(2d/N) sampling noise only

    def test_wide_margin_is_linearly_separable(self):
        ds = synthetic_binary(400, 2, seed=6, margin=10.0)
        w = np.zeros(2)
        b = 0.0
        for _ in range(300):  # reference logistic regression, plain GD
            m = ds.features @ w + b
            p = 1.0 / (1.0 + np.exp(-m))
            t = (ds.labels + 1) / 2
            w -= 0.5 * ds.features.T @ (p - t) / ds.n
            b -= 0.5 * float(np.mean(p - t))
        pred = np.where(ds.features @ w + b > 0, 1, -1)
        assert (pred == ds.labels).mean() >= 0.99

    def test_rejects_bad_sizes(self):
        with pytest.raises(DataError):
            synthetic_binary(0, 3, seed=0)
