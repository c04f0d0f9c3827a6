"""Round-trip and rejection tests for the PWAT/PWAD binary formats."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as npst

from pwa.errors import BadMagicError, InvalidValueError, TruncatedFileError, VersionError
from pwa.tensor_store import (
    DescriptorRecord,
    FeatureMapTensor,
    read_descriptors,
    read_tensor,
    write_descriptors,
    write_tensor,
)


def tensor_from(values) -> FeatureMapTensor:
    return FeatureMapTensor(np.asarray(values, dtype=np.float32))


class TestTensorFormat:
    def test_zero_tensor_header_and_payload(self, tmp_path):
        path = tmp_path / "zero.pwat"
        write_tensor(path, tensor_from([[[0.0]]]))
        data = path.read_bytes()
        # header: magic + version + 3 dims = 20 bytes, then one float32
        assert data[:4] == b"PWAT"
        assert struct.unpack("<4I", data[4:20]) == (1, 1, 1, 1)
        assert data[20:] == b"\x00\x00\x00\x00"
        assert len(data) == 24

    def test_file_size_matches_dims(self, tmp_path):
        path = tmp_path / "t.pwat"
        write_tensor(path, tensor_from(np.ones((2, 2, 3), dtype=np.float32)))
        assert path.stat().st_size == 4 + 4 + 12 + 2 * 2 * 3 * 4

    @settings(max_examples=50, deadline=None)
    @given(
        values=npst.arrays(
            dtype=np.float32,
            shape=npst.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=5),
            elements=st.floats(0.0, 1e6, width=32, allow_nan=False),
        )
    )
    def test_round_trip_bitwise(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("rt") / "t.pwat"
        tensor = FeatureMapTensor(values)
        write_tensor(path, tensor)
        back = read_tensor(path)
        assert back.values.shape == tensor.values.shape
        assert back.values.tobytes() == tensor.values.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pwat"
        write_tensor(path, tensor_from([[[1.0]]]))
        path.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(BadMagicError):
            read_tensor(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v9.pwat"
        write_tensor(path, tensor_from([[[1.0]]]))
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(data))
        with pytest.raises(VersionError):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.pwat"
        write_tensor(path, tensor_from(np.ones((2, 2, 2), dtype=np.float32)))
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(TruncatedFileError):
            read_tensor(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "long.pwat"
        write_tensor(path, tensor_from([[[1.0]]]))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(TruncatedFileError):
            read_tensor(path)

    def test_negative_activation_rejected(self, tmp_path):
        path = tmp_path / "neg.pwat"
        write_tensor(path, tensor_from([[[1.0]]]))
        data = bytearray(path.read_bytes())
        data[20:24] = struct.pack("<f", -1.0)
        path.write_bytes(bytes(data))
        with pytest.raises(InvalidValueError, match="negative"):
            read_tensor(path)

    def test_nan_activation_rejected(self, tmp_path):
        path = tmp_path / "nan.pwat"
        write_tensor(path, tensor_from([[[1.0]]]))
        data = bytearray(path.read_bytes())
        data[20:24] = struct.pack("<f", float("nan"))
        path.write_bytes(bytes(data))
        with pytest.raises(InvalidValueError, match="NaN"):
            read_tensor(path)

    def test_writer_refuses_invalid_tensor(self, tmp_path):
        path = tmp_path / "refused.pwat"
        bad = tensor_from([[[1.0, -2.0]]])
        with pytest.raises(InvalidValueError):
            write_tensor(path, bad)
        assert not path.exists()

    def test_zero_dim_header_rejected(self, tmp_path):
        path = tmp_path / "dim0.pwat"
        path.write_bytes(b"PWAT" + struct.pack("<4I", 1, 0, 1, 1))
        with pytest.raises(InvalidValueError):
            read_tensor(path)


class TestDescriptorFormat:
    def test_empty_list_round_trip(self, tmp_path):
        path = tmp_path / "empty.pwad"
        write_descriptors(path, [])
        assert path.stat().st_size == 4 + 4 + 4 + 4
        assert read_descriptors(path) == []

    def test_round_trip_bitwise(self, tmp_path):
        path = tmp_path / "两.pwad"
        records = [
            DescriptorRecord("first", np.array([1.5, -2.25, 0.0, 3e-7], dtype=np.float32)),
            DescriptorRecord("sëcond", np.array([0.1, 0.2, 0.3, 0.4], dtype=np.float32)),
        ]
        write_descriptors(path, records)
        back = read_descriptors(path)
        assert [r.image_id for r in back] == ["first", "sëcond"]
        for orig, loaded in zip(records, back):
            assert loaded.values.tobytes() == orig.values.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(
        dim=st.integers(1, 8),
        count=st.integers(0, 5),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_round_trip_random(self, tmp_path_factory, dim, count, seed):
        rng = np.random.default_rng(seed)
        records = [
            DescriptorRecord(f"id{i}", rng.normal(size=dim).astype(np.float32))
            for i in range(count)
        ]
        path = tmp_path_factory.mktemp("rtd") / "d.pwad"
        write_descriptors(path, records)
        back = read_descriptors(path)
        assert len(back) == count
        for orig, loaded in zip(records, back):
            assert loaded.image_id == orig.image_id
            assert loaded.values.tobytes() == orig.values.tobytes()

    def test_mixed_dims_rejected(self, tmp_path):
        path = tmp_path / "mixed.pwad"
        records = [
            DescriptorRecord("a", np.zeros(4, dtype=np.float32)),
            DescriptorRecord("b", np.zeros(8, dtype=np.float32)),
        ]
        with pytest.raises(InvalidValueError, match="mixed"):
            write_descriptors(path, records)
        assert not path.exists()

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "trunc.pwad"
        write_descriptors(path, [DescriptorRecord("a", np.ones(4, dtype=np.float32))])
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(TruncatedFileError):
            read_descriptors(path)

    def test_normalized_flag_tracks_norm(self):
        unit = DescriptorRecord("u", np.array([0.6, 0.8], dtype=np.float32))
        assert unit.is_normalized
        off = DescriptorRecord("o", np.array([0.6, 0.9], dtype=np.float32))
        assert not off.is_normalized
