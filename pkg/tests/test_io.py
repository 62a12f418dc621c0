import struct

import numpy as np
import pytest

from bilin.errors import BoundsError, CorruptFileError, FormatError, NumericError
from bilin.io import (
    BFM_MAGIC,
    FeatureMap,
    load_descriptor,
    load_feature_map,
    load_gallery,
    save_descriptor,
    save_feature_map,
    save_gallery,
)
from bilin.svm import GalleryModelSet, LinearModel


def write_bfm(path, h, w, c, flags, payload_floats):
    with open(path, "wb") as f:
        f.write(BFM_MAGIC)
        f.write(struct.pack("<IIIB3x", h, w, c, flags))
        f.write(np.asarray(payload_floats, dtype="<f4").tobytes())


class TestFeatureMapFormat:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        values = rng.random((27, 27, 512)).astype(np.float32)
        path = tmp_path / "big.bfm"
        save_feature_map(path, values, rectified=True)
        loaded = load_feature_map(path)
        assert loaded.rectified
        assert loaded.values.dtype == np.float32
        assert np.array_equal(loaded.values, values)
        save_feature_map(tmp_path / "again.bfm", loaded)
        assert (tmp_path / "again.bfm").read_bytes() == path.read_bytes()

    def test_round_trip_small_shapes(self, tmp_path, rng):
        for shape in [(1, 1, 1), (2, 3, 4), (5, 1, 7)]:
            values = rng.standard_normal(shape).astype(np.float32)
            path = tmp_path / "m.bfm"
            save_feature_map(path, values)
            assert np.array_equal(load_feature_map(path).values, values)

    def test_truncated_payload_is_corruption(self, tmp_path):
        path = tmp_path / "short.bfm"
        write_bfm(path, 4, 4, 3, 0, np.zeros(47))
        with pytest.raises(CorruptFileError):
            load_feature_map(path)

    def test_oversized_payload_is_corruption(self, tmp_path):
        path = tmp_path / "long.bfm"
        write_bfm(path, 4, 4, 3, 0, np.zeros(49))
        with pytest.raises(CorruptFileError):
            load_feature_map(path)

    def test_all_zero_payload_is_accepted(self, tmp_path):
        path = tmp_path / "zero.bfm"
        write_bfm(path, 2, 2, 2, 1, np.zeros(8))
        fmap = load_feature_map(path)
        assert fmap.rectified
        assert not fmap.values.any()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bfm"
        data = bytearray()
        data += b"NOPE" + struct.pack("<IIIB3x", 1, 1, 1, 0)
        data += struct.pack("<f", 0.0)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_feature_map(path)

    def test_unknown_flag_bits(self, tmp_path):
        path = tmp_path / "flags.bfm"
        write_bfm(path, 1, 1, 1, 0x82, [0.0])
        with pytest.raises(FormatError):
            load_feature_map(path)

    def test_zero_dimension_is_bounds_error(self, tmp_path):
        path = tmp_path / "dim.bfm"
        write_bfm(path, 0, 4, 3, 0, [])
        with pytest.raises(BoundsError):
            load_feature_map(path)

    def test_dimension_overflow_is_bounds_error(self, tmp_path):
        path = tmp_path / "huge.bfm"
        with open(path, "wb") as f:
            f.write(BFM_MAGIC)
            f.write(struct.pack("<IIIB3x", 2**16, 2**16, 512, 0))
        with pytest.raises(BoundsError):
            load_feature_map(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "stub.bfm"
        path.write_bytes(BFM_MAGIC + b"\x01\x00")
        with pytest.raises(CorruptFileError):
            load_feature_map(path)

    def test_rectified_negative_values_rejected_on_save(self, tmp_path):
        with pytest.raises(NumericError):
            save_feature_map(tmp_path / "neg.bfm", -np.ones((1, 1, 1)),
                             rectified=True)

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(NumericError):
            save_feature_map(tmp_path / "nan.bfm", np.full((1, 1, 2), np.nan))

    def test_feature_map_accessors(self, rng):
        fmap = FeatureMap(rng.random((3, 4, 5)).astype(np.float32))
        assert (fmap.height, fmap.width, fmap.channels) == (3, 4, 5)


def toy_gallery(rng, dim=6, n=3):
    models = [
        LinearModel(
            identity_id=f"id{i:02d}",
            w=rng.standard_normal(dim).astype(np.float32),
            b=float(np.float32(rng.standard_normal())),
            rescale_a=float(np.float32(rng.random() + 0.5)),
            rescale_b=float(np.float32(rng.standard_normal())),
        )
        for i in range(n)
    ]
    return GalleryModelSet(models=models, descriptor_dim=dim)


class TestGalleryFormat:
    def test_round_trip_values(self, tmp_path, rng):
        gallery = toy_gallery(rng)
        path = tmp_path / "g.bgm"
        save_gallery(path, gallery)
        loaded = load_gallery(path)
        assert loaded.descriptor_dim == gallery.descriptor_dim
        assert loaded.identity_ids == gallery.identity_ids
        for a, b in zip(loaded.models, gallery.models):
            assert np.array_equal(a.w, b.w)
            assert a.b == np.float32(b.b)
            assert a.rescale_a == np.float32(b.rescale_a)
            assert a.rescale_b == np.float32(b.rescale_b)

    def test_save_load_save_is_byte_identical(self, tmp_path, rng):
        gallery = toy_gallery(rng)
        first = tmp_path / "a.bgm"
        second = tmp_path / "b.bgm"
        save_gallery(first, gallery)
        save_gallery(second, load_gallery(first))
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bgm"
        path.write_bytes(b"XXXX" + struct.pack("<II", 0, 1))
        with pytest.raises(FormatError):
            load_gallery(path)

    def test_trailing_bytes_are_corruption(self, tmp_path, rng):
        path = tmp_path / "g.bgm"
        save_gallery(path, toy_gallery(rng))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CorruptFileError):
            load_gallery(path)

    def test_truncated_record_is_corruption(self, tmp_path, rng):
        path = tmp_path / "g.bgm"
        save_gallery(path, toy_gallery(rng))
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 3])
        with pytest.raises(CorruptFileError):
            load_gallery(path)

    def test_unicode_identity_ids(self, tmp_path):
        gallery = GalleryModelSet(
            models=[LinearModel("pérsonne-01", np.zeros(2, np.float32), 0.0)],
            descriptor_dim=2,
        )
        path = tmp_path / "u.bgm"
        save_gallery(path, gallery)
        assert load_gallery(path).identity_ids == ["pérsonne-01"]


class TestDescriptorFiles:
    def test_round_trip_float32(self, tmp_path, rng):
        d = rng.standard_normal(16)
        path = tmp_path / "d.npy"
        save_descriptor(path, d)
        loaded = load_descriptor(path)
        assert loaded.dtype == np.float32
        assert np.array_equal(loaded, d.astype(np.float32))

    def test_rejects_non_vector(self, tmp_path, rng):
        path = tmp_path / "m.npy"
        np.save(path, rng.random((2, 2)).astype(np.float32))
        with pytest.raises(FormatError):
            load_descriptor(path)
