import gzip
import struct

import numpy as np
import pytest

from modakit.errors import DataError, FormatError, ShapeError, UnsupportedError
from modakit.nifti import DT_FLOAT32, DT_INT16, DT_UINT8, read_header, read_nifti, write_nifti
from modakit.volume import LabelVolume, ScalarVolume

from oracles import raw_nifti


def test_read_hand_built_float32_ones(tmp_path):
    path = tmp_path / "ones.nii"
    path.write_bytes(raw_nifti((4, 4, 4), 16, struct.pack("<64f", *([1.0] * 64)), pixdim=(0.5, 0.5, 2.0)))
    vol = read_nifti(path)
    assert vol.dims == (4, 4, 4)
    assert vol.data.size == 64 and np.all(vol.data == 1.0)
    assert vol.spacing == (0.5, 0.5, 2.0)


def test_x_fastest_order(tmp_path):
    dims = (3, 2, 2)
    values = list(range(12))
    path = tmp_path / "order.nii"
    path.write_bytes(raw_nifti(dims, 4, struct.pack("<12h", *values)))
    vol = read_nifti(path)
    # byte k holds voxel (x, y, z) with k = x + 3*y + 6*z
    for z in range(2):
        for y in range(2):
            for x in range(3):
                assert vol.data[x, y, z] == x + 3 * y + 6 * z


def test_big_endian_detected(tmp_path):
    path = tmp_path / "be.nii"
    path.write_bytes(raw_nifti((2, 2, 1), 4, struct.pack(">4h", 1, -2, 300, 7), endian=">"))
    vol = read_nifti(path)
    assert vol.data[:, :, 0].tolist() == [[1, 300], [-2, 7]]


def test_gzip_detected_by_content_not_extension(tmp_path):
    path = tmp_path / "hidden.nii"
    path.write_bytes(gzip.compress(raw_nifti((2, 2, 2), 2, bytes(range(8)))))
    assert read_nifti(path, "label", labels=None).data.sum() == sum(range(8))


def test_scaling_applied_to_scalars(tmp_path):
    path = tmp_path / "scaled.nii"
    path.write_bytes(raw_nifti((2, 1, 1), 4, struct.pack("<2h", 10, 20), slope=0.5, inter=1.0))
    assert read_nifti(path).data.ravel().tolist() == [6.0, 11.0]


def test_label_scaling_to_non_integers_rejected(tmp_path):
    path = tmp_path / "bad_label.nii"
    path.write_bytes(raw_nifti((2, 1, 1), 2, bytes([1, 2]), slope=0.5))
    with pytest.raises(DataError):
        read_nifti(path, "label")


def test_label_outside_label_set_rejected(tmp_path):
    path = tmp_path / "label7.nii"
    path.write_bytes(raw_nifti((2, 1, 1), 2, bytes([0, 7])))
    with pytest.raises(DataError):
        read_nifti(path, "label")
    assert read_nifti(path, "label", labels=(0, 7)).labels_present() == {0, 7}


def test_zeroed_magic_is_format_error(tmp_path):
    path = tmp_path / "nomagic.nii"
    path.write_bytes(raw_nifti((2, 2, 2), 2, bytes(8), magic=b"\x00" * 4))
    with pytest.raises(FormatError):
        read_nifti(path)


def test_pair_magic_is_format_error(tmp_path):
    path = tmp_path / "pair.hdr"
    path.write_bytes(raw_nifti((2, 2, 2), 2, bytes(8), magic=b"ni1\x00"))
    with pytest.raises(FormatError):
        read_nifti(path)


def test_unsupported_datatype(tmp_path):
    path = tmp_path / "f64.nii"
    path.write_bytes(raw_nifti((1, 1, 1), 64, struct.pack("<d", 1.0)))
    with pytest.raises(UnsupportedError):
        read_nifti(path)


def test_4d_with_extra_frames_unsupported(tmp_path):
    path = tmp_path / "4d.nii"
    path.write_bytes(raw_nifti((2, 2, 2, 3), 2, bytes(24)))
    with pytest.raises(UnsupportedError):
        read_nifti(path)


def test_4d_with_singleton_frame_accepted(tmp_path):
    path = tmp_path / "4d1.nii"
    path.write_bytes(raw_nifti((2, 2, 2, 1), 2, bytes(8)))
    assert read_nifti(path).dims == (2, 2, 2)


def test_non_finite_voxel_is_data_error(tmp_path):
    path = tmp_path / "nan.nii"
    path.write_bytes(raw_nifti((2, 1, 1), 16, struct.pack("<2f", 1.0, float("nan"))))
    with pytest.raises(DataError):
        read_nifti(path)


def test_truncated_data_is_format_error(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(raw_nifti((4, 4, 4), 16, b"\x00" * 10))
    with pytest.raises(FormatError):
        read_nifti(path)


@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
def test_round_trip_scalar(tmp_path, suffix):
    rng = np.random.default_rng(0)
    vol = ScalarVolume(rng.normal(size=(5, 6, 7)).astype(np.float32), (0.75, 0.8125, 1.875), (-3.5, 10.25, 2.0))
    path = tmp_path / f"v{suffix}"
    write_nifti(vol, path)
    back = read_nifti(path)
    assert back.dims == vol.dims
    assert back.spacing == vol.spacing
    assert back.origin == vol.origin
    assert np.array_equal(back.data, vol.data)


def test_label_written_as_uint8(tmp_path):
    lab = LabelVolume(np.array([0, 1, 2, 1]).reshape(2, 2, 1), (1, 1, 1))
    path = tmp_path / "lab.nii.gz"
    write_nifti(lab, path)
    hdr = read_header(path)
    assert hdr.datatype == DT_UINT8
    assert hdr.scl_slope == 1.0 and hdr.scl_inter == 0.0
    assert np.array_equal(read_nifti(path, "label").data, lab.data)


def test_scalar_written_as_float32_by_default(tmp_path):
    path = tmp_path / "s.nii"
    write_nifti(ScalarVolume(np.zeros((2, 2, 2)), (1, 1, 1)), path)
    assert read_header(path).datatype == DT_FLOAT32


def test_int16_output_requires_integers(tmp_path):
    with pytest.raises(DataError):
        write_nifti(ScalarVolume(np.full((1, 1, 1), 0.5), (1, 1, 1)), tmp_path / "x.nii", dtype="int16")
    write_nifti(ScalarVolume(np.full((1, 1, 1), -5.0), (1, 1, 1)), tmp_path / "y.nii", dtype="int16")
    assert read_header(tmp_path / "y.nii").datatype == DT_INT16


def test_zero_dim_rejected_before_write():
    with pytest.raises(ShapeError):
        ScalarVolume(np.zeros((0, 3, 3)), (1, 1, 1))


def test_gzip_output_is_byte_reproducible(tmp_path):
    vol = ScalarVolume(np.arange(8.0).reshape(2, 2, 2), (1, 1, 1))
    write_nifti(vol, tmp_path / "a.nii.gz")
    write_nifti(vol, tmp_path / "b.nii.gz")
    assert (tmp_path / "a.nii.gz").read_bytes() == (tmp_path / "b.nii.gz").read_bytes()


def test_orientation_fields_pass_through(tmp_path):
    src = bytearray(raw_nifti((2, 2, 2), 2, bytes(8), pixdim=(0.9, 0.9, 1.5)))
    struct.pack_into("<hh", src, 252, 2, 4)                       # qform_code, sform_code
    struct.pack_into("<3f", src, 256, 0.1, -0.2, 0.3)             # quaternion b, c, d
    struct.pack_into("<3f", src, 268, 11.0, 12.0, 13.0)           # qoffset
    struct.pack_into("<4f", src, 280, -0.9, 0.0, 0.0, 11.0)       # srow_x
    src[148:158] = b"hello hdr\x00"
    path = tmp_path / "src.nii"
    path.write_bytes(bytes(src))
    vol = read_nifti(path, "label", labels=None)
    assert vol.origin == (11.0, 12.0, 13.0)
    write_nifti(vol, tmp_path / "copy.nii")
    out = (tmp_path / "copy.nii").read_bytes()
    # header bytes outside the fields the writer owns are unchanged
    assert out[252:256] == src[252:256]
    assert out[256:268] == src[256:268]
    assert out[148:228] == src[148:228]
    assert out[280:296] == src[280:296]


def test_geometry_stored_at_float32_precision(tmp_path):
    vol = ScalarVolume(np.zeros((2, 2, 2)), (0.6, 0.6, 1.0))
    write_nifti(vol, tmp_path / "g.nii")
    back = read_nifti(tmp_path / "g.nii")
    assert back.spacing == tuple(float(np.float32(s)) for s in vol.spacing)
