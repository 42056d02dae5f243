import struct

import numpy as np
import pytest

from nsimaging.compound import BModeImage
from nsimaging.core import AcquisitionConfig, ArrayGeometry, ImageGrid, InvalidArgument, PulseModel
from nsimaging.formats import RfFormatError, db_to_gray, export_image, read_pgm, read_rf, write_rf
from nsimaging.simulate import ChannelData


@pytest.fixture
def channel_data():
    geo = ArrayGeometry(8, 0.3048e-3)
    acq = AcquisitionConfig(angles_deg=(-3.0, 0.0, 2.5), sampling_frequency=40e6, record_length=50)
    s = np.random.default_rng(0).standard_normal((3, 8, 50)).astype(np.float32).astype(float)
    return ChannelData(geo, PulseModel(7.0e6, 0.8, 1500.0), acq, s, np.array([-1e-7, 0.0, -2e-7]))


def test_round_trip(tmp_path, channel_data):
    p = tmp_path / "d.nsrf"
    write_rf(p, channel_data)
    back = read_rf(p)
    assert back.geometry == channel_data.geometry
    assert back.pulse == channel_data.pulse
    assert back.acquisition.angles_deg == channel_data.acquisition.angles_deg
    assert back.acquisition.sampling_frequency == channel_data.acquisition.sampling_frequency
    assert np.array_equal(back.time_zero, channel_data.time_zero)
    assert np.array_equal(back.samples, channel_data.samples)
    assert back.samples.dtype == np.float32
    write_rf(tmp_path / "again.nsrf", back)
    assert (tmp_path / "again.nsrf").read_bytes() == p.read_bytes()


def test_layout_is_little_endian_angle_major(tmp_path, channel_data):
    p = tmp_path / "d.nsrf"
    write_rf(p, channel_data)
    raw = p.read_bytes()
    assert raw[:4] == b"NSRF"
    assert struct.unpack_from("<IIII", raw, 4) == (1, 3, 8, 50)
    payload_at = 60 + 16 * 3
    first = np.frombuffer(raw, "<f4", 2, payload_at)
    assert np.array_equal(first, channel_data.samples[0, 0, :2].astype(np.float32))
    assert len(raw) == payload_at + 4 * 3 * 8 * 50


def test_truncated_file(tmp_path, channel_data):
    p = tmp_path / "d.nsrf"
    write_rf(p, channel_data)
    raw = p.read_bytes()
    for cut in (2, 30, len(raw) - 1):
        (tmp_path / "t.nsrf").write_bytes(raw[:cut])
        with pytest.raises(RfFormatError, match="truncated") as exc:
            read_rf(tmp_path / "t.nsrf")
        assert exc.value.offset == cut


def test_bad_magic_and_version(tmp_path, channel_data):
    p = tmp_path / "d.nsrf"
    write_rf(p, channel_data)
    raw = bytearray(p.read_bytes())
    (tmp_path / "m.nsrf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(RfFormatError, match="NSRF") as exc:
        read_rf(tmp_path / "m.nsrf")
    assert exc.value.offset == 0
    raw[4:8] = struct.pack("<I", 2)
    (tmp_path / "v.nsrf").write_bytes(bytes(raw))
    with pytest.raises(RfFormatError, match="version") as exc:
        read_rf(tmp_path / "v.nsrf")
    assert exc.value.offset == 4
    (tmp_path / "x.nsrf").write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(RfFormatError, match="trailing"):
        read_rf(tmp_path / "x.nsrf")


def test_pgm_mapping():
    assert db_to_gray([0.0, -60.0, -30.0, 5.0, -90.0]).tolist() == [255, 0, 128, 255, 0]


def _bmode():
    g = ImageGrid(np.array([-1e-4, 0.0, 1e-4]), np.array([1e-3, 2e-3]))
    return BModeImage(g, np.array([[0.0, -30.0, -60.0], [-120.0, -6.0, -45.5]]))


def test_export_pgm_round_trip(tmp_path):
    path = export_image(_bmode(), tmp_path / "b.pgm")
    img = read_pgm(path)
    assert img.tolist() == [[255, 128, 0], [0, 230, 62]]
    assert path.read_bytes().startswith(b"P5\n3 2\n255\n")


def test_export_csv(tmp_path):
    path = export_image(_bmode(), tmp_path / "b.csv")
    rows = [line.split(",") for line in path.read_text().splitlines()]
    assert [float(v) for v in rows[0][1:]] == [-1e-4, 0.0, 1e-4]
    assert float(rows[1][0]) == 1e-3 and [float(v) for v in rows[1][1:]] == [0.0, -30.0, -60.0]
    assert len(rows) == 3


def test_export_errors(tmp_path):
    with pytest.raises(InvalidArgument):
        export_image(_bmode(), tmp_path / "b.png")
    with pytest.raises(OSError):
        export_image(_bmode(), tmp_path / "missing" / "b.csv")
