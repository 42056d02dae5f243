"""On-disk formats: the NSRF channel-data container and B-mode image export.

NSRF layout (little-endian)::

    offset  type        field
    0       4s          magic b"NSRF"
    4       u32         version (1)
    8       u32         n_angles
    12      u32         n_elements
    16      u32         n_samples
    20      f64 x 5     sampling_frequency, sound_speed, center_frequency,
                        fractional_bandwidth, pitch
    60      f64 x A     steering angles [deg]
    ..      f64 x A     time_zero [s]
    ..      f32 x A*E*S samples, angle-major, then element, then sample
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .compound import BModeImage
from .core import AcquisitionConfig, ArrayGeometry, InvalidArgument, PulseModel
from .simulate import ChannelData

MAGIC = b"NSRF"
VERSION = 1
_HEAD = struct.Struct("<4sIIII5d")


class RfFormatError(ValueError):
    """Malformed NSRF file; ``offset`` is the byte position where reading failed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_rf(path, data: ChannelData):
    """Write ``data`` as NSRF. Samples are stored as float32."""
    n_a, n_e, n_s = data.samples.shape
    head = _HEAD.pack(MAGIC, VERSION, n_a, n_e, n_s,
                      data.acquisition.sampling_frequency, data.pulse.sound_speed,
                      data.pulse.center_frequency, data.pulse.fractional_bandwidth, data.geometry.pitch)
    angles = np.asarray(data.acquisition.angles_deg, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(angles.tobytes())
        fh.write(np.asarray(data.time_zero, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data.samples, dtype="<f4").tobytes())


def read_rf(path, f_number=1.5) -> ChannelData:
    """Read an NSRF file; the F-number is not stored and is taken from ``f_number``."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise RfFormatError(f"truncated file: {len(raw)} bytes, header needs {_HEAD.size}", len(raw))
    if raw[:4] != MAGIC:
        raise RfFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", 0)
    if len(raw) < _HEAD.size:
        raise RfFormatError(f"truncated header: {len(raw)} bytes, need {_HEAD.size}", len(raw))
    _, version, n_a, n_e, n_s, fs, c, f0, bw, pitch = _HEAD.unpack_from(raw, 0)
    if version != VERSION:
        raise RfFormatError(f"unsupported version {version}, expected {VERSION}", 4)
    off = _HEAD.size
    need = off + 16 * n_a + 4 * n_a * n_e * n_s
    if len(raw) < need:
        raise RfFormatError(f"truncated file: {len(raw)} bytes, expected {need}", len(raw))
    if len(raw) > need:
        raise RfFormatError(f"{len(raw) - need} trailing bytes after payload", need)
    angles = np.frombuffer(raw, "<f8", n_a, off)
    time_zero = np.frombuffer(raw, "<f8", n_a, off + 8 * n_a).astype(float)
    samples = np.frombuffer(raw, "<f4", n_a * n_e * n_s, off + 16 * n_a).reshape(n_a, n_e, n_s).astype(np.float32)
    try:
        geometry = ArrayGeometry(n_e, pitch)
        pulse = PulseModel(f0, bw, c)
        acq = AcquisitionConfig(tuple(angles.tolist()), fs, f_number, n_s)
    except InvalidArgument as exc:
        raise RfFormatError(f"invalid header field: {exc}", 20) from exc
    return ChannelData(geometry, pulse, acq, samples, time_zero)


def db_to_gray(values_db, dynamic_range_db=60.0):
    """Map [-dynamic_range, 0] dB linearly onto 0..255, rounding halves up."""
    v = (np.asarray(values_db, dtype=float) + dynamic_range_db) / dynamic_range_db * 255.0
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def export_image(image: BModeImage, path, fmt=None, dynamic_range_db=60.0):
    """Write a B-mode image as CSV (dB values) or 8-bit binary PGM.

    The CSV header row holds the lateral positions; each following row starts
    with its depth. ``fmt`` defaults to the file suffix.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        lines = ["z_m\\x_m," + ",".join(repr(float(x)) for x in image.grid.lateral_x)]
        for z, row in zip(image.grid.axial_z, image.values_db):
            lines.append(repr(float(z)) + "," + ",".join(repr(float(v)) for v in row))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "pgm":
        gray = db_to_gray(image.values_db, dynamic_range_db)
        nz, nx = gray.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{nx} {nz}\n255\n".encode("ascii"))
            fh.write(gray.tobytes())
    else:
        raise InvalidArgument(f"unknown image format {fmt!r}; use csv or pgm")
    return path


def read_pgm(path):
    """Read an 8-bit P5 PGM as written by :func:`export_image` (no comment lines)."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ValueError("not an 8-bit binary PGM")
    nx, nz = int(fields[1]), int(fields[2])
    return np.frombuffer(raw, np.uint8, nx * nz, pos + 1).reshape(nz, nx)


def write_rows_csv(path, header, rows):
    """CSV with ``repr`` floats so identical runs give identical bytes."""

    def fmt(v):
        if isinstance(v, float):
            return "inf" if math.isinf(v) and v > 0 else repr(v)
        return "" if v is None else str(v)

    text = ",".join(header) + "\n" + "".join(",".join(fmt(v) for v in row) + "\n" for row in rows)
    Path(path).write_text(text)
    return Path(path)
