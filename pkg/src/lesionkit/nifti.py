"""Minimal NIfTI-1 reader/writer for single-file volumes (.nii, .nii.gz).

Covers exactly what the toolkit needs: the 348-byte NIfTI-1 header,
little-endian single-file ("n+1") layout, transparent gzip compression
(sniffed from the 0x1F 0x8B magic bytes, not the file name), value scaling
via scl_slope/scl_inter, and datatype codes 2 (uint8), 4 (int16),
16 (float32), and 64 (float64). Header extensions are skipped on read and
omitted on write. Every malformed input maps to a :class:`NiftiError`
subclass; the reader never allocates more than the header-declared payload.

Values are converted to the in-memory convention on read: float32 for
scalar volumes (int16/float64 payloads are converted, scaled values are
computed in float32) while uint8 payloads stay uint8 so masks remain
compact. Voxel data is reordered to the canonical x-fastest layout.
"""

from __future__ import annotations

import gzip
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataRangeError,
    EndiannessError,
    NiftiFormatError,
    ShapeError,
    TruncatedFileError,
    UnsupportedDatatypeError,
    ValidationError,
)
from .volume import Volume3D

HEADER_SIZE = 348

# Field layout of the NIfTI-1 header (byte offsets in comments).
_HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),      # 0; must be 348
        ("data_type", "S10"),       # 4; unused
        ("db_name", "S18"),         # 14; unused
        ("extents", "<i4"),         # 32; unused
        ("session_error", "<i2"),   # 36; unused
        ("regular", "S1"),          # 38; unused
        ("dim_info", "u1"),         # 39; slice ordering code
        ("dim", "<i2", (8,)),       # 40; dim[0] = rank, dim[1..] = sizes
        ("intent_p1", "<f4"),       # 56
        ("intent_p2", "<f4"),       # 60
        ("intent_p3", "<f4"),       # 64
        ("intent_code", "<i2"),     # 68
        ("datatype", "<i2"),        # 70; value datatype code
        ("bitpix", "<i2"),          # 72; bits per voxel
        ("slice_start", "<i2"),     # 74
        ("pixdim", "<f4", (8,)),    # 76; pixdim[1..3] = spacing (mm)
        ("vox_offset", "<f4"),      # 108; start of voxel data
        ("scl_slope", "<f4"),       # 112; value scaling slope
        ("scl_inter", "<f4"),       # 116; value scaling intercept
        ("slice_end", "<i2"),       # 120
        ("slice_code", "u1"),       # 122
        ("xyzt_units", "u1"),       # 123; 2 = millimetres
        ("cal_max", "<f4"),         # 124
        ("cal_min", "<f4"),         # 128
        ("slice_duration", "<f4"),  # 132
        ("toffset", "<f4"),         # 136
        ("glmax", "<i4"),           # 140
        ("glmin", "<i4"),           # 144
        ("descrip", "S80"),         # 148
        ("aux_file", "S24"),        # 228
        ("qform_code", "<i2"),      # 252
        ("sform_code", "<i2"),      # 254
        ("quatern_b", "<f4"),       # 256
        ("quatern_c", "<f4"),       # 260
        ("quatern_d", "<f4"),       # 264
        ("qoffset_x", "<f4"),       # 268
        ("qoffset_y", "<f4"),       # 272
        ("qoffset_z", "<f4"),       # 276
        ("srow_x", "<f4", (4,)),    # 280; sform affine rows
        ("srow_y", "<f4", (4,)),    # 296
        ("srow_z", "<f4", (4,)),    # 312
        ("intent_name", "S16"),     # 328
        ("magic", "S4"),            # 344; "n+1\0" or "ni1\0"
    ]
)
assert _HEADER_DTYPE.itemsize == HEADER_SIZE

_SIZEOF_HDR_SWAPPED = struct.unpack("<i", struct.pack(">i", HEADER_SIZE))[0]
_NIFTI2_HEADER_SIZE = 540

DTYPE_BY_CODE = {2: np.dtype("u1"), 4: np.dtype("<i2"), 16: np.dtype("<f4"), 64: np.dtype("<f8")}
CODE_BY_NAME = {"uint8": 2, "int16": 4, "float32": 16, "float64": 64}
_INT_RANGE = {2: (0, 255), 4: (-32768, 32767)}

_GZIP_MAGIC = b"\x1f\x8b"
_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"


@dataclass(frozen=True)
class NiftiHeader:
    """Parsed view of the header fields this reader honors."""

    dim: tuple[int, ...]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]
    vox_offset: int
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    affine: np.ndarray
    magic: bytes

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.dim[1], self.dim[2], self.dim[3])

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (self.pixdim[1], self.pixdim[2], self.pixdim[3])


def _quaternion_affine(hdr: np.void, pixdim: tuple[float, ...]) -> np.ndarray:
    b = float(hdr["quatern_b"])
    c = float(hdr["quatern_c"])
    d = float(hdr["quatern_d"])
    offsets = (float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"]))
    if not all(np.isfinite([b, c, d, *offsets])):
        raise NiftiFormatError("non-finite qform quaternion or offset")
    # Stored b, c, d come from a unit quaternion; float32 rounding can push
    # the squared norm slightly past 1, so clamp instead of failing.
    a2 = max(0.0, 1.0 - (b * b + c * c + d * d))
    a = a2**0.5
    rotation = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    scales = np.array([pixdim[1], pixdim[2], pixdim[3] * qfac])
    affine = np.eye(4)
    affine[:3, :3] = rotation * scales
    affine[:3, 3] = offsets
    return affine


def parse_header(raw: bytes) -> NiftiHeader:
    """Parse and validate a 348-byte NIfTI-1 header block."""
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(
            f"header: expected {HEADER_SIZE} bytes, got {len(raw)}"
        )
    sizeof_hdr = struct.unpack("<i", raw[:4])[0]
    if sizeof_hdr != HEADER_SIZE:
        if sizeof_hdr == _SIZEOF_HDR_SWAPPED:
            raise EndiannessError("big-endian NIfTI-1 files are not supported")
        if sizeof_hdr == _NIFTI2_HEADER_SIZE:
            raise NiftiFormatError("NIfTI-2 files are not supported")
        raise NiftiFormatError(f"bad header size {sizeof_hdr}, expected {HEADER_SIZE}")

    magic = raw[344:348]
    if magic == _MAGIC_PAIR:
        raise NiftiFormatError("two-file NIfTI-1 pairs (.hdr/.img) are not supported")
    if magic != _MAGIC_SINGLE:
        raise NiftiFormatError(f"bad magic {magic!r}")

    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER_DTYPE)[0]
    dim = tuple(int(x) for x in hdr["dim"])
    if dim[0] > 7:
        raise EndiannessError(
            f"dim[0]={dim[0]} is implausible; file is likely big-endian"
        )
    if dim[0] not in (3, 4):
        raise ShapeError(f"expected a 3-D volume, got dim[0]={dim[0]}")
    if dim[0] == 4 and dim[4] != 1:
        raise ShapeError(f"multi-channel volumes are not supported (dim[4]={dim[4]})")
    if any(n < 1 for n in dim[1:4]):
        raise ShapeError(f"non-positive dimension in {dim[1:4]}")

    datatype = int(hdr["datatype"])
    if datatype not in DTYPE_BY_CODE:
        raise UnsupportedDatatypeError(datatype)
    bitpix = int(hdr["bitpix"])
    expected_bits = DTYPE_BY_CODE[datatype].itemsize * 8
    if bitpix != expected_bits:
        raise NiftiFormatError(
            f"bitpix {bitpix} does not match datatype code {datatype} "
            f"({expected_bits} bits)"
        )

    pixdim = tuple(float(x) for x in hdr["pixdim"])
    spacing = pixdim[1:4]
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise NiftiFormatError(f"pixdim[1..3] must be finite and > 0, got {spacing}")

    vox_offset_raw = float(hdr["vox_offset"])
    if (
        not np.isfinite(vox_offset_raw)
        or vox_offset_raw < HEADER_SIZE
        or vox_offset_raw != int(vox_offset_raw)
    ):
        raise NiftiFormatError(f"invalid vox_offset {vox_offset_raw}")
    vox_offset = int(vox_offset_raw)

    scl_slope = float(hdr["scl_slope"])
    scl_inter = float(hdr["scl_inter"])
    if not (np.isfinite(scl_slope) and np.isfinite(scl_inter)):
        raise NiftiFormatError(
            f"non-finite scl_slope/scl_inter ({scl_slope}, {scl_inter})"
        )

    qform_code = int(hdr["qform_code"])
    sform_code = int(hdr["sform_code"])
    if sform_code > 0:
        rows = np.array([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]], dtype=np.float64)
        if not np.all(np.isfinite(rows)):
            raise NiftiFormatError("non-finite sform rows")
        affine = np.eye(4)
        affine[:3, :] = rows
    elif qform_code > 0:
        affine = _quaternion_affine(hdr, pixdim)
    else:
        affine = np.diag([spacing[0], spacing[1], spacing[2], 1.0])

    return NiftiHeader(
        dim=dim,
        datatype=datatype,
        bitpix=bitpix,
        pixdim=pixdim,
        vox_offset=vox_offset,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        qform_code=qform_code,
        sform_code=sform_code,
        affine=affine,
        magic=magic,
    )


def _read_exact(stream, n: int, what: str) -> bytes:
    """Read exactly n bytes in bounded chunks; classify short/corrupt streams."""
    chunks = []
    remaining = n
    try:
        while remaining > 0:
            chunk = stream.read(min(remaining, 1 << 20))
            if not chunk:
                break
            chunks.append(chunk)
            remaining -= len(chunk)
    except (gzip.BadGzipFile, zlib.error, EOFError) as exc:
        raise TruncatedFileError(f"{what}: corrupt or truncated stream ({exc})") from exc
    if remaining > 0:
        got = n - remaining
        raise TruncatedFileError(f"{what}: expected {n} bytes, got {got}")
    return b"".join(chunks)


def read_volume(path: str | Path) -> Volume3D:
    """Read a NIfTI-1 volume; gzip is detected from the file content."""
    with open(path, "rb") as raw_file:
        sniff = raw_file.read(2)
        raw_file.seek(0)
        if sniff == _GZIP_MAGIC:
            stream = gzip.GzipFile(fileobj=raw_file, mode="rb")
        else:
            stream = raw_file
        try:
            header_bytes = _read_exact(stream, HEADER_SIZE, "header")
            hdr = parse_header(header_bytes)
            skip = hdr.vox_offset - HEADER_SIZE
            if skip > 0:
                _read_exact(stream, skip, "extension area")
            dt = DTYPE_BY_CODE[hdr.datatype]
            nx, ny, nz = hdr.shape
            expected = nx * ny * nz * dt.itemsize
            payload = _read_exact(stream, expected, "voxel data")
        finally:
            if stream is not raw_file:
                stream.close()

    arr = np.frombuffer(payload, dtype=dt).reshape((nx, ny, nz), order="F")

    slope, inter = hdr.scl_slope, hdr.scl_inter
    if slope != 0.0 and not (slope == 1.0 and inter == 0.0):
        arr = arr.astype(np.float32) * np.float32(slope) + np.float32(inter)
    elif hdr.datatype == 2:
        pass  # masks stay uint8
    elif hdr.datatype != 16:
        arr = arr.astype(np.float32)

    try:
        return Volume3D(arr, hdr.spacing, hdr.affine)
    except ValidationError as exc:
        raise NiftiFormatError(f"header yields an invalid volume: {exc}") from exc


def _resolve_datatype(datatype: int | str) -> int:
    if isinstance(datatype, str):
        if datatype not in CODE_BY_NAME:
            raise ValidationError(
                f"datatype must be one of {sorted(CODE_BY_NAME)} or a NIfTI code, "
                f"got {datatype!r}"
            )
        return CODE_BY_NAME[datatype]
    code = int(datatype)
    if code not in DTYPE_BY_CODE:
        raise ValidationError(
            f"datatype code must be one of {sorted(DTYPE_BY_CODE)}, got {code}"
        )
    return code


def write_volume(
    v: Volume3D,
    path: str | Path,
    datatype: int | str = "float32",
    compress: bool | None = None,
) -> None:
    """Write a volume as single-file NIfTI-1.

    ``datatype`` is a NIfTI code or name (uint8/int16/float32/float64).
    Values that an integer datatype cannot represent raise
    :class:`DataRangeError`. ``compress=None`` compresses iff the path ends
    in ``.gz``; compressed output is deterministic (fixed gzip mtime).
    """
    code = _resolve_datatype(datatype)
    target = DTYPE_BY_CODE[code]
    nx, ny, nz = v.dims
    if max(nx, ny, nz) > 32767:
        raise ValidationError(f"dimensions {v.dims} exceed the NIfTI-1 limit of 32767")

    data = v.data
    if code in _INT_RANGE:
        lo, hi = _INT_RANGE[code]
        if data.dtype.kind == "f":
            if not bool(np.all(np.isfinite(data))):
                raise DataRangeError(f"non-finite values cannot be written as {target}")
            if not bool(np.all(data == np.trunc(data))):
                raise DataRangeError(f"non-integer values cannot be written as {target}")
        if data.size and (data.min() < lo or data.max() > hi):
            raise DataRangeError(
                f"values outside [{lo}, {hi}] cannot be written as {target}"
            )
    payload = data.astype(target, copy=False).tobytes(order="F")

    hdr = np.zeros((), dtype=_HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    dim = np.ones(8, dtype=np.int16)
    dim[0] = 3
    dim[1:4] = (nx, ny, nz)
    hdr["dim"] = dim
    hdr["datatype"] = code
    hdr["bitpix"] = target.itemsize * 8
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[0] = 1.0
    pixdim[1:4] = v.spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = float(HEADER_SIZE + 4)
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # millimetres
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    hdr["srow_x"] = v.affine[0]
    hdr["srow_y"] = v.affine[1]
    hdr["srow_z"] = v.affine[2]
    hdr["magic"] = _MAGIC_SINGLE

    blob = hdr.tobytes() + b"\x00" * 4 + payload
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        with open(path, "wb") as f:
            with gzip.GzipFile(
                filename="", mode="wb", fileobj=f, mtime=0, compresslevel=9
            ) as gz:
                gz.write(blob)
    else:
        with open(path, "wb") as f:
            f.write(blob)
