"""PGM images and the bit-packed photon-cube container.

Photon cube layout (little-endian), one file per stream::

    magic  4s   b"PCUB"
    width  u16
    height u16
    frames u32
    flags  u32   bit 0 set -> this stream is the enable mask
    data         frames x ceil(width*height/8) bytes, row-major, MSB first

The mask lives in a sibling file ``<path>.mask`` with the same header.
"""
import os
import re
import struct

import numpy as np

from .model import PhotonCube

MAGIC = b"PCUB"
HEADER = struct.Struct("<4sHHII")
FLAG_MASK = 1
SRGB_GAMMA = 2.2
DISPLAY_GAMMA = 0.4


class FormatError(ValueError):
    pass


def read_pgm(path):
    """Binary (P5) PGM, 8 or 16 bit.  Returns (array, maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    # header tokens may be separated by whitespace and '#' comments
    tokens = []
    pos = 0
    pat = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")
    for _ in range(4):
        m = pat.match(data, pos)
        if not m:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if not (0 < maxval < 65536) or width < 1 or height < 1:
        raise FormatError(f"{path}: bad PGM dimensions or maxval")
    pos += 1  # single whitespace byte before the raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * dtype.itemsize
    raster = data[pos:pos + n]
    if len(raster) != n:
        raise FormatError(f"{path}: truncated PGM raster")
    img = np.frombuffer(raster, dtype=dtype).reshape(height, width).astype(np.int64)
    return img, maxval


def write_pgm(path, image, maxval=None):
    """Write integer image data as a P5 PGM (16 bit if maxval > 255)."""
    img = np.asarray(image)
    if maxval is None:
        maxval = 65535 if img.max(initial=0) > 255 else 255
    img = np.clip(np.round(img), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.astype(dtype).tobytes())


def load_intensity(path, gamma_decompress=False):
    """PGM as linear intensity in [0, 1]; optionally undo sRGB-like gamma (~2.2)."""
    img, maxval = read_pgm(path)
    x = img / float(maxval)
    if gamma_decompress:
        x = x ** SRGB_GAMMA
    return x


def write_rate_image(path, rate, gamma=DISPLAY_GAMMA, bits=16):
    """Rate image in [0, 1], display gamma applied, as PGM."""
    maxval = 65535 if bits == 16 else 255
    r = np.clip(np.nan_to_num(np.asarray(rate, dtype=float), nan=0.0), 0.0, 1.0)
    write_pgm(path, (r**gamma) * maxval, maxval)


def write_heatmap(path, values, log_scale=False, bits=16):
    v = np.asarray(values, dtype=float)
    if log_scale:
        v = np.log10(np.maximum(v, 1e-12))
    lo, hi = np.nanmin(v), np.nanmax(v)
    scaled = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    maxval = 65535 if bits == 16 else 255
    write_pgm(path, scaled * maxval, maxval)


def _write_stream(path, bits, flags):
    n, h, w = bits.shape
    if w > 0xFFFF or h > 0xFFFF:
        raise FormatError("frame dimensions exceed 65535")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, w, h, n, flags))
        for t in range(n):
            fh.write(np.packbits(bits[t].ravel()).tobytes())


def _read_stream(path):
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) != HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, w, h, n, flags = HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        per = (w * h + 7) // 8
        raw = fh.read()
    if len(raw) != per * n:
        raise FormatError(f"{path}: expected {per * n} data bytes, found {len(raw)}")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(n, per)
    bits = np.unpackbits(packed, axis=1, count=w * h).astype(bool).reshape(n, h, w)
    return bits, flags


def mask_path(path):
    return os.fspath(path) + ".mask"


def write_cube(path, cube):
    _write_stream(path, cube.frames, 0)
    _write_stream(mask_path(path), cube.mask, FLAG_MASK)


def read_cube(path):
    frames, f_flags = _read_stream(path)
    mask, m_flags = _read_stream(mask_path(path))
    if f_flags & FLAG_MASK or not m_flags & FLAG_MASK:
        raise FormatError("frame/mask stream flags are inconsistent")
    if frames.shape != mask.shape:
        raise FormatError("frame and mask streams differ in shape")
    return PhotonCube(frames, mask)


def hot_pixel_sources(hot_mask):
    """Flat index of the replacement pixel for every pixel (itself if not hot).

    The replacement is the nearest non-hot pixel in Chebyshev distance; ties
    go to the first candidate in row-major order.
    """
    hot = np.asarray(hot_mask, dtype=bool)
    if hot.ndim != 2:
        raise ValueError("hot-pixel mask must be 2-D")
    h, w = hot.shape
    src = np.arange(h * w).reshape(h, w)
    if not hot.any():
        return src
    if hot.all():
        raise ValueError("every pixel is flagged hot; nothing to copy from")
    for r, c in zip(*np.nonzero(hot)):
        d = 1
        while True:
            r0, r1 = max(r - d, 0), min(r + d, h - 1)
            c0, c1 = max(c - d, 0), min(c + d, w - 1)
            found = None
            for rr in range(r0, r1 + 1):
                ring_row = rr in (r - d, r + d)
                cols = range(c0, c1 + 1) if ring_row else [cc for cc in (c - d, c + d) if c0 <= cc <= c1]
                for cc in cols:
                    if not hot[rr, cc]:
                        found = rr * w + cc
                        break
                if found is not None:
                    break
            if found is not None:
                src[r, c] = found
                break
            d += 1
    return src


def hot_pixel_filter(frames, hot_mask):
    """Replace flagged pixels in every frame with their nearest clean neighbor."""
    frames = np.asarray(frames)
    if frames.shape[-2:] != np.shape(hot_mask):
        raise ValueError("hot-pixel mask does not match frame size")
    src = hot_pixel_sources(hot_mask).ravel()
    flat = frames.reshape(frames.shape[:-2] + (-1,))
    return flat[..., src].reshape(frames.shape)
