"""Image file I/O: PNG (8/16-bit) and PFM float maps.

Color PNGs are sRGB on disk and linear in memory; conversion happens
here and nowhere else. Normal maps are stored as raw component encodings
n = 2c - 1 with no sRGB transform. W images and other float data travel
as PFM ("PF"/"Pf" header, negative scale = little-endian).

Pillow covers 8-bit color and 16-bit grayscale; 16-bit color PNGs are
encoded/decoded directly (zlib, filter 0 on write).
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image

from .field import CLAMP, Field2D

Array = np.ndarray


# ---------------------------------------------------------------------------
# sRGB <-> linear


def srgb_to_linear(c: Array) -> Array:
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c: Array) -> Array:
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


# ---------------------------------------------------------------------------
# Raw PNG16 color codec (Pillow has no 16-bit RGB/RGBA path)

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def _write_png16_color(path: str, arr: Array) -> None:
    """arr: uint16 (H, W, 3|4), big-endian per PNG spec, filter 0 rows."""
    h, w, c = arr.shape
    color_type = 2 if c == 3 else 6
    raw = arr.astype(">u2").tobytes()
    stride = w * c * 2
    rows = b"".join(
        b"\x00" + raw[y * stride : (y + 1) * stride] for y in range(h)
    )
    with open(path, "wb") as f:
        f.write(_PNG_SIG)
        f.write(_png_chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 16, color_type, 0, 0, 0)))
        f.write(_png_chunk(b"IDAT", zlib.compress(rows, 6)))
        f.write(_png_chunk(b"IEND", b""))


def _unfilter_scanlines(data: bytes, h: int, stride: int, bpp: int) -> bytes:
    out = bytearray()
    prev = bytearray(stride)
    pos = 0
    for _ in range(h):
        ftype = data[pos]
        pos += 1
        row = bytearray(data[pos : pos + stride])
        pos += stride
        if ftype == 1:  # sub
            for i in range(bpp, stride):
                row[i] = (row[i] + row[i - bpp]) & 0xFF
        elif ftype == 2:  # up
            for i in range(stride):
                row[i] = (row[i] + prev[i]) & 0xFF
        elif ftype == 3:  # average
            for i in range(stride):
                left = row[i - bpp] if i >= bpp else 0
                row[i] = (row[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:  # paeth
            for i in range(stride):
                a = row[i - bpp] if i >= bpp else 0
                b = prev[i]
                cc = prev[i - bpp] if i >= bpp else 0
                p = a + b - cc
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - cc)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = cc
                row[i] = (row[i] + pred) & 0xFF
        elif ftype != 0:
            raise ValueError(f"unsupported PNG filter {ftype}")
        out += row
        prev = row
    return bytes(out)


def _read_png16_color(path: str) -> Array:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _PNG_SIG:
        raise ValueError(f"{path}: not a PNG file")
    pos = 8
    idat = b""
    w = h = depth = color_type = None
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        data = blob[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            w, h, depth, color_type, _, _, interlace = struct.unpack(">IIBBBBB", data)
            if interlace:
                raise ValueError("interlaced PNG not supported")
        elif tag == b"IDAT":
            idat += data
        elif tag == b"IEND":
            break
    if depth != 16 or color_type not in (2, 6):
        raise ValueError(f"{path}: expected 16-bit color PNG")
    c = 3 if color_type == 2 else 4
    stride = w * c * 2
    raw = _unfilter_scanlines(zlib.decompress(idat), h, stride, bpp=c * 2)
    return np.frombuffer(raw, dtype=">u2").reshape(h, w, c).astype(np.uint16)


# ---------------------------------------------------------------------------
# PNG load/save at the Field2D level


def _png_header(path: str):
    """(bit_depth, color_type) from IHDR, or None if not a PNG."""
    with open(path, "rb") as f:
        head = f.read(29)
    if head[:8] != _PNG_SIG or head[12:16] != b"IHDR":
        return None
    _, _, depth, color_type = struct.unpack(">IIBB", head[16:26])
    return depth, color_type


def _load_png_raw(path: str) -> tuple[Array, int]:
    """Returns (float array in [0,1], source bit depth)."""
    header = _png_header(path)
    if header is not None and header[0] == 16 and header[1] in (2, 6):
        # Pillow quietly truncates 16-bit color to 8; decode it ourselves
        arr = _read_png16_color(path)
        return arr.astype(np.float64) / 65535.0, 16
    im = Image.open(path)
    if im.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(im, dtype=np.float64)
        return arr / 65535.0, 16
    if im.mode == "P":
        im = im.convert("RGBA")
    if im.mode not in ("L", "LA", "RGB", "RGBA"):
        im = im.convert("RGBA")
    return np.asarray(im, dtype=np.float64) / 255.0, 8


def load_color(path: str, wrap_mode: str = CLAMP) -> Field2D:
    """Color image -> linear-light rgba field (alpha stays linear)."""
    arr, _ = _load_png_raw(path)
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr], axis=-1)
    if arr.shape[2] == 2:  # LA
        arr = np.concatenate([np.repeat(arr[:, :, :1], 3, axis=2), arr[:, :, 1:]], axis=2)
    if arr.shape[2] == 3:
        arr = np.concatenate([arr, np.ones(arr.shape[:2] + (1,))], axis=2)
    out = np.empty_like(arr)
    out[..., :3] = srgb_to_linear(arr[..., :3])
    out[..., 3] = arr[..., 3]
    return Field2D(out, wrap_mode)


def load_scalar(path: str, wrap_mode: str = CLAMP) -> Field2D:
    """Grayscale image -> scalar field in [0,1]; no sRGB transform."""
    arr, _ = _load_png_raw(path)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=2)
    return Field2D(arr, wrap_mode)


def load_normal_map(path: str, wrap_mode: str = CLAMP) -> Field2D:
    """Normal map image: n = 2c - 1 per component, renormalized to unit length
    (8/16-bit quantization leaves |n| slightly off 1)."""
    arr, _ = _load_png_raw(path)
    if arr.ndim == 2 or arr.shape[2] < 3:
        raise ValueError(f"{path}: normal maps need 3 components")
    n = 2.0 * arr[..., :3] - 1.0
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    n = np.where(norm > 1e-12, n / np.maximum(norm, 1e-12), [0.0, 0.0, 1.0])
    return Field2D(n, wrap_mode)


def save_color(field: Field2D, path: str, bit_depth: int = 8) -> None:
    """Linear rgba/rgb field -> sRGB PNG; values clamped at export."""
    vals = field.values
    if vals.ndim == 2:
        vals = np.stack([vals] * 3, axis=-1)
    rgb = linear_to_srgb(vals[..., :3])
    if vals.shape[-1] == 4:
        alpha = np.clip(vals[..., 3:4], 0.0, 1.0)
        out = np.concatenate([rgb, alpha], axis=2)
    else:
        out = rgb
    if bit_depth == 8:
        q = np.round(out * 255.0).astype(np.uint8)
        Image.fromarray(q).save(path)
    elif bit_depth == 16:
        q = np.round(out * 65535.0).astype(np.uint16)
        _write_png16_color(path, q)
    else:
        raise ValueError("bit_depth must be 8 or 16")


def save_scalar(field: Field2D, path: str, bit_depth: int = 8) -> None:
    """Scalar field -> grayscale PNG (linear, clamped to [0,1])."""
    vals = np.clip(field.values, 0.0, 1.0)
    if bit_depth == 8:
        Image.fromarray(np.round(vals * 255.0).astype(np.uint8)).save(path)
    elif bit_depth == 16:
        Image.fromarray(np.round(vals * 65535.0).astype(np.uint16)).save(path)
    else:
        raise ValueError("bit_depth must be 8 or 16")


def save_normal_map(field: Field2D, path: str) -> None:
    """Unit-vector field -> 16-bit color PNG with c = (n + 1) / 2."""
    enc = np.clip((field.values + 1.0) * 0.5, 0.0, 1.0)
    _write_png16_color(path, np.round(enc * 65535.0).astype(np.uint16))


# ---------------------------------------------------------------------------
# PFM


def pfm_bytes(field: Field2D) -> bytes:
    """Float map: 'Pf' grayscale or 'PF' color, little-endian, bottom-up rows."""
    vals = field.values.astype(np.float32)
    if vals.ndim == 3 and vals.shape[2] == 4:
        vals = vals[..., :3]
    if vals.ndim == 3 and vals.shape[2] != 3:
        raise ValueError("PFM supports scalar or 3-channel fields")
    header = b"Pf\n" if vals.ndim == 2 else b"PF\n"
    h, w = vals.shape[:2]
    return b"".join([
        header,
        f"{w} {h}\n".encode(),
        b"-1.0\n",
        vals[::-1].tobytes(),
    ])


def save_pfm(field: Field2D, path: str) -> None:
    with open(path, "wb") as f:
        f.write(pfm_bytes(field))


def png_bytes(field: Field2D) -> bytes:
    """8-bit sRGB PNG encoding of a linear color field."""
    vals = field.values
    if vals.ndim == 2:
        vals = np.stack([vals] * 3, axis=-1)
    rgb = linear_to_srgb(vals[..., :3])
    if vals.shape[-1] == 4:
        out = np.concatenate([rgb, np.clip(vals[..., 3:4], 0.0, 1.0)], axis=2)
    else:
        out = rgb
    q = np.round(out * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="PNG")
    return buf.getvalue()


def load_pfm(path: str, wrap_mode: str = CLAMP) -> Field2D:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        count = w * h * (3 if magic == b"PF" else 1)
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(count * 4), dtype=dtype)
    shape = (h, w, 3) if magic == b"PF" else (h, w)
    return Field2D(data.reshape(shape)[::-1].astype(np.float64), wrap_mode)
