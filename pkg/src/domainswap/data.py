"""Synthetic two-domain datasets, PNG image I/O, unpaired sampling.

The default toy task pits filled triangles with stripe texture against
filled ellipses with smooth shading, with randomized pose, so translating
between the domains needs both a geometry change and a texture change.
Generation is fully deterministic from the dataset seed. Images travel as
8-bit square RGB PNGs written by the built-in codec, so identical pixels
always produce identical bytes.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ImageFormatError, ShapeError
from .tensor import Tensor

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
ALLOWED_SIZES = (16, 32, 64)


# -- PNG codec (8-bit RGB, non-interlaced) -------------------------------------

def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + kind + payload
            + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF))


def write_png(path, pixels: np.ndarray):
    """Write an (h, w, 3) uint8 array as a PNG; output bytes are deterministic."""
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ContractError(f"write_png expects (h, w, 3) uint8, got {pixels.shape} {pixels.dtype}")
    h, w, _ = pixels.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + pixels[row].tobytes() for row in range(h))
    body = _PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(raw, 6)) + _chunk(b"IEND", b"")
    Path(path).write_bytes(body)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, h: int, w: int) -> np.ndarray:
    bpp = 3
    stride = w * bpp
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    for row in range(h):
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int32)
        pos += 1 + stride
        prior = out[row - 1].astype(np.int32) if row else np.zeros(stride, dtype=np.int32)
        if ftype == 0:
            recon = line
        elif ftype == 2:
            recon = (line + prior) & 0xFF
        elif ftype in (1, 3, 4):
            recon = np.zeros(stride, dtype=np.int32)
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                up = prior[i]
                ul = prior[i - bpp] if i >= bpp else 0
                if ftype == 1:
                    recon[i] = (line[i] + left) & 0xFF
                elif ftype == 3:
                    recon[i] = (line[i] + (left + up) // 2) & 0xFF
                else:
                    recon[i] = (line[i] + _paeth(left, up, ul)) & 0xFF
        else:
            raise ImageFormatError(f"unknown PNG filter type {ftype}")
        out[row] = recon.astype(np.uint8)
    return out.reshape(h, w, bpp)


def read_png(path) -> np.ndarray:
    """Read an 8-bit RGB non-interlaced PNG into an (h, w, 3) uint8 array."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise ImageFormatError(f"cannot read {path}: {e}") from e
    if not blob.startswith(_PNG_SIG):
        raise ImageFormatError(f"{path} is not a PNG file")
    pos = len(_PNG_SIG)
    width = height = None
    idat = b""
    while pos + 8 <= len(blob):
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        kind = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        if len(payload) != length:
            raise ImageFormatError(f"{path}: truncated chunk {kind!r}")
        pos += 12 + length
        if kind == b"IHDR":
            width, height, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", payload)
            if depth != 8 or color != 2 or interlace != 0:
                raise ImageFormatError(f"{path}: only 8-bit RGB non-interlaced PNGs are supported")
        elif kind == b"IDAT":
            idat += payload
        elif kind == b"IEND":
            break
    if width is None or not idat:
        raise ImageFormatError(f"{path}: missing IHDR or IDAT")
    try:
        raw = zlib.decompress(idat)
    except zlib.error as e:
        raise ImageFormatError(f"{path}: corrupt image data: {e}") from e
    if len(raw) != height * (1 + width * 3):
        raise ImageFormatError(f"{path}: pixel payload has wrong length")
    return _unfilter(raw, height, width)


# -- tensor <-> file mapping -----------------------------------------------------

def load_image(path, dtype=np.float32) -> Tensor:
    """Load a square RGB PNG as a (3, h, w) tensor with values in [-1, 1]."""
    px = read_png(path)
    if px.shape[0] != px.shape[1]:
        raise ImageFormatError(f"{path}: non-square image {px.shape[1]}x{px.shape[0]}")
    data = (px.astype(np.float64) / 127.5 - 1.0).transpose(2, 0, 1)
    return Tensor(data.astype(dtype))


def save_image(img: Tensor | np.ndarray, path):
    """Write a (3, h, w) or (1, 3, h, w) tensor in [-1, 1] back to PNG.

    Inverse mapping is (v + 1) * 127.5 with round-half-up, clamped to [0, 255].
    """
    arr = img.data if isinstance(img, Tensor) else np.asarray(img)
    if arr.ndim == 4 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"save_image expects (3, h, w), got {arr.shape}")
    v = (arr.astype(np.float64) + 1.0) * 127.5
    px = np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    write_png(path, px)


def list_images(directory) -> list[Path]:
    """PNG paths in a directory, in file-name sort order."""
    return sorted(Path(directory).glob("*.png"))


def load_image_dir(directory, dtype=np.float32) -> np.ndarray:
    """Stack every PNG in a directory into an (n, 3, h, w) array in [-1, 1]."""
    paths = list_images(directory)
    if not paths:
        raise ConfigError(f"no .png images found in {directory}")
    return np.stack([load_image(p, dtype=dtype).data for p in paths])


# -- synthetic generators ------------------------------------------------------------

def _grid(size):
    coords = (np.arange(size) + 0.5) / size
    return np.meshgrid(coords, coords)  # xx, yy with yy varying down rows


def _triangle_mask(rng, size):
    xx, yy = _grid(size)
    cx, cy = rng.uniform(0.38, 0.62, 2)
    radius = rng.uniform(0.24, 0.38)
    theta = rng.uniform(0, 2 * np.pi)
    angles = theta + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    vx = cx + radius * np.cos(angles)
    vy = cy + radius * np.sin(angles)
    inside = np.ones((size, size), dtype=bool)
    for k in range(3):
        x0, y0 = vx[k], vy[k]
        x1, y1 = vx[(k + 1) % 3], vy[(k + 1) % 3]
        cross = (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0)
        ref = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
        inside &= cross * np.sign(ref) >= 0
    return inside, xx, yy


def striped_triangles(rng: np.random.Generator, size: int) -> np.ndarray:
    """Dark background, filled triangle textured with hard two-color stripes."""
    inside, xx, yy = _triangle_mask(rng, size)
    phi = rng.uniform(0, np.pi)
    freq = rng.uniform(2.5, 5.0)
    phase = rng.uniform(0, 2 * np.pi)
    stripes = np.sin(2 * np.pi * freq * (xx * np.cos(phi) + yy * np.sin(phi)) + phase) > 0

    hi = rng.uniform([0.75, 0.55, 0.10], [1.00, 0.85, 0.35])
    lo = rng.uniform([0.05, 0.10, 0.30], [0.20, 0.28, 0.55])
    fg = np.where(stripes[..., None], hi, lo)

    g0 = rng.uniform(0.06, 0.13)
    ramp = g0 + rng.uniform(0.02, 0.08) * yy
    bg = np.stack([ramp, ramp, ramp + 0.04], axis=-1)

    img = np.where(inside[..., None], fg, bg)
    return np.clip(np.floor(img * 255 + 0.5), 0, 255).astype(np.uint8)


def shaded_ellipses(rng: np.random.Generator, size: int) -> np.ndarray:
    """Light background, filled ellipse with a smooth center-bright shade."""
    xx, yy = _grid(size)
    cx, cy = rng.uniform(0.38, 0.62, 2)
    a = rng.uniform(0.20, 0.34)
    b = rng.uniform(0.14, 0.28)
    theta = rng.uniform(0, np.pi)
    dx, dy = xx - cx, yy - cy
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    rho2 = (u / a) ** 2 + (v / b) ** 2
    inside = rho2 <= 1.0
    shade = np.clip(1.0 - rho2, 0.0, 1.0)

    center = rng.uniform([0.65, 0.18, 0.22], [0.95, 0.45, 0.50])
    edge = center * 0.35
    fg = edge + (center - edge) * shade[..., None]

    g0 = rng.uniform(0.72, 0.82)
    ramp = g0 + rng.uniform(0.04, 0.10) * yy
    bg = np.stack([ramp, ramp - 0.03, ramp - 0.06], axis=-1)

    img = np.where(inside[..., None], fg, bg)
    return np.clip(np.floor(img * 255 + 0.5), 0, 255).astype(np.uint8)


GENERATOR_KINDS = {
    "striped-triangles": striped_triangles,
    "shaded-ellipses": shaded_ellipses,
}


@dataclass(frozen=True)
class DomainSpec:
    name: str
    kind: str
    size: int
    count: int
    seed: int

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(f"unknown generator kind {self.kind!r}; "
                              f"expected one of {sorted(GENERATOR_KINDS)}")
        if self.size not in ALLOWED_SIZES:
            raise ConfigError(f"image size must be one of {ALLOWED_SIZES}, got {self.size}")
        if self.count < 2:
            raise ConfigError(f"sample count must be at least 2, got {self.count}")


def default_domain_specs(size: int = 16, count: int = 100, seed: int = 0):
    """The standard toy pair: striped triangles (a) vs shaded ellipses (b)."""
    return (DomainSpec("a", "striped-triangles", size, count, seed),
            DomainSpec("b", "shaded-ellipses", size, count, seed + 1))


def generate_dataset(spec: DomainSpec, out_root) -> list[Path]:
    """Render a domain into ``<out_root>/<name>/NNNNN.png``; reruns are byte-identical."""
    gen = GENERATOR_KINDS[spec.kind]
    directory = Path(out_root) / spec.name
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index in range(spec.count):
        rng = np.random.default_rng((spec.seed, index))
        path = directory / f"{index:05d}.png"
        write_png(path, gen(rng, spec.size))
        paths.append(path)
    return paths


# -- unpaired sampling ------------------------------------------------------------------

_STREAM_A, _STREAM_B = 11, 12


class UnpairedSampler:
    """Deterministic unpaired batch stream: one image per domain per draw.

    Each domain reshuffles independently every epoch with a seed derived
    from (seed, stream, epoch), so the two index sequences never fall into a
    fixed correspondence. State is a handful of integers, which keeps
    checkpoint resume exact.
    """

    def __init__(self, dir_a, dir_b, seed: int, dtype=np.float32):
        self.images = {}
        for key, directory in (("a", dir_a), ("b", dir_b)):
            self.images[key] = load_image_dir(directory, dtype=dtype)
            if len(self.images[key]) < 1:
                raise ConfigError(f"domain {key} directory {directory} is empty")
        self.seed = seed
        self._epoch = {"a": 0, "b": 0}
        self._pos = {"a": 0, "b": 0}
        self._perm = {"a": self._permutation("a", 0), "b": self._permutation("b", 0)}

    def _permutation(self, key, epoch):
        stream = _STREAM_A if key == "a" else _STREAM_B
        rng = np.random.default_rng((self.seed, stream, epoch))
        return rng.permutation(len(self.images[key]))

    def _draw(self, key) -> int:
        if self._pos[key] == len(self._perm[key]):
            self._epoch[key] += 1
            self._pos[key] = 0
            self._perm[key] = self._permutation(key, self._epoch[key])
        idx = int(self._perm[key][self._pos[key]])
        self._pos[key] += 1
        return idx

    def next(self) -> tuple[Tensor, Tensor]:
        ia, ib = self._draw("a"), self._draw("b")
        return (Tensor(self.images["a"][ia][None]), Tensor(self.images["b"][ib][None]))

    def state(self) -> dict:
        return {"epoch_a": self._epoch["a"], "pos_a": self._pos["a"],
                "epoch_b": self._epoch["b"], "pos_b": self._pos["b"]}

    def restore(self, state: dict):
        self._epoch = {"a": int(state["epoch_a"]), "b": int(state["epoch_b"])}
        self._pos = {"a": int(state["pos_a"]), "b": int(state["pos_b"])}
        self._perm = {k: self._permutation(k, self._epoch[k]) for k in ("a", "b")}
