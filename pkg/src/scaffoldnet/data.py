"""Image ingestion, preprocessing, augmentation, splitting and batching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .tensor import RngStream

IMAGE_SIZE = 128
DEFAULT_CATEGORIES = ("MDA-MB-468", "MCF7")
SUPPORTED_EXTENSIONS = (".pgm", ".png")
STD_FLOOR = 1e-7

# Stream tags; every random decision in the pipeline hangs off one of these.
TAG_SPLIT = 1
TAG_SHUFFLE = 2
TAG_AUGMENT = 3
TAG_DROPOUT = 4
TAG_INIT = 5
TAG_SYNTH = 6


class ImageDecodeError(ValueError):
    pass


class DatasetError(ValueError):
    pass


# --------------------------------------------------------------------- I/O


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.
    Returns the tokens and the offset just past the single whitespace byte
    that ends the header."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageDecodeError("truncated PGM header")
        tokens.append(data[start:pos])
    if pos >= n:
        raise ImageDecodeError("PGM header not followed by pixel data")
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    """Binary (P5) 8-bit PGM to a uint8 array of shape [H, W]."""
    magic = data[:2]
    if magic in (b"P6", b"P3"):
        raise ImageDecodeError("colour PPM input is not supported (single-channel images only)")
    if magic != b"P5":
        raise ImageDecodeError(f"not a binary PGM (magic {magic!r})")
    (_, w, h, maxval), off = _pgm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageDecodeError(f"malformed PGM header: {exc}") from None
    if w < 1 or h < 1:
        raise ImageDecodeError(f"bad PGM dimensions {w}x{h}")
    if not 1 <= maxval <= 255:
        raise ImageDecodeError(f"only 8-bit PGM is supported (maxval {maxval})")
    raster = data[off:off + w * h]
    if len(raster) < w * h:
        raise ImageDecodeError(f"PGM truncated: {len(raster)} of {w * h} pixel bytes")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
    if maxval != 255:
        img = np.round(img.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return img


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def _decode_png(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise ImageDecodeError("PNG support needs Pillow (pip install scaffoldnet[png])") from exc
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "L":
                raise ImageDecodeError(f"{path}: PNG mode {im.mode!r} is not 8-bit single-channel")
            return np.asarray(im, dtype=np.uint8)
    except ImageDecodeError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc


def load_image(path, size: int = IMAGE_SIZE) -> np.ndarray:
    """Read an 8-bit grayscale image into a float32 ``[size, size, 1]`` array in [0, 1]."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in SUPPORTED_EXTENSIONS:
        raise ImageDecodeError(f"{path}: unsupported image format {ext!r}")
    try:
        data = path.read_bytes() if ext == ".pgm" else None
    except OSError as exc:
        raise ImageDecodeError(f"{path}: {exc.strerror or exc}") from exc
    if ext == ".pgm":
        try:
            raw = decode_pgm(data)
        except ImageDecodeError as exc:
            raise ImageDecodeError(f"{path}: {exc}") from None
    else:
        if not path.is_file():
            raise ImageDecodeError(f"{path}: no such file")
        raw = _decode_png(path)
    img = raw.astype(np.float64) / 255.0
    if img.shape != (size, size):
        img = resize_bilinear(img, size, size)
    return img.astype(np.float32)[:, :, None]


# ---------------------------------------------------------------- sampling


def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional coordinates, clamping to the nearest edge."""
    h, w = img.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    top = img[r0, c0] + fc * (img[r0, c1] - img[r0, c0])
    bottom = img[r1, c0] + fc * (img[r1, c1] - img[r1, c0])
    return top + fr * (bottom - top)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape
    rows = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    cols = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return bilinear_sample(img.astype(np.float64), rr, cc)


def standardize(img: np.ndarray) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    out = (x - x.mean()) / max(float(x.std()), STD_FLOOR)
    return out.astype(np.float32)


@dataclass(frozen=True)
class AugmentConfig:
    hflip_probability: float = 0.5
    max_rotation_degrees: float = 5.0
    max_shift_fraction: float = 0.05
    zoom_range: tuple[float, float] = (0.95, 1.05)

    def __post_init__(self):
        if not 0.0 <= self.hflip_probability <= 1.0:
            raise ValueError(f"hflip_probability {self.hflip_probability} outside [0, 1]")
        if not 0.0 <= self.max_rotation_degrees <= 5.0:
            raise ValueError(f"rotation limit {self.max_rotation_degrees} outside [0, 5] degrees")
        if not 0.0 <= self.max_shift_fraction < 1.0:
            raise ValueError(f"shift fraction {self.max_shift_fraction} outside [0, 1)")
        lo, hi = self.zoom_range
        if not (0 < lo <= 1.0 <= hi) or abs((1.0 - lo) - (hi - 1.0)) > 1e-12:
            raise ValueError(f"zoom range {self.zoom_range} must be symmetric about 1")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 0.0, (1.0, 1.0))


def augment(img: np.ndarray, cfg: AugmentConfig, rng: RngStream, force_flip: bool | None = None) -> np.ndarray:
    """Random flip, rotation, shift and zoom, applied in that order.

    The four geometric steps are composed into one inverse mapping and the
    source is resampled once (bilinear, edge-extended).  Five uniforms are
    drawn per call whatever the config, so a sample's stream never shifts.
    """
    x = np.asarray(img)
    squeeze = x.ndim == 3
    plane = x[:, :, 0] if squeeze else x
    h, w = plane.shape
    u, _ = rng.uniform(5)
    flip = bool(u[0] < cfg.hflip_probability) if force_flip is None else force_flip
    theta = math.radians((2.0 * u[1] - 1.0) * cfg.max_rotation_degrees)
    shift_x = (2.0 * u[2] - 1.0) * cfg.max_shift_fraction * w
    shift_y = (2.0 * u[3] - 1.0) * cfg.max_shift_fraction * h
    lo, hi = cfg.zoom_range
    zoom = lo + u[4] * (hi - lo)

    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    qy, qx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # undo zoom, then shift, then rotation, then flip
    py = (qy - cy) / zoom + cy - shift_y
    px = (qx - cx) / zoom + cx - shift_x
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    dy, dx = py - cy, px - cx
    ry = cos_t * dy - sin_t * dx + cy
    rx = sin_t * dy + cos_t * dx + cx
    if flip:
        rx = (w - 1) - rx
    out = bilinear_sample(plane.astype(np.float64), ry, rx).astype(plane.dtype)
    return out[:, :, None] if squeeze else out


# ----------------------------------------------------------------- dataset


@dataclass
class Sample:
    image: np.ndarray | None  # [128, 128, 1] float32 in [0, 1]; None until loaded
    label: int
    path: str = ""


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int

    def role(self, name: str) -> list:
        key = {"train": "train", "val": "validation", "validation": "validation", "test": "test"}.get(name)
        if key is None:
            raise ValueError(f"unknown split {name!r} (train, val, test)")
        return getattr(self, key)


def scan_dataset(root, categories: Sequence[str] = DEFAULT_CATEGORIES) -> list[Sample]:
    """List ``<root>/<category>/*.pgm|*.png`` in lexicographic order of relative path.

    Label ``i`` is the position of the category in ``categories``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    found = []
    for label, name in enumerate(categories):
        d = root / name
        if not d.is_dir():
            raise DatasetError(f"category directory {d} not found")
        for f in d.iterdir():
            if f.is_file() and f.suffix.lower() in SUPPORTED_EXTENSIONS:
                found.append((f.relative_to(root).as_posix(), label))
    if not found:
        raise DatasetError(f"no .pgm/.png images under {root}")
    found.sort()
    return [Sample(None, label, str(root / rel)) for rel, label in found]


def load_samples(samples: Sequence[Sample]) -> list[Sample]:
    for s in samples:
        if s.image is None:
            s.image = load_image(s.path)
    return list(samples)


def read_manifest(path) -> list[tuple[str, str]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rel, _, cat = line.rpartition(",")
            rows.append((rel, cat))
    return rows


def default_counts(n: int) -> tuple[int, int, int]:
    """Validation and test each get floor(n/10); training takes the rest."""
    return n - 2 * (n // 10), n // 10, n // 10


def split_dataset(samples: Sequence, counts: tuple[int, int, int], seed: int) -> DatasetSplit:
    n_train, n_val, n_test = (int(c) for c in counts)
    if n_train + n_val + n_test != len(samples):
        raise ValueError(f"split counts {counts} sum to {n_train + n_val + n_test}, not {len(samples)}")
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"every split role needs at least one sample, got {counts}")
    perm, _ = RngStream(seed).derive(TAG_SPLIT).permutation(len(samples))
    items = [samples[i] for i in perm]
    return DatasetSplit(
        train=items[:n_train],
        validation=items[n_train:n_train + n_val],
        test=items[n_train + n_val:],
        seed=seed,
    )


class Batch(NamedTuple):
    images: np.ndarray  # [n, 128, 128, 1] float32
    labels: np.ndarray  # [n] float64
    indices: np.ndarray  # positions in the source list


def n_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def batch_iter(
    samples: Sequence[Sample],
    batch_size: int = 32,
    epoch: int = 0,
    seed: int = 0,
    train: bool = False,
    augment_cfg: AugmentConfig | None = None,
) -> Iterator[Batch]:
    """Mini-batches over ``samples``; the last short batch is kept.

    Training batches are reshuffled per ``(seed, epoch)`` and each image is
    augmented with a stream derived from ``(seed, epoch, sample index)``
    before standardization.  Evaluation batches keep the input order and
    are only standardized.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    if len(samples) == 0:
        raise DatasetError("cannot batch an empty sample set")
    n = len(samples)
    if train:
        order, _ = RngStream(seed).derive(TAG_SHUFFLE, epoch).permutation(n)
    else:
        order = np.arange(n)
    base = RngStream(seed)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        imgs = np.empty((len(idx), IMAGE_SIZE, IMAGE_SIZE, 1), dtype=np.float32)
        labels = np.empty(len(idx), dtype=np.float64)
        for k, i in enumerate(idx):
            s = samples[i]
            img = s.image if s.image is not None else load_image(s.path)
            if train and augment_cfg is not None:
                img = augment(img, augment_cfg, base.derive(TAG_AUGMENT, epoch, int(i)))
            imgs[k] = standardize(img)
            labels[k] = s.label
        yield Batch(imgs, labels, idx)
