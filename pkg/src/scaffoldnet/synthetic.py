"""Seeded stand-in for the two-category microscopy data.

``class-a`` images hold a few large soft-edged discs; ``class-b`` images
hold many thin oriented streaks.  Both get sensor noise and a random global
gain with a gentle illumination ramp, imitating brightly and dimly lit
fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import IMAGE_SIZE, TAG_SYNTH, encode_pgm
from .tensor import RngStream

CATEGORIES = ("class-a", "class-b")
MANIFEST = "manifest.txt"


@dataclass(frozen=True)
class SyntheticConfig:
    size: int = IMAGE_SIZE
    discs: tuple[int, int] = (3, 6)
    disc_radius: tuple[float, float] = (9.0, 20.0)
    disc_edge: float = 2.5
    streaks: tuple[int, int] = (25, 45)
    streak_length: tuple[float, float] = (20.0, 60.0)
    streak_width: float = 1.2
    contrast: tuple[float, float] = (0.18, 0.35)
    noise_sigma: float = 0.025
    gain: tuple[float, float] = (0.45, 1.25)


class _Draws:
    """Sequential scalar draws from one stream."""

    def __init__(self, rng: RngStream):
        self.rng = rng

    def u(self, lo=0.0, hi=1.0, n=None):
        vals, self.rng = self.rng.uniform(1 if n is None else n)
        vals = lo + (hi - lo) * vals
        return float(vals[0]) if n is None else vals

    def int(self, lo, hi):
        return int(lo + min(int(self.u() * (hi - lo + 1)), hi - lo))

    def normal(self, n, sigma):
        vals, self.rng = self.rng.normal(n, 0.0, sigma)
        return vals


def _render(category: int, rng: RngStream, cfg: SyntheticConfig) -> np.ndarray:
    d = _Draws(rng)
    n = cfg.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    img = np.full((n, n), d.u(0.35, 0.55))

    if category == 0:
        for _ in range(d.int(*cfg.discs)):
            cy, cx = d.u(0, n), d.u(0, n)
            radius = d.u(*cfg.disc_radius)
            amp = d.u(*cfg.contrast) * (1 if d.u() < 0.7 else -1)
            dist = np.hypot(yy - cy, xx - cx)
            img += amp / (1.0 + np.exp((dist - radius) / cfg.disc_edge))
    else:
        for _ in range(d.int(*cfg.streaks)):
            cy, cx = d.u(0, n), d.u(0, n)
            angle = d.u(0, np.pi)
            half = d.u(*cfg.streak_length) / 2.0
            amp = d.u(*cfg.contrast) * (1 if d.u() < 0.7 else -1)
            uy, ux = np.sin(angle), np.cos(angle)
            along = (yy - cy) * uy + (xx - cx) * ux
            across = -(yy - cy) * ux + (xx - cx) * uy
            t = np.clip(np.abs(along) - half, 0.0, None)
            img += amp * np.exp(-(across**2 + t**2) / (2.0 * cfg.streak_width**2))

    slope = d.u(-0.15, 0.15, 2)
    ramp = 1.0 + slope[0] * (yy / n - 0.5) + slope[1] * (xx / n - 0.5)
    img = img * ramp * d.u(*cfg.gain)
    img += d.normal(n * n, cfg.noise_sigma).reshape(n, n)
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def render_image(category: int, index: int, seed: int, cfg: SyntheticConfig | None = None) -> np.ndarray:
    """The ``index``-th image of ``category`` for ``seed`` as uint8 ``[H, W]``."""
    return _render(category, RngStream(seed).derive(TAG_SYNTH, category, index), cfg or SyntheticConfig())


def generate_synthetic(n_per_category, seed: int, out_dir, cfg: SyntheticConfig | None = None) -> Path:
    """Write ``<out_dir>/<category>/NNNNN.pgm`` plus a manifest; return the manifest path.

    ``n_per_category`` is an int or a ``(n_a, n_b)`` pair.
    """
    counts = (n_per_category, n_per_category) if np.isscalar(n_per_category) else tuple(n_per_category)
    if len(counts) != 2 or min(counts) < 1:
        raise ValueError(f"need at least one image per category, got {n_per_category}")
    out = Path(out_dir)
    lines = []
    for label, (name, count) in enumerate(zip(CATEGORIES, counts)):
        (out / name).mkdir(parents=True, exist_ok=True)
        for i in range(int(count)):
            rel = f"{name}/{i:05d}.pgm"
            (out / rel).write_bytes(encode_pgm(render_image(label, i, seed, cfg)))
            lines.append(f"{rel},{name}")
    manifest = out / MANIFEST
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
