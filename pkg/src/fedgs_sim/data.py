"""Synthetic heterogeneous lesion datasets.

Each client draws images of rasterized disk lesions on Gaussian background
noise. A sample is either a "small" sample (all its disks come from the small
radius range) or a "large" one (all from the large range), drawn with the
client's small_fraction. Because the ranges are disjoint, per-client
small_fractions control how under-represented small lesions are across the
federation, and a threshold placed between the two area regimes classifies
samples exactly.

Generation is deterministic: sample i of client c uses the stream keyed by
(experiment_seed, DATA_STREAM, c, i), with a fixed draw order (small-or-large
coin, lesion count, then radius/center-row/center-col per lesion, then the
noise field).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pgm import write_gray_pgm, write_mask_pgm
from .rng import DATA_STREAM, substream


class InfeasibleSpecError(ValueError):
    """Requested disk radii cannot fit inside the image frame."""


@dataclass(frozen=True)
class ClientDataSpec:
    """Recipe for one client's local dataset."""

    n_samples: int
    image_size: tuple[int, int] = (32, 32)
    lesions_per_image: tuple[int, int] = (1, 2)
    small_fraction: float = 0.1
    small_radius_range: tuple[float, float] = (2.0, 3.0)
    large_radius_range: tuple[float, float] = (6.0, 9.0)
    noise_std: float = 0.3
    lesion_intensity: float = 1.0
    seed_offset: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.image_size[0] < 1 or self.image_size[1] < 1:
            raise ValueError("image_size must be positive")
        lo, hi = self.lesions_per_image
        if not 1 <= lo <= hi:
            raise ValueError(f"bad lesions_per_image range {self.lesions_per_image}")
        if not 0.0 <= self.small_fraction <= 1.0:
            raise ValueError("small_fraction must lie in [0, 1]")
        for name, (r_lo, r_hi) in (
            ("small_radius_range", self.small_radius_range),
            ("large_radius_range", self.large_radius_range),
        ):
            if not 0.0 < r_lo <= r_hi:
                raise ValueError(f"bad {name} {(r_lo, r_hi)}")
        if not self.small_radius_range[1] < self.large_radius_range[0]:
            raise ValueError("small and large radius regimes must be disjoint")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be >= 0")
        if self.seed_offset < 0:
            raise ValueError("seed_offset must be >= 0")


@dataclass(frozen=True)
class Sample:
    """One image/mask pair; is_small is the construction-time ground truth."""

    image: np.ndarray
    mask: np.ndarray
    provenance: tuple[int, int]  # (client seed_offset, sample index)
    is_small: bool


@dataclass(frozen=True)
class Federation:
    """Training clients plus the held-out test center (which never trains)."""

    clients: list[list[Sample]]
    test_set: list[Sample]


def _check_feasible(spec: ClientDataSpec) -> None:
    height, width = spec.image_size
    max_radius = max(spec.small_radius_range[1], spec.large_radius_range[1])
    margin = math.ceil(max_radius)
    if margin > height - 1 - margin or margin > width - 1 - margin:
        raise InfeasibleSpecError(
            f"disk radius {max_radius} cannot fit fully inside a {height}x{width} image"
        )


def _stamp_disk(mask: np.ndarray, cy: int, cx: int, radius: float) -> None:
    height, width = mask.shape
    rows = np.arange(height)[:, None] - cy
    cols = np.arange(width)[None, :] - cx
    mask[rows * rows + cols * cols <= radius * radius] = 1


def generate_client_dataset(spec: ClientDataSpec, experiment_seed: int) -> list[Sample]:
    """Generate the client's samples; bit-identical across runs for the same inputs."""
    _check_feasible(spec)
    height, width = spec.image_size
    samples = []
    bad_pixels = 0
    foreground_pixels = 0
    for index in range(spec.n_samples):
        rng = substream(experiment_seed, DATA_STREAM, spec.seed_offset, index)
        is_small = bool(rng.random() < spec.small_fraction)
        r_lo, r_hi = spec.small_radius_range if is_small else spec.large_radius_range
        n_lesions = int(rng.integers(spec.lesions_per_image[0], spec.lesions_per_image[1] + 1))

        mask = np.zeros((height, width), dtype=np.uint8)
        for _ in range(n_lesions):
            radius = float(rng.uniform(r_lo, r_hi))
            margin = math.ceil(radius)
            cy = int(rng.integers(margin, height - margin))
            cx = int(rng.integers(margin, width - margin))
            _stamp_disk(mask, cy, cx, radius)

        image = rng.normal(0.0, spec.noise_std, size=(height, width))
        image[mask == 1] += spec.lesion_intensity
        samples.append(Sample(image=image, mask=mask, provenance=(spec.seed_offset, index), is_small=is_small))

        fg = mask == 1
        foreground_pixels += int(fg.sum())
        bad_pixels += int((image[fg] < spec.lesion_intensity - 5.0 * spec.noise_std).sum())

    # Sanity flag, not a failure: lesion pixels should essentially always sit
    # above intensity - 5 sigma; more than 0.1% violations suggests a bad spec.
    if foreground_pixels and bad_pixels / foreground_pixels > 0.001:
        warnings.warn(
            f"client {spec.seed_offset}: {bad_pixels}/{foreground_pixels} lesion pixels "
            "fall below lesion_intensity - 5*noise_std",
            stacklevel=2,
        )
    return samples


def build_federation(specs: list[ClientDataSpec], experiment_seed: int) -> Federation:
    """Generate all clients; the LAST spec becomes the held-out test center.

    Each client's stream is keyed by its own seed_offset, so reordering the
    training specs never changes what any single client sees.
    """
    if len(specs) < 2:
        raise ValueError("need at least 2 specs: training clients plus a test center")
    datasets = [generate_client_dataset(spec, experiment_seed) for spec in specs]
    return Federation(clients=datasets[:-1], test_set=datasets[-1])


def dump_samples(out_dir: str | Path, samples: list[Sample], manifest_name: str = "manifest.txt") -> None:
    """Write img_####.pgm / msk_####.pgm pairs plus a manifest.

    Manifest lines are "<sample id> <client> <is_small 0|1>". Images are
    clamped to [0, 1] for the 8-bit dump; masks round-trip exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, sample in enumerate(samples):
        write_gray_pgm(out / f"img_{i:04d}.pgm", sample.image)
        write_mask_pgm(out / f"msk_{i:04d}.pgm", sample.mask)
        lines.append(f"{i:04d} {sample.provenance[0]} {int(sample.is_small)}")
    (out / manifest_name).write_text("\n".join(lines) + "\n")


def dump_federation(out_dir: str | Path, federation: Federation) -> None:
    """Dump every client to client_<offset>/ and the test center to test/."""
    out = Path(out_dir)
    for dataset in federation.clients:
        offset = dataset[0].provenance[0]
        dump_samples(out / f"client_{offset}", dataset)
    dump_samples(out / "test", federation.test_set)
