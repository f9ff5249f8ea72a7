"""Multi-coil masked Fourier measurement model and simulation.

The forward operator weights a dynamic image ``x`` of shape
``(N_x, N_y, N_t)`` by each coil-sensitivity map, applies an orthonormal 2D
DFT per temporal frame, and keeps only the k-space locations selected by a
sampling mask.  The orthonormal scaling makes the adjoint the exact reverse
path (zero-fill, inverse DFT, conjugate coil weighting, coil sum) and gives
``A^H A = I`` for a fully sampled single unit coil.

Measured data is stored compactly as ``(N_c, M)`` where ``M`` is the number
of sampled k-space locations, ordered row-major over ``(N_x, N_y, N_t)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .io import read_tensor, write_tensor

DEFAULT_NOISE_SIGMA = 0.02


@dataclass(frozen=True)
class CoilMaps:
    """Coil-sensitivity maps of shape ``(N_c, N_x, N_y)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3:
            raise ShapeMismatch(f"coil maps must be (N_c, N_x, N_y), got {maps.shape}")
        if not np.all((np.abs(maps) ** 2).sum(axis=0) > 0):
            raise ValueError("coil maps have dead pixels (zero total sensitivity)")
        object.__setattr__(self, "maps", maps)

    @property
    def count(self) -> int:
        return self.maps.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]


@dataclass(frozen=True)
class SamplingMask:
    """Boolean k-space sampling pattern of shape ``(N_x, N_y, N_t)``."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 3:
            raise ShapeMismatch(f"mask must be (N_x, N_y, N_t), got {mask.shape}")
        if not mask.any(axis=(0, 1)).all():
            raise ValueError("every temporal frame needs at least one sampled location")
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def num_sampled(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class KSpaceSample:
    """One measured dataset: data, sampling pattern, coils, and noise level."""

    y: np.ndarray
    mask: SamplingMask
    coils: CoilMaps
    noise_sigma: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.complex128)
        expected = (self.coils.count, self.mask.num_sampled)
        if y.shape != expected:
            raise ShapeMismatch(f"k-space data shape {y.shape}, expected {expected}")
        if self.coils.spatial_shape != self.mask.shape[:2]:
            raise ShapeMismatch("coil maps and mask disagree on the spatial shape")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        object.__setattr__(self, "y", y)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.mask.shape


def _check_image(x: np.ndarray, coils: CoilMaps, mask: SamplingMask) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != mask.shape:
        raise ShapeMismatch(f"image shape {x.shape} does not match mask {mask.shape}")
    if coils.spatial_shape != mask.shape[:2]:
        raise ShapeMismatch("coil maps and mask disagree on the spatial shape")
    return x


def forward_apply(x: np.ndarray, coils: CoilMaps, mask: SamplingMask) -> np.ndarray:
    """Apply the measurement operator: coil weighting, per-frame DFT, masking."""
    x = _check_image(x, coils, mask)
    weighted = coils.maps[:, :, :, None] * x[None]
    kspace = np.fft.fft2(weighted, axes=(1, 2), norm="ortho")
    return kspace[:, mask.mask]


def adjoint_apply(y: np.ndarray, coils: CoilMaps, mask: SamplingMask) -> np.ndarray:
    """Adjoint of :func:`forward_apply`: zero-fill, inverse DFT, coil combine."""
    y = np.asarray(y, dtype=np.complex128)
    expected = (coils.count, mask.num_sampled)
    if y.shape != expected:
        raise ShapeMismatch(f"k-space data shape {y.shape}, expected {expected}")
    full = np.zeros((coils.count,) + mask.shape, dtype=np.complex128)
    full[:, mask.mask] = y
    imgs = np.fft.ifft2(full, axes=(1, 2), norm="ortho")
    return (np.conj(coils.maps)[:, :, :, None] * imgs).sum(axis=0)


def normal_apply(x: np.ndarray, coils: CoilMaps, mask: SamplingMask) -> np.ndarray:
    """Fused ``A^H A x``; equals adjoint_apply(forward_apply(x)) exactly."""
    x = _check_image(x, coils, mask)
    weighted = coils.maps[:, :, :, None] * x[None]
    kspace = np.fft.fft2(weighted, axes=(1, 2), norm="ortho")
    kspace *= mask.mask[None]
    imgs = np.fft.ifft2(kspace, axes=(1, 2), norm="ortho")
    return (np.conj(coils.maps)[:, :, :, None] * imgs).sum(axis=0)


def simulate_measurement(
    x_truth: np.ndarray,
    coils: CoilMaps,
    mask: SamplingMask,
    sigma: float = DEFAULT_NOISE_SIGMA,
    rng_seed: int = 0,
) -> KSpaceSample:
    """Measure `x_truth` and add i.i.d. complex Gaussian noise of scale `sigma`.

    The noise has standard deviation `sigma` per real component and is
    reproducible from `rng_seed`.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    y = forward_apply(x_truth, coils, mask)
    if sigma > 0:
        rng = np.random.default_rng(rng_seed)
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + sigma * noise
    return KSpaceSample(y=y, mask=mask, coils=coils, noise_sigma=float(sigma))


def zero_filled_recon(sample: KSpaceSample) -> np.ndarray:
    """Adjoint reconstruction ``A^H y``, the usual initial image estimate."""
    return adjoint_apply(sample.y, sample.coils, sample.mask)


def make_coil_maps(n_coils: int, spatial_shape: tuple[int, int]) -> CoilMaps:
    """Smooth synthetic coil profiles, normalized so the coil sum-of-squares is 1.

    Each coil is a complex Gaussian bump centered on a ring around the field
    of view with a mild linear phase; construction is deterministic.
    """
    nx, ny = spatial_shape
    xs = np.linspace(-1.0, 1.0, nx)[:, None]
    ys = np.linspace(-1.0, 1.0, ny)[None, :]
    maps = np.zeros((n_coils, nx, ny), dtype=np.complex128)
    for j in range(n_coils):
        ang = 2.0 * np.pi * j / n_coils
        cx, cy = 0.75 * np.cos(ang), 0.75 * np.sin(ang)
        mag = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * 0.55**2))
        phase = 0.9 * (np.cos(ang) * xs + np.sin(ang) * ys) + 0.3 * j
        maps[j] = mag * np.exp(1j * phase)
    maps /= np.sqrt((np.abs(maps) ** 2).sum(axis=0))
    return CoilMaps(maps)


def make_mask(
    shape: tuple[int, int, int],
    accel: float = 4.0,
    family: str = "columns",
    seed: int = 0,
    center_fraction: float = 0.08,
) -> SamplingMask:
    """Variable-density Cartesian undersampling mask with guaranteed center.

    ``family="columns"`` keeps full k-space columns (per-frame independent
    draws); ``family="points"`` keeps individual k-space locations.  Low
    frequencies near DC are always included and the rest are drawn with a
    Gaussian variable-density profile.  ``accel`` is the nominal
    undersampling factor.
    """
    nx, ny, nt = shape
    if accel < 1:
        raise ValueError("acceleration factor must be >= 1")
    rng = np.random.default_rng(seed)
    mask = np.zeros(shape, dtype=bool)

    def circular_dist(n: int) -> np.ndarray:
        idx = np.arange(n)
        return np.minimum(idx, n - idx) / max(n / 2.0, 1.0)

    if family == "columns":
        n_keep = max(1, round(ny / accel))
        dist = circular_dist(ny)
        n_center = min(n_keep, max(1, round(center_fraction * ny)))
        center = np.argsort(dist, kind="stable")[:n_center]
        weights = np.exp(-0.5 * (dist / 0.35) ** 2)
        candidates = np.setdiff1d(np.arange(ny), center)
        for t in range(nt):
            cols = list(center)
            extra = n_keep - len(cols)
            if extra > 0:
                p = weights[candidates] / weights[candidates].sum()
                cols.extend(rng.choice(candidates, size=extra, replace=False, p=p))
            mask[:, sorted(cols), t] = True
    elif family == "points":
        n_keep = max(1, round(nx * ny / accel))
        dx = circular_dist(nx)[:, None]
        dy = circular_dist(ny)[None, :]
        rad = np.sqrt(dx**2 + dy**2)
        n_center = min(n_keep, max(1, round(center_fraction * nx * ny)))
        center = np.argsort(rad, axis=None, kind="stable")[:n_center]
        weights = np.exp(-0.5 * (rad / 0.35) ** 2).ravel()
        candidates = np.setdiff1d(np.arange(nx * ny), center)
        for t in range(nt):
            flat = list(center)
            extra = n_keep - len(flat)
            if extra > 0:
                p = weights[candidates] / weights[candidates].sum()
                flat.extend(rng.choice(candidates, size=extra, replace=False, p=p))
            frame = np.zeros(nx * ny, dtype=bool)
            frame[flat] = True
            mask[:, :, t] = frame.reshape(nx, ny)
    else:
        raise ValueError(f"unknown mask family {family!r}")
    return SamplingMask(mask)


def save_kspace_sample(directory: str | Path, sample: KSpaceSample, seed: int | None = None) -> None:
    """Write a sample as tensor files plus a JSON sidecar into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "y.bin", sample.y)
    write_tensor(directory / "mask.bin", sample.mask.mask.astype(np.complex128))
    write_tensor(directory / "coils.bin", sample.coils.maps)
    sidecar = {
        "y": "y.bin",
        "mask": "mask.bin",
        "coils": "coils.bin",
        "sigma": sample.noise_sigma,
        "seed": seed,
    }
    (directory / "sample.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_kspace_sample(directory: str | Path) -> KSpaceSample:
    """Read a sample written by :func:`save_kspace_sample`."""
    directory = Path(directory)
    sidecar = json.loads((directory / "sample.json").read_text())
    y = read_tensor(directory / sidecar["y"])
    mask = SamplingMask(read_tensor(directory / sidecar["mask"]).real > 0.5)
    coils = CoilMaps(read_tensor(directory / sidecar["coils"]))
    return KSpaceSample(y=y, mask=mask, coils=coils, noise_sigma=float(sidecar["sigma"]))
