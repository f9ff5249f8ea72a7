"""Unrolled reconstruction network alternating sparse coding and data consistency.

The network runs T outer iterations.  Each iteration applies J ADMM sweeps
to the convolutional sparse-coding state for the current image estimate,
synthesizes the dictionary approximation, and solves the regularized
data-consistency system with n_cg CG iterations, warm-started from the
current estimate.  The initial estimate is the zero-filled adjoint A^H y.

Trainable parameters are the filter bank plus log_lambda, log_alpha and
log_beta; the weights themselves are exp-transformed so positivity holds
for any real parameter value.  One parameter set is shared by all outer
iterations.

Two regularization modes exist: "3d" applies K three-dimensional kernels
to the full (N_x, N_y, N_t) array, "2d" applies two-dimensional kernels
to every frame independently by moving the frame axis to the front where
it acts as a batch axis.  The data-consistency step always operates on
the full array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .csc import (
    AdmmConfig,
    AdmmStepTrace,
    CodeState,
    FilterBank,
    admm_step_traced,
    dictionary_synthesis,
    filter_spectra,
)
from .dc import CgTrace, DcConfig, NormalOperator, build_rhs, cg_solve
from .errors import NonFiniteValue, ShapeMismatch, ZeroFilter
from .io import read_tensor, write_tensor
from .operators import KSpaceSample, adjoint_apply

MODE_3D = "3d"
MODE_2D = "2d"

# paper-scale bank sizes per mode
DEFAULT_BANK = {MODE_3D: (16, 7), MODE_2D: (96, 9)}


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of the unrolled network.

    n_filters/kernel_size default to the mode's standard bank (16 filters
    of 7^3 in 3d, 96 filters of 9^2 in 2d).  n_outer = 0 degenerates to
    the zero-filled reconstruction and is permitted for testing.
    """

    mode: str = MODE_3D
    n_filters: int | None = None
    kernel_size: int | None = None
    n_outer: int = 4
    n_admm: int = 1
    n_cg: int = 12
    train_filters: bool = True

    def __post_init__(self):
        if self.mode not in (MODE_2D, MODE_3D):
            raise ValueError(f"mode must be '2d' or '3d', got {self.mode!r}")
        default_k, default_kf = DEFAULT_BANK[self.mode]
        if self.n_filters is None:
            object.__setattr__(self, "n_filters", default_k)
        if self.kernel_size is None:
            object.__setattr__(self, "kernel_size", default_kf)
        if self.n_filters < 1:
            raise ValueError(f"n_filters must be >= 1, got {self.n_filters}")
        if self.kernel_size < 1:
            raise ValueError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if self.n_outer < 0:
            raise ValueError(f"n_outer must be >= 0, got {self.n_outer}")
        if self.n_admm < 1:
            raise ValueError(f"n_admm must be >= 1, got {self.n_admm}")
        if self.n_cg < 1:
            raise ValueError(f"n_cg must be >= 1, got {self.n_cg}")

    @property
    def kernel_shape(self) -> tuple:
        d = 2 if self.mode == MODE_2D else 3
        return (self.kernel_size,) * d

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_filters": self.n_filters,
            "kernel_size": self.kernel_size,
            "n_outer": self.n_outer,
            "n_admm": self.n_admm,
            "n_cg": self.n_cg,
            "train_filters": self.train_filters,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        return cls(**data)


@dataclass(frozen=True)
class NetworkParams:
    """Trainable state: kernels plus unconstrained log-weights."""

    filters: FilterBank
    log_lam: float = 0.0
    log_alpha: float = 0.0
    log_beta: float = 0.0

    @property
    def lam(self) -> float:
        return float(np.exp(self.log_lam))

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    @property
    def beta(self) -> float:
        return float(np.exp(self.log_beta))


def init_network(config: NetworkConfig, rng_seed: int = 0) -> NetworkParams:
    """Draw a unit-norm random filter bank; weights start at one."""
    rng = np.random.default_rng(rng_seed)
    kernels = rng.standard_normal((config.n_filters,) + config.kernel_shape)
    return NetworkParams(filters=project_bank(FilterBank(kernels)))


def project_bank(filters: FilterBank) -> FilterBank:
    """Rescale every kernel to unit L2 norm."""
    norms = filters.norms()
    if np.any(norms < 1e-30):
        raise ZeroFilter(f"cannot normalize kernels with norms {norms}")
    shape = (filters.count,) + (1,) * len(filters.kernel_shape)
    return FilterBank(filters.kernels / norms.reshape(shape))


def project_filters(params: NetworkParams) -> NetworkParams:
    """Project the kernels onto the unit sphere, all other fields unchanged."""
    return replace_filters(params, project_bank(params.filters))


def replace_filters(params: NetworkParams, bank: FilterBank) -> NetworkParams:
    return replace(params, filters=bank)


def mode_2d_merge(x: np.ndarray) -> np.ndarray:
    """Move the frame axis first so frames form a batch of 2D images."""
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (N_x, N_y, N_t), got shape {x.shape}")
    return np.moveaxis(x, -1, 0)


def mode_2d_split(batch: np.ndarray) -> np.ndarray:
    """Inverse of mode_2d_merge."""
    if batch.ndim != 3:
        raise ShapeMismatch(f"expected (N_t, N_x, N_y), got shape {batch.shape}")
    return np.moveaxis(batch, 0, -1)


def _check_mode_kernels(config: NetworkConfig, filters: FilterBank) -> None:
    want = 2 if config.mode == MODE_2D else 3
    if len(filters.kernel_shape) != want:
        raise ShapeMismatch(
            f"mode {config.mode!r} needs {want}-dimensional kernels, "
            f"got shape {filters.kernel_shape}"
        )


@dataclass(frozen=True)
class OuterTrace:
    """Intermediates of one outer iteration."""

    admm: tuple          # J AdmmStepTrace entries
    s_final: np.ndarray  # codes entering the synthesis
    approx: np.ndarray   # video-shaped dictionary approximation
    cg: CgTrace


@dataclass(frozen=True)
class NetworkTrace:
    """Complete forward record needed by the backward pass."""

    config: NetworkConfig
    params: NetworkParams
    sample: KSpaceSample
    spectra: np.ndarray
    outer: tuple


@dataclass(frozen=True)
class ReconResult:
    image: np.ndarray
    code_state: CodeState
    trace: NetworkTrace | None = None


def forward_reconstruct(sample: KSpaceSample, params: NetworkParams,
                        config: NetworkConfig, want_trace: bool = False) -> ReconResult:
    """Run the unrolled network on one measured sample."""
    _check_mode_kernels(config, params.filters)
    lam, alpha, beta = params.lam, params.alpha, params.beta
    admm_cfg = AdmmConfig(lam=lam, alpha=alpha, beta=beta, inner_iters=config.n_admm)
    dc_cfg = DcConfig(lam=lam, n_cg=config.n_cg)
    operator = NormalOperator(sample.coils, sample.mask, lam)

    x = adjoint_apply(sample.y, sample.coils, sample.mask)
    shape = sample.image_shape
    if config.mode == MODE_2D:
        code_shape = (shape[2], shape[0], shape[1])
        spatial = shape[:2]
    else:
        code_shape = shape
        spatial = shape
    if any(k > n for k, n in zip(params.filters.kernel_shape, spatial)):
        raise ShapeMismatch(
            f"kernel shape {params.filters.kernel_shape} exceeds "
            f"spatial shape {spatial}"
        )
    spectra = filter_spectra(params.filters, spatial)
    state = CodeState.zeros(params.filters.count, code_shape)

    outer_traces = []
    for t in range(config.n_outer):
        try:
            reg_x = mode_2d_merge(x) if config.mode == MODE_2D else x
            step_traces = []
            for _ in range(config.n_admm):
                state, step_trace = admm_step_traced(
                    reg_x, state, params.filters, admm_cfg, spectra=spectra
                )
                step_traces.append(step_trace)
            synth = dictionary_synthesis(params.filters, state.s, spectra=spectra)
            approx = mode_2d_split(synth) if config.mode == MODE_2D else synth
            rhs = build_rhs(sample, approx, lam)
            cg = cg_solve(rhs, operator, x, dc_cfg)
            x = cg.image
        except NonFiniteValue as err:
            raise NonFiniteValue(f"outer iteration {t}: {err}") from err
        if want_trace:
            outer_traces.append(
                OuterTrace(admm=tuple(step_traces), s_final=state.s,
                           approx=approx, cg=cg.trace)
            )
    trace = None
    if want_trace:
        trace = NetworkTrace(config=config, params=params, sample=sample,
                             spectra=spectra, outer=tuple(outer_traces))
    return ReconResult(image=x, code_state=state, trace=trace)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

KERNEL_FILE = "filters.bin"
MANIFEST_FILE = "checkpoint.json"


def save_checkpoint(directory: str | Path, params: NetworkParams,
                    config: NetworkConfig) -> None:
    """Write a JSON manifest plus the kernel tensor into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / KERNEL_FILE, params.filters.kernels.astype(np.complex128))
    manifest = {
        "config": config.to_dict(),
        "log_lambda": params.log_lam,
        "log_alpha": params.log_alpha,
        "log_beta": params.log_beta,
        "kernels_file": KERNEL_FILE,
    }
    with open(directory / MANIFEST_FILE, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory: str | Path):
    """Read back (params, config) written by save_checkpoint."""
    directory = Path(directory)
    with open(directory / MANIFEST_FILE) as fh:
        manifest = json.load(fh)
    config = NetworkConfig.from_dict(manifest["config"])
    kernels = read_tensor(directory / manifest["kernels_file"])
    if np.any(kernels.imag != 0):
        raise ValueError("checkpoint kernels must be real-valued")
    params = NetworkParams(
        filters=FilterBank(kernels.real),
        log_lam=float(manifest["log_lambda"]),
        log_alpha=float(manifest["log_alpha"]),
        log_beta=float(manifest["log_beta"]),
    )
    return params, config
