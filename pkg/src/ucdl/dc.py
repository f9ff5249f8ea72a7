"""Data-consistency block: regularized normal-equation solves by CG.

Given measured k-space y and a dictionary approximation x_approx of the
image, the block solves

    (A^H A + lam I) x = A^H y + lam x_approx

with a fixed number of conjugate-gradient iterations.  The iteration count
is part of the configuration (not adaptive) so that the computation graph
has static depth; every iteration's intermediates are recorded in a trace
for the hand-written backward pass.  lam > 0 makes the operator Hermitian
positive definite, so plain CG applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csc import CodeState, FilterBank, dictionary_synthesis
from .errors import NonFiniteValue, ShapeMismatch
from .operators import CoilMaps, KSpaceSample, SamplingMask, adjoint_apply, normal_apply


@dataclass(frozen=True)
class DcConfig:
    """Fidelity weight, CG depth, and the optional early-exit threshold."""

    lam: float
    n_cg: int = 12
    residual_tol: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.n_cg < 1:
            raise ValueError(f"n_cg must be >= 1, got {self.n_cg}")
        if self.residual_tol < 0:
            raise ValueError(f"residual_tol must be >= 0, got {self.residual_tol}")


class NormalOperator:
    """H = A^H A + lam I for fixed coil maps and sampling mask."""

    def __init__(self, coils: CoilMaps, mask: SamplingMask, lam: float):
        self.coils = coils
        self.mask = mask
        self.lam = float(lam)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return normal_apply(x, self.coils, self.mask) + self.lam * x


@dataclass(frozen=True)
class CgIteration:
    """Quantities of one CG iteration kept for the backward pass."""

    p: np.ndarray
    q: np.ndarray          # H p
    r_next: np.ndarray     # residual after the update
    rho: float             # ||r||^2 entering the iteration
    pi: float              # Re<p, H p>
    alpha: float
    beta: float | None     # None on the final recorded iteration


@dataclass(frozen=True)
class CgTrace:
    """Initial state plus the per-iteration records of one solve."""

    x0: np.ndarray
    r0: np.ndarray
    iterations: tuple


@dataclass(frozen=True)
class CgResult:
    image: np.ndarray
    residuals: tuple       # residual norms, initial value first
    trace: CgTrace


def cg_solve(rhs: np.ndarray, operator, x0: np.ndarray, config: DcConfig) -> CgResult:
    """Run exactly config.n_cg CG iterations on operator(x) = rhs from x0.

    Stops early only on an exactly zero residual (the system is solved) or,
    when config.residual_tol > 0, on relative residual below the threshold.
    """
    if rhs.shape != x0.shape:
        raise ShapeMismatch(f"rhs shape {rhs.shape} vs start shape {x0.shape}")
    x = x0.astype(np.complex128, copy=True)
    r = rhs - operator(x0)
    if not np.all(np.isfinite(r)):
        raise NonFiniteValue("non-finite residual at CG start")
    r0 = r
    p = r.copy()
    rho = float(np.vdot(r, r).real)
    rhs_norm = float(np.linalg.norm(rhs))
    residuals = [np.sqrt(rho)]
    records = []
    for _ in range(config.n_cg):
        if rho == 0.0:
            break
        q = operator(p)
        if not np.all(np.isfinite(q)):
            raise NonFiniteValue("non-finite operator output during CG")
        pi = float(np.vdot(p, q).real)
        alpha = rho / pi
        x = x + alpha * p
        r_next = r - alpha * q
        rho_next = float(np.vdot(r_next, r_next).real)
        records.append(
            CgIteration(p=p, q=q, r_next=r_next, rho=rho, pi=pi, alpha=alpha, beta=None)
        )
        residuals.append(np.sqrt(rho_next))
        stop = config.residual_tol > 0 and (
            residuals[-1] <= config.residual_tol * max(rhs_norm, 1e-300)
        )
        if stop or rho_next == 0.0:
            rho = rho_next
            r = r_next
            break
        beta = rho_next / rho
        records[-1] = CgIteration(
            p=p, q=q, r_next=r_next, rho=rho, pi=pi, alpha=alpha, beta=beta
        )
        p = r_next + beta * p
        r = r_next
        rho = rho_next
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("non-finite CG iterate")
    trace = CgTrace(x0=x0.astype(np.complex128, copy=False), r0=r0,
                    iterations=tuple(records))
    return CgResult(image=x, residuals=tuple(residuals), trace=trace)


def build_rhs(sample: KSpaceSample, approx: np.ndarray, lam: float) -> np.ndarray:
    """Assemble A^H y + lam * approx."""
    if approx.shape != sample.image_shape:
        raise ShapeMismatch(
            f"approximation shape {approx.shape}, expected {sample.image_shape}"
        )
    return adjoint_apply(sample.y, sample.coils, sample.mask) + lam * approx


def dc_step(sample: KSpaceSample, state: CodeState, filters: FilterBank,
            config: DcConfig, x_prev: np.ndarray) -> np.ndarray:
    """Synthesis, right-hand side, then a warm-started CG solve."""
    approx = dictionary_synthesis(filters, state.s)
    rhs = build_rhs(sample, approx, config.lam)
    operator = NormalOperator(sample.coils, sample.mask, config.lam)
    return cg_solve(rhs, operator, x_prev, config).image
