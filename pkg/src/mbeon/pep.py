"""
Power evolution along a span under inter-channel stimulated Raman
scattering, plus the three-parameter effective-loss fit

    alpha(z, f) = alpha0(f) + alpha1(f) * exp(-sigma(f) * z)

whose integral gives ``ln P(z) = ln P(0) - alpha0 z - alpha1 (1 - e^{-sigma z}) / sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import trapezoid

from .physics import ChannelGrid, SpanSpec, raman_gain

DEFAULT_STEP = 50.0  # m
SIGMA_BOUNDS = (1e-7, 1e-3)  # 1/m
SIGMA_TOL = 1e-9
_NEPER_TO_DB = 10.0 / math.log(10.0)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_N_BRACKET = 41
_SEARCH_SAMPLES = 401


class SolverDivergenceError(RuntimeError):
    pass


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class PowerEvolutionProfile:
    """Per-channel power (W), shape ``(n_channels, n_z)``, on ascending ``z`` (m)."""

    z: np.ndarray
    power: np.ndarray

    @property
    def length(self) -> float:
        return float(self.z[-1])

    @property
    def launch(self) -> np.ndarray:
        return self.power[:, 0]

    @property
    def received(self) -> np.ndarray:
        return self.power[:, -1]


def received_profile(pep: PowerEvolutionProfile) -> np.ndarray:
    if pep.power.size == 0:
        raise ValueError("empty power evolution profile")
    return pep.power[:, -1].copy()


def zeta(x):
    """Photon-ratio weight: ``x`` for x > 1, 1 for 0 < x <= 1, 0 at x = 0."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 1.0, x, np.where(x == 0.0, 0.0, 1.0))


def raman_coupling_matrix(span: SpanSpec, grid: ChannelGrid) -> np.ndarray:
    """``K[i, j] = zeta(f_i / f_j) * C_r(f_j, f_j - f_i)``."""
    f = grid.frequencies
    fi, fj = f[:, None], f[None, :]
    return zeta(fi / fj) * raman_gain(span.fiber.raman, np.broadcast_to(fj, (f.size, f.size)), fj - fi)


def rk4_fixed(rhs, y0: np.ndarray, h: float, n_steps: int) -> np.ndarray:
    """Classical RK4 with a fixed step; returns every state, shape ``(n_steps + 1, *y0.shape)``."""
    out = np.empty((n_steps + 1,) + y0.shape)
    y = out[0] = y0
    for k in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def solve_pep(
    power: np.ndarray,
    span: SpanSpec,
    grid: ChannelGrid,
    direction: Literal["forward", "backward"] = "forward",
    step: float = DEFAULT_STEP,
) -> PowerEvolutionProfile:
    """Integrate the coupled ISRS power equations over one span.

    ``power`` is the launch profile (forward) or the profile at the span
    end (backward). Either way the result is reported on ascending z.
    """
    if not step > 0:
        raise ValueError("integration step must be positive")
    p = np.asarray(power, dtype=float)
    if p.shape != (grid.n_channels,):
        raise ValueError(f"power vector has shape {p.shape}, grid has {grid.n_channels} channels")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("channel powers must be finite and non-negative")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")

    alpha = span.fiber.alpha(grid.frequencies)
    coupling = raman_coupling_matrix(span, grid)

    def rhs(y):
        return y * (coupling @ y - alpha)

    n = max(1, math.ceil(span.length / step - 1e-9))
    h = span.length / n
    with np.errstate(over="ignore", invalid="ignore"):
        states = rk4_fixed(rhs, p, h if direction == "forward" else -h, n)
    if not np.all(np.isfinite(states)) or np.any(states < 0):
        raise SolverDivergenceError(
            f"ISRS integration diverged with step {h:g} m; try a smaller step"
        )
    if direction == "backward":
        states = states[::-1]
    z = np.linspace(0.0, span.length, n + 1)
    return PowerEvolutionProfile(z, np.ascontiguousarray(states.T))


@dataclass(frozen=True)
class FittedLossModel:
    alpha0: np.ndarray  # 1/m
    alpha1: np.ndarray  # 1/m
    sigma: np.ndarray  # 1/m
    rms_error_db: np.ndarray  # per channel
    M: int

    @property
    def fit_rms_error(self) -> float:
        """Worst-channel RMS residual in dB."""
        return float(np.max(self.rms_error_db))

    def loss_exponent(self, z) -> np.ndarray:
        """``alpha0 z + alpha1 (1 - e^{-sigma z}) / sigma``, shape ``(n_channels, n_z)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))[None, :]
        s = self.sigma[:, None]
        return self.alpha0[:, None] * z + self.alpha1[:, None] * (-np.expm1(-s * z)) / s

    def reconstruct(self, launch, z) -> np.ndarray:
        return np.asarray(launch, dtype=float)[:, None] * np.exp(-self.loss_exponent(z))

    def effective_length(self, length: float, n: int = 2001) -> np.ndarray:
        """Numerical integral of ``exp(-loss_exponent(z))`` over ``[0, length]``."""
        z = np.linspace(0.0, length, n)
        return trapezoid(np.exp(-self.loss_exponent(z)), z, axis=1)


def parameter_m(alpha1, sigma) -> int:
    return int(np.max(np.floor(10.0 * np.abs(2.0 * np.asarray(alpha1) / np.asarray(sigma))))) + 1


def _ls_given_sigma(z, y, sigma):
    """Closed-form (alpha0, alpha1) and SSE for each channel at fixed sigma."""
    g = -np.expm1(-sigma[:, None] * z[None, :]) / sigma[:, None]
    szz = z @ z
    szg = g @ z
    sgg = np.einsum("ij,ij->i", g, g)
    szy = y @ z
    sgy = np.einsum("ij,ij->i", g, y)
    det = szz * sgg - szg**2
    ok = det > 1e-12 * szz * sgg
    a0 = np.where(ok, (sgg * szy - szg * sgy) / np.where(ok, det, 1.0), szy / szz)
    a1 = np.where(ok, (szz * sgy - szg * szy) / np.where(ok, det, 1.0), 0.0)
    r = y - a0[:, None] * z[None, :] - a1[:, None] * g
    return a0, a1, np.einsum("ij,ij->i", r, r)


def fit_loss_model(pep: PowerEvolutionProfile, grid: ChannelGrid | None = None,
                   sigma_bounds=SIGMA_BOUNDS, tol: float = SIGMA_TOL) -> FittedLossModel:
    """Per-channel least-squares fit of the effective-loss model to a PEP.

    ``(alpha0, alpha1)`` are solved in closed form for each trial sigma;
    sigma itself is found by a golden-section search run in parallel
    over all channels, inside the bracket of a coarse log-spaced scan.
    """
    z, p = pep.z, pep.power
    if z.size < 10:
        raise DegenerateFitError("need at least 10 z-samples to fit the loss model")
    if grid is not None and p.shape[0] != grid.n_channels:
        raise ValueError("PEP and grid disagree on the channel count")
    if not np.all(p > 0):
        raise DegenerateFitError("cannot fit channels carrying zero power")
    y_full = -np.log(p / p[:, :1])
    n = p.shape[0]
    # sigma is searched on an evenly thinned copy of the profile; the final
    # (alpha0, alpha1) and the residual use every sample
    stride = max(1, math.ceil((z.size - 1) / (_SEARCH_SAMPLES - 1)))
    z_full = z
    z, y = z_full[::stride], y_full[:, ::stride]

    # the SSE is not unimodal in sigma for every channel: bracket the best
    # point of a log-spaced pre-scan, then refine by golden section
    lo, hi = float(sigma_bounds[0]), float(sigma_bounds[1])
    coarse = np.geomspace(lo, hi, _N_BRACKET)
    sse_c = np.stack([_ls_given_sigma(z, y, np.full(n, s))[2] for s in coarse], axis=1)
    k = np.argmin(sse_c, axis=1)
    a = coarse[np.maximum(k - 1, 0)]
    b = coarse[np.minimum(k + 1, _N_BRACKET - 1)]

    def sse(s, rows=slice(None)):
        return _ls_given_sigma(z, y[rows], s)[2]

    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = sse(x1), sse(x2)
    while np.max(b - a) > tol:
        left = f1 < f2
        # left: keep [a, x2]; right: keep [x1, b]
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x2n = np.where(left, x1, a + _INVPHI * (b - a))
        x1n = np.where(left, b - _INVPHI * (b - a), x2)
        f2n = np.where(left, f1, np.nan)
        f1n = np.where(left, np.nan, f2)
        x1, x2 = x1n, x2n
        need1, need2 = np.isnan(f1n), np.isnan(f2n)
        if need1.any():
            f1n[need1] = sse(x1[need1], need1)
        if need2.any():
            f2n[need2] = sse(x2[need2], need2)
        f1, f2 = f1n, f2n

    sigma = 0.5 * (a + b)
    a0, a1, err = _ls_given_sigma(z_full, y_full, sigma)
    rms_db = _NEPER_TO_DB * np.sqrt(np.maximum(err, 0.0) / z_full.size)
    return FittedLossModel(a0, a1, sigma, rms_db, parameter_m(a1, sigma))
