"""
Physical-layer domain types and frequency-dependent fiber profiles.

All quantities are SI internally (Hz, W, m, 1/m power attenuation);
dB and dBm appear only at construction helpers and reporting boundaries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import c, pi

BANDS = ("L", "C", "S")

# 1550 nm
F0_1550 = c / 1550e-9

DB_PER_KM_TO_NEPER_PER_M = math.log(10) / 1e4


class ProfileRangeError(ValueError):
    """Query outside the tabulated frequency range."""


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_w(p):
    return 1e-3 * db_to_lin(p)


def w_to_dbm(p):
    return lin_to_db(np.asarray(p, dtype=float) / 1e-3)


@dataclass(frozen=True)
class Band:
    name: str
    width: float
    start: float | None = None

    def __post_init__(self):
        if self.name not in BANDS:
            raise ValueError(f"unknown band {self.name!r}, expected one of {BANDS}")
        if not self.width > 0:
            raise ValueError(f"band {self.name} width must be positive")


@dataclass(frozen=True)
class BandPlan:
    """Ordered set of bands (low to high frequency) on a fixed channel grid.

    ``start_frequency`` is the lower edge of the first band; each following
    band starts ``inter_band_gap`` above the previous band's upper edge.
    """

    bands: tuple[Band, ...]
    inter_band_gap: float = 400e9
    channel_spacing: float = 75e9
    base_slot: float = 12.5e9
    start_frequency: float = 184.4e12

    def __post_init__(self):
        if not self.bands:
            raise ValueError("band plan needs at least one band")
        ratio = self.channel_spacing / self.base_slot
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("channel_spacing must be an integer multiple of base_slot")
        edges = self.band_edges()
        for (lo, hi), (lo2, _) in zip(edges, edges[1:]):
            if lo2 < hi:
                raise ValueError("bands must be sorted by ascending frequency and not overlap")

    def band_edges(self) -> list[tuple[float, float]]:
        edges = []
        f = self.start_frequency
        for band in self.bands:
            lo = band.start if band.start is not None else f
            edges.append((lo, lo + band.width))
            f = lo + band.width + self.inter_band_gap
        return edges


def lcs_band_plan(**overrides) -> BandPlan:
    """6 THz L + 6 THz C + 8 THz S with 400 GHz gaps, 75 GHz spacing."""
    kw = dict(bands=(Band("L", 6e12), Band("C", 6e12), Band("S", 8e12)))
    kw.update(overrides)
    return BandPlan(**kw)


def c_band_plan(**overrides) -> BandPlan:
    kw = dict(bands=(Band("C", 6e12),), start_frequency=190.8e12)
    kw.update(overrides)
    return BandPlan(**kw)


@dataclass(frozen=True)
class ChannelGrid:
    frequencies: np.ndarray
    bands: tuple[str, ...]
    bandwidths: np.ndarray
    channel_spacing: float

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "bandwidths", np.asarray(self.bandwidths, dtype=float))
        if f.size and np.any(np.diff(f) <= 0):
            raise ValueError("channel frequencies must be strictly increasing")
        if len(self.bands) != f.size or self.bandwidths.size != f.size:
            raise ValueError("grid arrays must have equal length")

    def __len__(self):
        return self.frequencies.size

    @property
    def n_channels(self) -> int:
        return self.frequencies.size

    def band_mask(self, name: str) -> np.ndarray:
        return np.array([b == name for b in self.bands], dtype=bool)

    def band_names(self) -> list[str]:
        seen = []
        for b in self.bands:
            if b not in seen:
                seen.append(b)
        return seen

    def subset(self, mask) -> "ChannelGrid":
        mask = np.asarray(mask, dtype=bool)
        return ChannelGrid(
            self.frequencies[mask],
            tuple(b for b, keep in zip(self.bands, mask) if keep),
            self.bandwidths[mask],
            self.channel_spacing,
        )


def build_channel_grid(plan: BandPlan) -> ChannelGrid:
    """Place ``floor(width / spacing)`` channels, centred, in every band."""
    freqs, tags = [], []
    spacing = plan.channel_spacing
    for band, (lo, hi) in zip(plan.bands, plan.band_edges()):
        # tolerance guards widths like 6e12 / 75e9 landing a hair under an integer
        n = int(math.floor(band.width / spacing + 1e-9))
        if n < 1:
            raise ValueError(
                f"band {band.name} ({band.width / 1e9:g} GHz) is narrower than one "
                f"{spacing / 1e9:g} GHz channel"
            )
        margin = (band.width - n * spacing) / 2.0
        first = lo + margin + spacing / 2.0
        freqs.extend(first + spacing * np.arange(n))
        tags.extend([band.name] * n)
    freqs = np.asarray(freqs)
    return ChannelGrid(freqs, tuple(tags), np.full(freqs.size, spacing), spacing)


@dataclass(frozen=True)
class TabulatedProfile:
    """Sampled scalar profile with piecewise-linear interpolation."""

    x: np.ndarray
    y: np.ndarray
    name: str = "profile"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError(f"{self.name}: need two equal-length 1-D sample arrays")
        if np.any(np.diff(x) <= 0):
            raise ValueError(f"{self.name}: sample abscissae must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError(f"{self.name}: non-finite sample values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, q):
        return profile_at(self, q)


def profile_at(table: TabulatedProfile, f):
    """Evaluate ``table`` at ``f`` by linear interpolation; no extrapolation."""
    q = np.asarray(f, dtype=float)
    lo, hi = table.domain
    if np.any(q < lo) or np.any(q > hi) or not np.all(np.isfinite(q)):
        raise ProfileRangeError(
            f"{table.name}: query outside tabulated range [{lo:.6g}, {hi:.6g}]"
        )
    out = np.interp(q, table.x, table.y)
    return float(out) if out.ndim == 0 else out


def read_profile_csv(path, name: str | None = None) -> TabulatedProfile:
    """Read a two-column CSV (header row, then ``x,value`` rows)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    data = np.array([[float(v) for v in r[:2]] for r in body])
    return TabulatedProfile(data[:, 0], data[:, 1], name=name or header[1])


def bundled_data(name: str) -> Path:
    return Path(str(resources.files("mbeon") / "data" / name))


@dataclass(frozen=True)
class RamanProfile:
    """Raman gain ``C_r(f_ref, Δf)`` sampled for ``Δf >= 0``."""

    reference_pump: float
    gain: TabulatedProfile
    pump_scaling: bool = True

    def __post_init__(self):
        if self.gain.x[0] != 0.0 or self.gain.y[0] != 0.0:
            raise ValueError("Raman table must start at Δf = 0 with zero gain")

    @classmethod
    def triangular(cls, slope: float = 0.028 / 1e3 / 1e12, cutoff: float = 15e12,
                   reference_pump: float = 205e12, pump_scaling: bool = False):
        """Linear ramp ``slope * Δf`` up to ``cutoff``, zero beyond."""
        x = np.array([0.0, cutoff, cutoff * (1 + 1e-9), 60e12])
        y = np.array([0.0, slope * cutoff, 0.0, 0.0])
        return cls(reference_pump, TabulatedProfile(x, y, "c_r"), pump_scaling)

    @classmethod
    def from_csv(cls, path, reference_pump: float = 205e12, pump_scaling: bool = True):
        return cls(reference_pump, read_profile_csv(path, "c_r"), pump_scaling)


def raman_gain(profile: RamanProfile, f_pump, delta_f):
    """Raman gain coefficient in 1/(W·m), odd in ``delta_f``."""
    d = np.asarray(delta_f, dtype=float)
    g = np.sign(d) * profile_at(profile.gain, np.abs(d))
    if profile.pump_scaling:
        g = g * (np.asarray(f_pump, dtype=float) / profile.reference_pump)
    return float(g) if np.ndim(g) == 0 else g


@dataclass(frozen=True)
class FiberSpec:
    loss: TabulatedProfile  # dB/km vs Hz
    aeff: TabulatedProfile  # m^2 vs Hz
    raman: RamanProfile
    beta2: float = -21.86e-27
    beta3: float = 0.1331e-39
    beta4: float = -2.7e-55
    f0: float = F0_1550
    n2: float = 2.6e-20
    # lossless reference fibers are only for conservation checks
    allow_lossless: bool = field(default=False, repr=False)

    def __post_init__(self):
        if np.any(self.loss.y < 0) or (not self.allow_lossless and np.any(self.loss.y == 0)):
            raise ValueError("fiber loss must be positive at every tabulated frequency")
        if np.any(self.aeff.y <= 0):
            raise ValueError("effective area must be positive")

    def alpha(self, f):
        """Power attenuation in 1/m."""
        return profile_at(self.loss, f) * DB_PER_KM_TO_NEPER_PER_M

    def alpha_db_km(self, f):
        return profile_at(self.loss, f)

    def effective_area(self, f):
        return profile_at(self.aeff, f)

    def check_covers(self, grid: ChannelGrid):
        for prof in (self.loss, self.aeff):
            lo, hi = prof.domain
            if grid.frequencies[0] < lo or grid.frequencies[-1] > hi:
                raise ProfileRangeError(f"{prof.name} table does not cover the channel grid")

    def with_loss(self, db_per_km: float) -> "FiberSpec":
        """Copy with a frequency-flat loss (handy for tests and reference cases)."""
        x = self.loss.x
        flat = TabulatedProfile(x, np.full_like(x, db_per_km), "loss_db_per_km")
        return FiberSpec(flat, self.aeff, self.raman, self.beta2, self.beta3,
                         self.beta4, self.f0, self.n2, allow_lossless=db_per_km == 0)

    def with_raman(self, raman: "RamanProfile") -> "FiberSpec":
        return replace(self, raman=raman)


def default_fiber(pump_scaling: bool = True) -> FiberSpec:
    """Representative zero-water-peak SSMF. Tables are stand-ins, not measurements."""
    return FiberSpec(
        loss=read_profile_csv(bundled_data("ssmf_loss.csv"), "loss_db_per_km"),
        aeff=read_profile_csv(bundled_data("ssmf_aeff.csv"), "aeff_m2"),
        raman=RamanProfile.from_csv(bundled_data("ssmf_raman.csv"), pump_scaling=pump_scaling),
    )


def effective_beta2(fiber: FiberSpec, f_i, f_j):
    """Effective dispersion seen by the (i, j) channel pair, s^2/m."""
    di = np.asarray(f_i, dtype=float) - fiber.f0
    dj = np.asarray(f_j, dtype=float) - fiber.f0
    out = (fiber.beta2 + pi * fiber.beta3 * (di + dj)
           + (2 * pi**2 / 3) * fiber.beta4 * (di**2 + di * dj + dj**2))
    return float(out) if np.ndim(out) == 0 else out


def pair_gamma(fiber: FiberSpec, f_i, f_j):
    """Nonlinear coefficient of the (i, j) pair, 1/(W·m)."""
    fi = np.asarray(f_i, dtype=float)
    a_i = fiber.effective_area(fi)
    a_j = fiber.effective_area(f_j)
    out = (2 * pi * fi / c) * 2 * fiber.n2 / (a_i + a_j)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AmplifierSpec:
    band: str
    noise_figure: float  # dB
    max_output_power: float = 25.0  # dBm
    booster_gain: float = 20.0  # dB

    def __post_init__(self):
        if self.noise_figure < 3.0:
            raise ValueError("noise figure below the 3 dB quantum limit")

    @property
    def nf_linear(self) -> float:
        return float(db_to_lin(self.noise_figure))


DEFAULT_NOISE_FIGURES = {"C": 4.5, "L": 5.0, "S": 6.0}


def default_amplifiers(noise_figures: Mapping[str, float] | None = None) -> dict[str, AmplifierSpec]:
    nfs = dict(DEFAULT_NOISE_FIGURES)
    nfs.update(noise_figures or {})
    return {b: AmplifierSpec(b, nf) for b, nf in nfs.items()}


@dataclass(frozen=True)
class SpanSpec:
    """One fiber span followed by its (pre- or in-line) amplifier.

    ``extra_loss_db`` collects lumped connector and splice losses; it is
    compensated by the amplifier but does not enter the propagation ODE.
    """

    length: float  # m
    fiber: FiberSpec
    amplifiers: Mapping[str, AmplifierSpec] = field(default_factory=default_amplifiers)
    extra_loss_db: float = 0.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("span length must be positive")
        if self.extra_loss_db < 0:
            raise ValueError("lumped losses cannot be negative")

    def noise_figures_linear(self, grid: ChannelGrid) -> np.ndarray:
        try:
            return np.array([self.amplifiers[b].nf_linear for b in grid.bands])
        except KeyError as exc:
            raise ValueError(f"no amplifier specified for band {exc.args[0]}") from None


def span_of(length_km: float, fiber: FiberSpec | None = None, **kw) -> SpanSpec:
    return SpanSpec(length_km * 1e3, fiber or default_fiber(), **kw)


def band_stats(values: Sequence[float], grid: ChannelGrid) -> dict[str, dict[str, float]]:
    """mean / std / max-min of ``values`` per band and over the whole grid."""
    v = np.asarray(values, dtype=float)
    out = {}
    for name in grid.band_names() + ["all"]:
        sel = v if name == "all" else v[grid.band_mask(name)]
        out[name] = {
            "mean": float(np.mean(sel)),
            "std": float(np.std(sel)),
            "max_min": float(np.max(sel) - np.min(sel)),
            "min": float(np.min(sel)),
            "max": float(np.max(sel)),
        }
    return out
