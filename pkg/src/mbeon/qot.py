"""
Quality-of-transmission estimation: ASE and NLI noise, per-span GSNR/OSNR,
end-to-end lightpath GSNR and the GSNR -> modulation cardinality ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.constants import h, pi

from .pep import FittedLossModel, PowerEvolutionProfile
from .physics import ChannelGrid, SpanSpec, db_to_lin, effective_beta2, lin_to_db, pair_gamma

MODULATION_THRESHOLDS_DB = (3.45, 6.5, 8.4, 12.4, 16.5, 19.3)
LCI_RATE_STEP = 100e9


@dataclass(frozen=True)
class TransceiverSpec:
    symbol_rate: float = 64e9
    roll_off: float = 0.05
    fec_overhead: float = 0.25
    snr_trx: float = 26.0  # dB; math.inf disables the term
    thresholds: tuple[float, ...] = MODULATION_THRESHOLDS_DB
    rate_step: float = LCI_RATE_STEP

    def __post_init__(self):
        t = np.asarray(self.thresholds)
        if t.size == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("modulation thresholds must be strictly increasing in m")

    @property
    def max_cardinality(self) -> int:
        return len(self.thresholds)

    def lci_rate(self, m):
        return np.asarray(m) * self.rate_step


@dataclass(frozen=True)
class PenaltyConfig:
    filtering_penalty_per_roadm: float = 0.5  # dB
    aging_margin: float = 1.0  # dB
    filtering_per_hop: bool = True
    connector_loss_range: tuple[float, float] = (0.2, 0.5)  # dB
    splice_loss_rate_range: tuple[float, float] = (0.01, 0.06)  # dB/km
    splice_section_length: float = 2.0  # km

    def __post_init__(self):
        vals = (self.filtering_penalty_per_roadm, self.aging_margin, *self.connector_loss_range,
                *self.splice_loss_rate_range, self.splice_section_length)
        if any(v < 0 for v in vals):
            raise ValueError("penalties must be non-negative")

    def filtering_penalty(self, roadm_hops: int) -> float:
        if self.filtering_per_hop:
            return roadm_hops * self.filtering_penalty_per_roadm
        return self.filtering_penalty_per_roadm

    def draw_span_loss(self, rng: np.random.Generator, length_km: float) -> float:
        """One connector plus a fusion splice every ``splice_section_length`` km."""
        loss = rng.uniform(*self.connector_loss_range)
        n_splices = int(length_km // self.splice_section_length)
        if n_splices:
            rates = rng.uniform(*self.splice_loss_rate_range, size=n_splices)
            loss += float(np.sum(rates) * self.splice_section_length)
        return float(loss)


NO_PENALTIES = PenaltyConfig(0.0, 0.0, True, (0.0, 0.0), (0.0, 0.0), 2.0)


def ase_power(gain, noise_figure, f, symbol_rate):
    """ASE power in W referred to the amplifier output (linear gain and NF)."""
    g = np.asarray(gain, dtype=float)
    if np.any(g < 1.0 - 1e-12):
        raise ValueError("amplifier gain below unity")
    out = np.asarray(noise_figure) * h * np.asarray(f) * (g - 1.0) * symbol_rate
    return float(out) if np.ndim(out) == 0 else out


def amplifier_gains(received, target, extra_loss_db: float = 0.0):
    """Gain (dB) restoring ``received`` to ``target`` plus lumped span losses.

    Returns ``(gain_db, clamped)``; channels that would need attenuation
    are clamped to 0 dB and flagged.
    """
    rx = np.asarray(received, dtype=float)
    tx = np.asarray(target, dtype=float)
    if np.any(rx <= 0):
        raise ValueError("received power must be positive")
    g = lin_to_db(tx / rx) + extra_loss_db
    clamped = g < 0
    return np.where(clamped, 0.0, g), clamped


class NLIEstimator:
    """Incoherent GN-style SPM + XPM estimate driven by the fitted loss model.

    The XPM weight of interferer ``j`` on channel ``i`` integrates the GN
    kernel over the interferer's bandwidth (an ``asinh`` difference), which
    stays accurate for adjacent channels and decays as ``B_j / |f_i - f_j|``
    far from the channel under test.

    Subclass and override :meth:`xpm` (or pass any callable with the same
    signature as :meth:`__call__`) to plug in a different model.
    """

    def coefficients(self, span: SpanSpec, fit: FittedLossModel, grid: ChannelGrid) -> np.ndarray:
        """Matrix ``eta`` with SPM on the diagonal and XPM off-diagonal, 1/W^2."""
        f = grid.frequencies
        bw = grid.bandwidths
        if np.any(bw <= 0):
            raise ValueError("channel bandwidth must be positive")
        fiber = span.fiber
        leff = fit.effective_length(span.length)
        lbar = _asymptotic_length(fit, span.length)
        gam = pair_gamma(fiber, f[:, None], f[None, :])
        b2 = np.abs(effective_beta2(fiber, f[:, None], f[None, :]))
        df = np.abs(f[:, None] - f[None, :])

        eta = self.xpm(gam, b2, leff[None, :], lbar[None, :], bw[:, None], bw[None, :], df)

        d_b2 = np.diag(b2)
        xs = (pi**2 / 2) * d_b2 * lbar * bw**2
        # pi*|b2|*Lbar*B^2 == 2xs/pi
        spm = (16 / 27) * np.diag(gam) ** 2 * leff**2 * np.arcsinh(xs) / (2 * xs / pi)
        np.fill_diagonal(eta, spm)
        return eta

    @staticmethod
    def xpm(gam, b2, leff_j, lbar_j, b_i, b_j, df):
        """Off-diagonal weights; the diagonal is overwritten by the caller."""
        k = pi**2 * b2 * lbar_j * b_i
        psi = np.arcsinh(k * (df + b_j / 2)) - np.arcsinh(k * (df - b_j / 2))
        return (16 / 27) * gam**2 * leff_j**2 * psi / (pi * b2 * lbar_j * b_j**2)

    def __call__(self, span, fit, grid, launch) -> np.ndarray:
        p = np.asarray(launch, dtype=float)
        eta = self.coefficients(span, fit, grid)
        spm = np.diag(eta) * p**3
        off = eta.copy()
        np.fill_diagonal(off, 0.0)
        return spm + p * (off @ p**2)


class AsymptoticXPMEstimator(NLIEstimator):
    """Variant with the single-``asinh`` XPM closed form

        eta_ij = (32/27) gamma^2 Leff_j^2 asinh(x) / (2 pi |b2| Lbar_j B_j df),
        x = pi^2 |b2| Lbar_j B_j df.

    Much more pessimistic than the default for widely spaced channels; kept
    for comparison studies.
    """

    @staticmethod
    def xpm(gam, b2, leff_j, lbar_j, b_i, b_j, df):
        x = pi**2 * b2 * lbar_j * b_j * df
        x = np.where(df > 0, x, 1.0)
        # 2*pi*|b2|*Lbar*B*df == 2x/pi
        return (32 / 27) * gam**2 * leff_j**2 * np.arcsinh(x) / (2 * x / pi)


def _asymptotic_length(fit: FittedLossModel, length: float) -> np.ndarray:
    """``1 / alpha0``; when the fit leaves alpha0 non-positive (a channel
    sitting at the ISRS neutral point, where alpha0 and alpha1 become
    collinear) the span-average effective loss is used instead."""
    a0 = np.asarray(fit.alpha0, dtype=float)
    avg = fit.loss_exponent(length)[:, 0] / length
    a = np.where(a0 > 0, a0, avg)
    return 1.0 / np.maximum(a, 1e-9)


DEFAULT_NLI = NLIEstimator()


def nli_power(span: SpanSpec, fit: FittedLossModel, grid: ChannelGrid, launch, i: int,
              estimator: Callable = DEFAULT_NLI) -> float:
    """NLI power (W) on channel ``i``."""
    return float(estimator(span, fit, grid, launch)[i])


@dataclass(frozen=True)
class SpanNoiseBreakdown:
    signal: np.ndarray  # W, the numerator power
    p_ase: np.ndarray  # W
    p_nli: np.ndarray  # W
    gain_db: np.ndarray
    clamped: np.ndarray = field(default=None)

    @property
    def gsnr_linear(self) -> np.ndarray:
        return self.signal / (self.p_ase + self.p_nli)

    @property
    def osnr_linear(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.signal / self.p_ase

    @property
    def gsnr(self) -> np.ndarray:
        return lin_to_db(self.gsnr_linear)

    @property
    def osnr(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return lin_to_db(self.osnr_linear)


def breakdown_from_powers(signal, p_ase, p_nli, gain_db=None) -> SpanNoiseBreakdown:
    signal = np.atleast_1d(np.asarray(signal, dtype=float))
    g = np.zeros_like(signal) if gain_db is None else np.asarray(gain_db, dtype=float)
    return SpanNoiseBreakdown(signal, np.atleast_1d(np.asarray(p_ase, float)),
                              np.atleast_1d(np.asarray(p_nli, float)), g)


def span_gsnr(
    span: SpanSpec,
    pep: PowerEvolutionProfile,
    fit: FittedLossModel,
    grid: ChannelGrid,
    trx: TransceiverSpec,
    target=None,
    p_nli=None,
    estimator: Callable = DEFAULT_NLI,
) -> SpanNoiseBreakdown:
    """Noise budget of one span.

    ``target`` is the per-channel power the amplifier at the end of the
    span must deliver: the next span's (or next link's) launch profile,
    or the span's own launch for the last span of a lightpath (default).
    NLI is generated by the span's own launch profile.
    """
    launch = pep.launch
    target = launch if target is None else np.asarray(target, dtype=float)
    gain_db, clamped = amplifier_gains(pep.received, target, span.extra_loss_db)
    nf = span.noise_figures_linear(grid)
    ase = ase_power(db_to_lin(gain_db), nf, grid.frequencies, trx.symbol_rate)
    if p_nli is None:
        p_nli = estimator(span, fit, grid, launch)
    return SpanNoiseBreakdown(target.copy(), np.asarray(ase), np.asarray(p_nli), gain_db, clamped)


def lightpath_gsnr(
    spans: Sequence[SpanNoiseBreakdown],
    i=None,
    penalties: PenaltyConfig = NO_PENALTIES,
    trx: TransceiverSpec | None = None,
    roadm_hops: int = 0,
):
    """End-to-end GSNR (dB) from incoherently summed span noise.

    ``i`` selects one channel; ``None`` returns the whole profile.
    Channels with a non-positive span GSNR come back as ``-inf``.
    """
    if not spans:
        raise ValueError("lightpath needs at least one span")
    inv = np.zeros_like(np.asarray(spans[0].gsnr_linear, dtype=float))
    bad = np.zeros(inv.shape, dtype=bool)
    for sp in spans:
        g = np.asarray(sp.gsnr_linear, dtype=float)
        bad |= ~(g > 0)
        inv = inv + np.where(g > 0, 1.0 / np.where(g > 0, g, 1.0), 0.0)
    snr_trx = math.inf if trx is None else trx.snr_trx
    if math.isfinite(snr_trx):
        inv = inv + 1.0 / db_to_lin(snr_trx)
    with np.errstate(divide="ignore"):
        out = lin_to_db(1.0 / inv) - penalties.filtering_penalty(roadm_hops) - penalties.aging_margin
    out = np.where(bad, -np.inf, out)
    if i is not None:
        return float(out[i])
    return out


def channel_bandwidth_and_rate(trx: TransceiverSpec, base: float, m: int) -> tuple[float, float]:
    if not 1 <= m <= trx.max_cardinality:
        raise ValueError(f"cardinality {m} outside 1..{trx.max_cardinality}")
    slots = math.ceil(trx.symbol_rate * (1 + trx.roll_off) / base - 1e-9)
    return slots * base, m * trx.rate_step


def modulation_from_gsnr(gsnr, trx: TransceiverSpec | None = None):
    """Largest cardinality whose threshold is met (boundary inclusive); 0 if none."""
    t = np.asarray(MODULATION_THRESHOLDS_DB if trx is None else trx.thresholds)
    m = np.searchsorted(t, np.asarray(gsnr, dtype=float), side="right")
    return int(m) if np.ndim(m) == 0 else m
