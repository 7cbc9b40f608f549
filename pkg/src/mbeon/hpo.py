"""
Hyper-accelerated power optimization (HPO).

A span is optimized over a single flat power: the flat launch power (FLP)
or the flat received power (FRP, whose launch profile is recovered by
integrating the ISRS equations backward). Candidates are visited in
0.1 dB steps and the scan stops at the first capacity decrease.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import bisect

from .pep import FittedLossModel, PowerEvolutionProfile, fit_loss_model, solve_pep, DEFAULT_STEP
from .physics import (
    ChannelGrid,
    FiberSpec,
    SpanSpec,
    TabulatedProfile,
    band_stats,
    dbm_to_w,
    effective_beta2,
    w_to_dbm,
)
from .qot import DEFAULT_NLI, SpanNoiseBreakdown, TransceiverSpec, ase_power, span_gsnr

logger = logging.getLogger(__name__)

SCAN_STEP_DB = 0.1


class HPOError(RuntimeError):
    pass


@dataclass(frozen=True)
class HPOConfig:
    p_max: float = 6.0  # dBm, per-channel launch cap
    step: float = SCAN_STEP_DB  # dB
    mode: Literal["FLP", "FRP"] = "FLP"
    flp_span_db: float = 3.0  # FLP scan covers [P_LOGO, P_LOGO + 3]
    frp_end: float = 0.0  # dBm
    per_band_received: bool = False
    ode_step: float = DEFAULT_STEP

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("scan step must be positive")
        if math.isnan(self.p_max):
            raise ValueError("p_max must be a number")
        if self.mode not in ("FLP", "FRP"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class HPOResult:
    mode: str
    optimal_flat_power: float  # dBm; launch (FLP) or received (FRP)
    total_capacity: float  # bit/s
    launch: np.ndarray  # W
    received: np.ndarray  # W
    gsnr: np.ndarray  # dB
    osnr: np.ndarray  # dB
    stats: dict
    trace: list[tuple[float, float]] = field(default_factory=list)
    pep: PowerEvolutionProfile | None = None
    fit: FittedLossModel | None = None
    breakdown: SpanNoiseBreakdown | None = None
    stop_reason: str = ""


def span_total_capacity(breakdown: SpanNoiseBreakdown, grid: ChannelGrid | None,
                        trx: TransceiverSpec) -> float:
    """Dual-polarization Shannon capacity summed over channels, bit/s."""
    g = np.asarray(breakdown.gsnr_linear, dtype=float)
    return float(2.0 * np.sum(trx.symbol_rate * np.log2(1.0 + g)))


def _probe_band(grid: ChannelGrid) -> ChannelGrid:
    if "C" in grid.bands:
        return grid.subset(grid.band_mask("C"))
    mid = grid.bands[grid.n_channels // 2]
    return grid.subset(grid.band_mask(mid))


def _flattened_span(span: SpanSpec, fc: float) -> SpanSpec:
    """Frequency-independent copy of ``span`` evaluated at ``fc``."""
    fib = span.fiber
    x = fib.loss.x
    loss = TabulatedProfile(x, np.full_like(x, fib.alpha_db_km(fc)), "loss_db_per_km")
    xa = fib.aeff.x
    aeff = TabulatedProfile(xa, np.full_like(xa, fib.effective_area(fc)), "aeff_m2")
    flat = FiberSpec(loss, aeff, fib.raman, beta2=effective_beta2(fib, fc, fc),
                     beta3=0.0, beta4=0.0, f0=fc, n2=fib.n2)
    return replace(span, fiber=flat)


def logo_reference_power(span: SpanSpec, grid: ChannelGrid, trx: TransceiverSpec,
                         estimator: Callable = DEFAULT_NLI) -> float:
    """Flat power (dBm) where NLI equals half the ASE on the centre channel
    of a single-band, frequency-flat, ISRS-free approximation of ``span``."""
    band = _probe_band(grid)
    probe = band.n_channels // 2
    fc = float(band.frequencies[probe])
    flat = _flattened_span(span, fc)
    n = band.n_channels
    alpha = flat.fiber.alpha(fc)
    fit = FittedLossModel(np.full(n, alpha), np.zeros(n), np.full(n, 1e-4), np.zeros(n), 1)
    eta = estimator.coefficients(flat, fit, band) if hasattr(estimator, "coefficients") else None
    gain = math.exp(alpha * span.length) * 10 ** (span.extra_loss_db / 10)
    nf = flat.amplifiers[band.bands[probe]].nf_linear
    p_ase = ase_power(gain, nf, fc, trx.symbol_rate)

    def excess(log_p):
        p = np.full(n, 10.0**log_p)
        if eta is not None:
            nli = p[probe] * (eta[probe] @ p**2)
        else:
            nli = estimator(flat, fit, band, p)[probe]
        return nli / p_ase - 0.5

    try:
        log_p = bisect(excess, -9.0, 1.0, xtol=1e-10)
    except ValueError:
        warnings.warn("could not bracket the LOGO power; falling back to 0 dBm", RuntimeWarning)
        return 0.0
    return float(10 * log_p + 30)


def scan_candidates(p_start: float, p_end: float, step: float = SCAN_STEP_DB) -> np.ndarray:
    """``p_start + k * step`` for k = 0..N, computed without accumulation."""
    if p_end < p_start - 1e-9:
        raise HPOError(f"empty scan range [{p_start:.2f}, {p_end:.2f}] dBm")
    n = int(math.floor((p_end - p_start) / step + 1e-9))
    return p_start + step * np.arange(n + 1)


def _received_targets(p_dbm: float, span: SpanSpec, grid: ChannelGrid, per_band: bool) -> np.ndarray:
    if not per_band:
        return np.full(grid.n_channels, dbm_to_w(p_dbm))
    # offset each band by its noise-figure difference to the C band
    ref = span.amplifiers["C"].noise_figure if "C" in span.amplifiers else 0.0
    offs = np.array([span.amplifiers[b].noise_figure - ref for b in grid.bands])
    return dbm_to_w(p_dbm + offs)


class PropagationCache:
    """Memo of (PEP, fit, NLI) per flat-power candidate.

    Propagation does not see lumped span losses, so spans that differ only
    in ``extra_loss_db`` share entries.
    """

    def __init__(self, maxsize: int = 512):
        self.maxsize = maxsize
        self._store: dict = {}

    def get(self, key, compute):
        hit = self._store.get(key)
        if hit is None:
            if len(self._store) >= self.maxsize:
                self._store.pop(next(iter(self._store)))
            hit = self._store[key] = compute()
        return hit


def evaluate_flat_power(span: SpanSpec, grid: ChannelGrid, trx: TransceiverSpec, p_dbm: float,
                        mode: str = "FLP", estimator: Callable = DEFAULT_NLI,
                        ode_step: float = DEFAULT_STEP, per_band: bool = False,
                        cache: PropagationCache | None = None):
    """PEP, fit and noise breakdown for one flat-power candidate."""

    def propagate():
        if mode == "FLP":
            pep = solve_pep(np.full(grid.n_channels, dbm_to_w(p_dbm)), span, grid, "forward", ode_step)
        else:
            pep = solve_pep(_received_targets(p_dbm, span, grid, per_band), span, grid,
                            "backward", ode_step)
        fit = fit_loss_model(pep, grid)
        return pep, fit, estimator(span, fit, grid, pep.launch)

    if cache is None:
        pep, fit, nli = propagate()
    else:
        key = (round(span.length, 6), id(span.fiber), id(span.amplifiers) if per_band else None,
               id(estimator), mode, round(float(p_dbm), 9), per_band, ode_step, grid.n_channels,
               float(grid.frequencies[0]), float(grid.frequencies[-1]))
        pep, fit, nli = cache.get(key, propagate)
    bd = span_gsnr(span, pep, fit, grid, trx, p_nli=nli)
    return pep, fit, bd


def _result(mode, p, tc, pep, fit, bd, grid, trace, reason) -> HPOResult:
    launch, received = pep.launch.copy(), pep.received.copy()
    stats = {
        "gsnr": band_stats(bd.gsnr, grid),
        "osnr": band_stats(bd.osnr, grid),
        "launch_dbm": band_stats(w_to_dbm(launch), grid),
        "received_dbm": band_stats(w_to_dbm(received), grid),
    }
    return HPOResult(mode, float(p), float(tc), launch, received, bd.gsnr, bd.osnr, stats,
                     list(trace), pep, fit, bd, reason)


def optimize_span_power(span: SpanSpec, grid: ChannelGrid, trx: TransceiverSpec,
                        cfg: HPOConfig = HPOConfig(), estimator: Callable = DEFAULT_NLI,
                        flp_optimum: float | None = None, p_start: float | None = None,
                        cache: PropagationCache | None = None) -> HPOResult:
    """First-descent flat-power scan of one span.

    FLP scans launch powers from ``P_LOGO`` to ``P_LOGO + 3`` dB. FRP scans
    received powers from ``P_FLP,opt - alpha_max * L`` to ``cfg.frp_end``;
    ``flp_optimum`` skips the inner FLP run when already known.
    """
    if cfg.mode == "FLP":
        start = logo_reference_power(span, grid, trx, estimator) if p_start is None else p_start
        end = start + cfg.flp_span_db
    else:
        if flp_optimum is None:
            flp = optimize_span_power(span, grid, trx, replace(cfg, mode="FLP"), estimator,
                                      cache=cache)
            flp_optimum = flp.optimal_flat_power
        a_max = float(np.max(span.fiber.alpha_db_km(grid.frequencies)))
        start = flp_optimum - a_max * span.length / 1e3 if p_start is None else p_start
        end = cfg.frp_end
    candidates = scan_candidates(start, end, cfg.step)

    best = None
    trace: list[tuple[float, float]] = []
    reason = "end of scan range"
    for p in candidates:
        pep, fit, bd = evaluate_flat_power(span, grid, trx, p, cfg.mode, estimator,
                                           cfg.ode_step, cfg.per_band_received, cache)
        if np.max(w_to_dbm(pep.launch)) > cfg.p_max + 1e-12:
            reason = "launch power cap reached"
            break
        tc = span_total_capacity(bd, grid, trx)
        trace.append((float(p), tc))
        if best is None or tc > best[1]:
            best = (p, tc, pep, fit, bd)
        else:
            reason = "capacity decreased"
            break
    if best is None:
        raise HPOError(
            f"{cfg.mode}: first candidate {candidates[0]:.2f} dBm already violates "
            f"the {cfg.p_max:.2f} dBm launch cap"
        )
    logger.debug("%s optimum %.2f dBm (%s)", cfg.mode, best[0], reason)
    return _result(cfg.mode, *best, grid, trace, reason)


def representative_span(link, fiber: FiberSpec | None = None) -> SpanSpec:
    """Span of the link's average length with its mean lumped loss."""
    return SpanSpec(link.average_span_km * 1e3, fiber or link.fiber, link.amplifiers,
                    float(np.mean(link.extra_losses_db)) if link.extra_losses_db else 0.0)


def optimize_network_powers(topology, grid: ChannelGrid, trx: TransceiverSpec,
                            cfg: HPOConfig = HPOConfig(), estimator: Callable = DEFAULT_NLI,
                            prop_cache: PropagationCache | None = None) -> dict[int, HPOResult]:
    """Per-link HPO on a representative span; identical links share one run."""
    prop_cache = prop_cache or PropagationCache()
    cache: dict = {}
    out = {}
    for link in topology.links:
        span = representative_span(link)
        key = (round(span.length, 6), round(span.extra_loss_db, 9), id(span.fiber),
               tuple(sorted((b, a.noise_figure) for b, a in span.amplifiers.items())))
        if key not in cache:
            cache[key] = optimize_span_power(span, grid, trx, cfg, estimator, cache=prop_cache)
        out[link.index] = cache[key]
    return out


def flat_launch_profiles(topology, grid: ChannelGrid, p_dbm: float) -> dict[int, np.ndarray]:
    return {link.index: np.full(grid.n_channels, dbm_to_w(p_dbm)) for link in topology.links}


@dataclass
class GonRow:
    power_dbm: float
    throughput_gbps: float
    censored: bool
    curve: object


def gon_sweep(topology, grid: ChannelGrid, trx: TransceiverSpec, powers: Sequence[float],
              penalties=None, k: int = 3, seeds: Sequence[int] = (1,), demand_count: int = 1000,
              policy_path: str = "MinMaxF", policy_mod: str = "CBG",
              bbp_threshold: float = 0.01, estimator: Callable = DEFAULT_NLI) -> list[GonRow]:
    """Network metrics for uniform flat launch powers on every span."""
    from .network import precompute_ccr
    from .provisioning import run_iterations
    from .qot import PenaltyConfig

    penalties = penalties or PenaltyConfig()
    if not topology.links:
        return []
    rows = []
    for p in powers:
        ccr = precompute_ccr(topology, grid, trx, flat_launch_profiles(topology, grid, p), k,
                             penalties, estimator)
        curve = run_iterations(topology, ccr, seeds, demand_count, policy_path, policy_mod)
        thr, censored = curve.throughput_at(bbp_threshold)
        rows.append(GonRow(float(p), thr, censored, curve))
    return rows
