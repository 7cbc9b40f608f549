"""
Semi-static service provisioning over precomputed CCR tables.

Demands arrive in sequence and never depart. Each one is groomed into spare
capacity of existing line-card interfaces (LCIs) on the same
(source, destination, path) and the remainder goes to new LCIs on the
lowest-index free channels of one candidate path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Literal, Sequence

import numpy as np

from .network import CcrEntry, CcrTable, Demand, Topology, generate_demand_sequence
from .qot import modulation_from_gsnr

RATE_UNIT = 100 * 10**9  # bit/s per cardinality step

PathPolicy = Literal["MaxMinGF", "MinMaxF"]
ModPolicy = Literal["CBG", "WAB", "WPB"]
PATH_POLICIES = ("MaxMinGF", "MinMaxF")
MOD_POLICIES = ("CBG", "WAB", "WPB")


class SpectrumAuditError(AssertionError):
    pass


@dataclass
class LciRecord:
    id: int
    source: object
    destination: object
    path_idx: int
    channel: int
    m: int
    capacity: int  # bit/s
    committed: int = 0  # bit/s

    @property
    def spare(self) -> int:
        return self.capacity - self.committed


class SpectrumState:
    """Occupied channel indices per link, shape ``(n_links, n_channels)``."""

    def __init__(self, n_links: int, n_channels: int):
        self.occupied = np.zeros((n_links, n_channels), dtype=bool)

    def free_on(self, links: Sequence[int]) -> np.ndarray:
        if not links:
            return np.ones(self.occupied.shape[1], dtype=bool)
        return ~np.any(self.occupied[list(links)], axis=0)

    def occupy(self, links: Sequence[int], channel: int):
        rows = list(links)
        if np.any(self.occupied[rows, channel]):
            raise SpectrumAuditError(f"channel {channel} double-booked on links {rows}")
        self.occupied[rows, channel] = True


@dataclass
class PlacementPlan:
    path_idx: int
    groomed: list[tuple[LciRecord, int]]  # (existing LCI, bit/s taken)
    new: list[tuple[int, int, int]]  # (channel, m, bit/s used)
    min_gsnr: float  # dB over new LCIs, +inf for pure grooming
    max_channel: int  # -1 for pure grooming
    length_km: float


@dataclass
class SimMetrics:
    offered_bits: int = 0
    blocked_bits: int = 0
    placed_bits: int = 0
    lci_count: int = 0
    gsnr_sum_db: float = 0.0
    m_histogram: dict = field(default_factory=lambda: {m: 0 for m in range(1, 7)})

    @property
    def bbp(self) -> float:
        return self.blocked_bits / self.offered_bits if self.offered_bits else 0.0

    @property
    def mean_gsnr_db(self) -> float:
        return self.gsnr_sum_db / self.lci_count if self.lci_count else math.nan


@dataclass(frozen=True)
class Checkpoint:
    demands: int
    load_gbps: float
    bbp: float
    lci_count: int
    gsnr_mean_db: float


@dataclass
class SimResult:
    metrics: SimMetrics
    checkpoints: list[Checkpoint]
    lcis: list[LciRecord]
    spectrum: SpectrumState


def policy_cardinalities(entry: CcrEntry, policy: ModPolicy, ccr: CcrTable) -> np.ndarray:
    """Cardinality per (path, channel) under a modulation policy."""
    g = entry.gsnr
    if policy == "CBG":
        return entry.m
    if policy == "WAB":
        worst = np.min(g, axis=1, keepdims=True)
        return np.broadcast_to(modulation_from_gsnr(worst, ccr.trx), g.shape).copy()
    if policy == "WPB":
        out = np.empty_like(entry.m)
        for band in ccr.grid.band_names():
            mask = ccr.grid.band_mask(band)
            worst = np.min(g[:, mask], axis=1, keepdims=True)
            out[:, mask] = modulation_from_gsnr(worst, ccr.trx)
        return out
    raise ValueError(f"unknown modulation policy {policy!r}")


def select_modulation(policy: ModPolicy, ccr: CcrTable, entry: CcrEntry, path_idx: int,
                      channel: int) -> int:
    return int(policy_cardinalities(entry, policy, ccr)[path_idx, channel])


def groom_and_place(demand: Demand, path_idx: int, m_row: np.ndarray, gsnr_row: np.ndarray,
                    free: np.ndarray, pool: Sequence[LciRecord], length_km: float = 0.0
                    ) -> PlacementPlan | None:
    """Grooming first (ascending channel), then new LCIs first-fit; ``None`` if short."""
    residual = int(demand.rate)
    groomed = []
    for lci in sorted(pool, key=lambda r: r.channel):
        if residual == 0:
            break
        take = min(lci.spare, residual)
        if take > 0:
            groomed.append((lci, take))
            residual -= take
    new = []
    if residual > 0:
        for ch in np.flatnonzero(free & (m_row > 0)):
            cap = int(m_row[ch]) * RATE_UNIT
            take = min(cap, residual)
            new.append((int(ch), int(m_row[ch]), take))
            residual -= take
            if residual == 0:
                break
    if residual > 0:
        return None
    if new:
        chans = [c for c, _, _ in new]
        min_g, max_c = float(np.min(gsnr_row[chans])), max(chans)
    else:
        min_g, max_c = math.inf, -1
    return PlacementPlan(path_idx, groomed, new, min_g, max_c, length_km)


def _plan_key(plan: PlacementPlan, policy: PathPolicy):
    if policy == "MaxMinGF":
        return (-plan.min_gsnr, plan.length_km, plan.path_idx)
    if policy == "MinMaxF":
        return (plan.max_channel, plan.length_km, plan.path_idx)
    raise ValueError(f"unknown path policy {policy!r}")


def select_path(policy: PathPolicy, plans: Sequence[PlacementPlan | None]) -> PlacementPlan | None:
    """Best feasible plan; ties go to the shorter path, then the lower index."""
    feasible = [p for p in plans if p is not None]
    if not feasible:
        return None
    return min(feasible, key=lambda p: _plan_key(p, policy))


class _Provisioner:
    def __init__(self, topo: Topology, ccr: CcrTable, policy_path: PathPolicy,
                 policy_mod: ModPolicy, grooming: bool = True):
        if policy_path not in PATH_POLICIES:
            raise ValueError(f"unknown path policy {policy_path!r}")
        if policy_mod not in MOD_POLICIES:
            raise ValueError(f"unknown modulation policy {policy_mod!r}")
        self.ccr = ccr
        self.policy_path = policy_path
        self.grooming = grooming
        self.spectrum = SpectrumState(len(topo.links), ccr.grid.n_channels)
        self.mods = {key: policy_cardinalities(e, policy_mod, ccr) for key, e in ccr.entries.items()}
        self.pools: dict = {}
        self.lcis: list[LciRecord] = []
        self.metrics = SimMetrics()

    def _key(self, d: Demand):
        return (d.source, d.destination) if (d.source, d.destination) in self.ccr.entries \
            else (d.destination, d.source)

    def admit(self, d: Demand) -> tuple[PlacementPlan | None, list[LciRecord]]:
        self.metrics.offered_bits += d.rate
        key = self._key(d)
        entry = self.ccr.entries.get(key)
        plan = None
        if entry is not None:
            mods = self.mods[key]
            plans = []
            for p, path in enumerate(entry.paths):
                pool = self.pools.get((key, p), []) if self.grooming else []
                free = self.spectrum.free_on(path.links)
                plans.append(groom_and_place(d, p, mods[p], entry.gsnr[p], free, pool, path.length_km))
            plan = select_path(self.policy_path, plans)
        if plan is None:
            self.metrics.blocked_bits += d.rate
            return None, []
        path = entry.paths[plan.path_idx]
        for lci, take in plan.groomed:
            lci.committed += take
        created = []
        for ch, m, take in plan.new:
            self.spectrum.occupy(path.links, ch)
            rec = LciRecord(len(self.lcis), key[0], key[1], plan.path_idx, ch, m, m * RATE_UNIT, take)
            self.lcis.append(rec)
            self.pools.setdefault((key, plan.path_idx), []).append(rec)
            self.metrics.lci_count += 1
            self.metrics.gsnr_sum_db += float(entry.gsnr[plan.path_idx, ch])
            self.metrics.m_histogram[m] += 1
            created.append(rec)
        self.metrics.placed_bits += d.rate
        return plan, created

    def audit(self):
        """Rebuild occupancy from the LCI list and compare."""
        rebuilt = SpectrumState(*self.spectrum.occupied.shape)
        for rec in self.lcis:
            path = self.ccr.entries[(rec.source, rec.destination)].paths[rec.path_idx]
            rebuilt.occupy(path.links, rec.channel)
            if not 0 <= rec.committed <= rec.capacity:
                raise SpectrumAuditError(f"LCI {rec.id} over-committed")
        if not np.array_equal(rebuilt.occupied, self.spectrum.occupied):
            raise SpectrumAuditError("occupancy does not match the deployed LCIs")
        m = self.metrics
        if m.offered_bits != m.placed_bits + m.blocked_bits:
            raise SpectrumAuditError("offered != placed + blocked")


def run_simulation(topo: Topology, ccr: CcrTable, demands: Sequence[Demand],
                   policy_path: PathPolicy = "MinMaxF", policy_mod: ModPolicy = "CBG",
                   checkpoint_every: int = 10, event_log: IO[str] | None = None,
                   grooming: bool = True, audit: bool = True) -> SimResult:
    """Admit ``demands`` in order; a blocked demand is never retried."""
    sim = _Provisioner(topo, ccr, policy_path, policy_mod, grooming)
    checkpoints = []
    for n, d in enumerate(demands, start=1):
        plan, created = sim.admit(d)
        if event_log is not None:
            event = {"demand_id": d.id, "action": "blocked" if plan is None else "placed",
                     "path_idx": None if plan is None else plan.path_idx,
                     "channels": [r.channel for r in created],
                     "m": [r.m for r in created],
                     "groomed_lcis": [] if plan is None else [l.id for l, _ in plan.groomed]}
            event_log.write(json.dumps(event) + "\n")
        if n % checkpoint_every == 0 or n == len(demands):
            m = sim.metrics
            checkpoints.append(Checkpoint(n, m.offered_bits / 1e9, m.bbp, m.lci_count, m.mean_gsnr_db))
    if audit:
        sim.audit()
    return SimResult(sim.metrics, checkpoints, sim.lcis, sim.spectrum)


@dataclass
class LoadCurve:
    """Seed-averaged metrics at each checkpoint."""

    demands: np.ndarray
    load_gbps: np.ndarray
    bbp_mean: np.ndarray
    bbp_std: np.ndarray
    lci_count_mean: np.ndarray
    gsnr_mean_db: np.ndarray
    results: list = field(default_factory=list, repr=False)

    def throughput_at(self, threshold: float = 0.01) -> tuple[float, bool]:
        """Offered load (Gb/s) where the mean BBP first reaches ``threshold``,
        linearly interpolated between checkpoints.

        Returns ``(load, censored)``; ``censored`` is True when the curve never
        reaches the threshold and the largest simulated load is returned.
        """
        b, x = self.bbp_mean, self.load_gbps
        hit = np.flatnonzero(b >= threshold)
        if hit.size == 0:
            return float(x[-1]), True
        i = int(hit[0])
        if i == 0:
            return float(x[0] * threshold / b[0]) if b[0] > 0 else float(x[0]), False
        x0, x1, b0, b1 = x[i - 1], x[i], b[i - 1], b[i]
        return float(x0 + (threshold - b0) * (x1 - x0) / (b1 - b0)), False


def run_iterations(topo: Topology, ccr: CcrTable, seeds: Sequence[int], demand_count: int,
                   policy_path: PathPolicy = "MinMaxF", policy_mod: ModPolicy = "CBG",
                   checkpoint_every: int = 10, grooming: bool = True,
                   log_dir=None) -> LoadCurve:
    """One seeded demand sequence per seed; metrics averaged checkpoint-wise.

    With ``log_dir`` set, each run writes ``events_seed<seed>.jsonl`` there.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    runs = []
    for seed in seeds:
        demands = generate_demand_sequence(topo, seed, demand_count)
        if log_dir is None:
            runs.append(run_simulation(topo, ccr, demands, policy_path, policy_mod,
                                       checkpoint_every, grooming=grooming))
            continue
        with open(Path(log_dir) / f"events_seed{seed}.jsonl", "w") as fh:
            runs.append(run_simulation(topo, ccr, demands, policy_path, policy_mod,
                                       checkpoint_every, fh, grooming))
    cols = lambda attr: np.array([[getattr(c, attr) for c in r.checkpoints] for r in runs], dtype=float)
    bbp = cols("bbp")
    gs = cols("gsnr_mean_db")
    gmean = _nanmean(gs)
    return LoadCurve(cols("demands")[0].astype(int), cols("load_gbps").mean(0), bbp.mean(0),
                     bbp.std(0), cols("lci_count").mean(0), gmean, runs)


def _nanmean(a: np.ndarray) -> np.ndarray:
    ok = ~np.isnan(a)
    n = ok.sum(0)
    s = np.where(ok, a, 0.0).sum(0)
    return np.where(n > 0, s / np.maximum(n, 1), np.nan)


SIMULATE_HEADER = ("load_gbps", "bbp_mean", "bbp_std", "lci_count_mean", "gsnr_mean_db")


def curve_rows(curve: LoadCurve):
    for row in zip(curve.load_gbps, curve.bbp_mean, curve.bbp_std, curve.lci_count_mean,
                   curve.gsnr_mean_db):
        yield tuple(float(v) for v in row)
