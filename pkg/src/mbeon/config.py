"""
Run configuration: one JSON document, every field optional.

Example::

    {
      "band_plan": {"preset": "LCS"},
      "fiber": {"loss_csv": null, "aeff_csv": null, "raman_csv": null, "pump_scaling": true},
      "noise_figures_db": {"C": 4.5, "L": 5.0, "S": 6.0},
      "transceiver": {"symbol_rate_gbaud": 64, "roll_off": 0.05, "snr_trx_db": 26},
      "penalties": {"filtering_penalty_db": 0.5, "aging_margin_db": 1.0},
      "hpo": {"p_max_dbm": 6, "step_db": 0.1, "mode": "FLP"},
      "span": {"length_km": 70, "launch_dbm": 0, "extra_loss_db": 0},
      "simulation": {"topology": null, "k": 3, "seed": 1, "iterations": 20,
                     "demand_count": 1000, "policy_path": "MinMaxF", "policy_mod": "CBG"},
      "gon_powers_dbm": [-1, 0]
    }

A null topology selects the bundled 6-node fixture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .hpo import HPOConfig
from .physics import (
    Band,
    BandPlan,
    FiberSpec,
    RamanProfile,
    bundled_data,
    c_band_plan,
    default_amplifiers,
    lcs_band_plan,
    read_profile_csv,
)
from .qot import MODULATION_THRESHOLDS_DB, PenaltyConfig, TransceiverSpec


class ConfigError(ValueError):
    pass


@dataclass
class SimulationConfig:
    topology: str | None = None
    k: int = 3
    seed: int = 1
    iterations: int = 20
    demand_count: int = 1000
    policy_path: str = "MinMaxF"
    policy_mod: str = "CBG"
    checkpoint_every: int = 10
    bbp_threshold: float = 0.01

    def __post_init__(self):
        if self.seed < 1 or self.iterations < 1:
            raise ConfigError("seed and iterations must be >= 1")
        if self.k < 1 or self.demand_count < 0 or self.checkpoint_every < 1:
            raise ConfigError("k and checkpoint_every must be >= 1, demand_count >= 0")
        if self.policy_path not in ("MaxMinGF", "MinMaxF"):
            raise ConfigError(f"unknown path policy {self.policy_path!r}")
        if self.policy_mod not in ("CBG", "WAB", "WPB"):
            raise ConfigError(f"unknown modulation policy {self.policy_mod!r}")


@dataclass
class SpanConfig:
    length_km: float = 70.0
    launch_dbm: float = 0.0
    extra_loss_db: float = 0.0
    direction: str = "forward"


@dataclass
class RunConfig:
    band_plan: BandPlan = field(default_factory=lcs_band_plan)
    loss_csv: str | None = None
    aeff_csv: str | None = None
    raman_csv: str | None = None
    pump_scaling: bool = True
    noise_figures_db: dict = field(default_factory=dict)
    trx: TransceiverSpec = field(default_factory=TransceiverSpec)
    penalties: PenaltyConfig = field(default_factory=PenaltyConfig)
    hpo: HPOConfig = field(default_factory=HPOConfig)
    span: SpanConfig = field(default_factory=SpanConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    gon_powers_dbm: tuple = (-1.0, 0.0)

    def fiber(self) -> FiberSpec:
        loss = read_profile_csv(self.loss_csv or bundled_data("ssmf_loss.csv"), "loss_db_per_km")
        aeff = read_profile_csv(self.aeff_csv or bundled_data("ssmf_aeff.csv"), "aeff_m2")
        raman = RamanProfile.from_csv(self.raman_csv or bundled_data("ssmf_raman.csv"),
                                      pump_scaling=self.pump_scaling)
        return FiberSpec(loss, aeff, raman)

    def amplifiers(self):
        return default_amplifiers(self.noise_figures_db)


def _band_plan(d: Mapping) -> BandPlan:
    preset = d.get("preset")
    kw = {}
    for key, scale, name in (("inter_band_gap_ghz", 1e9, "inter_band_gap"),
                             ("channel_spacing_ghz", 1e9, "channel_spacing"),
                             ("base_slot_ghz", 1e9, "base_slot"),
                             ("start_frequency_thz", 1e12, "start_frequency")):
        if key in d:
            kw[name] = float(d[key]) * scale
    if "bands" in d:
        kw["bands"] = tuple(Band(b["name"], float(b["width_thz"]) * 1e12) for b in d["bands"])
    if preset in (None, "LCS"):
        return lcs_band_plan(**kw)
    if preset == "C":
        return c_band_plan(**kw)
    raise ConfigError(f"unknown band plan preset {preset!r}")


def _check_keys(d: Mapping, allowed: set, where: str):
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def config_from_dict(d: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("config must be a JSON object")
    _check_keys(d, {"band_plan", "fiber", "noise_figures_db", "transceiver", "penalties", "hpo",
                    "span", "simulation", "gon_powers_dbm"}, "config")
    base_dir = base_dir or Path.cwd()

    def path(p):
        if p is None:
            return None
        q = Path(p)
        q = q if q.is_absolute() else base_dir / q
        if not q.exists():
            raise ConfigError(f"file not found: {q}")
        return str(q)

    try:
        cfg = RunConfig()
        if "band_plan" in d:
            cfg.band_plan = _band_plan(d["band_plan"])
        fib = d.get("fiber", {})
        _check_keys(fib, {"loss_csv", "aeff_csv", "raman_csv", "pump_scaling"}, "fiber")
        cfg.loss_csv = path(fib.get("loss_csv"))
        cfg.aeff_csv = path(fib.get("aeff_csv"))
        cfg.raman_csv = path(fib.get("raman_csv"))
        cfg.pump_scaling = bool(fib.get("pump_scaling", True))
        cfg.noise_figures_db = {k: float(v) for k, v in d.get("noise_figures_db", {}).items()}
        cfg.amplifiers()

        t = d.get("transceiver", {})
        _check_keys(t, {"symbol_rate_gbaud", "roll_off", "fec_overhead", "snr_trx_db",
                        "thresholds_db"}, "transceiver")
        snr = t.get("snr_trx_db", 26.0)
        cfg.trx = TransceiverSpec(
            symbol_rate=float(t.get("symbol_rate_gbaud", 64.0)) * 1e9,
            roll_off=float(t.get("roll_off", 0.05)),
            fec_overhead=float(t.get("fec_overhead", 0.25)),
            snr_trx=float("inf") if snr is None else float(snr),
            thresholds=tuple(float(x) for x in t.get("thresholds_db", MODULATION_THRESHOLDS_DB)),
        )

        p = d.get("penalties", {})
        _check_keys(p, {"filtering_penalty_db", "aging_margin_db", "filtering_per_hop",
                        "connector_loss_db", "splice_loss_db_per_km", "splice_section_km"},
                    "penalties")
        cfg.penalties = PenaltyConfig(
            float(p.get("filtering_penalty_db", 0.5)), float(p.get("aging_margin_db", 1.0)),
            bool(p.get("filtering_per_hop", True)),
            tuple(float(x) for x in p.get("connector_loss_db", (0.2, 0.5))),
            tuple(float(x) for x in p.get("splice_loss_db_per_km", (0.01, 0.06))),
            float(p.get("splice_section_km", 2.0)),
        )

        h = d.get("hpo", {})
        _check_keys(h, {"p_max_dbm", "step_db", "mode", "per_band_received", "ode_step_m"}, "hpo")
        cfg.hpo = HPOConfig(p_max=float(h.get("p_max_dbm", 6.0)), step=float(h.get("step_db", 0.1)),
                            mode=str(h.get("mode", "FLP")).upper(),
                            per_band_received=bool(h.get("per_band_received", False)),
                            ode_step=float(h.get("ode_step_m", 50.0)))

        s = d.get("span", {})
        _check_keys(s, {"length_km", "launch_dbm", "extra_loss_db", "direction"}, "span")
        cfg.span = SpanConfig(**{k: (float(v) if k != "direction" else v) for k, v in s.items()})

        sim = dict(d.get("simulation", {}))
        _check_keys(sim, set(SimulationConfig.__dataclass_fields__), "simulation")
        sim["topology"] = path(sim.get("topology"))
        cfg.simulation = SimulationConfig(**sim)
        cfg.gon_powers_dbm = tuple(float(x) for x in d.get("gon_powers_dbm", (-1.0, 0.0)))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc.msg})") from None
    return config_from_dict(data, p.parent)


__all__ = ["ConfigError", "RunConfig", "SimulationConfig", "SpanConfig", "config_from_dict",
           "load_config"]
