"""Command-line front end: ``mbeon <command> [--config FILE] [--seed N] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .hpo import HPOConfig, HPOError, gon_sweep, optimize_network_powers, optimize_span_power
from .network import TopologyError, fixture_path, load_topology, precompute_ccr, write_ccr_csv
from .pep import DegenerateFitError, SolverDivergenceError, fit_loss_model, solve_pep
from .physics import SpanSpec, build_channel_grid, dbm_to_w, w_to_dbm
from .provisioning import SIMULATE_HEADER, curve_rows, run_iterations
from .qot import span_gsnr

log = logging.getLogger("mbeon")

COMMANDS = ("grid", "pep", "fit", "hpo-span", "hpo-network", "ccr", "simulate", "gon-sweep")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer, str)):
        return str(v)
    return f"{float(v):.6g}"


def write_csv(path: Path, header, rows) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
            n += 1
    return n


# --- stages ----------------------------------------------------------------

def _grid(cfg):
    return build_channel_grid(cfg.band_plan)


def _span(cfg: RunConfig) -> SpanSpec:
    s = cfg.span
    return SpanSpec(s.length_km * 1e3, cfg.fiber(), cfg.amplifiers(), s.extra_loss_db)


def _topology(cfg: RunConfig, fiber):
    path = cfg.simulation.topology or fixture_path()
    return load_topology(path, cfg.simulation.seed, fiber, cfg.penalties, cfg.amplifiers())


def cmd_grid(cfg, out: Path) -> str:
    g = _grid(cfg)
    rows = ((i, b, f, bw) for i, (b, f, bw) in enumerate(zip(g.bands, g.frequencies, g.bandwidths)))
    n = write_csv(out / "grid.csv", ("channel_idx", "band", "frequency_hz", "bandwidth_hz"), rows)
    return f"grid: {n} channels -> {out / 'grid.csv'}"


def _pep(cfg):
    g = _grid(cfg)
    span = _span(cfg)
    pep = solve_pep(np.full(g.n_channels, dbm_to_w(cfg.span.launch_dbm)), span, g,
                    cfg.span.direction, cfg.hpo.ode_step)
    return g, span, pep


def cmd_pep(cfg, out: Path) -> str:
    g, _, pep = _pep(cfg)
    header = ["z_m"] + [f"ch_{i}_dbm" for i in range(g.n_channels)]
    p_dbm = w_to_dbm(pep.power)
    write_csv(out / "pep.csv", header, ([z, *p_dbm[:, k]] for k, z in enumerate(pep.z)))
    tilt = p_dbm[:, -1]
    return (f"pep: {g.n_channels} channels x {pep.z.size} samples, received "
            f"{tilt.min():.2f}..{tilt.max():.2f} dBm -> {out / 'pep.csv'}")


def cmd_fit(cfg, out: Path) -> str:
    g, _, pep = _pep(cfg)
    fit = fit_loss_model(pep, g)
    rows = zip(range(g.n_channels), g.bands, g.frequencies, fit.alpha0, fit.alpha1, fit.sigma,
               fit.rms_error_db)
    write_csv(out / "fit.csv", ("channel_idx", "band", "frequency_hz", "alpha0_per_m",
                                "alpha1_per_m", "sigma_per_m", "rms_error_db"), rows)
    return f"fit: worst RMS {fit.fit_rms_error:.4f} dB, M = {fit.M} -> {out / 'fit.csv'}"


def _profile_rows(g, res):
    bd = res.breakdown
    return zip(range(g.n_channels), g.bands, g.frequencies, w_to_dbm(res.launch),
               w_to_dbm(res.received), res.gsnr, res.osnr, bd.p_ase, bd.p_nli, bd.gain_db)


PROFILE_HEADER = ("channel_idx", "band", "frequency_hz", "launch_dbm", "received_dbm", "gsnr_db",
                  "osnr_db", "p_ase_w", "p_nli_w", "gain_db")


def _stats_rows(res):
    for metric in sorted(res.stats):
        for band, st in res.stats[metric].items():
            yield metric, band, st["mean"], st["std"], st["max_min"]


def cmd_hpo_span(cfg, out: Path) -> str:
    g = _grid(cfg)
    res = optimize_span_power(_span(cfg), g, cfg.trx, cfg.hpo)
    write_csv(out / "hpo_trace.csv", ("candidate_dbm", "tc_bps"), res.trace)
    write_csv(out / "hpo_profile.csv", PROFILE_HEADER, _profile_rows(g, res))
    write_csv(out / "hpo_stats.csv", ("metric", "band", "mean", "std", "max_min"), _stats_rows(res))
    return (f"hpo-span {res.mode}: optimum {res.optimal_flat_power:.2f} dBm, "
            f"TC {res.total_capacity / 1e12:.2f} Tb/s ({res.stop_reason}) -> {out}")


def cmd_hpo_network(cfg, out: Path) -> str:
    g = _grid(cfg)
    topo = _topology(cfg, cfg.fiber())
    res = optimize_network_powers(topo, g, cfg.trx, cfg.hpo)
    rows = ((l.index, l.a, l.b, l.average_span_km, res[l.index].optimal_flat_power,
             res[l.index].total_capacity) for l in topo.links)
    write_csv(out / "network_powers.csv", ("link_idx", "a", "b", "avg_span_km",
                                           "optimal_flat_dbm", "tc_bps"), rows)
    trace = ((l.index, p, tc) for l in topo.links for p, tc in res[l.index].trace)
    write_csv(out / "network_trace.csv", ("link_idx", "candidate_dbm", "tc_bps"), trace)
    powers = [r.optimal_flat_power for r in res.values()]
    return (f"hpo-network {cfg.hpo.mode}: {len(res)} links, optimum "
            f"{min(powers):.2f}..{max(powers):.2f} dBm -> {out}")


def _link_launch(cfg, topo, g, power_dbm):
    if power_dbm is not None:
        return {l.index: np.full(g.n_channels, dbm_to_w(power_dbm)) for l in topo.links}
    return optimize_network_powers(topo, g, cfg.trx, cfg.hpo)


def _ccr(cfg, power_dbm):
    g = _grid(cfg)
    topo = _topology(cfg, cfg.fiber())
    ccr = precompute_ccr(topo, g, cfg.trx, _link_launch(cfg, topo, g, power_dbm),
                         cfg.simulation.k, cfg.penalties)
    return topo, ccr


def cmd_ccr(cfg, out: Path, power_dbm=None) -> str:
    _, ccr = _ccr(cfg, power_dbm)
    write_ccr_csv(ccr, out / "ccr.csv")
    usable = np.mean([np.mean(e.m > 0) for e in ccr.entries.values()])
    return f"ccr: {len(ccr.entries)} connections, {usable:.1%} usable cells -> {out / 'ccr.csv'}"


def _seeds(cfg):
    s = cfg.simulation
    return list(range(s.seed, s.seed + s.iterations))


def cmd_simulate(cfg, out: Path, power_dbm=None) -> str:
    topo, ccr = _ccr(cfg, power_dbm)
    s = cfg.simulation
    logs = out / "events"
    logs.mkdir(exist_ok=True)
    curve = run_iterations(topo, ccr, _seeds(cfg), s.demand_count, s.policy_path, s.policy_mod,
                           s.checkpoint_every, log_dir=logs)
    write_csv(out / "simulate.csv", SIMULATE_HEADER, curve_rows(curve))
    thr, censored = curve.throughput_at(s.bbp_threshold)
    note = " (never reached)" if censored else ""
    return (f"simulate {s.policy_path}/{s.policy_mod}: final BBP {curve.bbp_mean[-1]:.4f}, "
            f"throughput at {s.bbp_threshold:.0%} BBP {thr / 1e3:.1f} Tb/s{note} -> {out}")


def cmd_gon_sweep(cfg, out: Path, powers=None) -> str:
    g = _grid(cfg)
    topo = _topology(cfg, cfg.fiber())
    s = cfg.simulation
    powers = list(powers if powers is not None else cfg.gon_powers_dbm)
    if not powers:
        raise ConfigError("gon-sweep needs at least one power")
    rows = gon_sweep(topo, g, cfg.trx, powers, cfg.penalties, s.k, _seeds(cfg), s.demand_count,
                     s.policy_path, s.policy_mod, s.bbp_threshold)
    logon = optimize_network_powers(topo, g, cfg.trx, replace(cfg.hpo, mode="FLP"))
    ccr = precompute_ccr(topo, g, cfg.trx, logon, s.k, cfg.penalties)
    curve = run_iterations(topo, ccr, _seeds(cfg), s.demand_count, s.policy_path, s.policy_mod,
                           s.checkpoint_every)
    thr, cens = curve.throughput_at(s.bbp_threshold)
    table = [("GON", r.power_dbm, r.throughput_gbps, r.censored) for r in rows]
    table.append(("LOGON", float("nan"), thr, cens))
    write_csv(out / "gon_sweep.csv", ("scheme", "power_dbm", "throughput_gbps", "censored"), table)
    if not rows:
        return f"gon-sweep: no links, nothing to compare -> {out}"
    best = max(rows, key=lambda r: r.throughput_gbps)
    ratio = best.throughput_gbps / thr if thr > 0 else float("nan")
    return f"gon-sweep: best GON {best.power_dbm:g} dBm reaches {ratio:.1%} of LOGON -> {out}"


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="first seed (lumped losses, demands)")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mbeon", description="Multi-band EON planning toolkit")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    add("grid", "channel table of the band plan")
    for name, help_ in (("pep", "power evolution profile of one span"),
                        ("fit", "effective-loss fit of one span")):
        sp = add(name, help_)
        sp.add_argument("--length-km", type=float)
        sp.add_argument("--launch-dbm", type=float)
        sp.add_argument("--direction", choices=("forward", "backward"))
    sp = add("hpo-span", "FLP/FRP power optimization of one span")
    sp.add_argument("--mode", type=str.upper, choices=("FLP", "FRP"))
    sp.add_argument("--length-km", type=float)
    sp.add_argument("--p-max-dbm", type=float)
    sp = add("hpo-network", "per-link power optimization (LOGON)")
    sp.add_argument("--mode", type=str.upper, choices=("FLP", "FRP"))
    sp.add_argument("--topology")
    for name, help_ in (("ccr", "channel-connection capacity tables"),
                        ("simulate", "semi-static provisioning, BBP curve")):
        sp = add(name, help_)
        sp.add_argument("--mode", type=str.upper, choices=("FLP", "FRP"))
        sp.add_argument("--power-dbm", type=float, help="uniform launch instead of per-link HPO")
        sp.add_argument("--topology")
        sp.add_argument("--k", type=int)
        if name == "simulate":
            sp.add_argument("--iterations", type=int)
            sp.add_argument("--demand-count", type=int)
            sp.add_argument("--policy-path", choices=("MaxMinGF", "MinMaxF"))
            sp.add_argument("--policy-mod", choices=("CBG", "WAB", "WPB"))
    sp = add("gon-sweep", "uniform-power sweep against per-link optimum")
    sp.add_argument("--powers", type=float, nargs="+")
    sp.add_argument("--topology")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--demand-count", type=int)
    return p


def _apply_overrides(cfg: RunConfig, a) -> RunConfig:
    g = lambda name: getattr(a, name, None)
    span = cfg.span
    for flag, attr in (("length_km", "length_km"), ("launch_dbm", "launch_dbm"),
                       ("direction", "direction")):
        if g(flag) is not None:
            setattr(span, attr, g(flag))
    hpo = cfg.hpo
    if g("mode") is not None:
        hpo = replace(hpo, mode=g("mode"))
    if g("p_max_dbm") is not None:
        hpo = replace(hpo, p_max=g("p_max_dbm"))
    cfg.hpo = hpo
    sim = cfg.simulation
    kw = {}
    for flag in ("topology", "k", "iterations", "demand_count", "policy_path", "policy_mod", "seed"):
        if g(flag) is not None:
            kw[flag] = g(flag)
    if "topology" in kw and not Path(kw["topology"]).exists():
        raise ConfigError(f"topology file not found: {kw['topology']}")
    if kw:
        try:
            cfg.simulation = replace(sim, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def run_scenario(cfg: RunConfig, command: str, out: Path, args=None) -> str:
    out.mkdir(parents=True, exist_ok=True)
    power = getattr(args, "power_dbm", None)
    if command == "grid":
        return cmd_grid(cfg, out)
    if command == "pep":
        return cmd_pep(cfg, out)
    if command == "fit":
        return cmd_fit(cfg, out)
    if command == "hpo-span":
        return cmd_hpo_span(cfg, out)
    if command == "hpo-network":
        return cmd_hpo_network(cfg, out)
    if command == "ccr":
        return cmd_ccr(cfg, out, power)
    if command == "simulate":
        return cmd_simulate(cfg, out, power)
    if command == "gon-sweep":
        return cmd_gon_sweep(cfg, out, getattr(args, "powers", None))
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _apply_overrides(cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"mbeon: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run_scenario(cfg, args.command, Path(args.out), args)
    except (ConfigError, TopologyError) as exc:
        print(f"mbeon: configuration error: {exc}", file=sys.stderr)
        return 2
    except (HPOError, SolverDivergenceError, DegenerateFitError, ValueError, ArithmeticError) as exc:
        print(f"mbeon: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
