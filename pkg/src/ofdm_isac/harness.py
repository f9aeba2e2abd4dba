"""Experiment campaigns: Monte-Carlo detection studies, trade-off sweeps,
range profiles and their CSV outputs.

Every campaign is deterministic given its seed: each trial draws its
random stream from (seed, grid index, trial index), results are keyed by
trial index, and aggregation is order-insensitive, so the worker count
never changes the output bytes.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import (
    comm_path_gains,
    effective_comm_channel,
    radar_link_gain,
    steering,
    synthesize_radar_cube,
)
from .detector import (
    CfarConfig,
    ClusterConfig,
    Detection,
    delay_doppler_map_per_antenna,
    noncoherent_integrate,
    run_all_estimators,
)
from .estimators import estimate_beam
from .rate import MiResult, frame_rate
from .scenario import (
    SPEED_OF_LIGHT,
    Concurrent,
    Scenario,
    Target,
    TimeSharing,
    make_constellation,
    scenario_hash,
    timesharing_symbols,
    validate_scenario,
)
from .txchain import (
    BeamPlan,
    DATA,
    PILOT,
    TxBeamMatrix,
    build_beam_matrix,
    generate_frame,
    make_beam_plan,
)

ESTIMATORS = ("rf", "mf", "lmmse", "lmmse_ideal")


@dataclass(frozen=True)
class Campaign:
    """A runnable experiment description."""

    kind: str                  # range_profile | pd_vs_rcs | pd_vs_mod |
    #                            tradeoff_rho | tradeoff_timeshare | rate
    scenario: Scenario
    grid: tuple[float, ...]
    trials: int = 100
    seed: int = 0
    out: str = "out.csv"
    threads: int = 1


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Deterministic stream derived from a campaign seed and an index key."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# ---------------------------------------------------------------------------
# scenario plumbing
# ---------------------------------------------------------------------------

def build_chain(scenario: Scenario) -> tuple[BeamPlan, TxBeamMatrix]:
    """Beam plan and TX beamforming matrix implied by a scenario."""
    cfg = scenario.ofdm
    plan = make_beam_plan(cfg, scenario.strategy, scenario.n_beams,
                          scenario.max_scan_angle_deg)
    matrix = build_beam_matrix(cfg, plan, scenario.los_path.aod_deg,
                               scenario.strategy)
    return plan, matrix


def true_beam_snrs(scenario: Scenario, plan: BeamPlan,
                   matrix: TxBeamMatrix) -> np.ndarray:
    """Ground-truth per-beam SNR: total expected target gain power over
    the noise variance, using the actual combined beam of each block."""
    cfg = scenario.ofdm
    snrs = np.zeros(plan.n_beams)
    for b, block in enumerate(plan.symbol_sets):
        if len(block) == 0:
            continue
        g = matrix.matrix[:, block[0]]
        total = 0.0
        for t in scenario.targets:
            bf = abs(steering(t.angle_deg, cfg.nt) @ g) ** 2
            total += radar_link_gain(t.rcs_m2, t.range_m,
                                     cfg.wavelength) * bf
        snrs[b] = total / cfg.noise_variance
    return snrs


def match_resolutions(scenario: Scenario,
                      plan: BeamPlan) -> tuple[float, float, float]:
    """(range, velocity, angle) windows used to match detections against
    ground truth; velocity uses the actual slow-time aperture per beam."""
    cfg = scenario.ofdm
    max_block = max((len(b) for b in plan.symbol_sets), default=0)
    if max_block == 0:
        d_vel = math.inf
    else:
        d_vel = cfg.wavelength / (2.0 * max_block
                                  * cfg.total_symbol_duration)
    return cfg.range_resolution, d_vel, 2.0


def frame_labels(scenario: Scenario) -> np.ndarray:
    """Data/pilot label grid implied by the strategy (independent of the
    drawn symbols)."""
    cfg = scenario.ofdm
    labels = np.full((cfg.n_subcarriers, cfg.n_symbols), DATA,
                     dtype=np.uint8)
    if isinstance(scenario.strategy, TimeSharing):
        cols = list(scenario.strategy.sensing_symbols)
        labels[:, cols] = PILOT
    return labels


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def score_detections(detections: Sequence[Detection],
                     targets: Sequence[Target],
                     resolutions: tuple[float, float, float]) -> list[bool]:
    """Greedy nearest-first matching of detections to truth targets.

    A target is hit when a detection falls within one range resolution,
    one velocity resolution and two degrees of it; each detection may
    claim at most one target.
    """
    d_r, d_v, d_a = resolutions
    pairs = []
    for ti, t in enumerate(targets):
        for di, d in enumerate(detections):
            er = abs(d.range_m - t.range_m)
            ev = abs(d.velocity_mps - t.velocity_mps)
            ea = abs(d.angle_deg - t.angle_deg)
            if er <= d_r and ev <= d_v and ea <= d_a:
                dist = math.sqrt((er / d_r) ** 2
                                 + (ev / d_v if math.isfinite(d_v)
                                    else 0.0) ** 2
                                 + (ea / d_a) ** 2)
                pairs.append((dist, ti, di))
    hits = [False] * len(targets)
    used = [False] * len(detections)
    for _, ti, di in sorted(pairs):
        if not hits[ti] and not used[di]:
            hits[ti] = True
            used[di] = True
    return hits


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

def run_trial(scenario: Scenario, seed: int, key: tuple[int, ...],
              estimators: Sequence[str] = ESTIMATORS,
              trial: int | None = None) -> dict[str, list[Detection]]:
    """Synthesize one reception and run the requested sensing algorithms."""
    cfg = scenario.ofdm
    rng = rng_for(seed, *key)
    constellation = make_constellation(scenario.constellation_order)
    plan, matrix = build_chain(scenario)
    frame = generate_frame(cfg, scenario.strategy, constellation, rng)
    cube = synthesize_radar_cube(scenario.targets, frame, matrix, cfg, rng)
    true_snr = None
    if "lmmse_ideal" in estimators:
        true_snr = true_beam_snrs(scenario, plan, matrix)
    cfar = CfarConfig(pfa=scenario.cfar.pfa, guard=scenario.cfar.guard,
                      training=scenario.cfar.training)
    cluster = ClusterConfig.for_scenario(cfg, scenario.n_beams)
    return run_all_estimators(cube, frame, plan, cfg, cfar, cluster,
                              pad=scenario.pad, true_snr=true_snr,
                              estimators=estimators, trial=trial)


def _pd_task(args) -> dict[str, bool]:
    scenario, seed, key, estimators, trial = args
    dets = run_trial(scenario, seed, key, estimators, trial=trial)
    plan, _ = build_chain(scenario)
    res = match_resolutions(scenario, plan)
    out = {}
    for est, d in dets.items():
        hits = score_detections(d, scenario.targets, res)
        out[est] = hits[scenario.probe_target] if hits else False
    return out


def _map_tasks(fn, tasks, threads: int):
    if threads <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def probe_pd(scenario: Scenario, trials: int, seed: int, grid_idx: int,
             estimators: Sequence[str] = ESTIMATORS,
             threads: int = 1) -> dict[str, float]:
    """Probability of detecting the probe target over noise/data/gain-phase
    realizations, per estimator."""
    tasks = [(scenario, seed, (grid_idx, t), tuple(estimators), t)
             for t in range(trials)]
    results = _map_tasks(_pd_task, tasks, threads)
    return {est: float(np.mean([r[est] for r in results]))
            for est in estimators}


def scenario_rate(scenario: Scenario, seed: int, grid_idx: int,
                  mi_samples: int | None = None) -> MiResult:
    """Achievable rate for one (seeded) channel realization."""
    cfg = scenario.ofdm
    _, matrix = build_chain(scenario)
    rng = rng_for(seed, grid_idx, 0xC0FFEE)
    gains = comm_path_gains(scenario.comm_paths, cfg, rng)
    h = effective_comm_channel(scenario.comm_paths, gains, matrix, cfg)
    labels = frame_labels(scenario)
    constellation = make_constellation(scenario.constellation_order)
    ns = scenario.mi_samples if mi_samples is None else mi_samples
    return frame_rate(h, labels, constellation, scenario.comm_noise_var,
                      ns, cfg, rng, seed=seed)


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def _write_csv(path: str | Path, header: list[str],
               rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def _f(x: float, nd: int = 6) -> str:
    return f"{x:.{nd}f}"


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------

def run_pd_vs_rcs(campaign: Campaign) -> Path:
    """Sweep the probe target's RCS (dBsm grid) and record Pd per
    estimator."""
    base = campaign.scenario
    shash = scenario_hash(base)
    rows = []
    for gi, rcs_dbsm in enumerate(sorted(campaign.grid)):
        scen = base.with_probe_rcs(10.0 ** (rcs_dbsm / 10.0))
        pd = probe_pd(scen, campaign.trials, campaign.seed, gi,
                      threads=campaign.threads)
        for est in ESTIMATORS:
            rows.append([_f(rcs_dbsm, 3), est, _f(pd[est]),
                         str(campaign.trials), shash, str(campaign.seed)])
    _write_csv(campaign.out,
               ["rcs_dbsm", "estimator", "pd", "trials", "scenario_hash",
                "seed"], rows)
    return Path(campaign.out)


def run_pd_vs_mod(campaign: Campaign) -> Path:
    """Sweep the modulation order; record Pd per estimator and the rate."""
    base = campaign.scenario
    shash = scenario_hash(base)
    rows = []
    for gi, order in enumerate(int(o) for o in campaign.grid):
        scen = replace(base, constellation_order=order)
        pd = probe_pd(scen, campaign.trials, campaign.seed, gi,
                      threads=campaign.threads)
        rate = scenario_rate(scen, campaign.seed, gi)
        for est in ESTIMATORS:
            rows.append([str(order), est, _f(pd[est]), _f(rate.rate_bps, 3),
                         str(campaign.trials), shash, str(campaign.seed)])
    _write_csv(campaign.out,
               ["order", "estimator", "pd", "rate_bits_s", "trials",
                "scenario_hash", "seed"], rows)
    return Path(campaign.out)


def run_tradeoff(campaign: Campaign) -> Path:
    """Detection-vs-rate trade-off sweep.

    ``tradeoff_rho`` sweeps the concurrent power split; the time-sharing
    variant sweeps the pilot fraction |S|/M (rebuilding the sensing symbol
    set for each grid point).
    """
    base = campaign.scenario
    shash = scenario_hash(base)
    timeshare = campaign.kind == "tradeoff_timeshare"
    rows = []
    for gi, control in enumerate(sorted(campaign.grid)):
        if timeshare:
            symbols = timesharing_symbols(base.ofdm.n_symbols, base.n_beams,
                                          control)
            scen = replace(base, strategy=TimeSharing(symbols))
        else:
            scen = replace(base, strategy=Concurrent(rho=float(control)))
        pd = probe_pd(scen, campaign.trials, campaign.seed, gi,
                      threads=campaign.threads)
        rate = scenario_rate(scen, campaign.seed, gi)
        rows.append([_f(control, 4), _f(rate.rate_bps, 3)]
                    + [_f(pd[est]) for est in ESTIMATORS]
                    + [str(campaign.trials), shash, str(campaign.seed)])
    _write_csv(campaign.out,
               ["control", "rate_bits_s", "pd_rf", "pd_mf", "pd_lmmse",
                "pd_lmmse_ideal", "trials", "scenario_hash", "seed"], rows)
    return Path(campaign.out)


def range_profile_cuts(scenario: Scenario, orders: Sequence[int], seed: int
                       ) -> tuple[np.ndarray, dict[tuple[str, int], np.ndarray]]:
    """Peak-normalized range cuts (dB) through the integrated delay-Doppler
    map for each estimator and modulation order.

    Uses a single beam pointed at the probe target and the ground-truth
    beam SNR in the LMMSE estimator (the cuts illustrate estimator floors,
    not the SNR bootstrap).
    """
    cfg = scenario.ofdm
    probe = scenario.targets[scenario.probe_target]
    angles = np.array([probe.angle_deg])
    block = np.arange(cfg.n_symbols)
    scale = np.sqrt(cfg.tx_power / cfg.nt)
    beams = (scale * np.conj(steering(probe.angle_deg, cfg.nt)))[:, None]
    plan = BeamPlan(angles_deg=angles, symbol_sets=(block,), beams=beams)
    matrix = build_beam_matrix(cfg, plan, scenario.los_path.aod_deg,
                               scenario.strategy)
    snr_b = true_beam_snrs(scenario, plan, matrix)[0]

    cuts: dict[tuple[str, int], np.ndarray] = {}
    n_pad = cfg.n_subcarriers * scenario.pad
    for oi, order in enumerate(orders):
        scen = replace(scenario, constellation_order=int(order))
        rng = rng_for(seed, oi)
        constellation = make_constellation(scen.constellation_order)
        frame = generate_frame(cfg, scen.strategy, constellation, rng)
        cube = synthesize_radar_cube(scen.targets, frame, matrix, cfg, rng)
        y = cube.samples[:, :, block]
        x = frame.symbols[:, block]
        for est in ("rf", "mf", "lmmse"):
            ests = estimate_beam(y, x, est, beam=0,
                                 snr=snr_b if est == "lmmse" else None)
            stack = np.stack([e.data for e in ests])
            maps = delay_doppler_map_per_antenna(stack, pad=scenario.pad)
            dd = noncoherent_integrate(
                maps, 1.0 / (n_pad * cfg.df),
                1.0 / (maps.shape[-1] * cfg.total_symbol_duration),
                pad=scenario.pad)
            q_peak = int(np.argmax(np.max(dd.grid, axis=0)))
            cut = dd.grid[:, q_peak]
            cuts[(est, int(order))] = 10.0 * np.log10(
                np.maximum(cut, 1e-300) / cut.max())
    ranges = np.arange(n_pad) * SPEED_OF_LIGHT / (2.0 * n_pad * cfg.df)
    return ranges, cuts


def run_range_profile(campaign: Campaign) -> Path:
    orders = [int(o) for o in campaign.grid] or [4, 1024]
    ranges, cuts = range_profile_cuts(campaign.scenario, orders,
                                      campaign.seed)
    shash = scenario_hash(campaign.scenario)
    header = ["range_m"] + [f"{est}_m{order}_db"
                            for est in ("rf", "mf", "lmmse")
                            for order in orders] + ["scenario_hash", "seed"]
    rows = []
    for i, r in enumerate(ranges):
        rows.append([_f(r, 4)]
                    + [_f(cuts[(est, order)][i], 3)
                       for est in ("rf", "mf", "lmmse") for order in orders]
                    + [shash, str(campaign.seed)])
    _write_csv(campaign.out, header, rows)
    return Path(campaign.out)


def run_rate(campaign: Campaign) -> Path:
    res = scenario_rate(campaign.scenario, campaign.seed, 0)
    shash = scenario_hash(campaign.scenario)
    n_data = int(np.count_nonzero(frame_labels(campaign.scenario) == DATA))
    mean_mi = res.total_bits / n_data if n_data else 0.0
    _write_csv(campaign.out,
               ["n_data_cells", "mean_mi_bits", "total_bits", "rate_bits_s",
                "mi_samples", "scenario_hash", "seed"],
               [[str(n_data), _f(mean_mi), _f(res.total_bits, 3),
                 _f(res.rate_bps, 3), str(res.n_samples), shash,
                 str(campaign.seed)]])
    return Path(campaign.out)


_RUNNERS = {
    "pd_vs_rcs": run_pd_vs_rcs,
    "pd_vs_mod": run_pd_vs_mod,
    "tradeoff_rho": run_tradeoff,
    "tradeoff_timeshare": run_tradeoff,
    "range_profile": run_range_profile,
    "rate": run_rate,
}


def run_campaign(campaign: Campaign) -> Path:
    violations = validate_scenario(campaign.scenario)
    if violations:
        raise ValueError("invalid scenario:\n" + "\n".join(violations))
    if campaign.kind not in _RUNNERS:
        raise ValueError(f"unknown campaign kind {campaign.kind!r}")
    if campaign.trials < 1:
        raise ValueError("trials must be >= 1")
    if not campaign.grid and campaign.kind != "rate":
        raise ValueError("sweep grid must not be empty")
    return _RUNNERS[campaign.kind](campaign)
