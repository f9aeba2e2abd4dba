"""Target detection: beam-specific delay-Doppler imaging, CFAR, ESPRIT
angle estimation, least-squares gain fitting and clustering.

The per-beam pipeline turns a stack of unstructured channel estimates into
delay / Doppler / angle / gain detections; the full pipeline sweeps all
beams, bootstraps the per-beam SNR for the LMMSE estimator from a first
detection pass and merges everything with DBSCAN.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage, optimize, special
from scipy.linalg import hankel

from .channel import RadarCube
from .estimators import ChannelEstimate, estimate_beam, estimate_snr_b
from .scenario import SPEED_OF_LIGHT, ConfigurationError, OfdmConfig
from .txchain import BeamPlan, Frame

log = logging.getLogger(__name__)

# bootstrapped SNR floor when the first pass detected nothing; keeps the
# final LMMSE pass well defined (and, by scale invariance, equivalent to
# matched filtering)
_SNR_FLOOR = 1e-12


@dataclass(frozen=True)
class DelayDopplerMap:
    """Noncoherently integrated delay-Doppler image for one beam."""

    grid: np.ndarray        # (N', M') real, nonnegative
    delay_bin_s: float
    doppler_bin_hz: float
    pad: int


@dataclass(frozen=True)
class Detection:
    """One detected target hypothesis with its provenance."""

    range_m: float
    velocity_mps: float
    angle_deg: float
    gain: complex
    beam: int
    estimator: str
    statistic: float
    trial: int | None = None


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR settings; window half-widths are in
    (delay, Doppler) order."""

    pfa: float = 1e-4
    guard: tuple[int, int] = (2, 2)
    training: tuple[int, int] = (8, 4)


@dataclass(frozen=True)
class ClusterConfig:
    """DBSCAN settings: diagonal weights over (range, velocity, angle)
    differences plus the neighbourhood radius."""

    weights: tuple[float, float, float]
    eps: float

    @classmethod
    def from_resolutions(cls, d_range: float, d_velocity: float,
                         d_angle: float = 2.0) -> "ClusterConfig":
        w = (1.0 / d_range**2, 1.0 / d_velocity**2, 1.0 / d_angle**2)
        s = np.array([d_range, d_velocity, d_angle])
        eps = float(np.sqrt(np.sum(np.array(w) * s**2)))
        return cls(weights=w, eps=eps)

    @classmethod
    def for_scenario(cls, cfg: OfdmConfig, n_beams: int) -> "ClusterConfig":
        d_range = cfg.range_resolution
        d_velocity = (cfg.wavelength * n_beams
                      / (2.0 * cfg.n_symbols * cfg.total_symbol_duration))
        return cls.from_resolutions(d_range, d_velocity)


# ---------------------------------------------------------------------------
# delay-Doppler imaging
# ---------------------------------------------------------------------------

def delay_doppler_map_per_antenna(hhat: np.ndarray, pad: int = 1) -> np.ndarray:
    """2-D unitary DFT of a channel estimate onto the delay-Doppler grid.

    Works on a single (N, M_b) estimate or a stack (..., N, M_b); delay
    runs along the second-to-last axis, Doppler along the last. Zero
    padding refines the grid by the given integer factor.
    """
    if pad < 1 or int(pad) != pad:
        raise ConfigurationError(f"pad must be a positive integer, got {pad}")
    n, mb = hhat.shape[-2], hhat.shape[-1]
    out = np.fft.ifft(hhat, n=n * pad, axis=-2, norm="ortho")
    return np.fft.fft(out, n=mb * pad, axis=-1, norm="ortho")


def noncoherent_integrate(maps: Sequence[np.ndarray], delay_bin_s: float,
                          doppler_bin_hz: float, pad: int = 1
                          ) -> DelayDopplerMap:
    """Sum squared magnitudes of per-antenna delay-Doppler maps."""
    arr = np.asarray(maps)
    if arr.ndim != 3:
        raise ValueError("expected a stack of 2-D maps")
    grid = np.sum(np.abs(arr) ** 2, axis=0)
    return DelayDopplerMap(grid=grid, delay_bin_s=delay_bin_s,
                           doppler_bin_hz=doppler_bin_hz, pad=pad)


# ---------------------------------------------------------------------------
# CFAR
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def cfar_threshold_factor(pfa: float, n_antennas: int, n_train: int) -> float:
    """Scale factor on the training mean achieving the requested per-cell
    false-alarm probability when cells are sums of ``n_antennas`` squared
    circular Gaussians.

    The cell under test and the training sum are independent Gamma
    variates, so the false-alarm probability has a closed form through the
    regularized incomplete beta function, which is inverted numerically.
    """
    a = float(n_antennas)
    b = float(n_antennas * n_train)

    def pfa_of(alpha: float) -> float:
        c = alpha / n_train
        return special.betainc(b, a, 1.0 / (1.0 + c))

    return float(optimize.brentq(lambda al: pfa_of(al) - pfa,
                                 1e-9, 1e7, xtol=1e-12, rtol=1e-13))


def _window_extents(cfg: CfarConfig) -> tuple[tuple[int, int], tuple[int, int]]:
    full = tuple(2 * (g + t) + 1 for g, t in zip(cfg.guard, cfg.training))
    guard = tuple(2 * g + 1 for g in cfg.guard)
    return full, guard


def clamp_cfar_to_map(cfg: CfarConfig, shape: tuple[int, int]) -> CfarConfig:
    """Shrink guard / training extents so the window fits a small map.

    Per-beam maps can have very few Doppler bins (short slow-time blocks
    under time sharing); the window collapses on that axis and training
    cells come from the other one. Raises when no training cell survives.
    """
    guard = []
    training = []
    for g, t, size in zip(cfg.guard, cfg.training, shape):
        half = (size - 1) // 2
        g2 = min(g, half)
        t2 = min(t, max(half - g2, 0))
        guard.append(g2)
        training.append(t2)
    out = CfarConfig(pfa=cfg.pfa, guard=tuple(guard), training=tuple(training))
    full, gw = _window_extents(out)
    if full[0] * full[1] - gw[0] * gw[1] < 1:
        raise ConfigurationError(
            f"map of shape {shape} leaves no CFAR training cells")
    return out


def cfar_detect(ddmap: DelayDopplerMap, cfg: CfarConfig, n_antennas: int
                ) -> list[tuple[int, int, float]]:
    """2-D cell-averaging CFAR with wrap-around windows.

    Returns (delay bin, Doppler bin, statistic) per detected cell, where
    the statistic is the cell value over the local training mean — a
    scale-free contrast measure.
    """
    grid = ddmap.grid
    full, guard = _window_extents(cfg)
    if full[0] > grid.shape[0] or full[1] > grid.shape[1]:
        raise ConfigurationError(
            f"CFAR window {full} exceeds map dimensions {grid.shape}")
    n_train = full[0] * full[1] - guard[0] * guard[1]
    full_sum = ndimage.uniform_filter(grid, size=full, mode="wrap") \
        * (full[0] * full[1])
    guard_sum = ndimage.uniform_filter(grid, size=guard, mode="wrap") \
        * (guard[0] * guard[1])
    train_mean = np.maximum(full_sum - guard_sum, 0.0) / n_train
    alpha = cfar_threshold_factor(cfg.pfa, n_antennas, n_train)
    mask = grid > alpha * train_mean
    out = []
    for p, q in np.argwhere(mask):
        tm = train_mean[p, q]
        stat = float(grid[p, q] / tm) if tm > 0 else float("inf")
        out.append((int(p), int(q), stat))
    return out


# ---------------------------------------------------------------------------
# angle and gain estimation
# ---------------------------------------------------------------------------

def spatial_snapshot(estimates: Sequence[ChannelEstimate], tau: float,
                     nu: float, cfg: OfdmConfig, block: np.ndarray
                     ) -> np.ndarray:
    """Compress one delay-Doppler cell to a spatial observation:
    element i is b(tau)^H Hhat_i c_b(nu) / (N M_b)."""
    n = np.arange(cfg.n_subcarriers)
    b = np.exp(-2j * np.pi * n * cfg.df * tau)
    c = np.exp(-2j * np.pi * block * cfg.total_symbol_duration * nu)
    mb = len(block)
    return np.array([np.conj(b) @ e.data @ c / (cfg.n_subcarriers * mb)
                     for e in estimates])


def esprit_angles(snapshot: np.ndarray, max_sources: int | None = None,
                  abs_floor: float = 1e-12) -> list[float]:
    """Estimate source angles from one array snapshot via 1-D ESPRIT with
    Hankel spatial smoothing and forward-backward averaging.

    The snapshot is reshaped into an L x (NR - L + 1) Hankel matrix whose
    column space is spanned by subarray steering vectors, then augmented
    with its conjugate flip (valid for centro-symmetric arrays, halves the
    subspace perturbation of a single snapshot). The model order is set at
    the largest consecutive gap of the singular-value spectrum, which
    tracks weak sources exactly in the noise-free case while not inflating
    the order with noise dimensions at low SNR. Eigenphases of the
    shift-invariance map give sin(angle) scaled by pi (half-wavelength
    spacing).
    """
    y = np.asarray(snapshot)
    nr = len(y)
    if nr < 3:
        raise ConfigurationError(f"ESPRIT needs at least 3 antennas, got {nr}")
    norm = np.linalg.norm(y)
    if norm == 0.0:
        return []
    lsub = (nr + 1 + 1) // 2          # ceil((nr + 1) / 2)
    h = hankel(y[:lsub], y[lsub - 1:])
    h = np.hstack([h, np.conj(h[::-1, ::-1])])
    u, s, _ = np.linalg.svd(h, full_matrices=False)
    if s[0] <= abs_floor * norm:
        return []
    limit = min(lsub - 1, nr - lsub + 1)
    if max_sources is not None:
        limit = min(limit, max_sources)
    n_gap = min(limit, len(s) - 1)
    if n_gap < 1:
        return []
    ratios = s[:n_gap] / np.maximum(s[1:n_gap + 1], 1e-300)
    k = int(np.argmax(ratios)) + 1
    us = u[:, :k]
    psi = np.linalg.lstsq(us[:-1], us[1:], rcond=None)[0]
    phases = np.angle(np.linalg.eigvals(psi))
    angles = np.degrees(np.arcsin(np.clip(phases / np.pi, -1.0, 1.0)))
    return sorted(float(a) for a in angles)


def ls_gains(stack: np.ndarray, taus: np.ndarray, nus: np.ndarray,
             thetas: np.ndarray, cfg: OfdmConfig, block: np.ndarray
             ) -> np.ndarray:
    """Joint least-squares fit of complex gains for all detected
    parameter triples of one beam.

    The regressor columns factor into delay, slow-time and antenna parts,
    so the normal equations are assembled from small inner products rather
    than the full N*M_b*NR regression matrix. Exact duplicate triples are
    dropped (they make the fit singular) and their gain is shared.
    """
    taus = np.asarray(taus, dtype=float)
    nus = np.asarray(nus, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    k_all = len(taus)
    if k_all == 0:
        return np.zeros(0, dtype=complex)

    triples = np.stack([taus, nus, thetas], axis=1)
    uniq, inverse = np.unique(triples, axis=0, return_inverse=True)
    if len(uniq) < k_all:
        log.debug("dropping %d duplicate parameter triples before the "
                  "gain fit", k_all - len(uniq))
    ut, un, uth = uniq[:, 0], uniq[:, 1], uniq[:, 2]

    n = np.arange(cfg.n_subcarriers)
    bmat = np.exp(-2j * np.pi * np.outer(n, ut) * cfg.df)
    cmat = np.exp(-2j * np.pi * cfg.total_symbol_duration
                  * np.outer(block, un))
    i = np.arange(stack.shape[0])
    amat = np.exp(1j * np.pi * np.outer(i, np.sin(np.deg2rad(uth))))

    gram = (amat.conj().T @ amat) * (cmat.T @ cmat.conj()) \
        * (bmat.conj().T @ bmat)
    proj = np.einsum("nk,inm->ikm", bmat.conj(), stack)
    proj = np.einsum("ikm,mk->ik", proj, cmat)
    rhs = np.einsum("ik,ik->k", amat.conj(), proj)
    try:
        gains = np.linalg.pinv(gram) @ rhs
    except np.linalg.LinAlgError:
        # rare SVD non-convergence on large ill-conditioned systems; a
        # tiny ridge keeps the fit usable
        ridge = 1e-9 * np.trace(gram).real / len(gram)
        gains = np.linalg.solve(gram + ridge * np.eye(len(gram)), rhs)
    return gains[inverse]


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

def _weighted_dist2(a: np.ndarray, b: np.ndarray,
                    w: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,k->ij", d**2, w)


def dbscan_cluster(detections: Sequence[Detection], cfg: ClusterConfig
                   ) -> list[list[Detection]]:
    """DBSCAN over (range, velocity, angle) with a weighted Euclidean
    metric and a minimum cluster size of one.

    With every point a core point the clusters are exactly the connected
    components of the eps-neighbourhood graph, so the partition does not
    depend on input order.
    """
    n = len(detections)
    if n == 0:
        return []
    feats = np.array([[d.range_m, d.velocity_mps, d.angle_deg]
                      for d in detections])
    w = np.asarray(cfg.weights, dtype=float)
    adj = _weighted_dist2(feats, feats, w) <= cfg.eps**2

    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for p, q in np.argwhere(adj):
        if p < q:
            rp, rq = find(int(p)), find(int(q))
            if rp != rq:
                parent[max(rp, rq)] = min(rp, rq)

    groups: dict[int, list[Detection]] = {}
    for idx in range(n):
        groups.setdefault(find(idx), []).append(detections[idx])
    return [groups[k] for k in sorted(groups)]


def cluster_representatives(clusters: Iterable[Sequence[Detection]]
                            ) -> list[Detection]:
    """Pick the strongest member (largest gain magnitude) of each cluster."""
    return [max(members, key=lambda d: abs(d.gain)) for members in clusters]


def _detection_order(d: Detection) -> tuple:
    return (d.beam, d.estimator, -d.statistic, d.range_m, d.velocity_mps,
            d.angle_deg)


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def beam_pipeline(estimates: Sequence[ChannelEstimate], cfg: OfdmConfig,
                  block: np.ndarray, cfar_cfg: CfarConfig, pad: int = 1,
                  trial: int | None = None, max_sources: int | None = None,
                  max_cells: int = 128) -> list[Detection]:
    """Beam-specific detection from a stack of per-antenna channel
    estimates: delay-Doppler imaging, noncoherent integration, CFAR,
    per-cell angle estimation and a joint gain fit.

    ``max_cells`` bounds the CFAR reports processed per map (strongest
    contrast first); data-induced floors of badly matched estimators can
    otherwise light up thousands of cells and stall the gain fit.
    """
    stack = np.stack([e.data for e in estimates])
    tag = estimates[0].estimator
    beam = estimates[0].beam

    complex_maps = delay_doppler_map_per_antenna(stack, pad=pad)
    n_pad, m_pad = complex_maps.shape[-2:]
    delay_bin = 1.0 / (n_pad * cfg.df)
    doppler_bin = 1.0 / (m_pad * cfg.total_symbol_duration)
    ddmap = noncoherent_integrate(complex_maps, delay_bin, doppler_bin,
                                  pad=pad)

    cells = cfar_detect(ddmap, clamp_cfar_to_map(cfar_cfg, ddmap.grid.shape),
                        n_antennas=stack.shape[0])
    if not cells:
        return []
    if len(cells) > max_cells:
        cells = sorted(cells, key=lambda c: (-c[2], c[0], c[1]))[:max_cells]

    taus, nus, thetas, stats = [], [], [], []
    for p, q, stat in cells:
        tau = p * delay_bin
        q_c = (q + m_pad // 2) % m_pad - m_pad // 2
        nu = q_c * doppler_bin
        # the padded-FFT bin value equals the compressed spatial snapshot
        # up to a scalar common to all antennas, which ESPRIT ignores
        snapshot = complex_maps[:, p, q]
        for theta in esprit_angles(snapshot, max_sources=max_sources):
            taus.append(tau)
            nus.append(nu)
            thetas.append(theta)
            stats.append(stat)
    if not taus:
        return []

    gains = ls_gains(stack, np.array(taus), np.array(nus), np.array(thetas),
                     cfg, block)
    dets = []
    for tau, nu, theta, stat, gain in zip(taus, nus, thetas, stats, gains):
        dets.append(Detection(
            range_m=SPEED_OF_LIGHT * tau / 2.0,
            velocity_mps=nu * cfg.wavelength / 2.0,
            angle_deg=theta,
            gain=complex(gain),
            beam=beam,
            estimator=tag,
            statistic=stat,
            trial=trial,
        ))
    return sorted(dets, key=_detection_order)


def run_all_estimators(cube: RadarCube, frame: Frame, plan: BeamPlan,
                       cfg: OfdmConfig, cfar_cfg: CfarConfig,
                       cluster_cfg: ClusterConfig, *, pad: int = 1,
                       initial_snr: float = 1.0,
                       true_snr: Sequence[float] | None = None,
                       estimators: Sequence[str] = ("rf", "mf", "lmmse"),
                       trial: int | None = None
                       ) -> dict[str, list[Detection]]:
    """Run the requested sensing algorithms on one reception, sharing the
    per-beam channel estimates between them.

    ``rf`` / ``mf`` run the beam pipeline on their own estimates. ``lmmse``
    runs a first pass with the neutral SNR alongside RF and MF, merges and
    clusters the three detection sets per beam, bootstraps the beam SNR
    from the fitted gains and reruns the pipeline on the final LMMSE
    estimate. ``lmmse_ideal`` skips the bootstrap and uses the supplied
    per-beam true SNR.
    """
    wanted = set(estimators)
    unknown = wanted - {"rf", "mf", "lmmse", "lmmse_ideal"}
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    if "lmmse_ideal" in wanted and true_snr is None:
        raise ValueError("lmmse_ideal needs true per-beam SNR values")

    per_beam: dict[str, list[list[Detection]]] = {k: [] for k in wanted}

    for b, block in enumerate(plan.symbol_sets):
        if len(block) == 0:
            continue
        y = cube.samples[:, :, block]
        x = frame.symbols[:, block]

        members: dict[str, list[Detection]] = {}
        for tag in ("rf", "mf"):
            if tag in wanted or "lmmse" in wanted:
                est = estimate_beam(y, x, tag, beam=b)
                members[tag] = beam_pipeline(est, cfg, block, cfar_cfg,
                                             pad=pad, trial=trial)
        if "rf" in wanted:
            per_beam["rf"].append(members["rf"])
        if "mf" in wanted:
            per_beam["mf"].append(members["mf"])

        if "lmmse" in wanted:
            est1 = estimate_beam(y, x, "lmmse", beam=b, snr=initial_snr)
            first = beam_pipeline(est1, cfg, block, cfar_cfg, pad=pad,
                                  trial=trial)
            merged = sorted(members["rf"] + members["mf"] + first,
                            key=_detection_order)
            reps = cluster_representatives(dbscan_cluster(merged,
                                                          cluster_cfg))
            snr_b = estimate_snr_b(np.array([r.gain for r in reps]),
                                   cube.noise_var)
            est2 = estimate_beam(y, x, "lmmse", beam=b,
                                 snr=max(snr_b, _SNR_FLOOR))
            per_beam["lmmse"].append(beam_pipeline(est2, cfg, block,
                                                   cfar_cfg, pad=pad,
                                                   trial=trial))
        if "lmmse_ideal" in wanted:
            est = estimate_beam(y, x, "lmmse", beam=b,
                                snr=max(float(true_snr[b]), _SNR_FLOOR))
            dets = beam_pipeline(est, cfg, block, cfar_cfg, pad=pad,
                                 trial=trial)
            per_beam["lmmse_ideal"].append(
                [replace(d, estimator="lmmse_ideal") for d in dets])

    out: dict[str, list[Detection]] = {}
    for tag in wanted:
        merged = sorted((d for dets in per_beam[tag] for d in dets),
                        key=_detection_order)
        clusters = dbscan_cluster(merged, cluster_cfg)
        out[tag] = cluster_representatives(clusters)
    return out


def full_sensing(cube: RadarCube, frame: Frame, plan: BeamPlan,
                 cfg: OfdmConfig, cfar_cfg: CfarConfig,
                 cluster_cfg: ClusterConfig, *, pad: int = 1,
                 estimator: str = "lmmse", initial_snr: float = 1.0,
                 true_snr: Sequence[float] | None = None,
                 trial: int | None = None) -> list[Detection]:
    """Full-frame sensing with one algorithm; see ``run_all_estimators``."""
    return run_all_estimators(
        cube, frame, plan, cfg, cfar_cfg, cluster_cfg, pad=pad,
        initial_snr=initial_snr, true_snr=true_snr, estimators=(estimator,),
        trial=trial)[estimator]
