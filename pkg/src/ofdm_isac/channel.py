"""Propagation models: ULA steering, link budgets, radar / communication
channel synthesis and noisy receptions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .scenario import CommPath, OfdmConfig, Target

if TYPE_CHECKING:  # avoid an import cycle; only needed for annotations
    from .txchain import Frame, TxBeamMatrix


@dataclass(frozen=True)
class RadarCube:
    """Received sensing tensor, antennas x subcarriers x symbols."""

    samples: np.ndarray  # (NR, N, M) complex
    noise_var: float


@dataclass(frozen=True)
class CommReception:
    """Reception at the communications RX together with the effective
    scalar channel seen on every resource element."""

    samples: np.ndarray            # (N, M) complex
    effective_channel: np.ndarray  # (N, M) complex
    noise_var: float


def steering(angle_deg: float, n_ant: int) -> np.ndarray:
    """Half-wavelength ULA steering vector: element i carries the phase
    exp(j * pi * i * sin(angle))."""
    s = np.sin(np.deg2rad(angle_deg))
    return np.exp(1j * np.pi * s * np.arange(n_ant))


def radar_link_gain(rcs_m2: float, range_m: float, wavelength: float) -> float:
    """Monostatic power gain |alpha|^2 from the radar range equation."""
    return rcs_m2 * wavelength**2 / ((4.0 * np.pi) ** 3 * range_m**4)


def draw_target_gains(targets: Sequence[Target], cfg: OfdmConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """One complex gain per target: range-equation magnitude with a phase
    drawn uniformly per frame."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(targets))
    mags = np.sqrt([radar_link_gain(t.rcs_m2, t.range_m, cfg.wavelength)
                    for t in targets])
    return mags * np.exp(1j * phases)


def delay_phases(delay: float, cfg: OfdmConfig) -> np.ndarray:
    """exp(-j 2 pi n df tau) across the N subcarriers."""
    n = np.arange(cfg.n_subcarriers)
    return np.exp(-2j * np.pi * n * cfg.df * delay)


def doppler_phases(doppler: float, cfg: OfdmConfig,
                   symbols: np.ndarray | None = None) -> np.ndarray:
    """exp(j 2 pi m Tsym nu) across symbol indices (all M by default)."""
    m = np.arange(cfg.n_symbols) if symbols is None else symbols
    return np.exp(2j * np.pi * m * cfg.total_symbol_duration * doppler)


def sensing_channel_entry(targets: Sequence[Target], gains: np.ndarray,
                          n: int, m: int, cfg: OfdmConfig) -> np.ndarray:
    """NR x NT MIMO channel matrix for one (subcarrier, symbol) cell: a sum
    of rank-one outer products a_R a_T^T, one per target, with the delay /
    Doppler phase progression."""
    h = np.zeros((cfg.nr, cfg.nt), dtype=complex)
    for t, a in zip(targets, gains):
        phase = (np.exp(-2j * np.pi * n * cfg.df * t.delay)
                 * np.exp(2j * np.pi * m * cfg.total_symbol_duration
                          * t.doppler_hz(cfg.wavelength)))
        ar = steering(t.angle_deg, cfg.nr)
        at = steering(t.angle_deg, cfg.nt)
        h += a * phase * np.outer(ar, at)
    return h


def comm_path_gains(paths: Sequence[CommPath], cfg: OfdmConfig,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Complex gains per path; phases random when an rng is supplied,
    zero otherwise."""
    mags = np.sqrt([p.gain_power(cfg.wavelength) for p in paths])
    if rng is None:
        return mags.astype(complex)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(paths))
    return mags * np.exp(1j * phases)


def comm_channel_entry(paths: Sequence[CommPath], gains: np.ndarray,
                       n: int, m: int, cfg: OfdmConfig) -> np.ndarray:
    """Length-NT communication channel vector for one cell."""
    h = np.zeros(cfg.nt, dtype=complex)
    for p, a in zip(paths, gains):
        phase = (np.exp(-2j * np.pi * n * cfg.df * p.delay)
                 * np.exp(2j * np.pi * m * cfg.total_symbol_duration
                          * p.doppler_hz))
        h += a * phase * steering(p.aod_deg, cfg.nt)
    return h


def _complex_noise(shape, var: float, rng: np.random.Generator) -> np.ndarray:
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape)
                    + 1j * rng.standard_normal(shape))


def synthesize_radar_cube(targets: Sequence[Target], frame: "Frame",
                          beam_matrix: "TxBeamMatrix", cfg: OfdmConfig,
                          rng: np.random.Generator,
                          gains: np.ndarray | None = None,
                          noise: bool = True) -> RadarCube:
    """Simulate the sensing reception y = H f x + n for a whole frame.

    Builds the cube target by target from the separable structure of the
    channel: per target the reception factorizes into a delay ramp over
    subcarriers, a Doppler ramp over symbols, the swept TX beam gain and
    the RX steering vector.
    """
    if gains is None:
        gains = draw_target_gains(targets, cfg, rng)
    X = frame.symbols
    F = beam_matrix.matrix
    cube = np.zeros((cfg.nr, cfg.n_subcarriers, cfg.n_symbols), dtype=complex)
    for t, a in zip(targets, gains):
        at = steering(t.angle_deg, cfg.nt)
        ar = steering(t.angle_deg, cfg.nr)
        tx_gain = at @ F                                    # (M,)
        d = delay_phases(t.delay, cfg)                      # (N,)
        s = doppler_phases(t.doppler_hz(cfg.wavelength), cfg)
        plane = (d[:, None] * (s * tx_gain)[None, :]) * X   # (N, M)
        cube += a * ar[:, None, None] * plane[None, :, :]
    if noise:
        cube += _complex_noise(cube.shape, cfg.noise_variance, rng)
    cube.setflags(write=False)
    return RadarCube(samples=cube, noise_var=cfg.noise_variance)


def effective_comm_channel(paths: Sequence[CommPath], gains: np.ndarray,
                           beam_matrix: "TxBeamMatrix",
                           cfg: OfdmConfig) -> np.ndarray:
    """Scalar effective channel h[n, m] = h_com[n, m]^T f_m (N x M)."""
    F = beam_matrix.matrix
    h = np.zeros((cfg.n_subcarriers, cfg.n_symbols), dtype=complex)
    for p, a in zip(paths, gains):
        tx_gain = steering(p.aod_deg, cfg.nt) @ F           # (M,)
        d = delay_phases(p.delay, cfg)
        s = doppler_phases(p.doppler_hz, cfg)
        h += a * d[:, None] * (s * tx_gain)[None, :]
    return h


def synthesize_comm_reception(paths: Sequence[CommPath], frame: "Frame",
                              beam_matrix: "TxBeamMatrix", noise_var: float,
                              cfg: OfdmConfig, rng: np.random.Generator,
                              gains: np.ndarray | None = None,
                              noise: bool = True) -> CommReception:
    """Simulate the communications RX samples Y = H .* X + Z."""
    if gains is None:
        gains = comm_path_gains(paths, cfg, rng)
    h = effective_comm_channel(paths, gains, beam_matrix, cfg)
    y = h * frame.symbols
    if noise:
        y = y + _complex_noise(y.shape, noise_var, rng)
    y.setflags(write=False)
    h.setflags(write=False)
    return CommReception(samples=y, effective_channel=h, noise_var=noise_var)


def draw_beam_channel(n_subc: int, block: np.ndarray, cfg: OfdmConfig,
                      gain_std: float, rng: np.random.Generator,
                      antenna: int = 0) -> np.ndarray:
    """Sample one per-beam, per-antenna channel matrix with gain drawn
    circular Gaussian and delay / Doppler / angle drawn uniformly over
    their unambiguous spans (delay over one subcarrier-spacing period,
    Doppler over one slow-time period).

    Used to exercise the zero-mean / white second-order statistics that
    justify the diagonal LMMSE shrinkage.
    """
    alpha = gain_std * (rng.standard_normal() + 1j * rng.standard_normal()) \
        / np.sqrt(2.0)
    tau = rng.uniform(0.0, 1.0 / cfg.df)
    nu = rng.uniform(0.0, 1.0 / cfg.total_symbol_duration)
    theta = rng.uniform(-90.0, 90.0)
    b = np.exp(-2j * np.pi * np.arange(n_subc) * cfg.df * tau)
    c = np.exp(-2j * np.pi * block * cfg.total_symbol_duration * nu)
    ar_i = steering(theta, cfg.nr)[antenna]
    return alpha * ar_i * np.outer(b, np.conj(c))
