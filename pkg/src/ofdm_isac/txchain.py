"""Transmit chain: frame generation, the sensing beam sweep and the
per-symbol TX beamforming matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering
from .scenario import (
    ConfigurationError,
    Concurrent,
    Constellation,
    OfdmConfig,
    PILOT_ALPHABET,
    Strategy,
    TimeSharing,
)

DATA = 0
PILOT = 1


@dataclass(frozen=True)
class Frame:
    """Transmit symbol grid (N x M) with per-symbol data/pilot labels."""

    symbols: np.ndarray
    labels: np.ndarray  # uint8, DATA or PILOT


@dataclass(frozen=True)
class BeamPlan:
    """Sweep description: beam angles, per-beam symbol blocks and the pure
    sensing beam vectors (each with squared norm equal to the TX power)."""

    angles_deg: np.ndarray            # (B,)
    symbol_sets: tuple[np.ndarray, ...]
    beams: np.ndarray                 # (NT, B)

    @property
    def n_beams(self) -> int:
        return len(self.angles_deg)


@dataclass(frozen=True)
class TxBeamMatrix:
    """Per-symbol TX beamforming vectors, one column per OFDM symbol."""

    matrix: np.ndarray  # (NT, M)


def sensing_beam_angles(n_beams: int, max_angle_deg: float) -> np.ndarray:
    """Uniform sweep angles covering [-max_angle, +max_angle] with
    ``n_beams`` beams (endpoints included)."""
    if n_beams < 2:
        raise ConfigurationError(f"n_beams must be >= 2, got {n_beams}")
    if not 0.0 < max_angle_deg < 90.0:
        raise ConfigurationError(
            f"max scan angle must be in (0, 90) deg, got {max_angle_deg}")
    b = np.arange(n_beams, dtype=float)
    return -max_angle_deg + 2.0 * b / (n_beams - 1) * max_angle_deg


def make_beam_plan(cfg: OfdmConfig, strategy: Strategy, n_beams: int,
                   max_angle_deg: float) -> BeamPlan:
    """Assign sensing symbols to beams as contiguous near-equal blocks.

    Concurrent transmission uses every symbol for sensing; time sharing
    uses only the dedicated pilot set.
    """
    angles = sensing_beam_angles(n_beams, max_angle_deg)
    if isinstance(strategy, Concurrent):
        sensing = np.arange(cfg.n_symbols)
    else:
        sensing = np.array(sorted(strategy.sensing_symbols), dtype=int)
    blocks = tuple(np.array(b, dtype=int)
                   for b in np.array_split(sensing, n_beams))
    for i, blk in enumerate(blocks):
        if len(blk) > 1 and not np.all(np.diff(blk) == 1):
            raise ConfigurationError(
                f"beam {i}: sensing symbols {blk.tolist()} are not a "
                "contiguous block; slow-time processing needs uniform "
                "sampling per beam")
    scale = np.sqrt(cfg.tx_power / cfg.nt)
    beams = np.stack(
        [scale * np.conj(steering(a, cfg.nt)) for a in angles], axis=1)
    return BeamPlan(angles_deg=angles, symbol_sets=blocks, beams=beams)


def comm_beam(cfg: OfdmConfig, comm_angle_deg: float) -> np.ndarray:
    """Communication beam steered at the LOS direction, norm^2 = tx_power."""
    return np.sqrt(cfg.tx_power / cfg.nt) * np.conj(
        steering(comm_angle_deg, cfg.nt))


def build_beam_matrix(cfg: OfdmConfig, plan: BeamPlan, comm_angle_deg: float,
                      strategy: Strategy) -> TxBeamMatrix:
    """Assemble the full NT x M beamforming matrix for the frame.

    Concurrent columns combine the block's sensing beam with the constant
    communication beam using the sqrt(rho) / sqrt(1 - rho) split; the sum
    is rescaled so every column carries exactly the configured transmit
    power (the raw combination gains or loses power through the cross term
    between the two beams).
    """
    fc = comm_beam(cfg, comm_angle_deg)
    F = np.tile(fc[:, None], (1, cfg.n_symbols))
    target_norm = np.sqrt(cfg.tx_power)
    if isinstance(strategy, Concurrent):
        rho = strategy.rho
        for b, block in enumerate(plan.symbol_sets):
            if len(block) == 0:
                continue
            v = np.sqrt(rho) * plan.beams[:, b] + np.sqrt(1.0 - rho) * fc
            F[:, block] = (v * (target_norm / np.linalg.norm(v)))[:, None]
    elif isinstance(strategy, TimeSharing):
        for b, block in enumerate(plan.symbol_sets):
            if len(block) == 0:
                continue
            F[:, block] = plan.beams[:, b][:, None]
    else:
        raise ConfigurationError(
            f"unknown strategy {type(strategy).__name__}")
    return TxBeamMatrix(matrix=F)


def generate_frame(cfg: OfdmConfig, strategy: Strategy,
                   constellation: Constellation,
                   rng: np.random.Generator) -> Frame:
    """Draw one transmit frame.

    Concurrent: i.i.d. uniform constellation symbols everywhere, all
    labelled data. Time sharing: unit-amplitude QPSK pilots on the sensing
    symbol set, constellation data elsewhere.
    """
    n, m = cfg.n_subcarriers, cfg.n_symbols
    labels = np.zeros((n, m), dtype=np.uint8)
    if isinstance(strategy, Concurrent):
        idx = rng.integers(0, constellation.order, size=(n, m))
        symbols = constellation.points[idx]
    elif isinstance(strategy, TimeSharing):
        symbols = np.empty((n, m), dtype=complex)
        pilot_cols = np.array(sorted(strategy.sensing_symbols), dtype=int)
        data_cols = np.setdiff1d(np.arange(m), pilot_cols)
        if len(pilot_cols):
            pidx = rng.integers(0, len(PILOT_ALPHABET),
                                size=(n, len(pilot_cols)))
            symbols[:, pilot_cols] = PILOT_ALPHABET[pidx]
            labels[:, pilot_cols] = PILOT
        if len(data_cols):
            didx = rng.integers(0, constellation.order,
                                size=(n, len(data_cols)))
            symbols[:, data_cols] = constellation.points[didx]
    else:
        raise ConfigurationError(
            f"unknown strategy {type(strategy).__name__}")
    symbols.setflags(write=False)
    labels.setflags(write=False)
    return Frame(symbols=symbols, labels=labels)
