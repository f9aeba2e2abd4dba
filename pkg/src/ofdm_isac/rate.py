"""Communication rate evaluation: Monte-Carlo mutual information per
resource element and frame-level achievable rate.

Mutual information of a uniformly drawn alphabet over a scalar complex
AWGN channel is the output entropy minus the Gaussian noise entropy; the
output entropy is estimated by sampling the channel and averaging the log
mixture density. Densities are always handled in the log domain so that
high-SNR high-order constellations do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .scenario import Constellation, OfdmConfig
from .txchain import DATA

LN2 = math.log(2.0)


@dataclass(frozen=True)
class MiResult:
    """Per-cell and aggregate mutual information for one frame."""

    per_cell_bits: np.ndarray  # (N, M), zero on pilot cells
    total_bits: float
    rate_bps: float
    n_samples: int
    seed: int | None = None


def noise_entropy(noise_var: float) -> float:
    """Differential entropy of circular complex Gaussian noise (nats)."""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    return math.log(math.pi * math.e * noise_var)


def noise_entropy_bits(noise_var: float) -> float:
    return noise_entropy(noise_var) / LN2


def log_output_density(y: np.ndarray, h: complex, points: np.ndarray,
                       noise_var: float) -> np.ndarray:
    """log f(y | h) for the equiprobable Gaussian mixture centred on the
    scaled constellation points (max-shifted for stability)."""
    y = np.asarray(y)
    d2 = np.abs(y[..., None] - h * points) ** 2
    return (logsumexp(-d2 / noise_var, axis=-1)
            - math.log(len(points)) - math.log(math.pi * noise_var))


def output_density(y, h: complex, constellation: Constellation,
                   noise_var: float):
    """Mixture output density f(y | h), linear scale."""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    return np.exp(log_output_density(y, h, constellation.points, noise_var))


def mi_cell(h: complex, constellation: Constellation, noise_var: float,
            n_samples: int, rng: np.random.Generator,
            chunk: int = 8192) -> float:
    """Monte-Carlo mutual information (bits) of one resource element with
    effective channel gain ``h``.

    Samples the channel output, averages the negative log mixture density
    to estimate the output entropy and subtracts the noise entropy. The
    estimate is clamped to the feasible interval [0, log2(order)].
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    pts = constellation.points
    scale = math.sqrt(noise_var / 2.0)
    acc = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        x = pts[rng.integers(0, len(pts), n)]
        z = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        y = h * x + z
        acc += float(np.sum(log_output_density(y, h, pts, noise_var)))
        done += n
    entropy_nats = -acc / n_samples
    mi_bits = (entropy_nats - noise_entropy(noise_var)) / LN2
    return float(np.clip(mi_bits, 0.0, constellation.bits_per_symbol))


def _mi_gain_grid(a: float, pam: np.ndarray, noise_var: float,
                  n_samples: int, rng: np.random.Generator,
                  chunk: int = 16384) -> float:
    """Same estimator as ``mi_cell`` for a real gain ``a``, using the I/Q
    product structure of a square grid: the 2-D mixture density splits
    into two per-dimension PAM mixtures."""
    s = len(pam)
    sd = math.sqrt(noise_var / 2.0)
    acc = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        yr = a * pam[rng.integers(0, s, n)] + sd * rng.standard_normal(n)
        yi = a * pam[rng.integers(0, s, n)] + sd * rng.standard_normal(n)
        dr = (yr[:, None] - a * pam) ** 2
        di = (yi[:, None] - a * pam) ** 2
        acc += float(np.sum(logsumexp(-dr / noise_var, axis=1)
                            + logsumexp(-di / noise_var, axis=1)))
        done += n
    log_f_mean = acc / n_samples - math.log(s * s) \
        - math.log(math.pi * noise_var)
    mi_bits = (-log_f_mean - noise_entropy(noise_var)) / LN2
    return float(np.clip(mi_bits, 0.0, 2.0 * math.log2(s)))


def frame_rate(effective_channel: np.ndarray, labels: np.ndarray,
               constellation: Constellation, noise_var: float,
               n_samples: int, cfg: OfdmConfig, rng: np.random.Generator,
               seed: int | None = None) -> MiResult:
    """Mutual information of a whole frame and the achievable rate.

    Only data-labelled cells contribute; pilots carry no payload. Cells
    sharing an identical effective channel value are evaluated once and
    reused — with static paths and a per-block constant beam the frame
    collapses to a few thousand distinct gains at most. MI depends on the
    channel only through its magnitude, so equal |h| values share a draw
    too.
    """
    n, m = effective_channel.shape
    per_cell = np.zeros((n, m), dtype=float)
    mask = labels == DATA
    h_data = effective_channel[mask]
    if h_data.size:
        mags = np.abs(h_data)
        uniq, inverse = np.unique(mags, return_inverse=True)
        mi_u = np.array([
            _mi_gain_grid(a, constellation.pam_levels, noise_var,
                          n_samples, rng)
            for a in uniq])
        per_cell[mask] = mi_u[inverse]
    total = float(per_cell.sum())
    duration = cfg.n_symbols * cfg.total_symbol_duration
    return MiResult(per_cell_bits=per_cell, total_bits=total,
                    rate_bps=total / duration, n_samples=n_samples,
                    seed=seed)
