"""Per-antenna, per-beam unstructured channel estimators.

Three element-wise estimators of the time-frequency radar channel from the
reception Y = H .* X + N: reciprocal filtering (zero-forcing division),
matched filtering (conjugate multiplication) and the LMMSE shrinkage that
interpolates between the two as a function of the per-beam SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# floor on the LMMSE denominator; unreachable for valid symbol grids and
# positive SNR, guards against division blowup on corrupt inputs
_DENOM_FLOOR = 16.0 * np.finfo(float).eps


@dataclass(frozen=True)
class ChannelEstimate:
    """One antenna's N x M_b channel estimate with its provenance."""

    data: np.ndarray
    estimator: str            # "rf" | "mf" | "lmmse"
    antenna: int = 0
    beam: int = 0
    snr: float | None = None  # linear, LMMSE only


def rf_estimate(y: np.ndarray, x: np.ndarray, antenna: int = 0,
                beam: int = 0) -> ChannelEstimate:
    """Reciprocal filtering: element-wise division of received by
    transmitted symbols. Exact in the absence of noise, amplifies noise on
    low-power constellation points."""
    if np.any(x == 0):
        raise ValueError("transmit grid contains zero symbols; "
                         "reciprocal filtering is singular")
    return ChannelEstimate(data=y / x, estimator="rf", antenna=antenna,
                           beam=beam)


def mf_estimate(y: np.ndarray, x: np.ndarray, antenna: int = 0,
                beam: int = 0) -> ChannelEstimate:
    """Matched filtering: element-wise conjugate multiplication."""
    return ChannelEstimate(data=y * np.conj(x), estimator="mf",
                           antenna=antenna, beam=beam)


def lmmse_estimate(y: np.ndarray, x: np.ndarray, snr: float,
                   antenna: int = 0, beam: int = 0) -> ChannelEstimate:
    """LMMSE estimate (Y .* conj(X)) / (|X|^2 + 1/snr), element-wise.

    Converges to reciprocal filtering as snr -> inf and to (scaled)
    matched filtering as snr -> 0.
    """
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    denom = np.maximum(np.abs(x) ** 2 + 1.0 / snr, _DENOM_FLOOR)
    return ChannelEstimate(data=y * np.conj(x) / denom, estimator="lmmse",
                           antenna=antenna, beam=beam, snr=snr)


def estimate_snr_b(gains: np.ndarray, noise_var: float) -> float:
    """Per-beam SNR bootstrap from estimated target gains:
    sum |alpha_k|^2 / sigma^2."""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    if len(gains) == 0:
        return 0.0
    return float(np.sum(np.abs(gains) ** 2) / noise_var)


def estimate_beam(y_stack: np.ndarray, x: np.ndarray, method: str,
                  beam: int = 0, snr: float | None = None
                  ) -> list[ChannelEstimate]:
    """Run one estimator over every RX antenna of a beam.

    ``y_stack`` has shape (NR, N, M_b); returns one estimate per antenna.
    """
    out = []
    for i in range(y_stack.shape[0]):
        if method == "rf":
            out.append(rf_estimate(y_stack[i], x, antenna=i, beam=beam))
        elif method == "mf":
            out.append(mf_estimate(y_stack[i], x, antenna=i, beam=beam))
        elif method == "lmmse":
            if snr is None:
                raise ValueError("lmmse estimator needs an snr value")
            out.append(lmmse_estimate(y_stack[i], x, snr, antenna=i,
                                      beam=beam))
        else:
            raise ValueError(f"unknown estimator {method!r}")
    return out
