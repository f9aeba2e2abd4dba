"""Scenario configuration: OFDM numerology, targets, propagation paths,
transmission strategies and constellations.

Conventions used throughout the package:

- angles are degrees in every public interface (radians only inside the
  trigonometry),
- powers are linear watts internally; scenario files use dBm / dBsm /
  dBm-per-Hz like a datasheet,
- all configuration objects are immutable after construction and safe to
  share across worker processes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

SUPPORTED_ORDERS = (4, 16, 64, 256, 1024)


class ConfigurationError(ValueError):
    """Raised for invalid configuration values or malformed scenario files."""


# ---------------------------------------------------------------------------
# unit conversions
# ---------------------------------------------------------------------------

def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


def dbsm_to_m2(dbsm: float) -> float:
    return 10.0 ** (dbsm / 10.0)


def m2_to_dbsm(m2: float) -> float:
    return 10.0 * math.log10(m2)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology and front-end parameters.

    Attributes
    ----------
    fc : float
        Carrier frequency (Hz).
    df : float
        Subcarrier spacing (Hz).
    n_subcarriers : int
        Number of subcarriers N.
    n_symbols : int
        Number of OFDM symbols M in a frame.
    cp_fraction : float
        Cyclic prefix duration as a fraction of the elementary symbol
        duration 1/df.
    tx_power : float
        Total transmit power (W); every beamforming column carries this
        power.
    nt, nr : int
        TX and sensing-RX uniform-linear-array sizes.
    noise_psd : float
        One-sided noise power spectral density N0 (W/Hz).
    """

    fc: float = 28e9
    df: float = 120e3
    n_subcarriers: int = 3330
    n_symbols: int = 1120
    cp_fraction: float = 1.0 / 14.0
    tx_power: float = dbm_to_watt(20.0)
    nt: int = 8
    nr: int = 8
    noise_psd: float = dbm_to_watt(-174.0)

    @property
    def symbol_duration(self) -> float:
        """Elementary symbol duration 1/df (s), without the cyclic prefix."""
        return 1.0 / self.df

    @property
    def total_symbol_duration(self) -> float:
        """Symbol duration including the cyclic prefix (s)."""
        return (1.0 + self.cp_fraction) / self.df

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.df

    @property
    def noise_variance(self) -> float:
        """Per-sample noise variance N0 * N * df (W) at the sensing RX."""
        return self.noise_psd * self.n_subcarriers * self.df

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)


@dataclass(frozen=True)
class Target:
    """A point target described by range, radial velocity, angle and RCS."""

    range_m: float
    velocity_mps: float
    angle_deg: float
    rcs_m2: float

    @property
    def delay(self) -> float:
        """Round-trip delay 2d/c (s)."""
        return 2.0 * self.range_m / SPEED_OF_LIGHT

    def doppler_hz(self, wavelength: float) -> float:
        """Round-trip Doppler shift 2v/lambda (Hz)."""
        return 2.0 * self.velocity_mps / wavelength


@dataclass(frozen=True)
class CommPath:
    """One propagation path between the ISAC TX and the communications RX.

    The line-of-sight path is described by its length ``d0``; scattered
    paths by the TX-scatterer / scatterer-RX legs and the scatterer RCS.
    """

    kind: str  # "los" | "nlos"
    aod_deg: float
    doppler_hz: float = 0.0
    d0: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    rcs_m2: float = 0.0

    @property
    def delay(self) -> float:
        """One-way propagation delay (s)."""
        if self.kind == "los":
            return self.d0 / SPEED_OF_LIGHT
        return (self.d1 + self.d2) / SPEED_OF_LIGHT

    def gain_power(self, wavelength: float) -> float:
        """Path gain |alpha|^2: free space for LOS, bistatic radar
        equation for scattered paths."""
        if self.kind == "los":
            return wavelength**2 / (4.0 * math.pi * self.d0) ** 2
        return (self.rcs_m2 * wavelength**2
                / ((4.0 * math.pi) ** 3 * self.d1**2 * self.d2**2))


@dataclass(frozen=True)
class Constellation:
    """A normalized square-QAM alphabet with unit mean symbol power."""

    order: int
    points: np.ndarray
    # per-dimension PAM amplitudes; lets mutual-information code use the
    # I/Q product structure of square grids
    pam_levels: np.ndarray

    @property
    def bits_per_symbol(self) -> float:
        return math.log2(self.order)


@dataclass(frozen=True)
class Concurrent:
    """Joint transmission: one combined beam carries data used for both
    sensing and communication; ``rho`` weights sensing vs. communication
    power."""

    rho: float


@dataclass(frozen=True)
class TimeSharing:
    """Time-multiplexed transmission: dedicated unit-amplitude pilots on
    the sensing symbol set, data elsewhere."""

    sensing_symbols: tuple[int, ...]


Strategy = Union[Concurrent, TimeSharing]


def timesharing_symbols(n_symbols: int, n_beams: int, ratio: float) -> tuple[int, ...]:
    """Build a sensing symbol set of ``round(ratio * n_symbols)`` entries as
    ``n_beams`` contiguous blocks spread evenly over the frame.

    Contiguity keeps each beam on a uniformly sampled slow-time aperture so
    the per-beam Doppler FFT stays valid; even spreading avoids biasing one
    end of the frame.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ConfigurationError(f"time-sharing ratio {ratio} out of [0, 1]")
    total = int(round(ratio * n_symbols))
    sizes = [total // n_beams + (1 if b < total % n_beams else 0)
             for b in range(n_beams)]
    out: list[int] = []
    for b, size in enumerate(sizes):
        start = (b * n_symbols) // n_beams
        out.extend(range(start, start + size))
    return tuple(out)


@dataclass(frozen=True)
class ChannelPrior:
    """Statistical prior on the per-beam radar channel: zero-mean circular
    gains of the given variance, with delay uniform on [0, 1/df), Doppler
    uniform over one unambiguous span [0, 1/Tsym) and angle uniform on
    [-90, 90] degrees."""

    gain_variance: float


# ---------------------------------------------------------------------------
# scenario aggregate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CfarSettings:
    pfa: float = 1e-4
    guard: tuple[int, int] = (2, 2)      # (delay, Doppler) half-widths
    training: tuple[int, int] = (8, 4)   # (delay, Doppler) band widths


@dataclass(frozen=True)
class Scenario:
    """A complete, self-contained experiment description."""

    ofdm: OfdmConfig
    targets: tuple[Target, ...]
    comm_paths: tuple[CommPath, ...]
    strategy: Strategy
    constellation_order: int = 1024
    n_beams: int = 8
    max_scan_angle_deg: float = 70.0
    cfar: CfarSettings = field(default_factory=CfarSettings)
    pad: int = 1
    comm_noise_variance: float | None = None   # None: same as sensing RX
    mi_samples: int = 10_000
    probe_target: int = 0

    @property
    def comm_noise_var(self) -> float:
        if self.comm_noise_variance is not None:
            return self.comm_noise_variance
        return self.ofdm.noise_variance

    @property
    def los_path(self) -> CommPath:
        for p in self.comm_paths:
            if p.kind == "los":
                return p
        raise ConfigurationError("scenario has no LOS path")

    def with_probe_rcs(self, rcs_m2: float) -> "Scenario":
        """Copy of the scenario with the probe target's RCS replaced."""
        targets = list(self.targets)
        targets[self.probe_target] = replace(targets[self.probe_target],
                                             rcs_m2=rcs_m2)
        return replace(self, targets=tuple(targets))


# ---------------------------------------------------------------------------
# constellation construction
# ---------------------------------------------------------------------------

def make_constellation(order: int) -> Constellation:
    """Build the square-QAM alphabet of the given order, scaled to unit
    mean power.

    Grid coordinates are the odd integers +-1, +-3, ..., +-(sqrt(order)-1)
    on each axis.
    """
    if order not in SUPPORTED_ORDERS:
        raise ConfigurationError(
            f"unsupported modulation order {order}; expected one of "
            f"{SUPPORTED_ORDERS}")
    side = int(round(math.sqrt(order)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    re, im = np.meshgrid(levels, levels)
    points = (re + 1j * im).ravel()
    scale = math.sqrt(np.mean(np.abs(points) ** 2))
    points = points / scale
    points.setflags(write=False)
    pam = levels / scale
    pam.setflags(write=False)
    return Constellation(order=order, points=points, pam_levels=pam)


# exact unit-modulus QPSK used for dedicated sensing pilots; the axis-aligned
# variant keeps |x| == 1 and 1/x == conj(x) exact in floating point
PILOT_ALPHABET = np.array([1.0 + 0.0j, 0.0 + 1.0j, -1.0 + 0.0j, 0.0 - 1.0j])
PILOT_ALPHABET.setflags(write=False)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_scenario(s: Scenario) -> list[str]:
    """Check every invariant and return human-readable violations.

    Returns an empty list when the scenario is valid; never raises.
    """
    v: list[str] = []
    o = s.ofdm
    if not o.fc > 0:
        v.append(f"ofdm.fc: must be > 0, got {o.fc}")
    if not o.df > 0:
        v.append(f"ofdm.df: must be > 0, got {o.df}")
    if o.n_subcarriers < 1:
        v.append(f"ofdm.n_subcarriers: must be >= 1, got {o.n_subcarriers}")
    if o.n_symbols < 1:
        v.append(f"ofdm.n_symbols: must be >= 1, got {o.n_symbols}")
    if not 0.0 <= o.cp_fraction < 1.0:
        v.append(f"ofdm.cp_fraction: must be in [0, 1), got {o.cp_fraction}")
    if not o.tx_power > 0:
        v.append(f"ofdm.tx_power: must be > 0, got {o.tx_power}")
    if o.nt < 1:
        v.append(f"ofdm.nt: must be >= 1, got {o.nt}")
    if o.nr < 1:
        v.append(f"ofdm.nr: must be >= 1, got {o.nr}")
    if not o.noise_psd > 0:
        v.append(f"ofdm.noise_psd: must be > 0, got {o.noise_psd}")

    for i, t in enumerate(s.targets):
        if not t.range_m > 0:
            v.append(f"targets[{i}].range_m: must be > 0, got {t.range_m}")
        if not abs(t.angle_deg) < 90.0:
            v.append(f"targets[{i}].angle_deg: |angle| must be < 90, "
                     f"got {t.angle_deg}")
        if not t.rcs_m2 > 0:
            v.append(f"targets[{i}].rcs_m2: must be > 0, got {t.rcs_m2}")

    n_los = sum(1 for p in s.comm_paths if p.kind == "los")
    if n_los != 1:
        v.append(f"comm_paths: exactly one LOS path required, got {n_los}")
    for i, p in enumerate(s.comm_paths):
        if p.kind not in ("los", "nlos"):
            v.append(f"comm_paths[{i}].kind: unknown kind {p.kind!r}")
        elif p.kind == "los":
            if not p.d0 > 0:
                v.append(f"comm_paths[{i}].d0: must be > 0, got {p.d0}")
        else:
            if not p.d1 > 0:
                v.append(f"comm_paths[{i}].d1: must be > 0, got {p.d1}")
            if not p.d2 > 0:
                v.append(f"comm_paths[{i}].d2: must be > 0, got {p.d2}")
            if not p.rcs_m2 > 0:
                v.append(f"comm_paths[{i}].rcs_m2: must be > 0, got {p.rcs_m2}")

    if isinstance(s.strategy, Concurrent):
        if not 0.0 <= s.strategy.rho <= 1.0:
            v.append(f"strategy.rho: rho out of [0, 1], got {s.strategy.rho}")
    elif isinstance(s.strategy, TimeSharing):
        sset = s.strategy.sensing_symbols
        if len(set(sset)) != len(sset):
            v.append("strategy.sensing_symbols: duplicate symbol indices")
        bad = [m for m in sset if not 0 <= m < o.n_symbols]
        if bad:
            v.append(f"strategy.sensing_symbols: indices out of range: {bad[:8]}")
    else:
        v.append(f"strategy: unknown strategy {type(s.strategy).__name__}")

    if s.constellation_order not in SUPPORTED_ORDERS:
        v.append(f"constellation_order: unsupported order "
                 f"{s.constellation_order}")
    if s.n_beams < 2:
        v.append(f"n_beams: must be >= 2, got {s.n_beams}")
    if not 0.0 < s.max_scan_angle_deg < 90.0:
        v.append(f"max_scan_angle_deg: must be in (0, 90), "
                 f"got {s.max_scan_angle_deg}")
    if not 0.0 < s.cfar.pfa < 1.0:
        v.append(f"cfar.pfa: must be in (0, 1), got {s.cfar.pfa}")
    if min(s.cfar.guard) < 1 or min(s.cfar.training) < 1:
        v.append("cfar: guard and training window sizes must be >= 1")
    if s.pad < 1:
        v.append(f"pad: must be >= 1, got {s.pad}")
    if s.comm_noise_variance is not None and not s.comm_noise_variance > 0:
        v.append(f"comm_noise_variance: must be > 0, "
                 f"got {s.comm_noise_variance}")
    if s.mi_samples < 1:
        v.append(f"mi_samples: must be >= 1, got {s.mi_samples}")
    if s.targets and not 0 <= s.probe_target < len(s.targets):
        v.append(f"probe_target: index {s.probe_target} out of range")
    return v


# ---------------------------------------------------------------------------
# file I/O (TOML preferred, JSON accepted)
# ---------------------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    o = s.ofdm
    d: dict = {
        "ofdm": {
            "fc_hz": o.fc,
            "df_hz": o.df,
            "n_subcarriers": o.n_subcarriers,
            "n_symbols": o.n_symbols,
            "cp_fraction": o.cp_fraction,
            "tx_power_dbm": watt_to_dbm(o.tx_power),
            "nt": o.nt,
            "nr": o.nr,
            "noise_psd_dbm_hz": watt_to_dbm(o.noise_psd),
        },
        "beams": {
            "count": s.n_beams,
            "max_angle_deg": s.max_scan_angle_deg,
        },
        "modulation": {"order": s.constellation_order},
        "targets": [
            {
                "range_m": t.range_m,
                "velocity_mps": t.velocity_mps,
                "angle_deg": t.angle_deg,
                "rcs_dbsm": m2_to_dbsm(t.rcs_m2),
            }
            for t in s.targets
        ],
        "comm_paths": [],
        "detection": {
            "pfa": s.cfar.pfa,
            "guard": list(s.cfar.guard),
            "training": list(s.cfar.training),
            "pad": s.pad,
            "probe_target": s.probe_target,
        },
        "rate": {"mi_samples": s.mi_samples},
    }
    if isinstance(s.strategy, Concurrent):
        d["strategy"] = {"kind": "concurrent", "rho": s.strategy.rho}
    else:
        ratio = len(s.strategy.sensing_symbols) / max(o.n_symbols, 1)
        d["strategy"] = {"kind": "time_sharing", "ratio": ratio}
    for p in s.comm_paths:
        e: dict = {"kind": p.kind, "aod_deg": p.aod_deg,
                   "doppler_hz": p.doppler_hz}
        if p.kind == "los":
            e["distance_m"] = p.d0
        else:
            e["tx_scatterer_m"] = p.d1
            e["scatterer_rx_m"] = p.d2
            e["rcs_dbsm"] = m2_to_dbsm(p.rcs_m2)
        d["comm_paths"].append(e)
    if s.comm_noise_variance is not None:
        d["rate"]["noise_var_dbm"] = watt_to_dbm(s.comm_noise_variance)
    return d


def scenario_from_dict(d: dict) -> Scenario:
    try:
        od = d["ofdm"]
        ofdm = OfdmConfig(
            fc=float(od["fc_hz"]),
            df=float(od["df_hz"]),
            n_subcarriers=int(od["n_subcarriers"]),
            n_symbols=int(od["n_symbols"]),
            cp_fraction=float(od.get("cp_fraction", 1.0 / 14.0)),
            tx_power=dbm_to_watt(float(od.get("tx_power_dbm", 20.0))),
            nt=int(od.get("nt", 8)),
            nr=int(od.get("nr", 8)),
            noise_psd=dbm_to_watt(float(od.get("noise_psd_dbm_hz", -174.0))),
        )
        beams = d.get("beams", {})
        n_beams = int(beams.get("count", 8))
        max_angle = float(beams.get("max_angle_deg", 70.0))

        sd = d.get("strategy", {"kind": "concurrent", "rho": 0.8})
        kind = sd.get("kind", "concurrent")
        strategy: Strategy
        if kind == "concurrent":
            strategy = Concurrent(rho=float(sd.get("rho", 0.8)))
        elif kind == "time_sharing":
            if "symbols" in sd:
                strategy = TimeSharing(tuple(int(m) for m in sd["symbols"]))
            else:
                strategy = TimeSharing(timesharing_symbols(
                    ofdm.n_symbols, n_beams, float(sd.get("ratio", 0.5))))
        else:
            raise ConfigurationError(f"strategy.kind: unknown kind {kind!r}")

        targets = tuple(
            Target(
                range_m=float(t["range_m"]),
                velocity_mps=float(t.get("velocity_mps", 0.0)),
                angle_deg=float(t["angle_deg"]),
                rcs_m2=dbsm_to_m2(float(t["rcs_dbsm"])),
            )
            for t in d.get("targets", [])
        )
        paths = []
        for p in d.get("comm_paths", []):
            if p["kind"] == "los":
                paths.append(CommPath(
                    kind="los", aod_deg=float(p["aod_deg"]),
                    doppler_hz=float(p.get("doppler_hz", 0.0)),
                    d0=float(p["distance_m"])))
            else:
                paths.append(CommPath(
                    kind="nlos", aod_deg=float(p["aod_deg"]),
                    doppler_hz=float(p.get("doppler_hz", 0.0)),
                    d1=float(p["tx_scatterer_m"]),
                    d2=float(p["scatterer_rx_m"]),
                    rcs_m2=dbsm_to_m2(float(p["rcs_dbsm"]))))

        det = d.get("detection", {})
        cfar = CfarSettings(
            pfa=float(det.get("pfa", 1e-4)),
            guard=tuple(int(g) for g in det.get("guard", (2, 2))),
            training=tuple(int(t) for t in det.get("training", (8, 4))),
        )
        rate = d.get("rate", {})
        noise_var = rate.get("noise_var_dbm")
        return Scenario(
            ofdm=ofdm,
            targets=targets,
            comm_paths=tuple(paths),
            strategy=strategy,
            constellation_order=int(d.get("modulation", {}).get("order", 1024)),
            n_beams=n_beams,
            max_scan_angle_deg=max_angle,
            cfar=cfar,
            pad=int(det.get("pad", 1)),
            comm_noise_variance=(dbm_to_watt(float(noise_var))
                                 if noise_var is not None else None),
            mi_samples=int(rate.get("mi_samples", 10_000)),
            probe_target=int(det.get("probe_target", 0)),
        )
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed scenario document: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario from a TOML or JSON file (decided by extension,
    with a content sniff as fallback)."""
    path = Path(path)
    raw = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".json" or (suffix != ".toml" and raw.lstrip()[:1] == b"{"):
        try:
            d = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    else:
        try:
            import tomllib  # py >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            d = tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML: {exc}") from exc
    return scenario_from_dict(d)


def save_scenario_json(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2,
                                     sort_keys=True))


def scenario_hash(s: Scenario) -> str:
    """Short content hash identifying a scenario in result files."""
    blob = json.dumps(scenario_to_dict(s), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
