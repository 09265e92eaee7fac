"""Single-cell downlink channel model.

UE distance -> urban-macro pathloss -> per-RB SINR -> truncated-Shannon
spectral efficiency -> deliverable bits per resource block per TTI.

Link budget per RB (all dB / dBm):

    sinr = tx_per_rb - pathloss - shadowing + fading - noise_per_rb

where tx power is the total eNB power split evenly over the RB grid and the
noise floor is thermal density integrated over one RB plus the receiver
noise figure.  Single cell: no interference term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

# standard LTE numerology: channel bandwidth (MHz) -> resource blocks
LTE_RB_TABLE = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}

RB_BANDWIDTH_HZ = 180e3      # 12 subcarriers x 15 kHz
RE_PER_RB_TTI = 120          # 168 resource elements minus ~29% control/reference overhead
EFF_SCALE = 0.75             # truncated-Shannon attenuation
EFF_CAP = 5.55               # bits/RE at 64-QAM, code rate ~0.93
SINR_FLOOR_DB = -6.5         # below lowest usable CQI: no transmission
_SINR_FLOOR_LIN = 10.0 ** (SINR_FLOOR_DB / 10.0)
MIN_DISTANCE_KM = 0.01       # 10 m floor keeps the log pathloss finite


@dataclass(frozen=True)
class CellConfig:
    """Static cell and link-budget parameters."""

    radius_km: float = 1.0
    enb_power_dbm: float = 46.0
    bandwidth_mhz: float = 20.0
    num_rbs: int = 100
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    carrier_ghz: float = 2.0
    shadowing_sigma_db: float = 8.0
    shadowing_corr_m: float = 50.0

    def __post_init__(self) -> None:
        if self.radius_km <= 0:
            raise ValueError(f"radius must be positive, got {self.radius_km}")
        expected = LTE_RB_TABLE.get(float(self.bandwidth_mhz))
        if expected is None:
            raise ValueError(f"unsupported LTE bandwidth {self.bandwidth_mhz} MHz")
        if self.num_rbs != expected:
            raise ValueError(
                f"{self.bandwidth_mhz} MHz implies {expected} RBs, got {self.num_rbs}")
        if self.shadowing_sigma_db < 0 or self.shadowing_corr_m <= 0:
            raise ValueError("invalid shadowing parameters")


def pathloss_db(distance_km: float) -> float:
    """Urban macro pathloss 128.1 + 37.6*log10(d[km]), distance floored at 10 m."""
    if distance_km <= 0:
        raise ValueError(f"distance must be positive, got {distance_km}")
    return 128.1 + 37.6 * math.log10(max(distance_km, MIN_DISTANCE_KM))


def tx_power_per_rb_dbm(total_dbm: float, num_rbs: int) -> float:
    """Total eNB power split evenly across the RB grid, in the dB domain."""
    return total_dbm - 10.0 * math.log10(num_rbs)


def noise_per_rb_dbm(cfg: CellConfig) -> float:
    """Thermal noise over one RB bandwidth plus receiver noise figure."""
    return cfg.noise_density_dbm_hz + 10.0 * math.log10(RB_BANDWIDTH_HZ) + cfg.noise_figure_db


def sinr_db(tx_per_rb_dbm: float, pathloss: float, shadow_db: float, fading_db: float,
            noise_rb_dbm: float) -> float:
    """Per-RB SINR from the link budget; no interference term (single cell)."""
    return tx_per_rb_dbm - pathloss - shadow_db + fading_db - noise_rb_dbm


def efficiency(sinr: float) -> float:
    """Spectral efficiency in bits per resource element.

    Truncated Shannon: min(0.75 * log2(1 + sinr_linear), 5.55), zero below
    -6.5 dB where no modulation scheme is usable.
    """
    if sinr < SINR_FLOOR_DB:
        return 0.0
    return min(EFF_SCALE * math.log2(1.0 + 10.0 ** (sinr / 10.0)), EFF_CAP)


def rb_capacity_bits(eff: float) -> int:
    """Deliverable bits in one RB for one TTI: floor(eff * usable REs)."""
    if eff < 0:
        raise ValueError(f"efficiency must be >= 0, got {eff}")
    return int(math.floor(eff * RE_PER_RB_TTI))


@dataclass
class ChannelSnapshot:
    """Per-TTI channel state: one row per UE, one column per RB.

    ``sinr_linear`` and ``fading_linear`` carry the hot-path values; the dB
    views are derived on demand for traces and diagnostics.
    """

    distance_km: np.ndarray      # (U,)
    pathloss: np.ndarray         # (U,) dB
    shadowing_db: np.ndarray     # (U,)
    fading_linear: np.ndarray    # (U, N) unit-mean power fading
    sinr_linear: np.ndarray      # (U, N)
    bits: np.ndarray             # (U, N) deliverable bits this TTI

    @property
    def fading_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.fading_linear, 1e-300))

    @property
    def sinr_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.sinr_linear, 1e-300))


class ChannelModel:
    """Stateful channel generator: shadowing memory plus per-TTI block fading.

    Shadowing is log-normal and re-drawn only when a UE has moved more than
    the correlation distance since its last draw.  Fading is unit-mean
    exponential power per UE per RB, redrawn every TTI (Rayleigh envelope).
    """

    def __init__(self, cfg: CellConfig, num_ues: int, fading_rng: np.random.Generator,
                 shadow_rng: np.random.Generator):
        self.cfg = cfg
        self.num_ues = num_ues
        self._fading_rng = fading_rng
        self._shadow_rng = shadow_rng
        self._tx_rb = tx_power_per_rb_dbm(cfg.enb_power_dbm, cfg.num_rbs)
        self._noise_rb = noise_per_rb_dbm(cfg)
        self._shadow_db = np.zeros(num_ues)
        self._anchor: Optional[np.ndarray] = None   # positions of the last shadow draw

    def _refresh_shadowing(self, positions_km: np.ndarray) -> None:
        if self._anchor is None:
            self._shadow_db = self._shadow_rng.normal(
                0.0, self.cfg.shadowing_sigma_db, size=self.num_ues)
            self._anchor = positions_km.copy()
            return
        moved = np.hypot(positions_km[:, 0] - self._anchor[:, 0],
                         positions_km[:, 1] - self._anchor[:, 1])
        stale = moved > self.cfg.shadowing_corr_m / 1000.0
        n = int(stale.sum())
        if n:
            self._shadow_db[stale] = self._shadow_rng.normal(
                0.0, self.cfg.shadowing_sigma_db, size=n)
            self._anchor[stale] = positions_km[stale]

    def snapshot(self, positions_km: np.ndarray) -> ChannelSnapshot:
        """Generate the channel for one TTI at the given UE positions."""
        u = self.num_ues
        n = self.cfg.num_rbs
        if u == 0:
            empty = np.zeros((0, n))
            return ChannelSnapshot(np.zeros(0), np.zeros(0), np.zeros(0),
                                   empty, empty.copy(), empty.astype(np.int64))
        self._refresh_shadowing(positions_km)
        dist = np.hypot(positions_km[:, 0], positions_km[:, 1])
        pl = 128.1 + 37.6 * np.log10(np.maximum(dist, MIN_DISTANCE_KM))
        base_db = self._tx_rb - pl - self._shadow_db - self._noise_rb
        fading = self._fading_rng.exponential(1.0, size=(u, n))
        base_lin = 10.0 ** (base_db / 10.0)
        sinr_lin = base_lin[:, None] * fading
        eff = np.minimum(EFF_SCALE * np.log2(1.0 + sinr_lin), EFF_CAP)
        eff[sinr_lin < _SINR_FLOOR_LIN] = 0.0
        bits = np.floor(eff * RE_PER_RB_TTI).astype(np.int64)
        return ChannelSnapshot(dist, pl, self._shadow_db.copy(), fading, sinr_lin, bits)


def trace_rows(snapshot: ChannelSnapshot, tti: int):
    """Yield ``tti,ue,rb,sinr_db,bits`` CSV rows for one snapshot."""
    sinr = snapshot.sinr_db
    bits = snapshot.bits
    for ue in range(bits.shape[0]):
        for rb in range(bits.shape[1]):
            yield f"{tti},{ue},{rb},{sinr[ue, rb]:.3f},{bits[ue, rb]}"
