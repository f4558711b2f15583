"""Performance functionals: SINR, rates, harvested power, transmit power, PCE.

All inputs and outputs are SI watts and linear ratios; rates are bits/s/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .channel import EffectiveChannels
from .scenario import ScenarioConfig


def sinr(k: int, eff: EffectiveChannels, noise: float) -> float:
    """Desired-beam power over same-receiver interference plus noise."""
    s = eff.s
    desired = np.abs(s[k, k]) ** 2
    interference = float(np.sum(np.abs(s[k]) ** 2) - np.abs(s[k, k]) ** 2)
    return float(desired / (interference + noise))


def achievable_rate(k: int, eff: EffectiveChannels, noise: float) -> float:
    return float(np.log2(1.0 + sinr(k, eff, noise)))


def all_rates(eff: EffectiveChannels, noise: float) -> np.ndarray:
    return np.array([achievable_rate(k, eff, noise) for k in range(eff.s.shape[0])])


def sum_rate(eff: EffectiveChannels, noise: float) -> float:
    return float(np.sum(all_rates(eff, noise)))


def harvested_power(q: int, eff: EffectiveChannels, w: np.ndarray, zeta_q: float) -> float:
    """Rectified power at harvester q: zeta * sum_k |d_q^H w_k|^2."""
    w = np.atleast_2d(np.asarray(w))
    received = np.conj(eff.d[q]) @ w
    return float(zeta_q * np.sum(np.abs(received) ** 2))


def transmit_power(w: np.ndarray) -> float:
    return float(np.sum(np.abs(w) ** 2))


def pce(eff: EffectiveChannels, w: np.ndarray, config: ScenarioConfig) -> float:
    """Total harvested power over amplifier-scaled transmit power plus circuit power."""
    total = sum(harvested_power(q, eff, w, config.zeta[q]) for q in range(eff.d.shape[0]))
    den = config.phi * transmit_power(w) + config.num_ehrs * config.p_circuit
    return float(total / den)


def check_power_budget(w: np.ndarray, p_max: float, tol: float = 1e-9) -> bool:
    return transmit_power(w) <= p_max + tol


@dataclass(frozen=True)
class MetricsReport:
    """Snapshot of every performance functional at one operating point."""

    sinr: tuple[float, ...]       # per information user
    rates: tuple[float, ...]      # bits/s/Hz
    sum_rate: float
    harvested: tuple[float, ...]  # W per harvester
    pce: float
    tx_power: float               # W

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_metrics(eff: EffectiveChannels, w: np.ndarray,
                     config: ScenarioConfig) -> MetricsReport:
    noise = config.noise_power
    k = eff.s.shape[0]
    q = eff.d.shape[0]
    sinrs = tuple(sinr(i, eff, noise) for i in range(k))
    rates = tuple(float(np.log2(1.0 + g)) for g in sinrs)
    harv = tuple(harvested_power(i, eff, w, config.zeta[i]) for i in range(q))
    return MetricsReport(
        sinr=sinrs,
        rates=rates,
        sum_rate=float(np.sum(rates)),
        harvested=harv,
        pce=pce(eff, w, config),
        tx_power=transmit_power(w),
    )
