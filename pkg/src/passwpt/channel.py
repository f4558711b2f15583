"""Spherical-wave receiver channels and the in-waveguide phase response.

Channel vectors are stored in row form: entry i of `idr_channel` is the
coefficient multiplying the signal radiated by flat antenna index
i = n * L + l when it reaches the receiver. The in-waveguide response is kept
phase-only; the radiation amplitudes live exclusively in the per-antenna
ratio vector, so the product of the two is the full per-antenna gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Placement, ScenarioConfig, UserLayout


class DimensionMismatch(ValueError):
    """Array shapes disagree with the scenario dimensions."""


def antenna_positions(placement: Placement, config: ScenarioConfig) -> np.ndarray:
    """Flat (N*L, 3) antenna coordinates in waveguide-major order."""
    n, l = config.num_waveguides, config.pas_per_waveguide
    x = np.asarray(placement.x, dtype=float)
    if x.shape != (n, l):
        raise DimensionMismatch(f"placement shape {x.shape} != ({n}, {l})")
    pos = np.empty((n * l, 3))
    for wg in range(n):
        pos[wg * l:(wg + 1) * l, 0] = x[wg]
        pos[wg * l:(wg + 1) * l, 1] = config.waveguide_y[wg]
        pos[wg * l:(wg + 1) * l, 2] = config.waveguide_height
    return pos


def _spherical_row(pa_pos: np.ndarray, user: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    lam = config.wavelength
    kappa = 2.0 * np.pi / lam
    eta = lam / (4.0 * np.pi)  # equals c / (4 pi f_c)
    dist = np.linalg.norm(pa_pos - user[None, :], axis=1)
    return eta * np.exp(-1j * kappa * dist) / dist


def idr_channel(placement: Placement, user: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """Free-space spherical propagation row vector toward an information user."""
    user = np.asarray(user, dtype=float)
    if user[2] != 0.0:
        raise DimensionMismatch("receivers sit at z = 0")
    return _spherical_row(antenna_positions(placement, config), user, config)


def ehr_channel(placement: Placement, ehr: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """Identical propagation law evaluated at an energy harvester position."""
    return idr_channel(placement, np.asarray(ehr, dtype=float), config)


def waveguide_phase(placement: Placement, config: ScenarioConfig) -> np.ndarray:
    """Unit-modulus guided phase exp(-j 2 pi x / lambda_g) per antenna, feed at x = 0."""
    n, l = config.num_waveguides, config.pas_per_waveguide
    x = np.asarray(placement.x, dtype=float)
    if x.shape != (n, l):
        raise DimensionMismatch(f"placement shape {x.shape} != ({n}, {l})")
    return np.exp(-1j * 2.0 * np.pi * x.ravel() / config.guided_wavelength)


@dataclass(frozen=True)
class ChannelSet:
    """All receiver channels plus the guided phase for one placement."""

    h_idr: np.ndarray    # (K, N*L) complex rows
    h_ehr: np.ndarray    # (Q, N*L) complex rows
    g_phase: np.ndarray  # (N*L,) complex, |entry| = 1


def build_channel_set(placement: Placement, layout: UserLayout,
                      config: ScenarioConfig) -> ChannelSet:
    pa = antenna_positions(placement, config)
    h_idr = np.stack([_spherical_row(pa, u, config) for u in layout.idr_positions])
    h_ehr = np.stack([_spherical_row(pa, u, config) for u in layout.ehr_positions])
    return ChannelSet(h_idr=h_idr, h_ehr=h_ehr, g_phase=waveguide_phase(placement, config))


@dataclass(frozen=True)
class EffectiveChannels:
    """Per-waveguide effective channels and the received signal coefficients.

    c[k] / d[q] are the conjugated (row . phase . ratios) aggregates, one complex
    entry per waveguide; s[k, j] is the coefficient of beam j seen by user k.
    """

    c: np.ndarray  # (K, N)
    d: np.ndarray  # (Q, N)
    s: np.ndarray  # (K, K)


def waveguide_aggregate(rows: np.ndarray, g_phase: np.ndarray, alpha: np.ndarray,
                        num_waveguides: int) -> np.ndarray:
    """Collapse per-antenna rows into per-waveguide effective rows: sum_l h g alpha."""
    rows = np.atleast_2d(rows)
    total = rows.shape[1]
    if g_phase.shape[0] != total or alpha.shape[0] != total:
        raise DimensionMismatch("channel, phase, and ratio lengths disagree")
    per = total // num_waveguides
    weighted = rows * g_phase[None, :] * alpha[None, :]
    return weighted.reshape(rows.shape[0], num_waveguides, per).sum(axis=2)


def effective_channels(channels: ChannelSet, alpha: np.ndarray,
                       w: np.ndarray, num_waveguides: int) -> EffectiveChannels:
    """Assemble effective channels and signal coefficients for ratios alpha, beams w."""
    w = np.atleast_2d(np.asarray(w))
    if w.shape[0] != num_waveguides:
        raise DimensionMismatch(f"beamformer has {w.shape[0]} rows, expected {num_waveguides}")
    rows_id = waveguide_aggregate(channels.h_idr, channels.g_phase, alpha, num_waveguides)
    rows_eh = waveguide_aggregate(channels.h_ehr, channels.g_phase, alpha, num_waveguides)
    return EffectiveChannels(c=np.conj(rows_id), d=np.conj(rows_eh), s=rows_id @ w)


def alpha_linear_forms(rows: np.ndarray, g_phase: np.ndarray, w: np.ndarray,
                       num_waveguides: int) -> np.ndarray:
    """Coefficient rows t[k, j] with (row_k . phase . lift(w_j)) @ alpha = s[k, j].

    Returns a (num_rows, K_beams, N*L) array; the per-antenna beam lift repeats
    each waveguide's beam weight across that waveguide's antennas.
    """
    rows = np.atleast_2d(rows)
    w = np.atleast_2d(np.asarray(w))
    total = rows.shape[1]
    per = total // num_waveguides
    lift = np.repeat(w, per, axis=0)  # (N*L, K)
    return rows[:, None, :] * g_phase[None, None, :] * lift.T[None, :, :]
