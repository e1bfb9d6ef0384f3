"""Per-mobile rates, the three-part BS power model and the slot reward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INFEASIBLE_PENALTY = -1000.0


@dataclass(frozen=True)
class PowerBreakdown:
    """Network-wide power in one slot (W)."""

    p_tx: float
    p_mode: float
    p_trans: float

    @property
    def p_tot(self) -> float:
        return self.p_tx + self.p_mode + self.p_trans

    @property
    def instantaneous(self) -> float:
        """Transmit plus maintenance power, i.e. everything but mode switching."""
        return self.p_tx + self.p_mode


def compute_rates(p, H, sigma2: float) -> np.ndarray:
    """Spectral efficiency of each mobile (bps/Hz) under allocation ``p``.

    ``p`` and ``H`` are M x K.  Mobile k receives its own streams from every BS
    and sees every other mobile's streams from the same BSs as interference.
    """
    p = np.asarray(p, dtype=float)
    H = np.asarray(H, dtype=float)
    if p.shape != H.shape:
        raise ValueError("p and H must have the same shape")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    # rx[j, k]: power of stream j arriving at mobile k
    rx = p.T @ H
    signal = np.diag(rx)
    interference = rx.sum(axis=0) - signal
    return np.log2(1.0 + signal / (interference + sigma2))


def power_breakdown(p, alpha, alpha_prev, cfg) -> PowerBreakdown:
    p = np.asarray(p, dtype=float)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    alpha_prev = np.asarray(alpha_prev, dtype=float).reshape(-1)
    if p.shape[0] != alpha.size or alpha_prev.size != alpha.size:
        raise ValueError("p, alpha and alpha_prev disagree on M")
    if np.any(p < 0):
        raise ValueError("negative power weight")
    if np.any(p[alpha < 0.5] > 0):
        raise ValueError("sleeping BS carries transmit power")
    p_tx = float(np.sum(p.sum(axis=1) / cfg.eta_vector()))
    p_mode = float(np.sum(alpha * cfg.p_on_vector() + (1 - alpha) * cfg.p_off_vector()))
    p_trans = float(np.sum(np.abs(alpha - alpha_prev) * cfg.rho_vector()))
    return PowerBreakdown(p_tx, p_mode, p_trans)


def reward(breakdown: PowerBreakdown, p_all_on: float, feasible: bool) -> float:
    if not feasible:
        return INFEASIBLE_PENALTY
    return p_all_on - breakdown.p_tot
