"""Classical active/sleep strategies and the closed-form complexity estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lp import LpStatus, allocate_power, feasibility_value
from .powermodel import PowerBreakdown, compute_rates, power_breakdown

MAX_ENUMERATION_M = 20


@dataclass
class SlotDecision:
    alpha: np.ndarray
    p: np.ndarray
    breakdown: PowerBreakdown
    feasible: bool
    rates: np.ndarray
    v_ft: float | None = None

    @property
    def n_active(self) -> int:
        return int(np.sum(self.alpha))


def evaluate_decision(H, alpha, r_min, sigma2, alpha_prev, cfg, *,
                      with_v_ft=False) -> SlotDecision:
    """Allocate power for ``alpha`` and price the slot.

    An infeasible mode vector still consumes power: it is charged with the
    allocation that minimises the worst rate shortfall.
    """
    alpha = np.asarray(alpha, dtype=np.int64).reshape(-1)
    alloc = allocate_power(H, alpha, r_min, sigma2, cfg)
    feasible = alloc.status is LpStatus.OPTIMAL
    v_ft = None
    p = alloc.p
    if with_v_ft or not feasible:
        v_ft, p_ft = feasibility_value(H, alpha, r_min, sigma2, cfg)
        if not feasible:
            p = p_ft
    bd = power_breakdown(p, alpha, alpha_prev, cfg)
    return SlotDecision(alpha, p, bd, feasible, compute_rates(p, H, sigma2), v_ft)


def full_association(H, r_min, sigma2, alpha_prev, cfg) -> SlotDecision:
    M = np.asarray(H).shape[0]
    return evaluate_decision(H, np.ones(M, dtype=np.int64), r_min, sigma2, alpha_prev, cfg)


def sequential_onoff(H, r_min, sigma2, alpha_prev, cfg) -> SlotDecision:
    """Greedy removal: switch off the active BS with the least transmit power
    until the next removal would break a rate requirement."""
    M = np.asarray(H).shape[0]
    alpha = np.ones(M, dtype=np.int64)
    alloc = allocate_power(H, alpha, r_min, sigma2, cfg)
    if alloc.status is not LpStatus.OPTIMAL:
        return evaluate_decision(H, alpha, r_min, sigma2, alpha_prev, cfg)
    eta = cfg.eta_vector()
    while alpha.sum() > 1:
        per_bs = alloc.p.sum(axis=1) / eta
        active = np.flatnonzero(alpha)
        victim = active[np.argmin(per_bs[active])]
        trial = alpha.copy()
        trial[victim] = 0
        nxt = allocate_power(H, trial, r_min, sigma2, cfg)
        if nxt.status is not LpStatus.OPTIMAL:
            break
        alpha, alloc = trial, nxt
    bd = power_breakdown(alloc.p, alpha, alpha_prev, cfg)
    return SlotDecision(alpha, alloc.p, bd, True, compute_rates(alloc.p, H, sigma2))


def decode_index(idx: int, M: int) -> np.ndarray:
    return (idx >> np.arange(M)) & 1


def exhaustive_onoff(H, r_min, sigma2, alpha_prev, cfg,
                     objective: str = "instantaneous") -> SlotDecision:
    """Exact per-slot optimum over all 2^M mode vectors.

    ``instantaneous`` minimises p_tx + p_mode; ``with_transition`` also charges
    switching relative to ``alpha_prev``.  Ties go to fewer active BSs, then to
    the lower action index.
    """
    if objective not in ("instantaneous", "with_transition"):
        raise ValueError(f"unknown objective {objective!r}")
    M = np.asarray(H).shape[0]
    if M > MAX_ENUMERATION_M:
        raise ValueError(f"enumeration over 2^{M} modes exceeds the M <= "
                         f"{MAX_ENUMERATION_M} guard")
    best = None
    best_key = None
    for idx in range(1 << M):
        alpha = decode_index(idx, M)
        alloc = allocate_power(H, alpha, r_min, sigma2, cfg)
        if alloc.status is not LpStatus.OPTIMAL:
            continue
        bd = power_breakdown(alloc.p, alpha, alpha_prev, cfg)
        cost = bd.instantaneous if objective == "instantaneous" else bd.p_tot
        key = (cost, int(alpha.sum()))
        if best is None or _better(key, best_key):
            best, best_key = (alpha, alloc.p, bd), key
    if best is None:
        return full_association(H, r_min, sigma2, alpha_prev, cfg)
    alpha, p, bd = best
    return SlotDecision(alpha, p, bd, True, compute_rates(p, H, sigma2))


def _better(key, ref, tol=1e-9):
    cost, n_on = key
    rcost, rn = ref
    if cost < rcost - tol:
        return True
    if cost <= rcost + tol:
        return n_on < rn  # equal count keeps the earlier (lower) index
    return False


def complexity_estimates(M, K, omega, sizes, n_off, eps) -> dict:
    """Flop-count style estimates; ``sizes`` = (|A|, |A^F|, |A^D|)."""
    a, af, ad = sizes
    c_tx = M ** 3 * K ** 3 * math.log(1.0 / eps)
    head = 4 * M * K + 2 * M + 2 * K + 8 * omega
    return {
        "c_f": (head + 2 * a) * omega + a,
        "c_e": (head + 2 * af) * omega + af,
        "c_dqn": (head + 2 * ad) * omega + ad,
        "c_tx": c_tx,
        "c_dreem": (head + 2) * 3 * omega + (a + af + ad) * (2 * omega + 1) + c_tx,
        "c_sequential": (M - n_off / 2) * n_off + (n_off + 2) * c_tx,
        "c_milp": 2 ** (M * K) * c_tx,
    }


BASELINES = {
    "full": lambda H, r, s2, prev, cfg: full_association(H, r, s2, prev, cfg),
    "sequential": lambda H, r, s2, prev, cfg: sequential_onoff(H, r, s2, prev, cfg),
    "milp_inst": lambda H, r, s2, prev, cfg: exhaustive_onoff(H, r, s2, prev, cfg, "instantaneous"),
    "milp_trans": lambda H, r, s2, prev, cfg: exhaustive_onoff(H, r, s2, prev, cfg, "with_transition"),
}


def run_baseline_episode(method: str, episode, cfg) -> list[SlotDecision]:
    """Play one baseline through an episode, chaining its own previous modes."""
    fn = BASELINES[method]
    alpha_prev = np.ones(cfg.M, dtype=np.int64)
    out = []
    for t in range(1, episode.T + 1):
        dec = fn(episode.H[t], episode.r_min[t], episode.sigma2, alpha_prev, cfg)
        out.append(dec)
        alpha_prev = dec.alpha
    return out
