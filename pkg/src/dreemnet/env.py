"""UDN geometry, mobility and large-scale fading.

Everything here is a pure function of its inputs plus an explicit
``numpy.random.Generator``; an :class:`Episode` is the full per-slot channel
and rate-requirement stream, generated once and replayed to every method so
comparisons are paired.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SLOT_DURATION = 1.53  # s, coherence time of the large-scale fading


@dataclass
class ScenarioConfig:
    M: int = 10
    K: int = 4
    D: float = 200.0
    f: float = 2.0
    h_B: float = 15.0
    h_U: float = 1.65
    d0: float = 10.0
    d1: float = 50.0
    sigma_sh: float = 3.0
    v_min: float = 1.0
    v_max: float = 6.0
    T: int = 50
    snr_db: float = 10.0
    r_min: float | list = 0.2
    p_max: float | list = 1.0
    eta: float | list = 0.25
    p_on: float | list = 6.8
    p_off: float | list = 4.3
    rho_trans: float | list = 3.0
    seed: int = 0
    # extensions beyond the base parameter table
    pathloss_freq_unit: str = "GHz"
    slot_duration: float = SLOT_DURATION
    d_ref: float = 100.0
    r_min_range: list | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.M < 1 or self.K < 1:
            raise ValueError("need M >= 1 and K >= 1")
        if not 0 < self.d0 < self.d1 < self.D:
            raise ValueError("need 0 < d0 < d1 < D")
        if not 0 <= self.v_min <= self.v_max:
            raise ValueError("need 0 <= v_min <= v_max")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.pathloss_freq_unit not in ("GHz", "MHz"):
            raise ValueError("pathloss_freq_unit must be 'GHz' or 'MHz'")
        eta = self.eta_vector()
        if np.any(eta <= 0) or np.any(eta > 1):
            raise ValueError("eta must lie in (0, 1]")
        if np.any(self.p_off_vector() >= self.p_on_vector()):
            raise ValueError("p_off must be below p_on")
        for v in (self.p_max_vector(), self.p_off_vector(), self.rho_vector()):
            if np.any(v < 0):
                raise ValueError("powers must be non-negative")
        if np.any(self.r_min_vector() <= 0):
            raise ValueError("r_min entries must be positive")
        if self.r_min_range is not None:
            lo, hi = self.r_min_range
            if not 0 < lo <= hi:
                raise ValueError("r_min_range must satisfy 0 < lo <= hi")

    def _per(self, value, n, name):
        v = np.asarray(value, dtype=float)
        if v.ndim == 0:
            return np.full(n, float(v))
        if v.shape != (n,):
            raise ValueError(f"{name} must be a scalar or have length {n}")
        return v.copy()

    def eta_vector(self):
        return self._per(self.eta, self.M, "eta")

    def p_max_vector(self):
        return self._per(self.p_max, self.M, "p_max")

    def p_on_vector(self):
        return self._per(self.p_on, self.M, "p_on")

    def p_off_vector(self):
        return self._per(self.p_off, self.M, "p_off")

    def rho_vector(self):
        return self._per(self.rho_trans, self.M, "rho_trans")

    def r_min_vector(self):
        return self._per(self.r_min, self.K, "r_min")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def paper_scenario(**overrides) -> ScenarioConfig:
    return ScenarioConfig(**overrides)


def desk_scenario(**overrides) -> ScenarioConfig:
    base = dict(M=6, K=2, r_min_range=[0.1, 0.5])
    base.update(overrides)
    return ScenarioConfig(**base)


# --------------------------------------------------------------------------
# channel

def _pathloss_offset(cfg: ScenarioConfig) -> float:
    f = cfg.f if cfg.pathloss_freq_unit == "GHz" else cfg.f * 1000.0
    lf = np.log10(f)
    return (46.3 - 33.9 * lf - 13.82 * np.log10(cfg.h_B)
            - (1.1 * lf - 0.7) * cfg.h_U - (1.56 * lf - 0.8))


def path_loss_db(d, cfg: ScenarioConfig):
    """Three-slope path loss in dB (negative values are attenuation)."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be positive")
    L = _pathloss_offset(cfg)
    far = -L - 35.0 * np.log10(np.maximum(d, cfg.d1))
    mid = -L - 15.0 * np.log10(cfg.d1) - 20.0 * np.log10(np.clip(d, cfg.d0, cfg.d1))
    out = np.where(d > cfg.d1, far, mid)
    return out if out.ndim else float(out)


def large_scale_gains(bs_pos, mob, cfg: ScenarioConfig, rng) -> np.ndarray:
    """Linear M x K gains: path loss plus log-normal shadowing, composed in dB."""
    bs_pos = np.asarray(bs_pos, dtype=float)
    pos = mob.pos if isinstance(mob, MobileState) else np.asarray(mob, dtype=float)
    d = np.linalg.norm(bs_pos[:, None, :] - pos[None, :, :], axis=-1)
    z = rng.standard_normal(d.shape)
    return 10.0 ** ((path_loss_db(d, cfg) + z * cfg.sigma_sh) / 10.0)


def noise_power(cfg: ScenarioConfig) -> float:
    """Noise variance giving ``snr_db`` at full power over the reference distance."""
    p_max = float(np.max(cfg.p_max_vector()))
    g_ref = 10.0 ** (path_loss_db(cfg.d_ref, cfg) / 10.0)
    return p_max * g_ref / 10.0 ** (cfg.snr_db / 10.0)


# --------------------------------------------------------------------------
# mobility

@dataclass
class MobileState:
    pos: np.ndarray  # (K, 2) m
    vel: np.ndarray  # (K, 2) m/s

    def copy(self) -> "MobileState":
        return MobileState(self.pos.copy(), self.vel.copy())

    @property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.vel, axis=1)


def _draw_velocity(n, cfg, rng):
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    speed = rng.uniform(cfg.v_min, cfg.v_max, n)
    return speed[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)


def init_mobiles(cfg: ScenarioConfig, rng) -> MobileState:
    pos = rng.uniform(0.0, cfg.D, (cfg.K, 2))
    return MobileState(pos, _draw_velocity(cfg.K, cfg, rng))


def place_base_stations(cfg: ScenarioConfig, rng) -> np.ndarray:
    return rng.uniform(0.0, cfg.D, (cfg.M, 2))


def step_mobility(mob: MobileState, cfg: ScenarioConfig, rng, dt: float | None = None):
    """Advance every mobile by ``dt`` seconds.

    A mobile that leaves the square is clamped onto the edge and gets a fresh
    velocity (uniform speed, direction pointing back inside).
    """
    dt = cfg.slot_duration if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be positive")
    pos = mob.pos + mob.vel * dt
    vel = mob.vel.copy()
    low = pos < 0.0
    high = pos > cfg.D
    hit = np.any(low | high, axis=1)
    if np.any(hit):
        pos = np.clip(pos, 0.0, cfg.D)
        fresh = np.abs(_draw_velocity(int(hit.sum()), cfg, rng))
        sign = np.where(high[hit], -1.0, np.where(low[hit], 1.0, 0.0))
        # free axes keep a random sign
        free = sign == 0.0
        sign[free] = np.where(rng.random(int(free.sum())) < 0.5, -1.0, 1.0)
        vel[hit] = fresh * sign
    return MobileState(pos, vel)


# --------------------------------------------------------------------------
# state

def state_dim(M: int, K: int) -> int:
    return 2 * M * K + M + K


def build_state(H_t, H_prev, r_min, alpha_prev) -> np.ndarray:
    """Flat vector [H_t | H_prev | r_min | alpha_prev] (row-major matrices)."""
    H_t = np.asarray(H_t, dtype=float)
    H_prev = np.asarray(H_prev, dtype=float)
    r_min = np.asarray(r_min, dtype=float).reshape(-1)
    alpha_prev = np.asarray(alpha_prev, dtype=float).reshape(-1)
    if H_t.ndim != 2 or H_prev.shape != H_t.shape:
        raise ValueError("H_t and H_prev must be M x K matrices of equal shape")
    M, K = H_t.shape
    if r_min.size != K or alpha_prev.size != M:
        raise ValueError("r_min must have K entries and alpha_prev M entries")
    return np.concatenate([H_t.ravel(), H_prev.ravel(), r_min, alpha_prev])


def split_state(s, M: int, K: int):
    """Inverse of :func:`build_state`."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != state_dim(M, K):
        raise ValueError("state length does not match M, K")
    mk = M * K
    lead = s.shape[:-1]
    return (s[..., :mk].reshape(lead + (M, K)),
            s[..., mk:2 * mk].reshape(lead + (M, K)),
            s[..., 2 * mk:2 * mk + K],
            s[..., 2 * mk + K:])


# --------------------------------------------------------------------------
# episodes

@dataclass
class Episode:
    """Per-slot channel stream of one episode.

    ``H[t]`` for t = 0..T+1: slot t (1-based) sees ``H[t]`` with ``H[t-1]``
    as the previous matrix; ``H[T+1]`` only feeds the final next-state.
    """

    bs_pos: np.ndarray
    H: np.ndarray          # (T+2, M, K)
    r_min: np.ndarray      # (T+2, K)
    sigma2: float
    positions: np.ndarray  # (T+2, K, 2)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def T(self) -> int:
        return self.H.shape[0] - 2


def generate_episode(cfg: ScenarioConfig, rng) -> Episode:
    bs = place_base_stations(cfg, rng)
    mob = init_mobiles(cfg, rng)
    if cfg.r_min_range is not None:
        lo, hi = cfg.r_min_range
        r = rng.uniform(lo, hi, cfg.K)
    else:
        r = cfg.r_min_vector()
    H, pos = [], []
    for t in range(cfg.T + 2):
        if t:
            mob = step_mobility(mob, cfg, rng)
        pos.append(mob.pos)
        H.append(large_scale_gains(bs, mob, cfg, rng))
    return Episode(bs, np.array(H), np.tile(r, (cfg.T + 2, 1)),
                   noise_power(cfg), np.array(pos))


def episode_seeds(seed: int, n: int, stream: int = 0) -> list[int]:
    """Independent integer seeds for ``n`` episodes on a named stream."""
    ss = np.random.SeedSequence([seed, stream])
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]
