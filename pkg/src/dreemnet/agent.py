"""DQN active/sleep agent with a learned two-stage action filter.

Two regression heads score every mode vector for a state: one predicts the
degree of infeasibility, the other the total network power.  Actions whose
predicted infeasibility exceeds ``tau``, or whose predicted power exceeds
``p_threshold``, are removed before the epsilon-greedy Q-value argmax.  All
three networks map the state to one output per action (2^M outputs) and are
trained only on the entry of the action actually taken.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import nn
from .baselines import SlotDecision, evaluate_decision, full_association
from .env import Episode, ScenarioConfig, build_state, generate_episode, noise_power, state_dim
from .powermodel import reward

# channel features are log1p(beta / sigma^2) / GAIN_FEATURE_SCALE
GAIN_FEATURE_SCALE = 5.0


@dataclass
class AgentConfig:
    gamma: float = 0.9
    tau: float = 0.01
    p_threshold: float = 64.0
    batch: int = 256
    lr_f: float = 1e-3
    lr_e: float = 1e-3
    lr_q: float = 1e-3
    optimizer: str = "adam"
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.5
    updates_per_episode: int = 1
    target_network: bool = False
    target_sync: int = 10
    hidden: list = field(default_factory=lambda: [64, 64, 64, 64])
    memory_capacity: int = 20000
    # output scalings; argmax and threshold decisions are unaffected
    reward_scale: float = 0.01
    power_scale: float = 0.02
    v_clip: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.batch <= self.memory_capacity:
            raise ValueError("batch must be positive and fit in the replay memory")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        self.hidden = [int(h) for h in self.hidden]

    def epsilon(self, episode: int, n_episodes: int) -> float:
        """Linear decay over the first ``eps_decay_frac`` of training, then flat."""
        horizon = max(1.0, self.eps_decay_frac * n_episodes)
        frac = min(1.0, episode / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        return cls(**d)


# --------------------------------------------------------------------------
# actions

def encode_action(alpha) -> int:
    alpha = np.asarray(alpha).reshape(-1)
    return int(np.sum((alpha > 0.5).astype(np.int64) << np.arange(alpha.size)))


def decode_action(idx: int, M: int) -> np.ndarray:
    if not 0 <= idx < (1 << M):
        raise ValueError(f"action {idx} outside [0, 2^{M})")
    return (int(idx) >> np.arange(M)) & 1


def valid_action_mask(M_model: int, M_active: int | None = None) -> np.ndarray:
    """Actions that leave every BS at position >= M_active asleep."""
    idx = np.arange(1 << M_model)
    if M_active is None or M_active == M_model:
        return np.ones(idx.size, dtype=bool)
    return (idx >> M_active) == 0


# --------------------------------------------------------------------------
# replay

class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    v_ft: float
    p_tot: float
    s_next: np.ndarray


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of transitions."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = int(capacity)
        self.dim = dim
        self.s = np.zeros((capacity, dim))
        self.s_next = np.zeros((capacity, dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.v_ft = np.zeros(capacity)
        self.p_tot = np.zeros(capacity)
        self.size = 0
        self.head = 0
        self.pushed = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition) -> None:
        values = (tr.r, tr.v_ft, tr.p_tot)
        if not (np.all(np.isfinite(tr.s)) and np.all(np.isfinite(tr.s_next))
                and np.all(np.isfinite(values))):
            raise ValueError("transition has non-finite fields")
        i = self.head
        self.s[i], self.a[i], self.r[i] = tr.s, tr.a, tr.r
        self.v_ft[i], self.p_tot[i], self.s_next[i] = tr.v_ft, tr.p_tot, tr.s_next
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def oldest_first(self) -> np.ndarray:
        """Buffer slots ordered from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.head + np.arange(self.capacity)) % self.capacity

    def sample(self, n: int, rng) -> dict:
        idx = rng.choice(self.size, size=n, replace=False)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "v_ft": self.v_ft[idx], "p_tot": self.p_tot[idx], "s_next": self.s_next[idx]}


# --------------------------------------------------------------------------
# agent container

class DreemAgent:
    """Parameters, optimizer states and replay memory for one agent.

    ``use_dsn=False`` bypasses the filter entirely (vanilla DQN); everything
    else, including training of the two regression heads, is shared.
    """

    def __init__(self, M: int, K: int, sigma2: float, cfg: AgentConfig | None = None,
                 seed: int = 0, use_dsn: bool = True):
        self.M, self.K = M, K
        self.sigma2 = float(sigma2)
        self.cfg = cfg or AgentConfig()
        self.use_dsn = use_dsn
        self.n_actions = 1 << M
        self.rng = np.random.default_rng(seed)
        dims = [state_dim(M, K)] + list(self.cfg.hidden) + [self.n_actions]
        self.theta_f = nn.init_mlp(dims, self.rng)
        self.theta_e = nn.init_mlp(dims, self.rng)
        self.w = nn.init_mlp(dims, self.rng)
        # heads start permissive: every action passes both tests until trained
        self.theta_f = _with_output_bias(self.theta_f, -self.cfg.v_clip)
        self.opt_f = nn.init_opt(self.theta_f, self.cfg.optimizer, self.cfg.lr_f)
        self.opt_e = nn.init_opt(self.theta_e, self.cfg.optimizer, self.cfg.lr_e)
        self.opt_q = nn.init_opt(self.w, self.cfg.optimizer, self.cfg.lr_q)
        self.w_target = self.w.copy() if self.cfg.target_network else None
        self.memory = ReplayMemory(self.cfg.memory_capacity, state_dim(M, K))
        self.episodes_trained = 0
        self.epsilon = self.cfg.eps_start

    def features(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        x = s.copy()
        mk2 = 2 * self.M * self.K
        x[..., :mk2] = np.log1p(np.maximum(s[..., :mk2], 0.0) / self.sigma2) / GAIN_FEATURE_SCALE
        return x

    def heads(self):
        return (self.theta_f, self.theta_e) if self.use_dsn else None

    def config_hash(self) -> str:
        return nn.config_hash({"M": self.M, "K": self.K, "sigma2": self.sigma2,
                               "use_dsn": self.use_dsn, "agent": self.cfg.to_dict()})


def _with_output_bias(params: nn.MlpParams, value: float) -> nn.MlpParams:
    layers = list(params.layers)
    W, b = layers[-1]
    layers[-1] = (W, np.full_like(b, value))
    return nn.MlpParams(layers)


# --------------------------------------------------------------------------
# filtering and action selection

class FilterResult(NamedTuple):
    A_F: np.ndarray
    A_D: np.ndarray
    v_hat: np.ndarray
    p_hat: np.ndarray
    fallback: bool


def _head_output(head, x, scale=1.0):
    if callable(head):
        return np.asarray(head(x), dtype=float)
    return nn.forward(head, x)[0] / scale


def dsn_filter(theta_f, theta_e, x, cfg: AgentConfig, mask=None) -> FilterResult:
    """Feasibility test then energy test over all actions allowed by ``mask``.

    Heads are either network parameters (applied to the feature vector ``x``)
    or callables returning per-action predictions in natural units.  When no
    action survives both tests the feasible set is used, and when that is empty
    too the single all-on action (among ``mask``) is returned.
    """
    v_hat = _head_output(theta_f, x)
    p_hat = _head_output(theta_e, x, cfg.power_scale)
    allowed = np.ones(v_hat.size, dtype=bool) if mask is None else mask
    feas = allowed & (v_hat <= cfg.tau)
    desirable = feas & (p_hat <= cfg.p_threshold)
    A_F = np.flatnonzero(feas)
    A_D = np.flatnonzero(desirable)
    fallback = A_D.size == 0
    if fallback:
        A_D = A_F if A_F.size else np.array([np.flatnonzero(allowed).max()])
    return FilterResult(A_F, A_D, v_hat, p_hat, fallback)


def select_action(w, x, A_D, epsilon: float, rng) -> int:
    """Epsilon-greedy over ``A_D``; greedy ties resolve to the lowest index."""
    A_D = np.unique(np.asarray(A_D, dtype=np.int64))
    if A_D.size == 0:
        raise ValueError("empty action set")
    if rng.random() < epsilon:
        return int(A_D[rng.integers(A_D.size)])
    q = _head_output(w, x)
    return int(A_D[np.argmax(q[A_D])])


def _filter_mask_batch(heads, X, cfg, n_actions):
    theta_f, theta_e = heads
    V = nn.forward(theta_f, X)[0]
    P = nn.forward(theta_e, X)[0] / cfg.power_scale
    feas = V <= cfg.tau
    mask = feas & (P <= cfg.p_threshold)
    empty = ~mask.any(axis=1)
    mask[empty] = feas[empty]
    still = ~mask.any(axis=1)
    mask[still, n_actions - 1] = True
    return mask


def q_targets(w, batch: dict, gamma: float, dsn_heads, cfg: AgentConfig) -> np.ndarray:
    """r + gamma * max Q(s', a') with a' restricted to the filtered set of s'.

    ``batch`` holds feature matrices ``x_next`` and rewards ``r`` already in
    network units.  ``dsn_heads=None`` maximises over every action.
    """
    Qn = nn.forward(w, batch["x_next"])[0]
    if dsn_heads is not None:
        mask = _filter_mask_batch(dsn_heads, batch["x_next"], cfg, Qn.shape[1])
        Qn = np.where(mask, Qn, -np.inf)
    return batch["r"] + gamma * Qn.max(axis=1)


def _regress_taken(params, opt, X, a, target):
    y, cache = nn.forward(params, X)
    rows = np.arange(X.shape[0])
    err = y[rows, a] - target
    dy = np.zeros_like(y)
    dy[rows, a] = 2.0 * err / X.shape[0]
    grads = nn.backward(params, cache, dy)
    params, opt = nn.opt_step(params, grads, opt)
    return params, opt, float(np.mean(err ** 2))


def train_step(agent: DreemAgent, rng=None) -> dict | None:
    """One mini-batch update of all three heads.

    Returns the three mean-squared losses (in network units), or ``None`` when
    the memory holds fewer than a batch of transitions.
    """
    cfg = agent.cfg
    if len(agent.memory) < cfg.batch:
        return None
    rng = agent.rng if rng is None else rng
    b = agent.memory.sample(cfg.batch, rng)
    X = agent.features(b["s"])
    Xn = agent.features(b["s_next"])
    a = b["a"]

    v_target = np.clip(b["v_ft"], -cfg.v_clip, cfg.v_clip)
    p_target = b["p_tot"] * cfg.power_scale
    w_boot = agent.w_target if agent.w_target is not None else agent.w
    y = q_targets(w_boot, {"x_next": Xn, "r": b["r"] * cfg.reward_scale},
                  cfg.gamma, agent.heads(), cfg)

    agent.theta_f, agent.opt_f, lf = _regress_taken(agent.theta_f, agent.opt_f, X, a, v_target)
    agent.theta_e, agent.opt_e, le = _regress_taken(agent.theta_e, agent.opt_e, X, a, p_target)
    agent.w, agent.opt_q, lq = _regress_taken(agent.w, agent.opt_q, X, a, y)
    return {"loss_f": lf, "loss_e": le, "loss_q": lq}


# --------------------------------------------------------------------------
# episodes

@dataclass
class SlotLog:
    t: int
    action: int
    decision: SlotDecision
    reward: float
    size_A_F: int
    size_A_D: int
    min_rate_margin: float

    @property
    def p_tot(self) -> float:
        return self.decision.breakdown.p_tot


@dataclass
class EpisodeLog:
    slots: list
    epsilon: float = 0.0
    losses: list = field(default_factory=list)

    @property
    def mean_power(self) -> float:
        return float(np.mean([s.p_tot for s in self.slots]))

    @property
    def energy(self) -> float:
        """Sum of per-slot network power over the episode (W * slot)."""
        return float(np.sum([s.p_tot for s in self.slots]))

    @property
    def total_reward(self) -> float:
        return float(np.sum([s.reward for s in self.slots]))

    @property
    def n_infeasible(self) -> int:
        return sum(not s.decision.feasible for s in self.slots)


def all_on_power(episode: Episode, t: int, cfg: ScenarioConfig) -> float:
    """Power of the all-active network in slot ``t`` with no mode switching."""
    cache = episode.cache.setdefault("p_all_on", {})
    if t not in cache:
        H = episode.H[t]
        ones = np.ones(H.shape[0], dtype=np.int64)
        dec = full_association(H, episode.r_min[t], episode.sigma2, ones, cfg)
        p_tx = dec.breakdown.p_tx if dec.feasible else float(np.sum(cfg.p_max_vector()))
        cache[t] = p_tx + dec.breakdown.p_mode
    return cache[t]


def _pad(mat, M, K):
    out = np.zeros((M, K))
    out[:mat.shape[0], :mat.shape[1]] = mat
    return out


def run_episode(agent: DreemAgent, episode: Episode, env_cfg: ScenarioConfig,
                mode: str = "train", epsilon: float | None = None, rng=None) -> EpisodeLog:
    """Play one episode slot by slot.

    In ``train`` mode every transition goes to the replay memory; ``eval`` is
    greedy by default and leaves the memory alone.  A scenario smaller than
    the agent's (M, K) is zero-padded and the missing BSs are held asleep.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    rng = agent.rng if rng is None else rng
    eps = (agent.epsilon if mode == "train" else 0.0) if epsilon is None else epsilon
    M, K = episode.H.shape[1:]
    if M > agent.M or K > agent.K:
        raise ValueError(f"scenario ({M}, {K}) exceeds the agent's ({agent.M}, {agent.K})")
    padded = (M, K) != (agent.M, agent.K)
    mask = valid_action_mask(agent.M, M)
    n_valid = int(mask.sum())
    r_pad = np.zeros(agent.K)

    alpha_prev = np.ones(M, dtype=np.int64)
    slots = []
    for t in range(1, episode.T + 1):
        H, H_prev, r = episode.H[t], episode.H[t - 1], episode.r_min[t]
        if padded:
            r_pad[:K] = r
            s = build_state(_pad(H, agent.M, agent.K), _pad(H_prev, agent.M, agent.K),
                            r_pad, np.concatenate([alpha_prev, np.zeros(agent.M - M)]))
        else:
            s = build_state(H, H_prev, r, alpha_prev)
        x = agent.features(s)
        if agent.use_dsn:
            filt = dsn_filter(agent.theta_f, agent.theta_e, x, agent.cfg, mask)
            A_D, n_f, n_d = filt.A_D, filt.A_F.size, filt.A_D.size
        else:
            A_D = np.flatnonzero(mask)
            n_f = n_d = n_valid
        a = select_action(agent.w, x, A_D, eps, rng)
        alpha = decode_action(a, agent.M)[:M]

        dec = evaluate_decision(H, alpha, r, episode.sigma2, alpha_prev, env_cfg, with_v_ft=True)
        rwd = reward(dec.breakdown, all_on_power(episode, t, env_cfg), dec.feasible)
        margin = float(np.min(dec.rates - r))
        slots.append(SlotLog(t, a, dec, rwd, n_f, n_d, margin))

        if mode == "train":
            if padded:
                raise ValueError("training on a zero-padded scenario is not supported")
            s_next = build_state(episode.H[t + 1], H, episode.r_min[t + 1], alpha)
            agent.memory.push(Transition(s, a, rwd, dec.v_ft, dec.breakdown.p_tot, s_next))
        alpha_prev = alpha
    return EpisodeLog(slots, eps)


def eval_zero_padded(agent: DreemAgent, episode: Episode, env_cfg: ScenarioConfig,
                     rng=None) -> EpisodeLog:
    """Greedy evaluation of a larger trained agent on a smaller scenario."""
    M, K = episode.H.shape[1:]
    if M > agent.M or K > agent.K:
        raise ValueError(f"scenario ({M}, {K}) exceeds the agent's ({agent.M}, {agent.K})")
    return run_episode(agent, episode, env_cfg, mode="eval", rng=rng)


@dataclass
class TrainingRecord:
    episode: int
    epsilon: float
    mean_reward: float
    mean_p_tot: float
    n_infeasible: int
    mean_size_A_F: float
    mean_size_A_D: float
    loss_f: float
    loss_e: float
    loss_q: float


def train_agent(agent: DreemAgent, env_cfg: ScenarioConfig, episodes: int,
                seeds: list[int], on_episode: Callable | None = None) -> list[TrainingRecord]:
    """Run ``episodes`` training episodes (one env seed each) and return curves."""
    if len(seeds) < episodes:
        raise ValueError("need one environment seed per episode")
    cfg = agent.cfg
    records = []
    for i in range(episodes):
        agent.epsilon = cfg.epsilon(i, episodes)
        ep = generate_episode(env_cfg, np.random.default_rng(seeds[i]))
        log = run_episode(agent, ep, env_cfg, mode="train")
        losses = []
        for _ in range(cfg.updates_per_episode):
            out = train_step(agent)
            if out is not None:
                losses.append(out)
        agent.episodes_trained += 1
        if agent.w_target is not None and agent.episodes_trained % cfg.target_sync == 0:
            agent.w_target = agent.w.copy()
        nan = float("nan")
        mean = lambda key: float(np.mean([l[key] for l in losses])) if losses else nan
        rec = TrainingRecord(
            i, agent.epsilon, float(np.mean([s.reward for s in log.slots])), log.mean_power,
            log.n_infeasible, float(np.mean([s.size_A_F for s in log.slots])),
            float(np.mean([s.size_A_D for s in log.slots])),
            mean("loss_f"), mean("loss_e"), mean("loss_q"))
        records.append(rec)
        if on_episode is not None:
            on_episode(rec)
    return records


# --------------------------------------------------------------------------
# checkpoints

def save_agent(agent: DreemAgent, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    h = agent.config_hash()
    rng_state = agent.rng.bit_generator.state
    nn.save_checkpoint(d / "theta_f.json", agent.theta_f, agent.opt_f, rng_state, h)
    nn.save_checkpoint(d / "theta_e.json", agent.theta_e, agent.opt_e, rng_state, h)
    nn.save_checkpoint(d / "w.json", agent.w, agent.opt_q, rng_state, h)
    if agent.w_target is not None:
        nn.save_checkpoint(d / "w_target.json", agent.w_target, None, rng_state, h)
    manifest = {"config_hash": h, "M": agent.M, "K": agent.K, "sigma2": agent.sigma2,
                "use_dsn": agent.use_dsn, "agent": agent.cfg.to_dict(),
                "episodes_trained": agent.episodes_trained, "epsilon": agent.epsilon,
                "rng_state": rng_state}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_agent(directory) -> DreemAgent:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    agent = DreemAgent(man["M"], man["K"], man["sigma2"], AgentConfig.from_dict(man["agent"]),
                       use_dsn=man["use_dsn"])
    if agent.config_hash() != man["config_hash"]:
        raise ValueError("checkpoint manifest does not match its configuration")
    agent.theta_f, agent.opt_f, _, _ = nn.load_checkpoint(d / "theta_f.json")
    agent.theta_e, agent.opt_e, _, _ = nn.load_checkpoint(d / "theta_e.json")
    agent.w, agent.opt_q, _, _ = nn.load_checkpoint(d / "w.json")
    if agent.w_target is not None:
        agent.w_target = nn.load_checkpoint(d / "w_target.json")[0]
    agent.episodes_trained = man["episodes_trained"]
    agent.epsilon = man["epsilon"]
    agent.rng.bit_generator.state = man["rng_state"]
    return agent


def make_agent(env_cfg: ScenarioConfig, agent_cfg: AgentConfig, seed: int,
               use_dsn: bool = True) -> DreemAgent:
    return DreemAgent(env_cfg.M, env_cfg.K, noise_power(env_cfg), agent_cfg, seed, use_dsn)
