"""Experiment orchestration: presets, paired evaluation, sweeps and CSV output."""
from __future__ import annotations

import copy
import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import (AgentConfig, DreemAgent, EpisodeLog, TrainingRecord, all_on_power,
                    load_agent, make_agent, run_episode, save_agent, train_agent)
from .baselines import BASELINES, run_baseline_episode
from .env import ScenarioConfig, desk_scenario, episode_seeds, generate_episode, paper_scenario
from .powermodel import reward

log = logging.getLogger(__name__)

AGENT_METHODS = ("dreem", "vanilla_dqn")
METHODS = AGENT_METHODS + tuple(BASELINES)
SWEEP_AXES = ("r_min", "snr_db", "M")

# seed streams
TRAIN_STREAM, EVAL_STREAM, AGENT_STREAM = 1, 2, 3


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig = field(default_factory=desk_scenario)
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 300
    methods: list = field(default_factory=lambda: ["dreem"])
    out_dir: str = "runs/experiment"
    seed: int = 0
    n_eval: int = 10
    sweep: dict | None = None

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must not be empty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.sweep is not None:
            axis = self.sweep.get("axis")
            if axis not in SWEEP_AXES:
                raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
            for v in self.sweep.get("values", []):
                if axis == "M" and (int(v) != v or v < 1):
                    raise ValueError("M sweep values must be positive integers")
                if axis == "r_min" and not v > 0:
                    raise ValueError("r_min sweep values must be positive")

    def to_dict(self) -> dict:
        return {"scenario": self.scenario.to_dict(), "agent": self.agent.to_dict(),
                "episodes": self.episodes, "methods": list(self.methods),
                "out_dir": str(self.out_dir), "seed": self.seed, "n_eval": self.n_eval,
                "sweep": self.sweep}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["scenario"] = ScenarioConfig.from_dict(d.get("scenario", {}))
        d["agent"] = AgentConfig.from_dict(d.get("agent", {}))
        return cls(**d)


def preset(name: str) -> dict:
    """Experiment documents for the built-in presets (plain dicts, mergeable)."""
    if name == "desk":
        spec = ExperimentSpec(
            scenario=desk_scenario(),
            agent=AgentConfig(p_threshold=38.0, updates_per_episode=25, target_network=True),
            episodes=300, methods=["dreem"])
    elif name == "paper":
        spec = ExperimentSpec(
            scenario=paper_scenario(),
            agent=AgentConfig(hidden=[512] * 4, updates_per_episode=25),
            episodes=2000, methods=list(METHODS))
    else:
        raise ValueError(f"unknown preset {name!r}")
    return spec.to_dict()


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


# --------------------------------------------------------------------------
# metrics

@dataclass
class MetricsRow:
    method: str
    episode: int
    slot: int
    p_tx: float
    p_mode: float
    p_trans: float
    p_tot: float
    reward: float
    n_active: int
    feasible: bool
    size_A_F: int | None
    size_A_D: int | None
    min_rate_margin: float


METRICS_HEADER = [f.name for f in dataclasses.fields(MetricsRow)]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_metrics(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in METRICS_HEADER])
    return path


def read_metrics(path) -> list[MetricsRow]:
    casts = {"method": str, "episode": int, "slot": int, "n_active": int,
             "feasible": lambda s: s == "1",
             "size_A_F": lambda s: int(s) if s else None,
             "size_A_D": lambda s: int(s) if s else None}
    with open(path, newline="") as fh:
        return [MetricsRow(**{k: casts.get(k, float)(v) for k, v in rec.items()})
                for rec in csv.DictReader(fh)]


def _agent_rows(method, episode_idx, elog: EpisodeLog):
    rows = []
    for s in elog.slots:
        bd = s.decision.breakdown
        rows.append(MetricsRow(method, episode_idx, s.t, bd.p_tx, bd.p_mode, bd.p_trans,
                               bd.p_tot, s.reward, s.decision.n_active, s.decision.feasible,
                               s.size_A_F, s.size_A_D, s.min_rate_margin))
    return rows


def _baseline_rows(method, episode_idx, episode, cfg):
    rows = []
    for t, dec in enumerate(run_baseline_episode(method, episode, cfg), start=1):
        bd = dec.breakdown
        rwd = reward(bd, all_on_power(episode, t, cfg), dec.feasible)
        margin = float(np.min(dec.rates - episode.r_min[t]))
        rows.append(MetricsRow(method, episode_idx, t, bd.p_tx, bd.p_mode, bd.p_trans,
                               bd.p_tot, rwd, dec.n_active, dec.feasible, None, None, margin))
    return rows


def summarize(rows) -> dict:
    out = {}
    for method in dict.fromkeys(r.method for r in rows):
        mine = [r for r in rows if r.method == method]
        per_ep = {}
        for r in mine:
            per_ep[r.episode] = per_ep.get(r.episode, 0.0) + r.p_tot
        sizes = [r.size_A_F for r in mine if r.size_A_F is not None]
        out[method] = {
            "mean_power": float(np.mean([r.p_tot for r in mine])),
            "mean_instantaneous_power": float(np.mean([r.p_tx + r.p_mode for r in mine])),
            "mean_energy_per_episode": float(np.mean(list(per_ep.values()))),
            "feasible_fraction": float(np.mean([r.feasible for r in mine])),
            "mean_active": float(np.mean([r.n_active for r in mine])),
            "mean_size_A_F": float(np.mean(sizes)) if sizes else None,
            "slots": len(mine),
        }
    return out


def write_training(records: dict, path) -> None:
    fields = ["method"] + [f.name for f in dataclasses.fields(TrainingRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for method, recs in records.items():
            for rec in recs:
                w.writerow([method] + [_fmt(getattr(rec, f)) for f in fields[1:]])


# --------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentResult:
    out_dir: Path
    rows: list
    summary: dict
    training: dict
    agents: dict
    failed: dict


def eval_episodes(spec: ExperimentSpec):
    return [generate_episode(spec.scenario, np.random.default_rng(s))
            for s in episode_seeds(spec.seed, spec.n_eval, EVAL_STREAM)]


def evaluate_agent(agent: DreemAgent, method: str, episodes, cfg) -> list[MetricsRow]:
    rows = []
    for i, ep in enumerate(episodes):
        rows += _agent_rows(method, i, run_episode(agent, ep, cfg, mode="eval"))
    return rows


def run_experiment(spec: ExperimentSpec, *, write: bool = True) -> ExperimentResult:
    """Train and evaluate every requested method on one shared seeded stream.

    A failing method is recorded under ``failed`` and the remaining methods
    still run.
    """
    out = Path(spec.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(spec.to_dict(), indent=2))
    cfg = spec.scenario
    episodes = eval_episodes(spec)
    train_seeds = episode_seeds(spec.seed, spec.episodes, TRAIN_STREAM)
    agent_seed = episode_seeds(spec.seed, 1, AGENT_STREAM)[0]

    rows, training, agents, failed = [], {}, {}, {}
    for method in spec.methods:
        try:
            if method in AGENT_METHODS:
                agent = make_agent(cfg, spec.agent, agent_seed, use_dsn=(method == "dreem"))
                training[method] = train_agent(agent, cfg, spec.episodes, train_seeds)
                agents[method] = agent
                if write:
                    save_agent(agent, out / "checkpoints" / method)
                rows += evaluate_agent(agent, method, episodes, cfg)
            else:
                for i, ep in enumerate(episodes):
                    rows += _baseline_rows(method, i, ep, cfg)
        except Exception as exc:  # keep the other methods running
            log.exception("method %s failed", method)
            failed[method] = f"{type(exc).__name__}: {exc}"

    summary = summarize(rows)
    if write:
        emit_metrics(rows, out / "metrics.csv")
        if training:
            write_training(training, out / "training.csv")
        doc = {"methods": summary, "failed": failed, "partial": bool(failed)}
        (out / "summary.json").write_text(json.dumps(doc, indent=2))
    return ExperimentResult(out, rows, summary, training, agents, failed)


def evaluate_checkpoint(checkpoint, spec: ExperimentSpec, method: str = "dreem",
                        write: bool = True) -> ExperimentResult:
    agent = load_agent(checkpoint)
    episodes = eval_episodes(spec)
    rows = evaluate_agent(agent, method, episodes, spec.scenario)
    out = Path(spec.out_dir)
    summary = summarize(rows)
    if write:
        emit_metrics(rows, out / "metrics.csv")
        (out / "config.json").write_text(json.dumps(spec.to_dict(), indent=2))
        (out / "summary.json").write_text(json.dumps({"methods": summary}, indent=2))
    return ExperimentResult(out, rows, summary, {}, {method: agent}, {})


def sweep_point(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    scn = spec.scenario
    if axis == "r_min":
        scn = scn.replace(r_min=float(value), r_min_range=None)
    elif axis == "snr_db":
        scn = scn.replace(snr_db=float(value))
    elif axis == "M":
        m = int(value)
        scn = scn.replace(M=m, K=max(1, m // 2))
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    out = Path(spec.out_dir) / f"{axis}={value}"
    return dataclasses.replace(spec, scenario=scn, out_dir=str(out), sweep=None)


def _run_point(args):
    spec_dict, axis, value = args
    res = run_experiment(sweep_point(ExperimentSpec.from_dict(spec_dict), axis, value))
    return value, res.summary, res.failed


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("DREEM_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(spec: ExperimentSpec) -> dict:
    """One experiment per sweep value, each in its own subdirectory."""
    if spec.sweep is None:
        raise ValueError("spec has no sweep")
    axis, values = spec.sweep["axis"], spec.sweep["values"]
    jobs = [(spec.to_dict(), axis, v) for v in values]
    workers = min(max_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    table = {str(v): {"methods": s, "failed": f} for v, s, f in results}
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps({"axis": axis, "points": table}, indent=2))
    return table
