"""Energy-aware base-station active/sleep control for ultra-dense networks.

A DQN picks which base stations stay awake each slot; a pair of learned
regressors prunes mode vectors predicted to break rate requirements or to
burn too much power before the Q-value argmax.
"""
from .agent import AgentConfig, DreemAgent, dsn_filter, run_episode, select_action, train_step
from .baselines import exhaustive_onoff, full_association, sequential_onoff
from .env import ScenarioConfig, build_state, generate_episode, noise_power, path_loss_db
from .lp import LpProblem, LpStatus, allocate_power, feasibility_value, solve_lp
from .powermodel import PowerBreakdown, compute_rates, power_breakdown, reward

__version__ = "0.1.0"
