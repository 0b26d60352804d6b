"""Training, evaluation sweeps, rollouts and export utilities."""
from .config import ConfigError, RunConfig, ThrustMapping, load_config, save_config
from .experiment import evaluate, simulate, sweep_points, test_stand_mode, thrust_command
from .rollout import RolloutResult, oracle_policy, rollout
from .train import TrainingDiverged, TrainResult, train
