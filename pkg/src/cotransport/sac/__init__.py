"""Soft Actor-Critic built on hand-differentiated numpy networks."""
from .agent import (
    NonFiniteLoss,
    SacAgent,
    SacConfig,
    critique_sample,
    load_checkpoint,
    policy_backward,
    policy_forward,
    policy_loss,
    policy_sample,
    q_loss,
    sac_update,
    save_checkpoint,
    value_loss,
)
from .nn import Adam, Mlp, mlp_eval_grad
from .replay import Batch, ReplayBuffer, Transition
