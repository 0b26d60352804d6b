"""Soft Actor-Critic with a state-value network, a soft Q network and a
tanh-squashed Gaussian policy; every gradient is computed by hand.

Losses (batch means):

* value:  ``1/2 (V(s) - [Q(s, a~) - alpha log pi(a~|s)])^2``
* Q:      ``1/2 (Q(s, a) - [r + gamma (1 - done) Vbar(s')])^2``
* policy: ``alpha log pi(a~|s) - Q(s, a~)`` with ``a~ = scale * tanh(mu + sigma eps)``

The bracketed targets are constants for their respective losses.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import Adam, Mlp
from .replay import Batch, ReplayBuffer, Transition

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

CHECKPOINT_FORMAT = "cotransport-sac"
CHECKPOINT_VERSION = 1


class NonFiniteLoss(FloatingPointError):
    """A loss or gradient became NaN/Inf during an update."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SacConfig:
    lr: float = 3e-4
    gamma: float = 0.99
    alpha: float = 0.3
    replay_capacity: int = 1_000_000
    batch_size: int = 256
    hidden: tuple = (256, 256)
    polyak_tau: float = 0.005
    seed: int = 0
    warmup_steps: int = 1000
    # environment steps between update rounds, and updates per round
    update_every: int = 1
    updates_per_round: int = 1
    twin_q: bool = False
    activation: str = "relu"
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.polyak_tau <= 1.0:
            raise ValueError("polyak_tau must lie in [0, 1]")
        if self.update_every < 1 or self.updates_per_round < 0:
            raise ValueError("update cadence must be positive")

    def replace(self, **changes) -> "SacConfig":
        return dataclasses.replace(self, **changes)


def _log1m_tanh_sq(u):
    # log(1 - tanh(u)^2) without cancellation
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class PolicyPass:
    action: np.ndarray
    log_prob: np.ndarray
    mean: np.ndarray
    log_std: np.ndarray
    std: np.ndarray
    noise: np.ndarray
    tanh_u: np.ndarray
    in_range: np.ndarray
    scale: np.ndarray
    cache: tuple = field(repr=False)

    @property
    def unit_action(self) -> np.ndarray:
        return self.tanh_u


def policy_forward(policy: Mlp, s, noise=None, scale=1.0) -> PolicyPass:
    out, cache = policy.forward(s)
    act_dim = out.shape[-1] // 2
    mean = out[..., :act_dim]
    raw = out[..., act_dim:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    in_range = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
    std = np.exp(log_std)
    eps = np.zeros_like(mean) if noise is None else np.asarray(noise, dtype=mean.dtype).reshape(mean.shape)
    u = mean + std * eps
    t = np.tanh(u)
    scale = np.broadcast_to(np.asarray(scale, dtype=mean.dtype), (act_dim,))
    log_prob = np.sum(-0.5 * eps * eps - log_std - HALF_LOG_2PI - _log1m_tanh_sq(u) - np.log(scale), axis=-1)
    return PolicyPass(scale * t, log_prob, mean, log_std, std, eps, t, in_range, scale, cache)


def policy_backward(policy: Mlp, ps: PolicyPass, grad_action, grad_log_prob):
    """Parameter gradients of ``sum(grad_action * a) + sum(grad_log_prob * log_pi)``."""
    g_lp = np.asarray(grad_log_prob, dtype=ps.mean.dtype)[..., None]
    t = ps.tanh_u
    g_u = grad_action * ps.scale * (1.0 - t * t) + g_lp * 2.0 * t
    g_log_std = (g_u * ps.std * ps.noise - g_lp) * ps.in_range
    grads, _ = policy.backward(ps.cache, np.concatenate([g_u, g_log_std], axis=-1))
    return grads


def policy_sample(policy: Mlp, s, noise=None, scale=1.0):
    """Reparameterized action and its log-density.

    ``noise=None`` gives the deterministic action ``scale * tanh(mean)``.
    """
    ps = policy_forward(policy, s, noise, scale)
    return ps.action, ps.log_prob


def _as_list(q):
    return list(q) if isinstance(q, (list, tuple)) else [q]


def _q_input(s, a):
    return np.concatenate([s, a], axis=-1)


@dataclass
class SampledCritique:
    """Policy sample on ``s`` together with every Q head evaluated at it."""

    ps: PolicyPass
    q_values: np.ndarray  # (n_q, B)
    q_caches: list
    q_min: np.ndarray
    argmin: np.ndarray


def critique_sample(policy: Mlp, q, s, noise, scale=1.0) -> SampledCritique:
    ps = policy_forward(policy, s, noise, scale)
    x = _q_input(s, ps.action)
    values, caches = [], []
    for net in _as_list(q):
        y, cache = net.forward(x)
        values.append(y[:, 0])
        caches.append(cache)
    values = np.stack(values)
    argmin = np.argmin(values, axis=0)
    return SampledCritique(ps, values, caches, values.min(axis=0), argmin)


def value_loss(value: Mlp, q, policy: Mlp, batch: Batch, alpha: float, noise, scale=1.0, sampled=None):
    """Returns ``(loss, grads)`` with grads matching ``value.params``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    sc = sampled or critique_sample(policy, q, batch.s, noise, scale)
    target = sc.q_min - alpha * sc.ps.log_prob
    v, cache = value.forward(batch.s)
    diff = v[:, 0] - target
    n = len(diff)
    loss = 0.5 * float(np.mean(diff * diff))
    grads, _ = value.backward(cache, (diff / n)[:, None])
    return loss, grads


def q_loss(q, target_value: Mlp, batch: Batch, gamma: float):
    """Returns ``(loss, grads)``; for a list of Q nets the loss is summed and
    ``grads`` is a list with one entry per net."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    v_next = target_value(batch.s_next)[:, 0]
    target = batch.r + gamma * (1.0 - batch.done) * v_next
    x = _q_input(batch.s, batch.a)
    total, all_grads = 0.0, []
    n = len(batch)
    for net in _as_list(q):
        y, cache = net.forward(x)
        diff = y[:, 0] - target
        total += 0.5 * float(np.mean(diff * diff))
        grads, _ = net.backward(cache, (diff / n)[:, None])
        all_grads.append(grads)
    if isinstance(q, (list, tuple)):
        return total, all_grads
    return total, all_grads[0]


def policy_loss(policy: Mlp, q, batch: Batch, alpha: float, noise, scale=1.0, sampled=None):
    """Reparameterized surrogate; returns ``(loss, grads)`` for ``policy.params``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    sc = sampled or critique_sample(policy, q, batch.s, noise, scale)
    n = len(sc.q_min)
    loss = float(np.mean(alpha * sc.ps.log_prob - sc.q_min))
    obs_dim = batch.s.shape[-1]
    g_action = np.zeros_like(sc.ps.action)
    for i, (net, cache) in enumerate(zip(_as_list(q), sc.q_caches)):
        chosen = (sc.argmin == i).astype(sc.ps.action.dtype)
        if not chosen.any():
            continue
        _, dx = net.backward(cache, (-chosen / n)[:, None], param_grads=False, input_grad=True)
        g_action += dx[:, obs_dim:]
    g_lp = np.full(n, alpha / n, dtype=sc.ps.action.dtype)
    return loss, policy_backward(policy, sc.ps, g_action, g_lp)


class SacAgent:
    """Networks, optimizers, replay and RNG of one SAC learner."""

    def __init__(self, obs_dim: int, act_dim: int, action_scale=1.0, config: SacConfig | None = None):
        self.config = config or SacConfig()
        cfg = self.config
        self.obs_dim, self.act_dim = int(obs_dim), int(act_dim)
        self.dtype = np.dtype(cfg.dtype)
        self.action_scale = np.broadcast_to(np.asarray(action_scale, dtype=float), (self.act_dim,)).copy()
        self.rng = np.random.default_rng(cfg.seed)
        hidden = list(cfg.hidden)
        make = lambda sizes: Mlp(sizes, cfg.activation, self.rng, self.dtype)  # noqa: E731
        self.value = make([obs_dim, *hidden, 1])
        self.qs = [make([obs_dim + act_dim, *hidden, 1]) for _ in range(2 if cfg.twin_q else 1)]
        self.policy = make([obs_dim, *hidden, 2 * act_dim])
        self.target_value = self.value.copy()
        self.value_opt = Adam(self.value.params, cfg.lr)
        self.q_opts = [Adam(q.params, cfg.lr) for q in self.qs]
        self.policy_opt = Adam(self.policy.params, cfg.lr)
        self.replay = ReplayBuffer(cfg.replay_capacity, obs_dim, act_dim, self.dtype)
        self.total_steps = 0
        self.updates = 0

    @property
    def q(self):
        return self.qs if self.config.twin_q else self.qs[0]

    def act(self, obs, deterministic: bool = False):
        """Return ``(scaled_action, unit_action)`` for one observation."""
        obs = np.asarray(obs, dtype=self.dtype)
        noise = None if deterministic else self.rng.standard_normal(self.act_dim)
        ps = policy_forward(self.policy, obs, noise, self.action_scale.astype(self.dtype))
        return ps.action.astype(float), ps.unit_action.astype(float)

    def random_action(self):
        unit = self.rng.uniform(-1.0, 1.0, size=self.act_dim)
        return self.action_scale * unit, unit

    def observe(self, transition: Transition):
        self.replay.push(transition)
        self.total_steps += 1

    def should_update(self) -> bool:
        cfg = self.config
        return (
            self.total_steps >= cfg.warmup_steps
            and len(self.replay) >= cfg.batch_size
            and self.total_steps % cfg.update_every == 0
        )

    def sample_batch(self) -> Batch:
        return self.replay.sample(self.config.batch_size, self.rng)

    def update(self, batch: Batch | None = None) -> dict:
        if batch is None:
            batch = self.sample_batch()
        return sac_update(self, batch)

    def save(self, path, include_replay: bool = False):
        save_checkpoint(self, path, include_replay)

    @classmethod
    def load(cls, path) -> "SacAgent":
        return load_checkpoint(path)


def sac_update(agent: SacAgent, batch: Batch) -> dict:
    """One gradient step on each loss, then Polyak-average the target value net.

    All three losses are evaluated at the pre-update parameters; the value and
    policy losses share one reparameterized sample.
    """
    cfg = agent.config
    batch = batch.astype(agent.dtype)
    scale = agent.action_scale.astype(agent.dtype)
    noise = agent.rng.standard_normal((len(batch), agent.act_dim)).astype(agent.dtype)
    sc = critique_sample(agent.policy, agent.q, batch.s, noise, scale)
    lv, gv = value_loss(agent.value, agent.q, agent.policy, batch, cfg.alpha, noise, scale, sampled=sc)
    lq, gq = q_loss(agent.q, agent.target_value, batch, cfg.gamma)
    lp, gp = policy_loss(agent.policy, agent.q, batch, cfg.alpha, noise, scale, sampled=sc)
    report = {
        "value_loss": lv,
        "q_loss": lq,
        "policy_loss": lp,
        "mean_log_prob": float(np.mean(sc.ps.log_prob)),
        "mean_q": float(np.mean(sc.q_min)),
    }
    gq_list = gq if cfg.twin_q else [gq]
    if not all(np.isfinite(v) for v in report.values()) or not all(
        np.all(np.isfinite(g)) for grads in (gv, gp, *gq_list) for g in grads
    ):
        raise NonFiniteLoss(f"non-finite loss after {agent.updates} updates", report)

    agent.value_opt.step(agent.value.params, gv)
    for net, opt, grads in zip(agent.qs, agent.q_opts, gq_list):
        opt.step(net.params, grads)
    agent.policy_opt.step(agent.policy.params, gp)
    agent.target_value.polyak_from(agent.value, cfg.polyak_tau)
    agent.updates += 1
    return report


def _rng_state_json(rng: np.random.Generator) -> str:
    return json.dumps(rng.bit_generator.state)


def save_checkpoint(agent: SacAgent, path, include_replay: bool = False):
    """Write every network, optimizer moment, config and RNG state to ``.npz``."""
    arrays = {}

    def put(prefix, seq):
        for i, a in enumerate(seq):
            arrays[f"{prefix}/{i}"] = a

    put("value", agent.value.params)
    put("target_value", agent.target_value.params)
    put("policy", agent.policy.params)
    put("opt_value", agent.value_opt.state_arrays())
    put("opt_policy", agent.policy_opt.state_arrays())
    for k, (net, opt) in enumerate(zip(agent.qs, agent.q_opts)):
        put(f"q{k}", net.params)
        put(f"opt_q{k}", opt.state_arrays())
    if include_replay:
        for name, arr in agent.replay.state_arrays().items():
            arrays[f"replay/{name}"] = arr
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(agent.config),
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "action_scale": agent.action_scale.tolist(),
        "rng": _rng_state_json(agent.rng),
        "opt_t": {
            "value": agent.value_opt.t,
            "policy": agent.policy_opt.t,
            "q": [opt.t for opt in agent.q_opts],
        },
        "total_steps": agent.total_steps,
        "updates": agent.updates,
        "has_replay": include_replay,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> SacAgent:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(str(arrays["meta"]))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a SAC checkpoint")
    if meta["version"] > CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version {meta['version']} is newer than supported {CHECKPOINT_VERSION}")
    config = SacConfig(**meta["config"])
    agent = SacAgent(meta["obs_dim"], meta["act_dim"], meta["action_scale"], config)

    def take(prefix, n):
        return [arrays[f"{prefix}/{i}"] for i in range(n)]

    n = len(agent.value.params)
    agent.value.params = take("value", n)
    agent.target_value.params = take("target_value", n)
    agent.policy.params = take("policy", len(agent.policy.params))
    agent.value_opt.load_arrays(take("opt_value", 2 * n), meta["opt_t"]["value"])
    agent.policy_opt.load_arrays(take("opt_policy", 2 * len(agent.policy.params)), meta["opt_t"]["policy"])
    for k, (net, opt) in enumerate(zip(agent.qs, agent.q_opts)):
        net.params = take(f"q{k}", len(net.params))
        opt.load_arrays(take(f"opt_q{k}", 2 * len(net.params)), meta["opt_t"]["q"][k])
    if meta.get("has_replay"):
        agent.replay.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("replay/")})
    agent.rng.bit_generator.state = json.loads(meta["rng"])
    agent.total_steps = meta["total_steps"]
    agent.updates = meta["updates"]
    return agent
