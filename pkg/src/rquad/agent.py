"""Action-robust DDPG: actor, adversary and critic trained against each other.

Plain DDPG is the same loop with the adversary removed and ``alpha = 0``.
Every source of randomness has its own stream spawned from the seed, so
removing the adversary does not shift any other random draw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from . import env as quad_env
from . import nn
from .env import ACTION_DIM, OBS_DIM, EnvConfig
from .nn import AdamState, DivergenceError, MlpParams


ALGORITHMS = ("ar-ddpg", "ddpg")

# Order matters: streams are spawned from the seed in this order.
STREAMS = ("init_actor", "init_adversary", "init_critic", "env", "mixing", "noise", "replay", "babble")
EVAL_STREAM_KEY = 0x45564C  # keeps evaluation draws out of the training streams


@dataclass(frozen=True)
class Hyperparams:
    total_iterations: int = 2_000_000
    lr_actor: float = 2e-5
    lr_critic: float = 2e-4
    gamma: float = 0.95
    batch_size: int = 64
    alpha: float = 0.1
    buffer_capacity: int = 800_000
    policy_steps: int = 20
    tau: float = 0.005
    babble_episodes: int = 500
    hidden_sizes: tuple = (64, 64)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.05
    outer_critic_update: bool = True
    eval_interval: int = 10_000
    eval_episodes: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        checks = [
            ("gamma", 0.0 <= self.gamma < 1.0, "0 <= gamma < 1"),
            ("alpha", 0.0 <= self.alpha <= 1.0, "0 <= alpha <= 1"),
            ("tau", 0.0 < self.tau <= 1.0, "0 < tau <= 1"),
            ("policy_steps", self.policy_steps >= 1, ">= 1"),
            ("batch_size", self.batch_size >= 1, ">= 1"),
            ("buffer_capacity", self.buffer_capacity >= 1, ">= 1"),
            ("total_iterations", self.total_iterations >= 1, ">= 1"),
            ("babble_episodes", self.babble_episodes >= 0, ">= 0"),
            ("lr_actor", self.lr_actor > 0, "> 0"),
            ("lr_critic", self.lr_critic > 0, "> 0"),
            ("ou_theta", self.ou_theta > 0, "> 0"),
            ("ou_sigma", self.ou_sigma >= 0, ">= 0"),
            ("ou_sigma_final", self.ou_sigma_final >= 0, ">= 0"),
            ("eval_interval", self.eval_interval >= 1, ">= 1"),
            ("eval_episodes", self.eval_episodes >= 0, ">= 0"),
            ("hidden_sizes", all(h >= 1 for h in self.hidden_sizes), "positive widths"),
        ]
        for name, ok, rule in checks:
            if not ok:
                raise ValueError(f"{name}: must satisfy {rule}, got {getattr(self, name)}")


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


def eval_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, EVAL_STREAM_KEY, index])))


# ---------------------------------------------------------------- replay


class Transition(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    reward: float
    done: bool


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM, action_dim: int = ACTION_DIM):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.obs = np.empty((capacity, obs_dim))
        self.actions = np.empty((capacity, action_dim))
        self.next_obs = np.empty((capacity, obs_dim))
        self.rewards = np.empty(capacity)
        self.dones = np.empty(capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> "ReplayBuffer":
        i = self._next
        self.obs[i] = t.obs
        self.actions[i] = t.action
        self.next_obs[i] = t.next_obs
        self.rewards[i] = t.reward
        self.dones[i] = float(t.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self

    def __getitem__(self, k: int) -> Transition:
        """k-th oldest stored transition."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        i = (self._next - self.size + k) % self.capacity
        return Transition(
            self.obs[i].copy(), self.actions[i].copy(), self.next_obs[i].copy(),
            float(self.rewards[i]), bool(self.dones[i]),
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draws with replacement over the stored entries."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        # storage slots [0, size) are exactly the live entries in both regimes
        return Batch(self.obs[idx], self.actions[idx], self.next_obs[idx], self.rewards[idx], self.dones[idx])


# ---------------------------------------------------------------- exploration


@dataclass(frozen=True)
class OuNoise:
    theta: float = 0.15
    sigma: float = 0.2
    value: np.ndarray = field(default_factory=lambda: np.zeros(ACTION_DIM))

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def reset(self) -> "OuNoise":
        return replace(self, value=np.zeros_like(self.value))


def ou_sample(noise: OuNoise, dt: float, rng: np.random.Generator) -> tuple[np.ndarray, OuNoise]:
    """Euler-Maruyama step of a zero-mean Ornstein-Uhlenbeck process."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    x = noise.value
    x = x - noise.theta * x * dt + noise.sigma * math.sqrt(dt) * rng.standard_normal(x.shape)
    return x, replace(noise, value=x)


def mixed_action(obs, actor: MlpParams, adversary: Optional[MlpParams], alpha: float, rng) -> np.ndarray:
    """Actor output with probability 1 - alpha, adversary output otherwise.

    At alpha 0 or 1 the outcome is certain and no random number is drawn.
    """
    if adversary is None or alpha <= 0.0:
        return nn.predict(actor, obs)
    if alpha >= 1.0:
        return nn.predict(adversary, obs)
    if rng.random() < alpha:
        return nn.predict(adversary, obs)
    return nn.predict(actor, obs)


# ---------------------------------------------------------------- updates


def _critic_input(obs, actions):
    return np.concatenate([obs, actions], axis=1)


def q_values(critic: MlpParams, obs, actions) -> np.ndarray:
    return nn.predict(critic, _critic_input(obs, actions))[:, 0]


def critic_target(
    batch: Batch,
    actor_t: MlpParams,
    adversary_t: Optional[MlpParams],
    critic_t: MlpParams,
    alpha: float,
    gamma: float,
) -> np.ndarray:
    """Bootstrapped targets mixing the actor and adversary target policies."""
    s2 = batch.next_obs
    q_mix = q_values(critic_t, s2, nn.predict(actor_t, s2))
    if adversary_t is not None:
        q_adv = q_values(critic_t, s2, nn.predict(adversary_t, s2))
        q_mix = (1.0 - alpha) * q_mix + alpha * q_adv
    return batch.rewards + gamma * (1.0 - batch.dones) * q_mix


def critic_gradient(critic: MlpParams, batch: Batch, targets) -> tuple[nn.MlpGrads, float]:
    """Gradient of the mean squared Bellman error; returns (grads, loss)."""
    if len(targets) != len(batch):
        raise ValueError(f"{len(targets)} targets for a batch of {len(batch)}")
    q, cache = nn.mlp_forward(critic, _critic_input(batch.obs, batch.actions))
    diff = q[:, 0] - targets
    loss = float(np.mean(diff * diff))
    if not math.isfinite(loss):
        raise DivergenceError(f"critic loss became {loss}")
    grads = nn.mlp_backward(critic, cache, (2.0 / len(diff)) * diff[:, None])
    return grads, loss


def critic_update(
    critic: MlpParams, adam: AdamState, batch: Batch, targets, lr: float
) -> tuple[MlpParams, AdamState, float]:
    grads, loss = critic_gradient(critic, batch, targets)
    critic, adam = nn.adam_step(critic, grads, adam, lr)
    return critic, adam, loss


def policy_gradient(policy: MlpParams, critic: MlpParams, obs, scale: float) -> tuple[nn.MlpGrads, float]:
    """Gradient of ``scale * sum_s Q(s, policy(s))`` w.r.t. the policy.

    Returns the gradient and the batch mean of Q. The critic is read only.
    """
    actions, cache_p = nn.mlp_forward(policy, obs)
    q, cache_q = nn.mlp_forward(critic, _critic_input(obs, actions))
    dq = nn.mlp_backward(critic, cache_q, np.full(q.shape, scale), inputs_only=True)
    da = dq.inputs[:, obs.shape[1]:]
    return nn.mlp_backward(policy, cache_p, da), float(q.mean())


def actor_gradient(actor, critic, obs, alpha) -> tuple[nn.MlpGrads, float]:
    """Descent direction for the actor: minus the (1 - alpha)-weighted mean Q."""
    grads, mean_q = policy_gradient(actor, critic, obs, -(1.0 - alpha) / len(obs))
    return grads, (1.0 - alpha) * mean_q


def adversary_gradient(adversary, critic, obs, alpha) -> tuple[nn.MlpGrads, float]:
    grads, mean_q = policy_gradient(adversary, critic, obs, alpha / len(obs))
    return grads, alpha * mean_q


def actor_update(actor, adam, critic, batch: Batch, alpha, lr):
    """Gradient ascent on (1 - alpha) mean Q(s, actor(s)); returns (actor, adam, objective)."""
    grads, objective = actor_gradient(actor, critic, batch.obs, alpha)
    actor, adam = nn.adam_step(actor, grads, adam, lr)
    return actor, adam, objective


def adversary_update(adversary, adam, critic, batch: Batch, alpha, lr):
    """Gradient descent on alpha mean Q(s, adversary(s)); returns (adversary, adam, objective)."""
    grads, objective = adversary_gradient(adversary, critic, batch.obs, alpha)
    adversary, adam = nn.adam_step(adversary, grads, adam, lr)
    return adversary, adam, objective


# ---------------------------------------------------------------- training


@dataclass
class LogRow:
    step: int
    episode: int
    ret: float
    critic_loss: float
    actor_objective: float
    adversary_objective: float
    phase: str

    HEADER = "step,episode,return,critic_loss,actor_objective,adversary_objective,phase"

    def to_csv(self) -> str:
        return ",".join(
            [
                str(self.step),
                str(self.episode),
                repr(float(self.ret)),
                repr(float(self.critic_loss)),
                repr(float(self.actor_objective)),
                repr(float(self.adversary_objective)),
                self.phase,
            ]
        )


@dataclass
class TrainResult:
    networks: Dict[str, MlpParams]
    log: List[LogRow]
    steps: int

    def returns(self, phase: str) -> List[tuple]:
        return [(r.step, r.ret) for r in self.log if r.phase == phase]

    @property
    def babble_mean_return(self) -> float:
        rets = [r for _, r in self.returns("babble")]
        return float(np.mean(rets)) if rets else float("nan")

    def final_eval_mean_return(self, fraction: float = 0.1) -> float:
        """Mean evaluation return over the last ``fraction`` of the step budget."""
        cutoff = (1.0 - fraction) * self.steps
        rets = [r for s, r in self.returns("eval") if s >= cutoff]
        return float(np.mean(rets)) if rets else float("nan")

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(LogRow.HEADER + "\n")
            for row in self.log:
                fh.write(row.to_csv() + "\n")


def init_networks(hp: Hyperparams, streams, with_adversary: bool) -> Dict[str, MlpParams]:
    policy_dims = (OBS_DIM, *hp.hidden_sizes, ACTION_DIM)
    critic_dims = (OBS_DIM + ACTION_DIM, *hp.hidden_sizes, 1)
    nets = {
        "actor": nn.init_mlp(policy_dims, streams["init_actor"], "tanh", final_scale=1e-3),
        "critic": nn.init_mlp(critic_dims, streams["init_critic"], "linear"),
    }
    if with_adversary:
        nets["adversary"] = nn.init_mlp(policy_dims, streams["init_adversary"], "tanh", final_scale=1e-3)
    return nets


def train(
    hp: Hyperparams,
    config: EnvConfig = EnvConfig(),
    algorithm: str = "ar-ddpg",
    callback: Optional[Callable[[LogRow], None]] = None,
) -> TrainResult:
    """Run babbling followed by (AR-)DDPG until ``hp.total_iterations`` env steps.

    Babbling steps count towards the budget. ``algorithm="ddpg"`` drops the
    adversary and forces ``alpha = 0``.
    """
    # local import: evaluation depends on the network code only
    from .evaluate import episode_return

    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    robust = algorithm == "ar-ddpg"
    alpha = hp.alpha if robust else 0.0
    streams = rng_streams(hp.seed)
    nets = init_networks(hp, streams, with_adversary=robust)
    actor, critic = nets["actor"], nets["critic"]
    adversary = nets.get("adversary")
    actor_t, critic_t = actor.copy(), critic.copy()
    adversary_t = adversary.copy() if robust else None
    adam = dict(
        actor=AdamState.zeros_like(actor, hp.adam_beta1, hp.adam_beta2),
        critic=AdamState.zeros_like(critic, hp.adam_beta1, hp.adam_beta2),
    )
    if robust:
        adam["adversary"] = AdamState.zeros_like(adversary, hp.adam_beta1, hp.adam_beta2)

    params, task = config.params, config.task
    buffer = ReplayBuffer(min(hp.buffer_capacity, hp.total_iterations))
    rows: List[LogRow] = []
    step = 0
    episode = 0
    critic_loss = actor_obj = adv_obj = float("nan")

    def emit(row: LogRow):
        rows.append(row)
        if callback is not None:
            callback(row)

    env_rng = streams["env"]
    for _ in range(hp.babble_episodes):
        if step >= hp.total_iterations:
            break
        state = quad_env.reset(task, env_rng, params)
        obs = quad_env.observe(state, task)
        ret, t, done = 0.0, 0, False
        while not done and step < hp.total_iterations:
            a = streams["babble"].uniform(-1.0, 1.0, size=ACTION_DIM)
            state, obs2, r, done = quad_env.env_step(state, a, t, config, env_rng, plant=params)
            buffer.push(Transition(obs, a, obs2, r, done))
            obs, ret, t, step = obs2, ret + r, t + 1, step + 1
        emit(LogRow(step, episode, ret, critic_loss, actor_obj, adv_obj, "babble"))
        episode += 1

    babble_steps = step
    train_budget = max(1, hp.total_iterations - babble_steps)
    noise = OuNoise(hp.ou_theta, hp.ou_sigma)
    n_evals = 0

    def evaluate():
        nonlocal n_evals
        for _ in range(hp.eval_episodes):
            ret = episode_return(actor, config, eval_rng(hp.seed, n_evals))
            n_evals += 1
            emit(LogRow(step, episode, ret, critic_loss, actor_obj, adv_obj, "eval"))

    while step < hp.total_iterations:
        state = quad_env.reset(task, env_rng, params)
        obs = quad_env.observe(state, task)
        noise = noise.reset()
        ret, t, done = 0.0, 0, False
        while not done and step < hp.total_iterations:
            progress = min(1.0, (step - babble_steps) / train_budget)
            noise = replace(noise, sigma=hp.ou_sigma + (hp.ou_sigma_final - hp.ou_sigma) * progress)
            a = mixed_action(obs, actor, adversary, alpha, streams["mixing"])
            eps, noise = ou_sample(noise, params.dt, streams["noise"])
            a = np.clip(a + eps, -1.0, 1.0)
            state, obs2, r, done = quad_env.env_step(state, a, t, config, env_rng, plant=params)
            buffer.push(Transition(obs, a, obs2, r, done))
            obs, ret, t, step = obs2, ret + r, t + 1, step + 1

            for _ in range(hp.policy_steps):
                batch = buffer.sample(hp.batch_size, streams["replay"])
                actor, adam["actor"], actor_obj = actor_update(
                    actor, adam["actor"], critic, batch, alpha, hp.lr_actor
                )
                y = critic_target(batch, actor_t, adversary_t, critic_t, alpha, hp.gamma)
                critic, adam["critic"], critic_loss = critic_update(
                    critic, adam["critic"], batch, y, hp.lr_critic
                )
            if hp.outer_critic_update:
                batch = buffer.sample(hp.batch_size, streams["replay"])
                if robust:
                    adversary, adam["adversary"], adv_obj = adversary_update(
                        adversary, adam["adversary"], critic, batch, alpha, hp.lr_actor
                    )
                y = critic_target(batch, actor_t, adversary_t, critic_t, alpha, hp.gamma)
                critic, adam["critic"], critic_loss = critic_update(
                    critic, adam["critic"], batch, y, hp.lr_critic
                )
            elif robust:
                batch = buffer.sample(hp.batch_size, streams["replay"])
                adversary, adam["adversary"], adv_obj = adversary_update(
                    adversary, adam["adversary"], critic, batch, alpha, hp.lr_actor
                )

            actor_t = nn.soft_update(actor_t, actor, hp.tau)
            critic_t = nn.soft_update(critic_t, critic, hp.tau)
            if robust:
                adversary_t = nn.soft_update(adversary_t, adversary, hp.tau)

            if step % hp.eval_interval == 0 or step == hp.total_iterations:
                evaluate()
        emit(LogRow(step, episode, ret, critic_loss, actor_obj, adv_obj, "train"))
        episode += 1

    for name, net in (("actor", actor), ("critic", critic), ("adversary", adversary)):
        if net is not None and not net.is_finite():
            raise DivergenceError(f"{name} parameters became non-finite by step {step}")

    networks = {"actor": actor}
    if robust:
        networks["adversary"] = adversary
    networks["critic"] = critic
    networks["actor_target"] = actor_t
    if robust:
        networks["adversary_target"] = adversary_t
    networks["critic_target"] = critic_t
    return TrainResult(networks, rows, step)
