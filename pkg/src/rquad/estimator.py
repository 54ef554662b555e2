"""scikit-learn style front end for the training loop.

``fit`` trains a controller in simulation (there is no dataset, ``X`` and
``y`` are accepted and ignored so the estimator drops into sklearn tooling),
``predict`` maps observation rows to normalised rotor actions and
``score`` is the mean nominal episode return.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import agent, nn
from .env import ACTION_DIM, OBS_DIM, EnvConfig, RewardCoeffs, TaskConfig
from .evaluate import Heatmap, PerturbGrid, episode_return, sweep
from .sim import QuadParams


def check_observations(X) -> np.ndarray:
    """Validate a batch of observations: 2-D, finite, float64, 18 columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != OBS_DIM:
        raise ValueError(f"observations need {OBS_DIM} features, got {X.shape[1]}")
    return X


def check_actions(A) -> np.ndarray:
    A = check_array(A, dtype=np.float64, ensure_2d=True)
    if A.shape[1] != ACTION_DIM:
        raise ValueError(f"actions need {ACTION_DIM} columns, got {A.shape[1]}")
    if A.min() < -1.0 or A.max() > 1.0:
        raise ValueError("normalised actions must lie in [-1, 1]")
    return A


class ActionRobustDDPG(BaseEstimator):
    """Quadcopter waypoint controller trained with action-robust DDPG.

    Parameters mirror :class:`rquad.agent.Hyperparams`; ``algorithm="ddpg"``
    trains the non-robust baseline. ``sim_params``, ``task`` and
    ``reward_coeffs`` default to the nominal vehicle and task.

    Attributes
    ----------
    actor_ : MlpParams
        Trained policy network.
    networks_ : dict
        Every trained network keyed by role, ready for checkpointing.
    training_log_ : list of LogRow
    babble_return_ : float
        Mean return of the random-action warm-up episodes.
    """

    def __init__(
        self,
        algorithm: str = "ar-ddpg",
        alpha: float = 0.1,
        total_iterations: int = 2_000_000,
        lr_actor: float = 2e-5,
        lr_critic: float = 2e-4,
        gamma: float = 0.95,
        batch_size: int = 64,
        buffer_capacity: int = 800_000,
        policy_steps: int = 20,
        tau: float = 0.005,
        babble_episodes: int = 500,
        hidden_sizes: tuple = (64, 64),
        ou_theta: float = 0.15,
        ou_sigma: float = 0.2,
        ou_sigma_final: float = 0.05,
        eval_interval: int = 10_000,
        eval_episodes: int = 5,
        sim_params: Optional[QuadParams] = None,
        task: Optional[TaskConfig] = None,
        reward_coeffs: Optional[RewardCoeffs] = None,
        random_state: int = 0,
    ):
        self.algorithm = algorithm
        self.alpha = alpha
        self.total_iterations = total_iterations
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.gamma = gamma
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.policy_steps = policy_steps
        self.tau = tau
        self.babble_episodes = babble_episodes
        self.hidden_sizes = hidden_sizes
        self.ou_theta = ou_theta
        self.ou_sigma = ou_sigma
        self.ou_sigma_final = ou_sigma_final
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes
        self.sim_params = sim_params
        self.task = task
        self.reward_coeffs = reward_coeffs
        self.random_state = random_state

    def _env_config(self) -> EnvConfig:
        return EnvConfig(
            self.sim_params or QuadParams(),
            self.task or TaskConfig(),
            self.reward_coeffs or RewardCoeffs(),
        )

    def _hyperparams(self) -> agent.Hyperparams:
        if not isinstance(self.random_state, (int, np.integer)):
            raise ValueError("random_state must be an integer seed")
        return agent.Hyperparams(
            total_iterations=self.total_iterations,
            lr_actor=self.lr_actor,
            lr_critic=self.lr_critic,
            gamma=self.gamma,
            batch_size=self.batch_size,
            alpha=self.alpha if self.algorithm == "ar-ddpg" else 0.0,
            buffer_capacity=self.buffer_capacity,
            policy_steps=self.policy_steps,
            tau=self.tau,
            babble_episodes=self.babble_episodes,
            hidden_sizes=tuple(self.hidden_sizes),
            ou_theta=self.ou_theta,
            ou_sigma=self.ou_sigma,
            ou_sigma_final=self.ou_sigma_final,
            eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes,
            seed=int(self.random_state),
        )

    def fit(self, X=None, y=None, callback=None) -> "ActionRobustDDPG":
        """Train in simulation. ``X`` and ``y`` are ignored."""
        result = agent.train(self._hyperparams(), self._env_config(), self.algorithm, callback)
        self.networks_ = result.networks
        self.actor_ = result.networks["actor"]
        self.training_log_ = result.log
        self.babble_return_ = result.babble_mean_return
        self.final_eval_return_ = result.final_eval_mean_return()
        self.n_steps_ = result.steps
        self.n_features_in_ = OBS_DIM
        return self

    def predict(self, X) -> np.ndarray:
        """Normalised actions in [-1, 1] for each observation row."""
        check_is_fitted(self, "actor_")
        return nn.predict(self.actor_, check_observations(X))

    def score(self, X=None, y=None, n_episodes: int = 10, seed: int = 0) -> float:
        """Mean undiscounted return over nominal episodes. ``X``/``y`` ignored."""
        check_is_fitted(self, "actor_")
        config = self._env_config()
        rets = [episode_return(self.actor_, config, agent.eval_rng(seed, k)) for k in range(n_episodes)]
        return float(np.mean(rets))

    def stress_test(self, grid: PerturbGrid = PerturbGrid(), seed: int = 0, n_jobs: int = 1) -> Heatmap:
        """Sweep the frozen policy over mass and action perturbations."""
        check_is_fitted(self, "actor_")
        return sweep(self.actor_, grid, self._env_config(), seed, n_jobs)

    @classmethod
    def from_networks(cls, networks, **params) -> "ActionRobustDDPG":
        """Wrap networks loaded from a checkpoint as a fitted estimator."""
        est = cls(**params)
        est.networks_ = dict(networks)
        est.actor_ = networks["actor"]
        est.n_features_in_ = OBS_DIM
        return est
