"""Cart-pole balancing scenario used to benchmark the stepping machinery.

Dynamics, constants and termination mirror the classic control task: explicit
Euler at 0.02 s, +1 reward per step, 500-step cap, uniform [-0.05, 0.05]
initial state.  The transition runs when the action arrives and the next step
boundary is requested one integration interval ahead, so a full episode
exercises exactly the same broker/stepper path as the network scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .config import EnvConfig
from .env import Box, Discrete, Environment, RlAgent, Scenario

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_POLE_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * HALF_POLE_LENGTH
FORCE_MAG = 10.0
TAU = 0.02
TAU_NS = 20_000_000

X_LIMIT = 2.4
THETA_LIMIT = 12 * 2 * math.pi / 360

State = tuple[float, float, float, float]


def transition(state: State, action: int) -> State:
    """One Euler step of the cart-pole equations of motion."""
    x, x_dot, theta, theta_dot = state
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    cos_theta = math.cos(theta)
    sin_theta = math.sin(theta)
    temp = (force + POLE_MASS_LENGTH * theta_dot**2 * sin_theta) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_theta - cos_theta * temp) / (
        HALF_POLE_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS
    # Positions integrate with the old velocities, then velocities update.
    x = x + TAU * x_dot
    x_dot = x_dot + TAU * x_acc
    theta = theta + TAU * theta_dot
    theta_dot = theta_dot + TAU * theta_acc
    return (x, x_dot, theta, theta_dot)


def is_upright(state: State) -> bool:
    """The pole counts as balanced while both limits hold inclusively."""
    x, _, theta, _ = state
    return abs(x) <= X_LIMIT and abs(theta) <= THETA_LIMIT


class CartPoleAgent(RlAgent):
    def __init__(self, env: Environment, agent_id: str, max_episode_steps: int):
        self._env = env
        self._id = agent_id
        self._max_episode_steps = max_episode_steps
        self.state: State = (0.0, 0.0, 0.0, 0.0)
        self.transitions = 0

    def start(self, event) -> None:
        rng = self._env.kernel.rng("cartpole-init")
        self.state = tuple(rng.uniform(-0.05, 0.05) for _ in range(4))
        self._env.register_agent(self._id, self)
        self._env.set_next_step(self._id, TAU_NS)

    def set_action(self, action: int) -> None:
        self.state = transition(self.state, action)
        self.transitions += 1
        self._env.set_next_step(self._id, TAU_NS)

    def get_obs(self) -> Sequence[float]:
        return self.state

    def get_reward(self) -> float:
        return 1.0

    def get_done(self) -> bool:
        return not is_upright(self.state) or self.transitions >= self._max_episode_steps


@dataclass
class CartPoleScenario(Scenario):
    config: EnvConfig

    def __post_init__(self):
        inf = math.inf
        self.observation_space = Box(
            (-2 * X_LIMIT, -inf, -2 * THETA_LIMIT, -inf),
            (2 * X_LIMIT, inf, 2 * THETA_LIMIT, inf),
        )
        self.action_space = Discrete(2)
        self.agent: CartPoleAgent | None = None

    def build(self, env: Environment) -> None:
        self.agent = CartPoleAgent(env, "cartpole0", self.config.cartpole.max_episode_steps)
        env.kernel.register_component("cartpole0", self.agent.start)
        env.kernel.schedule(0, "cartpole0", "INIT")

    def metrics(self) -> dict[str, float]:
        return {"transitions": float(self.agent.transitions if self.agent else 0)}
