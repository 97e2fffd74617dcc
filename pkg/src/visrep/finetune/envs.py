"""Environment adapter interface plus the deterministic toy chain fixture.

Real emulator bindings are out of scope; downstream code only relies on the
small adapter surface below (expectations for a real adapter: 84x84 grey
frames, stack of 4, frame-skip 4, sticky-action probability 0.25, the full
18-action set).
"""

from __future__ import annotations

import numpy as np


class EnvironmentFault(RuntimeError):
    """An adapter call failed; carries the env step index it failed at."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EnvironmentAdapter:
    """Minimal episodic control interface.

    reset() -> uint8 observation of shape (4, 84, 84)
    step(action) -> (observation, reward, terminal, info)

    `deterministic` declares that identical action sequences after reset()
    reproduce identical trajectories.
    """

    action_count: int = 18
    deterministic: bool = False

    def reset(self):
        raise NotImplementedError

    def step(self, action):
        raise NotImplementedError


class ChainEnv(EnvironmentAdapter):
    """Five states in a row; walking right reaches the rewarding end.

    Action 1 moves right, action 0 moves left (floored at 0), the remaining
    actions do nothing.  Reaching state 4 pays +1 and ends the episode;
    episodes also cut off after `max_steps` steps.  Observations are fixed
    per-state images: a textured background with a bright block whose column
    encodes the state, so a conv encoder can tell states apart even after
    small random shifts.
    """

    action_count = 4
    deterministic = True
    n_states = 5

    def __init__(self, seed=0, max_steps=20):
        self.max_steps = max_steps
        rng = np.random.default_rng(seed)
        self._obs = []
        for s in range(self.n_states):
            img = rng.integers(0, 48, size=(4, 84, 84), dtype=np.uint8)
            col = 4 + 16 * s
            img[:, 28:56, col:col + 12] = 255
            self._obs.append(img)
        self.state = 0
        self.steps = 0

    def observe(self, state):
        """The fixed observation for `state` (shared array; callers copy)."""
        return self._obs[state]

    def reset(self):
        self.state = 0
        self.steps = 0
        return self._obs[self.state]

    def step(self, action):
        if not 0 <= int(action) < self.action_count:
            raise ValueError(f"action {action} outside [0, {self.action_count})")
        if action == 1:
            self.state = min(self.state + 1, self.n_states - 1)
        elif action == 0:
            self.state = max(self.state - 1, 0)
        self.steps += 1
        reward = 1.0 if self.state == self.n_states - 1 else 0.0
        terminal = self.state == self.n_states - 1 or self.steps >= self.max_steps
        return self._obs[self.state], reward, terminal, {"state": self.state}


def run_episode(env, policy, max_steps=10_000):
    """Roll one greedy episode; returns the undiscounted score."""
    obs = env.reset()
    score = 0.0
    for _ in range(max_steps):
        obs, reward, terminal, _ = env.step(policy(obs))
        score += reward
        if terminal:
            return score
    return score


def evaluate_policy(env, policy, episodes):
    """Mean undiscounted score of `policy` over `episodes` episodes."""
    return float(np.mean([run_episode(env, policy) for _ in range(episodes)]))
