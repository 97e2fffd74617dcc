"""Synthetic replay corpus with learnable structure, for tests and demos.

Each synthetic "game" is a 6x6 cell world rendered at 84x84: a bright agent
block moves under the stored action, a dimmer distractor drifts on its own,
and the background is a per-game texture. The behavior policy is a fixed
function of the agent cell, so actions are predictable from pixels (good for
BC/IDM-style losses), rewards fire on the px == py diagonal (gives TD losses
structure), and episodes are fixed-length.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .records import write_record_file

CELL = 14
GRID = 6


def _game_code(game: str) -> int:
    return int.from_bytes(hashlib.sha1(game.encode()).digest()[:4], "little")


def render_frame(game, agent_xy, distractor_xy):
    code = _game_code(game)
    i, j = np.meshgrid(np.arange(84), np.arange(84), indexing="ij")
    frame = ((3 * i + 5 * j + code) % 31).astype(np.uint8)
    dx, dy = distractor_xy
    frame[dy * CELL + 3:dy * CELL + 11, dx * CELL + 3:dx * CELL + 11] = 120
    ax, ay = agent_xy
    frame[ay * CELL:(ay + 1) * CELL, ax * CELL:(ax + 1) * CELL] = 230
    return frame


def behavior_action(agent_xy) -> int:
    ax, ay = agent_xy
    return (ax + 3 * ay) % 18


def step_dynamics(agent_xy, distractor_xy, action):
    ax, ay = agent_xy
    ax = (ax + action % 3 - 1) % GRID
    ay = (ay + (action // 3) % 3 - 1) % GRID
    dx, dy = distractor_xy
    reward = 1.0 if ax == ay else 0.0
    return (ax, ay), ((dx + 1) % GRID, (dy + 2) % GRID if dx == GRID - 1 else dy), reward


def generate_episode(game, length, rng):
    agent = (int(rng.integers(GRID)), int(rng.integers(GRID)))
    distractor = (int(rng.integers(GRID)), int(rng.integers(GRID)))
    frames = np.empty((length, 84, 84), dtype=np.uint8)
    actions = np.empty(length, dtype=np.uint8)
    rewards = np.empty(length, dtype=np.float32)
    for t in range(length):
        frames[t] = render_frame(game, agent, distractor)
        a = behavior_action(agent)
        agent, distractor, r = step_dynamics(agent, distractor, a)
        actions[t] = a
        rewards[t] = r
    terminals = np.zeros(length, dtype=np.uint8)
    terminals[-1] = 1
    return frames, actions, rewards, terminals


def generate_corpus(root, games, runs=(1, 2), checkpoints=range(1, 11),
                    per_checkpoint=250, episode_len=50, seed=0):
    """Write a record-file tree under `root`; deterministic in its arguments."""
    for game in games:
        for run in runs:
            for ckpt in checkpoints:
                rng = np.random.default_rng([seed, _game_code(game), run, ckpt])
                chunks = []
                remaining = per_checkpoint
                while remaining > 0:
                    n = min(episode_len, remaining)
                    chunks.append(generate_episode(game, n, rng))
                    remaining -= n
                frames = np.concatenate([c[0] for c in chunks])
                actions = np.concatenate([c[1] for c in chunks])
                rewards = np.concatenate([c[2] for c in chunks])
                terminals = np.concatenate([c[3] for c in chunks])
                from .records import record_path
                write_record_file(record_path(root, game, run, ckpt),
                                  game, run, ckpt, frames, actions, rewards, terminals)
    return root
