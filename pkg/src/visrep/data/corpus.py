"""Episode-aware batch sampling over curated replay logs.

The corpus index opens every selected record file, splits each selection into
episodes at terminal flags (a selection boundary also ends an episode), and
serves batches of four view kinds:

    image       one frame stack o_t
    video       (o_t, o_{t+k}) and optionally a further o_{t+k'}
    demo        (o_{t..t+K}, a_{t..t+K})
    trajectory  (o_{t..t+K}, a_{t..t+K}, r_{t..t+K}[, returns-to-go])

Anchors are drawn uniformly over the positions whose required future indices
stay inside the episode, so no view ever spans a terminal. Frame stacks pad
the start of an episode by repeating its first frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifest import DatasetManifest
from .records import RecordFile, record_path

STACK = 4


class SamplingError(RuntimeError):
    pass


@dataclass
class ImageBatch:
    games: list[str]
    obs: np.ndarray  # (B, 4, 84, 84) uint8


@dataclass
class VideoBatch:
    games: list[str]
    obs: np.ndarray     # (B, 4, 84, 84) uint8
    future: np.ndarray  # (B, 4, 84, 84) uint8, o_{t+k}
    ks: np.ndarray      # (B,) the sampled k per element
    further: np.ndarray | None = None  # (B, 4, 84, 84) uint8, o_{t+k'}


@dataclass
class DemoBatch:
    games: list[str]
    obs: np.ndarray      # (B, K+1, 4, 84, 84) uint8
    actions: np.ndarray  # (B, K+1) int64


@dataclass
class TrajectoryBatch:
    games: list[str]
    obs: np.ndarray       # (B, K+1, 4, 84, 84) uint8
    actions: np.ndarray   # (B, K+1) int64
    rewards: np.ndarray   # (B, K+1) float32
    terminals: np.ndarray | None = None       # (B, K+1) uint8, 1 = episode's last step
    returns_to_go: np.ndarray | None = None   # (B, K+1) float32


def clip_reward(rewards):
    """Clamp rewards to [-1, 1]; used by the TD-style losses and online RL."""
    return np.clip(rewards, -1.0, 1.0)


def returns_to_go(rewards, gamma=1.0):
    """Discounted suffix sums: out[i] = sum_j gamma^(j-i) * rewards[j], j >= i."""
    out = np.empty(len(rewards), dtype=np.float64)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = float(rewards[i]) + gamma * acc
        out[i] = acc
    return out


def worker_streams(seed, n_workers):
    """Independent per-worker generators; the union of their draws is a pure
    function of (seed, n_workers)."""
    return [np.random.default_rng([seed, w]) for w in range(n_workers)]


def stack_frames(frames, t, episode_start):
    """Frame stack ending at t, repeating the episode's first frame as padding."""
    idx = np.maximum(np.arange(t - STACK + 1, t + 1), episode_start)
    return np.asarray(frames[idx])


class CorpusIndex:
    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self.segments = []  # dicts: game, frames, actions, rewards, terminals
        ep_seg, ep_start, ep_len = [], [], []
        for sel in manifest.selections:
            rec = RecordFile(record_path(manifest.replay_root, sel.game, sel.run, sel.checkpoint))
            n = sel.count
            seg_id = len(self.segments)
            self.segments.append({
                "game": sel.game,
                "frames": rec.frames[:n],
                "actions": rec.actions[:n],
                "rewards": rec.rewards[:n],
                "terminals": rec.terminals[:n],
            })
            # episodes: split after each terminal; the selection edge also ends one
            ends = np.flatnonzero(rec.terminals[:n])
            if len(ends) == 0 or ends[-1] != n - 1:
                ends = np.append(ends, n - 1)
            start = 0
            for e in ends:
                ep_seg.append(seg_id)
                ep_start.append(start)
                ep_len.append(e - start + 1)
                start = e + 1
        self.ep_seg = np.asarray(ep_seg, dtype=np.int64)
        self.ep_start = np.asarray(ep_start, dtype=np.int64)
        self.ep_len = np.asarray(ep_len, dtype=np.int64)
        self._anchor_cache = {}

    @property
    def n_transitions(self):
        return int(self.ep_len.sum())

    @property
    def n_episodes(self):
        return len(self.ep_len)

    def _anchors(self, d):
        """All (episode, t) with t + d inside the episode; t is segment-absolute."""
        if d not in self._anchor_cache:
            counts = np.maximum(self.ep_len - d, 0)
            eps = np.repeat(np.arange(len(counts)), counts)
            offsets = np.concatenate([np.arange(c) for c in counts]) if len(counts) else np.empty(0, np.int64)
            ts = self.ep_start[eps] + offsets
            self._anchor_cache[d] = (eps, ts.astype(np.int64))
        return self._anchor_cache[d]

    def _draw(self, d, batch_size, rng):
        eps, ts = self._anchors(d)
        if len(ts) == 0:
            raise SamplingError(f"no anchor admits a +{d}-step window; episodes too short")
        pick = rng.integers(0, len(ts), size=batch_size)
        return eps[pick], ts[pick]

    def _stacks(self, eps, ts):
        """Frame stacks for positions ts (any shape) of episodes eps (same shape)."""
        eps = np.asarray(eps)
        ts = np.asarray(ts)
        segs = self.ep_seg[eps]
        starts = self.ep_start[eps]
        idx = np.maximum(ts[..., None] + np.arange(-STACK + 1, 1), starts[..., None])
        out = np.empty(idx.shape + (84, 84), dtype=np.uint8)
        for seg in np.unique(segs):
            m = segs == seg
            out[m] = self.segments[seg]["frames"][idx[m]]
        return out

    def _games(self, eps):
        return [self.segments[self.ep_seg[e]]["game"] for e in eps]

    def _window(self, field, eps, ts, width):
        segs = self.ep_seg[eps]
        idx = ts[:, None] + np.arange(width)
        out = np.empty(idx.shape, dtype=self.segments[0][field].dtype)
        for seg in np.unique(segs):
            m = segs == seg
            out[m] = self.segments[seg][field][idx[m]]
        return out

    def sample_image(self, batch_size, rng):
        eps, ts = self._draw(0, batch_size, rng)
        return ImageBatch(games=self._games(eps), obs=self._stacks(eps, ts))

    def sample_video(self, batch_size, rng, k, k2=None):
        """k may be an int or an inclusive (lo, hi) range drawn per element."""
        if isinstance(k, tuple):
            if k2 is not None:
                raise ValueError("a further-future offset requires a fixed k")
            ks = rng.integers(k[0], k[1] + 1, size=batch_size)
            eps = np.empty(batch_size, dtype=np.int64)
            ts = np.empty(batch_size, dtype=np.int64)
            for i in range(batch_size):
                e, t = self._draw(int(ks[i]), 1, rng)
                eps[i], ts[i] = e[0], t[0]
        else:
            ks = np.full(batch_size, k, dtype=np.int64)
            eps, ts = self._draw(max(k, k2 or 0), batch_size, rng)
        batch = VideoBatch(
            games=self._games(eps),
            obs=self._stacks(eps, ts),
            future=self._stacks(eps, ts + ks),
            ks=ks,
        )
        if k2 is not None:
            batch.further = self._stacks(eps, ts + k2)
        return batch

    def sample_demo(self, batch_size, rng, K):
        eps, ts = self._draw(K, batch_size, rng)
        steps = ts[:, None] + np.arange(K + 1)
        return DemoBatch(
            games=self._games(eps),
            obs=self._stacks(eps[:, None].repeat(K + 1, axis=1), steps),
            actions=self._window("actions", eps, ts, K + 1).astype(np.int64),
        )

    def sample_trajectory(self, batch_size, rng, K, with_returns=False, gamma=1.0):
        eps, ts = self._draw(K, batch_size, rng)
        steps = ts[:, None] + np.arange(K + 1)
        batch = TrajectoryBatch(
            games=self._games(eps),
            obs=self._stacks(eps[:, None].repeat(K + 1, axis=1), steps),
            actions=self._window("actions", eps, ts, K + 1).astype(np.int64),
            rewards=self._window("rewards", eps, ts, K + 1).astype(np.float32),
            terminals=self._window("terminals", eps, ts, K + 1).astype(np.uint8),
        )
        if with_returns:
            rtg = np.empty((batch_size, K + 1), dtype=np.float32)
            for i in range(batch_size):
                seg, e = self.ep_seg[eps[i]], eps[i]
                end = self.ep_start[e] + self.ep_len[e]
                tail = self.segments[seg]["rewards"][ts[i]:end]
                rtg[i] = returns_to_go(tail, gamma)[:K + 1]
            batch.returns_to_go = rtg
        return batch


def sample_batch(corpus: CorpusIndex, kind, batch_size, rng, k=None, k2=None, K=None,
                 with_returns=False, gamma=1.0):
    """Uniform dispatcher over the four view kinds. `rng` is a seed or Generator."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if kind == "image":
        return corpus.sample_image(batch_size, rng)
    if kind == "video":
        return corpus.sample_video(batch_size, rng, k=k, k2=k2)
    if kind == "demo":
        return corpus.sample_demo(batch_size, rng, K=K)
    if kind == "trajectory":
        return corpus.sample_trajectory(batch_size, rng, K=K,
                                        with_returns=with_returns, gamma=gamma)
    raise ValueError(f"unknown view kind {kind!r}")
