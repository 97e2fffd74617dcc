"""On-disk replay record format.

One file holds the transitions of a single (game, run, checkpoint) log:

    magic    4 bytes  b"VREC"
    version  u32 LE
    game     u16 LE length + utf-8 bytes
    run      u32 LE
    ckpt     u32 LE
    count    u64 LE
    frames   count * 84*84 uint8   (grayscale, row-major)
    actions  count uint8
    rewards  count float32 LE
    terminal count uint8 (0/1)

Frames dominate the size, so readers memory-map the file and index lazily.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..games import ACTION_SPACE

MAGIC = b"VREC"
VERSION = 1
FRAME_SHAPE = (84, 84)
FRAME_BYTES = FRAME_SHAPE[0] * FRAME_SHAPE[1]
_HEAD = struct.Struct("<4sIH")  # magic, version, game-name length


def record_path(root, game: str, run: int, checkpoint: int) -> Path:
    return Path(root) / game / f"run{run:02d}" / f"ckpt{checkpoint:02d}.vrec"


def write_record_file(path, game, run, checkpoint, frames, actions, rewards, terminals):
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    actions = np.ascontiguousarray(actions, dtype=np.uint8)
    rewards = np.ascontiguousarray(rewards, dtype="<f4")
    terminals = np.ascontiguousarray(terminals, dtype=np.uint8)
    count = len(actions)
    if frames.shape != (count, *FRAME_SHAPE):
        raise ValueError(f"frames must be (N, 84, 84), got {frames.shape}")
    if not (rewards.shape == terminals.shape == (count,)):
        raise ValueError("actions/rewards/terminals lengths differ")
    if actions.size and actions.max() >= ACTION_SPACE:
        raise ValueError(f"action id out of range (>= {ACTION_SPACE})")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    name = game.encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEAD.pack(MAGIC, VERSION, len(name)))
        f.write(name)
        f.write(struct.pack("<IIQ", run, checkpoint, count))
        f.write(frames.tobytes())
        f.write(actions.tobytes())
        f.write(rewards.tobytes())
        f.write(terminals.tobytes())
    return path


class RecordFile:
    """Memory-mapped reader for one record file."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as f:
            magic, version, name_len = _HEAD.unpack(f.read(_HEAD.size))
            if magic != MAGIC:
                raise ValueError(f"{self.path}: not a record file")
            if version != VERSION:
                raise ValueError(f"{self.path}: unsupported record version {version}")
            self.game = f.read(name_len).decode("utf-8")
            self.run, self.checkpoint, self.count = struct.unpack("<IIQ", f.read(16))
            offset = f.tell()
        n = self.count
        self.frames = np.memmap(self.path, dtype=np.uint8, mode="r",
                                offset=offset, shape=(n, *FRAME_SHAPE))
        offset += n * FRAME_BYTES
        self.actions = np.memmap(self.path, dtype=np.uint8, mode="r", offset=offset, shape=(n,))
        offset += n
        self.rewards = np.memmap(self.path, dtype="<f4", mode="r", offset=offset, shape=(n,))
        offset += 4 * n
        self.terminals = np.memmap(self.path, dtype=np.uint8, mode="r", offset=offset, shape=(n,))

    def __len__(self):
        return self.count
