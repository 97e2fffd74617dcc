"""Dataset curation: regimes map to explicit (game, run, checkpoint, count) picks.

Replay logs are organized per game into runs, each run into checkpoints of
increasing policy quality. A regime slices the first `count` transitions out
of chosen checkpoints; the default mix takes the first 10 checkpoints of the
first two runs, 10k transitions each, giving 200k per game.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..games import ID_GAMES
from .records import RecordFile, record_path


@dataclass(frozen=True)
class RegimeSpec:
    runs: tuple[int, ...]
    checkpoints: tuple[int, ...]
    per_checkpoint: int
    pretrain_epochs: int | None = None  # forced epoch count, if the regime pins one


REGIMES = {
    "mixed": RegimeSpec(runs=(1, 2), checkpoints=tuple(range(1, 11)), per_checkpoint=10_000),
    # optimality ablations: one run, two checkpoints from the low / high end
    "suboptimal": RegimeSpec(runs=(1,), checkpoints=(1, 2), per_checkpoint=50_000),
    "expert": RegimeSpec(runs=(1,), checkpoints=(9, 10), per_checkpoint=50_000),
    # size ablations
    "size1m": RegimeSpec(runs=(1, 2), checkpoints=tuple(range(1, 11)), per_checkpoint=1_000),
    "size10m": RegimeSpec(runs=(1, 2), checkpoints=tuple(range(1, 11)), per_checkpoint=10_000),
    "size100m": RegimeSpec(runs=(1, 2), checkpoints=tuple(range(1, 11)),
                           per_checkpoint=100_000, pretrain_epochs=10),
}


@dataclass(frozen=True)
class Selection:
    game: str
    run: int
    checkpoint: int
    count: int


@dataclass
class DatasetManifest:
    regime: str
    replay_root: str
    selections: list[Selection] = field(default_factory=list)

    @property
    def games(self):
        seen = dict.fromkeys(s.game for s in self.selections)
        return list(seen)

    @property
    def total_transitions(self):
        return sum(s.count for s in self.selections)

    @property
    def pretrain_epochs(self):
        spec = REGIMES.get(self.regime)
        return spec.pretrain_epochs if spec else None

    def to_json(self, path=None):
        doc = {
            "regime": self.regime,
            "replay_root": str(self.replay_root),
            "selections": [vars(s) for s in self.selections],
        }
        text = json.dumps(doc, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls(regime=doc["regime"], replay_root=doc["replay_root"],
                   selections=[Selection(**s) for s in doc["selections"]])


class CurationError(RuntimeError):
    pass


def curate(regime: str, replay_root, games=None, per_checkpoint=None) -> DatasetManifest:
    """Build a manifest for `regime`, verifying every required log exists.

    Every requested game must supply every (run, checkpoint) pair with at
    least the regime's per-checkpoint transition count; anything missing is
    reported in one error. Identical counts per game keep the games balanced.
    """
    if regime not in REGIMES:
        raise CurationError(f"unknown regime {regime!r}; known: {sorted(REGIMES)}")
    spec = REGIMES[regime]
    count = per_checkpoint if per_checkpoint is not None else spec.per_checkpoint
    games = list(games) if games is not None else list(ID_GAMES)

    missing, short = [], []
    selections = []
    for game in games:
        for run in spec.runs:
            for ckpt in spec.checkpoints:
                path = record_path(replay_root, game, run, ckpt)
                if not path.exists():
                    missing.append(f"{game}/run{run:02d}/ckpt{ckpt:02d}")
                    continue
                rec = RecordFile(path)
                if rec.count < count:
                    short.append(f"{game}/run{run:02d}/ckpt{ckpt:02d} "
                                 f"(has {rec.count}, needs {count})")
                    continue
                selections.append(Selection(game, run, ckpt, count))
    if missing or short:
        parts = []
        if missing:
            parts.append(f"{len(missing)} missing logs: " + ", ".join(missing[:20])
                         + (" ..." if len(missing) > 20 else ""))
        if short:
            parts.append(f"{len(short)} too-short logs: " + ", ".join(short[:20])
                         + (" ..." if len(short) > 20 else ""))
        raise CurationError(f"cannot curate {regime!r}: " + "; ".join(parts))
    return DatasetManifest(regime=regime, replay_root=str(replay_root), selections=selections)
