"""Evaluation statistics: score normalization, IQM, optimality gap, bootstrap CIs.

Scores are kept in a flat table keyed by (game, method, seed, protocol). Each
game carries a pair of normalization anchors (a random agent's score and a
reference agent's score); normalized scores are aggregated per method and
distribution group with the interquartile mean and the optimality gap, plus a
stratified bootstrap confidence interval over seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .games import DISTRIBUTIONS, distribution_of

SCORE_COLUMNS = ("game", "method", "seed", "protocol", "score")
REF_COLUMNS = ("game", "random_score", "reference_score", "reference_kind")


@dataclass(frozen=True)
class ScoreRecord:
    game: str
    method: str
    seed: int
    protocol: str
    score: float


@dataclass(frozen=True)
class NormalizationRef:
    """Per-game anchor pair. reference_kind names the anchor agent (dqn/rainbow)."""

    game: str
    random_score: float
    reference_score: float
    reference_kind: str


class ScoreTable:
    """Flat score store with CSV round-trip and duplicate-key detection."""

    def __init__(self, records=()):
        self.records: list[ScoreRecord] = []
        self._keys = set()
        for r in records:
            self.add(r)

    def add(self, record: ScoreRecord):
        key = (record.game, record.method, record.seed, record.protocol)
        if key in self._keys:
            raise ValueError(f"duplicate score record for {key}")
        self._keys.add(key)
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def methods(self):
        return sorted({r.method for r in self.records})

    def protocols(self):
        return sorted({r.protocol for r in self.records})

    def select(self, method=None, protocol=None, games=None):
        out = []
        for r in self.records:
            if method is not None and r.method != method:
                continue
            if protocol is not None and r.protocol != protocol:
                continue
            if games is not None and r.game not in games:
                continue
            out.append(r)
        return out

    def seed_grid(self, method, protocol, games):
        """Scores as {game: [score per seed, ascending seed]} for the selection."""
        grid = {}
        for r in self.select(method=method, protocol=protocol, games=games):
            grid.setdefault(r.game, []).append((r.seed, r.score))
        return {g: [s for _, s in sorted(rows)] for g, rows in grid.items()}

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(SCORE_COLUMNS)
            for r in self.records:
                w.writerow([r.game, r.method, r.seed, r.protocol, repr(r.score)])

    @classmethod
    def read_csv(cls, path):
        table = cls()
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if tuple(header) != SCORE_COLUMNS:
                raise ValueError(f"score CSV must have columns {SCORE_COLUMNS}, got {header}")
            for row in reader:
                game, method, seed, protocol, score = row
                table.add(ScoreRecord(game, method, int(seed), protocol, float(score)))
        return table


def read_refs_csv(path) -> dict[str, NormalizationRef]:
    refs = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != REF_COLUMNS:
            raise ValueError(f"reference CSV must have columns {REF_COLUMNS}, got {header}")
        for game, rnd, ref, kind in reader:
            if game in refs:
                raise ValueError(f"duplicate normalization reference for {game}")
            refs[game] = NormalizationRef(game, float(rnd), float(ref), kind)
    return refs


def write_refs_csv(path, refs: dict[str, NormalizationRef]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REF_COLUMNS)
        for game in sorted(refs):
            r = refs[game]
            w.writerow([r.game, repr(r.random_score), repr(r.reference_score), r.reference_kind])


def fixture_path(name: str) -> Path:
    return Path(__file__).parent / "fixtures" / name


def normalize_score(score: float, ref: NormalizationRef) -> float:
    """Anchor-normalized score: 0 at the worse anchor, 1 at the better one.

    The random agent can outscore the reference on some games, so the anchors
    are ordered by value rather than by role; an agent below both anchors comes
    out negative, above both comes out > 1.
    """
    lo = min(ref.random_score, ref.reference_score)
    hi = max(ref.random_score, ref.reference_score)
    if hi == lo:
        raise ZeroDivisionError(f"normalization anchors for {ref.game} coincide ({lo})")
    return (score - lo) / (hi - lo)


def iqm(values) -> float:
    """Interquartile mean: 25% symmetrically trimmed mean with fractional endpoints.

    Each sorted value occupies the interval [i, i+1) of the rank line; its
    weight is the overlap of that interval with the kept region [n/4, 3n/4].
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("iqm of empty input")
    cut = 0.25 * n
    idx = np.arange(n, dtype=np.float64)
    weights = np.clip(np.minimum(idx + 1.0, n - cut) - np.maximum(idx, cut), 0.0, 1.0)
    return float(np.sum(weights * x) / np.sum(weights))


def optimality_gap(values) -> float:
    """Mean shortfall below the reference level 1.0 (scores above 1 count as 0)."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("optimality_gap of empty input")
    return float(np.mean(np.maximum(0.0, 1.0 - x)))


def stratified_bootstrap_ci(grid, statistic, resamples=2000, level=0.95, seed=0):
    """Percentile bootstrap CI, resampling seeds with replacement per game.

    grid: {game: [per-seed values]}; statistic: callable on the pooled flat
    array of one resample. Games are the strata: each resample redraws every
    game's seed list independently. Deterministic for a given seed.
    """
    games = sorted(grid)
    columns = [np.asarray(grid[g], dtype=np.float64) for g in games]
    if any(c.size == 0 for c in columns):
        raise ValueError("empty seed list in bootstrap grid")
    rng = np.random.default_rng(seed)
    stats = np.empty(resamples)
    for i in range(resamples):
        pooled = [c[rng.integers(0, c.size, size=c.size)] for c in columns]
        stats[i] = statistic(np.concatenate(pooled))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


@dataclass(frozen=True)
class AggregateRow:
    protocol: str
    distribution: str
    method: str
    iqm: float
    iqm_ci: tuple[float, float]
    optimality_gap: float
    n_games: int


def aggregate_report(table: ScoreTable, refs: dict[str, NormalizationRef],
                     resamples=2000, seed=0, distributions=None):
    """Per (protocol, distribution, method): IQM + CI and optimality gap.

    Normalized scores pool over (game, seed). Games whose anchors coincide
    cannot be normalized and are skipped.
    """
    rows = []
    groups = distributions if distributions is not None else DISTRIBUTIONS
    for protocol in table.protocols():
        for dist_name, games in groups.items():
            for method in table.methods():
                grid = {}
                for game, scores in table.seed_grid(method, protocol, games).items():
                    ref = refs[game]
                    if ref.random_score == ref.reference_score:
                        continue
                    grid[game] = [normalize_score(s, ref) for s in scores]
                if not grid:
                    continue
                pooled = np.concatenate([np.asarray(v) for v in grid.values()])
                ci = stratified_bootstrap_ci(grid, iqm, resamples=resamples, seed=seed)
                rows.append(AggregateRow(
                    protocol=protocol,
                    distribution=dist_name,
                    method=method,
                    iqm=iqm(pooled),
                    iqm_ci=ci,
                    optimality_gap=optimality_gap(pooled),
                    n_games=len(grid),
                ))
    return rows


def report_lines(rows):
    """Human-readable rendering of aggregate_report output."""
    lines = [f"{'protocol':<12} {'distribution':<10} {'method':<10} "
             f"{'IQM':>8} {'95% CI':>18} {'gap':>8} {'games':>6}"]
    for r in rows:
        ci = f"[{r.iqm_ci[0]:.4f}, {r.iqm_ci[1]:.4f}]"
        lines.append(f"{r.protocol:<12} {r.distribution:<10} {r.method:<10} "
                     f"{r.iqm:>8.4f} {ci:>18} {r.optimality_gap:>8.4f} {r.n_games:>6}")
    return lines


__all__ = [
    "ScoreRecord", "ScoreTable", "NormalizationRef", "AggregateRow",
    "normalize_score", "iqm", "optimality_gap", "stratified_bootstrap_ci",
    "aggregate_report", "report_lines", "read_refs_csv", "write_refs_csv",
    "fixture_path", "SCORE_COLUMNS", "REF_COLUMNS",
]
