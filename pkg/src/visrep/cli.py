"""Command-line entry point tying the pipeline together.

Every command resolves a config, derives a run directory named
`<command>-<hash8>-s<seed>`, stamps the config hash into the artifacts it
writes there, and exits 0 on success.  Config problems exit 2 before any
artifact exists; mid-run failures exit 1 and leave a FAILED marker next to
whatever partial artifacts were produced.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .augment import AugmentSpec
from .configio import ConfigError, config_hash, load_config
from .analysis import cam_from_stack
from .data import CorpusIndex, curate
from .evalstats import (
    AggregateRow,
    ScoreTable,
    aggregate_report,
    fixture_path,
    read_refs_csv,
    report_lines,
)
from .finetune import (
    ChainEnv,
    ExpertData,
    OfflineBCSpec,
    RainbowSpec,
    finetune_offline_bc,
    finetune_online_rl,
    load_pretrained_stack,
)
from .model import EncoderStack, StackConfig
from .objectives import build_objective
from .pretrain import OptimizerSpec, ScheduleSpec, pretrain

ENVS = {"chain": ChainEnv}

# fields a command cannot run without; checked before the run directory exists
REQUIRED = {
    "curate": ("data.regime", "data.replay_root"),
    "pretrain": ("data.regime", "data.replay_root", "objective.name"),
    "finetune-bc": ("bc.checkpoint", "bc.game", "bc.data"),
    "finetune-rl": ("rl.checkpoint",),
    "evaluate": (),
    "report": ("report.aggregates",),
    "cam": ("cam.checkpoint", "cam.obs"),
}


def _lookup(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _require(cfg, command):
    missing = [key for key in REQUIRED[command] if _lookup(cfg, key) is None]
    if missing:
        raise ConfigError(f"{command} requires config fields: {', '.join(missing)}")
    env = _lookup(cfg, "rl.env")
    if command == "finetune-rl" and env is not None and env not in ENVS:
        raise ConfigError(f"rl.env must be one of {sorted(ENVS)}, got '{env}'")


def _spec_kwargs(section, cls, skip=()):
    """Keyword args for dataclass `cls` drawn from a config section."""
    allowed = {f.name for f in fields(cls)}
    out = {}
    for key, value in section.items():
        if key in skip:
            continue
        if key in allowed:
            out[key] = tuple(value) if isinstance(value, list) else value
    return out


def _augment_spec(cfg):
    section = cfg.get("augment", {})
    return AugmentSpec(**_spec_kwargs(section, AugmentSpec)) if section else None


def _cmd_curate(cfg, run_dir, seed):
    d = cfg["data"]
    manifest = curate(d["regime"], d["replay_root"], games=d.get("games"),
                      per_checkpoint=d.get("per_checkpoint"))
    manifest.to_json(run_dir / "manifest.json")
    return {"regime": d["regime"], "games": len(manifest.games),
            "transitions": manifest.total_transitions}


def _cmd_pretrain(cfg, run_dir, seed):
    d = cfg["data"]
    manifest = curate(d["regime"], d["replay_root"], games=d.get("games"),
                      per_checkpoint=d.get("per_checkpoint"))
    corpus = CorpusIndex(manifest)
    m = cfg.get("model", {})
    stack_cfg = StackConfig(games=tuple(manifest.games),
                            **_spec_kwargs(m, StackConfig, skip=("games",)))
    stack = EncoderStack(stack_cfg, seed=seed)
    o = dict(cfg["objective"])
    name = o.pop("name")
    objective = build_objective(name, stack, augment=_augment_spec(cfg), **o)
    spec = OptimizerSpec.from_objective(objective.config)
    schedule = ScheduleSpec(**_spec_kwargs(cfg.get("schedule", {}), ScheduleSpec))
    result = pretrain(objective, corpus, spec, seed, run_dir, schedule)
    return {"objective": name, "steps": result.steps,
            "ran_epochs": result.ran_epochs, "stopped_early": result.stopped_early,
            "final_loss": result.history[-1] if result.history else None}


def _load_expert(path):
    with np.load(path) as z:
        count = int(z["action_count"]) if "action_count" in z.files else 18
        return ExpertData(obs=z["obs"], actions=z["actions"].astype(np.int64),
                          action_count=count)


def _cmd_finetune_bc(cfg, run_dir, seed):
    b = cfg["bc"]
    data = _load_expert(b["data"])
    spec = OfflineBCSpec(**_spec_kwargs(b, OfflineBCSpec))
    result = finetune_offline_bc(b["checkpoint"], b["game"], data, spec,
                                 seed=seed, out_dir=run_dir)
    summary = {"game": b["game"], "epochs": spec.epochs,
               "final": result.history[-1] if result.history else None}
    if b.get("env") in ENVS:
        summary["score"] = result.evaluate(ENVS[b["env"]](), episodes=100)
    return summary


def _cmd_finetune_rl(cfg, run_dir, seed):
    r = cfg["rl"]
    env = ENVS[r.get("env", "chain")]()
    spec = RainbowSpec(**_spec_kwargs(r, RainbowSpec))
    result = finetune_online_rl(r["checkpoint"], env, spec, seed=seed,
                                out_dir=run_dir, game=r.get("game", "online"))
    return {"env": r.get("env", "chain"), "env_steps": result.env_steps,
            "updates": result.updates, "final_score": result.final_score}


DEFAULT_SCORES = ("scores_offline_bc.csv", "scores_online_rl.csv")


def _cmd_evaluate(cfg, run_dir, seed):
    e = cfg.get("evaluate", {})
    sources = e.get("scores") or [str(fixture_path(n)) for n in DEFAULT_SCORES]
    if isinstance(sources, (str, Path)):
        sources = [sources]
    table = ScoreTable()
    for src in sources:
        for rec in ScoreTable.read_csv(src).records:
            table.add(rec)
    refs = read_refs_csv(e.get("refs") or fixture_path("normalization_refs.csv"))
    rows = aggregate_report(table, refs, resamples=e.get("resamples", 2000),
                            seed=e.get("bootstrap_seed", 0))
    _write_aggregates(rows, run_dir / "aggregates.csv")
    lines = report_lines(rows)
    (run_dir / "report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return {"rows": len(rows), "sources": [str(s) for s in sources]}


AGG_COLUMNS = ("protocol", "distribution", "method", "iqm", "iqm_lo", "iqm_hi",
               "optimality_gap", "n_games")


def _write_aggregates(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGG_COLUMNS)
        for r in rows:
            # repr floats round-trip exactly, so re-rendered reports match
            w.writerow([r.protocol, r.distribution, r.method,
                        repr(r.iqm), repr(r.iqm_ci[0]), repr(r.iqm_ci[1]),
                        repr(r.optimality_gap), r.n_games])


def _read_aggregates(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(AggregateRow(
                protocol=rec["protocol"], distribution=rec["distribution"],
                method=rec["method"], iqm=float(rec["iqm"]),
                iqm_ci=(float(rec["iqm_lo"]), float(rec["iqm_hi"])),
                optimality_gap=float(rec["optimality_gap"]),
                n_games=int(rec["n_games"])))
    return rows


def _cmd_report(cfg, run_dir, seed):
    r = cfg["report"]
    rows = _read_aggregates(r["aggregates"])
    lines = report_lines(rows)
    (run_dir / "report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    if r.get("plot"):
        _plot_iqm(rows, run_dir / "iqm.png")
    return {"rows": len(rows), "plot": bool(r.get("plot"))}


def _plot_iqm(rows, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = sorted({(r.protocol, r.distribution) for r in rows})
    fig, axes = plt.subplots(1, len(groups), figsize=(4 * len(groups), 3.2),
                             squeeze=False)
    for ax, (proto, dist) in zip(axes[0], groups):
        sub = sorted((r for r in rows if (r.protocol, r.distribution) == (proto, dist)),
                     key=lambda r: r.iqm)
        err = [[r.iqm - r.iqm_ci[0] for r in sub], [r.iqm_ci[1] - r.iqm for r in sub]]
        ax.barh([r.method for r in sub], [r.iqm for r in sub], xerr=err)
        ax.set_title(f"{proto} / {dist}")
        ax.set_xlabel("IQM")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _cmd_cam(cfg, run_dir, seed):
    c = cfg["cam"]
    stack = load_pretrained_stack(c["checkpoint"])
    loaded = np.load(c["obs"])
    if isinstance(loaded, np.lib.npyio.NpzFile):
        obs = np.asarray(loaded["obs"])
        loaded.close()
    else:
        obs = np.asarray(loaded)
    heat = cam_from_stack(stack, obs, stage=c.get("stage", -1),
                          out_size=c.get("out_size", 84))
    from PIL import Image

    Image.fromarray(np.round(heat.values * 255).astype(np.uint8), mode="L") \
        .save(run_dir / "cam.png")
    np.save(run_dir / "cam.npy", heat.values)
    return {"out": "cam.png", "stage": c.get("stage", -1)}


HANDLERS = {
    "curate": _cmd_curate,
    "pretrain": _cmd_pretrain,
    "finetune-bc": _cmd_finetune_bc,
    "finetune-rl": _cmd_finetune_rl,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "cam": _cmd_cam,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="visrep",
        description="Pre-train, fine-tune, and evaluate visual encoders "
                    "for Atari-style control.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", default=None,
                       help="YAML config (may name a preset: objective)")
        p.add_argument("-o", "--override", action="append", default=[],
                       metavar="KEY.PATH=VALUE",
                       help="override a config value; repeatable")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exit_:  # argparse already printed usage
        return exit_.code if isinstance(exit_.code, int) else 2
    try:
        cfg = load_config(args.config, args.override)
        _require(cfg, args.command)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    full_hash = config_hash(cfg)
    run_dir = Path(cfg["out_root"]) / f"{args.command}-{full_hash[:8]}-s{cfg['seed']}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(
        {"command": args.command, "config": cfg, "config_hash": full_hash},
        indent=2, sort_keys=True) + "\n")
    try:
        summary = HANDLERS[args.command](cfg, run_dir, cfg["seed"])
    except Exception as err:  # leave partial artifacts plus a marker
        (run_dir / "FAILED").write_text(f"{type(err).__name__}: {err}\n")
        print(f"{args.command} failed: {err}", file=sys.stderr)
        return 1
    (run_dir / "summary.json").write_text(json.dumps(
        {"command": args.command, "config_hash": full_hash, **summary},
        indent=2, sort_keys=True, default=str) + "\n")
    print(f"{args.command}: ok -> {run_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
