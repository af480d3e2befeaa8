"""Multi-episode ROAR runs, fixed-OAR sweeps, schedule plots and summaries.

Artifacts written to the output directory:

``episode_XX.csv`` / ``agent_episode_XX.json``
    schedule log and agent checkpoint after each ROAR episode
``sweep_beta_B.csv`` / ``baselines.csv``
    per-beta schedule logs and the fixed-OAR result table
``roar_report.json`` / ``sweep_report.json``
    per-mode summaries that :func:`summarize` combines
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from xml.sax.saxutils import escape

from roar.agent import DqnAgent, FixedAgent
from roar.config import RunConfig
from roar.env import EpisodeConfig, EpisodeResult, OarSchedule, ScheduleParseError, run_episode
from roar.learner_env import LearnerEnv
from roar.surrogate_env import SurrogateEnv

import numpy as np

log = logging.getLogger(__name__)


class IncompleteReportError(Exception):
    def __init__(self, missing):
        super().__init__("incomplete report; missing: " + ", ".join(missing))
        self.missing = list(missing)


def derive_seed(base_seed: int, *keys) -> int:
    """Deterministic 63-bit seed from a base seed and a key path."""
    text = ":".join(str(k) for k in (base_seed, *keys))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little") >> 1


def episode_seeds(base_seed: int, episode: int) -> tuple[int, int]:
    """(environment seed, agent stream seed) for one episode."""
    return derive_seed(base_seed, "episode", episode, "env"), derive_seed(base_seed, "episode", episode, "agent")


def make_env(cfg: RunConfig):
    if cfg.environment == "surrogate":
        params = replace(cfg.surrogate, beta_max=cfg.episode.beta_max)
        return SurrogateEnv(params, cfg.episode.horizon)
    task = replace(cfg.learner, beta_max=cfg.episode.beta_max)
    return LearnerEnv(task, task_seed=cfg.task_seed)


def episode_name(e: int) -> str:
    return f"episode_{e:02d}.csv"


def checkpoint_name(e: int) -> str:
    return f"agent_episode_{e:02d}.json"


def sweep_name(beta: float) -> str:
    return f"sweep_beta_{beta:.1f}.csv"


@dataclass
class RunReport:
    out_dir: Path
    mode: str
    episodes: list = field(default_factory=list)
    baselines: dict = field(default_factory=dict)
    schedule_files: list = field(default_factory=list)
    checkpoint_files: list = field(default_factory=list)


def _episode_record(result: EpisodeResult) -> dict:
    return {
        "initial_wer": result.schedule.initial.val_wer,
        "final_wer": result.final_wer,
        "final_loss": result.outcomes[-1].state.val_loss,
        "total_reward": result.total_reward,
        "mean_beta": float(np.mean(result.schedule.betas)),
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_roar(cfg: RunConfig) -> RunReport:
    """Sequential episodes with one agent carried across them."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(out, "roar")
    env = make_env(cfg)
    agent = DqnAgent(cfg.agent, seed=derive_seed(cfg.seed, "agent-init"))
    for e in range(cfg.episodes):
        if e > 0:
            # continue from the serialised state, exactly as a resumed run would
            agent = DqnAgent.restore((out / checkpoint_name(e - 1)).read_text())
        env_seed, agent_seed = episode_seeds(cfg.seed, e)
        result = run_episode(agent, env, cfg.episode, np.random.default_rng(agent_seed), seed=env_seed)
        sched_path = out / episode_name(e)
        ckpt_path = out / checkpoint_name(e)
        result.schedule.write_csv(sched_path)
        ckpt_path.write_text(agent.checkpoint())
        report.schedule_files.append(sched_path)
        report.checkpoint_files.append(ckpt_path)
        rec = _episode_record(result)
        report.episodes.append(rec)
        log.info("episode %d: final_wer=%.3f mean_beta=%.2f", e, rec["final_wer"], rec["mean_beta"])
    _write_json(
        out / "roar_report.json",
        {
            "mode": "roar",
            "episodes": report.episodes,
            "schedule_files": [p.name for p in report.schedule_files],
            "checkpoint_files": [p.name for p in report.checkpoint_files],
            "config": cfg.to_dict(),
        },
    )
    return report


def run_fixed(cfg: RunConfig, beta: float) -> EpisodeResult:
    """One fixed-OAR baseline episode.

    Baselines use the environment seed of the last ROAR episode, so the
    comparison with that episode is paired on environment noise.
    """
    env = make_env(cfg)
    env_seed, agent_seed = episode_seeds(cfg.seed, cfg.episodes - 1)
    ep = replace(cfg.episode, initial_beta=beta)
    return run_episode(FixedAgent(), env, ep, np.random.default_rng(agent_seed), seed=env_seed)


def run_sweep(cfg: RunConfig) -> RunReport:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(out, "sweep")
    betas = list(cfg.sweep_betas)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda b: run_fixed(cfg, b), betas))
    else:
        results = [run_fixed(cfg, b) for b in betas]
    rows = []
    for beta, result in zip(betas, results):
        path = out / sweep_name(beta)
        result.schedule.write_csv(path)
        report.schedule_files.append(path)
        rec = _episode_record(result)
        report.baselines[beta] = rec["final_wer"]
        rows.append((beta, rec["final_wer"], rec["final_loss"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "final_wer", "final_loss"])
    for beta, wer, loss in rows:
        w.writerow([f"{beta:.6f}", f"{wer:.6f}", f"{loss:.6f}"])
    (out / "baselines.csv").write_text(buf.getvalue())
    _write_json(
        out / "sweep_report.json",
        {
            "mode": "sweep",
            "baselines": {f"{b:.1f}": wer for b, wer in report.baselines.items()},
            "schedule_files": [p.name for p in report.schedule_files],
            "config": cfg.to_dict(),
        },
    )
    return report


def run(cfg: RunConfig) -> RunReport:
    cfg.validate()
    return run_roar(cfg) if cfg.mode == "roar" else run_sweep(cfg)


def relative_improvement(best_fixed: float, roar: float) -> float:
    """Percent reduction of the ROAR error relative to the best fixed baseline."""
    return 100.0 * (best_fixed - roar) / best_fixed


def summarize(report_dir) -> dict:
    """Combine the ROAR and sweep reports found in ``report_dir``.

    Raises :class:`IncompleteReportError` naming every missing file.
    """
    d = Path(report_dir)
    missing = [name for name in ("roar_report.json", "sweep_report.json") if not (d / name).exists()]
    roar = json.loads((d / "roar_report.json").read_text()) if "roar_report.json" not in missing else None
    sweep = json.loads((d / "sweep_report.json").read_text()) if "sweep_report.json" not in missing else None
    for rep in (roar, sweep):
        if rep is not None:
            missing += [f for f in rep.get("schedule_files", []) + rep.get("checkpoint_files", []) if not (d / f).exists()]
    if missing:
        raise IncompleteReportError(missing)
    episodes = [{"final_wer": e["final_wer"], "total_reward": e["total_reward"]} for e in roar["episodes"]]
    baselines = dict(sweep["baselines"])
    best_fixed = min(baselines.values())
    summary = {
        "episodes": episodes,
        "baselines": baselines,
        "relative_improvement_pct": relative_improvement(best_fixed, episodes[-1]["final_wer"]),
    }
    _write_json(d / "summary.json", summary)
    return summary


def format_summary(summary: dict) -> str:
    lines = ["episode  final_wer  total_reward"]
    for i, e in enumerate(summary["episodes"]):
        lines.append(f"{i:7d}  {e['final_wer']:9.3f}  {e['total_reward']:12.3f}")
    lines.append("")
    lines.append("fixed beta  final_wer")
    for beta, wer in sorted(summary["baselines"].items(), key=lambda kv: float(kv[0])):
        lines.append(f"{float(beta):10.1f}  {wer:9.3f}")
    lines.append("")
    lines.append(f"relative improvement of last episode vs best fixed: {summary['relative_improvement_pct']:.2f}%")
    return "\n".join(lines)


def plot_schedule(csv_path, svg_path, iterations_per_step: int = 1, beta_max: float = 4.0) -> None:
    """Render a schedule CSV as an SVG step chart of beta over training iterations."""
    schedule = OarSchedule.read_csv(csv_path)
    rows = schedule.rows
    if not rows:
        raise ScheduleParseError(f"{csv_path}: schedule has no rows")
    width, height, margin = 640, 320, 48
    k = max(1, iterations_per_step)
    x_max = max(r["step"] for r in rows) * k
    y_max = max(beta_max, max(r["beta"] for r in rows)) or 1.0

    def px(x):
        return margin + (width - 2 * margin) * x / x_max

    def py(y):
        return height - margin - (height - 2 * margin) * y / y_max

    # beta_t is in force during iterations ((t-1)K, tK]
    pts = []
    for r in rows:
        x0, x1 = (r["step"] - 1) * k, r["step"] * k
        pts += [(px(x0), py(r["beta"])), (px(x1), py(r["beta"]))]
    path = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in pts)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<title>{escape(Path(csv_path).name)}: OAR schedule</title>",
        f'<line class="axis" x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line class="axis" x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="12">training iteration</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 14 {height / 2:.0f})" text-anchor="middle">OAR</text>',
    ]
    for tick in range(int(math.floor(y_max)) + 1):
        parts.append(
            f'<text x="{margin - 6}" y="{py(tick) + 4:.2f}" text-anchor="end" font-size="10">{tick}</text>'
        )
    parts.append(f'<path class="schedule" d="{path}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for r in rows:
        parts.append(
            f'<circle class="point" data-step="{r["step"]}" data-beta="{r["beta"]:.6f}" '
            f'cx="{px(r["step"] * k):.2f}" cy="{py(r["beta"]):.2f}" r="2.5" fill="steelblue"/>'
        )
    parts.append("</svg>")
    Path(svg_path).write_text("\n".join(parts) + "\n")
