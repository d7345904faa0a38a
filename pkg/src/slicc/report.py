"""Cross-run aggregation and figures.

Runs are grouped into variants by everything in their config except the
seed. Combined reward per episode is r_P + r_I, which for the centralized
baseline equals r_g because its metrics log the per-robot split of r_g.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import SliccError
from .trainer import EpisodeStats, read_metrics


class ReportError(SliccError):
    pass


@dataclass
class RunRecord:
    path: str
    config: dict
    stats: list[EpisodeStats]

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def variant(self) -> str:
        return variant_key(self.config)


@dataclass
class VariantSummary:
    variant: str
    algorithm: str
    prototype: str
    seeds: list[int]
    reward_mean: float
    reward_std: float
    success_mean: float
    success_std: float
    per_seed_reward: dict[str, float]
    per_seed_success: dict[str, float]


@dataclass
class ComparisonReport:
    window: int
    episodes: int
    variants: list[VariantSummary]
    # tally[a][b] = {"wins": .., "losses": .., "ties": ..} over seeds shared by a and b
    tally: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def variant_key(cfg: dict) -> str:
    if cfg.get("name"):
        base = str(cfg["name"])
        suffix = f"-s{cfg['seed']}"
        if base.endswith(suffix):
            base = base[: -len(suffix)]
        return base
    return f"{cfg['algorithm']}-{cfg['prototype']}"


def load_run(run_dir) -> RunRecord:
    run_dir = Path(run_dir)
    cfg_path, metrics_path = run_dir / "config.json", run_dir / "metrics.csv"
    if not cfg_path.exists() or not metrics_path.exists():
        raise ReportError(f"{run_dir} is not a completed run (config.json/metrics.csv missing)")
    return RunRecord(str(run_dir), json.loads(cfg_path.read_text()), read_metrics(metrics_path))


def trailing_mean(values, window: int) -> float:
    values = list(values)
    if not values:
        raise ReportError("no episodes")
    return float(np.mean(values[-window:]))


def smooth(values, window: int) -> np.ndarray:
    """Trailing-window mean at every index (shorter window at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def _comparable(cfg: dict) -> dict:
    return {"env": cfg["env"], "reward": cfg["reward"], "episodes": cfg["episodes"],
            "gamma": cfg["gamma"]}


def build_report(runs: list[RunRecord], window: int = 100) -> ComparisonReport:
    if not runs:
        raise ReportError("need at least one completed run")
    runs = sorted(runs, key=lambda r: (r.variant, r.seed, r.path))
    ref = _comparable(runs[0].config)
    for r in runs[1:]:
        if _comparable(r.config) != ref:
            raise ReportError(
                f"run {r.path} is incompatible with {runs[0].path}: env, reward, episodes "
                "and gamma must match across compared runs"
            )
    episodes = min(len(r.stats) for r in runs)
    if window < 1 or window > episodes:
        raise ReportError(f"window {window} must lie in [1, {episodes}]")

    groups: dict[str, list[RunRecord]] = {}
    for r in runs:
        groups.setdefault(r.variant, []).append(r)
    summaries = []
    seed_scores: dict[str, dict[int, float]] = {}
    for name, members in sorted(groups.items()):
        seeds = [m.seed for m in members]
        if len(set(seeds)) != len(seeds):
            raise ReportError(f"variant {name} has duplicate seeds {seeds}")
        rewards = [trailing_mean([s.r_combined for s in m.stats], window) for m in members]
        success = [trailing_mean([float(s.success) for s in m.stats], window) for m in members]
        seed_scores[name] = dict(zip(seeds, rewards))
        summaries.append(VariantSummary(
            variant=name,
            algorithm=members[0].config["algorithm"],
            prototype=members[0].config["prototype"],
            seeds=seeds,
            reward_mean=float(np.mean(rewards)),
            reward_std=float(np.std(rewards)),
            success_mean=float(np.mean(success)),
            success_std=float(np.std(success)),
            per_seed_reward={str(s): v for s, v in zip(seeds, rewards)},
            per_seed_success={str(s): v for s, v in zip(seeds, success)},
        ))
    tally: dict[str, dict[str, dict[str, int]]] = {}
    for a in seed_scores:
        for b in seed_scores:
            if a == b:
                continue
            shared = sorted(set(seed_scores[a]) & set(seed_scores[b]))
            wins = sum(seed_scores[a][s] > seed_scores[b][s] for s in shared)
            losses = sum(seed_scores[a][s] < seed_scores[b][s] for s in shared)
            tally.setdefault(a, {})[b] = {"wins": wins, "losses": losses,
                                          "ties": len(shared) - wins - losses}
    return ComparisonReport(window, episodes, summaries, tally)


def plot_report(runs: list[RunRecord], out_dir, smooth_window: int = 50,
                success_window: int = 100, fmt: str = "svg") -> list[Path]:
    """Average reward per episode and success ratio, one line per variant (mean over seeds)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list[RunRecord]] = {}
    for r in sorted(runs, key=lambda r: (r.variant, r.seed, r.path)):
        groups.setdefault(r.variant, []).append(r)
    n = min(len(r.stats) for r in runs)

    written = []
    with plt.rc_context({"svg.hashsalt": "slicc", "axes.grid": True, "font.size": 10}):
        for fname, ylabel, series, window in (
            ("reward", "average reward per episode", lambda s: s.r_combined, smooth_window),
            ("success", "success ratio", lambda s: float(s.success), success_window),
        ):
            fig, ax = plt.subplots(figsize=(6.4, 3.6))
            for name, members in groups.items():
                curves = np.array([smooth([series(s) for s in m.stats[:n]], window) for m in members])
                mean = curves.mean(axis=0)
                x = np.arange(1, n + 1)
                line, = ax.plot(x, mean, label=f"{name} (n={len(members)})", linewidth=1.2)
                if len(members) > 1:
                    ax.fill_between(x, curves.min(axis=0), curves.max(axis=0),
                                    color=line.get_color(), alpha=0.15, linewidth=0)
            ax.set_xlabel("episode")
            ax.set_ylabel(ylabel)
            if fname == "success":
                ax.set_ylim(-0.02, 1.02)
            ax.legend(loc="best", fontsize="small")
            fig.tight_layout()
            path = out_dir / f"{fname}.{fmt}"
            fig.savefig(path, format=fmt, metadata={"Date": None} if fmt == "svg" else None)
            plt.close(fig)
            written.append(path)
    return written
