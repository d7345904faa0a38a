"""Stackelberg Q-learning for the prosocial/introspective pair, plus the
centralized joint-action DQN baseline.

Per environment step the learners act, store the joint transition and,
once the buffer holds ``warmup`` transitions, take one mini-batch gradient
step per network. Everything is driven from one integer seed.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import approximator as nn
from .env import (N_ACTIONS, EnvConfig, TransportEnv, check_success, decode_action,
                  observe_introspective, observe_prosocial)
from .errors import ConfigError, DimensionError, SliccError
from .replay import JointTransition, ReplayBuffer
from .rewards import RewardParams, RewardPrototype, combine, components
from .stackelberg import ActionPair, PayoffBimatrix, stackelberg_step

log = logging.getLogger(__name__)

ALGORITHMS = ("slicc", "centralized")
N_JOINT = N_ACTIONS * N_ACTIONS
METRICS_FIELDS = ("episode", "r_P", "r_I", "r_combined", "success", "length", "epsilon")


class TrainingError(SliccError, RuntimeError):
    pass


@dataclass
class TrainConfig:
    algorithm: str = "slicc"
    prototype: RewardPrototype = RewardPrototype.ALPHA
    episodes: int = 3000
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: str = "exponential"
    # fraction of the run after which epsilon sits at epsilon_end
    epsilon_decay_fraction: float = 0.5
    joint_exploration: bool = False
    batch_size: int = 64
    warmup: int = 64
    buffer_capacity: int = 50_000
    hidden_dim: int = 1024
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    # 0 bootstraps from the live network; N > 0 syncs a frozen copy every N updates
    target_sync: int = 0
    dtype: str = "float32"
    seed: int = 0
    eval_every: int = 0
    eval_episodes: int = 10
    name: str = ""
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardParams = field(default_factory=RewardParams)

    def __post_init__(self):
        if isinstance(self.env, dict):
            self.env = EnvConfig(**self.env)
        if isinstance(self.reward, dict):
            self.reward = RewardParams(**self.reward)
        self.prototype = RewardPrototype.parse(self.prototype)
        self.algorithm = str(self.algorithm).lower()
        self.validate()

    @property
    def horizon(self) -> int:
        return self.env.horizon

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.algorithm == "centralized" and self.prototype is not RewardPrototype.CENTRALIZED_G:
            raise ConfigError("the centralized baseline trains on prototype 'centralized_g'")
        if self.algorithm == "slicc" and self.prototype is RewardPrototype.CENTRALIZED_G:
            raise ConfigError("SLiCC needs a per-agent prototype ('alpha' or 'beta')")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if not (0.0 <= self.epsilon_end <= 1.0 and 0.0 <= self.epsilon_start <= 1.0):
            raise ConfigError("epsilon_start and epsilon_end must lie in [0, 1]")
        if self.epsilon_decay not in ("exponential", "linear", "constant"):
            raise ConfigError(f"unknown epsilon_decay {self.epsilon_decay!r}")
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ConfigError("epsilon_decay_fraction must lie in (0, 1]")
        if self.batch_size < 1 or self.warmup < self.batch_size:
            raise ConfigError("need batch_size >= 1 and warmup >= batch_size")
        if self.buffer_capacity < self.warmup:
            raise ConfigError("buffer_capacity must be at least warmup")
        if self.hidden_dim < 1 or not self.learning_rate > 0:
            raise ConfigError("hidden_dim must be >= 1 and learning_rate positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.target_sync < 0 or self.eval_every < 0 or self.eval_episodes < 1:
            raise ConfigError("target_sync/eval_every must be >= 0 and eval_episodes >= 1")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["prototype"] = self.prototype.value
        d["env"] = self.env.to_dict()
        d["reward"] = self.reward.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown field(s) in train config: {sorted(unknown)}")
        env = dict(d.get("env", {}))
        reward = dict(d.get("reward", {}))
        for section, klass, values in (("env", EnvConfig, env), ("reward", RewardParams, reward)):
            bad = set(values) - {f.name for f in dataclasses.fields(klass)}
            if bad:
                raise ConfigError(f"unknown field(s) in [{section}]: {sorted(bad)}")
        try:
            return cls(**{**d, "env": EnvConfig(**env), "reward": RewardParams(**reward)})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class EpisodeStats:
    episode: int
    r_p: float
    r_i: float
    r_combined: float
    success: bool
    length: int
    epsilon: float

    def row(self) -> list:
        return [self.episode, repr(self.r_p), repr(self.r_i), repr(self.r_combined),
                int(self.success), self.length, repr(self.epsilon)]


def epsilon_at(cfg: TrainConfig, episode: int) -> float:
    """Exploration rate for a 0-based episode index."""
    start, end = cfg.epsilon_start, cfg.epsilon_end
    if cfg.epsilon_decay == "constant":
        return start
    k = max(1, round(cfg.episodes * cfg.epsilon_decay_fraction))
    if episode >= k:
        return end
    if cfg.epsilon_decay == "linear":
        return start + (end - start) * episode / k
    if start <= 0.0 or end <= 0.0:
        return end if episode > 0 else start
    return max(end, start * (end / start) ** (episode / k))


# -- Q-networks ---------------------------------------------------------------


class QNetwork:
    """MLP plus the fixed per-component observation scaling applied before it."""

    def __init__(self, params: nn.MlpParams, obs_scale=None):
        self.params = params
        self.obs_scale = (np.ones(params.in_dim) if obs_scale is None
                          else np.asarray(obs_scale, dtype=float))
        if self.obs_scale.shape != (params.in_dim,):
            raise DimensionError("obs_scale length must equal the network input size")

    def __call__(self, obs) -> np.ndarray:
        return nn.forward(self.params, np.asarray(obs) / self.obs_scale)

    def loss_and_grad(self, obs, actions, targets):
        return nn.loss_and_grad(self.params, np.asarray(obs) / self.obs_scale, actions, targets)

    def copy(self) -> "QNetwork":
        return QNetwork(self.params.copy(), self.obs_scale)


def robot_scale(env: EnvConfig) -> np.ndarray:
    return np.array([1.0, 1.0, math.pi, env.v_max])


def build_networks(cfg: TrainConfig, seeds) -> dict[str, QNetwork]:
    dtype = np.dtype(cfg.dtype)
    scale4 = robot_scale(cfg.env)
    scale8 = np.concatenate([scale4, scale4])
    if cfg.algorithm == "slicc":
        return {
            "prosocial": QNetwork(nn.init_params(seeds[0], 8, cfg.hidden_dim, N_JOINT, dtype), scale8),
            "introspective": QNetwork(nn.init_params(seeds[1], 4, cfg.hidden_dim, N_ACTIONS, dtype), scale4),
        }
    return {"centralized": QNetwork(nn.init_params(seeds[0], 8, cfg.hidden_dim, N_JOINT, dtype), scale8)}


# -- targets ------------------------------------------------------------------


def prosocial_targets(r, o_p_next, o_i_next, terminal, q_p: QNetwork, q_i: QNetwork, gamma: float,
                      q_i_next=None):
    """Bootstrap targets for the leader network over a batch.

    The follower's greedy action at its next observation fixes the column of
    the leader's next table; the target maximizes over that column's rows.
    ``q_i_next`` may carry precomputed ``q_i(o_i_next)``.
    """
    r = np.asarray(r, dtype=float)
    terminal = np.asarray(terminal, dtype=bool)
    if q_i_next is None:
        q_i_next = q_i(o_i_next)
    follower_next = np.argmax(q_i_next, axis=-1)
    table_next = nn.as_table(q_p(o_p_next))
    column = np.take_along_axis(table_next, follower_next[:, None, None], axis=2)[..., 0]
    return np.where(terminal, r, r + gamma * column.max(axis=1).astype(float))


def introspective_targets(r, o_i_next, terminal, q_i: QNetwork, gamma: float, q_i_next=None):
    r = np.asarray(r, dtype=float)
    terminal = np.asarray(terminal, dtype=bool)
    if q_i_next is None:
        q_i_next = q_i(o_i_next)
    return np.where(terminal, r, r + gamma * q_i_next.max(axis=1).astype(float))


def centralized_targets(r, o_next, terminal, q_c: QNetwork, gamma: float):
    return introspective_targets(r, o_next, terminal, q_c, gamma)


def compute_target_prosocial(t: JointTransition, q_p: QNetwork, q_i: QNetwork, gamma: float) -> float:
    return float(prosocial_targets([t.r_p], t.o_p_next[None], t.o_i_next[None], [t.terminal],
                                   q_p, q_i, gamma)[0])


def compute_target_introspective(t: JointTransition, q_i: QNetwork, gamma: float) -> float:
    return float(introspective_targets([t.r_i], t.o_i_next[None], [t.terminal], q_i, gamma)[0])


# -- action selection ---------------------------------------------------------


def induced_game(o_p, o_i, q_p: QNetwork, q_i: QNetwork) -> PayoffBimatrix:
    # P sees only I's Q-vector, never I's observation directly
    return PayoffBimatrix(nn.as_table(q_p(o_p)), q_i(o_i))


def select_actions_slicc(o_p, o_i, q_p: QNetwork, q_i: QNetwork, epsilon: float,
                         rng: np.random.Generator, joint: bool = False) -> ActionPair:
    """Epsilon-greedy around the Stackelberg pair.

    Four draws are consumed per call regardless of outcome, so the stream
    position depends only on the number of calls.
    """
    u = rng.random(2)
    rand = rng.integers(N_ACTIONS, size=2)
    explore = (u[0] < epsilon, u[0] < epsilon) if joint else (u[0] < epsilon, u[1] < epsilon)
    if explore[0] and explore[1]:
        return ActionPair(int(rand[0]), int(rand[1]))
    greedy = stackelberg_step(induced_game(o_p, o_i, q_p, q_i))
    return ActionPair(int(rand[0]) if explore[0] else greedy.leader_action,
                      int(rand[1]) if explore[1] else greedy.follower_action)


def select_action_centralized(o_joint, q_c: QNetwork, epsilon: float,
                              rng: np.random.Generator) -> ActionPair:
    u = rng.random()
    k = int(rng.integers(N_JOINT))
    if not u < epsilon:
        k = int(np.argmax(q_c(o_joint)))
    return ActionPair(*nn.decode_joint(k, N_ACTIONS))


# -- training -----------------------------------------------------------------


@dataclass
class RunResult:
    config: TrainConfig
    networks: dict[str, QNetwork]
    stats: list[EpisodeStats]
    evaluations: list[dict] = field(default_factory=list)
    wall_time: float = 0.0


class _Learner:
    """Networks, optimizers and optional frozen target copies for one run."""

    def __init__(self, cfg: TrainConfig, nets: dict[str, QNetwork]):
        self.cfg = cfg
        self.nets = nets
        self.opts = {k: nn.OptimizerState(cfg.optimizer, cfg.learning_rate) for k in nets}
        self.targets = {k: v.copy() for k, v in nets.items()} if cfg.target_sync else nets
        self.updates = 0

    def _step(self, key, obs, actions, targets):
        loss, grads = self.nets[key].loss_and_grad(obs, actions, targets)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss for the {key} network after {self.updates} updates")
        nn.apply_update(self.nets[key].params, grads, self.opts[key])
        return loss

    def update(self, b: dict) -> None:
        g = self.cfg.gamma
        t = self.targets
        if self.cfg.algorithm == "slicc":
            # both targets come from the pre-update networks
            q_i_next = t["introspective"](b["o_i_next"])
            y_p = prosocial_targets(b["r_p"], b["o_p_next"], b["o_i_next"], b["terminal"],
                                    t["prosocial"], t["introspective"], g, q_i_next)
            y_i = introspective_targets(b["r_i"], b["o_i_next"], b["terminal"], t["introspective"], g,
                                        q_i_next)
            self._step("prosocial", b["o_p"], b["a_p"] * N_ACTIONS + b["a_i"], y_p)
            self._step("introspective", b["o_i"], b["a_i"], y_i)
        else:
            y = centralized_targets(b["r_p"], b["o_p_next"], b["terminal"], t["centralized"], g)
            self._step("centralized", b["o_p"], b["a_p"] * N_ACTIONS + b["a_i"], y)
        self.updates += 1
        if self.cfg.target_sync and self.updates % self.cfg.target_sync == 0:
            self.targets = {k: v.copy() for k, v in self.nets.items()}


def greedy_policy(cfg: TrainConfig, nets: dict[str, QNetwork]):
    def act(o_p, o_i, epsilon, rng):
        if cfg.algorithm == "slicc":
            return select_actions_slicc(o_p, o_i, nets["prosocial"], nets["introspective"],
                                        epsilon, rng, cfg.joint_exploration)
        return select_action_centralized(o_p, nets["centralized"], epsilon, rng)
    return act


def run_episode(cfg: TrainConfig, env: TransportEnv, act, epsilon: float, rng: np.random.Generator,
                on_transition=None):
    """Roll out one episode; returns (trajectory, per-step reward rows)."""
    w = env.reset()
    trajectory = [w]
    rewards = []
    prev_v = (0.0, 0.0)
    done = False
    while not done:
        o_p, o_i = observe_prosocial(w), observe_introspective(w)
        a = act(o_p, o_i, epsilon, rng)
        inc_p, inc_i = decode_action(a.leader_action, cfg.env), decode_action(a.follower_action, cfg.env)
        w, done = env.step(a.leader_action, a.follower_action)
        c = components(w, inc_p.a_v, inc_i.a_v, prev_v[0], prev_v[1], cfg.reward)
        if cfg.algorithm == "slicc":
            r_p, r_i = combine(cfg.prototype, c)
            stored = (r_p, r_i)
        else:
            # per-robot split of r_g, for logging only; the learner sees r_g
            r_p = c.r_int + c.goal_p + c.ap_p
            r_i = c.goal_i + c.ap_i
            r_g = combine(RewardPrototype.CENTRALIZED_G, c)
            stored = (r_g, r_g)
        rewards.append((r_p, r_i))
        trajectory.append(w)
        if on_transition is not None:
            on_transition(JointTransition(o_p, a.leader_action, stored[0], observe_prosocial(w),
                                          o_i, a.follower_action, stored[1], observe_introspective(w),
                                          done))
        prev_v = (inc_p.a_v, inc_i.a_v)
    return trajectory, rewards


def discounted_return(rewards, gamma: float) -> float:
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


def train(cfg: TrainConfig, progress_every: int = 0) -> RunResult:
    ss = np.random.SeedSequence(cfg.seed)
    s_init_a, s_init_b, s_env, s_explore, s_replay, s_eval = ss.spawn(6)
    nets = build_networks(cfg, (s_init_a, s_init_b))
    learner = _Learner(cfg, nets)
    env = TransportEnv(cfg.env, np.random.default_rng(s_env))
    explore_rng = np.random.default_rng(s_explore)
    replay_rng = np.random.default_rng(s_replay)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    act = greedy_policy(cfg, nets)

    def on_transition(t):
        buffer.push(t)
        if len(buffer) >= cfg.warmup:
            learner.update(buffer.sample_arrays(replay_rng, cfg.batch_size))

    result = RunResult(cfg, nets, [])
    t0 = time.perf_counter()
    for ep in range(cfg.episodes):
        eps = epsilon_at(cfg, ep)
        traj, rewards = run_episode(cfg, env, act, eps, explore_rng, on_transition)
        r_p = math.fsum(r[0] for r in rewards)
        r_i = math.fsum(r[1] for r in rewards)
        result.stats.append(EpisodeStats(ep, r_p, r_i, r_p + r_i, check_success(traj, cfg.env),
                                         len(rewards), eps))
        if cfg.eval_every and (ep + 1) % cfg.eval_every == 0:
            ev = evaluate(nets, cfg, cfg.eval_episodes, seed=s_eval)
            ev["episode"] = ep
            result.evaluations.append(ev)
        if progress_every and (ep + 1) % progress_every == 0:
            window = result.stats[-progress_every:]
            log.info("%s ep %d eps %.3f success %.2f combined %.2f len %.0f (%.0fs)",
                     cfg.name or cfg.algorithm, ep + 1, eps,
                     np.mean([s.success for s in window]), np.mean([s.r_combined for s in window]),
                     np.mean([s.length for s in window]), time.perf_counter() - t0)
    result.wall_time = time.perf_counter() - t0
    return result


def evaluate(nets: dict[str, QNetwork], cfg: TrainConfig, n_episodes: int, seed=None) -> dict:
    """Greedy rollouts; mean combined reward, success ratio and discounted returns from t=0."""
    expected = {"slicc": {"prosocial", "introspective"}, "centralized": {"centralized"}}[cfg.algorithm]
    if set(nets) != expected:
        raise DimensionError(f"{cfg.algorithm} evaluation needs networks {sorted(expected)}")
    for key, net in nets.items():
        want = (4 if key == "introspective" else 8, N_ACTIONS if key == "introspective" else N_JOINT)
        if (net.params.in_dim, net.params.out_dim) != want:
            raise DimensionError(f"{key} network has shape {(net.params.in_dim, net.params.out_dim)}, "
                                 f"expected {want}")
    seed = cfg.seed if seed is None else seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env = TransportEnv(cfg.env, np.random.default_rng(ss))
    rng = np.random.default_rng(0)
    act = greedy_policy(cfg, nets)
    combined, successes, v_p, v_i = [], [], [], []
    for _ in range(n_episodes):
        traj, rewards = run_episode(cfg, env, act, 0.0, rng)
        rp = [r[0] for r in rewards]
        ri = [r[1] for r in rewards]
        combined.append(math.fsum(rp) + math.fsum(ri))
        successes.append(check_success(traj, cfg.env))
        v_p.append(discounted_return(rp, cfg.gamma))
        v_i.append(discounted_return(ri, cfg.gamma))
    return {
        "avg_combined_reward": float(np.mean(combined)),
        "success_ratio": float(np.mean(successes)),
        "V_P": float(np.mean(v_p)),
        "V_I": float(np.mean(v_i)),
        "episodes": n_episodes,
    }


# -- run artifacts ------------------------------------------------------------


def metrics_csv(stats: list[EpisodeStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_FIELDS)
    for s in stats:
        writer.writerow(s.row())
    return buf.getvalue()


def read_metrics(path) -> list[EpisodeStats]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_FIELDS:
            raise SliccError(f"{path}: unexpected metrics header {reader.fieldnames}")
        return [EpisodeStats(int(r["episode"]), float(r["r_P"]), float(r["r_I"]),
                             float(r["r_combined"]), bool(int(r["success"])), int(r["length"]),
                             float(r["epsilon"])) for r in reader]


def config_json(cfg: TrainConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def save_run(result: RunResult, out_dir, fixed_timestamp: bool = False) -> Path:
    """Write config snapshot, metrics CSV, checkpoints and a hash manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "config.json": config_json(result.config).encode(),
        "metrics.csv": metrics_csv(result.stats).encode(),
    }
    for key, net in result.networks.items():
        meta = {"role": key, "obs_scale": net.obs_scale.tolist()}
        files[f"{key}.ckpt"] = nn.dumps_checkpoint(net.params, meta)
    if result.evaluations:
        files["evaluations.json"] = (json.dumps(result.evaluations, indent=2, sort_keys=True) + "\n").encode()
    for name, blob in files.items():
        (out / name).write_bytes(blob)
    manifest = {
        "algorithm": result.config.algorithm,
        "prototype": result.config.prototype.value,
        "seed": result.config.seed,
        "episodes": result.config.episodes,
        "created": "1970-01-01T00:00:00Z" if fixed_timestamp
        else time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "files": {name: "sha256:" + hashlib.sha256(blob).hexdigest() for name, blob in sorted(files.items())},
    }
    if not fixed_timestamp:
        manifest["wall_time_s"] = round(result.wall_time, 3)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_networks(run_dir) -> dict[str, QNetwork]:
    run_dir = Path(run_dir)
    nets = {}
    for key in ("prosocial", "introspective", "centralized"):
        path = run_dir / f"{key}.ckpt"
        if path.exists():
            params, meta = nn.load_checkpoint(path)
            nets[key] = QNetwork(params, meta.get("obs_scale"))
    if not nets:
        raise SliccError(f"no checkpoints found in {run_dir}")
    return nets
