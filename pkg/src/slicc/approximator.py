"""One-hidden-layer tanh network with hand-written backprop.

``out = w2 @ tanh(w1 @ obs + b1) + b2``. The prosocial network's 81 outputs
are a row-major 9x9 table: flat index k is (leader k // 9, follower k % 9).
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, InputError

CHECKPOINT_MAGIC = b"SLICCMLP\n"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("w1", "b1", "w2", "b2")


class MlpParams:
    """Weights and biases; optionally views into one flat buffer (``flat``)."""

    def __init__(self, w1, b1, w2, b2, flat: np.ndarray | None = None):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.flat = flat
        h, _ = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape[1] != h or self.b2.shape != (self.w2.shape[0],):
            raise DimensionError(
                "inconsistent shapes: "
                + ", ".join(f"{n}={getattr(self, n).shape}" for n in PARAM_NAMES)
            )

    @classmethod
    def empty(cls, in_dim: int, hidden_dim: int, out_dim: int, dtype=np.float64) -> "MlpParams":
        shapes = ((hidden_dim, in_dim), (hidden_dim,), (out_dim, hidden_dim), (out_dim,))
        flat = np.zeros(sum(int(np.prod(sh)) for sh in shapes), dtype=dtype)
        views, offset = [], 0
        for sh in shapes:
            n = int(np.prod(sh))
            views.append(flat[offset:offset + n].reshape(sh))
            offset += n
        return cls(*views, flat=flat)

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    @property
    def dtype(self):
        return self.w1.dtype

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)

    def copy(self) -> "MlpParams":
        out = MlpParams.empty(self.in_dim, self.hidden_dim, self.out_dim, self.dtype)
        for dst, src in zip(out.arrays(), self.arrays()):
            dst[...] = src
        return out

    def zeros_like(self) -> "MlpParams":
        return MlpParams.empty(self.in_dim, self.hidden_dim, self.out_dim, self.dtype)

    def shape_spec(self) -> dict:
        return {n: list(a.shape) for n, a in zip(PARAM_NAMES, self.arrays())}

    def __repr__(self) -> str:
        return f"MlpParams({self.in_dim}->{self.hidden_dim}->{self.out_dim}, {self.dtype})"


def init_params(seed, in_dim: int, hidden_dim: int, out_dim: int, dtype=np.float64) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    if min(in_dim, hidden_dim, out_dim) < 1:
        raise DimensionError(f"bad layer sizes {(in_dim, hidden_dim, out_dim)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s1 = 1.0 / np.sqrt(in_dim)
    s2 = 1.0 / np.sqrt(hidden_dim)
    p = MlpParams.empty(in_dim, hidden_dim, out_dim, dtype)
    p.w1[...] = rng.uniform(-s1, s1, (hidden_dim, in_dim))
    p.b1[...] = rng.uniform(-s1, s1, hidden_dim)
    p.w2[...] = rng.uniform(-s2, s2, (out_dim, hidden_dim))
    p.b2[...] = rng.uniform(-s2, s2, out_dim)
    return p


def _hidden(p: MlpParams, obs: np.ndarray) -> np.ndarray:
    return np.tanh(obs @ p.w1.T + p.b1)


def forward(p: MlpParams, obs) -> np.ndarray:
    """Q-values for one observation (1-D) or a batch (2-D, one row per sample)."""
    obs = np.asarray(obs, dtype=p.dtype)
    if obs.shape[-1] != p.in_dim or obs.ndim not in (1, 2):
        raise DimensionError(f"expected observation(s) of length {p.in_dim}, got shape {obs.shape}")
    return _hidden(p, obs) @ p.w2.T + p.b2


def encode_joint(leader: int, follower: int, n_follower: int = 9) -> int:
    return leader * n_follower + follower


def decode_joint(k: int, n_follower: int = 9) -> tuple[int, int]:
    return divmod(int(k), n_follower)


def as_table(q_flat: np.ndarray, n_leader: int = 9, n_follower: int = 9) -> np.ndarray:
    """Row-major reshape of a flat joint-action output (rows: leader actions)."""
    return np.asarray(q_flat).reshape(q_flat.shape[:-1] + (n_leader, n_follower))


def loss_and_grad(p: MlpParams, obs, actions, targets) -> tuple[float, MlpParams]:
    """Mean squared error on the selected output of each sample, with exact gradients."""
    obs = np.asarray(obs, dtype=p.dtype)
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=p.dtype)
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise InputError(f"need a non-empty 2-D batch of observations, got shape {obs.shape}")
    n = obs.shape[0]
    if obs.shape[1] != p.in_dim:
        raise DimensionError(f"expected observations of length {p.in_dim}, got {obs.shape[1]}")
    if actions.shape != (n,) or targets.shape != (n,):
        raise DimensionError("actions and targets must be vectors matching the batch size")
    if np.any(actions < 0) or np.any(actions >= p.out_dim):
        raise DimensionError(f"action index outside [0, {p.out_dim})")
    if not np.all(np.isfinite(targets)):
        raise InputError("targets must be finite")

    # Only one output per sample enters the loss: the forward pass gathers the
    # selected rows of w2, and the output-layer gradient is a weighted one-hot
    # matrix times the hidden activations.
    h = _hidden(p, obs)
    w2_sel = p.w2[actions]
    q_sel = np.einsum("ij,ij->i", h, w2_sel) + p.b2[actions]
    err = q_sel - targets
    loss = float(np.mean(err * err))

    g_sel = (2.0 / n) * err
    grads = p.zeros_like()
    sel = np.zeros((p.out_dim, n), dtype=p.dtype)
    sel[actions, np.arange(n)] = g_sel
    np.matmul(sel, h, out=grads.w2)
    np.sum(sel, axis=1, out=grads.b2)
    g_pre = (g_sel[:, None] * w2_sel) * (1.0 - h * h)
    np.matmul(g_pre.T, obs, out=grads.w1)
    np.sum(g_pre, axis=0, out=grads.b1)
    return loss, grads


@dataclass
class OptimizerState:
    variant: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: MlpParams | None = field(default=None, repr=False)
    v: MlpParams | None = field(default=None, repr=False)

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in ("sgd", "adam"):
            raise InputError(f"unknown optimizer {self.variant!r}")
        if not self.learning_rate > 0:
            raise InputError(f"learning rate must be positive, got {self.learning_rate}")


def apply_update(p: MlpParams, grads: MlpParams, opt: OptimizerState) -> tuple[MlpParams, OptimizerState]:
    """One optimizer step. Arrays are updated in place; the same objects are returned."""
    opt.step += 1
    lr = opt.learning_rate
    if opt.variant == "sgd":
        for a, g in zip(p.arrays(), grads.arrays()):
            a -= (lr * g).astype(a.dtype, copy=False)
        return p, opt

    if opt.m is None:
        opt.m = p.zeros_like()
        opt.v = p.zeros_like()
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    # bias correction folded into the step size and epsilon
    step_size = lr * np.sqrt(c2) / c1
    eps_hat = opt.eps * np.sqrt(c2)
    if p.flat is not None and grads.flat is not None and opt.m.flat is not None:
        triples = [(p.flat, grads.flat, opt.m.flat, opt.v.flat)]
    else:
        triples = zip(p.arrays(), grads.arrays(), opt.m.arrays(), opt.v.arrays())
    for a, g, m, v in triples:
        tmp = np.multiply(g, 1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp += eps_hat
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        a -= tmp
    return p, opt


# -- checkpoints --------------------------------------------------------------


def dumps_checkpoint(p: MlpParams, meta: dict | None = None) -> bytes:
    """Versioned binary blob: magic line, JSON header line, raw little-endian arrays."""
    dtype = np.dtype(p.dtype).newbyteorder("<")
    header = {
        "version": CHECKPOINT_VERSION,
        "dtype": dtype.str,
        "shapes": p.shape_spec(),
        "order": list(PARAM_NAMES),
        "meta": meta or {},
    }
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    for a in p.arrays():
        buf.write(np.ascontiguousarray(a, dtype=dtype).tobytes())
    return buf.getvalue()


def loads_checkpoint(blob: bytes, expect: dict | None = None) -> tuple[MlpParams, dict]:
    """Parse a checkpoint; ``expect`` maps param names to required shapes."""
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise InputError("not an MLP checkpoint (bad magic)")
    rest = blob[len(CHECKPOINT_MAGIC):]
    line_end = rest.index(b"\n")
    header = json.loads(rest[:line_end])
    if header.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {header.get('version')}")
    shapes = {k: tuple(v) for k, v in header["shapes"].items()}
    if expect is not None:
        want = {k: tuple(v) for k, v in expect.items()}
        if want != shapes:
            raise DimensionError(f"checkpoint shapes {shapes} do not match expected {want}")
    dtype = np.dtype(header["dtype"])
    payload = rest[line_end + 1:]
    arrays, offset = [], 0
    for name in header["order"]:
        count = int(np.prod(shapes[name]))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(payload):
            raise InputError("truncated checkpoint")
        arrays.append(np.frombuffer(payload, dtype, count, offset).reshape(shapes[name])
                      .astype(dtype.newbyteorder("="), copy=True))
        offset += nbytes
    if offset != len(payload):
        raise InputError("trailing bytes in checkpoint")
    return MlpParams(*arrays), header.get("meta", {})


def save_checkpoint(path, p: MlpParams, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps_checkpoint(p, meta))


def load_checkpoint(path, expect: dict | None = None) -> tuple[MlpParams, dict]:
    return loads_checkpoint(Path(path).read_bytes(), expect)
