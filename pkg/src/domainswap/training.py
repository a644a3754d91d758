"""Adam optimization of the full objective, checkpointing, deterministic resume.

Each iteration consumes one image per domain and performs one discriminator
update followed by one generator update. All randomness is derived from
(seed, stream, step), so a run is bitwise reproducible and a checkpoint
resume continues the exact trajectory.
"""

from __future__ import annotations

import contextlib
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import UnpairedSampler
from .errors import CheckpointError, ConfigError, ContractError, NumericError, TrainingAbort
from .losses import LossReport, LossWeights, adversarial_loss_d, full_objective
from .networks import TranslationModel, build_model
from .tensor import backward, no_grad

_STYLE_STREAM_D = 101
_STYLE_STREAM_G = 102

CHECKPOINT_FORMAT = "domainswap-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Schedule:
    """Step-wise learning-rate halving: lr(t) = base_lr * 0.5 ** (t // halve_every)."""

    base_lr: float = 1e-4
    halve_every: int = 100_000

    def lr_at(self, step: int) -> float:
        return self.base_lr * 0.5 ** (step // self.halve_every)


class AdamState:
    """Optimizer state: hyperparameters, step count, per-parameter moments."""

    def __init__(self, beta1: float = 0.05, beta2: float = 0.999,
                 lr: float = 1e-4, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.lr = lr
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(named_params, grads, state: AdamState, lr: float | None = None):
    """Apply one bias-corrected Adam update in place.

    ``named_params`` is a sequence of (name, tensor); ``grads`` may supply
    gradient arrays explicitly, otherwise each tensor's ``.grad`` is used.
    """
    if lr is None:
        lr = state.lr
    if grads is None:
        grads = [p.grad for _, p in named_params]
    if len(grads) != len(named_params):
        raise ContractError("grads and params must align")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for (name, p), g in zip(named_params, grads):
        if g is None:
            raise ContractError(f"missing gradient for parameter {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@contextlib.contextmanager
def _frozen(named_params):
    """Temporarily stop gradient accumulation into the given parameters."""
    saved = [(p, p.requires_grad) for _, p in named_params]
    for p, _ in saved:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, was in saved:
            p.requires_grad = was


def discriminator_step(model: TranslationModel, x1, x2, style_1, style_2,
                       d_state: AdamState, lr: float):
    """Update both discriminators on real images and detached translations."""
    with no_grad():
        x12 = model.translate(x1, style_2, source_domain=1)
        x21 = model.translate(x2, style_1, source_domain=2)
    d1 = adversarial_loss_d(x1, x21, model, 1)
    d2 = adversarial_loss_d(x2, x12, model, 2)
    backward(T.add(d1, d2))
    adam_step(model.discriminator_params(), None, d_state, lr)
    values = (d1.item(), d2.item())
    model.zero_grad()
    return values


def generator_step(model: TranslationModel, x1, x2, weights: LossWeights,
                   style_1, style_2, g_state: AdamState, lr: float,
                   saturating: bool = False) -> LossReport:
    """Update encoders and decoders on the full objective; discriminators frozen."""
    with _frozen(model.discriminator_params()):
        total, report = full_objective(x1, x2, model, weights, style_1, style_2, saturating)
        backward(total)
        adam_step(model.generator_params(), None, g_state, lr)
    model.zero_grad()
    return report


def train_step(model: TranslationModel, batch, weights: LossWeights,
               g_state: AdamState, d_state: AdamState, lr: float,
               step: int, seed: int, saturating: bool = False) -> LossReport:
    """One full iteration: discriminator update, then generator update."""
    x1, x2 = batch
    try:
        rng_d = np.random.default_rng((seed, _STYLE_STREAM_D, step))
        s1 = model.draw_style(rng_d, x1.shape[0])
        s2 = model.draw_style(rng_d, x2.shape[0])
        d1, d2 = discriminator_step(model, x1, x2, s1, s2, d_state, lr)

        rng_g = np.random.default_rng((seed, _STYLE_STREAM_G, step))
        s1 = model.draw_style(rng_g, x1.shape[0])
        s2 = model.draw_style(rng_g, x2.shape[0])
        report = generator_step(model, x1, x2, weights, s1, s2, g_state, lr, saturating)
    except NumericError as e:
        raise TrainingAbort(f"step {step}: {e}") from e
    report.d_1, report.d_2 = d1, d2
    for name in LossReport.FIELDS + ("d_1", "d_2"):
        if not np.isfinite(getattr(report, name)):
            raise TrainingAbort(f"step {step}: loss term {name} is non-finite")
    return report


# -- checkpointing --------------------------------------------------------------

@dataclass
class TrainState:
    cfg: RunConfig
    model: TranslationModel
    g_state: AdamState
    d_state: AdamState
    step: int
    sampler_state: dict


def _manifest_entries(model: TranslationModel, g_state: AdamState, d_state: AdamState):
    """Canonical (name, array) ordering: parameters, then optimizer moments."""
    entries = [(name, p.data) for name, p in model.named_params()]
    for prefix, state, params in (("opt_g", g_state, model.generator_params()),
                                  ("opt_d", d_state, model.discriminator_params())):
        for name, p in params:
            entries.append((f"{prefix}.m.{name}", state.m.get(name, np.zeros_like(p.data))))
            entries.append((f"{prefix}.v.{name}", state.v.get(name, np.zeros_like(p.data))))
    return entries


def save_checkpoint(path, cfg: RunConfig, model: TranslationModel,
                    g_state: AdamState, d_state: AdamState,
                    step: int, sampler_state: dict) -> Path:
    """Write a text-header + float32-payload checkpoint; save/load/save is byte-stable."""
    entries = _manifest_entries(model, g_state, d_state)
    blobs = []
    lines = [f"format = {CHECKPOINT_FORMAT}",
             f"version = {CHECKPOINT_VERSION}",
             f"step = {step}"]
    lines += [f"config.{k} = {v}" for k, v in cfg.to_kv().items()]
    lines += [f"sampler.{k} = {sampler_state[k]}"
              for k in ("epoch_a", "pos_a", "epoch_b", "pos_b")]
    lines += [f"opt_g.step = {g_state.step}", f"opt_d.step = {d_state.step}"]
    offset = 0
    for name, arr in entries:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = ",".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {shape} {offset}")
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    lines.append(f"payload.bytes = {len(payload)}")
    lines.append(f"payload.crc32 = {zlib.crc32(payload) & 0xFFFFFFFF}")
    body = ("\n".join(lines) + "\n---\n").encode() + payload
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body)
    return path


def load_checkpoint(path, dtype=np.float32) -> TrainState:
    """Rebuild the model and optimizer states saved by ``save_checkpoint``."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    sep = blob.find(b"\n---\n")
    if sep < 0:
        raise CheckpointError(f"{path}: missing header separator")
    header = blob[:sep].decode()
    payload = blob[sep + 5:]

    kv: dict[str, str] = {}
    manifest: list[tuple[str, tuple[int, ...], int]] = []
    for line in header.splitlines():
        if line.startswith("tensor "):
            try:
                _, name, shape_s, offset_s = line.split(" ")
                shape = tuple(int(d) for d in shape_s.split(","))
                manifest.append((name, shape, int(offset_s)))
            except ValueError as e:
                raise CheckpointError(f"{path}: bad manifest line {line!r}") from e
        elif " = " in line:
            key, value = line.split(" = ", 1)
            kv[key] = value

    if kv.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if kv.get("version") != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"{path}: unsupported version {kv.get('version')!r}")
    expected = int(kv["payload.bytes"])
    if len(payload) != expected:
        raise CheckpointError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if (zlib.crc32(payload) & 0xFFFFFFFF) != int(kv["payload.crc32"]):
        raise CheckpointError(f"{path}: payload checksum mismatch")

    cfg = RunConfig.from_kv({k[len("config."):]: v for k, v in kv.items()
                             if k.startswith("config.")})
    model = build_model(cfg.model_config(), dtype=dtype)
    g_state = AdamState(cfg.beta1, cfg.beta2, cfg.lr)
    d_state = AdamState(cfg.beta1, cfg.beta2, cfg.lr)
    g_state.step = int(kv["opt_g.step"])
    d_state.step = int(kv["opt_d.step"])

    arrays = {}
    for name, shape, offset in manifest:
        n = int(np.prod(shape, dtype=np.int64))
        raw = payload[offset:offset + 4 * n]
        if len(raw) != 4 * n:
            raise CheckpointError(f"{path}: payload too short for tensor {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(dtype)

    params = dict(model.named_params())
    for name, p in params.items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing tensor {name}")
        if arrays[name].shape != p.data.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}: "
                                  f"{arrays[name].shape} vs {p.data.shape}")
        p.data = arrays[name].copy()
    for prefix, state, group in (("opt_g", g_state, model.generator_params()),
                                 ("opt_d", d_state, model.discriminator_params())):
        for name, p in group:
            for slot, store in (("m", state.m), ("v", state.v)):
                key = f"{prefix}.{slot}.{name}"
                if key not in arrays:
                    raise CheckpointError(f"{path}: missing tensor {key}")
                if arrays[key].shape != p.data.shape:
                    raise CheckpointError(f"{path}: shape mismatch for {key}")
                store[name] = arrays[key].copy()

    sampler_state = {k: int(kv[f"sampler.{k}"])
                     for k in ("epoch_a", "pos_a", "epoch_b", "pos_b")}
    return TrainState(cfg, model, g_state, d_state, int(kv["step"]), sampler_state)


# -- the training loop ---------------------------------------------------------------

def run_training(cfg: RunConfig | None = None, resume=None, echo: bool = False) -> Path:
    """Train per the config (or resume a checkpoint); returns the final checkpoint path.

    Emits one structured log line per step to ``<out_dir>/train.log`` and a
    checkpoint every ``checkpoint_every`` steps plus ``ckpt-final.ckpt`` at
    the end.
    """
    if resume is not None:
        state = load_checkpoint(resume)
        cfg, model = state.cfg, state.model
        g_state, d_state = state.g_state, state.d_state
        start = state.step
    elif cfg is not None:
        model = build_model(cfg.model_config())
        g_state = AdamState(cfg.beta1, cfg.beta2, cfg.lr)
        d_state = AdamState(cfg.beta1, cfg.beta2, cfg.lr)
        start = 0
    else:
        raise ContractError("run_training needs a config or a checkpoint to resume")

    dir_a = Path(cfg.data_root) / cfg.domain_a
    dir_b = Path(cfg.data_root) / cfg.domain_b
    for d in (dir_a, dir_b):
        if not d.is_dir():
            raise ConfigError(f"dataset directory does not exist: {d}")

    sampler = UnpairedSampler(dir_a, dir_b, cfg.seed)
    if resume is not None:
        sampler.restore(state.sampler_state)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dump())

    weights = LossWeights(cfg.lambda_x, cfg.lambda_c, cfg.lambda_s)
    schedule = Schedule(cfg.lr, cfg.halve_every)

    mode = "a" if resume is not None else "w"
    with open(out / "train.log", mode) as log:
        for step in range(start, cfg.iters):
            lr = schedule.lr_at(step)
            batch = sampler.next()
            report = train_step(model, batch, weights, g_state, d_state,
                                lr, step, cfg.seed, cfg.saturating_gan)
            if step % cfg.log_every == 0:
                line = report.log_line(step, lr)
                log.write(line + "\n")
                if echo:
                    print(line)
            if (step + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"ckpt-{step + 1:06d}.ckpt", cfg, model,
                                g_state, d_state, step + 1, sampler.state())
    return save_checkpoint(out / "ckpt-final.ckpt", cfg, model,
                           g_state, d_state, cfg.iters, sampler.state())
