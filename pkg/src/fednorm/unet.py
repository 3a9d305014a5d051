"""2D U-Net with Group Normalization, built on the numpy kernel in ``fednorm.nn``.

Block layout::

    encoder stage i : (conv3 -> GN -> ReLU) x2 -> dropout -> [skip] -> maxpool
    bottleneck      : (conv3 -> GN -> ReLU) x2
    decoder stage i : upconv2 -> concat(skip, up) -> (conv3 -> GN -> ReLU) x2
    head            : conv1 -> sigmoid

Stage ``i`` has ``base * 2**i`` channels; the bottleneck has ``base * 2**depth``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import gdl_with_grad
from .nn import functional as F
from .nn.optim import AdamState, adam_step
from .nn.params import LayerParam, load_checkpoint, load_values, save_checkpoint, snapshot
from .nn.rng import RngStream

log = logging.getLogger(__name__)


@dataclass
class UNetConfig:
    in_channels: int = 3
    base_channels: int = 8
    depth: int = 3
    dropout_p: float = 0.3
    max_groups: int = 8
    seed: int = 0

    def stage_channels(self) -> list[int]:
        return [self.base_channels * 2**i for i in range(self.depth + 1)]

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * 2**self.depth


class UNet:
    def __init__(self, cfg: UNetConfig):
        self.cfg = cfg
        self.params: list[LayerParam] = []
        self._by_name: dict[str, LayerParam] = {}
        rng = RngStream(cfg.seed, "unet-init")
        ch = cfg.stage_channels()
        cin = cfg.in_channels
        for i in range(cfg.depth):
            self._double_conv(f"enc{i}", cin, ch[i], rng)
            cin = ch[i]
        self._double_conv("mid", cin, ch[cfg.depth], rng)
        for i in reversed(range(cfg.depth)):
            self._upconv(f"dec{i}.up", ch[i + 1], ch[i], rng)
            self._double_conv(f"dec{i}", 2 * ch[i], ch[i], rng)
        self._conv("head", ch[0], 1, 1, rng)
        self._tape = None

    # -- construction -------------------------------------------------
    def _add(self, name, kind, value):
        p = LayerParam(name, kind, value.astype(np.float32))
        self.params.append(p)
        self._by_name[name] = p

    def _conv(self, name, cin, cout, k, rng):
        bound = math.sqrt(6.0 / (cin * k * k))
        self._add(f"{name}.weight", "conv", rng.uniform(-bound, bound, (cout, cin, k, k)))
        self._add(f"{name}.bias", "conv", np.zeros(cout))

    def _upconv(self, name, cin, cout, rng):
        bound = math.sqrt(6.0 / cin)
        self._add(f"{name}.weight", "conv", rng.uniform(-bound, bound, (cin, cout, 2, 2)))
        self._add(f"{name}.bias", "conv", np.zeros(cout))

    def _gn(self, name, c):
        self._add(f"{name}.gamma", "norm", np.ones(c))
        self._add(f"{name}.beta", "norm", np.zeros(c))

    def _double_conv(self, name, cin, cout, rng):
        self._conv(f"{name}.conv1", cin, cout, 3, rng)
        self._gn(f"{name}.gn1", cout)
        self._conv(f"{name}.conv2", cout, cout, 3, rng)
        self._gn(f"{name}.gn2", cout)

    def __getitem__(self, name) -> LayerParam:
        return self._by_name[name]

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def kinds(self) -> list[str]:
        return [p.kind for p in self.params]

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.params)

    def state(self) -> dict[str, np.ndarray]:
        return snapshot(self.params)

    def load_state(self, values, kinds=None):
        load_values(self.params, values, kinds)

    def save(self, path):
        save_checkpoint(path, self.names, self.kinds, self.state())

    def load(self, path):
        names, kinds, values = load_checkpoint(path)
        if names != self.names or kinds != self.kinds:
            raise ValueError(f"checkpoint topology at {path} does not match model")
        self.load_state(values)

    # -- forward / backward ---------------------------------------------
    def _block_fwd(self, name, x, tape, first=False):
        for j in (1, 2):
            x, c = F.conv2d_forward(x, self[f"{name}.conv{j}.weight"].value,
                                    self[f"{name}.conv{j}.bias"].value, need_dx=not (first and j == 1))
            tape.append(("conv", f"{name}.conv{j}", c))
            x, c = F.groupnorm_forward(x, self[f"{name}.gn{j}.gamma"].value, self[f"{name}.gn{j}.beta"].value,
                                       min(self.cfg.max_groups, x.shape[-1]))
            tape.append(("gn", f"{name}.gn{j}", c))
            x, c = F.relu_forward(x)
            tape.append(("relu", None, c))
        return x

    def forward(self, x: np.ndarray, training: bool = False, rng: RngStream | None = None) -> np.ndarray:
        """Map a (N, 3, H, W) batch to (N, 1, H, W) tumor probabilities."""
        depth = self.cfg.depth
        n, c, h, w = x.shape
        if c != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} input channels, got {c}")
        step = 2**depth
        if h % step or w % step:
            raise ValueError(
                f"spatial dims {h}x{w} must be divisible by {step}; "
                f"pad to {-(-h // step) * step}x{-(-w // step) * step}"
            )
        if training and self.cfg.dropout_p > 0 and rng is None:
            raise ValueError("training mode with dropout needs an RngStream")
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float32).transpose(0, 2, 3, 1))
        tape = []
        skips = []
        for i in range(depth):
            x = self._block_fwd(f"enc{i}", x, tape, first=i == 0)
            x, c = F.dropout_forward(x, self.cfg.dropout_p, rng, training)
            tape.append(("dropout", None, c))
            skips.append(x)
            x, c = F.maxpool2_forward(x)
            tape.append(("pool", i, c))
        x = self._block_fwd("mid", x, tape)
        for i in reversed(range(depth)):
            x, c = F.upconv2_forward(x, self[f"dec{i}.up.weight"].value, self[f"dec{i}.up.bias"].value)
            tape.append(("upconv", f"dec{i}.up", c))
            skip = skips[i]
            assert skip.shape[1:3] == x.shape[1:3], "skip/upsample spatial mismatch"
            tape.append(("concat", i, skip.shape[-1]))
            x = np.concatenate([skip, x], axis=-1)
            x = self._block_fwd(f"dec{i}", x, tape)
        x, c = F.conv2d_forward(x, self["head.weight"].value, self["head.bias"].value)
        tape.append(("conv", "head", c))
        out, c = F.sigmoid_forward(x)
        tape.append(("sigmoid", None, c))
        self._tape = tape
        return out.transpose(0, 3, 1, 2)

    def backward(self, dout: np.ndarray):
        """Accumulate parameter gradients for the most recent ``forward``."""
        if self._tape is None:
            raise RuntimeError("backward called without a preceding forward")
        g = np.ascontiguousarray(dout.astype(np.float32, copy=False).transpose(0, 2, 3, 1))
        skip_grads = {}
        for op, name, cache in reversed(self._tape):
            if op == "sigmoid":
                g = F.sigmoid_backward(g, cache)
            elif op == "conv":
                g, dw, db = F.conv2d_backward(g, cache)
                self[f"{name}.weight"].grad += dw
                self[f"{name}.bias"].grad += db
            elif op == "gn":
                g, dg, dbeta = F.groupnorm_backward(g, cache)
                self[f"{name}.gamma"].grad += dg
                self[f"{name}.beta"].grad += dbeta
            elif op == "relu":
                g = F.relu_backward(g, cache)
            elif op == "concat":
                skip_grads[name] = g[..., :cache]
                g = np.ascontiguousarray(g[..., cache:])
            elif op == "upconv":
                g, dw, db = F.upconv2_backward(g, cache)
                self[f"{name}.weight"].grad += dw
                self[f"{name}.bias"].grad += db
            elif op == "pool":
                g = F.maxpool2_backward(g, cache) + skip_grads.pop(name)
            elif op == "dropout":
                g = F.dropout_backward(g, cache)
            else:  # pragma: no cover
                raise RuntimeError(op)
        self._tape = None


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float | None] = field(default_factory=list)
    best_epoch: int | None = None
    best_loss: float | None = None
    best_params: dict | None = field(default=None, repr=False)
    checkpoint_on: str = "train"

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"epoch": e, "train_loss": tl, "val_loss": vl})
            for e, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss))
        ]
        return "".join(line + "\n" for line in lines)


def stack_batch(samples):
    x = np.stack([s.input for s in samples]).astype(np.float32)
    t = np.stack([s.target for s in samples])[:, None].astype(np.float32)
    return x, t


def mean_loss(model: UNet, samples, batch_size: int) -> float:
    total, count = 0.0, 0
    for i in range(0, len(samples), batch_size):
        x, t = stack_batch(samples[i:i + batch_size])
        loss, _ = gdl_with_grad(model.forward(x, training=False), t)
        total += loss * len(x)
        count += len(x)
    return total / count


def train_epochs(model: UNet, train, val, epochs: int, batch_size: int = 16, lr: float = 1e-3,
                 rng: RngStream | None = None, adam: AdamState | None = None,
                 checkpoint_on: str = "train", frozen=frozenset()) -> TrainReport:
    """Minimize the generalized Dice loss with Adam; keep the lowest-loss weights.

    The epoch loss is the mean of the minibatch losses seen while training.
    ``val`` may be empty, in which case validation loss is recorded as None.
    """
    if not train:
        raise ValueError("training set is empty")
    if checkpoint_on not in ("train", "val"):
        raise ValueError(f"checkpoint_on must be 'train' or 'val', got {checkpoint_on!r}")
    if checkpoint_on == "val" and not val:
        raise ValueError("checkpoint_on='val' needs a validation set")
    rng = rng or RngStream(model.cfg.seed, "train")
    adam = adam or AdamState(lr=lr)
    report = TrainReport(checkpoint_on=checkpoint_on, best_params=model.state())
    for epoch in range(epochs):
        order = rng.child("epoch", epoch, "shuffle").permutation(len(train))
        drop_rng = rng.child("epoch", epoch, "dropout")
        losses = []
        for b, start in enumerate(range(0, len(train), batch_size)):
            x, t = stack_batch([train[k] for k in order[start:start + batch_size]])
            probs = model.forward(x, training=True, rng=drop_rng)
            loss, grad = gdl_with_grad(probs, t)
            if not np.isfinite(loss):
                raise FloatingPointError(f"loss diverged at epoch {epoch}, batch {b}")
            model.backward(grad)
            adam_step(model.params, adam, frozen)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_loss = mean_loss(model, val, batch_size) if val else None
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        crit = train_loss if checkpoint_on == "train" else val_loss
        if report.best_loss is None or crit < report.best_loss:
            report.best_loss, report.best_epoch = crit, epoch
            report.best_params = model.state()
        log.debug("epoch %d train %.4f val %s", epoch, train_loss, val_loss)
    return report


def predict_volume(model: UNet, samples, batch_size: int = 16):
    """Run eval-mode inference on slices and stack them as (P, T) 3D arrays."""
    if not samples:
        raise ValueError("no slices to predict")
    probs = []
    for i in range(0, len(samples), batch_size):
        x, _ = stack_batch(samples[i:i + batch_size])
        probs.append(model.forward(x, training=False)[:, 0])
    p = np.concatenate(probs)
    t = np.stack([s.target for s in samples]).astype(np.float32)
    return p, t


def predict_study(model: UNet, study, brain_frac: float = 0.20, tumor_frac: float = 0.05,
                  batch_size: int = 16):
    from .volume import extract_slices

    samples = extract_slices(study, brain_frac, tumor_frac)
    if not samples:
        raise ValueError(f"subject {study.subject_id} has no slices passing the filter")
    return predict_volume(model, samples, batch_size)


def config_dict(cfg: UNetConfig) -> dict:
    return asdict(cfg)
