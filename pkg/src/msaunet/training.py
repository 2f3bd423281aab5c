"""Training loop, optimizers, evaluation and checkpoint persistence.

A single trainer thread owns the weights.  Runs are deterministic for a
fixed config and seed: weight init, shuffling and the synthetic corpus all
derive from explicit seeds, and checkpoints round-trip bit-exactly.
"""

import csv
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import batches
from .exceptions import CheckpointError, ConfigError, NumericsError
from .losses import CompoundLossConfig, compound_loss, compound_loss_and_grad
from .metrics import VOID_LABEL, ConfusionMatrix
from .network import MsAUNet, predict_mask

OPTIMIZERS = ("sgd", "rmsprop", "adam")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
RMSPROP_DECAY = 0.99
RMSPROP_EPS = 1e-8


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 50  # desk-scale default; the reference protocol used 1200
    batch_size: int = 4
    checkpoint_every: int = 0  # 0 = final checkpoint only
    seed: int = 0
    loss: CompoundLossConfig = field(default_factory=CompoundLossConfig)
    stop_at_accuracy: float | None = None  # early stop once train accuracy crosses this
    accuracy_check_every: int = 10

    def validate(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        self.loss.validate()
        return self


# -- optimizers ---------------------------------------------------------------


def init_optimizer_state(kind):
    if kind not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {kind!r}")
    return {"kind": kind, "t": 0, "m": {}, "v": {}}


def optimizer_step(params, grads, state, kind, lr):
    """Update params in place from grads; returns the evolved state.

    params/grads are dicts keyed by tensor name.  SGD is the plain rule
    p <- p - lr*g; RMSProp and Adam keep the standard accumulators.
    """
    if kind != state.get("kind"):
        raise ConfigError(f"optimizer state is for {state.get('kind')!r}, not {kind!r}")
    state["t"] += 1
    t = state["t"]
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        if kind == "sgd":
            p -= lr * g
        elif kind == "rmsprop":
            v = state["v"].setdefault(name, np.zeros_like(p))
            v *= RMSPROP_DECAY
            v += (1.0 - RMSPROP_DECAY) * g * g
            p -= lr * g / (np.sqrt(v) + RMSPROP_EPS)
        else:  # adam
            m = state["m"].setdefault(name, np.zeros_like(p))
            v = state["v"].setdefault(name, np.zeros_like(p))
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            m_hat = m / (1.0 - ADAM_BETA1 ** t)
            v_hat = v / (1.0 - ADAM_BETA2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return state


# -- checkpoint format --------------------------------------------------------

CKPT_MAGIC = b"MSAUCKPT"


def save_checkpoint(path, model, config_payload=None, epoch=0):
    """Named-tensor archive: JSON header (name/dtype/shape/offset) + raw payloads."""
    tensors = model.state_dict()
    entries = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({
        "version": 1,
        "epoch": int(epoch),
        "config": config_payload or {},
        "tensors": entries,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (state_dict, config_payload, epoch); bit-exact round trip."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(CKPT_MAGIC))
            if magic != CKPT_MAGIC:
                raise CheckpointError(f"corrupt header: bad magic in {path}")
            raw_len = fh.read(8)
            if len(raw_len) != 8:
                raise CheckpointError(f"corrupt header: truncated length in {path}")
            (header_len,) = struct.unpack("<Q", raw_len)
            raw_header = fh.read(header_len)
            if len(raw_header) != header_len:
                raise CheckpointError(f"corrupt header: truncated header in {path}")
            try:
                header = json.loads(raw_header.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CheckpointError(f"corrupt header: {exc}") from None
            payload = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    state = {}
    for entry in header.get("tensors", []):
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(
                f"corrupt payload: tensor {entry['name']!r} extends past end of file")
        arr = np.frombuffer(payload[start:start + nbytes],
                            dtype=np.dtype(entry["dtype"]))
        state[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return state, header.get("config", {}), header.get("epoch", 0)


# -- evaluation ---------------------------------------------------------------


def evaluate(model, samples, ignore_index=VOID_LABEL):
    """Forward every sample in eval mode and report confusion-matrix metrics."""
    was_training = model.training
    model.eval()
    cm = ConfusionMatrix(model.config.num_classes, ignore_index=ignore_index)
    for sample in samples:
        logits = model.forward(sample.image.astype(model_dtype(model), copy=False))
        cm.accumulate(predict_mask(logits), sample.mask)
    if was_training:
        model.train()
    return cm.report()


def model_dtype(model):
    return next(p.data.dtype for _, p in model.named_parameters())


def train_pixel_accuracy(model, samples):
    return evaluate(model, samples).pixel_accuracy


# -- training loop ------------------------------------------------------------


@dataclass
class RunArtifacts:
    checkpoint_path: str
    csv_path: str
    metrics_path: str
    epochs_run: int
    final_report: object


def train(model, samples, config, out_dir, val_samples=None, config_payload=None,
          log=print):
    """Optimize the model on samples; writes checkpoint(s), loss CSV and metrics.

    Returns RunArtifacts.  Aborts with NumericsError naming the offending
    loss component if anything goes non-finite.
    """
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    dtype = model_dtype(model)
    opt_state = init_optimizer_state(config.optimizer)
    params = {name: p.data for name, p in model.named_parameters()}
    rows = []
    epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        epoch_loss = 0.0
        epoch_parts = {"iou": 0.0, "dice": 0.0, "wce": 0.0}
        seen = 0
        for images, masks, _ in batches(samples, config.batch_size,
                                        shuffle_seed=config.seed * 1_000_003 + epoch):
            model.zero_grad()
            for image, mask in zip(images, masks):
                total, parts, dlogits = _loss_step(model, image, mask, config, dtype, epoch)
                model.backward(dlogits.astype(dtype, copy=False) / len(images))
                epoch_loss += total
                for key in epoch_parts:
                    epoch_parts[key] += parts[key]
                seen += 1
            grads = {name: p.grad for name, p in model.named_parameters()}
            optimizer_step(params, grads, opt_state, config.optimizer,
                           config.learning_rate)
        train_loss = epoch_loss / seen
        val_loss = _validation_loss(model, val_samples or samples, config)
        rows.append((epoch, train_loss, val_loss,
                     epoch_parts["iou"] / seen, epoch_parts["dice"] / seen,
                     epoch_parts["wce"] / seen))
        epochs_run = epoch
        if config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_checkpoint(os.path.join(out_dir, f"checkpoint_{epoch:05d}.ckpt"),
                            model, config_payload, epoch)
        if (config.stop_at_accuracy is not None
                and epoch % max(1, config.accuracy_check_every) == 0):
            acc = train_pixel_accuracy(model, samples)
            if acc >= config.stop_at_accuracy:
                log(f"epoch {epoch}: train pixel accuracy {acc:.4f} reached target, stopping")
                break

    csv_path = os.path.join(out_dir, "loss_log.csv")
    _write_loss_csv(csv_path, rows)
    ckpt_path = os.path.join(out_dir, "checkpoint_final.ckpt")
    save_checkpoint(ckpt_path, model, config_payload, epochs_run)
    report = evaluate(model, val_samples or samples)
    metrics_path = os.path.join(out_dir, "metrics.txt")
    with open(metrics_path, "w") as fh:
        fh.write(report.as_text())
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(report.as_csv())
    return RunArtifacts(ckpt_path, csv_path, metrics_path, epochs_run, report)


def _loss_step(model, image, mask, config, dtype, epoch):
    logits = model.forward(image.astype(dtype, copy=False))
    total, parts, dlogits = compound_loss_and_grad(logits, mask, config.loss)
    for key, value in (("total", total), *parts.items()):
        if not np.isfinite(value):
            raise NumericsError(
                f"non-finite loss component {key!r} ({value}) at epoch {epoch}")
    return total, parts, dlogits


def _validation_loss(model, samples, config):
    model.eval()
    dtype = model_dtype(model)
    total = 0.0
    for sample in samples:
        logits = model.forward(sample.image.astype(dtype, copy=False))
        loss, _ = compound_loss(logits, sample.mask, config.loss)
        total += loss
    return total / len(samples)


def _write_loss_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "l_iou", "l_dice", "l_wce"])
        for epoch, train_loss, val_loss, l_iou, l_dice, l_wce in rows:
            writer.writerow([epoch] + [f"{v:.6f}" for v in
                                       (train_loss, val_loss, l_iou, l_dice, l_wce)])


def load_model_from_checkpoint(path, config, dtype=np.float64):
    """Rebuild a model with the given architecture config and restore tensors."""
    rng = np.random.default_rng(0)
    model = MsAUNet(config, rng, dtype=dtype)
    state, payload, epoch = load_checkpoint(path)
    model.load_state_dict(state)
    model.eval()
    return model, payload, epoch
