"""Declarative run configuration: an INI document with sections for model,
encoder, loss, optimizer, dataset and output.

One schema table drives parsing, validation, defaults, the --help text and
the effective-config echo, so unknown keys are rejected by name and every
default is documented in one place.
"""

import configparser
import io
import os

from .data import DatasetLayout, load_folder_dataset, synthetic_shapes
from .encoder import PRESET_SPECS, EncoderSpec
from .exceptions import ConfigError
from .losses import CompoundLossConfig
from .network import MsauNetConfig
from .training import TrainConfig

SCHEMA = {
    "model": {
        "num_classes": ("int", "3", "number of classes including background"),
        "input_size": ("size", "64x64", "input HxW, multiples of 32"),
        "decoder_channels": ("ints", "256,128,64,32,16", "5 decreasing decoder widths"),
        "dtype": ("choice:float32|float64", "float64", "parameter precision"),
    },
    "encoder": {
        "name": ("str", "tiny", "preset (tiny, densenet169) or 'custom'"),
        "stage_channels": ("optints", "", "6 stage widths, required when name=custom"),
    },
    "loss": {
        "w_iou": ("float", "1.0", "soft-IoU weight"),
        "w_dice": ("float", "0.01", "Dice weight"),
        "w_wce": ("float", "0.8", "weighted cross-entropy weight"),
        "dice_alpha": ("float", "1.0", "Dice smoothing constant"),
        "eps1": ("float", "1.0", "boundary-pixel extra weight"),
        "eps2": ("float", "1.0", "background-pixel extra weight"),
        "background_class": ("int", "0", "background class index"),
        "wce_reduction": ("choice:sum|mean", "mean", "cross-entropy reduction"),
    },
    "optimizer": {
        "kind": ("choice:sgd|rmsprop|adam", "adam", "optimizer"),
        "learning_rate": ("float", "1e-3", "constant learning rate"),
        "epochs": ("int", "50", "training epochs"),
        "batch_size": ("int", "4", "samples per optimizer step"),
        "checkpoint_every": ("int", "0", "epochs between checkpoints, 0 = final only"),
        "seed": ("int", "0", "seed for weights and shuffling"),
    },
    "dataset": {
        "kind": ("choice:synthetic|folder", "synthetic", "dataset source"),
        "num_samples": ("int", "4", "synthetic corpus size"),
        "synthetic_seed": ("int", "7", "synthetic generator seed"),
        "root": ("str", "", "folder dataset root"),
        "image_dir": ("str", "images", "image subdirectory"),
        "mask_dir": ("str", "masks", "mask subdirectory"),
        "split_list": ("str", "", "optional newline-delimited stem list"),
        "mask_encoding": ("choice:indexed-palette|ade-rg-channels|raw-class-index",
                          "raw-class-index", "mask pixel encoding"),
        "void_label": ("optint", "255", "label excluded from loss/metrics, empty = none"),
        "mean": ("floats", "0.5,0.5,0.5", "per-channel normalization mean"),
        "std": ("floats", "0.5,0.5,0.5", "per-channel normalization std"),
    },
    "output": {
        "dir": ("str", "out", "artifact directory (--out overrides)"),
    },
}


def _convert(section, key, kind, raw):
    where = f"[{section}] {key}"
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "size":
            h, _, w = raw.lower().partition("x")
            return (int(h), int(w))
        if kind == "ints":
            return tuple(int(v) for v in raw.split(","))
        if kind == "optints":
            return tuple(int(v) for v in raw.split(",")) if raw.strip() else None
        if kind == "floats":
            return tuple(float(v) for v in raw.split(","))
        if kind == "optint":
            return int(raw) if raw.strip() else None
        if kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split("|")
            if raw not in options:
                raise ConfigError(f"{where}: {raw!r} is not one of {options}")
            return raw
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    raise AssertionError(f"unknown schema kind {kind}")


def parse_run_config(path=None, text=None):
    """Parse and validate an INI run config; returns {section: {key: value}}."""
    parser = configparser.ConfigParser()
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path) as fh:
                parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    values = {section: {key: _convert(section, key, kind, default)
                        for key, (kind, default, _) in keys.items()}
              for section, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            kind = SCHEMA[section][key][0]
            values[section][key] = _convert(section, key, kind, raw)
    return values


def render_ini(values):
    """Serialize resolved values back to INI text (the reproducibility echo)."""
    out = io.StringIO()
    for section, keys in SCHEMA.items():
        out.write(f"[{section}]\n")
        for key in keys:
            value = values[section][key]
            if isinstance(value, tuple):
                if key == "input_size":
                    text = f"{value[0]}x{value[1]}"
                else:
                    text = ",".join(str(v) for v in value)
            elif value is None:
                text = ""
            else:
                text = str(value)
            out.write(f"{key} = {text}\n")
        out.write("\n")
    return out.getvalue()


def help_text():
    lines = ["run config keys (INI format):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (kind, default, doc) in keys.items():
            lines.append(f"    {key} (default {default!r}): {doc}")
    return "\n".join(lines)


class RunConfig:
    """Typed view over the resolved config values."""

    def __init__(self, values):
        self.values = values
        model = values["model"]
        enc = values["encoder"]
        if enc["name"] in PRESET_SPECS:
            spec = PRESET_SPECS[enc["name"]]
            if enc["stage_channels"]:
                spec = EncoderSpec(enc["name"], tuple(enc["stage_channels"]))
        elif enc["name"] == "custom":
            if not enc["stage_channels"]:
                raise ConfigError("[encoder] stage_channels is required when name=custom")
            spec = EncoderSpec("custom", tuple(enc["stage_channels"]))
        else:
            raise ConfigError(
                f"unknown encoder {enc['name']!r}; expected tiny, densenet169 or custom")
        self.model_config = MsauNetConfig(
            encoder_spec=spec,
            num_classes=model["num_classes"],
            input_size=model["input_size"],
            decoder_channels=tuple(model["decoder_channels"]),
        ).validate()
        self.dtype = model["dtype"]

        ds = values["dataset"]
        loss_void = ds["void_label"] if ds["kind"] == "folder" else None
        loss = values["loss"]
        self.loss_config = CompoundLossConfig(
            w_iou=loss["w_iou"], w_dice=loss["w_dice"], w_wce=loss["w_wce"],
            dice_alpha=loss["dice_alpha"], eps1=loss["eps1"], eps2=loss["eps2"],
            background_class=loss["background_class"],
            wce_reduction=loss["wce_reduction"], void_label=loss_void,
        ).validate()

        opt = values["optimizer"]
        self.train_config = TrainConfig(
            optimizer=opt["kind"], learning_rate=opt["learning_rate"],
            epochs=opt["epochs"], batch_size=opt["batch_size"],
            checkpoint_every=opt["checkpoint_every"], seed=opt["seed"],
            loss=self.loss_config,
        ).validate()
        self.out_dir = values["output"]["dir"]

    @property
    def seed(self):
        return self.train_config.seed

    def dataset_samples(self):
        """Materialize the configured dataset as preprocessed samples."""
        ds = self.values["dataset"]
        h, w = self.model_config.input_size
        if ds["kind"] == "synthetic":
            if h != w:
                raise ConfigError("synthetic datasets require a square input size")
            return synthetic_shapes(ds["num_samples"], h,
                                    self.model_config.num_classes,
                                    ds["synthetic_seed"])
        layout = DatasetLayout(
            root=ds["root"], image_dir=ds["image_dir"], mask_dir=ds["mask_dir"],
            split_list=ds["split_list"] or None, mask_encoding=ds["mask_encoding"],
            num_classes=self.model_config.num_classes, void_label=ds["void_label"],
            mean=tuple(ds["mean"]), std=tuple(ds["std"]),
        )
        return load_folder_dataset(layout, (h, w))

    def echo_to(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "config.ini")
        with open(path, "w") as fh:
            fh.write(render_ini(self.values))
        return path
