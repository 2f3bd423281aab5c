"""Dataset ingestion, mask decoding, preprocessing and batching.

Supports folder datasets with three mask encodings (indexed palette PNGs,
scene-parsing R/G channel packing, raw single-channel class indices) and a
bundled synthetic rectangle generator for desk-scale runs.
"""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import DataError

MASK_ENCODINGS = ("indexed-palette", "ade-rg-channels", "raw-class-index")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class DatasetLayout:
    root: str
    image_dir: str = "images"
    mask_dir: str = "masks"
    split_list: str | None = None
    mask_encoding: str = "raw-class-index"
    num_classes: int = 2
    void_label: int | None = 255
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD

    def validate(self):
        if self.mask_encoding not in MASK_ENCODINGS:
            raise DataError(
                f"unsupported mask encoding {self.mask_encoding!r}; "
                f"expected one of {MASK_ENCODINGS}")
        return self


@dataclass
class Sample:
    image: np.ndarray  # (3,H,W) normalized
    mask: np.ndarray   # (H,W) int class indices
    id: str = ""


def decode_mask(raw, encoding, num_classes, void_label=None):
    """Decode raw mask pixels into class indices; out-of-range maps to void."""
    raw = np.asarray(raw)
    if encoding == "indexed-palette" or encoding == "raw-class-index":
        if raw.ndim != 2:
            raise DataError(f"{encoding} masks must be single-channel, got shape {raw.shape}")
        mask = raw.astype(np.int64)
    elif encoding == "ade-rg-channels":
        if raw.ndim != 3 or raw.shape[2] < 2:
            raise DataError(
                f"ade-rg-channels masks need R and G channels, got shape {raw.shape}")
        r = raw[..., 0].astype(np.int64)
        g = raw[..., 1].astype(np.int64)
        mask = (r // 10) * 256 + g
    else:
        raise DataError(f"unsupported mask encoding {encoding!r}")
    out_of_range = (mask < 0) | (mask >= num_classes)
    if void_label is not None:
        out_of_range &= mask != void_label
    if out_of_range.any():
        if void_label is None:
            bad = int(mask[out_of_range][0])
            raise DataError(
                f"mask label {bad} out of range [0, {num_classes}) and no void label set")
        mask = np.where(out_of_range, void_label, mask)
    return mask


def preprocess(image, target_size, mean=IMAGENET_MEAN, std=IMAGENET_STD):
    """uint8 HxWx3 (or PIL image) -> normalized (3,H,W) float map."""
    th, tw = target_size
    if th % 32 or tw % 32:
        raise DataError(f"target size {th}x{tw} must be a multiple of 32")
    if not isinstance(image, Image.Image):
        image = Image.fromarray(np.asarray(image))
    image = image.convert("RGB")
    if image.size != (tw, th):
        image = image.resize((tw, th), Image.BILINEAR)
    arr = np.asarray(image, dtype=np.float64) / 255.0
    arr = (arr - np.asarray(mean)) / np.asarray(std)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def resize_mask(mask, target_size):
    """Nearest-neighbor mask resize; never invents labels."""
    th, tw = target_size
    if mask.shape == (th, tw):
        return mask.copy()
    img = Image.fromarray(mask.astype(np.int32), mode="I")
    out = img.resize((tw, th), Image.NEAREST)
    return np.asarray(out).astype(np.int64)


def _read_image(path):
    try:
        return Image.open(path)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from None


def load_folder_dataset(layout, target_size):
    """Materialize a folder dataset into preprocessed samples."""
    layout.validate()
    image_dir = os.path.join(layout.root, layout.image_dir)
    mask_dir = os.path.join(layout.root, layout.mask_dir)
    if layout.split_list:
        with open(os.path.join(layout.root, layout.split_list)) as fh:
            stems = [line.strip() for line in fh if line.strip()]
    else:
        if not os.path.isdir(image_dir):
            raise DataError(f"image directory not found: {image_dir}")
        stems = sorted(os.path.splitext(name)[0] for name in os.listdir(image_dir))
    if not stems:
        raise DataError(f"no samples found under {layout.root}")
    samples = []
    for stem in stems:
        img_path = _resolve_stem(image_dir, stem)
        mask_path = _resolve_stem(mask_dir, stem)
        image = _read_image(img_path)
        raw_mask = _load_raw_mask(mask_path, layout.mask_encoding)
        mask = decode_mask(raw_mask, layout.mask_encoding, layout.num_classes,
                           layout.void_label)
        samples.append(Sample(
            image=preprocess(image, target_size, layout.mean, layout.std),
            mask=resize_mask(mask, target_size),
            id=stem,
        ))
    return samples


def _resolve_stem(directory, stem):
    matches = sorted(
        name for name in os.listdir(directory)
        if os.path.splitext(name)[0] == stem
    ) if os.path.isdir(directory) else []
    if len(matches) != 1:
        raise DataError(
            f"stem {stem!r} resolves to {len(matches)} files under {directory}, expected 1")
    return os.path.join(directory, matches[0])


def _load_raw_mask(path, encoding):
    img = _read_image(path)
    if encoding == "ade-rg-channels":
        return np.asarray(img.convert("RGB"))
    if encoding == "indexed-palette":
        if img.mode != "P":
            img = img.convert("P")
        return np.asarray(img)
    return np.asarray(img.convert("I"))


# -- synthetic desk-scale corpus ---------------------------------------------

def class_palette(num_classes):
    """Deterministic, well-separated RGB color per class (class 0 is dark gray)."""
    colors = [(40, 40, 40)]
    hues = np.linspace(0.0, 1.0, num_classes, endpoint=False)[1:]
    for h in hues:
        # crude hue wheel; saturation/value fixed high
        i = int(h * 6) % 6
        f = h * 6 - int(h * 6)
        v, p, q, t = 230, 40, int(230 - f * 190), int(40 + f * 190)
        rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
        colors.append(rgb)
    return np.array(colors, dtype=np.uint8)


def synthetic_shapes(num_samples, size, num_classes, seed, noise=0.03):
    """Colored axis-aligned rectangles on a background; deterministic per seed.

    Rectangles stay inside a 1-pixel border so class 0 always keeps a
    nonzero pixel share.  Images are normalized with mean/std 0.5.
    """
    if num_classes < 2:
        raise DataError(f"synthetic data needs >= 2 classes, got {num_classes}")
    rng = np.random.default_rng(seed)
    palette = class_palette(num_classes).astype(np.float64) / 255.0
    samples = []
    for idx in range(num_samples):
        mask = np.zeros((size, size), dtype=np.int64)
        img = np.empty((size, size, 3))
        img[:] = palette[0]
        for cls in range(1, num_classes):
            max_dim = max(2, size // 2)
            rh = int(rng.integers(max(2, size // 8), max_dim + 1))
            rw = int(rng.integers(max(2, size // 8), max_dim + 1))
            top = int(rng.integers(1, size - rh))
            left = int(rng.integers(1, size - rw))
            mask[top:top + rh, left:left + rw] = cls
            img[top:top + rh, left:left + rw] = palette[cls]
        img = img + rng.normal(0.0, noise, size=img.shape)
        img = np.clip(img, 0.0, 1.0)
        chw = np.ascontiguousarray(img.transpose(2, 0, 1))
        samples.append(Sample(image=(chw - 0.5) / 0.5, mask=mask, id=f"synthetic_{idx:04d}"))
    return samples


def batches(samples, batch_size, shuffle_seed=None):
    """Yield (image_batch, mask_batch, ids) covering the dataset exactly once.

    The final partial batch is emitted; order is a deterministic permutation
    of the dataset when shuffle_seed is given.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    if not samples:
        raise DataError("empty dataset")
    order = np.arange(len(samples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in order[start:start + batch_size]]
        images = np.stack([s.image for s in chunk])
        masks = np.stack([s.mask for s in chunk])
        yield images, masks, [s.id for s in chunk]
