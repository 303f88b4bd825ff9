"""Bi-temporal image pairs: on-disk corpora, synthetic generation, augmentation.

On disk a corpus is ``root/<split>/{A,B,label}/<id>.png`` (8-bit RGB for
A and B, 8-bit gray labels). In memory images are float32 ``(H, W, 3)``
in [0, 1] and labels uint8 ``(H, W)`` in {0, 1}.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from scipy.ndimage import gaussian_filter

from . import seeding
from .errors import ContractError, GenerationError, LoadError

SPLITS = ("train", "val", "test")
BACKGROUND_BLUR = 4.0
MIN_COLOR_CONTRAST = 0.35
MAX_ATTEMPTS = 100


@dataclass
class ImagePair:
    a: np.ndarray
    b: np.ndarray
    label: np.ndarray | None
    id: str

    @property
    def size(self):
        return self.a.shape[:2]


def _to_unit(img_u8):
    return img_u8.astype(np.float32) / np.float32(255.0)


def _to_u8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


# -- synthetic pairs ---------------------------------------------------------

def _background(rng, size):
    noise = rng.uniform(size=(size, size, 3))
    tex = gaussian_filter(noise, sigma=(BACKGROUND_BLUR, BACKGROUND_BLUR, 0), mode="reflect")
    tex = (tex - tex.min(axis=(0, 1))) / np.ptp(tex, axis=(0, 1)).clip(1e-9)
    tint = rng.uniform(0.35, 0.65, size=3)
    return tint + 0.2 * (tex - 0.5)


def _random_object(rng, size, kinds, avoid):
    r_lo, r_hi = max(2, size // 12), max(3, size // 6)
    while True:
        color = rng.uniform(size=3)
        if np.linalg.norm(color - avoid) >= MIN_COLOR_CONTRAST:
            break
    return {
        "kind": kinds[rng.integers(len(kinds))],
        "cy": rng.uniform(0, size),
        "cx": rng.uniform(0, size),
        "ry": rng.uniform(r_lo, r_hi),
        "rx": rng.uniform(r_lo, r_hi),
        "color": color,
    }


def _footprint(obj, size):
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dy, dx = (yy - obj["cy"]) / obj["ry"], (xx - obj["cx"]) / obj["rx"]
    if obj["kind"] == "rectangle":
        return (np.abs(dy) <= 1) & (np.abs(dx) <= 1)
    return dy ** 2 + dx ** 2 <= 1


def _render(background, objects):
    img = background.copy()
    for obj in objects:
        img[_footprint(obj, img.shape[0])] = obj["color"]
    return _to_u8(img)


def _translate(img, dy, dx):
    h, w = img.shape[:2]
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[ys][:, xs]


def synth_pair(cfg, index):
    """Deterministic synthetic pair number ``index`` of the corpus ``cfg``.

    Phase 2 is phase 1 with some objects added or removed, then translated,
    photometrically jittered and noised. The label marks every pixel that
    differs between the two clean renderings, in phase-1 coordinates.
    """
    rng = seeding.rng(cfg.seed, "synth", index)
    size = cfg.size
    enforce = cfg.n_changes[1] > 0
    lo, hi = cfg.change_fraction
    for _ in range(MAX_ATTEMPTS):
        bg = _background(rng, size)
        avoid = bg.mean(axis=(0, 1))
        base = [_random_object(rng, size, cfg.kinds, avoid)
                for _ in range(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))]
        after = list(base)
        for _ in range(rng.integers(cfg.n_changes[0], cfg.n_changes[1] + 1)):
            if after and rng.random() < 0.5:
                after.pop(rng.integers(len(after)))
            else:
                after.append(_random_object(rng, size, cfg.kinds, avoid))
        a = _render(bg, base)
        clean_b = _render(bg, after)
        label = (a != clean_b).any(axis=-1).astype(np.uint8)
        if not enforce or lo <= label.mean() <= hi:
            break
    else:
        raise GenerationError(
            f"could not satisfy change_fraction={cfg.change_fraction} for pair {index} "
            f"after {MAX_ATTEMPTS} placement attempts"
        )
    b = clean_b.astype(np.float64) / 255.0
    if cfg.shift_px:
        dy, dx = rng.integers(-cfg.shift_px, cfg.shift_px + 1, size=2)
        b = _translate(b, dy, dx)
    if cfg.brightness or cfg.contrast:
        gain = 1 + rng.uniform(-cfg.contrast, cfg.contrast)
        offset = rng.uniform(-cfg.brightness, cfg.brightness)
        b = (b - 0.5) * gain + 0.5 + offset
    if cfg.noise_sigma:
        b = b + rng.normal(0.0, cfg.noise_sigma, size=b.shape)
    return ImagePair(_to_unit(a), _to_unit(_to_u8(b)), label, f"synth_{index:05d}")


def synth_split(cfg, split, count):
    """``count`` pairs for one split; splits draw disjoint index ranges."""
    offset = {s: i for i, s in enumerate(SPLITS)}[split] * 1_000_000
    return [synth_pair(cfg, offset + i) for i in range(count)]


# -- disk IO -----------------------------------------------------------------

def write_pair(pair, root, split):
    base = Path(root) / split
    for sub in ("A", "B", "label"):
        (base / sub).mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_u8(pair.a)).save(base / "A" / f"{pair.id}.png")
    Image.fromarray(_to_u8(pair.b)).save(base / "B" / f"{pair.id}.png")
    if pair.label is not None:
        Image.fromarray((pair.label.astype(np.uint8) * 255)).save(base / "label" / f"{pair.id}.png")


def _read_rgb(path):
    with Image.open(path) as im:
        return _to_unit(np.asarray(im.convert("RGB")))


def _read_label(path):
    with Image.open(path) as im:
        return (np.asarray(im.convert("L")) > 127).astype(np.uint8)


def load_dataset(root, split):
    """All pairs of ``root/split`` sorted by filename; labels binarised at > 127."""
    base = Path(root) / split
    dirs = {sub: base / sub for sub in ("A", "B", "label")}
    for sub in ("A", "B"):
        if not dirs[sub].is_dir():
            raise LoadError(f"missing directory {dirs[sub]}")
    has_label = dirs["label"].is_dir()
    stems = {sub: {p.stem: p for p in d.glob("*.png")} for sub, d in dirs.items() if sub != "label" or has_label}
    ids = sorted(set().union(*(s.keys() for s in stems.values())))
    pairs = []
    for i in ids:
        for sub, found in stems.items():
            if i not in found:
                raise LoadError(f"pair '{i}' has no counterpart {dirs[sub] / (i + '.png')}")
        a = _read_rgb(stems["A"][i])
        b = _read_rgb(stems["B"][i])
        label = _read_label(stems["label"][i]) if has_label else None
        if a.shape != b.shape or (label is not None and label.shape != a.shape[:2]):
            shapes = [a.shape[:2], b.shape[:2]] + ([label.shape] if label is not None else [])
            raise LoadError(f"pair '{i}' has mismatched sizes {shapes}")
        pairs.append(ImagePair(a, b, label, i))
    return pairs


# -- augmentation ------------------------------------------------------------

def _resize(arr, size, mode):
    t = torch.from_numpy(np.ascontiguousarray(arr))
    if t.dim() == 2:
        t = t[None, None].float()
    else:
        t = t.permute(2, 0, 1)[None]
    if mode == "nearest":
        out = F.interpolate(t, size=size, mode="nearest")
    else:
        out = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
    out = out[0]
    return out[0].numpy() if arr.ndim == 2 else out.permute(1, 2, 0).numpy()


def augment(pair, seed, crop_size=None):
    """Random flips, then a random square crop resized back to full size.

    The same spatial transform is applied to both images and the label.
    ``crop_size`` defaults to 7/8 of the image side.
    """
    if pair.label is None:
        raise ContractError("augment needs a labelled pair")
    h, w = pair.size
    if crop_size is None:
        crop_size = int(round(min(h, w) * 7 / 8))
    if crop_size > min(h, w) or crop_size <= 0:
        raise ContractError(f"crop_size {crop_size} exceeds image size {h}x{w}")
    rng = seeding.rng(seed, "augment")
    hflip, vflip = rng.random() < 0.5, rng.random() < 0.5
    y0 = int(rng.integers(0, h - crop_size + 1))
    x0 = int(rng.integers(0, w - crop_size + 1))

    def spatial(x, mode):
        if hflip:
            x = x[:, ::-1]
        if vflip:
            x = x[::-1]
        x = x[y0:y0 + crop_size, x0:x0 + crop_size]
        if crop_size != h or crop_size != w:
            x = _resize(x, (h, w), mode)
        return np.ascontiguousarray(x)

    label = spatial(pair.label, "nearest").astype(np.uint8)
    return ImagePair(spatial(pair.a, "bilinear"), spatial(pair.b, "bilinear"), label, pair.id)


def to_batch(pairs, dtype=torch.float32):
    """Stack pairs into ``(a, b, label)`` tensors shaped for the model."""
    a = torch.from_numpy(np.stack([p.a for p in pairs])).permute(0, 3, 1, 2).to(dtype)
    b = torch.from_numpy(np.stack([p.b for p in pairs])).permute(0, 3, 1, 2).to(dtype)
    label = None
    if all(p.label is not None for p in pairs):
        label = torch.from_numpy(np.stack([p.label for p in pairs])).to(dtype)
    return a.contiguous(), b.contiguous(), label
