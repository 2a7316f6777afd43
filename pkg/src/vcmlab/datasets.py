"""Sequence datasets: in-memory containers, disk layouts and a synthetic
moving-shapes generator used for desk-scale experiments.

Frames are stored as uint8 HxWx3 arrays; annotations as uint8 HxW label
maps (255 = ignore).
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError, EmptySequenceError, MissingAnnotationError

SHAPE_CLASSES = ("background", "disc", "square", "triangle")
IGNORE_INDEX = 255


@dataclass
class Sequence:
    frames: np.ndarray                 # (T, H, W, 3) uint8
    labeled_index: int
    annotation: np.ndarray | None = None  # (H, W) uint8 for the labeled frame
    name: str = ""

    def __post_init__(self):
        if len(self.frames) == 0:
            raise EmptySequenceError(f"sequence {self.name!r} has no frames")
        if not 0 <= self.labeled_index < len(self.frames):
            raise DataError(f"labeled index {self.labeled_index} outside {len(self.frames)} frames")

    def __len__(self):
        return len(self.frames)


@dataclass
class SequenceDataset:
    sequences: list[Sequence] = field(default_factory=list)

    def __len__(self):
        return len(self.sequences)

    def frames(self, i: int) -> np.ndarray:
        return self.sequences[i].frames

    def labeled_frame(self, i: int) -> np.ndarray:
        s = self.sequences[i]
        return s.frames[s.labeled_index]

    def annotation(self, i: int) -> np.ndarray:
        ann = self.sequences[i].annotation
        if ann is None:
            raise MissingAnnotationError(f"sequence {i} ({self.sequences[i].name!r}) has no annotation")
        return ann

    def has_annotations(self) -> bool:
        return all(s.annotation is not None for s in self.sequences)

    def without_annotations(self) -> "SequenceDataset":
        return SequenceDataset([Sequence(s.frames, s.labeled_index, None, s.name) for s in self.sequences])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for s in self.sequences:
            h.update(s.name.encode())
            h.update(s.frames.tobytes())
            h.update(str(s.labeled_index).encode())
        return h.hexdigest()


# -- synthetic moving shapes --------------------------------------------------

def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.empty((h, w, 3))
    for c in range(3):
        base = rng.uniform(0.25, 0.75)
        wave = sum(rng.uniform(0.04, 0.12) * np.cos(2 * np.pi * (rng.uniform(0.3, 2.0) * xx * np.cos(a) +
                   rng.uniform(0.3, 2.0) * yy * np.sin(a)) + rng.uniform(0, 2 * np.pi))
                   for a in rng.uniform(0, np.pi, size=3))
        img[..., c] = base + wave
    texture = ndimage.gaussian_filter(rng.normal(size=(h, w)), 0.8)
    img += 0.08 * texture[..., None] / (texture.std() + 1e-8)
    return img


def _shape_mask(kind: int, cy: float, cx: float, r: float, angle: float, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    if kind == 1:
        return dy * dy + dx * dx <= r * r
    c, s = np.cos(angle), np.sin(angle)
    u, v = c * dx + s * dy, -s * dx + c * dy
    if kind == 2:
        half = r * 0.85
        return (np.abs(u) <= half) & (np.abs(v) <= half)
    # triangle: inside three half-planes of an equilateral triangle of circumradius r*1.2
    R = r * 1.2
    inside = np.ones((h, w), dtype=bool)
    for k in range(3):
        t = 2 * np.pi * k / 3
        inside &= (u * np.cos(t) + v * np.sin(t)) <= R / 2
    return inside


def render_sequence(rng: np.random.Generator, size: int = 128, num_frames: int = 30,
                    num_objects: tuple[int, int] = (2, 5)) -> tuple[np.ndarray, np.ndarray]:
    """Render one sequence of moving shapes: ``(frames uint8 (T,H,W,3), labels uint8 (T,H,W))``."""
    h = w = size
    drift = rng.uniform(-0.6, 0.6, size=2)
    margin = int(np.ceil(np.abs(drift).max() * num_frames)) + 1
    bg = _background(rng, h + 2 * margin, w + 2 * margin)
    n = rng.integers(num_objects[0], num_objects[1] + 1)
    objs = []
    for _ in range(n):
        objs.append(dict(
            kind=int(rng.integers(1, 4)),
            pos=rng.uniform(0.15 * size, 0.85 * size, size=2),
            vel=rng.uniform(-1.2, 1.2, size=2),
            r=rng.uniform(0.07 * size, 0.16 * size),
            angle=rng.uniform(0, np.pi),
            spin=rng.uniform(-0.03, 0.03),
            color=rng.uniform(0.0, 1.0, size=3),
        ))
    frames = np.empty((num_frames, h, w, 3), dtype=np.uint8)
    labels = np.zeros((num_frames, h, w), dtype=np.uint8)
    for t in range(num_frames):
        oy, ox = np.rint(margin + drift * t).astype(int)
        img = bg[oy:oy + h, ox:ox + w].copy()
        lab = np.zeros((h, w), dtype=np.uint8)
        for o in objs:
            cy, cx = o["pos"] + o["vel"] * t
            mask = _shape_mask(o["kind"], cy, cx, o["r"], o["angle"] + o["spin"] * t, h, w)
            shade = 1.0 + 0.25 * (np.mgrid[0:h, 0:w][0] - cy) / size
            img[mask] = (o["color"][None, :] * shade[mask][:, None])
            lab[mask] = o["kind"]
        img += rng.normal(scale=0.01, size=img.shape)
        frames[t] = np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)
        labels[t] = lab
    return frames, labels


def make_shapes_dataset(num_sequences: int, seed: int = 0, size: int = 128, num_frames: int = 30,
                        labeled_index: int = 19, with_annotations: bool = True) -> SequenceDataset:
    """Synthetic segmentation sequences; the labeled frame carries a label map."""
    rng = np.random.default_rng(seed)
    labeled_index = min(labeled_index, num_frames - 1)
    seqs = []
    for i in range(num_sequences):
        frames, labels = render_sequence(rng, size, num_frames)
        ann = labels[labeled_index] if with_annotations else None
        seqs.append(Sequence(frames, labeled_index, ann, name=f"seq{i:04d}"))
    return SequenceDataset(seqs)


# -- disk layouts --------------------------------------------------------------

def _read_rgb(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def load_dataset(root, layout: str = "sequence_folders", labeled_pattern: str = r"_labeled\.png$",
                 annotation_suffix: str = "_gt") -> SequenceDataset:
    """Read a dataset from disk.

    ``sequence_folders``: one directory per sequence, frames are ``*.png`` in
    lexicographic order, the labeled frame is the one whose filename matches
    ``labeled_pattern`` (default: the middle frame if none matches).
    ``flat_images``: every ``*.png`` in ``root`` is a one-frame sequence.
    Annotations are label-map PNGs named ``<frame stem><annotation_suffix>.png``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    pat = re.compile(labeled_pattern)

    def is_frame(p: Path) -> bool:
        return p.suffix == ".png" and not p.stem.endswith(annotation_suffix)

    def annotation_for(p: Path):
        ann = p.with_name(p.stem + annotation_suffix + ".png")
        return np.asarray(Image.open(ann), dtype=np.uint8) if ann.exists() else None

    seqs = []
    if layout == "sequence_folders":
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            files = sorted(p for p in d.iterdir() if is_frame(p))
            if not files:
                continue
            hits = [i for i, f in enumerate(files) if pat.search(f.name)]
            li = hits[0] if hits else len(files) // 2
            frames = np.stack([_read_rgb(f) for f in files])
            seqs.append(Sequence(frames, li, annotation_for(files[li]), name=d.name))
    elif layout == "flat_images":
        for f in sorted(p for p in root.iterdir() if is_frame(p)):
            seqs.append(Sequence(_read_rgb(f)[None], 0, annotation_for(f), name=f.stem))
    else:
        raise DataError(f"unknown dataset layout {layout!r}")
    if not seqs:
        raise DataError(f"no frames found under {root}")
    return SequenceDataset(seqs)


def save_dataset(dataset: SequenceDataset, root, annotation_suffix: str = "_gt") -> Path:
    """Write ``dataset`` in the ``sequence_folders`` layout understood by :func:`load_dataset`."""
    root = Path(root)
    for i, s in enumerate(dataset.sequences):
        d = root / (s.name or f"seq{i:04d}")
        d.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(s.frames):
            stem = f"frame{t:03d}" + ("_labeled" if t == s.labeled_index else "")
            Image.fromarray(frame).save(d / f"{stem}.png")
            if t == s.labeled_index and s.annotation is not None:
                Image.fromarray(s.annotation).save(d / f"{stem}{annotation_suffix}.png")
    return root
