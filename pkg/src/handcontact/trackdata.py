"""Hand-object tracks, label sequences and their on-disk format.

A track directory holds::

    manifest.json          id, width, height, fps, per-frame file names
    flow_fwd_0000.bin      8-byte magic + (height, width, 2) header + float32 data
    flow_bwd_0001.bin      backward flow, absent for frame 0
    masks_0000.bin         run-length encoded hand masks (target first)
    boxes_0000.txt         "target x0 y0 x1 y1" then "other x0 y0 x1 y1" lines

Label files hold one integer per line: 0 (no contact), 1 (contact) or
-1 (unlabeled).
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NO_CONTACT = 0
CONTACT = 1
UNLABELED = -1

FLOW_MAGIC = b"HCFLOW01"
MASK_MAGIC = b"HCMASK01"
MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


class TrackFormatError(ValueError):
    """Raised when a track fails validation or cannot be read.

    ``frame`` is the offending frame index, or None for track-level problems.
    """

    def __init__(self, message, frame=None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


@dataclass(eq=False)
class Frame:
    hand_mask: np.ndarray
    object_box: tuple
    flow_fwd: np.ndarray
    flow_bwd: np.ndarray | None = None
    other_hand_masks: list = field(default_factory=list)
    other_object_boxes: list = field(default_factory=list)

    def __post_init__(self):
        self.hand_mask = np.asarray(self.hand_mask, dtype=bool)
        self.object_box = tuple(float(v) for v in self.object_box)
        self.flow_fwd = np.asarray(self.flow_fwd, dtype=np.float32)
        if self.flow_bwd is not None:
            self.flow_bwd = np.asarray(self.flow_bwd, dtype=np.float32)
        self.other_hand_masks = [np.asarray(m, dtype=bool) for m in self.other_hand_masks]
        self.other_object_boxes = [tuple(float(v) for v in b) for b in self.other_object_boxes]

    def equals(self, other: "Frame") -> bool:
        if self.object_box != other.object_box:
            return False
        if self.other_object_boxes != other.other_object_boxes:
            return False
        if (self.flow_bwd is None) != (other.flow_bwd is None):
            return False
        if len(self.other_hand_masks) != len(other.other_hand_masks):
            return False
        pairs = [(self.hand_mask, other.hand_mask), (self.flow_fwd, other.flow_fwd)]
        pairs += list(zip(self.other_hand_masks, other.other_hand_masks))
        if self.flow_bwd is not None:
            pairs.append((self.flow_bwd, other.flow_bwd))
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in pairs)


@dataclass(eq=False)
class Track:
    id: str
    width: int
    height: int
    fps: float
    frames: list

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, Track):
            return NotImplemented
        return (
            self.id == other.id
            and self.width == other.width
            and self.height == other.height
            and self.fps == other.fps
            and len(self.frames) == len(other.frames)
            and all(a.equals(b) for a, b in zip(self.frames, other.frames))
        )

    @property
    def shape(self):
        return (self.height, self.width)

    def validate(self):
        """Check every track invariant, raising TrackFormatError on the first violation."""
        if len(self.frames) < 2:
            raise TrackFormatError(f"track {self.id!r} has {len(self.frames)} frames, need >= 2")
        shape = self.shape
        for t, fr in enumerate(self.frames):
            if fr.hand_mask.shape != shape:
                raise TrackFormatError(f"hand mask shape {fr.hand_mask.shape} != {shape}", t)
            for m in fr.other_hand_masks:
                if m.shape != shape:
                    raise TrackFormatError(f"other hand mask shape {m.shape} != {shape}", t)
            for box in [fr.object_box, *fr.other_object_boxes]:
                _check_box(box, self.width, self.height, t)
            if fr.flow_fwd.shape != shape + (2,):
                raise TrackFormatError(f"forward flow shape {fr.flow_fwd.shape} != {shape + (2,)}", t)
            if not np.all(np.isfinite(fr.flow_fwd)):
                raise TrackFormatError("forward flow has non-finite values", t)
            if t == 0:
                continue
            if fr.flow_bwd is None:
                raise TrackFormatError("missing backward flow", t)
            if fr.flow_bwd.shape != shape + (2,):
                raise TrackFormatError(f"backward flow shape {fr.flow_bwd.shape} != {shape + (2,)}", t)
            if not np.all(np.isfinite(fr.flow_bwd)):
                raise TrackFormatError("backward flow has non-finite values", t)
        return self


def _check_box(box, width, height, t):
    x0, y0, x1, y1 = box
    if not all(np.isfinite(box)):
        raise TrackFormatError(f"box {box} is not finite", t)
    if not (0 <= x0 <= x1 <= width and 0 <= y0 <= y1 <= height):
        raise TrackFormatError(f"box {box} outside [0,{width}]x[0,{height}] or inverted", t)


# ---------------------------------------------------------------- geometry


def box_mask(box, shape) -> np.ndarray:
    """Raster of the pixels whose integer coordinates fall in [x0, x1) x [y0, y1)."""
    h, w = shape
    x0, y0, x1, y1 = box
    cols = np.arange(w)
    rows = np.arange(h)
    in_x = (cols >= x0) & (cols < x1)
    in_y = (rows >= y0) & (rows < y1)
    return in_y[:, None] & in_x[None, :]


def mask_bbox(mask):
    """Tight box (x0, y0, x1, y1) around a raster, exclusive upper corner; None if empty."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return None
    return (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def box_iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0:
        return 0.0
    return float(inter / union)


def mask_box_iou(mask, box) -> float:
    """IoU between a raster mask and the raster interior of a box."""
    bm = box_mask(box, mask.shape)
    union = np.count_nonzero(mask | bm)
    if union == 0:
        return 0.0
    return np.count_nonzero(mask & bm) / union


def pair_overlap(track: Track) -> bool:
    """True if the hand mask overlaps the object box in at least one frame."""
    return any(mask_box_iou(fr.hand_mask, fr.object_box) > 0 for fr in track.frames)


# --------------------------------------------------------------- encodings


def rle_encode(mask) -> np.ndarray:
    """Row-major run lengths, alternating 0-runs and 1-runs, starting with zeros."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.uint32)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return runs.astype(np.uint32)


def rle_decode(runs, shape) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64)
    if runs.sum() != shape[0] * shape[1]:
        raise ValueError(f"run lengths sum to {runs.sum()}, expected {shape[0] * shape[1]}")
    values = np.arange(runs.size) % 2 == 1
    return np.repeat(values, runs).reshape(shape)


def encode_masks(masks) -> bytes:
    parts = [MASK_MAGIC, struct.pack("<I", len(masks))]
    for m in masks:
        runs = rle_encode(m)
        parts.append(struct.pack("<III", m.shape[0], m.shape[1], runs.size))
        parts.append(runs.astype("<u4").tobytes())
    return b"".join(parts)


def decode_masks(buf: bytes) -> list:
    if buf[:8] != MASK_MAGIC:
        raise ValueError("bad mask magic")
    (count,) = struct.unpack_from("<I", buf, 8)
    pos = 12
    masks = []
    for _ in range(count):
        h, w, n = struct.unpack_from("<III", buf, pos)
        pos += 12
        runs = np.frombuffer(buf, dtype="<u4", count=n, offset=pos)
        pos += 4 * n
        masks.append(rle_decode(runs, (h, w)))
    return masks


def encode_flow(flow) -> bytes:
    flow = np.asarray(flow, dtype="<f4")
    h, w, c = flow.shape
    return FLOW_MAGIC + struct.pack("<III", h, w, c) + flow.tobytes()


def decode_flow(buf: bytes) -> np.ndarray:
    if buf[:8] != FLOW_MAGIC:
        raise ValueError("bad flow magic")
    h, w, c = struct.unpack_from("<III", buf, 8)
    n = h * w * c
    if len(buf) != 20 + 4 * n:
        raise ValueError(f"flow payload is {len(buf) - 20} bytes, expected {4 * n}")
    return np.frombuffer(buf, dtype="<f4", offset=20).reshape(h, w, c).astype(np.float32)


def _format_boxes(fr: Frame) -> str:
    lines = ["target " + " ".join(repr(v) for v in fr.object_box)]
    lines += ["other " + " ".join(repr(v) for v in b) for b in fr.other_object_boxes]
    return "\n".join(lines) + "\n"


def _parse_boxes(text: str):
    target, others = None, []
    for line in text.splitlines():
        if not line.strip():
            continue
        tag, *vals = line.split()
        box = tuple(float(v) for v in vals)
        if len(box) != 4:
            raise ValueError(f"box line needs 4 values: {line!r}")
        if tag == "target":
            target = box
        elif tag == "other":
            others.append(box)
        else:
            raise ValueError(f"unknown box tag {tag!r}")
    if target is None:
        raise ValueError("no target box")
    return target, others


# -------------------------------------------------------------- persistence


def save_track(track: Track, path, overwrite: bool = False) -> None:
    """Write ``track`` to directory ``path``; refuses to clobber unless ``overwrite``."""
    track.validate()
    path = Path(path)
    if path.exists():
        if not overwrite:
            raise FileExistsError(f"{path} exists; pass overwrite=True to replace it")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    entries = []
    for t, fr in enumerate(track.frames):
        entry = {
            "flow_fwd": f"flow_fwd_{t:04d}.bin",
            "flow_bwd": None if fr.flow_bwd is None else f"flow_bwd_{t:04d}.bin",
            "masks": f"masks_{t:04d}.bin",
            "boxes": f"boxes_{t:04d}.txt",
        }
        (path / entry["flow_fwd"]).write_bytes(encode_flow(fr.flow_fwd))
        if fr.flow_bwd is not None:
            (path / entry["flow_bwd"]).write_bytes(encode_flow(fr.flow_bwd))
        (path / entry["masks"]).write_bytes(encode_masks([fr.hand_mask, *fr.other_hand_masks]))
        (path / entry["boxes"]).write_text(_format_boxes(fr))
        entries.append(entry)
    manifest = {
        "version": FORMAT_VERSION,
        "id": track.id,
        "width": track.width,
        "height": track.height,
        "fps": track.fps,
        "n_frames": len(track.frames),
        "frames": entries,
        "images": None,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1) + "\n")


def load_track(path) -> Track:
    path = Path(path)
    mpath = path / MANIFEST_NAME
    if not mpath.is_file():
        raise TrackFormatError(f"missing manifest {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
        n = int(manifest["n_frames"])
        width, height = int(manifest["width"]), int(manifest["height"])
        entries = manifest["frames"]
    except (ValueError, KeyError, TypeError) as exc:
        raise TrackFormatError(f"bad manifest {mpath}: {exc}") from exc
    frames = []
    for t in range(n):
        if t >= len(entries):
            raise TrackFormatError(f"manifest declares {n} frames but lists {len(entries)}", t)
        frames.append(_load_frame(path, entries[t], t))
    track = Track(str(manifest["id"]), width, height, float(manifest["fps"]), frames)
    return track.validate()


def _read(path: Path, name, t) -> bytes:
    if not name:
        raise TrackFormatError("file name missing from manifest", t)
    fpath = path / name
    if not fpath.is_file():
        raise TrackFormatError(f"missing file {fpath}", t)
    return fpath.read_bytes()


def _load_frame(path, entry, t) -> Frame:
    try:
        flow_fwd = decode_flow(_read(path, entry.get("flow_fwd"), t))
        flow_bwd = None
        if entry.get("flow_bwd") is not None or t > 0:
            flow_bwd = decode_flow(_read(path, entry.get("flow_bwd"), t))
        masks = decode_masks(_read(path, entry.get("masks"), t))
        target, others = _parse_boxes(_read(path, entry.get("boxes"), t).decode())
    except TrackFormatError:
        raise
    except (ValueError, struct.error) as exc:
        raise TrackFormatError(str(exc), t) from exc
    if not masks:
        raise TrackFormatError("mask file holds no hand mask", t)
    return Frame(masks[0], target, flow_fwd, flow_bwd, masks[1:], others)


def track_checksum(track: Track) -> str:
    """SHA-256 over every stored field, in the precision they are persisted with."""
    h = hashlib.sha256()
    h.update(f"{track.id}|{track.width}|{track.height}|{track.fps!r}|{len(track)}".encode())
    for fr in track.frames:
        h.update(np.packbits(fr.hand_mask).tobytes())
        h.update(np.asarray(fr.object_box, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(fr.flow_fwd, dtype="<f4").tobytes())
        h.update(b"-" if fr.flow_bwd is None else np.ascontiguousarray(fr.flow_bwd, dtype="<f4").tobytes())
        h.update(struct.pack("<I", len(fr.other_hand_masks)))
        for m in fr.other_hand_masks:
            h.update(np.packbits(m).tobytes())
        h.update(np.asarray(fr.other_object_boxes, dtype="<f8").tobytes())
    return h.hexdigest()


# ------------------------------------------------------------------ labels


def save_labels(labels, path) -> None:
    labels = np.asarray(labels)
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def load_labels(path) -> np.ndarray:
    values = [int(line) for line in Path(path).read_text().split()]
    arr = np.asarray(values, dtype=np.int8)
    if not np.isin(arr, (NO_CONTACT, CONTACT, UNLABELED)).all():
        raise ValueError(f"{path}: labels must be 0, 1 or -1")
    return arr


def check_label_length(labels, track: Track):
    if len(labels) != len(track):
        raise ValueError(f"label sequence has {len(labels)} entries, track {track.id!r} has {len(track)} frames")
    return labels


def list_track_dirs(root) -> list:
    """Track directories directly under ``root``, sorted by name."""
    root = Path(root)
    return sorted(p for p in root.iterdir() if (p / MANIFEST_NAME).is_file())


@dataclass
class Dataset:
    """Labelled tracks playing one role (noisy, trusted or clean)."""

    role: str
    tracks: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.role not in ("noisy", "trusted", "clean", "test", "val"):
            raise ValueError(f"unknown dataset role {self.role!r}")
        ids = [t.id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ValueError("track ids must be unique within a dataset")
        for tr, lab in zip(self.tracks, self.labels):
            check_label_length(lab, tr)

    def __len__(self):
        return len(self.tracks)

    @classmethod
    def from_dir(cls, root, role, label_name="labels.txt"):
        tracks, labels = [], []
        for d in list_track_dirs(root):
            tr = load_track(d)
            lab_path = d / label_name
            lab = load_labels(lab_path) if lab_path.is_file() else np.full(len(tr), UNLABELED, np.int8)
            tracks.append(tr)
            labels.append(check_label_length(lab, tr))
        return cls(role, tracks, labels)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
