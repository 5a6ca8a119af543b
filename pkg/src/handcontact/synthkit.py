"""Deterministic synthetic hand-object scenes with planted contact truth.

A scene is a target hand (disk plus forearm), a target object box, optional
distractor hands/objects, and a camera homography applied every frame.  The
phase script drives motion: ``approach``/``release`` move the hand while the
object stays put, ``grasp``/``carry`` move both by the same vector, ``idle``
moves nothing.  Contact truth is 1 exactly on grasp and carry frames.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .homography import apply_homography
from .trackdata import (
    CONTACT,
    NO_CONTACT,
    Frame,
    Track,
    box_mask,
    save_labels,
    save_track,
    track_checksum,
)

PHASES = ("approach", "grasp", "carry", "release", "idle")
CONTACT_PHASES = ("grasp", "carry")
OUTLIER_RANGE = 8.0


@dataclass
class ScenarioSpec:
    phases: list
    hand_center: tuple = (20.0, 48.0)
    hand_radius: float = 8.0
    forearm_length: float = 14.0
    object_box: tuple = (60.0, 40.0, 82.0, 58.0)
    width: int = 128
    height: int = 96
    fps: float = 15.0
    camera: dict = field(default_factory=lambda: {"kind": "identity"})
    distractors: list = field(default_factory=list)
    flow_sigma: float = 0.0
    outlier_fraction: float = 0.0
    burst_frames: list = field(default_factory=list)
    burst_shift: tuple = (3.0, -2.5)
    name: str = "scene"

    def __post_init__(self):
        self.phases = [dict(p) for p in self.phases]
        for p in self.phases:
            if p["phase"] not in PHASES:
                raise ValueError(f"unknown phase {p['phase']!r}")
            if int(p["frames"]) < 1:
                raise ValueError("phase durations must be >= 1")
        if self.n_frames < 2:
            raise ValueError("scenario needs at least 2 frames")

    @property
    def n_frames(self):
        return sum(int(p["frames"]) for p in self.phases)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("hand_center", "object_box", "burst_shift"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self):
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "fps": self.fps,
            "hand_center": list(self.hand_center),
            "hand_radius": self.hand_radius,
            "forearm_length": self.forearm_length,
            "object_box": list(self.object_box),
            "camera": self.camera,
            "phases": self.phases,
            "distractors": self.distractors,
            "flow_sigma": self.flow_sigma,
            "outlier_fraction": self.outlier_fraction,
            "burst_frames": self.burst_frames,
            "burst_shift": list(self.burst_shift),
        }


def camera_matrix(camera) -> np.ndarray:
    kind = camera.get("kind", "identity")
    if kind == "identity":
        return np.eye(3)
    if kind == "pan":
        tx, ty = camera["pan"]
        return np.array([[1.0, 0, tx], [0, 1.0, ty], [0, 0, 1.0]])
    if kind == "matrix":
        m = np.asarray(camera["matrix"], dtype=np.float64)
        return m / m[2, 2]
    raise ValueError(f"unknown camera kind {kind!r}")


def phase_script(spec: ScenarioSpec):
    """Per-frame (phase name, hand velocity, object velocity)."""
    out = []
    for p in spec.phases:
        v = np.asarray(p.get("velocity", (0.0, 0.0)), dtype=np.float64)
        name = p["phase"]
        if name == "idle":
            vh = vo = np.zeros(2)
        elif name in CONTACT_PHASES:
            vh = vo = v
        else:
            vh, vo = v, np.zeros(2)
        out += [(name, vh, vo)] * int(p["frames"])
    return out


def truth_labels(spec: ScenarioSpec) -> np.ndarray:
    return np.array([CONTACT if name in CONTACT_PHASES else NO_CONTACT
                     for name, _, _ in phase_script(spec)], dtype=np.int8)


def hand_raster(center, radius, forearm, shape):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    cx, cy = center
    disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
    arm = (np.abs(xs - cx) <= radius / 2) & (ys >= cy) & (ys < cy + radius + forearm)
    return disk | arm


def _move(H, point, v):
    return apply_homography(H, np.asarray(point, dtype=np.float64)) + v


def _move_box(H, box, v):
    c = np.array([(box[0] + box[2]) / 2, (box[1] + box[3]) / 2])
    d = _move(H, c, v) - c
    return (box[0] + d[0], box[1] + d[1], box[2] + d[0], box[3] + d[1])


def _check_inside(spec, t, center, radius, box, what):
    w, h = spec.width, spec.height
    if center is not None:
        cx, cy = center
        if cx - radius < 0 or cx + radius > w - 1 or cy - radius < 0 or cy + radius > h - 1:
            raise ValueError(f"{spec.name}: {what} leaves the canvas at frame {t}")
    if box is not None:
        if box[0] < 0 or box[1] < 0 or box[2] > w or box[3] > h:
            raise ValueError(f"{spec.name}: {what} leaves the canvas at frame {t}")


def scene_geometry(spec: ScenarioSpec):
    """Positions of every entity at every frame, validated against the canvas."""
    H = camera_matrix(spec.camera)
    script = phase_script(spec)
    n = spec.n_frames
    hand = [np.asarray(spec.hand_center, dtype=np.float64)]
    box = [tuple(spec.object_box)]
    dis = [[d for d in spec.distractors]]
    d_pos = [[np.asarray(d.get("center", (0, 0)), dtype=np.float64) if d["kind"] == "hand"
              else tuple(d["box"]) for d in spec.distractors]]
    for t in range(n - 1):
        _, vh, vo = script[t]
        hand.append(_move(H, hand[-1], vh))
        box.append(_move_box(H, box[-1], vo))
        nxt = []
        for d, p in zip(spec.distractors, d_pos[-1]):
            v = np.asarray(d.get("velocity", (0.0, 0.0)), dtype=np.float64)
            nxt.append(_move(H, p, v) if d["kind"] == "hand" else _move_box(H, p, v))
        d_pos.append(nxt)
    for t in range(n):
        _check_inside(spec, t, hand[t], spec.hand_radius, box[t], "target")
        for d, p in zip(spec.distractors, d_pos[t]):
            if d["kind"] == "hand":
                _check_inside(spec, t, p, d.get("radius", spec.hand_radius), None, "distractor hand")
            else:
                _check_inside(spec, t, None, 0, p, "distractor object")
    return hand, box, d_pos


def _layers(spec, t, hand, box, d_pos, script, shape):
    """Entity rasters at frame t, bottom to top, with their local velocity at t."""
    _, vh, vo = script[t]
    layers = []
    hands = []
    for d, p in zip(spec.distractors, d_pos[t]):
        v = np.asarray(d.get("velocity", (0.0, 0.0)), dtype=np.float64)
        if d["kind"] == "object":
            layers.append((box_mask(p, shape), v))
    layers.append((box_mask(box[t], shape), vo))
    for d, p in zip(spec.distractors, d_pos[t]):
        if d["kind"] == "hand":
            m = hand_raster(p, d.get("radius", spec.hand_radius), d.get("forearm", spec.forearm_length), shape)
            v = np.asarray(d.get("velocity", (0.0, 0.0)), dtype=np.float64)
            layers.append((m, v))
            hands.append(m)
    target = hand_raster(hand[t], spec.hand_radius, spec.forearm_length, shape)
    layers.append((target, vh))
    return layers, target, hands


def _layer_velocities(spec, step):
    """Local velocities in the same order as ``_layers``."""
    _, vh, vo = step
    vel = [np.asarray(d.get("velocity", (0.0, 0.0)), dtype=np.float64)
           for d in spec.distractors if d["kind"] == "object"]
    vel.append(vo)
    vel += [np.asarray(d.get("velocity", (0.0, 0.0)), dtype=np.float64)
            for d in spec.distractors if d["kind"] == "hand"]
    vel.append(vh)
    return vel


def _render_flow(H, layers, pts, forward):
    """Forward maps p -> H p + v; backward maps q -> H^-1 (q - v)."""
    Hinv = np.linalg.inv(H)
    if forward:
        flow = apply_homography(H, pts) - pts
    else:
        flow = apply_homography(Hinv, pts) - pts
    for mask, v in layers:
        if not mask.any():
            continue
        p = pts[mask]
        if forward:
            flow[mask] = apply_homography(H, p) + v - p
        else:
            flow[mask] = apply_homography(Hinv, p - v) - p
    return flow


def generate_track(spec: ScenarioSpec, seed=0, track_id=None):
    """Render ``spec`` into a Track and its planted truth labels."""
    rng = np.random.default_rng(seed)
    shape = (spec.height, spec.width)
    H = camera_matrix(spec.camera)
    script = phase_script(spec)
    hand, box, d_pos = scene_geometry(spec)
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    pts = np.stack([xs, ys], axis=-1).astype(np.float64)
    bursts = set(int(b) for b in spec.burst_frames)

    frames = []
    for t in range(spec.n_frames):
        layers_t, target, other_hands = _layers(spec, t, hand, box, d_pos, script, shape)
        fwd = _render_flow(H, layers_t, pts, forward=True)
        if t in bursts:
            band = _burst_band(shape)
            fg = np.zeros(shape, dtype=bool)
            for m, _ in layers_t:
                fg |= m
            fwd[band & ~fg] += np.asarray(spec.burst_shift)
        fwd = _corrupt_flow(fwd, spec, rng)
        bwd = None
        if t > 0:
            # backward flow at t undoes the motion of frame t-1, with regions placed at t
            v_prev = _layer_velocities(spec, script[t - 1])
            layers_b = [(m, v) for (m, _), v in zip(layers_t, v_prev)]
            bwd = _corrupt_flow(_render_flow(H, layers_b, pts, forward=False), spec, rng)
        others_boxes = [p for d, p in zip(spec.distractors, d_pos[t]) if d["kind"] == "object"]
        frames.append(Frame(target, box[t], fwd, bwd, other_hands, others_boxes))
    tid = track_id or spec.name
    track = Track(tid, spec.width, spec.height, spec.fps, frames).validate()
    return track, truth_labels(spec)


def _burst_band(shape):
    """Horizontal band over the top 35% of rows."""
    h, w = shape
    band = np.zeros(shape, dtype=bool)
    band[: int(0.35 * h)] = True
    return band


def _corrupt_flow(flow, spec, rng):
    if spec.flow_sigma > 0:
        flow = flow + rng.normal(0.0, spec.flow_sigma, flow.shape)
    if spec.outlier_fraction > 0:
        hit = rng.random(flow.shape[:2]) < spec.outlier_fraction
        flow[hit] = rng.uniform(-OUTLIER_RANGE, OUTLIER_RANGE, (int(hit.sum()), 2))
    return flow.astype(np.float32)


# ---------------------------------------------------------------- corruption


@dataclass
class CorruptionSpec:
    mode: str = "uniform_flip"
    rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("uniform_flip", "boundary_shift", "segment_flip"):
            raise ValueError(f"unknown corruption mode {self.mode!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("corruption rate must lie in [0, 1]")


def _runs(labels):
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(labels)]))
    return list(zip(starts, ends))


def corrupt_labels(gt, spec: CorruptionSpec, rng=None) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.int8)
    if np.any((gt != 0) & (gt != 1)):
        raise ValueError("corrupt_labels needs fully labelled ground truth")
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    out = gt.copy()
    if spec.mode == "uniform_flip":
        flip = rng.random(len(gt)) < spec.rate
        out[flip] = 1 - out[flip]
    elif spec.mode == "segment_flip":
        for a, b in _runs(gt):
            if rng.random() < spec.rate:
                out[a:b] = 1 - out[a:b]
    else:
        bounds = [a for a, _ in _runs(gt)][1:]
        moved = list(bounds)
        for k, b in enumerate(bounds):
            if rng.random() >= spec.rate:
                continue
            shift = int(rng.integers(1, 7)) * (1 if rng.random() < 0.5 else -1)
            lo = (moved[k - 1] + 1) if k > 0 else 1
            hi = (bounds[k + 1] - 1) if k + 1 < len(bounds) else len(gt) - 1
            moved[k] = int(np.clip(b + shift, lo, hi))
        value = gt[0]
        edges = [0, *moved, len(gt)]
        for k in range(len(edges) - 1):
            out[edges[k]:edges[k + 1]] = value
            value = 1 - value
    return out


# ---------------------------------------------------------------- scenarios

SCENARIO_KINDS = (
    "grasp_release",
    "touch",
    "pass_by",
    "carry_only",
    "untouched",
    "static_hold",
)
MIXED_KINDS = ("grasp_release", "touch")
CONTACT_KINDS = ("carry_only", "static_hold")
NO_CONTACT_KINDS = ("pass_by", "untouched")

DEFAULT_MIX = {
    "grasp_release": 0.28,
    "touch": 0.10,
    "pass_by": 0.08,
    "carry_only": 0.08,
    "untouched": 0.08,
    "static_hold": 0.38,
}


def _unit(rng):
    a = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(a), np.sin(a)])


def _speed(rng):
    return float(rng.uniform(2.6, 3.6))


def sample_scenario(rng, kind, name="scene", camera=True, distractors=True, noise=True) -> ScenarioSpec:
    """Draw a random scene of one scenario kind; retried until it fits the canvas."""
    for _ in range(200):
        spec = _draw(rng, kind, name, camera, distractors, noise)
        try:
            scene_geometry(spec)
        except ValueError:
            continue
        return spec
    raise RuntimeError(f"could not place a {kind} scene on the canvas")


def _draw(rng, kind, name, camera, distractors, noise):
    W, H = 128, 96
    r = float(rng.uniform(7.0, 9.0))
    bw, bh = float(rng.uniform(16, 24)), float(rng.uniform(14, 20))
    bx, by = float(rng.uniform(36, W - 36 - bw)), float(rng.uniform(22, H - 30 - bh))
    box = (bx, by, bx + bw, by + bh)
    center = np.array([bx + bw / 2, by + bh / 2])
    # contact pose: disk overlapping the box edge from the left or right
    side = 1.0 if rng.random() < 0.5 else -1.0
    grip = center + np.array([side * (bw / 2 + r * 0.4), rng.uniform(-bh / 4, bh / 4)])
    approach_dist = float(rng.uniform(22, 34))
    start = grip + np.array([side * approach_dist, rng.uniform(-6, 6)])

    def toward(a, b, frames):
        return list((np.asarray(b) - np.asarray(a)) / frames)

    phases = []
    idle0 = int(rng.integers(1, 6))
    idle1 = int(rng.integers(1, 6))
    if kind in ("grasp_release", "touch"):
        n_app = max(6, int(round(approach_dist / _speed(rng))))
        phases.append({"phase": "idle", "frames": idle0})
        phases.append({"phase": "approach", "frames": n_app, "velocity": toward(start, grip, n_app)})
        if kind == "touch":
            phases.append({"phase": "grasp", "frames": int(rng.integers(6, 16))})
        else:
            phases.append({"phase": "grasp", "frames": int(rng.integers(3, 10))})
            lift = int(rng.integers(4, 8))
            phases.append({"phase": "grasp", "frames": lift, "velocity": list(_unit(rng) * _speed(rng))})
            n_carry = int(rng.integers(5, 10))
            phases.append({"phase": "carry", "frames": n_carry, "velocity": list(_unit(rng) * _speed(rng))})
            phases.append({"phase": "grasp", "frames": int(rng.integers(5, 15))})
        n_rel = int(rng.integers(6, 10))
        away = np.array([side, rng.uniform(-0.5, 0.5)])
        away = away / np.linalg.norm(away) * _speed(rng)
        phases.append({"phase": "release", "frames": n_rel, "velocity": list(away)})
        phases.append({"phase": "idle", "frames": idle1})
    elif kind == "pass_by":
        # sweep straight across the box without stopping
        far = center + np.array([-side * (bw / 2 + 2.2 * r), rng.uniform(-4, 4)])
        sweep = np.linalg.norm(far - start)
        n = max(8, int(round(sweep / _speed(rng))))
        phases.append({"phase": "idle", "frames": idle0})
        phases.append({"phase": "approach", "frames": n, "velocity": toward(start, far, n)})
        phases.append({"phase": "idle", "frames": idle1})
        phases.append({"phase": "release", "frames": 6, "velocity": list(_unit(rng) * _speed(rng))})
    elif kind == "carry_only":
        start = grip
        for _ in range(int(rng.integers(3, 5))):
            phases.append({"phase": "carry", "frames": int(rng.integers(4, 8)), "velocity": list(_unit(rng) * _speed(rng))})
            phases.append({"phase": "grasp", "frames": int(rng.integers(2, 6))})
    elif kind == "untouched":
        near = grip + np.array([side * (r + 6), 0.0])
        n = max(6, int(round(np.linalg.norm(near - start) / _speed(rng))))
        phases.append({"phase": "idle", "frames": idle0})
        phases.append({"phase": "approach", "frames": n, "velocity": toward(start, near, n)})
        phases.append({"phase": "idle", "frames": int(rng.integers(4, 10))})
        phases.append({"phase": "release", "frames": n, "velocity": toward(near, start, n)})
        phases.append({"phase": "idle", "frames": idle1})
    elif kind == "static_hold":
        start = grip
        phases.append({"phase": "grasp", "frames": int(rng.integers(25, 45))})
    else:
        raise ValueError(f"unknown scenario kind {kind!r}")

    cam = {"kind": "identity"}
    if camera and rng.random() < 0.4:
        cam = {"kind": "pan", "pan": list(rng.uniform(-0.6, 0.6, 2))}
    dis = []
    if distractors and rng.random() < 0.3:
        dy = -30.0 if by > H / 2 else 30.0
        oc = np.array([rng.uniform(20, W - 20), np.clip(center[1] + dy, 14, H - 26)])
        v = list(_unit(rng) * rng.uniform(0.0, 1.0))
        dis.append({"kind": "object", "box": [oc[0] - 7, oc[1] - 6, oc[0] + 7, oc[1] + 6], "velocity": v})
        dis.append({"kind": "hand", "center": list(oc + np.array([9.0, 0.0])), "radius": 6.0,
                    "forearm": 6.0, "velocity": v})
    n_frames = sum(p["frames"] for p in phases)
    sigma, outliers, bursts = 0.0, 0.0, []
    if noise:
        sigma = float(rng.uniform(0.05, 0.25))
        outliers = float(rng.uniform(0.0, 0.01))
        if rng.random() < 0.25:
            bursts = sorted(set(int(b) for b in rng.integers(0, n_frames, int(rng.integers(1, 4)))))
    return ScenarioSpec(
        phases=phases, hand_center=tuple(start), hand_radius=r, object_box=box,
        camera=cam, distractors=dis, flow_sigma=sigma, outlier_fraction=outliers,
        burst_frames=bursts, name=name,
    )


def scenario_bank() -> list:
    """The shipped scripted scenes, in file-name order."""
    specs = []
    bank = resources.files("handcontact") / "specs"
    for entry in sorted(bank.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            specs.append(ScenarioSpec.from_dict(json.loads(entry.read_text())))
    return specs


def load_spec_file(path):
    """A JSON spec file holds one scenario or a ``{"mix": {...}}`` corpus recipe."""
    data = json.loads(Path(path).read_text())
    if "mix" in data:
        return data
    return ScenarioSpec.from_dict(data)


# ------------------------------------------------------------------- corpus

SPLITS = ("noisy", "trusted", "val", "test")


def split_sizes(n, trusted_frac=0.1, val_frac=0.1, test_frac=0.2):
    if n < 3:
        raise ValueError("a corpus needs at least 3 tracks")
    trusted = max(1, int(round(n * trusted_frac)))
    test = max(1, int(round(n * test_frac)))
    val = int(round(n * val_frac)) if n >= 6 else 0
    noisy = n - trusted - test - val
    if noisy < 1:
        val = max(0, val - (1 - noisy))
        noisy = n - trusted - test - val
    return {"noisy": noisy, "trusted": trusted, "val": val, "test": test}


def corpus_plan(n_tracks, mix=None, seed=0, balanced_splits=("test",), **split_kw):
    """List of (split, track_id, kind, track_seed) describing a corpus.

    Kinds are drawn from ``mix``; splits named in ``balanced_splits`` get equal
    numbers of constant-contact and constant-no-contact tracks.
    """
    mix = dict(mix or DEFAULT_MIX)
    kinds = sorted(mix)
    probs = np.array([mix[k] for k in kinds], dtype=np.float64)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    plan = []
    index = 0
    for split, size in split_sizes(n_tracks, **split_kw).items():
        drawn = list(rng.choice(kinds, size=size, p=probs))
        if split in balanced_splits:
            drawn = _balance(drawn, rng)
        for kind in drawn:
            plan.append((split, f"{split}_{index:05d}", str(kind), int(seed) * 100003 + index))
            index += 1
    return plan


def _balance(kinds, rng):
    """Relabel constant-state draws so contact-only and no-contact-only counts match."""
    kinds = list(kinds)
    const = [i for i, k in enumerate(kinds) if k in CONTACT_KINDS or k in NO_CONTACT_KINDS]
    n_pairs = len(const) // 2
    for j, i in enumerate(const):
        if j < n_pairs:
            kinds[i] = CONTACT_KINDS[j % len(CONTACT_KINDS)]
        elif j < 2 * n_pairs:
            kinds[i] = NO_CONTACT_KINDS[j % len(NO_CONTACT_KINDS)]
        else:
            kinds[i] = MIXED_KINDS[0]
    return kinds


def plan_track(entry, **draw_kw):
    split, tid, kind, tseed = entry
    rng = np.random.default_rng(tseed)
    spec = sample_scenario(rng, kind, name=tid, **draw_kw)
    track, gt = generate_track(spec, seed=tseed, track_id=tid)
    return track, gt, spec


def generate_corpus(n_tracks, out_dir, mix=None, seed=0, noisy_labels="pseudo", corruption=None,
                    pseudo_config=None, overwrite=False, threads=1, **split_kw):
    """Write a corpus in track-directory format under ``out_dir/<split>/<id>/``.

    Every track directory carries ``truth.txt``; ``labels.txt`` is the exact
    truth for trusted/val/test and, for the noisy split, either motion
    pseudo-labels (``noisy_labels="pseudo"``) or corrupted truth
    (``noisy_labels="corrupt"``, using ``corruption``).
    Returns {track_id: checksum}.
    """
    from .motionlabel import generate_pseudolabels
    from .parallel import map_ordered

    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise FileExistsError(f"{out} is not empty; pass overwrite=True")
    plan = corpus_plan(n_tracks, mix, seed, **split_kw)
    corruption = corruption or CorruptionSpec()

    def build(entry):
        split, tid, kind, tseed = entry
        track, gt, spec = plan_track(entry)
        path = out / split / tid
        save_track(track, path, overwrite=True)
        save_labels(gt, path / "truth.txt")
        if split != "noisy":
            labels = gt
        elif noisy_labels == "pseudo":
            labels = generate_pseudolabels(track, pseudo_config, seed=tseed)
        elif noisy_labels == "corrupt":
            labels = corrupt_labels(gt, CorruptionSpec(corruption.mode, corruption.rate, corruption.seed + tseed))
        else:
            raise ValueError(f"noisy_labels must be 'pseudo' or 'corrupt', not {noisy_labels!r}")
        save_labels(labels, path / "labels.txt")
        (path / "scenario.json").write_text(json.dumps({"kind": kind, **spec.to_dict()}, indent=1) + "\n")
        return tid, track_checksum(track)

    return dict(map_ordered(build, plan, threads))


def with_overrides(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    d = copy.deepcopy(spec.to_dict())
    d.update(changes)
    return ScenarioSpec.from_dict(d)


# ------------------------------------------------------- homography fields


def random_homography(rng, shape=(96, 128), shift=4.0, linear=0.03, projective=2e-4) -> np.ndarray:
    """A mild camera homography: translation up to ``shift`` px plus small linear and projective terms."""
    H = np.eye(3)
    H[:2, :2] += rng.uniform(-linear, linear, (2, 2))
    H[:2, 2] = rng.uniform(-shift, shift, 2)
    H[2, :2] = rng.uniform(-projective, projective, 2)
    return H


def planted_homography_frame(H, shape=(96, 128), noise_sigma=0.0, outlier_fraction=0.0, rng=None):
    """Frame whose forward flow is the field induced by ``H``, with jitter and outliers.

    The frame has no hand and an empty object box, so every pixel is
    background.  Returns the frame and the boolean raster of outlier pixels.
    """
    from .homography import homography_flow

    rng = np.random.default_rng(rng)
    flow = homography_flow(H, shape)
    if noise_sigma > 0:
        flow = flow + rng.normal(0.0, noise_sigma, flow.shape)
    outliers = np.zeros(shape, dtype=bool)
    if outlier_fraction > 0:
        outliers = rng.random(shape) < outlier_fraction
        flow[outliers] = rng.uniform(-OUTLIER_RANGE, OUTLIER_RANGE, (int(outliers.sum()), 2))
    frame = Frame(np.zeros(shape, dtype=bool), (0.0, 0.0, 0.0, 0.0), flow)
    return frame, outliers
