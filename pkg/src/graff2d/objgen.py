"""Procedural planar tool-like objects with synthetic grasp-contact maps.

Nine families of simple polygons, each with boundary arcs labelled as the
functional grasp region (handle, ring, body grip). Synthetic annotators
place noisy contact regions on those arcs; k-medoids distils a
representative map per object; a tiny renderer produces (image, mask)
training pairs in the binary grid format.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geom import Polygon, Pose2, arc_contains, arc_distance, arc_sample, chamfer

FAMILIES = ("hammer", "pan", "mug", "knife", "flashlight", "ball", "stapler", "axe", "wrench")
TRAIN_FAMILIES = ("hammer", "pan", "mug", "knife", "flashlight", "ball", "stapler")
UNKNOWN_FAMILIES = ("axe", "wrench")

# camera model shared with the environment: square window, fixed cell size
WINDOW = 1.0
RESOLUTION = 64
CELL = WINDOW / RESOLUTION
MASK_DILATE_PX = 2.0
CONTACT_SAMPLES = 160


@dataclass
class ContactMap:
    """Per-boundary-sample contact strengths for one (synthetic) annotator."""
    points: np.ndarray      # (K,2) boundary points, object frame
    strengths: np.ndarray   # (K,) in [0,1]
    s_params: np.ndarray    # (K,) arc-length parameters

    def strong_points(self, threshold=0.5):
        return self.points[self.strengths > threshold]


@dataclass
class PlanarObject:
    family: str
    seed: int
    polygon: Polygon
    mass: float
    scale: float
    gt_arcs: list
    contact_map: ContactMap | None = field(default=None)

    def max_dim(self):
        v = self.polygon.verts
        return float(max(np.ptp(v[:, 0]), np.ptp(v[:, 1])))


@dataclass
class RenderedPair:
    image: np.ndarray       # (64,64) float32, air 0 / table 0.5 / object 1
    mask: np.ndarray        # (64,64) uint8
    camera_pose: Pose2
    object_pose: Pose2


def _rng_for(*key_parts):
    digest = hashlib.sha256(":".join(str(k) for k in key_parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _runs_to_arcs(verts, runs):
    """Convert (first_edge, last_edge_exclusive, trim0, trim1) runs to arcs."""
    poly = Polygon(verts, validate=False)
    cum = np.concatenate([[0.0], np.cumsum(poly.edge_lengths())])
    arcs = []
    for i0, i1, t0, t1 in runs:
        s0, s1 = cum[i0], cum[i1]
        ln = s1 - s0
        arcs.append((s0 + t0 * ln, s1 - t1 * ln))
    return arcs


def _circle_pts(cx, cy, r, a0, a1, n):
    ang = np.linspace(a0, a1, n)
    return [(cx + r * np.cos(a), cy + r * np.sin(a)) for a in ang]


def _build_hammer(rng):
    hw = 0.036 * rng.uniform(0.9, 1.1)
    length = 0.19 * rng.uniform(0.9, 1.1)
    head_w = 0.065 * rng.uniform(0.88, 1.12)
    head_h = 0.115 * rng.uniform(0.9, 1.1)
    h2, hh2 = hw / 2, head_h / 2
    verts = [(0, -h2), (length, -h2), (length, h2), (0, h2),
             (0, hh2), (-head_w, hh2), (-head_w, -hh2), (0, -hh2)]
    return verts, [(0, 3, 0.2, 0.2)]


def _build_pan(rng):
    r = 0.085 * rng.uniform(0.9, 1.1)
    hl = 0.13 * rng.uniform(0.9, 1.1)
    hw = 0.030 * rng.uniform(0.9, 1.1)
    h2 = hw / 2
    x_att = np.sqrt(r * r - h2 * h2)
    a0 = np.arctan2(h2, x_att)
    verts = [(x_att, -h2), (x_att + hl, -h2), (x_att + hl, h2), (x_att, h2)]
    verts += _circle_pts(0, 0, r, a0, 2 * np.pi - a0, 18)[1:-1]
    return verts, [(0, 3, 0.25, 0.2)]


def _build_mug(rng):
    w = 0.075 * rng.uniform(0.9, 1.1)
    h = 0.095 * rng.uniform(0.9, 1.1)
    gap = 0.026 * rng.uniform(0.95, 1.05)
    bw = 0.018 * rng.uniform(0.9, 1.1)
    st = 0.016
    h2 = h / 2
    zu = h2 - 0.012
    zb = zu - st - 0.052 * rng.uniform(0.9, 1.1)
    # body + hook handle: top stub out to a bar hanging down beside the body
    verts = [(-w, -h2), (0, -h2), (0, zu - st), (gap, zu - st), (gap, zb),
             (gap + bw, zb), (gap + bw, zu), (0, zu), (0, h2), (-w, h2)]
    return verts, [(3, 6, 0.1, 0.0)]


def _build_knife(rng):
    hl = 0.105 * rng.uniform(0.9, 1.1)
    hh = 0.014 * rng.uniform(0.95, 1.1)
    gw = 0.014
    gh = 0.034 * rng.uniform(0.95, 1.05)
    bl = 0.135 * rng.uniform(0.9, 1.1)
    bh = 0.011
    verts = [(0, -hh), (hl, -hh), (hl, -gh), (hl + gw, -gh), (hl + gw, -bh),
             (hl + gw + bl, 0.002), (hl + gw, 0.013), (hl + gw, gh), (hl, gh), (hl, hh), (0, hh)]
    return verts, [(9, 11, 0.05, 0.0), (0, 1, 0.0, 0.12)]


def _build_flashlight(rng):
    bz = 0.03 * rng.uniform(0.9, 1.1)
    bl = 0.15 * rng.uniform(0.9, 1.1)
    bzh = 0.036 * rng.uniform(0.95, 1.08)
    bh = 0.026 * rng.uniform(0.95, 1.05)
    verts = [(-bz, -bzh), (0, -bzh), (0, -bh), (bl, -bh), (bl, bh),
             (0, bh), (0, bzh), (-bz, bzh)]
    return verts, [(2, 5, 0.25, 0.1)]


def _build_ball(rng):
    r = 0.055 * rng.uniform(0.9, 1.1)
    n = 16
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    rad = r * (1.0 + rng.uniform(-0.03, 0.03, size=n))
    verts = [(ri * np.cos(a), ri * np.sin(a)) for a, ri in zip(ang, rad)]
    return verts, [(0, n, 0.0, 0.0)]


def _build_stapler(rng):
    sl = 0.16 * rng.uniform(0.9, 1.1)
    hb = 0.016
    verts = [(0, -hb), (sl, -hb), (sl, 0.012), (0.3 * sl, 0.032 * rng.uniform(0.9, 1.1)), (0, 0.036)]
    return verts, [(1, 3, 0.1, 0.1)]


def _build_axe(rng):
    ahw = 0.034 * rng.uniform(0.9, 1.1)
    al = 0.21 * rng.uniform(0.9, 1.1)
    a2 = ahw / 2
    hw = 0.075 * rng.uniform(0.9, 1.1)
    verts = [(0, -a2), (al, -a2), (al, a2), (0, a2),
             (0, 0.055), (-0.055, 0.075), (-hw, -0.075), (0, -0.055)]
    return verts, [(0, 3, 0.2, 0.2)]


def _build_wrench(rng):
    b2 = 0.014 * rng.uniform(0.95, 1.1)
    wl = 0.19 * rng.uniform(0.9, 1.1)
    r = 0.042 * rng.uniform(0.95, 1.1)
    cx = -0.018
    x_att = cx + np.sqrt(max(r * r - b2 * b2, 1e-8))
    a0 = np.arctan2(b2, x_att - cx)
    up = _circle_pts(cx, 0, r, a0, np.radians(150), 7)[1:]
    jaw = [(cx + 0.35 * r * np.cos(np.pi), 0.35 * r * np.sin(np.pi))]
    down = _circle_pts(cx, 0, r, np.radians(210), 2 * np.pi - a0, 7)[:-1]
    verts = [(x_att, -b2), (wl, -b2), (wl, b2), (x_att, b2)] + up + jaw + down
    return verts, [(0, 3, 0.3, 0.15)]


_BUILDERS = {
    "hammer": _build_hammer, "pan": _build_pan, "mug": _build_mug,
    "knife": _build_knife, "flashlight": _build_flashlight, "ball": _build_ball,
    "stapler": _build_stapler, "axe": _build_axe, "wrench": _build_wrench,
}


def gen_object(family, seed, scale=1.0, mass=1.0):
    """Deterministic planar object for (family, seed, scale)."""
    if family not in _BUILDERS:
        raise ValueError(f"unknown object family {family!r}; choose from {sorted(_BUILDERS)}")
    rng = _rng_for("objgen", family, seed)
    verts, runs = _BUILDERS[family](rng)
    verts = np.asarray(verts, dtype=np.float64) * scale
    arcs = _runs_to_arcs(verts, runs)
    poly = Polygon(verts)
    return PlanarObject(family=family, seed=int(seed), polygon=poly, mass=float(mass),
                        scale=float(scale), gt_arcs=arcs)


def complement_arcs(arcs, perim):
    """Boundary intervals not covered by `arcs` (assumes non-overlapping arcs)."""
    norm = sorted(((s0 % perim, min(s1 - s0, perim)) for s0, s1 in arcs))
    out = []
    for i, (s0, span) in enumerate(norm):
        end = s0 + span
        nxt = norm[(i + 1) % len(norm)][0] + (perim if i + 1 == len(norm) else 0)
        if nxt - end > 1e-9:
            out.append((end, nxt))
    if not norm:
        out.append((0.0, perim))
    return out


def synth_contact_maps(obj, annotators=50, noise_std=0.08, minority=0.2, seed=0,
                       n_samples=CONTACT_SAMPLES):
    """Synthetic annotator contact maps concentrated on the labelled arcs.

    Each annotator puts a smooth contact bump on a graspable arc; a
    `minority` fraction instead marks a non-graspable arc (disagreement).
    With noise_std == 0 and minority == 0, every map is identical and
    centred on the longest graspable arc.
    """
    if annotators < 1:
        raise ValueError("need at least one annotator")
    poly = obj.polygon
    perim = poly.perimeter()
    pts, s = poly.sample_boundary(n_samples)
    maps = []
    for i in range(annotators):
        rng = _rng_for("contact", obj.family, obj.seed, seed, i)
        off_target = rng.random() < minority
        arcs = complement_arcs(obj.gt_arcs, perim) if off_target else obj.gt_arcs
        if not arcs:
            arcs = obj.gt_arcs  # nothing off the grasp region (e.g. ball): stay on it
        lens = np.array([min(s1 - s0, perim) for s0, s1 in arcs])
        if noise_std == 0.0 and minority == 0.0:
            j = int(np.argmax(lens))
            center = (arcs[j][0] + 0.5 * lens[j]) % perim
            sigma = 0.30 * lens[j]
        else:
            j = int(rng.choice(len(arcs), p=lens / lens.sum()))
            center = (arcs[j][0] + 0.5 * lens[j] + rng.normal(0.0, noise_std * lens[j])) % perim
            sigma = 0.30 * lens[j] * max(0.35, 1.0 + rng.normal(0.0, noise_std))
        d = np.abs((s - center + perim / 2) % perim - perim / 2)
        strengths = np.exp(-0.5 * (d / max(sigma, 1e-6)) ** 2)
        maps.append(ContactMap(points=pts.copy(), strengths=strengths, s_params=s.copy()))
    return maps


def kmedoids_representative(maps, k, threshold=0.5):
    """PAM k-medoids over annotator maps (Chamfer dissimilarity on the
    above-threshold point sets); returns the medoid of the largest cluster."""
    if not maps:
        raise ValueError("no contact maps given")
    sets, keep = [], []
    for i, m in enumerate(maps):
        pts = m.strong_points(threshold)
        if len(pts):
            sets.append(np.ascontiguousarray(pts))
            keep.append(i)
    if not sets:
        raise ValueError(f"no contact map has samples above threshold {threshold}")
    n = len(sets)
    k = min(k, n)
    dmat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dmat[i, j] = dmat[j, i] = kernels.chamfer_dist(sets[i], sets[j])

    # BUILD: greedy medoid seeding
    medoids = [int(np.argmin(dmat.sum(axis=1)))]
    while len(medoids) < k:
        cur = dmat[:, medoids].min(axis=1)
        gains = np.array([np.minimum(cur, dmat[:, c]).sum() for c in range(n)])
        gains[medoids] = np.inf
        medoids.append(int(np.argmin(gains)))
    # SWAP until no improvement
    cost = dmat[:, medoids].min(axis=1).sum()
    improved = True
    while improved:
        improved = False
        for mi in range(k):
            for h in range(n):
                if h in medoids:
                    continue
                trial = list(medoids)
                trial[mi] = h
                c = dmat[:, trial].min(axis=1).sum()
                if c < cost - 1e-12:
                    medoids, cost, improved = trial, c, True
    medoids = sorted(medoids)
    assign = np.argmin(dmat[:, medoids], axis=1)
    sizes = np.bincount(assign, minlength=k)
    order = sorted(range(k), key=lambda c: (-sizes[c], keep[medoids[c]]))
    return maps[keep[medoids[order[0]]]]


def distill_contact_map(obj, annotators=50, noise_std=0.08, minority=0.2, k=3, seed=0):
    maps = synth_contact_maps(obj, annotators, noise_std, minority, seed)
    obj.contact_map = kmedoids_representative(maps, k=k)
    return obj


def rest_pose(polygon, theta):
    """Pose placing the rotated polygon with centroid over x=0, resting on z=0."""
    rot = Pose2(0.0, 0.0, theta)
    vr = rot.apply(polygon.verts)
    cx = rot.apply(polygon.centroid())[0]
    return Pose2(-cx, -float(vr[:, 1].min()), theta)


def render(obj, object_pose, camera_pose, resolution=RESOLUTION):
    """Render (occupancy image, affordance mask) in the camera window.

    Image encoding: air 0, table (z<0) 0.5, object 1. Mask: boundary cells
    within MASK_DILATE_PX of a contact sample with strength > 0.5,
    intersected with the object footprint.
    """
    half = WINDOW / 2.0
    cell = WINDOW / resolution
    ox, oy = camera_pose.x - half, camera_pose.y - half
    verts_w = object_pose.apply(obj.polygon.verts)
    if (verts_w[:, 0].max() < ox or verts_w[:, 0].min() > ox + WINDOW
            or verts_w[:, 1].max() < oy or verts_w[:, 1].min() > oy + WINDOW):
        raise ValueError("object fully outside camera window")
    verts_px = np.ascontiguousarray((verts_w - [ox, oy]) / cell)
    footprint = kernels.raster_polygon(verts_px, resolution, resolution)

    image = np.zeros((resolution, resolution), dtype=np.float32)
    zs = oy + (np.arange(resolution) + 0.5) * cell
    image[zs < 0.0, :] = 0.5
    image[footprint != 0] = 1.0

    mask = np.zeros((resolution, resolution), dtype=np.uint8)
    if obj.contact_map is not None:
        strong = obj.contact_map.strong_points(0.5)
        if len(strong):
            pts_px = np.ascontiguousarray((object_pose.apply(strong) - [ox, oy]) / cell)
            mask = kernels.raster_disks(pts_px, MASK_DILATE_PX, resolution, resolution)
            mask &= footprint
    return RenderedPair(image=image, mask=mask, camera_pose=camera_pose, object_pose=object_pose)


GRID_MAGIC = b"GRAFFGRID1"


def save_grid(path, grid):
    a = np.ascontiguousarray(grid, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def load_grid(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:10] != GRID_MAGIC:
        raise ValueError(f"{path}: not a GRAFFGRID1 file")
    rows, cols = struct.unpack_from("<QQ", blob, 10)
    return np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=26).reshape(rows, cols).copy()


def _pair_records(families, per_family, poses_per_object, seed, split):
    recs = []
    for family in families:
        for oi in range(per_family):
            for pi in range(poses_per_object):
                key = f"{seed}:{family}:{oi}:{pi}"
                recs.append({
                    "family": family, "obj_index": oi, "pose_index": pi,
                    "hash": hashlib.sha256(key.encode()).hexdigest(),
                })
    recs.sort(key=lambda r: r["hash"])
    n = len(recs)
    n_train = n * split[0] // 100
    n_val = n * split[1] // 100
    for i, r in enumerate(recs):
        r["split"] = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
    recs.sort(key=lambda r: (r["family"], r["obj_index"], r["pose_index"]))
    for i, r in enumerate(recs):
        r["id"] = i
    return recs


def expected_manifest(root, families, per_family=10, poses_per_object=20, seed=0,
                      split=(80, 10, 10), annotators=50, noise_std=0.08, minority=0.2, k=3):
    """Manifest content make_dataset would produce (cheap; no rendering)."""
    if sum(split) != 100:
        raise ValueError(f"split percentages must sum to 100, got {split}")
    records = []
    for r in _pair_records(families, per_family, poses_per_object, seed, split):
        rng = _rng_for("pose", seed, r["family"], r["obj_index"], r["pose_index"])
        theta = float(rng.uniform(0.0, np.pi))
        cam_dx = int(rng.integers(-8, 9))
        cam_dy = int(rng.integers(-8, 9))
        stem = f"pair_{r['id']:05d}"
        records.append({
            "id": r["id"], "family": r["family"], "seed": obj_seed(seed, r["family"], r["obj_index"]),
            "obj_index": r["obj_index"], "split": r["split"],
            "pose": {"theta": theta, "cam_dx": cam_dx, "cam_dy": cam_dy},
            "image": f"grids/{stem}.img.grid", "mask": f"grids/{stem}.msk.grid",
        })
    return records


def obj_seed(master_seed, family, obj_index):
    rng = _rng_for("objseed", master_seed, family, obj_index)
    return int(rng.integers(0, 2 ** 31 - 1))


def make_dataset(root, families, per_family=10, poses_per_object=20, seed=0,
                 split=(80, 10, 10), annotators=50, noise_std=0.08, minority=0.2, k=3):
    """Write the (image, mask) dataset and manifest.json under `root`."""
    records = expected_manifest(root, families, per_family, poses_per_object, seed,
                                split, annotators, noise_std, minority, k)
    os.makedirs(os.path.join(root, "grids"), exist_ok=True)
    cache = {}
    for r in records:
        okey = (r["family"], r["obj_index"])
        if okey not in cache:
            obj = gen_object(r["family"], r["seed"])
            distill_contact_map(obj, annotators=annotators, noise_std=noise_std,
                                minority=minority, k=k, seed=seed)
            cache[okey] = obj
        obj = cache[okey]
        pose = rest_pose(obj.polygon, r["pose"]["theta"])
        cam = Pose2(r["pose"]["cam_dx"] * CELL, 0.47 + r["pose"]["cam_dy"] * CELL, 0.0)
        pair = render(obj, pose, cam)
        save_grid(os.path.join(root, r["image"]), pair.image)
        save_grid(os.path.join(root, r["mask"]), pair.mask.astype(np.float32))
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return records


def load_manifest(root):
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest.json under {root}; run gen-data first")
    with open(path) as fh:
        return json.load(fh)
