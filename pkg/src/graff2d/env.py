"""Planar grasping MDP: 7-DoF position-controlled hand over a quasi-static
object, contact detection against the polygon, force-closure grasp
engagement, and the reward terms for the policy.

World frame: x right, z up, table at z=0. The object never moves unless a
force-closure grasp attaches it rigidly to the wrist; on release it drops
straight down until it rests on the table (or on the fingers).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geom import Pose2, chamfer, distance_transform
from .objgen import CELL, RESOLUTION, WINDOW, PlanarObject, rest_pose

# hand geometry (meters) and actuation
PALM_HALF = 0.05
L1 = 0.085
L2 = 0.065
WRIST_OFF = 0.05
N_DOF = 7
M_KEYPOINTS = 10
DT = 0.01
T_MAX = 200
H_LIFT = 0.05
MU = 0.5
GRAVITY = 9.81
CONTACT_TOL = 0.005
RELEASE_TOL = 0.012
PEN_TOL = 1e-9

LIMITS_LO = np.array([-0.5, 0.02, -2.0, -np.pi / 2, -np.pi / 2, -np.pi / 2, -np.pi / 2])
LIMITS_HI = np.array([0.5, 0.75, 2.0, np.pi / 2, np.pi / 2, np.pi / 2, np.pi / 2])
RATES = np.array([0.02, 0.02, 0.1, 0.1, 0.1, 0.1, 0.1])
HOME = np.array([0.0, 0.42, 0.0, -0.15, 0.1, -0.15, 0.1])

_T1 = np.linspace(0.0, 1.0, 6)
_T2 = np.linspace(0.0, 1.0, 6)[1:]


@dataclass
class Contact:
    point: np.ndarray
    normal: np.ndarray
    mu: float = MU


@dataclass
class RewardTerms:
    r_succ: float
    r_aff: float
    r_entropy: float
    total: float


@dataclass
class Observation:
    image: np.ndarray        # (2,64,64) float32: occupancy, affordance DT
    proprio: np.ndarray      # (14,) positions then velocities
    dist: np.ndarray         # (10,N) keypoint-to-affordance distances


@dataclass
class WorldState:
    hand_pos: np.ndarray
    hand_vel: np.ndarray
    object_pose: Pose2
    grasp_engaged: bool
    lifted: bool
    afford_pts_obj: np.ndarray   # (N,2) object frame, fixed at reset
    t: int
    degenerate: bool = False
    attach_rel: Pose2 | None = None
    contacts: list = field(default_factory=list)


def base_pose(pos) -> Pose2:
    return Pose2(pos[0], pos[1], pos[2])


def hand_points(pos):
    """(keypoints[10,2], collision samples[S,2]) in world coordinates."""
    bp = base_pose(pos)
    q1l, q2l, q1r, q2r = pos[3], pos[4], pos[5], pos[6]
    rootl = np.array([-PALM_HALF, 0.0])
    rootr = np.array([PALM_HALF, 0.0])
    a1l = -np.pi / 2 + q1l
    a2l = a1l + q2l
    a1r = -np.pi / 2 - q1r
    a2r = a1r - q2r
    d1l = np.array([np.cos(a1l), np.sin(a1l)])
    d2l = np.array([np.cos(a2l), np.sin(a2l)])
    d1r = np.array([np.cos(a1r), np.sin(a1r)])
    d2r = np.array([np.cos(a2r), np.sin(a2r)])
    j2l = rootl + L1 * d1l
    tipl = j2l + L2 * d2l
    j2r = rootr + L1 * d1r
    tipr = j2r + L2 * d2r

    kps = np.array([
        [0.0, 0.0], [0.0, WRIST_OFF],
        rootl + 0.5 * L1 * d1l, j2l, j2l + 0.5 * L2 * d2l, tipl,
        rootr + 0.5 * L1 * d1r, j2r, j2r + 0.5 * L2 * d2r, tipr,
    ])
    palm = np.linspace(rootl, rootr, 5)
    link1l = rootl[None] + _T1[:, None] * (L1 * d1l)[None]
    link2l = j2l[None] + _T2[:, None] * (L2 * d2l)[None]
    link1r = rootr[None] + _T1[:, None] * (L1 * d1r)[None]
    link2r = j2r[None] + _T2[:, None] * (L2 * d2r)[None]
    samples = np.concatenate([palm, link1l, link2l, link1r, link2r], axis=0)
    return bp.apply(kps), bp.apply(samples)


def hand_keypoints(state: WorldState):
    """The 10 tracked hand points (palm, wrist, 4 per finger)."""
    kps, _ = hand_points(state.hand_pos)
    return kps


def wrist_point(pos):
    return base_pose(pos).apply(np.array([0.0, WRIST_OFF]))


def force_closure(contacts, external_wrench, com):
    """True iff the contacts' friction-cone wrenches can supply
    -external_wrench (wrench balance about `com`), lambda >= 0."""
    if not contacts:
        raise ValueError("force_closure needs at least one contact")
    cols = []
    for c in contacts:
        n = np.asarray(c.normal, dtype=np.float64)
        nn_ = float(np.hypot(n[0], n[1]))
        if nn_ < 1e-9:
            raise ValueError("degenerate contact normal")
        n = n / nn_
        t = np.array([-n[1], n[0]])
        r = np.asarray(c.point, dtype=np.float64) - np.asarray(com, dtype=np.float64)
        for s in (1.0, -1.0):
            f = -n + s * c.mu * t
            cols.append([f[0], f[1], r[0] * f[1] - r[1] * f[0]])
    wmat = np.ascontiguousarray(np.array(cols, dtype=np.float64).T)
    target = -np.asarray(external_wrench, dtype=np.float64)
    return bool(kernels.cone_feasible(wmat, target))


class GraspEnv:
    """One episode host; single-threaded, owned by one worker."""

    def __init__(self, mode="graff", predictor=None, alpha=1.0, beta=1.0, eta=0.001,
                 n_afford=20, t_max=T_MAX):
        if mode not in ("graff", "com", "noprior"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.predictor = predictor
        self.alpha, self.beta, self.eta = alpha, beta, eta
        self.n_afford = n_afford
        self.t_max = t_max
        self.obj: PlanarObject | None = None
        self.state: WorldState | None = None

    # --- collision machinery ------------------------------------------------

    def _world_poly(self, pose: Pose2):
        return pose.apply(self.obj.polygon.verts)

    def _min_sd(self, samples, poly_world):
        sd, _, _ = kernels.polygon_sdf(np.ascontiguousarray(samples), np.ascontiguousarray(poly_world))
        return float(sd.min())

    def _feasible(self, pos, object_pose, carry_object):
        _, samples = hand_points(pos)
        if samples[:, 1].min() < -PEN_TOL:
            return False
        if carry_object:
            # object moves rigidly with the wrist: only table clearance matters
            return self._world_poly(object_pose)[:, 1].min() >= -PEN_TOL
        return self._min_sd(samples, self._world_poly(object_pose)) >= -PEN_TOL

    def _move_group(self, pos, delta, idx, carry_object):
        """Advance DoFs `idx` by up to `delta`, stopping at contact."""
        cand = pos.copy()
        cand[idx] += delta

        def obj_pose_for(p):
            if carry_object:
                return base_pose(p).compose(self.state.attach_rel)
            return self.state.object_pose

        if self._feasible(cand, obj_pose_for(cand), carry_object):
            return cand
        lo, hi = 0.0, 1.0
        for _ in range(22):
            mid = 0.5 * (lo + hi)
            trial = pos.copy()
            trial[idx] += mid * delta
            if self._feasible(trial, obj_pose_for(trial), carry_object):
                lo = mid
            else:
                hi = mid
        out = pos.copy()
        out[idx] += lo * delta
        return out

    def _extract_contacts(self, pos, object_pose, tol):
        _, samples = hand_points(pos)
        poly = np.ascontiguousarray(self._world_poly(object_pose))
        sd, closest, normal = kernels.polygon_sdf(np.ascontiguousarray(samples), poly)
        order = np.argsort(sd, kind="stable")
        contacts, seen = [], set()
        for i in order:
            if sd[i] > tol:
                break
            key = (round(closest[i, 0] / 0.003), round(closest[i, 1] / 0.003))
            if key in seen:
                continue
            seen.add(key)
            contacts.append(Contact(point=closest[i].copy(), normal=normal[i].copy(), mu=MU))
            if len(contacts) >= 16:
                break
        return contacts

    def _gravity_wrench(self):
        return np.array([0.0, -self.obj.mass * GRAVITY, 0.0])

    def _com_world(self):
        return self.state.object_pose.apply(self.obj.polygon.centroid())

    def _drop_object(self, pos):
        """Lower a released object until it rests on the table or the hand."""
        pose = self.state.object_pose
        verts = self._world_poly(pose)
        max_drop = float(verts[:, 1].min())
        if max_drop <= 0.0:
            return pose
        _, samples = hand_points(pos)
        poly0 = self.obj.polygon.verts

        def ok(d):
            p = Pose2(pose.x, pose.y - d, pose.theta)
            return self._min_sd(samples, p.apply(poly0)) >= -PEN_TOL

        drop = 0.0
        step = max_drop / 64.0
        while drop + step <= max_drop + 1e-12 and ok(drop + step):
            drop += step
        lo, hi = drop, min(drop + step, max_drop)
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return Pose2(pose.x, pose.y - lo, pose.theta)

    # --- observation --------------------------------------------------------

    def _render_occupancy(self, window_center, object_pose):
        half = WINDOW / 2.0
        ox, oy = window_center[0] - half, window_center[1] - half
        img = np.zeros((RESOLUTION, RESOLUTION), dtype=np.float32)
        zs = oy + (np.arange(RESOLUTION) + 0.5) * CELL
        img[zs < 0.0, :] = 0.5
        verts_px = np.ascontiguousarray((self._world_poly(object_pose) - [ox, oy]) / CELL)
        img[kernels.raster_polygon(verts_px, RESOLUTION, RESOLUTION) != 0] = 1.0
        return img

    def _observation(self):
        st = self.state
        wc = wrist_point(st.hand_pos)
        occ = self._render_occupancy(wc, st.object_pose)
        if len(st.afford_pts_obj):
            aw = st.object_pose.apply(st.afford_pts_obj)
            half = WINDOW / 2.0
            pts_px = np.ascontiguousarray((aw - [wc[0] - half, wc[1] - half]) / CELL)
            amask = kernels.raster_disks(pts_px, 1.0, RESOLUTION, RESOLUTION)
            adt = (distance_transform(amask) / (2.0 * RESOLUTION)).astype(np.float32)
            kps, _ = hand_points(st.hand_pos)
            dist = kernels.pairwise_dist(np.ascontiguousarray(kps), np.ascontiguousarray(aw))
        else:
            adt = np.ones((RESOLUTION, RESOLUTION), dtype=np.float32)
            dist = np.zeros((M_KEYPOINTS, 0))
        image = np.stack([occ, adt]).astype(np.float32)
        proprio = np.concatenate([st.hand_pos, st.hand_vel])
        return Observation(image=image, proprio=proprio, dist=dist)

    # --- affordance point selection at reset ---------------------------------

    def _backproject_points(self, occ_image):
        """Predict the affordance mask at t=0 and pin N boundary points."""
        poly = self.obj.polygon
        degenerate = False
        out = self.predictor(occ_image)
        mask = out.mask
        rows, cols = np.nonzero(mask)
        if len(rows) == 0:
            degenerate = True
            _, s_sel = poly.sample_boundary(self.n_afford)
        else:
            wc = wrist_point(self.state.hand_pos)
            half = WINDOW / 2.0
            world = np.stack([
                wc[0] - half + (cols + 0.5) * CELL,
                wc[1] - half + (rows + 0.5) * CELL,
            ], axis=1)
            inv = self.state.object_pose.inverse()
            local = inv.apply(world)
            s_all = np.sort(np.array([poly.arc_param_of(p) for p in local]))
            idx = np.round(np.linspace(0, len(s_all) - 1, self.n_afford)).astype(int)
            s_sel = s_all[idx]
        pts = np.array([poly.point_at(s) for s in s_sel])
        return pts, degenerate

    # --- public API ----------------------------------------------------------

    def reset(self, obj: PlanarObject, orientation, seed=0):
        if not (0.0 <= orientation <= np.pi + 1e-9):
            raise ValueError(f"orientation {orientation} outside [0, pi]")
        self.obj = obj
        pose = rest_pose(obj.polygon, orientation)
        pos = HOME.copy()
        self.state = WorldState(
            hand_pos=pos, hand_vel=np.zeros(N_DOF), object_pose=pose,
            grasp_engaged=False, lifted=False,
            afford_pts_obj=np.zeros((0, 2)), t=0,
        )
        # fixed home pose, raised deterministically if the object pokes into it
        guard = 0
        while not self._feasible(pos, pose, False) and guard < 40:
            pos[1] += 0.01
            guard += 1
        self.state.hand_pos = pos

        if self.mode == "graff":
            if self.predictor is None:
                raise ValueError("graff mode needs an affordance predictor")
            occ = self._render_occupancy(wrist_point(pos), pose)
            pts, degenerate = self._backproject_points(occ)
            self.state.afford_pts_obj = pts
            self.state.degenerate = degenerate
        elif self.mode == "com":
            self.state.afford_pts_obj = obj.polygon.centroid()[None]
        self.state.contacts = self._extract_contacts(pos, pose, CONTACT_TOL)
        return self.state, self._observation()

    def step(self, action, policy_entropy=0.0):
        st = self.state
        if st.t >= self.t_max:
            raise RuntimeError("episode is over; call reset")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (N_DOF,) or not np.isfinite(action).all():
            raise FloatingPointError(f"invalid action {action!r}")
        targets = np.clip(action, LIMITS_LO, LIMITS_HI)
        delta = np.clip(targets - st.hand_pos, -RATES, RATES)

        pos = st.hand_pos
        old = pos.copy()
        pos = self._move_group(pos, delta[:3], slice(0, 3), st.grasp_engaged)
        if st.grasp_engaged:
            st.object_pose = base_pose(pos).compose(st.attach_rel)
        for j in range(3, 7):
            pos = self._move_group(pos, delta[j:j + 1], slice(j, j + 1), False)
        st.hand_vel = (pos - old) / DT
        st.hand_pos = pos

        contacts = self._extract_contacts(pos, st.object_pose, RELEASE_TOL)
        if st.grasp_engaged:
            hold = len(contacts) >= 2 and force_closure(contacts, self._gravity_wrench(), self._com_world())
            if not hold:
                st.grasp_engaged = False
                st.attach_rel = None
                st.object_pose = self._drop_object(pos)
                contacts = self._extract_contacts(pos, st.object_pose, RELEASE_TOL)
        if not st.grasp_engaged:
            tight = self._extract_contacts(pos, st.object_pose, CONTACT_TOL)
            if len(tight) >= 2 and force_closure(tight, self._gravity_wrench(), self._com_world()):
                st.grasp_engaged = True
                st.attach_rel = base_pose(pos).inverse().compose(st.object_pose)
        st.contacts = contacts

        obj_min_z = float(self._world_poly(st.object_pose)[:, 1].min())
        st.lifted = st.grasp_engaged and obj_min_z > H_LIFT

        r_succ = 1.0 if st.lifted else 0.0
        if self.mode == "noprior" or len(st.afford_pts_obj) == 0:
            r_aff = 0.0
        else:
            kps, _ = hand_points(pos)
            aw = st.object_pose.apply(st.afford_pts_obj)
            r_aff = -chamfer(kps, aw)
        r_ent = float(policy_entropy)
        total = self.alpha * r_succ + self.beta * r_aff + self.eta * r_ent
        terms = RewardTerms(r_succ=r_succ, r_aff=r_aff, r_entropy=r_ent, total=total)

        st.t += 1
        done = st.t >= self.t_max
        return st, self._observation(), terms, done

    def perturb_test(self, force=5.0):
        """Stability under gravity plus `force` along each planar axis
        direction, using the final contact set."""
        st = self.state
        if not st.lifted:
            return False
        contacts = self._extract_contacts(st.hand_pos, st.object_pose, RELEASE_TOL)
        if len(contacts) < 2:
            return False
        g = self._gravity_wrench()
        com = self._com_world()
        for d in (np.array([1.0, 0.0]), np.array([-1.0, 0.0]),
                  np.array([0.0, 1.0]), np.array([0.0, -1.0])):
            w = g + np.array([d[0] * force, d[1] * force, 0.0])
            if not force_closure(contacts, w, com):
                return False
        return True

    def min_separation(self):
        """Smallest hand-sample signed distance to the object (diagnostics)."""
        _, samples = hand_points(self.state.hand_pos)
        return self._min_sd(samples, self._world_poly(self.state.object_pose))
