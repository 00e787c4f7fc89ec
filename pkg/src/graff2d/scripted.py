"""Privileged scripted grasp controller.

Validates the simulator/metric harness independently of any learning: it
reads the true object pose and labelled grasp arcs, computes a pinch pose
across the grasp region, and runs approach / close / lift as a small state
machine emitting absolute position targets.
"""
from __future__ import annotations

import numpy as np

from . import env as E
from .geom import Pose2, arc_sample


def grasp_site(obj, object_pose: Pose2):
    """(center, axis u, half-width) of the grasp region in world coords.

    u points from the object's centroid toward the region's free end.
    """
    perim = obj.polygon.perimeter()
    ss = arc_sample(obj.gt_arcs, perim, 40)
    pts = np.array([obj.polygon.point_at(s) for s in ss])
    c = pts.mean(axis=0)
    cov = np.cov((pts - c).T)
    evals, evecs = np.linalg.eigh(cov)
    u = evecs[:, np.argmax(evals)]
    centroid = obj.polygon.centroid()
    if np.dot(u, c - centroid) < 0:
        u = -u
    v = np.array([-u[1], u[0]])
    w_half = float(np.mean(np.abs((pts - c) @ v)))
    # bias the pinch point toward the free end of the region
    span = (pts - c) @ u
    c = c + u * 0.35 * span.max()
    cw = object_pose.apply(c)
    uw = object_pose.rot() @ u
    return cw, uw, w_half


def pinch_plan(obj, object_pose, min_elev_deg=42.0):
    """Approach direction, base angle, and pre-shape for a pinch."""
    cw, uw, w_half = grasp_site(obj, object_pose)
    if uw[1] < 0:
        uw = -uw
    elev = np.degrees(np.arctan2(uw[1], abs(uw[0]) + 1e-12))
    if elev < min_elev_deg:
        sx = 1.0 if uw[0] >= 0 else -1.0
        a = np.array([sx * np.cos(np.radians(min_elev_deg)), np.sin(np.radians(min_elev_deg))])
    else:
        a = uw / np.linalg.norm(uw)
    btheta = np.arctan2(-a[0], a[1])
    g_half = np.clip(w_half + 0.012, 0.018, E.PALM_HALF - 0.005)
    q_pre = np.arcsin(np.clip((E.PALM_HALF - g_half) / (E.L1 + E.L2), -0.9, 0.9))
    mouth = E.L1 * np.cos(q_pre) + 0.55 * E.L2
    return cw, a, btheta, q_pre, mouth


class ScriptedGrasper:
    """Emits absolute DoF targets; call act(state) once per step."""

    def __init__(self, obj, object_pose):
        self.obj = obj
        self.replan(object_pose)
        self.phase = "rise"
        self.stuck = 0
        self.retry = 0
        self.last_pos = None

    def replan(self, object_pose, shift=0.0):
        cw, a, btheta, q_pre, mouth = pinch_plan(self.obj, object_pose)
        v = np.array([-a[1], a[0]])
        self.grasp_base = cw + a * mouth + v * shift
        self.standoff = cw + a * (mouth + 0.13) + v * shift
        self.btheta = float(np.clip(btheta, E.LIMITS_LO[2], E.LIMITS_HI[2]))
        self.q_pre = float(q_pre)

    def act(self, state):
        pos = state.hand_pos
        qp = self.q_pre
        open_f = [qp, 0.0, qp, 0.0]
        closed = [qp + 0.7, 0.45, qp + 0.7, 0.45]
        target = np.array([pos[0], pos[1], self.btheta, *open_f])

        if self.phase == "rise":
            target[:2] = [pos[0], 0.55]
            if pos[1] > 0.53 or state.t > 30:
                self.phase = "travel"
        elif self.phase == "travel":
            target[:2] = [self.standoff[0], max(0.5, self.standoff[1])]
            at = abs(pos[0] - self.standoff[0]) < 0.01 and abs(pos[2] - self.btheta) < 0.05
            if at:
                self.phase = "descend"
                self.stuck = 0
        elif self.phase == "descend":
            target[:2] = self.grasp_base
            near = np.linalg.norm(pos[:2] - self.grasp_base) < 0.012
            moved = self.last_pos is None or np.linalg.norm(pos[:2] - self.last_pos[:2]) > 1e-4
            self.stuck = 0 if moved else self.stuck + 1
            if near or self.stuck > 4:
                self.phase = "close"
                self.stuck = 0
        elif self.phase == "close":
            target[:2] = self.grasp_base
            target[3:] = closed
            moved = self.last_pos is None or np.abs(pos[3:] - self.last_pos[3:]).max() > 1e-4
            self.stuck = 0 if moved else self.stuck + 1
            if state.grasp_engaged:
                self.phase = "lift"
            elif self.stuck > 4:
                self.retry += 1
                shift = 0.012 * ((self.retry + 1) // 2) * (1 if self.retry % 2 else -1)
                self.replan(state.object_pose, shift=shift)
                self.phase = "travel"
                self.stuck = 0
        elif self.phase == "lift":
            target[:2] = [pos[0], min(pos[1] + 0.3, 0.7)]
            target[3:] = closed
            if not state.grasp_engaged:
                self.retry += 1
                self.replan(state.object_pose, shift=0.01 * self.retry)
                self.phase = "travel"
        self.last_pos = pos.copy()
        return np.clip(target, E.LIMITS_LO, E.LIMITS_HI)


def run_scripted_episode(environment: E.GraspEnv, obj, orientation, record=None):
    """One full scripted episode; returns (success, stable, lifted_count)."""
    state, _ = environment.reset(obj, orientation)
    ctl = ScriptedGrasper(obj, state.object_pose)
    lifted_flags = []
    for _ in range(environment.t_max):
        action = ctl.act(state)
        state, _, terms, done = environment.step(action, 0.0)
        lifted_flags.append(state.lifted)
        if record is not None:
            record.append((state.hand_pos.copy(), state.object_pose, state.grasp_engaged, state.lifted))
        if done:
            break
    success = len(lifted_flags) >= 50 and all(lifted_flags[-50:])
    stable = bool(success and environment.perturb_test(5.0))
    return success, stable, int(np.sum(lifted_flags))
