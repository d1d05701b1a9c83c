"""Fixed-lag smoother: one Gauss-Newton step per keyframe over a sliding window."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import CapacityError, InvalidArgument, NotFoundError
from ..geometry import BA, BG, POS, STATE_DIM, THETA, VEL, KFState, local_coordinates, retract
from ..ife import ImuNoise, PreintegratedDelta
from .factors import (
    GRAVITY, Linearization, VisionModel, linearize_imu, linearize_vision, reprojection_terms,
    triangulate_track,
)
from .hessian import StructuredHessian, build_pattern
from .solver import back_substitute, cholesky_sparse
from .trackstore import TrackStore

log = logging.getLogger(__name__)


@dataclass
class GaussianPrior:
    """``1/2 d^T H d - eps^T d`` with ``d`` the tangent offset from ``lin_states``."""

    kf_ids: list
    H: np.ndarray
    eps: np.ndarray
    lin_states: list

    def offset(self, states):
        return np.concatenate([local_coordinates(a, b) for a, b in zip(self.lin_states, states)])

    def linearize(self, window_indices, states) -> Linearization:
        d = self.offset(states)
        cost = 0.5 * d @ self.H @ d - self.eps @ d
        return Linearization(list(window_indices), self.H, self.eps - self.H @ d, float(cost))


def schur_complement(H, eps, drop, damping=1e-9):
    """Eliminate scalar unknowns ``drop``; returns the system over the rest (same order)."""
    n = H.shape[0]
    drop = np.asarray(drop, dtype=int)
    keep = np.setdiff1d(np.arange(n), drop)
    Hmm = H[np.ix_(drop, drop)]
    w = np.linalg.eigvalsh(Hmm)
    if w[0] <= damping * max(w[-1], 1e-300):
        log.warning("marginal block near singular (min eig %.3g); damping", w[0])
        Hmm = Hmm + np.eye(len(drop)) * damping * max(w[-1], 1.0)
    Hkm = H[np.ix_(keep, drop)]
    K = np.linalg.solve(Hmm, Hkm.T).T
    Hp = H[np.ix_(keep, keep)] - K @ Hkm.T
    ep = eps[keep] - K @ eps[drop]
    return 0.5 * (Hp + Hp.T), ep


def marginalize(H, eps, leaving_states, n_states):
    """Schur out whole 15-dim states; returns ``(H', eps')`` over the remaining states."""
    if H.shape != (STATE_DIM * n_states, STATE_DIM * n_states):
        raise InvalidArgument("system size does not match state count")
    drop = np.concatenate([STATE_DIM * s + np.arange(STATE_DIM) for s in leaving_states])
    return schur_complement(H, eps, drop)


@dataclass
class SmootherConfig:
    horizon: int = 20
    feature_age: int = 10
    max_tracks: int = 4000
    damping: float = 1e-6
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    noise: ImuNoise = field(default_factory=ImuNoise)
    # bootstrap prior: position and yaw pinned, roll/pitch and biases soft
    anchor_position_sigma: float = 1e-4
    anchor_yaw_sigma: float = 1e-4
    anchor_tilt_sigma: float = 0.05
    anchor_velocity_sigma: float = 0.5
    anchor_gyro_bias_sigma: float = 0.01
    anchor_accel_bias_sigma: float = 0.2
    max_reprojection_sigmas: float = 8.0


class DenseSink:
    """Dense accumulator with the same interface as :class:`StructuredHessian`."""

    def __init__(self, n_states):
        self.H = np.zeros((STATE_DIM * n_states,) * 2)
        self.rhs = np.zeros(STATE_DIM * n_states)

    def add_states(self, states, H, b=None):
        idx = np.concatenate([STATE_DIM * s + np.arange(STATE_DIM) for s in states])
        self.H[np.ix_(idx, idx)] += H
        if b is not None:
            self.rhs[idx] += b


@dataclass
class StepReport:
    cost_before: float
    dx_norm: float
    solver_macs: int
    solver_skipped_macs: int
    backsub_macs: int
    vision_factors: int
    skipped_tracks: int


class Smoother:
    def __init__(self, model: VisionModel, config: SmootherConfig = SmootherConfig()):
        if config.feature_age > config.horizon:
            raise InvalidArgument("feature age cannot exceed the horizon")
        self.model = model
        self.config = config
        self.kf_ids: list = []
        self.timestamps: list = []
        self.states: list = []
        self.imu: dict = {}
        self.priors: list = []
        self.tracks = TrackStore(config.max_tracks, config.feature_age,
                                 min(config.max_tracks, 4000))
        self.dropped_observations = 0
        self.last_step: Optional[StepReport] = None
        self.op_counts = {"solver_macs": 0, "solver_skipped_macs": 0, "backsub_macs": 0,
                          "steps": 0, "marginalizations": 0}

    # ------------------------------------------------------------------ window
    def index_of(self, kf_id):
        try:
            return self.kf_ids.index(kf_id)
        except ValueError:
            raise NotFoundError(f"keyframe {kf_id} is not in the window") from None

    def anchor_prior(self, kf_id, state: KFState):
        c = self.config
        H = np.zeros((STATE_DIM, STATE_DIM))
        zb = state.rotation.T @ np.array([0.0, 0.0, 1.0])
        H[THETA, THETA] = (np.outer(zb, zb) / c.anchor_yaw_sigma**2
                           + (np.eye(3) - np.outer(zb, zb)) / c.anchor_tilt_sigma**2)
        H[POS, POS] = np.eye(3) / c.anchor_position_sigma**2
        H[VEL, VEL] = np.eye(3) / c.anchor_velocity_sigma**2
        H[BG, BG] = np.eye(3) / c.anchor_gyro_bias_sigma**2
        H[BA, BA] = np.eye(3) / c.anchor_accel_bias_sigma**2
        return GaussianPrior([kf_id], H, np.zeros(STATE_DIM), [state])

    def initialize(self, kf_id, timestamp, state: KFState, observations=None):
        if self.states:
            raise InvalidArgument("smoother already initialized")
        self.kf_ids.append(kf_id)
        self.timestamps.append(timestamp)
        self.states.append(state)
        self.priors.append(self.anchor_prior(kf_id, state))
        self._insert_observations(kf_id, observations or {})
        return state

    def predict(self, state: KFState, delta: PreintegratedDelta):
        g = self.config.gravity
        dt = delta.duration
        dR, dv, dp = delta.corrected(state.gyro_bias, state.accel_bias)
        R = state.rotation
        return state.with_(
            rotation=R @ dR,
            velocity=state.velocity + g * dt + R @ dv,
            position=state.position + state.velocity * dt + 0.5 * g * dt * dt + R @ dp,
        )

    def add_keyframe(self, kf_id, timestamp, delta: PreintegratedDelta, observations=None,
                     initial_state: Optional[KFState] = None, step=True):
        """Append a keyframe (predicted from the IMU unless given), slide, and take one step."""
        if not self.states:
            raise InvalidArgument("call initialize() first")
        if kf_id <= self.kf_ids[-1]:
            raise InvalidArgument("keyframe ids must increase")
        state = initial_state if initial_state is not None else self.predict(self.states[-1], delta)
        self.imu[(self.kf_ids[-1], kf_id)] = delta
        self.kf_ids.append(kf_id)
        self.timestamps.append(timestamp)
        self.states.append(state)
        self._insert_observations(kf_id, observations or {})
        if len(self.states) > self.config.horizon:
            self.marginalize_oldest()
        if step:
            self.step()
        return self.states[-1]

    def _insert_observations(self, kf_id, observations):
        for lid, coords in observations.items():
            try:
                self.tracks.register(lid)
                if self.tracks.track_length(lid) >= self.config.feature_age:
                    self.dropped_observations += 1
                    continue
                self.tracks.insert(lid, kf_id, coords)
            except CapacityError:
                self.dropped_observations += 1

    # ----------------------------------------------------------- linearization
    def _track_factor(self, lid, states=None):
        states = self.states if states is None else states
        kf, coords = self.tracks.observations(lid)
        if len(kf) < 2:
            return None
        idx = [self.index_of(int(k)) for k in kf]
        sts = [states[i] for i in idx]
        L = triangulate_track(sts, coords, self.model)
        if L is None:
            return None
        terms = reprojection_terms(L, sts, coords, self.model, with_jacobians=False)
        worst = max(np.linalg.norm(r) for r, _, _ in terms) / self.model.pixel_sigma
        if worst > self.config.max_reprojection_sigmas:
            return None
        return linearize_vision(idx, sts, coords, self.model, landmark=L)

    def factors(self, states=None, touching=None):
        """Linearize every factor (or only those involving window index ``touching``)."""
        states = self.states if states is None else states
        out = []
        skipped = 0
        for (a, b), delta in self.imu.items():
            i, j = self.index_of(a), self.index_of(b)
            if touching is None or touching in (i, j):
                out.append(linearize_imu(delta, states[i], states[j], i, j,
                                         self.config.noise, self.config.gravity))
        for prior in self.priors:
            idx = [self.index_of(k) for k in prior.kf_ids]
            if touching is None or touching in idx:
                out.append(prior.linearize(idx, [states[i] for i in idx]))
        vision = 0
        for lid in self.tracks.landmarks:
            if touching is not None:
                kf, _ = self.tracks.observations(lid)
                if self.kf_ids[touching] not in kf:
                    continue
            lin = self._track_factor(lid, states)
            if lin is None:
                if self.tracks.track_length(lid) >= 2:
                    skipped += 1
                continue
            vision += 1
            out.append(lin)
        return out, vision, skipped

    def cost(self, states=None):
        return float(sum(f.cost for f in self.factors(states)[0]))

    def build_system(self, states=None):
        n = len(self.states)
        age = min(self.config.feature_age, n)
        H = StructuredHessian(build_pattern(n, age))
        facs, vision, skipped = self.factors(states)
        for f in facs:
            H.add_states(f.states, f.H, f.eps)
        return H, facs, vision, skipped

    # --------------------------------------------------------------- solving
    def step(self):
        """Exactly one Gauss-Newton iteration over the whole window."""
        H, facs, vision, skipped = self.build_system()
        H.add_diagonal(self.config.damping)
        factor = cholesky_sparse(H)
        dx, bs_macs = back_substitute(factor, H.rhs)
        self.states = [retract(s, dx[STATE_DIM * k:STATE_DIM * (k + 1)])
                       for k, s in enumerate(self.states)]
        self.last_step = StepReport(sum(f.cost for f in facs), float(np.linalg.norm(dx)),
                                    factor.macs, factor.skipped_macs, bs_macs, vision, skipped)
        self.op_counts["solver_macs"] += factor.macs
        self.op_counts["solver_skipped_macs"] += factor.skipped_macs
        self.op_counts["backsub_macs"] += bs_macs
        self.op_counts["steps"] += 1
        return dx

    def marginalize_oldest(self):
        """Fold every factor touching the oldest state into a prior and drop it."""
        n = len(self.states)
        facs, _, _ = self.factors(touching=0)
        sink = DenseSink(n)
        for f in facs:
            sink.add_states(f.states, f.H, f.eps)
        Hp, ep = marginalize(sink.H, sink.rhs, [0], n)
        blocks = Hp.reshape(n - 1, STATE_DIM, n - 1, STATE_DIM)
        coupled = [k for k in range(n - 1) if np.any(blocks[k, :, :, :] != 0.0)]
        if coupled:
            idx = np.concatenate([STATE_DIM * k + np.arange(STATE_DIM) for k in coupled])
            prior = GaussianPrior([self.kf_ids[k + 1] for k in coupled], Hp[np.ix_(idx, idx)],
                                  ep[idx], [self.states[k + 1] for k in coupled])
        else:
            prior = None
        leaving = self.kf_ids[0]
        for lid in self.tracks.tracks_observed_at(leaving):
            self.tracks.evict(lid)
        self.priors = [p for p in self.priors if leaving not in p.kf_ids]
        if prior is not None:
            self.priors.append(prior)
        self.imu = {k: v for k, v in self.imu.items() if leaving not in k}
        del self.kf_ids[0], self.timestamps[0], self.states[0]
        self.op_counts["marginalizations"] += 1

    # ---------------------------------------------------------------- output
    def landmarks(self):
        """Triangulated world points for every live track with two or more views."""
        out = {}
        for lid in self.tracks.landmarks:
            kf, coords = self.tracks.observations(lid)
            if len(kf) < 2 and not self.model.stereo:
                continue
            sts = [self.states[self.index_of(int(k))] for k in kf]
            L = triangulate_track(sts, coords, self.model)
            if L is not None:
                out[lid] = L
        return out


def gauss_newton_step(smoother: Smoother):
    return smoother.step()
