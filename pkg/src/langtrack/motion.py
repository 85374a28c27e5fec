"""Constant-velocity Kalman filtering for box tracks.

State vector: [cx, cy, s, r, v_cx, v_cy, v_s]. The aspect ratio r carries no
velocity term, the usual SORT-family choice. All operations are pure: they
take a state and return a new one, so distinct tracks can be filtered from
concurrent contexts without coordination.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox, StateBox, from_state

__all__ = [
    "KalmanState",
    "MotionModel",
    "DEFAULT_MODEL",
    "kf_init",
    "kf_predict",
    "kf_update",
    "oru_reupdate",
    "state_to_box",
]

DIM_X = 7
DIM_Z = 4


def _default_f() -> np.ndarray:
    f = np.eye(DIM_X)
    f[0, 4] = 1.0
    f[1, 5] = 1.0
    f[2, 6] = 1.0
    return f


def _default_h() -> np.ndarray:
    h = np.zeros((DIM_Z, DIM_X))
    h[:4, :4] = np.eye(4)
    return h


def _default_q() -> np.ndarray:
    q = np.eye(DIM_X)
    q[4:, 4:] *= 0.01
    q[-1, -1] *= 0.01
    return q


def _default_r() -> np.ndarray:
    r = np.eye(DIM_Z)
    r[2:, 2:] *= 10.0
    return r


def _default_init_cov() -> np.ndarray:
    p = np.eye(DIM_X) * 10.0
    p[4:, 4:] *= 1000.0
    return p


@dataclass(frozen=True)
class MotionModel:
    """Matrices of the constant-velocity model with a one-frame time step."""

    f: np.ndarray = field(default_factory=_default_f)
    h: np.ndarray = field(default_factory=_default_h)
    q: np.ndarray = field(default_factory=_default_q)
    r: np.ndarray = field(default_factory=_default_r)
    init_cov: np.ndarray = field(default_factory=_default_init_cov)

    def __post_init__(self) -> None:
        # H that just selects the first four state entries admits a sliced
        # update path with identical floating-point results
        object.__setattr__(
            self, "h_selects_observation", bool(np.array_equal(self.h, _default_h()))
        )


DEFAULT_MODEL = MotionModel()


@dataclass(frozen=True)
class KalmanState:
    """Filter mean (7,) and covariance (7, 7). Treated as an immutable value."""

    mean: np.ndarray
    cov: np.ndarray

    def copy(self) -> "KalmanState":
        return KalmanState(self.mean.copy(), self.cov.copy())


def _check_observation(obs: StateBox) -> np.ndarray:
    z = np.array([obs.cx, obs.cy, obs.s, obs.r], dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError(f"non-finite observation: {obs}")
    if obs.s <= 0 or obs.r <= 0:
        raise ValueError(f"degenerate observation: {obs}")
    return z


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def kf_init(obs: StateBox, model: MotionModel = DEFAULT_MODEL) -> KalmanState:
    """Start a track from its first observation with zero velocity.

    The velocity block of the initial covariance is large, so early updates
    are free to pull the velocity estimate wherever the observations lead.
    """
    z = _check_observation(obs)
    mean = np.zeros(DIM_X)
    mean[:4] = z
    return KalmanState(mean, model.init_cov.copy())


def kf_predict(state: KalmanState, model: MotionModel = DEFAULT_MODEL) -> KalmanState:
    """Advance one frame: mean <- F mean, cov <- F cov F' + Q.

    If the predicted area would go negative (s + v_s < 0), the area velocity
    is zeroed first; long-coasting tracks must never reach impossible states.
    """
    mean = state.mean.copy()
    if mean[2] + mean[6] < 0:
        mean[6] = 0.0
    mean = model.f @ mean
    cov = _symmetrize(model.f @ state.cov @ model.f.T + model.q)
    return KalmanState(mean, cov)


def kf_update(state: KalmanState, obs: StateBox, model: MotionModel = DEFAULT_MODEL) -> KalmanState:
    """Standard Kalman correction in Joseph form (keeps the covariance PSD)."""
    z = _check_observation(obs)
    h, r = model.h, model.r
    if model.h_selects_observation:
        innovation = z - state.mean[:4]
        s = state.cov[:4, :4] + r
        gain = state.cov[:, :4] @ np.linalg.inv(s)
        i_kh = np.eye(DIM_X)
        i_kh[:, :4] -= gain
    else:
        innovation = z - h @ state.mean
        s = h @ state.cov @ h.T + r
        gain = state.cov @ h.T @ np.linalg.inv(s)
        i_kh = np.eye(DIM_X) - gain @ h
    mean = state.mean + gain @ innovation
    cov = i_kh @ state.cov @ i_kh.T + gain @ r @ gain.T
    return KalmanState(mean, _symmetrize(cov))


def oru_reupdate(
    state_at_loss: KalmanState,
    last_obs: StateBox,
    new_obs: StateBox,
    gap: int,
    model: MotionModel = DEFAULT_MODEL,
) -> KalmanState:
    """Re-update a recovered track by replaying a virtual trajectory.

    When a track is re-detected after ``gap`` frames without observations,
    the coasted prediction has accumulated error. This builds ``gap - 1``
    virtual observations by linear interpolation between the last real
    observation and the new one (in center/area/aspect coordinates, the
    filtered space), then replays predict+update from the state the track
    had at its last real update, finishing with the new observation. The
    result replaces the prediction-only state.

    With ``gap == 1`` there are no virtual observations and this is exactly
    one predict+update step.
    """
    if gap < 1:
        raise ValueError(f"gap must be >= 1, got {gap}")
    z0 = _check_observation(last_obs)
    z1 = _check_observation(new_obs)
    state = state_at_loss
    for k in range(1, gap + 1):
        if k < gap:
            frac = k / gap
            virtual = StateBox(*(z0 + frac * (z1 - z0)))
        else:
            virtual = new_obs
        state = kf_update(kf_predict(state, model), virtual, model)
    return state


def state_to_box(state: KalmanState) -> BBox:
    """Corner-format box for the current state mean.

    Area and aspect are clamped to valid ranges: a long-coasting filter can
    brush against zero area, and the box is only used as an association
    anchor, so a safe floor beats an exception here.
    """
    cx, cy, s, r = state.mean[:4]
    return from_state(StateBox(cx, cy, max(s, 0.0), max(r, 1e-9)))
