"""Variational sliding-window noise adaptation with inverse-Wishart states.

The scheme keeps a window of recent correction snapshots, runs a
Rauch-Tung-Striebel backward pass over it, and folds the resulting
smoothed statistics into inverse-Wishart hyperparameters:

    t <- rho t + n,   T <- rho T + sum_j O_j      (process noise)
    b <- rho b + n,   B <- rho B + sum_j M_j      (measurement noise)

with point estimates Q = T / t and R = B / b.  O_j is the standard
expectation-maximization process statistic built from smoothed means,
covariances, and lag-one cross-covariances; M_j is the kernel-weighted
residual outer product plus the smoothed observation covariance,

    M_j = L_j r_j r_j^T L_j + H_j P_j|k H_j^T.

With unit weights (L = I) the recursions match the classical
sliding-window variational adaptive filter, which is also how the plain
adaptive variant is obtained.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AdaptationNotReady
from .filter_core import WindowSnapshot
from .linalg import psd_project, spd_solve, symmetrize

log = logging.getLogger(__name__)


@dataclass
class WishartNoiseState:
    """Inverse-Wishart hyperparameters for process and measurement noise."""

    t: float
    T: np.ndarray
    b: float
    B: np.ndarray

    @classmethod
    def initial(cls, state_dim: int, obs_dim: int) -> "WishartNoiseState":
        """Flat prior: zero degrees of freedom, zero scale matrices."""
        return cls(t=0.0, T=np.zeros((state_dim, state_dim)),
                   b=0.0, B=np.zeros((obs_dim, obs_dim)))


@dataclass
class SmootherWindow:
    """Sliding window of correction snapshots for one sensor.

    ``length`` is the window parameter: up to ``length + 1`` snapshots are
    retained so that the backward pass can cover ``length`` transitions.
    """

    length: int
    snapshots: list[WindowSnapshot] = field(default_factory=list)

    def push(self, snapshot: WindowSnapshot) -> None:
        self.snapshots.append(snapshot)
        if len(self.snapshots) > self.length + 1:
            del self.snapshots[0]

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass
class SmoothedWindow:
    """Backward-pass output aligned with the window's snapshots.

    ``means[j]`` and ``covs[j]`` are the smoothed estimates for snapshot j;
    ``gains[j-1]`` and ``crosses[j-1]`` hold the smoother gain G_{j-1} and
    the lag-one cross-covariance P_{j-1,j|k} for each transition.
    """

    means: list[np.ndarray]
    covs: list[np.ndarray]
    gains: list[np.ndarray]
    crosses: list[np.ndarray]


def backward_smooth(window: SmootherWindow) -> SmoothedWindow:
    """Rauch-Tung-Striebel backward pass over the buffered snapshots.

    For each transition, with F_j the composed dynamics of snapshot j and
    (x_j|j-1, P_j|j-1) the buffered pre-correction mean and covariance:

        G_j-1   = P_j-1|j-1 F_j^T (P_j|j-1)^-1
        x_j-1|k = x_j-1|j-1 + G_j-1 (x_j|k - x_j|j-1)
        P_j-1|k = P_j-1|j-1 + G_j-1 (P_j|k - P_j|j-1) G_j-1^T
        P_j-1,j|k = G_j-1 P_j|k

    Using the buffered prior (rather than recomputing F P F^T + Q) keeps
    the pass exact when other sensors corrected the state inside the
    interval.  A window with a single snapshot smooths to its filtered
    values.
    """
    snaps = window.snapshots
    if not snaps:
        raise AdaptationNotReady("cannot smooth an empty window")
    count = len(snaps)
    means: list[Optional[np.ndarray]] = [None] * count
    covs: list[Optional[np.ndarray]] = [None] * count
    gains: list[Optional[np.ndarray]] = [None] * (count - 1)
    crosses: list[Optional[np.ndarray]] = [None] * (count - 1)

    means[-1] = snaps[-1].state.copy()
    covs[-1] = symmetrize(snaps[-1].cov)
    for j in range(count - 1, 0, -1):
        prev = snaps[j - 1]
        cur = snaps[j]
        cov_prev = symmetrize(prev.cov)
        cov_pred = symmetrize(cur.cov_pred)
        gain_t, regularized = spd_solve(cov_pred, cur.transition @ cov_prev)
        if regularized:
            log.warning("smoother regularized a singular predicted covariance")
        gain = gain_t.T
        means[j - 1] = prev.state + gain @ (means[j] - cur.prior_mean)
        covs[j - 1] = symmetrize(cov_prev + gain @ (covs[j] - cov_pred) @ gain.T)
        gains[j - 1] = gain
        crosses[j - 1] = gain @ covs[j]
    return SmoothedWindow(means=means, covs=covs, gains=gains, crosses=crosses)  # type: ignore[arg-type]


def process_statistic(window: SmootherWindow, smoothed: SmoothedWindow) -> tuple[np.ndarray, int]:
    """Sum of per-transition process-noise statistics over the window.

    With x~_j = x_j|k - F_j x_j-1|k, each term is

        O_j = P_j|k - F_j P_j-1,j|k - P_j-1,j|k^T F_j^T
              + F_j P_j-1|k F_j^T + x~_j x~_j^T

    and the sum is projected onto the positive-semidefinite cone to absorb
    round-off.  Transitions spanning zero predict steps (two corrections at
    the same instant) are identities with no noise; they carry no evidence
    about the process noise and are excluded from both the sum and the
    returned count.  Requires at least two snapshots.
    """
    snaps = window.snapshots
    if len(snaps) < 2:
        raise AdaptationNotReady("process statistic needs at least two snapshots")
    dim = snaps[0].state.shape[0]
    total = np.zeros((dim, dim))
    count = 0
    for j in range(1, len(snaps)):
        if snaps[j].steps <= 0.0:
            continue
        trans = snaps[j].transition
        cross = smoothed.crosses[j - 1]
        tilde = smoothed.means[j] - trans @ smoothed.means[j - 1]
        term = (smoothed.covs[j] - trans @ cross - cross.T @ trans.T
                + trans @ smoothed.covs[j - 1] @ trans.T + np.outer(tilde, tilde))
        total += term
        count += 1
    return psd_project(total), count


def measurement_statistic(window: SmootherWindow, smoothed: SmoothedWindow,
                          sensor_id: Optional[str] = None) -> tuple[np.ndarray, int]:
    """Kernel-weighted residual statistic summed over matching snapshots.

    The buffered residual is taken against the filtered mean; re-anchoring
    it to the smoothed mean gives r_j|k = r_j + H_j (x_j|j - x_j|k).  Each
    snapshot then contributes L r_j|k r_j|k^T L + H P_j|k H^T, so a
    dimension the kernel has suppressed adds only the smoothed-covariance
    floor.  With ``sensor_id`` given, only that sensor's snapshots count
    (the window may interleave several sources); returns the sum and the
    number of contributing snapshots.
    """
    snaps = window.snapshots
    if not snaps:
        raise AdaptationNotReady("measurement statistic needs a non-empty window")
    obs_dim = snaps[0].residual.shape[0]
    total = np.zeros((obs_dim, obs_dim))
    count = 0
    for j, snap in enumerate(snaps):
        if sensor_id is not None and snap.sensor_id != sensor_id:
            continue
        h = snap.obs_jacobian
        residual = snap.residual + h @ (snap.state - smoothed.means[j])
        weighted = snap.weights.unweighted * residual
        total += np.outer(weighted, weighted) + h @ smoothed.covs[j] @ h.T
        count += 1
    return symmetrize(total), count


def wishart_update(state: WishartNoiseState, o_sum: np.ndarray, m_sum: np.ndarray,
                   rho: float, count: int) -> WishartNoiseState:
    """One forgetting-factor recursion of the inverse-Wishart hyperparameters.

    ``count`` is the number of transitions the statistics cover; during
    warm-up it is smaller than the configured window length.  The degrees
    of freedom converge to count / (1 - rho) when count is constant.
    """
    return WishartNoiseState(
        t=rho * state.t + count,
        T=rho * state.T + o_sum,
        b=rho * state.b + count,
        B=rho * state.B + m_sum,
    )


def extract_noise(state: WishartNoiseState) -> tuple[np.ndarray, np.ndarray]:
    """Point estimates (Q, R) = (T / t, B / b).

    Raises AdaptationNotReady while either degree-of-freedom count is still
    non-positive; callers keep their previous estimates in that case.
    """
    if state.t <= 0.0 or state.b <= 0.0:
        raise AdaptationNotReady(
            f"degrees of freedom not positive yet (t={state.t}, b={state.b})")
    return symmetrize(state.T / state.t), symmetrize(state.B / state.b)


class VbNoiseAdapter:
    """Engine-facing wrapper tying the window, smoother, and recursions together.

    One instance serves a whole filter: corrections from every sensor are
    pushed into a single interleaved window, so consecutive snapshots are
    related by pure prediction and the backward pass stays exact.  The
    process-noise hyperparameters (t, T) are shared; each sensor keeps its
    own measurement pair (b, B), as snapshots carry their sensor id.

    ``refresh`` is called after each pushed correction and returns the
    per-transition process noise estimate, the mean predict-step count per
    transition (for rescaling Q to a per-step value), and a mapping of
    sensor id to updated measurement noise.
    """

    def __init__(self, state_dim: int, obs_dim: int, window: int = 10,
                 forgetting: float = 0.97) -> None:
        if window < 1:
            raise ValueError("window must be at least 1")
        if not 0.0 < forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.window = SmootherWindow(length=window)
        self.forgetting = forgetting
        self.t = 0.0
        self.T = np.zeros((state_dim, state_dim))
        self.measurement: dict[str, tuple[float, np.ndarray]] = {}
        self._obs_dim = obs_dim

    def push(self, snapshot: WindowSnapshot) -> None:
        self.window.push(snapshot)

    def mean_interval_steps(self) -> float:
        """Average predict-step count over the window's real transitions."""
        steps = [snap.steps for snap in self.window.snapshots[1:] if snap.steps > 0.0]
        if not steps:
            return 1.0
        return float(np.mean(steps))

    def refresh(self) -> tuple[Optional[np.ndarray], float, dict[str, np.ndarray]]:
        """Run the backward pass and update all hyperparameters.

        Raises AdaptationNotReady until the window holds two snapshots.
        The process-noise estimate is None until at least one transition
        with a positive step count has been folded in; callers keep their
        current value in that case.
        """
        rho = self.forgetting
        if len(self.window) < 2:
            raise AdaptationNotReady("window holds fewer than two snapshots")
        smoothed = backward_smooth(self.window)
        o_sum, count = process_statistic(self.window, smoothed)
        if count > 0:
            self.t = rho * self.t + count
            self.T = rho * self.T + o_sum

        noise_by_sensor: dict[str, np.ndarray] = {}
        seen: list[str] = []
        for snap in self.window.snapshots:
            if snap.sensor_id not in seen:
                seen.append(snap.sensor_id)
        for sensor_id in seen:
            m_sum, m_count = measurement_statistic(self.window, smoothed, sensor_id)
            b_prev, big_b_prev = self.measurement.get(
                sensor_id, (0.0, np.zeros((self._obs_dim, self._obs_dim))))
            b = rho * b_prev + m_count
            big_b = rho * big_b_prev + m_sum
            self.measurement[sensor_id] = (b, big_b)
            if b > 0.0:
                noise_by_sensor[sensor_id] = symmetrize(big_b / b)

        q_interval = symmetrize(self.T / self.t) if self.t > 0.0 else None
        return q_interval, self.mean_interval_steps(), noise_by_sensor
