"""Prediction and correction primitives with correntropy-weighted gains.

The correction gain is computed in information form,

    K = (P^-1 + H^T C R^-1 H)^-1 H^T C R^-1

where ``C`` is a diagonal matrix of Gaussian-kernel weights evaluated per
measurement dimension.  A dimension whose innovation is implausibly large
gets a weight near zero and stops influencing the state.  With ``C = I``
the expression collapses to the ordinary Kalman gain, so the robust and
the plain correction share a single code path (``kf_update`` simply forces
identity weights).

The posterior covariance always uses the Joseph form with the unmodified
measurement noise,

    P+ = (I - K H) P (I - K H)^T + K R K^T

which stays positive semidefinite for any gain, weighted or not.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import MeasurementRejected, PropagationError
from .linalg import spd_inverse, spd_solve, symmetrize

log = logging.getLogger(__name__)

# Clamp for kernel exponents: exp(-700) is still a normal float, so weights
# stay strictly positive without drifting into denormal territory.
EXP_FLOOR = -700.0


@dataclass
class GaussianBelief:
    """Gaussian state belief: mean vector, covariance, and a timestamp."""

    mean: np.ndarray
    cov: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)


@dataclass
class ProcessModel:
    """Discrete process model.

    Attributes:
        f: transition function ``f(x, u, dt) -> x_next``.
        jacobian: transition Jacobian ``F(x, u, dt)``.
        noise: per-step process noise covariance Q (mutable; adaptation
            schemes overwrite it between steps).
    """

    f: Callable[[np.ndarray, Optional[np.ndarray], float], np.ndarray]
    jacobian: Callable[[np.ndarray, Optional[np.ndarray], float], np.ndarray]
    noise: np.ndarray


@dataclass
class MeasurementModel:
    """Observation model for one sensor.

    ``bandwidth`` holds the per-dimension kernel sizes used by the
    correntropy weights; it is refreshed by the bandwidth adaptation before
    each correction when that feature is enabled.
    """

    sensor_id: str
    h: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    noise: np.ndarray
    bandwidth: np.ndarray


@dataclass
class CorrentropyWeights:
    """Per-dimension Gaussian kernel weights for one innovation vector.

    Attributes:
        unweighted: L_j = exp(-y_j^2 / (2 sigma_j^2)); used by the noise
            adaptation statistics.
        weighted: C_j = exp(-y_j^2 / (2 sigma_j^2 R_jj)); used inside the
            gain, where the innovation is measured in units of the noise.
    """

    unweighted: np.ndarray
    weighted: np.ndarray


@dataclass
class InnovationRecord:
    """Everything a noise-adaptation scheme needs from one correction."""

    time: float
    innovation: np.ndarray          # y = z - h(x_prior)
    residual: np.ndarray            # r = z - h(x_posterior)
    obs_jacobian: np.ndarray        # H at the prior mean
    cov_pred: np.ndarray            # P before the correction
    cov_post: np.ndarray            # P after the correction
    gain: np.ndarray                # K actually applied
    weights: CorrentropyWeights
    transition: Optional[np.ndarray] = None  # composed F since the previous correction
    regularized: bool = False


@dataclass
class WindowSnapshot:
    """Per-correction record buffered by the sliding-window smoothers.

    ``state`` and ``prior_mean`` are the filtered mean after and before the
    correction, expressed in one shared frame across the whole window (for
    an error-state filter with resets the caller reconstructs the no-reset
    sequence).  ``transition`` and ``process_noise`` describe the composed
    dynamics between this snapshot and the previous one of the same sensor;
    ``steps`` counts how many predict steps that interval contained.
    """

    time: float
    state: np.ndarray               # filtered mean after the correction
    prior_mean: np.ndarray          # filtered mean just before the correction
    cov: np.ndarray                 # posterior covariance
    transition: np.ndarray
    process_noise: np.ndarray
    obs_jacobian: np.ndarray
    innovation: np.ndarray
    residual: np.ndarray
    weights: CorrentropyWeights
    cov_pred: np.ndarray
    gain: np.ndarray
    steps: float = 1.0
    sensor_id: str = ""


def predict(belief: GaussianBelief, model: ProcessModel,
            u: Optional[np.ndarray] = None, dt: float = 1.0) -> GaussianBelief:
    """Propagate a belief through the process model.

    Mean goes through ``model.f``; covariance through F P F^T + Q with the
    result re-symmetrized.  Raises PropagationError naming the first state
    index that came back non-finite.
    """
    if dt <= 0.0:
        raise ValueError(f"predict requires dt > 0, got {dt}")
    mean = np.asarray(model.f(belief.mean, u, dt), dtype=float)
    finite = np.isfinite(mean)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise PropagationError(f"non-finite state after propagation at index {bad}")
    trans = np.asarray(model.jacobian(belief.mean, u, dt), dtype=float)
    cov = symmetrize(trans @ belief.cov @ trans.T + model.noise)
    return GaussianBelief(mean, cov, belief.time + dt)


def correntropy_weights(innovation: np.ndarray, noise: np.ndarray,
                        bandwidth: np.ndarray) -> CorrentropyWeights:
    """Evaluate the per-dimension Gaussian kernel on an innovation vector.

    Only the diagonal of ``noise`` enters the weighted variant; off-diagonal
    structure is handled by the gain itself.  Both outputs lie in (0, 1].
    """
    y = np.asarray(innovation, dtype=float)
    sigma = np.asarray(bandwidth, dtype=float)
    r_diag = np.diag(np.asarray(noise, dtype=float))
    y2 = y * y
    expo_l = np.maximum(-y2 / (2.0 * sigma * sigma), EXP_FLOOR)
    expo_c = np.maximum(-y2 / (2.0 * sigma * sigma * r_diag), EXP_FLOOR)
    return CorrentropyWeights(unweighted=np.exp(expo_l), weighted=np.exp(expo_c))


def _apply_correction(belief: GaussianBelief, z: np.ndarray, y: np.ndarray,
                      h_fn: Callable[[np.ndarray], np.ndarray], obs_jac: np.ndarray,
                      noise: np.ndarray, weights: CorrentropyWeights
                      ) -> tuple[GaussianBelief, InnovationRecord]:
    n = belief.mean.shape[0]
    cov_pred = symmetrize(belief.cov)

    p_inv, reg_p = spd_inverse(cov_pred)
    r_inv, reg_r = spd_inverse(noise)
    # The weighting C R^-1 is applied as the symmetric split sqrt(C) R^-1
    # sqrt(C), which is the same matrix whenever R is diagonal but stays
    # symmetric PSD when an adapted R carries off-diagonal structure.  A
    # zero weight still zeroes the matching gain column exactly.
    root_c = np.sqrt(weights.weighted)
    cr_inv = root_c[:, None] * r_inv * root_c[None, :]
    info = symmetrize(p_inv + obs_jac.T @ cr_inv @ obs_jac)
    gain, reg_i = spd_solve(info, obs_jac.T @ cr_inv)
    regularized = reg_p or reg_r or reg_i
    if regularized:
        log.warning("correction solver regularized with 1e-12 ridge at t=%.6f", belief.time)

    mean = belief.mean + gain @ y
    ikh = np.eye(n) - gain @ obs_jac
    cov = symmetrize(ikh @ cov_pred @ ikh.T + gain @ noise @ gain.T)
    posterior = GaussianBelief(mean, cov, belief.time)
    residual = z - np.asarray(h_fn(mean), dtype=float)
    record = InnovationRecord(
        time=belief.time, innovation=y, residual=residual, obs_jacobian=obs_jac,
        cov_pred=cov_pred, cov_post=cov, gain=gain, weights=weights,
        regularized=regularized,
    )
    return posterior, record


def _check_measurement(z: np.ndarray, sensor_id: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise MeasurementRejected(f"non-finite measurement from sensor '{sensor_id}'")
    return z


def mcckf_update(belief: GaussianBelief, z: np.ndarray,
                 model: MeasurementModel) -> tuple[GaussianBelief, InnovationRecord]:
    """Correntropy-weighted correction using the model's current bandwidth."""
    z = _check_measurement(z, model.sensor_id)
    obs_jac = np.asarray(model.jacobian(belief.mean), dtype=float)
    y = z - np.asarray(model.h(belief.mean), dtype=float)
    weights = correntropy_weights(y, model.noise, model.bandwidth)
    return _apply_correction(belief, z, y, model.h, obs_jac, model.noise, weights)


def kf_update(belief: GaussianBelief, z: np.ndarray,
              model: MeasurementModel) -> tuple[GaussianBelief, InnovationRecord]:
    """Plain Kalman correction: identical code path with unit kernel weights."""
    z = _check_measurement(z, model.sensor_id)
    obs_jac = np.asarray(model.jacobian(belief.mean), dtype=float)
    y = z - np.asarray(model.h(belief.mean), dtype=float)
    ones = np.ones(y.shape[0])
    weights = CorrentropyWeights(unweighted=ones, weighted=ones.copy())
    return _apply_correction(belief, z, y, model.h, obs_jac, model.noise, weights)
