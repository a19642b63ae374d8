"""Activation centers of gradient maps via a weighted Gaussian mixture.

Pixel locations are treated as 2-D points with fractional multiplicities
given by the normalized gradient magnitudes. EM runs several restarts and
the mean of the heaviest component wins. Positions are (x, y) pixel
coordinates with x along the width axis.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .gradmaps import ZeroMapError, normalize_map


@dataclass
class GmmConfig:
    components: int = 2
    max_iterations: int = 100
    restarts: int = 3
    rng_seed: int = 0
    tol: float = 1e-6
    covariance_floor: float = 1e-4

    def validate(self):
        if self.components < 1 or self.restarts < 1 or self.max_iterations < 1:
            raise ValueError("components, restarts, max_iterations must be >= 1")


@dataclass
class ActivationCenter:
    x: Optional[float]
    y: Optional[float]
    cluster_weight: float
    occluded: bool

    @property
    def position(self) -> Tuple[float, float]:
        if self.occluded:
            raise ValueError("occluded center has no position")
        return (self.x, self.y)


OCCLUDED = ActivationCenter(None, None, 0.0, True)


def map_points(gmap):
    """(points, weights) for the pixels carrying positive mass; weights sum to 1."""
    norm = normalize_map(gmap)
    ys, xs = np.nonzero(norm > 0)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    w = norm[ys, xs]
    return pts, w / w.sum()


def _floor_cov(cov, floor):
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _log_joint(points, state):
    """log(mix_k * N(p_n | mean_k, cov_k)) for all points and components."""
    means, covs, mix = state
    diff = points[:, None, :] - means[None, :, :]
    invs = np.linalg.inv(covs)
    _, logdets = np.linalg.slogdet(covs)
    maha = np.einsum("nki,kij,nkj->nk", diff, invs, diff)
    return np.log(mix)[None, :] - 0.5 * (maha + logdets[None, :]) \
        - np.log(2.0 * np.pi)


def weighted_log_likelihood(points, weights, state):
    logp = _log_joint(points, state)
    top = logp.max(axis=1)
    return float(np.sum(weights * (top + np.log(np.exp(logp - top[:, None]).sum(axis=1)))))


def em_step(points, weights, state, covariance_floor=1e-4):
    """One weighted E+M step. Returns (new_state, log-likelihood of new_state)."""
    means, covs, mix = state
    k_comp = len(mix)
    logp = _log_joint(points, state)
    new_state = _m_step(points, weights, logp, covs, covariance_floor)
    return new_state, weighted_log_likelihood(points, weights, new_state)


def _m_step(points, weights, logp, covs, covariance_floor):
    top = logp.max(axis=1, keepdims=True)
    resp = np.exp(logp - top)
    resp /= resp.sum(axis=1, keepdims=True)
    wresp = resp * weights[:, None]
    mass = np.maximum(wresp.sum(axis=0), 1e-300)
    new_means = (wresp.T @ points) / mass[:, None]
    new_covs = np.empty_like(covs)
    for k in range(len(mass)):
        diff = points - new_means[k]
        cov = (wresp[:, k, None] * diff).T @ diff / mass[k]
        new_covs[k] = _floor_cov(cov, covariance_floor)
    new_mix = mass / mass.sum()
    return new_means, new_covs, new_mix


def _init_state(points, weights, cfg, rng, span):
    k = cfg.components
    idx = rng.choice(len(points), size=k, p=weights)
    means = points[idx].astype(np.float64)
    scale = max((span / 8.0) ** 2, cfg.covariance_floor)
    covs = np.tile(np.eye(2) * scale, (k, 1, 1))
    mix = np.full(k, 1.0 / k)
    return means, covs, mix


def _run_em(points, weights, cfg, rng, span):
    # fused loop: the density evaluation serves both the E-step and the
    # convergence check on the pre-step likelihood
    state = _init_state(points, weights, cfg, rng, span)
    prev_ll = -np.inf
    for _ in range(cfg.max_iterations):
        logp = _log_joint(points, state)
        top = logp.max(axis=1)
        ll = float(np.sum(weights * (
            top + np.log(np.exp(logp - top[:, None]).sum(axis=1)))))
        state = _m_step(points, weights, logp, state[1], cfg.covariance_floor)
        if abs(ll - prev_ll) < cfg.tol:
            break
        prev_ll = ll
    return state, weighted_log_likelihood(points, weights, state)


def fit_activation_center(gmap, cfg=None):
    """Weighted GMM fit with restarts; the heaviest component's mean is the
    center. An all-zero map yields an occluded center."""
    if cfg is None:
        cfg = GmmConfig()
    cfg.validate()
    try:
        points, weights = map_points(gmap)
    except ZeroMapError:
        return OCCLUDED
    h, w = np.asarray(gmap).shape
    span = float(np.hypot(h, w))
    best_state, best_ll = None, -np.inf
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.rng_seed, r])
        state, ll = _run_em(points, weights, cfg, rng, span)
        if ll > best_ll:
            best_state, best_ll = state, ll
    means, _, mix = best_state
    # deterministic pick: heaviest component, ties by position
    order = sorted(range(len(mix)),
                   key=lambda k: (-mix[k], means[k, 0], means[k, 1]))
    k = order[0]
    return ActivationCenter(float(means[k, 0]), float(means[k, 1]),
                            float(mix[k]), False)


def max_position_center(gmap):
    """Position of the maximum value; ties break to the lowest flat index."""
    gmap = np.asarray(gmap)
    if gmap.max() <= 0.0:
        return OCCLUDED
    flat = int(np.argmax(gmap))
    y, x = divmod(flat, gmap.shape[1])
    return ActivationCenter(float(x), float(y), 1.0, False)
