"""Particle filters used as reference estimators for the EKF.

``likelihood="gaussian"`` weights particles with the same Gaussian
approximation of the block densities that the EKF uses; ``"binomial"`` uses
the exact binomial law of the edge counts. Comparing the two isolates the
error of the Gaussian approximation, and comparing either with the EKF
isolates the linearization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, logsumexp

from .ekf import StateSpaceConfig, logistic_vec
from .exceptions import ConfigurationError, NumericalFailureError
from .netcore import vec

__all__ = ["ParticleEnsemble", "pf_filter", "systematic_resample", "effective_sample_size"]


@dataclass
class ParticleEnsemble:
    particles: np.ndarray
    weights: np.ndarray
    t: int = 0

    def __post_init__(self):
        if len(self.particles) < 2:
            raise ValueError("need at least 2 particles")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def mean(self):
        return self.weights @ self.particles

    def cov(self):
        d = self.particles - self.mean()
        return (self.weights[:, None] * d).T @ d


def systematic_resample(weights, rng):
    """Indices drawn by systematic resampling."""
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions)


def effective_sample_size(weights):
    return 1.0 / np.sum(weights**2)


def _gaussian_loglik(y, n, particles):
    theta = logistic_vec(particles)
    s2 = np.maximum(theta * (1.0 - theta) / n, 0.25 / n**2)
    return -0.5 * np.sum((y - theta) ** 2 / s2 + np.log(s2), axis=1)


def _binomial_loglik(m, n, particles):
    return np.sum(m * log_expit(particles) + (n - m) * log_expit(-particles), axis=1)


def _normalize(logw):
    top = np.max(logw)
    if not np.isfinite(top):
        raise NumericalFailureError("all particle log-weights are -inf or NaN")
    w = np.exp(logw - logsumexp(logw))
    return w / w.sum()


def _next_temperature(loglik, logw, beta, n_target):
    # largest step in (beta, 1] keeping the effective sample size >= n_target
    def ess(b):
        return effective_sample_size(_normalize(logw + (b - beta) * loglik))

    if ess(1.0) >= n_target:
        return 1.0
    lo, hi = beta, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if ess(mid) >= n_target:
            lo = mid
        else:
            hi = mid
    return max(lo, beta + 1e-6)


def pf_filter(
    stats_seq,
    cfg: StateSpaceConfig,
    n_particles=10_000,
    likelihood="gaussian",
    seed=None,
    tempering=True,
    n_moves=4,
    trace=None,
):
    """Run a particle filter over a sequence of :class:`BlockStats`.

    Particles start from the prior ``N(init_mean, init_cov)`` and are
    propagated through the random walk (bootstrap proposal). Weights are kept
    in the log domain, and particles are resampled systematically when the
    effective sample size drops below half the particle count.

    With ``tempering=True`` the likelihood of each step is brought in over an
    adaptive ladder of exponents. Each rung is chosen so the effective sample
    size stays at half the particle count; after resampling, every particle
    takes ``n_moves`` random-walk Metropolis steps targeting
    ``N(psi; F psi_prev, Gamma) * L(y | psi)^beta``. Without it the filter is
    a plain bootstrap filter, which degenerates when the state has many
    well-observed coordinates.

    Parameters
    ----------
    trace : list, optional
        If given, one :class:`ParticleEnsemble` per step is appended to it.

    Returns
    -------
    list of (mean, cov) per time step
    """
    if cfg.diffuse:
        raise ConfigurationError("the particle filter needs a proper initial prior (init_mean, init_cov)")
    if likelihood not in ("gaussian", "binomial"):
        raise ValueError(f"unknown likelihood {likelihood!r}")
    if n_particles < 2:
        raise ValueError("n_particles must be >= 2")
    rng = np.random.default_rng(seed)
    d = cfg.dim
    F = cfg.F
    root_g = _factor(cfg.process_cov)
    prec_root = _factor(np.linalg.pinv(cfg.process_cov, hermitian=True))
    x = cfg.init_mean + rng.standard_normal((n_particles, d)) @ _factor(cfg.init_cov).T
    logw = np.full(n_particles, -np.log(n_particles))
    half = n_particles / 2
    out = []
    for t, stats in enumerate(stats_seq, start=1):
        m, n = vec(stats.m).astype(float), vec(stats.n).astype(float)
        if likelihood == "gaussian":
            def loglik(p, y=m / n, n=n):
                return _gaussian_loglik(y, n, p)
        else:
            def loglik(p, m=m, n=n):
                return _binomial_loglik(m, n, p)

        prev = x @ F.T
        x = prev + rng.standard_normal((n_particles, d)) @ root_g.T
        ll = loglik(x)
        if not tempering:
            logw = logw + ll
        else:
            beta = 0.0
            while beta < 1.0:
                nxt = _next_temperature(ll, logw, beta, half)
                logw = logw + (nxt - beta) * ll
                beta = nxt
                if beta >= 1.0:
                    break
                idx = systematic_resample(_normalize(logw), rng)
                x, prev, ll = x[idx], prev[idx], ll[idx]
                logw = np.full(n_particles, -np.log(n_particles))
                x, ll = _rejuvenate(x, prev, ll, beta, prec_root, loglik, n_moves, rng)
        w = _normalize(logw)
        ens = ParticleEnsemble(x, w, t)
        out.append((ens.mean(), ens.cov()))
        if trace is not None:
            trace.append(ParticleEnsemble(x.copy(), w.copy(), t))
        if effective_sample_size(w) < half:
            x = x[systematic_resample(w, rng)]
            logw = np.full(n_particles, -np.log(n_particles))
        else:
            logw = np.log(w)
    return out


def _rejuvenate(x, prev, ll, beta, prec_root, loglik, n_moves, rng):
    """Random-walk Metropolis moves; proposal scale adapted to the particle cloud."""
    n, d = x.shape

    def log_target(p, lp):
        q = (p - prev) @ prec_root
        return beta * lp - 0.5 * np.sum(q * q, axis=1)

    scale = 2.38 / np.sqrt(d)
    cur = log_target(x, ll)
    for _ in range(n_moves):
        root = _factor(np.cov(x, rowvar=False) + 1e-12 * np.eye(d))
        prop = x + scale * rng.standard_normal((n, d)) @ root.T
        ll_prop = loglik(prop)
        new = log_target(prop, ll_prop)
        accept = np.log(rng.random(n)) < new - cur
        x = np.where(accept[:, None], prop, x)
        ll = np.where(accept, ll_prop, ll)
        cur = np.where(accept, new, cur)
        rate = accept.mean()
        scale *= np.exp(rate - 0.3)
    return x, ll


def _factor(S):
    # square root that tolerates PSD (singular) covariances
    vals, vecs = np.linalg.eigh(S)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
