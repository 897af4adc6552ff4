"""Logit-scale state-space model and extended Kalman filter for block probabilities.

The state is the vectorized logit of the k x k edge-probability matrix (see
:func:`dynsbm.netcore.vec` for the index map). It evolves as
``psi_t = F psi_{t-1} + v_t`` with ``v_t ~ N(0, Gamma)`` and is observed through
block densities ``y_t = logistic(psi_t) + z_t`` with diagonal noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import ConfigurationError, DimensionError, NumericalFailureError
from .netcore import BlockStats, block_counts, unvec, vec

logger = logging.getLogger(__name__)

__all__ = [
    "FilterState",
    "StateSpaceConfig",
    "ObsNoise",
    "SecondOrderReport",
    "logistic_vec",
    "logit_vec",
    "logistic_slope",
    "logistic_curvature",
    "jacobian_h",
    "predict",
    "update",
    "diffuse_init",
    "plugin_obs_cov",
    "build_process_cov",
    "filter_step",
    "run_filter",
    "prediction_error",
    "second_order_diagnostic",
    "fit_hyperparams",
]

PREDICTED = "predicted"
UPDATED = "updated"


def logistic_vec(x):
    """Entrywise logistic ``1 / (1 + exp(-x))`` that never underflows to exactly 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logit_vec(y):
    """Entrywise ``log(y) - log(1 - y)``; ``y`` must lie strictly inside (0, 1)."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(y >= 1):
        raise ValueError("logit is only defined on (0, 1); clamp densities first")
    return np.log(y) - np.log1p(-y)


def logistic_slope(x):
    """Derivative of the logistic, ``h (1 - h)``."""
    h = logistic_vec(x)
    return h * (1.0 - h)


def logistic_curvature(x):
    """Second derivative of the logistic, ``h (1 - h) (1 - 2h)``."""
    h = logistic_vec(x)
    return h * (1.0 - h) * (1.0 - 2.0 * h)


def jacobian_h(psi_pred):
    """Diagonal Jacobian of the entrywise logistic at ``psi_pred``."""
    return np.diag(logistic_slope(psi_pred))


def _check_cov(R, name, rtol=1e-10):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {R.shape}")
    scale = max(np.max(np.abs(R)), 1e-300)
    if np.max(np.abs(R - R.T)) > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    tr = np.trace(R)
    if R.size and np.linalg.eigvalsh(R)[0] < -1e-9 * max(tr, 1e-300):
        raise ValueError(f"{name} is not positive semidefinite")
    return R


@dataclass(frozen=True)
class FilterState:
    """Mean and covariance of the logit state at time ``t``.

    ``phase`` is ``"predicted"`` for ``psi^{t|t-1}`` and ``"updated"`` for ``psi^{t|t}``.
    """

    mean: np.ndarray
    cov: np.ndarray = field(repr=False)
    t: int = 1
    phase: str = UPDATED

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = _check_cov(self.cov, "state covariance")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance {cov.shape} does not match mean of length {mean.size}")
        k = int(round(np.sqrt(mean.size)))
        if k * k != mean.size:
            raise DimensionError(f"state length {mean.size} is not k^2")
        if self.phase not in (PREDICTED, UPDATED):
            raise ValueError(f"unknown phase {self.phase!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def k(self):
        return int(round(np.sqrt(self.mean.size)))

    @property
    def theta(self):
        """Edge probabilities ``logistic(mean)`` as a k x k matrix."""
        return unvec(logistic_vec(self.mean))


@dataclass(frozen=True)
class ObsNoise:
    """Diagonal observation noise variances, one per block cell."""

    sigma2: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma2, dtype=float).ravel()
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("observation variances must be finite and positive")
        object.__setattr__(self, "sigma2", s)


@dataclass(frozen=True)
class StateSpaceConfig:
    """Dynamics and initialization of the logit state.

    Parameters
    ----------
    process_cov : ndarray (k^2, k^2)
        Covariance ``Gamma`` of the random-walk increments.
    transition : ndarray (k^2, k^2) or None
        State transition ``F``; None means identity.
    init_mean, init_cov : ndarray or None
        Prior of the state at time 0. Ignored when ``diffuse`` is True.
    diffuse : bool
        Initialize from the first observation instead of a proper prior.
    """

    process_cov: np.ndarray
    transition: np.ndarray | None = None
    init_mean: np.ndarray | None = None
    init_cov: np.ndarray | None = None
    diffuse: bool = True

    def __post_init__(self):
        G = _check_cov(self.process_cov, "process covariance")
        d = G.shape[0]
        object.__setattr__(self, "process_cov", G)
        if self.transition is not None:
            F = np.asarray(self.transition, dtype=float)
            if F.shape != (d, d):
                raise DimensionError(f"transition must be {(d, d)}, got {F.shape}")
            object.__setattr__(self, "transition", F)
        if not self.diffuse:
            if self.init_mean is None or self.init_cov is None:
                raise ConfigurationError("a non-diffuse config needs init_mean and init_cov")
            mu = np.asarray(self.init_mean, dtype=float).ravel()
            if mu.size != d:
                raise DimensionError(f"init_mean must have length {d}")
            G0 = _check_cov(self.init_cov, "initial covariance")
            if G0.shape != (d, d):
                raise DimensionError(f"init_cov must be {(d, d)}")
            object.__setattr__(self, "init_mean", mu)
            object.__setattr__(self, "init_cov", G0)

    @classmethod
    def from_hyperparams(cls, k, s_diag, s_nb, transition=None, init_mean=None, init_cov=None):
        """Config with the row/column-structured process covariance."""
        return cls(
            process_cov=build_process_cov(k, s_diag, s_nb),
            transition=transition,
            init_mean=init_mean,
            init_cov=init_cov,
            diffuse=init_mean is None,
        )

    @property
    def dim(self):
        return self.process_cov.shape[0]

    @property
    def F(self):
        return np.eye(self.dim) if self.transition is None else self.transition


def build_process_cov(k, s_diag, s_nb):
    """Process covariance coupling block cells that share a row or a column.

    ``Gamma[i, i] = s_diag``; ``Gamma[i, j] = s_nb`` when cells ``i`` and ``j``
    lie in the same row or column of the k x k block matrix; 0 otherwise.
    """
    a = np.tile(np.arange(k), k)  # row of each vectorized cell
    b = np.repeat(np.arange(k), k)  # column of each vectorized cell
    neighbours = (a[:, None] == a[None, :]) | (b[:, None] == b[None, :])
    G = np.where(neighbours, float(s_nb), 0.0)
    np.fill_diagonal(G, float(s_diag))
    lam = np.linalg.eigvalsh(G)[0]
    if lam < -1e-12 * max(abs(s_diag), abs(s_nb), 1e-300):
        raise ConfigurationError(
            f"process covariance with s_diag={s_diag}, s_nb={s_nb} is not PSD "
            f"(smallest eigenvalue {lam:.3g}; need s_diag >= 2 s_nb for k > 2)"
        )
    if s_diag < 0:
        raise ConfigurationError("s_diag must be nonnegative")
    return G


def plugin_obs_cov(psi_pred, n) -> ObsNoise:
    """Observation variances ``theta (1 - theta) / n`` at ``theta = logistic(psi_pred)``.

    Floored at ``1 / (4 n^2)``. ``n`` may be a k x k matrix; it is vectorized.
    """
    n = np.asarray(n, dtype=float)
    if n.ndim == 2:
        n = vec(n)
    theta = logistic_vec(psi_pred)
    s2 = theta * (1.0 - theta) / n
    return ObsNoise(np.maximum(s2, 0.25 / n**2))


def predict(state: FilterState, cfg: StateSpaceConfig) -> FilterState:
    """Time update: ``psi <- F psi``, ``R <- F R F^T + Gamma``."""
    if state.phase != UPDATED:
        raise ValueError("predict expects an updated state")
    if state.mean.size != cfg.dim:
        raise DimensionError(f"state of length {state.mean.size} vs config of dimension {cfg.dim}")
    F = cfg.F
    R = F @ state.cov @ F.T + cfg.process_cov
    return FilterState(F @ state.mean, 0.5 * (R + R.T), t=state.t + 1, phase=PREDICTED)


def _factor_innovation(S):
    try:
        return linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(S) / S.shape[0]
        logger.warning("innovation covariance not PD; adding jitter %.3g", jitter)
        try:
            return linalg.cho_factor(S + jitter * np.eye(S.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            eig = np.linalg.eigvalsh(S)
            raise NumericalFailureError(
                f"innovation covariance not PD after jitter (eigenvalues in [{eig[0]:.3g}, {eig[-1]:.3g}])"
            ) from exc


def update(state: FilterState, y, noise: ObsNoise, h=logistic_vec, h_slope=logistic_slope) -> FilterState:
    """Measurement update with observation ``y`` (vectorized, clamped densities).

    ``h`` and ``h_slope`` are the entrywise observation map and its derivative;
    they default to the logistic. The covariance is computed in Joseph form and
    re-symmetrized.
    """
    if state.phase != PREDICTED:
        raise ValueError("update expects a predicted state")
    y = np.asarray(y, dtype=float).ravel()
    d = state.mean.size
    if y.size != d or noise.sigma2.size != d:
        raise DimensionError(f"observation length {y.size} / noise length {noise.sigma2.size} vs state {d}")
    R = state.cov
    H = h_slope(state.mean)
    HR = H[:, None] * R
    S = HR * H[None, :] + np.diag(noise.sigma2)
    cf = _factor_innovation(S)
    K = linalg.cho_solve(cf, HR).T
    mean = state.mean + K @ (y - h(state.mean))
    A = np.eye(d) - K * H[None, :]
    cov = A @ R @ A.T + (K * noise.sigma2) @ K.T
    return FilterState(mean, 0.5 * (cov + cov.T), t=state.t, phase=UPDATED)


def diffuse_init(stats: BlockStats, t=1) -> FilterState:
    """Initial state from the first observation under a flat prior.

    Mean is the logit of the clamped densities; covariance is
    ``G Sigma G`` with ``G = diag(1/y + 1/(1-y))`` and ``Sigma`` the plug-in
    noise at ``theta = y``.
    """
    y = vec(stats.clamped())
    psi = logit_vec(y)
    sigma2 = plugin_obs_cov(psi, stats.n).sigma2
    g = 1.0 / y + 1.0 / (1.0 - y)
    return FilterState(psi, np.diag(g**2 * sigma2), t=t, phase=UPDATED)


def _initial_predicted(cfg: StateSpaceConfig, t=1):
    F = cfg.F
    R = F @ cfg.init_cov @ F.T + cfg.process_cov
    return FilterState(F @ cfg.init_mean, 0.5 * (R + R.T), t=t, phase=PREDICTED)


def filter_step(state, stats: BlockStats, cfg: StateSpaceConfig):
    """Predict from ``state`` (or from the prior when None) and update on ``stats``.

    Returns ``(predicted, updated)``. With a diffuse config and ``state=None``
    the predicted state is None.
    """
    if state is None:
        if cfg.diffuse:
            return None, diffuse_init(stats)
        pred = _initial_predicted(cfg)
    else:
        pred = predict(state, cfg)
    noise = plugin_obs_cov(pred.mean, stats.n)
    return pred, update(pred, vec(stats.clamped()), noise)


def run_filter(stats_seq, cfg: StateSpaceConfig, return_predicted=False):
    """A priori EKF over a sequence of :class:`BlockStats`.

    Returns the list of updated states, and the list of predicted states
    (None at a diffuse first step) when ``return_predicted`` is True.
    """
    updated, predicted = [], []
    state = None
    for stats in stats_seq:
        pred, state = filter_step(state, stats, cfg)
        if state.t != len(updated) + 1:
            state = FilterState(state.mean, state.cov, t=len(updated) + 1, phase=UPDATED)
        predicted.append(pred)
        updated.append(state)
    return (updated, predicted) if return_predicted else updated


def prediction_error(stats_seq, cfg: StateSpaceConfig) -> float:
    """Sum over ``t >= 2`` of ``||y_t - logistic(psi^{t|t-1})||^2``."""
    _, predicted = run_filter(stats_seq, cfg, return_predicted=True)
    err = 0.0
    for stats, pred in zip(stats_seq[1:], predicted[1:]):
        err += float(np.sum((vec(stats.clamped()) - logistic_vec(pred.mean)) ** 2))
    return err


@dataclass(frozen=True)
class SecondOrderReport:
    """Eigenvalues of the second-order linearization term and of the noise covariance."""

    second_order: np.ndarray
    noise: np.ndarray

    def summary(self):
        def stats(v):
            return {"min": float(np.min(v)), "median": float(np.median(v)), "max": float(np.max(v))}

        return {"second_order": stats(self.second_order), "noise": stats(self.noise)}


def second_order_diagnostic(state: FilterState, noise: ObsNoise) -> SecondOrderReport:
    """Compare the bias and variance of the second-order Taylor term to ``Sigma``.

    Each logistic coordinate has a Hessian with a single nonzero entry
    ``h''(psi_i)`` at ``(i, i)``, so the traces reduce to
    ``1/4 (c_i R_ii)(c_j R_jj) + 1/2 c_i c_j R_ij^2`` with ``c = h''(psi)``.
    """
    if state.phase != PREDICTED:
        raise ValueError("the diagnostic is defined at the predicted state")
    c = logistic_curvature(state.mean)
    R = state.cov
    bias = c * np.diag(R)
    M = 0.25 * np.outer(bias, bias) + 0.5 * np.outer(c, c) * R**2
    return SecondOrderReport(np.linalg.eigvalsh(0.5 * (M + M.T)), np.sort(noise.sigma2))


def fit_hyperparams(snapshots, assignments, grid, transition=None):
    """Grid search for ``(s_diag, s_nb)`` minimizing the one-step prediction error.

    Ties go to the smaller ``s_diag``, then the smaller ``s_nb``. Grid points
    that do not give a PSD process covariance are skipped.
    """
    if len(snapshots) < 3:
        raise ConfigurationError("hyperparameter selection needs at least 3 time steps")
    if len(snapshots) != len(assignments):
        raise DimensionError("one assignment per snapshot is required")
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ConfigurationError("empty hyperparameter grid")
    stats_seq = [block_counts(s, c) for s, c in zip(snapshots, assignments)]
    k = assignments[0].k
    best = None
    for s_diag, s_nb in grid:
        try:
            cfg = StateSpaceConfig.from_hyperparams(k, s_diag, s_nb, transition=transition)
        except (ConfigurationError, ValueError):
            continue
        key = (prediction_error(stats_seq, cfg), s_diag, s_nb)
        if best is None or key < best:
            best = key
    if best is None:
        raise ConfigurationError("no grid point yields a valid process covariance")
    return best[1], best[2]
