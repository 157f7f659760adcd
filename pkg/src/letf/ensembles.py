"""Core ensemble data types, importance weighting, and transform application.

An ensemble is stored as an N_z x M matrix whose columns are the members.
Analysis steps act by right-multiplication with an M x M transform matrix D
whose columns sum to one; the classes checked by :class:`TransformMatrix`
distinguish transforms that additionally match the weighted mean (first
order) and the weighted covariance (second order).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateWeightsError

# Class-membership tolerances.  Chosen so that the iterative transport and
# Riccati solvers can certify membership: their stopping tolerances dominate.
D1_TOL = 1e-8
D1_PLUS_TOL = -1e-12
D2_TOL = 1e-6


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Ensemble:
    """N_z x M matrix of state columns at assimilation step ``time_index``."""

    states: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if states.ndim != 2:
            raise ValueError(f"states must be a 2-d array, got shape {states.shape}")
        if states.shape[1] < 2:
            raise ValueError(f"need at least 2 members, got M={states.shape[1]}")
        if states.shape[0] < 1:
            raise ValueError("state dimension must be at least 1")
        if not np.all(np.isfinite(states)):
            raise ValueError("ensemble contains non-finite entries")
        if self.time_index < 0:
            raise ValueError("time_index must be non-negative")
        object.__setattr__(self, "states", _readonly(states))

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def size(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class WeightVector:
    """M nonnegative importance weights summing to one."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if w.size < 2:
            raise ValueError("need at least 2 weights")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite entries")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "w", _readonly(w))

    @property
    def size(self) -> int:
        return self.w.size

    def diag(self) -> np.ndarray:
        return np.diag(self.w)


def uniform_weights(m: int) -> WeightVector:
    return WeightVector(np.full(m, 1.0 / m))


@dataclass(frozen=True)
class TransformMatrix:
    """M x M transform with class flags computed against reference weights.

    Flags are diagnostic, not enforced: ``in_d1`` means column sums are one
    and row sums are M*w; ``in_d1_plus`` additionally requires nonnegative
    entries; ``in_d2`` additionally requires the anomaly product
    (D - w 1^T)(D - w 1^T)^T to match M(W - w w^T).
    """

    d: np.ndarray
    weights: WeightVector
    in_d1: bool = field(init=False)
    in_d1_plus: bool = field(init=False)
    in_d2: bool = field(init=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        m = self.weights.size
        if d.shape != (m, m):
            raise ValueError(f"transform must be {m}x{m}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("transform contains non-finite entries")
        object.__setattr__(self, "d", _readonly(d))
        w = self.weights.w
        col_err = np.max(np.abs(d.sum(axis=0) - 1.0))
        row_err = np.max(np.abs(d.sum(axis=1) / m - w))
        in_d1 = bool(col_err <= D1_TOL and row_err <= D1_TOL)
        in_d1_plus = bool(in_d1 and d.min() >= D1_PLUS_TOL)
        in_d2 = False
        if in_d1:
            b = d - np.outer(w, np.ones(m))
            target = m * (np.diag(w) - np.outer(w, w))
            in_d2 = bool(np.max(np.abs(b @ b.T - target)) <= D2_TOL)
        object.__setattr__(self, "in_d1", in_d1)
        object.__setattr__(self, "in_d1_plus", in_d1_plus)
        object.__setattr__(self, "in_d2", in_d2)

    @property
    def size(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class ObservationModel:
    """Observation operator with Gaussian error covariance.

    ``h`` maps a single state vector to an observation vector.  When
    ``observed_indices`` is given the operator is the corresponding component
    selection and ensemble observation uses the fast indexed path.
    """

    h: Callable[[np.ndarray], np.ndarray]
    r: np.ndarray
    observed_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if r.shape[0] != r.shape[1]:
            raise ValueError(f"R must be square, got {r.shape}")
        if np.max(np.abs(r - r.T)) > 1e-12:
            raise ValueError("R must be symmetric within 1e-12")
        chol = np.linalg.cholesky(r)  # raises LinAlgError if not SPD
        object.__setattr__(self, "r", _readonly(r))
        object.__setattr__(self, "_chol", chol)
        if self.observed_indices is not None:
            idx = tuple(int(i) for i in self.observed_indices)
            if len(idx) != r.shape[0]:
                raise ValueError("observed_indices length must match R")
            object.__setattr__(self, "observed_indices", idx)

    @property
    def dim(self) -> int:
        return self.r.shape[0]

    def observe(self, states: np.ndarray) -> np.ndarray:
        """Apply the operator column-wise to an N_z x M state matrix."""
        if self.observed_indices is not None:
            return states[list(self.observed_indices), :]
        return np.column_stack([np.atleast_1d(self.h(states[:, j])) for j in range(states.shape[1])])

    def whiten(self, residuals: np.ndarray) -> np.ndarray:
        """Solve L x = residuals for the Cholesky factor L of R."""
        from scipy.linalg import solve_triangular

        return solve_triangular(self._chol, residuals, lower=True)


def component_selector(indices: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
    idx = [int(i) for i in indices]

    def h(z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float)[idx]

    return h


def log_likelihoods(ens: Ensemble, y: np.ndarray, obs: ObservationModel,
                    r_scale: float = 1.0) -> np.ndarray:
    """Per-member Gaussian log-likelihoods, up to a common constant.

    ``r_scale`` inflates the observation covariance to ``r_scale * R``, which
    is how the hybrid filter raises the likelihood to a fractional power.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size != obs.dim:
        raise ValueError(f"observation length {y.size} does not match N_y={obs.dim}")
    if r_scale <= 0:
        raise ValueError("r_scale must be positive")
    resid = obs.observe(ens.states) - y[:, None]
    white = obs.whiten(resid)
    return -0.5 * np.einsum("ij,ij->j", white, white) / r_scale


def weights_from_log_likelihoods(logw: np.ndarray) -> WeightVector:
    """Normalize log-likelihoods to importance weights in log space.

    Subtracting the maximum before exponentiation keeps a single distant
    member from underflowing the whole vector.
    """
    logw = np.asarray(logw, dtype=float).ravel()
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ValueError("log-likelihoods must be finite or -inf")
    top = logw.max()
    if top == -np.inf:
        raise DegenerateWeightsError("degenerate weights: all log-likelihoods are -inf")
    w = np.exp(logw - top)
    return WeightVector(w / w.sum())


def importance_weights(ens: Ensemble, y: np.ndarray, obs: ObservationModel,
                       r_scale: float = 1.0) -> WeightVector:
    """Normalized Gaussian importance weights of the forecast members."""
    return weights_from_log_likelihoods(log_likelihoods(ens, y, obs, r_scale))


def weighted_mean(ens: Ensemble, w: WeightVector) -> np.ndarray:
    if w.size != ens.size:
        raise ValueError("weight length does not match ensemble size")
    return ens.states @ w.w


def weighted_covariance(ens: Ensemble, w: WeightVector, unbiased: bool = False) -> np.ndarray:
    """Importance-sampling covariance sum_i w_i (z_i - zbar)(z_i - zbar)^T.

    The biased convention (no M/(M-1) factor) is the default used throughout;
    ``unbiased`` applies the M/(M-1) correction instead.
    """
    if w.size != ens.size:
        raise ValueError("weight length does not match ensemble size")
    zbar = weighted_mean(ens, w)
    anom = ens.states - zbar[:, None]
    cov = (anom * w.w[None, :]) @ anom.T
    if unbiased:
        m = ens.size
        cov = cov * (m / (m - 1.0))
    return cov


def ensemble_moments(ens: Ensemble, unbiased: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Empirical mean and (by default biased, denominator M) covariance."""
    mean = ens.states.mean(axis=1)
    anom = ens.states - mean[:, None]
    denom = ens.size - 1.0 if unbiased else float(ens.size)
    return mean, (anom @ anom.T) / denom


def apply_transform(ens: Ensemble, d: TransformMatrix) -> Ensemble:
    """Analysis ensemble Z D; time index is unchanged."""
    if d.size != ens.size:
        raise ValueError("transform size does not match ensemble size")
    return Ensemble(ens.states @ d.d, time_index=ens.time_index)


def effective_sample_size(w: WeightVector) -> float:
    """1 / sum w_i^2, between 1 (degenerate) and M (uniform)."""
    return float(1.0 / np.sum(w.w ** 2))
