"""Twin-experiment orchestration: truth generation, filter pipelines, scoring.

Every stochastic ingredient (truth spin-up, observation noise, initial
ensemble, rejuvenation, random rotations) draws from its own named seed, and
per-cycle generators are derived statelessly from (seed, cycle index), so
runs are bit-reproducible and pipelines sharing seeds see common random
numbers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ensembles import (Ensemble, ObservationModel, WeightVector,
                        weights_from_log_likelihoods)
from .errors import CycleError, IntegrationError
from .kalman import (BridgingConfig, LocalizationConfig, _particle_transform,
                     gaspari_cohn, hybrid_step, kalman_step, particle_step)
from .models import ModelSpec, advance_state, observation_network, periodic_distance, propagate

PIPELINES = ("free", "esrf", "etpf_exact", "etpf_sinkhorn", "etpf2_exact",
             "etpf2_sinkhorn", "netf_optimal", "netf_symmetric", "netf_random",
             "hybrid")

_ALIASES = {"etpf": "etpf_exact", "etpf2": "etpf2_exact"}


def canonical_pipeline(pipeline: str) -> str:
    return _ALIASES.get(pipeline, pipeline)


@dataclass(frozen=True)
class SeedSet:
    """Named 64-bit seeds for the independent random streams."""

    truth: int = 101
    obs_noise: int = 202
    init_ensemble: int = 303
    rejuvenation: int = 404
    random_rotations: int = 505

    def offset(self, k: int) -> "SeedSet":
        return SeedSet(self.truth + k, self.obs_noise + k, self.init_ensemble + k,
                       self.rejuvenation + k, self.random_rotations + k)


def cycle_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for one named stream at one point of the experiment."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _spawn_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=key).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one twin experiment."""

    model: ModelSpec
    m: int
    pipeline: str
    alpha: float | None = None
    inner: str | None = None
    lam: float | None = None
    beta: float = 0.2
    n_cycles: int = 1000
    burn_in: int | None = None
    seeds: SeedSet = field(default_factory=SeedSet)
    localization: LocalizationConfig | None = None
    obs_kind: str = "first_component"
    obs_parity: str = "odd"
    r_value: float = 8.0
    hybrid_order: str = "particle_first"
    unbiased_covariance: bool = False
    record_series: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pipeline", canonical_pipeline(self.pipeline))
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.m < 2:
            raise ValueError("ensemble size must be at least 2")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", int(round(0.1 * self.n_cycles)))
        if not 0 <= self.burn_in < self.n_cycles:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_cycles")
        if self.beta < 0:
            raise ValueError("rejuvenation beta must be nonnegative")
        if self.pipeline == "hybrid":
            if self.alpha is None:
                raise ValueError("hybrid pipeline requires alpha")
            inner = canonical_pipeline(self.inner or "etpf2_exact")
            object.__setattr__(self, "inner", inner)
            # constructing the bridging config validates alpha / inner / lam
            BridgingConfig(alpha=self.alpha, particle_filter_mode=inner,
                           lam=self.lam, order=self.hybrid_order)
        elif "sinkhorn" in self.pipeline and (self.lam is None or self.lam <= 0):
            raise ValueError(f"pipeline {self.pipeline} requires lam > 0")


@dataclass(frozen=True)
class ScoreReport:
    """Time-averaged scores of one experiment run."""

    rmse_time_avg: float
    crps_time_avg: float
    wall_time: float
    n_scored: int
    config: ExperimentConfig
    per_cycle_rmse: np.ndarray | None = None
    per_cycle_crps: np.ndarray | None = None
    analysis_means: np.ndarray | None = None

    def __post_init__(self):
        if np.isfinite(self.rmse_time_avg) and self.rmse_time_avg < 0:
            raise ValueError("rmse must be nonnegative")
        if np.isfinite(self.crps_time_avg) and self.crps_time_avg < 0:
            raise ValueError("crps must be nonnegative")


def generate_truth_and_obs(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Truth trajectory (dim x (K+1), column 0 at t_0) and observations (N_y x K).

    The truth starts from the model's steady state plus seeded unit Gaussian
    noise and is spun up for 1000 observation intervals before recording.
    """
    spec = cfg.model
    obs_model = observation_network(spec, cfg.obs_kind, cfg.r_value, cfg.obs_parity)
    truth_rng = cycle_rng(cfg.seeds.truth)
    obs_rng = cycle_rng(cfg.seeds.obs_noise)
    z = spec.fixed_point() + truth_rng.standard_normal(spec.dim)
    for _ in range(1000):
        z = advance_state(spec, z)
    k_total = cfg.n_cycles
    truth = np.empty((spec.dim, k_total + 1))
    truth[:, 0] = z
    for k in range(1, k_total + 1):
        z = advance_state(spec, z)
        if not np.all(np.isfinite(z)):
            raise IntegrationError(f"truth integration blew up at cycle {k}")
        truth[:, k] = z
    chol = np.linalg.cholesky(obs_model.r)
    noise = chol @ obs_rng.standard_normal((obs_model.dim, k_total))
    obs = obs_model.observe(truth[:, 1:]) + noise
    return truth, obs


def rejuvenate(ens: Ensemble, beta: float, rng: np.random.Generator,
               forecast: Ensemble | None = None) -> Ensemble:
    """Add scaled forecast-anomaly noise to restore spread.

    z_j <- z_j + sum_i (z_i^f - zbar^f) beta xi_ij / sqrt(M-1) with xi i.i.d.
    standard normal; ``forecast`` supplies the anomalies (defaults to ``ens``).
    beta = 0 is the identity.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0.0:
        return ens
    src = ens if forecast is None else forecast
    if src.size != ens.size:
        raise ValueError("forecast ensemble size mismatch")
    m = ens.size
    anom = src.states - src.states.mean(axis=1, keepdims=True)
    xi = rng.standard_normal((m, m))
    return Ensemble(ens.states + anom @ xi * (beta / np.sqrt(m - 1.0)),
                    time_index=ens.time_index)


def rmse(analysis_means: np.ndarray, truth: np.ndarray) -> float:
    """Mean over cycles of sqrt((1/N_z) ||zbar^a - z_truth||^2)."""
    analysis_means = np.atleast_2d(analysis_means)
    truth = np.atleast_2d(truth)
    if analysis_means.shape != truth.shape:
        raise ValueError("analysis means and truth must have the same shape")
    per_cycle = np.sqrt(np.mean((analysis_means - truth) ** 2, axis=0))
    return float(per_cycle.mean())


def crps(x: np.ndarray, y: float) -> float:
    """Empirical CRPS (1/M) sum |x_i - y| - (1/(2 M^2)) sum |x_i - x_j|."""
    x = np.asarray(x, dtype=float).ravel()
    m = x.size
    term1 = np.mean(np.abs(x - y))
    term2 = np.mean(np.abs(x[:, None] - x[None, :])) / 2.0
    return float(term1 - term2)


class _Analyzer:
    """Per-experiment analysis dispatcher with localization precomputation."""

    def __init__(self, cfg: ExperimentConfig, obs_model: ObservationModel):
        self.cfg = cfg
        self.obs = obs_model
        self.stage = "init"
        self.local = None
        if cfg.localization is not None:
            if obs_model.observed_indices is None:
                raise ValueError("localized mode requires index-selection observations")
            if np.max(np.abs(obs_model.r - np.diag(np.diag(obs_model.r)))) > 0:
                raise ValueError("localized mode requires a diagonal R")
            p = cfg.model.dim
            radius = cfg.localization.radius
            locs = np.asarray(obs_model.observed_indices)
            r_diag = np.diag(obs_model.r)
            self.local = []
            for k in range(p):
                dist = periodic_distance(k, locs, p)
                mask = dist < 2.0 * radius
                idx = np.nonzero(mask)[0]
                rho = gaspari_cohn(dist[idx], radius) if idx.size else np.empty(0)
                self.local.append((idx, rho, r_diag[idx]))

    # -- global pipelines ---------------------------------------------------

    def _global(self, forecast: Ensemble, y: np.ndarray, rot_seed: int) -> Ensemble:
        cfg = self.cfg
        pid = cfg.pipeline
        if pid == "free":
            return forecast
        if pid == "esrf":
            self.stage = "kalman"
            return kalman_step(forecast, y, self.obs)
        if pid == "hybrid":
            self.stage = "hybrid"
            bridging = BridgingConfig(alpha=cfg.alpha, particle_filter_mode=cfg.inner,
                                      lam=cfg.lam, order=cfg.hybrid_order)
            return hybrid_step(forecast, y, self.obs, bridging, rot_seed=rot_seed)
        self.stage = "particle"
        return particle_step(forecast, y, self.obs, pid, cfg.lam, rot_seed=rot_seed)

    # -- localized pipelines ------------------------------------------------

    def _local_weights(self, hz: np.ndarray, y: np.ndarray, k: int,
                       r_scale: float) -> WeightVector | None:
        idx, rho, r_diag = self.local[k]
        if idx.size == 0:
            return None
        resid = hz[idx] - y[idx, None]
        logw = -0.5 * np.sum((rho / (r_diag * r_scale))[:, None] * resid ** 2, axis=0)
        return weights_from_log_likelihoods(logw)

    def _localized_particle(self, states: np.ndarray, y: np.ndarray, mode: str,
                            lam: float | None, r_scale: float, rot_seed: int) -> np.ndarray:
        hz = states[list(self.obs.observed_indices), :]
        out = states.copy()
        for k in range(states.shape[0]):
            try:
                w = self._local_weights(hz, y, k, r_scale)
                if w is None:
                    continue
                row = Ensemble(states[k:k + 1, :])
                seed_k = _spawn_seed(rot_seed, k) if mode == "netf_random" else None
                d = _particle_transform(row, w, mode, lam, seed_k)
            except Exception as exc:
                raise RuntimeError(f"grid point {k}: {exc}") from exc
            out[k] = states[k] @ d.d
        return out

    def _localized_kalman(self, states: np.ndarray, y: np.ndarray,
                          r_scale: float) -> np.ndarray:
        hz = states[list(self.obs.observed_indices), :]
        hbar = hz.mean(axis=1)
        out = states.copy()
        for k in range(states.shape[0]):
            try:
                idx, rho, r_diag = self.local[k]
                if idx.size == 0:
                    continue
                yanom = hz[idx] - hbar[idx, None]
                r_inv = np.diag(rho / (r_diag * r_scale))
                d = _etkf_core(yanom, r_inv, y[idx] - hbar[idx], states.shape[1])
            except Exception as exc:
                raise RuntimeError(f"grid point {k}: {exc}") from exc
            out[k] = states[k] @ d
        return out

    def _localized(self, forecast: Ensemble, y: np.ndarray, rot_seed: int) -> Ensemble:
        cfg = self.cfg
        pid = cfg.pipeline
        states = forecast.states
        if pid == "free":
            return forecast
        if pid == "esrf":
            self.stage = "kalman"
            out = self._localized_kalman(states, y, 1.0)
        elif pid == "hybrid":
            if cfg.alpha == 0.0:
                self.stage = "kalman"
                out = self._localized_kalman(states, y, 1.0)
            elif cfg.alpha == 1.0:
                self.stage = "particle"
                out = self._localized_particle(states, y, cfg.inner, cfg.lam, 1.0, rot_seed)
            else:
                self.stage = "particle"
                out = self._localized_particle(states, y, cfg.inner, cfg.lam,
                                               1.0 / cfg.alpha, rot_seed)
                self.stage = "kalman"
                out = self._localized_kalman(out, y, 1.0 / (1.0 - cfg.alpha))
        else:
            self.stage = "particle"
            out = self._localized_particle(states, y, pid, cfg.lam, 1.0, rot_seed)
        return Ensemble(out, time_index=forecast.time_index)

    def __call__(self, forecast: Ensemble, y: np.ndarray) -> Ensemble:
        rot_seed = _spawn_seed(self.cfg.seeds.random_rotations, forecast.time_index)
        if self.local is not None:
            return self._localized(forecast, y, rot_seed)
        return self._global(forecast, y, rot_seed)


def _etkf_core(yanom: np.ndarray, r_inv: np.ndarray, innovation: np.ndarray,
               m: int) -> np.ndarray:
    """Shared ETKF transform assembly from observation-space anomalies."""
    c = yanom.T @ r_inv
    gram = c @ yanom
    gram = 0.5 * (gram + gram.T)
    vals, vecs = np.linalg.eigh(gram)
    vals = np.clip(vals, 0.0, None)
    t = (vecs * (1.0 + vals / (m - 1.0)) ** -0.5) @ vecs.T
    p_tilde = (vecs * (1.0 / (m - 1.0 + vals))) @ vecs.T
    wbar = p_tilde @ (c @ innovation)
    proj = np.eye(m) - np.full((m, m), 1.0 / m)
    return np.full((m, m), 1.0 / m) + proj @ (np.outer(wbar, np.ones(m)) + t)


def assimilation_cycle(forecast: Ensemble, y: np.ndarray,
                       cfg: ExperimentConfig) -> Ensemble:
    """One analysis step of the configured pipeline (no rejuvenation).

    Deterministic: random rotations are seeded from the configured stream and
    the forecast's time index.
    """
    obs_model = observation_network(cfg.model, cfg.obs_kind, cfg.r_value, cfg.obs_parity)
    analyzer = _Analyzer(cfg, obs_model)
    try:
        return analyzer(forecast, np.asarray(y, dtype=float).ravel())
    except Exception as exc:
        raise CycleError(f"cycle {forecast.time_index}, stage {analyzer.stage}: {exc}") from exc


def free_run_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same experiment with assimilation switched off (climatology baseline)."""
    return replace(cfg, pipeline="free", alpha=None, inner=None, lam=None)


def run_experiment(cfg: ExperimentConfig) -> ScoreReport:
    """Full forecast/analysis/rejuvenation loop with time-averaged scores.

    RMSE compares the pre-rejuvenation analysis mean against the truth over
    the full state; CRPS is evaluated for the observed components against the
    truth, averaged over components and scored cycles (those after burn-in).
    """
    start = time.perf_counter()
    spec = cfg.model
    obs_model = observation_network(spec, cfg.obs_kind, cfg.r_value, cfg.obs_parity)
    truth, obs_seq = generate_truth_and_obs(cfg)
    init_rng = cycle_rng(cfg.seeds.init_ensemble)
    states0 = truth[:, [0]] + init_rng.standard_normal((spec.dim, cfg.m))
    ens = Ensemble(states0, time_index=0)
    analyzer = _Analyzer(cfg, obs_model)
    k_total = cfg.n_cycles
    obs_idx = list(obs_model.observed_indices)
    rmse_series = np.empty(k_total)
    crps_series = np.empty(k_total)
    means = np.empty((spec.dim, k_total)) if cfg.record_series else None
    for k in range(1, k_total + 1):
        try:
            forecast = propagate(ens, spec)
        except IntegrationError as exc:
            raise CycleError(f"cycle {k}, stage propagate: {exc}") from exc
        try:
            analysis = analyzer(forecast, obs_seq[:, k - 1])
        except Exception as exc:
            raise CycleError(f"cycle {k}, stage {analyzer.stage}: {exc}") from exc
        mean = analysis.states.mean(axis=1)
        rmse_series[k - 1] = np.sqrt(np.mean((mean - truth[:, k]) ** 2))
        crps_series[k - 1] = np.mean(
            [crps(analysis.states[i], truth[i, k]) for i in obs_idx])
        if means is not None:
            means[:, k - 1] = mean
        if cfg.pipeline != "free" and cfg.beta > 0:
            ens = rejuvenate(analysis, cfg.beta,
                             cycle_rng(cfg.seeds.rejuvenation, k), forecast=forecast)
        else:
            ens = analysis
    scored = slice(cfg.burn_in, k_total)
    return ScoreReport(
        rmse_time_avg=float(rmse_series[scored].mean()),
        crps_time_avg=float(crps_series[scored].mean()),
        wall_time=time.perf_counter() - start,
        n_scored=k_total - cfg.burn_in,
        config=cfg,
        per_cycle_rmse=rmse_series if cfg.record_series else None,
        per_cycle_crps=crps_series if cfg.record_series else None,
        analysis_means=means,
    )
