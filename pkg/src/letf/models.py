"""Lorenz-63 and Lorenz-96 dynamics, RK4 propagation, observation networks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensembles import Ensemble, ObservationModel, component_selector
from .errors import IntegrationError

L63_DEFAULTS = {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}
L96_DEFAULTS = {"p": 40, "f": 8.0}


@dataclass(frozen=True)
class ModelSpec:
    """Model choice with internal and observation time steps.

    ``dt_obs`` must be an integer multiple of ``dt_internal``; the defaults
    (0.01 internal, 0.12 for lorenz63 / 0.11 for lorenz96) give 12 and 11
    internal steps per assimilation cycle.
    """

    name: str
    params: dict = field(default_factory=dict)
    dt_internal: float = 0.01
    dt_obs: float | None = None

    def __post_init__(self):
        if self.name not in ("lorenz63", "lorenz96"):
            raise ValueError(f"unknown model {self.name!r}")
        defaults = dict(L63_DEFAULTS if self.name == "lorenz63" else L96_DEFAULTS)
        defaults.update(self.params)
        object.__setattr__(self, "params", defaults)
        if self.dt_obs is None:
            object.__setattr__(self, "dt_obs", 0.12 if self.name == "lorenz63" else 0.11)
        if self.dt_internal <= 0 or self.dt_obs <= 0:
            raise ValueError("time steps must be positive")
        ratio = self.dt_obs / self.dt_internal
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_obs must be a positive integer multiple of dt_internal")
        if self.name == "lorenz96":
            p = int(self.params["p"])
            if p < 4:
                raise ValueError("lorenz96 needs at least 4 grid points")

    @property
    def steps_per_cycle(self) -> int:
        return int(round(self.dt_obs / self.dt_internal))

    @property
    def dim(self) -> int:
        return 3 if self.name == "lorenz63" else int(self.params["p"])

    def rhs(self, z: np.ndarray) -> np.ndarray:
        if self.name == "lorenz63":
            return lorenz63_rhs(z, self.params["sigma"], self.params["rho"], self.params["beta"])
        return lorenz96_rhs(z, self.params["f"])

    def fixed_point(self) -> np.ndarray:
        """A steady state used to seed spin-up integrations."""
        if self.name == "lorenz63":
            rho, beta = self.params["rho"], self.params["beta"]
            c = np.sqrt(beta * (rho - 1.0))
            return np.array([c, c, rho - 1.0])
        return np.full(self.dim, self.params["f"])


def lorenz63_rhs(z: np.ndarray, sigma: float = 10.0, rho: float = 28.0,
                 beta: float = 8.0 / 3.0) -> np.ndarray:
    """Lorenz-63 vector field; accepts a 3-vector or a 3 x M matrix."""
    z = np.asarray(z, dtype=float)
    x, y, w = z[0], z[1], z[2]
    return np.stack([sigma * (y - x), x * (rho - w) - y, x * y - beta * w])


def lorenz96_rhs(z: np.ndarray, f: float = 8.0) -> np.ndarray:
    """Lorenz-96 vector field with periodic indexing; p-vector or p x M matrix."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] < 4:
        raise ValueError("lorenz96 needs at least 4 grid points")
    zp1 = np.roll(z, -1, axis=0)
    zm1 = np.roll(z, 1, axis=0)
    zm2 = np.roll(z, 2, axis=0)
    return (zp1 - zm2) * zm1 - z + f


def rk4_step(spec: ModelSpec, z: np.ndarray, dt: float) -> np.ndarray:
    k1 = spec.rhs(z)
    k2 = spec.rhs(z + 0.5 * dt * k1)
    k3 = spec.rhs(z + 0.5 * dt * k2)
    k4 = spec.rhs(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance_state(spec: ModelSpec, z: np.ndarray, n_steps: int | None = None) -> np.ndarray:
    """Integrate a state (or state matrix) over one observation interval.

    Blow-ups surface as non-finite entries for the caller to report, not as
    overflow warnings.
    """
    steps = spec.steps_per_cycle if n_steps is None else n_steps
    out = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            out = rk4_step(spec, out, spec.dt_internal)
    return out


def propagate(ens: Ensemble, spec: ModelSpec) -> Ensemble:
    """RK4 over one observation interval for every member; bumps time_index."""
    states = advance_state(spec, ens.states)
    if not np.all(np.isfinite(states)):
        bad = np.nonzero(~np.all(np.isfinite(states), axis=0))[0]
        raise IntegrationError(f"member {bad[0]} became non-finite during integration")
    return Ensemble(states, time_index=ens.time_index + 1)


def observation_network(spec: ModelSpec, kind: str, r_value: float,
                        parity: str = "odd") -> ObservationModel:
    """Linear component-selection observations with R = r_value * I.

    ``first_component`` observes state component 1; ``every_second`` observes
    alternating grid points of a lorenz96 ring (``parity`` chooses, in 1-based
    terms, the odd or even ones).
    """
    if r_value <= 0:
        raise ValueError("r_value must be positive")
    if kind == "first_component":
        indices = (0,)
    elif kind == "every_second":
        if spec.name != "lorenz96":
            raise ValueError("every_second requires the lorenz96 model")
        start = 0 if parity == "odd" else 1  # 1-based odd <-> 0-based even
        if parity not in ("odd", "even"):
            raise ValueError("parity must be 'odd' or 'even'")
        indices = tuple(range(start, spec.dim, 2))
    else:
        raise ValueError(f"unknown observation kind {kind!r}")
    n_y = len(indices)
    return ObservationModel(h=component_selector(indices),
                            r=r_value * np.eye(n_y),
                            observed_indices=indices)


def periodic_distance(i, j, p: int):
    """Shortest ring distance between grid indices on a periodic domain."""
    d = np.abs(np.asarray(i) - np.asarray(j))
    return np.minimum(d, p - d)
