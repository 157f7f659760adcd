"""Exact and entropically regularized solvers for the transport resampling step.

The resampling transform D minimizes sum_ij d_ij ||z_i - z_j||^2 over the
transport polytope {D >= 0, D^T 1 = 1, (1/M) D 1 = w}.  ``exact_ot`` runs a
transportation network simplex to an optimal vertex (dual-certified, with
marginals recovered to machine precision on the final basis tree);
``sinkhorn`` solves the entropically regularized problem by alternating
diagonal scaling and then restores the row marginals with a rank-one
correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import Ensemble, TransformMatrix, WeightVector, _readonly
from .errors import SinkhornError, TransportError


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise squared Euclidean distances between ensemble members.

    ``scale`` is the normalization constant (the largest entry, or 1 for a
    fully degenerate ensemble) used to make the Sinkhorn regularization
    parameter dimensionless.
    """

    c: np.ndarray
    scale: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"cost matrix must be square, got {c.shape}")
        if np.any(np.diag(c) != 0.0):
            raise ValueError("cost matrix diagonal must be zero")
        if np.max(np.abs(c - c.T)) > 0.0:
            raise ValueError("cost matrix must be symmetric")
        if c.min() < 0.0:
            raise ValueError("cost matrix entries must be nonnegative")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "c", _readonly(c))


def cost_matrix(ens: Ensemble) -> CostMatrix:
    """Squared Euclidean distances between columns; exact zero diagonal.

    Accepts 1 x M ensembles for the per-grid-point scalar costs used by
    localized filters.
    """
    diff = ens.states[:, :, None] - ens.states[:, None, :]
    c = np.einsum("kij,kij->ij", diff, diff)
    scale = float(c.max())
    return CostMatrix(c=c, scale=scale if scale > 0.0 else 1.0)


# -- transportation network simplex ----------------------------------------
#
# Row nodes are 0..m-1 and column nodes m..2m-1; a basis is a spanning tree
# of m + n - 1 cells.  Entering cells are chosen by the most negative reduced
# cost (lowest flat index on ties); after a pivot budget the rule switches to
# Bland's lowest-index rule, which excludes cycling under degeneracy.


def _northwest_basis(row_sums: np.ndarray, col_sums: np.ndarray) -> list[int]:
    m, n = row_sums.size, col_sums.size
    r = row_sums.copy()
    c = col_sums.copy()
    cells = []
    i = j = 0
    while len(cells) < m + n - 1:
        cells.append(i * n + j)
        take = min(r[i], c[j])
        r[i] -= take
        c[j] -= take
        if i == m - 1 and j == n - 1:
            break
        # the boundary guards absorb rounding drift in the residuals
        if (r[i] <= c[j] or j == n - 1) and i < m - 1:
            i += 1
        else:
            j += 1
    return cells


def _tree_arrays(cells: list[int], m: int, n: int):
    """Parent pointers, parent edge cells, depths, and a preorder of nodes."""
    total = m + n
    adj: list[list[tuple[int, int]]] = [[] for _ in range(total)]
    for cell in cells:
        i, j = divmod(cell, n)
        adj[i].append((m + j, cell))
        adj[m + j].append((i, cell))
    parent = [-1] * total
    pedge = [-1] * total
    depth = [0] * total
    order = [0]
    seen = [False] * total
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v, cell in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                pedge[v] = cell
                depth[v] = depth[u] + 1
                order.append(v)
                stack.append(v)
    return parent, pedge, depth, order


def _tree_duals(c: np.ndarray, parent, pedge, order, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Potentials with u_row + v_col = c on basis cells, rooted at u_0 = 0."""
    u = np.zeros(m)
    v = np.zeros(n)
    for node in order[1:]:
        cell = pedge[node]
        i, j = divmod(cell, n)
        if node < m:  # row node, parent is the column
            u[i] = c[i, j] - v[j]
        else:
            v[j] = c[i, j] - u[i]
    return u, v


def _cycle_path(entering: int, parent, pedge, depth, m: int, n: int) -> list[int]:
    """Basis cells on the tree path from the entering cell's row to its column."""
    i, j = divmod(entering, n)
    a, b = i, m + j
    left, right = [], []
    while depth[a] > depth[b]:
        left.append(pedge[a])
        a = parent[a]
    while depth[b] > depth[a]:
        right.append(pedge[b])
        b = parent[b]
    while a != b:
        left.append(pedge[a])
        a = parent[a]
        right.append(pedge[b])
        b = parent[b]
    return left + right[::-1]


def _peel_flows(cells: list[int], row_sums: np.ndarray, col_sums: np.ndarray,
                n: int) -> dict[int, float] | None:
    """Exact basis flows from the marginals by leaf peeling (None on a cycle)."""
    m = row_sums.size
    r = row_sums.astype(float).copy()
    c = col_sums.astype(float).copy()
    deg_r = np.zeros(m, dtype=int)
    deg_c = np.zeros(n, dtype=int)
    for cell in cells:
        deg_r[cell // n] += 1
        deg_c[cell % n] += 1
    flows: dict[int, float] = {}
    pending = list(cells)
    while pending:
        rest = []
        progressed = False
        for cell in pending:
            i, j = divmod(cell, n)
            if deg_r[i] == 1:
                flows[cell] = r[i]
                c[j] -= r[i]
                r[i] = 0.0
                deg_r[i] -= 1
                deg_c[j] -= 1
                progressed = True
            elif deg_c[j] == 1:
                flows[cell] = c[j]
                r[i] -= c[j]
                c[j] = 0.0
                deg_r[i] -= 1
                deg_c[j] -= 1
                progressed = True
            else:
                rest.append(cell)
        pending = rest
        if not progressed and pending:
            return None
    return flows


def _network_simplex(c: np.ndarray, row_sums: np.ndarray,
                     col_sums: np.ndarray) -> np.ndarray:
    """Optimal vertex of the transportation polytope for cost matrix ``c``."""
    m, n = c.shape
    scale = max(float(np.abs(c).max()), 1.0)
    tol = 1e-11 * scale
    basis = _northwest_basis(row_sums, col_sums)
    in_basis = np.zeros(m * n, dtype=bool)
    in_basis[basis] = True
    flows = _peel_flows(basis, row_sums, col_sums, n)
    max_pivots = 400 * m * n
    dantzig_budget = 20 * m * n
    flat_c = c.ravel()
    for pivot in range(max_pivots + 1):
        parent, pedge, depth, order = _tree_arrays(basis, m, n)
        u, v = _tree_duals(c, parent, pedge, order, m, n)
        reduced = flat_c - (u[:, None] + v[None, :]).ravel()
        reduced[in_basis] = 0.0
        if pivot < dantzig_budget:
            entering = int(np.argmin(reduced))
            if reduced[entering] >= -tol:
                break
        else:  # Bland's rule: first improving index, cycling-free
            candidates = np.nonzero(reduced < -tol)[0]
            if candidates.size == 0:
                break
            entering = int(candidates[0])
        path = _cycle_path(entering, parent, pedge, depth, m, n)
        decreasing = path[0::2]
        theta, leaving = min((flows[cell], cell) for cell in decreasing)
        theta = max(theta, 0.0)
        flows[entering] = theta
        for cell in path[0::2]:
            flows[cell] -= theta
        for cell in path[1::2]:
            flows[cell] += theta
        del flows[leaving]
        in_basis[leaving] = False
        in_basis[entering] = True
        basis = [cell for cell in basis if cell != leaving] + [entering]
    else:
        raise TransportError(
            f"network simplex exceeded {max_pivots} pivots",
            residuals={"pivots": max_pivots})
    # recover the vertex from the final tree with exact marginals
    final = _peel_flows(basis, row_sums, col_sums, n)
    if final is None:
        raise TransportError("final basis is not a tree", residuals=None)
    x = np.zeros((m, n))
    for cell, val in final.items():
        x[cell // n, cell % n] = val
    return x


def exact_ot(ens: Ensemble, w: WeightVector) -> TransformMatrix:
    """Minimum-cost transform over {D >= 0, D^T 1 = 1, D 1 = M w}.

    Deterministic transportation network simplex; the optimal basis is
    certified by nonnegative reduced costs and the returned flows satisfy the
    marginals to machine precision.
    """
    m = ens.size
    if w.size != m:
        raise ValueError("weight length does not match ensemble size")
    c = cost_matrix(ens).c
    x = _network_simplex(c, m * w.w, np.ones(m))
    return TransformMatrix(d=x, weights=w)


def transport_cost(d: TransformMatrix, ens: Ensemble) -> float:
    """Raw objective sum_ij d_ij ||z_i - z_j||^2 of a transform."""
    return float(np.sum(d.d * cost_matrix(ens).c))


@dataclass(frozen=True)
class SinkhornState:
    """Scaling vectors, kernel, and iteration count of a Sinkhorn solve."""

    u: np.ndarray
    v: np.ndarray
    k: np.ndarray
    iteration: int
    lam: float

    def __post_init__(self):
        for name in ("u", "v", "k"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
                raise ValueError(f"{name} must be strictly positive and finite")
            object.__setattr__(self, name, _readonly(a))

    def plan(self) -> np.ndarray:
        return self.u[:, None] * self.k * self.v[None, :]


def _sinkhorn_kernel(ens: Ensemble, lam: float) -> np.ndarray:
    cm = cost_matrix(ens)
    k = np.exp(-lam * cm.c / cm.scale)
    if np.any(k.max(axis=1) == 0.0):
        raise SinkhornError("kernel underflow: lambda too large for the point configuration")
    return k


def _sinkhorn_iterate(k: np.ndarray, w: np.ndarray, epsilon: float, max_iter: int,
                      trace: list | None = None):
    """Run the alternating scaling until the row marginals reach ``w``.

    Returns (u, v, wl, iterations).  When ``trace`` is a list, appends
    (marginal_error, column_sum_error) after every full (u, v) update.
    """
    m = w.size
    v = np.ones(m)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        kv = k @ v
        for it in range(1, max_iter + 1):
            u = m * w / kv
            ku = k.T @ u
            v = 1.0 / ku
            kv = k @ v
            wl = u * kv / m
            err = float(np.linalg.norm(wl - w))
            if not np.isfinite(err):
                raise SinkhornError(
                    "sinkhorn scalings lost finiteness (lambda too large for "
                    "the point configuration)")
            if trace is not None:
                colsum_err = float(np.max(np.abs(v * ku - 1.0)))
                trace.append((err, colsum_err))
            if err <= epsilon:
                return u, v, wl, it
    raise SinkhornError(
        f"sinkhorn did not converge in {max_iter} iterations "
        f"(marginal error {err:.3e})",
        marginal_error=err,
    )


def sinkhorn(ens: Ensemble, w: WeightVector, lam: float, epsilon: float = 1e-8,
             max_iter: int = 10_000) -> TransformMatrix:
    """Entropically regularized transport transform.

    The kernel uses costs normalized by their largest entry, so ``lam`` is
    dimensionless.  After convergence of the row marginals to within
    ``epsilon``, the rank-one correction D - (w_l - w) 1^T restores the row
    sums exactly while preserving the unit column sums.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if w.size != ens.size:
        raise ValueError("weight length does not match ensemble size")
    k = _sinkhorn_kernel(ens, lam)
    u, v, wl, _ = _sinkhorn_iterate(k, w.w, epsilon, max_iter)
    d = u[:, None] * k * v[None, :]
    d = d - (wl - w.w)[:, None]
    return TransformMatrix(d=d, weights=w)


def sinkhorn_state(ens: Ensemble, w: WeightVector, lam: float, epsilon: float = 1e-8,
                   max_iter: int = 10_000) -> SinkhornState:
    """Converged scaling state of the Sinkhorn iteration (before correction)."""
    k = _sinkhorn_kernel(ens, lam)
    u, v, _, it = _sinkhorn_iterate(k, w.w, epsilon, max_iter)
    return SinkhornState(u=u, v=v, k=k, iteration=it, lam=lam)


def sinkhorn_marginal_trace(ens: Ensemble, w: WeightVector, lam: float,
                            epsilon: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Per-iteration (marginal error, column-sum error) pairs, for diagnostics."""
    k = _sinkhorn_kernel(ens, lam)
    trace: list = []
    _sinkhorn_iterate(k, w.w, epsilon, max_iter, trace=trace)
    return np.asarray(trace)
