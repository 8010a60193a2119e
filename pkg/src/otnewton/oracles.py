"""Independent ground-truth engines for validating the solver stack.

``exact_ot_small`` enumerates every basic solution of the transportation
polytope (each spanning tree of the complete bipartite support graph) and
keeps the cheapest feasible one, so it is exact by exhaustion.  Trees are
generated from sequence pairs via a bipartite Prufer-style decode: a pair
``(A, B)`` with ``A`` listing n-1 row labels and ``B`` listing n-1 column
labels decodes by repeatedly deleting the smallest current leaf and joining
it to the next unconsumed label of the opposite side.  The decode doubles as
a leaf-elimination order, so all basic systems are solved in one vectorized
sweep across trees.  Tree counts are verified against n^(2n-2) in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import opcount
from .errors import (
    ConditioningError,
    DimensionError,
    DomainError,
    NonconvergenceError,
    RefusalError,
)

EXACT_MAX_N = 6
# Basic variables this close to zero (from below) count as degenerate zeros.
FEAS_SLACK = 1e-12
_CHUNK = 1 << 20

# Decoded elimination schedules per n, built once per process.
_SCHEDULE_CACHE: dict = {}


@dataclass
class ExactSolution:
    """Minimum-cost vertex of the transportation polytope at tiny n."""

    P_star: np.ndarray
    cost: float
    basis: list


def _digits(codes, n, width):
    """Base-n digits of each code, least significant first, shape (len, width)."""
    out = np.empty((codes.shape[0], width), dtype=np.int32)
    rem = codes.copy()
    for k in range(width):
        out[:, k] = rem % n
        rem //= n
    return out


def _decode_schedules(n, A, B):
    """Decode sequence pairs into leaf-elimination schedules.

    Returns ``(leaf, nb)`` of shape (T, 2n-1): at each step the recorded
    vertex ``leaf`` has exactly one remaining incident edge, which joins it
    to ``nb``.  Vertices 0..n-1 are rows, n..2n-1 are columns.
    """
    T = A.shape[0]
    V = 2 * n
    tidx = np.arange(T)
    deg = np.ones((T, V), dtype=np.int16)
    np.add.at(deg, (tidx[:, None], A), 1)
    np.add.at(deg, (tidx[:, None], B + n), 1)
    alive = np.ones((T, V), dtype=bool)
    aptr = np.zeros(T, dtype=np.int64)
    bptr = np.zeros(T, dtype=np.int64)
    leaf = np.empty((T, V - 1), dtype=np.int32)
    nb = np.empty((T, V - 1), dtype=np.int32)
    hi = max(n - 2, 0)
    for step in range(V - 2):
        leafmask = alive & (deg == 1)
        if not leafmask.any(axis=1).all():
            raise AssertionError("decode invariant violated: a tree ran out of leaves")
        l = np.argmax(leafmask, axis=1)
        is_row = l < n
        nbr = np.where(is_row,
                       B[tidx, np.minimum(bptr, hi)] + n,
                       A[tidx, np.minimum(aptr, hi)])
        bptr += is_row
        aptr += ~is_row
        deg[tidx, nbr] -= 1
        deg[tidx, l] = 0
        alive[tidx, l] = False
        leaf[:, step] = l
        nb[:, step] = nbr
    leaf[:, V - 2] = np.argmax(alive[:, :n], axis=1)
    nb[:, V - 2] = np.argmax(alive[:, n:], axis=1) + n
    return leaf, nb


def _schedules_for(n, lo, hi):
    """Elimination schedules for sequence-pair indices [lo, hi)."""
    if n == 1:
        return (np.array([[0]], dtype=np.int32), np.array([[1]], dtype=np.int32))
    side = n ** (n - 1)
    codes = np.arange(lo, hi, dtype=np.int64)
    a_code, b_code = np.divmod(codes, side)
    A = _digits(a_code, n, n - 1)
    B = _digits(b_code, n, n - 1)
    return _decode_schedules(n, A, B)


def _tree_count(n):
    return n ** (2 * n - 2)


def _cached_schedules(n):
    if n not in _SCHEDULE_CACHE:
        _SCHEDULE_CACHE[n] = _schedules_for(n, 0, _tree_count(n))
    return _SCHEDULE_CACHE[n]


def _basis_key(eid_row):
    return tuple(int(e) for e in np.sort(eid_row))


def exact_ot_small(C, r, c):
    """Exact optimal transport by exhausting the basic feasible solutions.

    Guarded to n <= 6 (n = 6 already enumerates ~6e7 trees and takes
    minutes; the practical range is n <= 5).  Ties in cost are broken by the
    lexicographically smallest sorted support, making the result
    deterministic regardless of enumeration order.
    """
    C = np.asarray(C, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionError(f"cost matrix must be square, got {C.shape}")
    n = C.shape[0]
    if r.shape != (n,) or c.shape != (n,):
        raise DimensionError("marginal lengths must match the cost matrix")
    if n > EXACT_MAX_N:
        raise RefusalError(f"exact enumeration is guarded to n <= {EXACT_MAX_N}, got {n}")
    if np.any(r < 0.0) or np.any(c < 0.0):
        raise DomainError("marginals must be nonnegative")
    if abs(r.sum() - c.sum()) > 1e-12:
        raise DomainError(f"marginal sums differ: {r.sum():.17g} vs {c.sum():.17g}")

    Cflat = C.ravel()
    total = _tree_count(n)
    best_cost = np.inf
    best_key = None
    best_sched = None

    use_cache = n <= 5
    chunk_edges = range(0, total, _CHUNK)
    for lo in chunk_edges:
        hi = min(lo + _CHUNK, total)
        if use_cache and lo == 0 and hi == total:
            leaf, nb = _cached_schedules(n)
        else:
            leaf, nb = _schedules_for(n, lo, hi)
        T = leaf.shape[0]
        tidx = np.arange(T)
        resid = np.empty((T, 2 * n))
        resid[:, :n] = r
        resid[:, n:] = c
        rows = np.where(leaf < n, leaf, nb)
        cols = np.where(leaf < n, nb, leaf) - n
        eid = rows.astype(np.int64) * n + cols
        cost = np.zeros(T)
        minval = np.full(T, np.inf)
        for step in range(2 * n - 1):
            v = resid[tidx, leaf[:, step]]
            resid[tidx, nb[:, step]] -= v
            cost += v * Cflat[eid[:, step]]
            minval = np.minimum(minval, v)
        feasible = minval >= -FEAS_SLACK
        if not feasible.any():
            continue
        cost = np.where(feasible, cost, np.inf)
        cmin = cost.min()
        if cmin > best_cost:
            continue
        cand = np.flatnonzero(cost == cmin)
        keys = np.sort(eid[cand], axis=1)
        order = np.lexsort(keys.T[::-1])
        kbest = cand[order[0]]
        key = _basis_key(eid[kbest])
        if cmin < best_cost or (cmin == best_cost and key < best_key):
            best_cost = float(cmin)
            best_key = key
            best_sched = (leaf[kbest].copy(), nb[kbest].copy())

    if best_sched is None:
        raise DomainError("no feasible basic solution found (inconsistent marginals)")

    # Re-run the winner's elimination scalar-style to reconstruct the plan.
    leaf, nb = best_sched
    resid = np.concatenate([r, c])
    P = np.zeros((n, n))
    basis = []
    cost = 0.0
    for step in range(2 * n - 1):
        l, b = int(leaf[step]), int(nb[step])
        v = resid[l]
        resid[b] -= v
        i, j = (l, b - n) if l < n else (b, l - n)
        v = max(v, 0.0)
        P[i, j] += v
        basis.append((i, j))
        cost += v * C[i, j]
    return ExactSolution(P_star=P, cost=float(cost), basis=sorted(basis))


def dense_spd_solve(A, b):
    """Direct symmetric positive-definite solve via Cholesky, with refinement.

    Validates symmetry, factorizes (failure means not positive-definite), and
    applies one step of iterative refinement so the residual meets the
    1e-10 relative contract on well-posed systems.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise DimensionError(f"need square A and matching b, got {A.shape}, {b.shape}")
    scale = np.abs(A).max()
    if not np.allclose(A, A.T, atol=1e-10 * max(scale, 1.0), rtol=0.0):
        raise DomainError("matrix is not symmetric to 1e-10")
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ConditioningError(f"Cholesky factorization failed: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    resid = b - A @ x
    x = x + scipy.linalg.cho_solve(factor, resid, check_finite=False)
    resid = b - A @ x
    bscale = np.abs(b).max()
    if bscale > 0.0 and np.abs(resid).max() > 1e-10 * bscale:
        raise ConditioningError(
            f"refined residual {np.abs(resid).max():.3g} exceeds 1e-10 * ||b||_inf")
    return x


def sinkhorn_project(state, r, c, eps_d, sweep_budget=10 ** 6):
    """Log-domain Sinkhorn scaling until the full gradient norm is below eps_d.

    Serves both as the single-temperature baseline inside the annealing
    driver and, at extreme tolerances, as a fixed-point oracle for the
    Newton projector.  Returns ``(state, sweeps)``.
    """
    if np.min(r) <= 0.0 or np.min(c) <= 0.0:
        raise DomainError("sinkhorn_project requires strictly positive marginals")
    state.set_targets(r, c)
    steps = 0
    with opcount.category("sinkhorn"):
        while state.grad_norm_l1() > eps_d:
            if steps >= sweep_budget:
                raise NonconvergenceError(
                    f"Sinkhorn still at gradient norm {state.grad_norm_l1():.3g} "
                    f"> {eps_d:.3g} after {steps} sweeps",
                    diagnostics={"gamma": state.gamma, "eps_d": eps_d},
                )
            state.scale_rows_to_target()
            state.scale_cols_to_target()
            steps += 1
    return state, steps


def finite_diff_grad(state, h=1e-6):
    """Central-difference gradient of the dual objective, one coordinate at a time."""
    if not 1e-8 <= h <= 1e-4:
        raise DomainError(f"step h must lie in [1e-8, 1e-4], got {h}")
    from .dual import DualState

    n = state.n

    def value(u, v):
        probe = DualState(state.problem, state.gamma, u=u, v=v, r=state.r, c=state.c)
        return probe.dual_value()

    gu = np.empty(n)
    gv = np.empty(n)
    for i in range(n):
        up, um = state.u.copy(), state.u.copy()
        up[i] += h
        um[i] -= h
        gu[i] = (value(up, state.v) - value(um, state.v)) / (2.0 * h)
        vp, vm = state.v.copy(), state.v.copy()
        vp[i] += h
        vm[i] -= h
        gv[i] = (value(state.u, vp) - value(state.u, vm)) / (2.0 * h)
    return gu, gv
