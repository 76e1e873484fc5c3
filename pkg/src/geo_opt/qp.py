"""Dense primal active-set solver for small box-constrained convex QPs.

Solves::

    minimize    0.5 w'Gw + c'w
    subject to  E w = e,   lo <= w <= hi

with ``G`` positive semidefinite.  Equalities stay in the working set for
the whole run and are eliminated through a null-space basis; only the bound
constraints enter and leave.  Singular reduced Hessians are handled by
following a zero-curvature descent direction to the next blocking bound,
which always exists because every variable is boxed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure


@dataclass
class QPResult:
    w: np.ndarray
    objective: float
    feasible: bool
    iterations: int
    active_lower: np.ndarray
    active_upper: np.ndarray


def _null_space(mat, n, tol):
    if mat.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(mat)
    rank = int((s > tol * max(1.0, s[0] if s.size else 0.0)).sum())
    return vt[rank:].T


def box_feasible_point(lo, hi, total=1.0):
    """Some ``w`` with ``sum(w) = total`` inside the box, or ``None``."""
    if lo.sum() > total + 1e-12 or hi.sum() < total - 1e-12:
        return None
    w = lo.copy()
    room = hi - lo
    need = total - w.sum()
    if need > 0:
        w += room * (need / room.sum())
    return np.clip(w, lo, hi)


def _extreme_return(r, lo, hi, maximize):
    """Greedy continuous knapsack: extreme ``r'w`` with ``sum(w)=1`` in the box."""
    order = np.argsort(-r if maximize else r, kind="stable")
    w = lo.copy()
    left = 1.0 - w.sum()
    for i in order:
        take = min(hi[i] - lo[i], left)
        w[i] += take
        left -= take
        if left <= 0:
            break
    return w


def return_target_feasible_point(r, rho, lo, hi, tol=1e-12):
    """A point with ``sum(w)=1``, ``r'w=rho`` inside the box, or ``None``."""
    if lo.sum() > 1.0 + tol or hi.sum() < 1.0 - tol:
        return None
    w_lo = _extreme_return(r, lo, hi, maximize=False)
    w_hi = _extreme_return(r, lo, hi, maximize=True)
    r_lo, r_hi = float(r @ w_lo), float(r @ w_hi)
    span = max(abs(r_lo), abs(r_hi), 1.0) * 1e-10
    if rho < r_lo - span or rho > r_hi + span:
        return None
    if r_hi - r_lo <= span:
        return w_lo
    t = min(max((rho - r_lo) / (r_hi - r_lo), 0.0), 1.0)
    return (1 - t) * w_lo + t * w_hi


def solve_box_qp(G, c, E, e, lo, hi, w0, max_iter=None, tol=1e-11):
    """Primal active-set iterations from the feasible start ``w0``."""
    n = len(c)
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    E = np.atleast_2d(np.asarray(E, dtype=float)).reshape(-1, n)
    scale = max(np.abs(G).max(), np.abs(c).max(), 1e-300)
    Gs, cs = G / scale, c / scale
    max_iter = max_iter or 100 * max(n, 1)
    w = np.clip(np.asarray(w0, dtype=float).copy(), lo, hi)
    # empty initial working set: bounds enter through the ratio test
    at_lo = np.zeros(n, dtype=bool)
    at_hi = np.zeros(n, dtype=bool)
    for it in range(1, max_iter + 1):
        free = ~(at_lo | at_hi)
        g = Gs @ w + cs
        fidx = np.flatnonzero(free)
        Z = _null_space(E[:, fidx], fidx.size, 1e-10)
        p = np.zeros(n)
        unbounded = False
        if Z.shape[1]:
            H = Z.T @ Gs[np.ix_(fidx, fidx)] @ Z
            h = Z.T @ g[fidx]
            vals, vecs = np.linalg.eigh(H)
            big = vals > 1e-10 * max(vals.max(initial=0.0), 1.0)
            hv = vecs.T @ h
            flat = ~big & (np.abs(hv) > tol)
            if flat.any():
                d = -(vecs[:, flat] @ hv[flat])
                unbounded = True
            else:
                d = -(vecs[:, big] @ (hv[big] / vals[big]))
            p[fidx] = Z @ d
        if not unbounded and np.linalg.norm(p) <= tol * max(1.0, np.linalg.norm(w)):
            # multipliers: g = E'mu + nu on the active bounds
            if E.shape[0] and fidx.size:
                mu = np.linalg.lstsq(E[:, fidx].T, g[fidx], rcond=None)[0]
            elif E.shape[0]:
                mu = np.linalg.lstsq(E.T, g, rcond=None)[0]
            else:
                mu = np.zeros(0)
            nu = g - E.T @ mu
            viol = np.where(at_lo, -nu, 0.0) + np.where(at_hi, nu, 0.0)
            k = int(np.argmax(viol))
            if viol[k] <= 1e-9:
                obj = 0.5 * w @ G @ w + c @ w
                return QPResult(w, float(obj), True, it, at_lo.copy(), at_hi.copy())
            at_lo[k] = at_hi[k] = False
            continue
        alpha = np.inf if unbounded else 1.0
        block, block_hi = -1, False
        pf = p[fidx]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(pf < -1e-15, (lo[fidx] - w[fidx]) / pf,
                              np.where(pf > 1e-15, (hi[fidx] - w[fidx]) / pf, np.inf))
        if ratios.size:
            j = int(np.argmin(ratios))
            if ratios[j] < alpha:
                alpha, block, block_hi = ratios[j], int(fidx[j]), bool(pf[j] > 0)
        if not np.isfinite(alpha):
            raise NumericalFailure("unbounded direction in a boxed QP", residuals={"step": p})
        w = w + max(alpha, 0.0) * p
        if block >= 0:
            w[block] = hi[block] if block_hi else lo[block]
            if block_hi:
                at_hi[block] = True
            else:
                at_lo[block] = True
        np.clip(w, lo, hi, out=w)
    resid = {"equality": (E @ w - e).tolist() if E.shape[0] else [], "iterations": max_iter}
    raise NumericalFailure(f"active-set solver did not converge in {max_iter} iterations", resid)
