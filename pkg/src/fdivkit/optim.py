"""Small numeric routines shared by the loss and uncertainty modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .experiment import simplex_grid


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_sum_zero(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a - a.mean()


def project_top(a, i: int) -> np.ndarray:
    """Euclidean projection onto ``{a : a_i >= a_j for all j}``.

    Pools ``a_i`` with the largest competitors until their common average
    dominates the rest.
    """
    a = np.array(a, dtype=float)
    others = np.delete(np.arange(a.size), i)
    order = others[np.argsort(-a[others], kind="stable")]
    total, count = a[i], 1
    pooled = []
    for j in order:
        if a[j] <= total / count:
            break
        total += a[j]
        count += 1
        pooled.append(j)
    level = total / count
    a[i] = level
    a[pooled] = level
    return a


def bisect_decreasing(phi, lo: float, hi: float, iters: int = 200) -> float:
    """Smallest ``x`` in ``[lo, hi]`` with ``phi(x) <= 0`` for nonincreasing phi.

    ``phi`` may return ``+inf``.  Expands ``lo`` downward until ``phi(lo) > 0``.
    """
    step = max(1.0, hi - lo)
    while phi(lo) <= 0:
        lo -= step
        step *= 2.0
        if step > 1e300:
            raise RuntimeError("bisection bracket diverged")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class SimplexMax:
    value: float
    point: np.ndarray
    gap: float
    converged: bool


def _fd_grad(fn, p, h=1e-7):
    """Tangent finite differences along ``e_i - e_last``; last coordinate 0."""
    k = p.size
    g = np.zeros(k)
    f0 = float(fn(p[None])[0])
    for i in range(k - 1):
        d = np.zeros(k)
        d[i], d[-1] = 1.0, -1.0
        hp = min(h, p[-1]) if p[-1] > 0 else 0.0
        hm = min(h, p[i]) if p[i] > 0 else 0.0
        if hp > 0 and hm > 0:
            fp = float(fn((p + hp * d)[None])[0])
            fm = float(fn((p - hm * d)[None])[0])
            g[i] = (fp - fm) / (hp + hm)
        elif hp > 0:
            g[i] = (float(fn((p + hp * d)[None])[0]) - f0) / hp
        elif hm > 0:
            g[i] = (f0 - float(fn((p - hm * d)[None])[0])) / hm
    return g


def maximize_concave_simplex(fn, k: int, grad=None, resolution: int = 20,
                             tol: float = 1e-7, max_iter: int = 2000) -> SimplexMax:
    """Maximize a concave ``fn`` over the simplex.

    ``fn`` maps an ``(n, k)`` array to ``n`` values.  The search seeds on a
    lattice, refines by projected supergradient ascent with backtracking, then
    polishes with pairwise mass transfers.  ``gap`` is the Frank-Wolfe gap
    ``max_j g_j - g.p`` at the returned point: a certified bound when ``grad``
    returns true supergradients, an estimate when finite differences are used.
    """
    grid = simplex_grid(k, resolution)
    vals = np.asarray(fn(grid), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    best = int(np.argmax(vals))
    p, fp = grid[best].copy(), float(vals[best])

    def supgrad(x):
        if grad is not None:
            g = np.asarray(grad(x), dtype=float)
            if np.all(np.isfinite(g)):
                return g
        return _fd_grad(fn, x)

    def f1(x):
        return float(fn(x[None])[0])

    eta = 1.0 / resolution
    it = 0
    for it in range(max_iter):
        g = supgrad(p)
        fw_gap = float(np.max(g) - g @ p)
        if fw_gap <= tol:
            break
        improved = False
        step = eta
        while step > 1e-14:
            q = project_simplex(p + step * (g - g.mean()))
            fq = f1(q)
            if fq > fp + 1e-16:
                p, fp, improved = q, fq, True
                eta = 2.0 * step
                break
            step *= 0.5
        if not improved:
            break
    # pairwise transfers catch kinks the supergradient step cannot cross
    h = 1.0 / resolution
    while h > 1e-13:
        moved = False
        for i in range(k):
            for j in range(k):
                if i == j or p[j] <= 0:
                    continue
                q = p.copy()
                s = min(h, q[j])
                q[i] += s
                q[j] -= s
                fq = f1(q)
                if fq > fp + 1e-16:
                    p, fp, moved = q, fq, True
        if not moved:
            h *= 0.5
    g = supgrad(p)
    gap = max(0.0, float(np.max(g) - g @ p))
    return SimplexMax(fp, p, gap, gap <= tol)
