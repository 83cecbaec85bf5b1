"""Multi-distribution f-divergences on finite alphabets.

A generator ``f`` acts on ``R_+^{k-1}``; the divergence of ``P_1..P_{k-1}``
from ``P_k`` is ``sum_x p_k(x) f(p_1(x)/p_k(x), ...)`` with the closed
perspective supplying the value wherever ``p_k(x) = 0``.

Also here: Markov-kernel pushforwards (for data-processing checks), the
equal-sum transport matrix construction, and the finite instances on which two
quantizers realize prescribed column-sum functionals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .experiment import (
    DiscreteExperiment,
    Quantizer,
    make_experiment,
    posterior_from_joint,
)

BUILTIN_GENERATORS = ("kl", "tv", "hellinger-sq", "pearson")


def _rows(t, d: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        t = t.reshape(1)
    if t.shape[-1] != d:
        raise ValueError(f"generator has arity {d}, got argument of length {t.shape[-1]}")
    return t


def _separable(h, d):
    return lambda t: h(_rows(t, d)).sum(axis=-1)


@dataclass(frozen=True)
class Generator:
    """Convex ``f`` on the nonnegative orthant of dimension ``arity`` with f(1)=0.

    ``fn`` and ``recession`` broadcast over leading axes.  ``recession(d)`` is
    the closed-perspective value at ``u = 0``.  ``conjugate`` (f*) and
    ``grad`` (a subgradient) are optional closed forms used by the loss
    constructions.
    """

    name: str
    arity: int
    fn: Callable[[np.ndarray], np.ndarray]
    recession: Callable[[np.ndarray], np.ndarray] | None = None
    conjugate: Callable[[np.ndarray], np.ndarray] | None = None
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    numeric_recession: bool = False
    params: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.arity + 1

    @property
    def approximate(self) -> bool:
        return self.recession is None and self.numeric_recession

    def __call__(self, t):
        return self.fn(t)

    def recession_value(self, d) -> np.ndarray:
        d = _rows(d, self.arity)
        if self.recession is not None:
            return np.asarray(self.recession(d), dtype=float)
        zero = np.all(d == 0, axis=-1)
        if np.all(zero):
            return np.zeros(d.shape[:-1])
        if not self.numeric_recession:
            raise ValueError(
                f"generator {self.name!r} has no recession function; an outcome "
                "with zero base mass needs one (pass recession= or numeric_recession=True)")
        return np.where(zero, 0.0, numeric_recession(self.fn, d))

    def to_dict(self) -> dict:
        return {"name": self.name, "k": self.k, **self.params}


def numeric_recession(fn, d) -> np.ndarray:
    """``lim_{s->0} s f(1 - d + d/s)`` by Richardson extrapolation in ``s``.

    Uses ``s = 2^-10 ... 2^-40``; divergent sequences return ``+inf``.
    """
    d = np.asarray(d, dtype=float)
    ones = np.ones_like(d)
    svals = 2.0 ** -np.arange(10, 41, 2)
    seq = np.stack([s * np.asarray(fn(ones - d + d / s), dtype=float) for s in svals])
    with np.errstate(invalid="ignore", over="ignore"):
        # first-order Richardson for a step ratio of 4
        rich = (4.0 * seq[1:] - seq[:-1]) / 3.0
    last, prev = rich[-1], rich[-2]
    growing = np.abs(seq[-1]) > 1e6 * (1.0 + np.abs(seq[0]))
    out = np.where(growing | ~np.isfinite(last), np.inf, last)
    out = np.where(np.isfinite(prev) & (np.abs(last - prev) > 1e-3 * (1 + np.abs(last))),
                   np.inf, out)
    return out


# separable building blocks h : R_+ -> R with h(1) = 0

def _kl_h(t):
    return xlogy(t, t)


def _kl_star(b):
    return np.exp(b - 1.0)


def _kl_grad(t):
    with np.errstate(divide="ignore"):
        return np.log(t) + 1.0


def _tv_h(t):
    return 0.5 * np.abs(t - 1.0)


def _tv_star(b):
    return np.where(b <= 0.5, np.maximum(b, -0.5), np.inf)


def _tv_grad(t):
    return 0.5 * np.sign(t - 1.0)


def _hel_h(t):
    return 0.5 * (np.sqrt(t) - 1.0) ** 2


def _hel_star(b):
    safe = np.where(b < 0.5, 2.0 - 4.0 * b, 1.0)
    return np.where(b < 0.5, 1.0 / safe - 0.5, np.inf)


def _hel_grad(t):
    with np.errstate(divide="ignore"):
        return 0.5 - 0.5 / np.sqrt(t)


def _pearson_h(t):
    return (t - 1.0) ** 2


def _pearson_star(b):
    return np.where(b >= -2.0, b + 0.25 * b * b, -1.0)


def _pearson_grad(t):
    return 2.0 * (t - 1.0)


def _finite_only_at_zero(d):
    return np.where(np.all(d == 0, axis=-1), 0.0, np.inf)


def _half_l1(d):
    return 0.5 * d.sum(axis=-1)


_TABLE = {
    "kl": (_kl_h, _finite_only_at_zero, _kl_star, _kl_grad),
    "tv": (_tv_h, _half_l1, _tv_star, _tv_grad),
    "hellinger-sq": (_hel_h, _half_l1, _hel_star, _hel_grad),
    "pearson": (_pearson_h, _finite_only_at_zero, _pearson_star, _pearson_grad),
}


def make_generator(name: str, k: int = 2, *, fn=None, recession=None, conjugate=None,
                   grad=None, numeric_recession: bool = False) -> Generator:
    """Built-in generator (coordinatewise sum of the binary form) or a custom one.

    Built-ins: ``kl`` (t log t), ``tv`` (|t-1|/2), ``hellinger-sq``
    ((sqrt t - 1)^2 / 2) and ``pearson`` ((t-1)^2).  For ``custom`` pass
    ``fn`` and ideally ``recession``; with ``numeric_recession=True`` the
    boundary limit is extrapolated numerically and the generator is flagged
    approximate.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    d = k - 1
    if name == "custom":
        if fn is None:
            raise ValueError("custom generator needs fn")
        return Generator("custom", d, fn, recession, conjugate, grad, numeric_recession)
    if name not in _TABLE:
        raise ValueError(f"unknown generator {name!r}")
    h, rec, hstar, hgrad = _TABLE[name]
    return Generator(
        name, d, _separable(h, d),
        recession=lambda t, rec=rec: rec(_rows(t, d)),
        conjugate=_separable(hstar, d),
        grad=lambda t, hgrad=hgrad: hgrad(_rows(t, d)),
    )


def generator_from_dict(spec: dict) -> Generator:
    return make_generator(spec["name"], int(spec.get("k", 2)))


def perspective_eval(g: Generator, t, u):
    """Closed perspective ``u f(t/u)``; ``u = 0`` takes the recession value.

    Broadcasts: ``t`` has shape ``(..., arity)`` and ``u`` shape ``(...)``.
    Never divides by zero.
    """
    t = _rows(t, g.arity)
    u = np.asarray(u, dtype=float)
    scalar = t.ndim == 1 and u.ndim == 0
    t = np.atleast_2d(t)
    u = np.broadcast_to(u, t.shape[:-1]).astype(float)
    if np.any(t < 0) or np.any(u < 0):
        raise ValueError("perspective needs nonnegative arguments")
    out = np.empty(u.shape)
    pos = u > 0
    if np.any(pos):
        out[pos] = u[pos] * np.asarray(g.fn(t[pos] / u[pos][:, None]), dtype=float)
    if np.any(~pos):
        out[~pos] = g.recession_value(t[~pos])
    return float(out[0]) if scalar else out


def _check_dists(dists, g: Generator | None = None) -> np.ndarray:
    P = np.asarray(dists, dtype=float)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ValueError("dists must be a k x m table with k >= 2")
    if g is not None and P.shape[0] != g.k:
        raise ValueError(f"generator arity {g.arity} needs {g.k} distributions, got {P.shape[0]}")
    return P


def f_divergence(dists, g: Generator) -> float:
    """``D_f(P_1, ..., P_{k-1} || P_k)`` for the rows of ``dists``."""
    P = _check_dists(dists, g)
    vals = perspective_eval(g, P[:-1].T, P[-1])
    return float(np.sum(vals))


def f_divergence_quantized(dists, g: Generator, q: Quantizer) -> float:
    """Divergence between the cell masses ``P_i(q^{-1}(z))``."""
    P = _check_dists(dists, g)
    q.check_total(P.shape[1])
    return f_divergence(q.aggregate(P), g)


def kernel_pushforward(dists, K) -> np.ndarray:
    """Row pmfs pushed through a row-stochastic ``|X| x |Z|`` kernel."""
    P = _check_dists(dists)
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != P.shape[1]:
        raise ValueError(f"kernel must have {P.shape[1]} rows")
    if np.any(K < 0) or np.any(np.abs(K.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("kernel rows must be pmfs")
    return P @ K


# -- transport matrices --------------------------------------------------------

def transport_matrix(a, b, tol: float = 1e-9) -> np.ndarray:
    """Nonnegative Z with row sums ``a`` and column sums ``b``.

    Peels off the last row and column, placing ``min(a_m, b_m)`` in the corner
    and the excess in the first row (or column), then recurses.  When the
    natural order would leave a negative entry in the reduced problem, both
    vectors are first sorted in decreasing order (ties by index), which always
    works.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise ValueError("a and b must be nonempty vectors of equal length")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("transport marginals must be nonnegative")
    sa, sb = a.sum(), b.sum()
    if abs(sa - sb) > tol:
        raise ValueError(f"marginal sums differ: {sa!r} vs {sb!r}")
    if sb > 0:
        b = b * (sa / sb)
    return _transport(a.copy(), b.copy())


def _peel_ok(a, b) -> bool:
    scale = 1e-12 * max(1.0, a[0], b[0])
    if a[-1] <= b[-1]:
        return a[0] + a[-1] - b[-1] >= -scale
    return b[0] + b[-1] - a[-1] >= -scale


def _transport(a, b) -> np.ndarray:
    m = a.size
    if m == 1:
        return np.array([[0.5 * (a[0] + b[0])]])
    if not _peel_ok(a, b):
        pa = np.argsort(-a, kind="stable")
        pb = np.argsort(-b, kind="stable")
        Zs = _transport(a[pa], b[pb])
        Z = np.empty_like(Zs)
        Z[np.ix_(pa, pb)] = Zs
        return Z
    if a[-1] > b[-1]:
        return _transport(b, a).T
    Z = np.zeros((m, m))
    Z[-1, -1] = a[-1]
    Z[0, -1] = b[-1] - a[-1]
    a_in = a[:-1].copy()
    a_in[0] = max(a[0] + a[-1] - b[-1], 0.0)
    Z[:-1, :-1] = _transport(a_in, b[:-1])
    return Z


# -- order-equivalence instances ----------------------------------------------

@dataclass(frozen=True)
class OrderInstance:
    """Experiment on ``X = [M] x [M]`` (flattened row-major) with the row and
    column projections as quantizers.

    Generator mode: the quantized divergence under ``q1`` equals
    ``(1/M) sum_j f(A_ext[:, j])`` for every generator, likewise ``q2``/``B_ext``.
    Uncertainty mode: under the uniform prior the posterior of row cell ``i``
    is the column ``A_ext[:, i]``, likewise for ``q2``.
    """

    experiment: DiscreteExperiment
    q1: Quantizer
    q2: Quantizer
    A_ext: np.ndarray
    B_ext: np.ndarray
    M: int
    mode: str
    m: int

    def column_functional(self, fn, which: str = "A") -> float:
        """``(1/M) sum_j fn(column_j)`` over the extended matrix."""
        E = self.A_ext if which == "A" else self.B_ext
        return float(np.sum([fn(E[:, j]) for j in range(E.shape[1])]) / self.M)


def _projections(M: int) -> tuple[Quantizer, Quantizer]:
    i, j = np.divmod(np.arange(M * M), M)
    return Quantizer(i, M), Quantizer(j, M)


def build_order_instance(A, B, mode: str = "generator", verify_tol: float = 1e-10) -> OrderInstance:
    """Finite experiment whose two quantizers realize the columns of A and B."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ValueError("A and B must have the same shape")
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("A and B must be entrywise nonnegative")
    ra, rb = A.sum(axis=1), B.sum(axis=1)
    if np.any(np.abs(ra - rb) > 1e-9 * (1 + np.abs(ra))):
        raise ValueError("marginal mismatch: A 1 != B 1")
    if mode == "generator":
        inst = _generator_instance(A, B)
        _verify_generator_instance(inst, verify_tol)
    elif mode == "uncertainty":
        inst = _uncertainty_instance(A, B)
        _verify_uncertainty_instance(inst, verify_tol)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return inst


def _generator_instance(A, B) -> OrderInstance:
    d, m = A.shape
    k = d + 1
    M = int(np.floor(max(np.max(A.sum(axis=1)), m))) + 1
    A_ext = np.zeros((d, M))
    B_ext = np.zeros((d, M))
    A_ext[:, :m], B_ext[:, :m] = A, B
    if M > m:
        A_ext[:, m] = M - A.sum(axis=1)
        B_ext[:, m] = M - B.sum(axis=1)
    P = np.empty((k, M * M))
    for l in range(d):
        Z = transport_matrix(A_ext[l] / M, B_ext[l] / M)
        P[l] = Z.ravel()
    P[-1] = 1.0 / (M * M)
    P /= P.sum(axis=1, keepdims=True)
    exp = make_experiment(np.full(k, 1.0 / k), P)
    q1, q2 = _projections(M)
    return OrderInstance(exp, q1, q2, A_ext, B_ext, M, "generator", m)


def _verify_generator_instance(inst: OrderInstance, tol: float) -> None:
    g = make_generator("tv", inst.experiment.k)
    for q, which in ((inst.q1, "A"), (inst.q2, "B")):
        lhs = f_divergence_quantized(inst.experiment.conditionals, g, q)
        rhs = inst.column_functional(g, which)
        if abs(lhs - rhs) > tol:
            raise RuntimeError(f"order instance check failed: {lhs!r} != {rhs!r}")


def _uncertainty_instance(A, B) -> OrderInstance:
    k, m = A.shape
    if k < 2:
        raise ValueError("uncertainty mode needs k >= 2 rows")
    for E in (A, B):
        if np.any(np.abs(E.sum(axis=0) - 1.0) > 1e-9):
            raise ValueError("uncertainty mode needs columns in the simplex")
    v = A.sum(axis=1) / m
    M0 = max(1, int(np.ceil(k * v.max() - 1.0 - 1e-12)))
    v0 = np.maximum((1.0 + 1.0 / M0) / k - v / M0, 0.0)
    v0 /= v0.sum()
    pad = np.repeat(v0[:, None], m * M0, axis=1)
    A_ext = np.hstack([A, pad])
    B_ext = np.hstack([B, pad])
    M = (M0 + 1) * m
    P = (k * k / (M * M)) * np.einsum("li,lj->lij", A_ext, B_ext).reshape(k, M * M)
    P /= P.sum(axis=1, keepdims=True)
    exp = make_experiment(np.full(k, 1.0 / k), P)
    q1, q2 = _projections(M)
    return OrderInstance(exp, q1, q2, A_ext, B_ext, M, "uncertainty", m)


def _verify_uncertainty_instance(inst: OrderInstance, tol: float) -> None:
    for q, E in ((inst.q1, inst.A_ext), (inst.q2, inst.B_ext)):
        post = posterior_from_joint(q.aggregate(inst.experiment.joint))
        if np.max(np.abs(post.posteriors - E.T)) > tol:
            raise RuntimeError("order instance check failed: cell posteriors differ")
