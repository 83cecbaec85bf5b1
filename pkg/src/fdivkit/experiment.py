"""Priors, class-conditional pmfs, posteriors, cost matrices and simplex grids.

Everything here works on a finite observation alphabet ``X = {0, ..., m-1}``
and ``k`` classes.  Objects are frozen dataclasses wrapping read-only numpy
arrays so they can be shared freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb

import numpy as np

SUM_TOL = 1e-9
SIMPLEX_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def check_simplex(v, name: str = "vector", tol: float = SUM_TOL) -> np.ndarray:
    """Validate a pmf, renormalizing tiny sum deviations.

    Raises ``ValueError`` on negative entries or when the sum is off by more
    than ``tol``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d array")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has a non-finite entry")
    if np.any(v < 0):
        raise ValueError(f"{name} has a negative entry")
    s = v.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"{name} sum {s:.12g} exceeds tolerance")
    return v / s


@dataclass(frozen=True)
class DiscreteExperiment:
    """Prior ``pi`` over k labels plus k class-conditional pmfs over m outcomes."""

    prior: np.ndarray
    conditionals: np.ndarray

    @property
    def k(self) -> int:
        return self.prior.size

    @property
    def m(self) -> int:
        return self.conditionals.shape[1]

    @property
    def joint(self) -> np.ndarray:
        """``joint[i, x] = pi_i P_i(x)``."""
        return self.prior[:, None] * self.conditionals

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "m": self.m,
            "prior": self.prior.tolist(),
            "conditionals": self.conditionals.tolist(),
        }


def validate_experiment(raw) -> DiscreteExperiment:
    """Build a validated experiment from a dict (JSON schema) or an experiment.

    ``raw`` needs ``prior`` and ``conditionals``; ``k`` and ``m`` are checked
    against the table shape when present.
    """
    if isinstance(raw, DiscreteExperiment):
        return raw
    if "prior" not in raw or "conditionals" not in raw:
        raise ValueError("experiment needs 'prior' and 'conditionals'")
    prior = np.asarray(raw["prior"], dtype=float)
    table = np.asarray(raw["conditionals"], dtype=float)
    if prior.ndim != 1:
        raise ValueError("prior must be a 1-d array")
    k = prior.size
    if k < 2:
        raise ValueError("k < 2: need at least two classes")
    if table.ndim != 2 or table.shape[0] != k:
        raise ValueError(f"conditionals must be a {k} x m table")
    m = table.shape[1]
    if m < 1:
        raise ValueError("m must be at least 1")
    if "k" in raw and int(raw["k"]) != k:
        raise ValueError(f"declared k={raw['k']} but prior has {k} entries")
    if "m" in raw and int(raw["m"]) != m:
        raise ValueError(f"declared m={raw['m']} but conditionals have {m} columns")
    prior = check_simplex(prior, "prior")
    rows = [check_simplex(row, f"conditional {i}") for i, row in enumerate(table)]
    return DiscreteExperiment(_frozen(prior), _frozen(np.vstack(rows)))


def load_experiment(path) -> DiscreteExperiment:
    with open(path) as fh:
        return validate_experiment(json.load(fh))


def make_experiment(prior, conditionals) -> DiscreteExperiment:
    return validate_experiment({"prior": prior, "conditionals": conditionals})


@dataclass(frozen=True)
class PosteriorTable:
    """Per-outcome posteriors; rows for zero-marginal outcomes are NaN."""

    posteriors: np.ndarray  # (m, k)
    marginal: np.ndarray  # (m,)

    @property
    def defined(self) -> np.ndarray:
        return self.marginal > 0

    def __getitem__(self, x: int):
        """Posterior at outcome ``x`` or ``None`` when undefined."""
        if not self.defined[x]:
            return None
        return self.posteriors[x]


def posterior(exp: DiscreteExperiment) -> PosteriorTable:
    return posterior_from_joint(exp.joint)


def posterior_from_joint(joint) -> PosteriorTable:
    """Posterior table from a k x m table of ``pi_i P_i(x)`` masses."""
    joint = np.asarray(joint, dtype=float)
    marginal = joint.sum(axis=0)
    post = np.full((joint.shape[1], joint.shape[0]), np.nan)
    ok = marginal > 0
    post[ok] = (joint[:, ok] / marginal[ok]).T
    return PosteriorTable(_frozen(post), _frozen(marginal))


def cost_matrix(C) -> np.ndarray:
    """Validate a k x k cost matrix ``c[y, i]`` (cost of predicting i for y)."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("cost matrix must be square")
    if np.any(C < 0):
        raise ValueError("cost matrix has a negative entry")
    if np.any(np.diag(C) != 0):
        raise ValueError("cost matrix must have a zero diagonal")
    return _frozen(C)


def zero_one_costs(k: int) -> np.ndarray:
    return _frozen(np.ones((k, k)) - np.eye(k))


def _prepend_first(by_total, j) -> np.ndarray:
    # vectors of total j whose first entry is v, followed by a tail of total j - v
    return np.concatenate([np.column_stack([np.full(len(by_total[j - v]), v), by_total[j - v]])
                           for v in range(j + 1)])


def _compositions(k: int, r: int) -> np.ndarray:
    """Nonnegative integer k-vectors summing to r, in lexicographic order."""
    by_total = [np.array([[j]]) for j in range(r + 1)]
    for _ in range(k - 2):
        by_total = [_prepend_first(by_total, j) for j in range(r + 1)]
    return _prepend_first(by_total, r)


def simplex_grid(k: int, r: int) -> np.ndarray:
    """All points ``v / r`` with ``v`` a nonnegative integer vector summing to r.

    Rows are in lexicographic order of ``v``; the count is ``C(r+k-1, k-1)``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if r < 1:
        raise ValueError("resolution must be at least 1")
    grid = _compositions(k, r).astype(float)
    assert len(grid) == comb(r + k - 1, k - 1)
    return grid / r


def random_experiment(rng: np.random.Generator, k: int, m: int,
                      concentration: float = 1.0) -> DiscreteExperiment:
    """Dirichlet prior and conditionals; strictly positive almost surely."""
    prior = rng.dirichlet(np.full(k, concentration))
    table = rng.dirichlet(np.full(m, concentration), size=k)
    return make_experiment(prior, table)


@dataclass(frozen=True)
class Quantizer:
    """A deterministic map ``x -> assignment[x]`` into codes ``0..n_codes-1``.

    Empty codes are allowed; they carry no mass and are skipped downstream.
    """

    assignment: np.ndarray
    n_codes: int

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("quantizer assignment must be 1-d")
        if self.n_codes < 1:
            raise ValueError("quantizer needs at least one code")
        if a.size and (a.min() < 0 or a.max() >= self.n_codes):
            raise ValueError("quantizer maps an outcome outside its code alphabet")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_assignment(cls, assignment, n_codes: int | None = None) -> "Quantizer":
        a = np.asarray(assignment, dtype=np.int64)
        if n_codes is None:
            n_codes = int(a.max()) + 1 if a.size else 1
        return cls(a, int(n_codes))

    @classmethod
    def identity(cls, m: int) -> "Quantizer":
        return cls(np.arange(m), m)

    @classmethod
    def single_cell(cls, m: int) -> "Quantizer":
        return cls(np.zeros(m, dtype=np.int64), 1)

    @property
    def m(self) -> int:
        return self.assignment.size

    def check_total(self, m: int) -> None:
        if self.m != m:
            raise ValueError(f"quantizer covers {self.m} outcomes, experiment has {m}")

    def indicator(self) -> np.ndarray:
        """``m x n_codes`` 0/1 matrix, a deterministic Markov kernel."""
        K = np.zeros((self.m, self.n_codes))
        K[np.arange(self.m), self.assignment] = 1.0
        return K

    def aggregate(self, table) -> np.ndarray:
        """Sum the last axis (outcomes) of ``table`` within each cell."""
        table = np.asarray(table, dtype=float)
        self.check_total(table.shape[-1])
        return table @ self.indicator()

    def blocks(self) -> list[list[int]]:
        return [np.flatnonzero(self.assignment == z).tolist()
                for z in range(self.n_codes)]

    def refines(self, other: "Quantizer") -> bool:
        """True when every cell of ``self`` sits inside a cell of ``other``."""
        seen: dict[int, int] = {}
        for a, b in zip(self.assignment.tolist(), other.assignment.tolist()):
            if seen.setdefault(a, b) != b:
                return False
        return True
