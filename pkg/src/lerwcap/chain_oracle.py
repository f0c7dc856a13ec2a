"""Exact escape probabilities and capacities on finite transient Markov chains.

A ``FiniteChain`` has a substochastic matrix P; the missing mass of each row
is the probability of being absorbed ("escaping to infinity") at that step.
Everything here is a linear solve, so these values serve as exact oracles
for the Monte Carlo estimators and for the ordered capacity decomposition

    cap(A) = sum_k P_{x_k}(avoid {x_1..x_k} from time 1) * P_{x_k}(avoid {x_1..x_{k-1}} from time 1).

Its proof uses the strong Markov property together with the symmetry
P_x(first hit of A is y) = P_y(first hit of A is x) for x, y in A, i.e. it needs
P symmetric (as for SRW).  On non-symmetric chains the identity fails, which
the suite reports as a diagnostic.
"""

from __future__ import annotations

import itertools
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import LinAlgError, LinAlgWarning, lu_factor, lu_solve

from .rng import RngStream, as_generator

TRANSIENCE_TOL = 1e-9
RESIDUAL_TOL = 1e-12


class NonTransientChainError(ValueError):
    """The chain is not absorbed with probability one from every state."""


@dataclass(frozen=True, eq=False)
class FiniteChain:
    P: np.ndarray | sp.csr_matrix

    def __post_init__(self):
        P = self.P
        if sp.issparse(P):
            P = sp.csr_matrix(P, dtype=np.float64)
            data = P.data
        else:
            P = np.array(P, dtype=np.float64)
            data = P
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ValueError("P must be a nonempty square matrix")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("transition probabilities must be finite and nonnegative")
        rows = np.asarray(P.sum(axis=1)).ravel()
        if np.any(rows > 1 + 1e-12):
            raise ValueError("row sums must not exceed 1")
        object.__setattr__(self, "P", P)
        self._check_transient()

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def absorption(self) -> np.ndarray:
        return np.clip(1.0 - np.asarray(self.P.sum(axis=1)).ravel(), 0.0, 1.0)

    def _check_transient(self):
        n = self.n_states
        a = self.absorption
        try:
            u = _solve(_identity_minus(self.P, np.arange(n)), a)
        except (LinAlgError, RuntimeError) as exc:
            raise NonTransientChainError("I - P is singular") from exc
        if not np.all(np.isfinite(u)) or np.max(np.abs(u - 1.0)) > TRANSIENCE_TOL:
            raise NonTransientChainError("absorption probability is not 1 from every state")


@dataclass(frozen=True, eq=False)
class BoxedWalkChain(FiniteChain):
    """SRW on the box [-R, R]^d; steps leaving the box are absorbed."""

    d: int = 3
    R: int = 1
    sites: np.ndarray = field(default=None, repr=False)

    @classmethod
    def build(cls, d: int, R: int) -> "BoxedWalkChain":
        if d < 1 or R < 0:
            raise ValueError("need d >= 1 and R >= 0")
        N = 2 * R + 1
        n = N**d
        grid = np.indices((N,) * d).reshape(d, -1).T - R
        rows, cols = [], []
        flat = np.arange(n)
        strides = N ** np.arange(d - 1, -1, -1)
        for axis in range(d):
            for s in (1, -1):
                c = grid[:, axis] + s
                ok = np.abs(c) <= R
                rows.append(flat[ok])
                cols.append(flat[ok] + s * strides[axis])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        P = sp.csr_matrix((np.full(len(rows), 1.0 / (2 * d)), (rows, cols)), shape=(n, n))
        return cls(P, d=d, R=R, sites=grid)

    def state_of(self, point: Sequence[int]) -> int:
        N = 2 * self.R + 1
        s = 0
        for c in point:
            c = int(c)
            if abs(c) > self.R:
                raise ValueError(f"{tuple(point)} is outside the box")
            s = s * N + (c + self.R)
        return s

    def point_of(self, state: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.sites[state])


# linear algebra -----------------------------------------------------------

def _identity_minus(P, idx: np.ndarray):
    if sp.issparse(P):
        sub = P[idx][:, idx]
        return (sp.identity(len(idx), format="csc") - sub).tocsc()
    sub = P[np.ix_(idx, idx)]
    return np.eye(len(idx)) - sub


def _solve(M, b: np.ndarray) -> np.ndarray:
    """Solve M x = b by LU with partial pivoting, refining until the relative residual is tiny."""
    if sp.issparse(M):
        lu = spla.splu(M)
        solve = lu.solve
    else:
        if M.size and not np.all(np.isfinite(M)):
            raise LinAlgError("non-finite matrix")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            factors = lu_factor(M, check_finite=False)
        if np.any(np.abs(np.diag(factors[0])) < 1e-300):
            raise LinAlgError("singular matrix")
        solve = lambda rhs: lu_solve(factors, rhs, check_finite=False)  # noqa: E731
    x = solve(b)
    scale = max(np.max(np.abs(b)), 1e-300)
    for _ in range(5):
        r = b - M @ x
        if np.max(np.abs(r)) <= RESIDUAL_TOL * scale:
            break
        x = x + solve(r)
    if not np.all(np.isfinite(x)):
        raise LinAlgError("singular system")
    return x


def _states(chain: FiniteChain, A: Iterable[int]) -> np.ndarray:
    arr = np.array(list(A), dtype=np.int64).ravel()
    if np.any(arr < 0) or np.any(arr >= chain.n_states):
        raise ValueError("state out of range")
    return arr


def hitting_probabilities(chain: FiniteChain, A: Iterable[int]) -> np.ndarray:
    """h(y) = P_y(hit A at some time >= 0) for every state y."""
    A = np.unique(_states(chain, A))
    n = chain.n_states
    h = np.zeros(n)
    h[A] = 1.0
    if len(A) == 0:
        return h
    rest = np.setdiff1d(np.arange(n), A)
    if len(rest):
        P = chain.P
        if sp.issparse(P):
            rhs = np.asarray(P[rest][:, A].sum(axis=1)).ravel()
        else:
            rhs = P[np.ix_(rest, A)].sum(axis=1)
        try:
            h[rest] = _solve(_identity_minus(P, rest), rhs)
        except (LinAlgError, RuntimeError) as exc:
            raise NonTransientChainError("hitting system is singular") from exc
    return np.clip(h, 0.0, 1.0)


def avoid_probability(chain: FiniteChain, B: Iterable[int], x: int) -> float:
    """P_x(chain at times 1, 2, ... never visits B); 1 for empty B."""
    B = _states(chain, B)
    if len(B) == 0:
        return 1.0
    h = hitting_probabilities(chain, B)
    hit = float(np.asarray(chain.P[x] @ h).ravel()[0])
    return float(np.clip(1.0 - hit, 0.0, 1.0))


def exact_escape(chain: FiniteChain, A: Iterable[int], x: int) -> float:
    A = _states(chain, A)
    if len(A) == 0:
        raise ValueError("A must be nonempty")
    if x not in set(A.tolist()):
        raise ValueError("x must belong to A")
    return avoid_probability(chain, A, x)


def exact_capacity(chain: FiniteChain, A: Iterable[int]) -> float:
    A = np.unique(_states(chain, A))
    if len(A) == 0:
        raise ValueError("A must be nonempty")
    h = hitting_probabilities(chain, A)
    P = chain.P
    hits = np.asarray(P[A] @ h).ravel()
    return float(np.sum(np.clip(1.0 - hits, 0.0, 1.0)))


def exact_decomposition(chain: FiniteChain, order: Sequence[int]) -> float:
    """Ordered decomposition of the capacity; duplicates are rejected."""
    xs = [int(v) for v in _states(chain, order)]
    if not xs:
        raise ValueError("ordering must be nonempty")
    if len(set(xs)) != len(xs):
        raise ValueError("ordering contains duplicate states")
    total = 0.0
    for k, x in enumerate(xs):
        total += avoid_probability(chain, xs[: k + 1], x) * avoid_probability(chain, xs[:k], x)
    return total


def green_matrix(chain: FiniteChain) -> np.ndarray:
    """G = (I - P)^{-1}, expected visits (time 0 included); dense."""
    P = chain.P.toarray() if sp.issparse(chain.P) else chain.P
    return np.linalg.inv(np.eye(chain.n_states) - P)


def equilibrium_measure(chain: FiniteChain, A: Iterable[int]) -> np.ndarray:
    """Escape probabilities on A via the last-exit identity G_AA e = 1 (independent of the hitting solve)."""
    A = _states(chain, A)
    G = green_matrix(chain)
    return np.linalg.solve(G[np.ix_(A, A)], np.ones(len(A)))


# random chains and the identity suite --------------------------------------

def random_chain(
    n_states: int,
    rng,
    symmetric: bool = True,
    full_row_fraction: float = 0.2,
    density: float = 0.5,
) -> FiniteChain:
    """Random transient chain with sparse random rows; some rows stochastic, the rest leaking.

    Symmetric chains get their row masses from self-loops so that P = P^T.
    """
    gen = as_generator(rng)
    n = n_states
    for _ in range(100):
        W = gen.exponential(size=(n, n)) * (gen.random((n, n)) < density)
        if symmetric:
            W = np.triu(W, 1)
            W = W + W.T
            rows = W.sum(axis=1)
            W *= gen.uniform(0.3, 1.0) / max(rows.max(), 1e-300)
            rows = W.sum(axis=1)
            target = gen.uniform(rows, 1.0)
            target[gen.random(n) < full_row_fraction] = 1.0
            W[np.diag_indices(n)] += target - rows
        else:
            empty = W.sum(axis=1) == 0
            W[empty, gen.integers(0, n, size=empty.sum())] = 1.0
            W /= W.sum(axis=1, keepdims=True)
            mass = gen.uniform(0.3, 1.0, size=n)
            mass[gen.random(n) < full_row_fraction] = 1.0
            W = W * mass[:, None]
        try:
            return FiniteChain(np.minimum(W, 1.0))
        except NonTransientChainError:
            continue
    raise RuntimeError("failed to draw a transient chain")


@dataclass
class SuiteReport:
    chains: int
    checks: int
    max_deviation: float  # symmetric chains: the identity must hold here
    max_permutation_spread: float
    max_equilibrium_gap: float  # escape sum vs. last-exit solve
    nonsymmetric_max_deviation: float  # diagnostic only

    def passed(self, tol: float = 1e-10) -> bool:
        return self.max_deviation <= tol


def decomposition_suite(
    n_chains: int = 1000,
    max_states: int = 50,
    max_set: int = 8,
    orderings: int = 3,
    seed: int = 0,
    nonsymmetric_probe: int = 20,
) -> SuiteReport:
    """Compare capacity with its ordered decomposition on random symmetric chains and orderings."""
    root = RngStream(seed)
    worst = spread = eq_gap = 0.0
    checks = 0
    for c in range(n_chains):
        gen = root.child("chain", c).generator()
        n = int(gen.integers(2, max_states + 1))
        chain = random_chain(n, gen)
        size = int(gen.integers(1, min(max_set, n) + 1))
        A = gen.choice(n, size=size, replace=False)
        cap = exact_capacity(chain, A)
        eq_gap = max(eq_gap, abs(float(equilibrium_measure(chain, A).sum()) - cap))
        vals = []
        for _ in range(orderings):
            dec = exact_decomposition(chain, gen.permutation(A))
            vals.append(dec)
            worst = max(worst, abs(dec - cap))
            checks += 1
        spread = max(spread, max(vals) - min(vals))
    asym = 0.0
    for c in range(nonsymmetric_probe):
        gen = root.child("nonsymmetric", c).generator()
        n = int(gen.integers(2, max_states + 1))
        chain = random_chain(n, gen, symmetric=False)
        A = gen.choice(n, size=int(gen.integers(1, min(max_set, n) + 1)), replace=False)
        asym = max(asym, abs(exact_decomposition(chain, A) - exact_capacity(chain, A)))
    return SuiteReport(n_chains, checks, worst, spread, eq_gap, asym)


def all_orderings_agree(chain: FiniteChain, A: Sequence[int], tol: float = 1e-10) -> bool:
    vals = [exact_decomposition(chain, perm) for perm in itertools.permutations(A)]
    return max(vals) - min(vals) <= tol


# file format ---------------------------------------------------------------

def write_chain(chain: FiniteChain, target) -> None:
    """Header line with the number of states, then one ``i j p`` line per nonzero entry."""
    P = sp.coo_matrix(chain.P)
    lines = [f"{chain.n_states}\n"]
    lines += [f"{int(i)} {int(j)} {float(p)!r}\n" for i, j, p in zip(P.row, P.col, P.data) if p != 0]
    text = "".join(lines)
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text)


def read_chain(source) -> FiniteChain:
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty chain file")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValueError("first line must be the number of states") from exc
    P = np.zeros((n, n))
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"expected 'i j p', got {ln!r}")
        i, j, p = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"state index out of range in {ln!r}")
        P[i, j] += p
    return FiniteChain(P)
