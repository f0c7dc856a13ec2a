import io
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lerwcap.chain_oracle import (BoxedWalkChain, FiniteChain, NonTransientChainError, all_orderings_agree,
                                  avoid_probability, decomposition_suite, equilibrium_measure, exact_capacity,
                                  exact_decomposition, exact_escape, green_matrix, random_chain, read_chain,
                                  write_chain)
from lerwcap.rng import RngStream

TWO = FiniteChain(np.array([[0.0, 0.5], [0.5, 0.0]]))


def test_two_state_values():
    assert exact_escape(TWO, [0, 1], 0) == pytest.approx(0.5, abs=1e-15)
    assert exact_escape(TWO, [0], 0) == pytest.approx(0.75, abs=1e-15)
    assert exact_capacity(TWO, [0, 1]) == pytest.approx(1.0, abs=1e-15)
    assert exact_decomposition(TWO, [0, 1]) == pytest.approx(1.0, abs=1e-15)
    assert exact_decomposition(TWO, [1]) == pytest.approx(exact_escape(TWO, [1], 1), abs=1e-15)


def test_non_transient_rejected():
    with pytest.raises(NonTransientChainError):
        FiniteChain(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_invalid_matrices_rejected():
    with pytest.raises(ValueError):
        FiniteChain(np.array([[0.7, 0.6], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        FiniteChain(np.array([[-0.1, 0.0], [0.0, 0.0]]))


def test_duplicates_rejected():
    with pytest.raises(ValueError):
        exact_decomposition(TWO, [0, 0])


def test_escape_requires_membership():
    with pytest.raises(ValueError):
        exact_escape(TWO, [0], 1)


def test_avoid_empty_set_is_one():
    assert avoid_probability(TWO, [], 0) == 1.0


@given(st.integers(2, 30), st.integers(0, 2**32), st.booleans())
def test_escape_matches_last_exit_oracle(n, seed, symmetric):
    # independent route: e_A = G_AA^{-1} 1 with G = (I - P)^{-1}; valid for every transient chain
    gen = RngStream(seed).generator()
    chain = random_chain(n, gen, symmetric=symmetric)
    A = sorted(gen.choice(n, size=int(gen.integers(1, min(n, 8) + 1)), replace=False).tolist())
    esc = np.array([exact_escape(chain, A, x) for x in A])
    assert np.all((esc >= -1e-12) & (esc <= 1 + 1e-12))
    assert np.allclose(esc, equilibrium_measure(chain, A), atol=1e-10)


def test_green_matrix_is_inverse():
    chain = random_chain(12, RngStream(3))
    G = green_matrix(chain)
    assert np.allclose(G @ (np.eye(12) - chain.P), np.eye(12), atol=1e-10)


@given(st.integers(2, 40), st.integers(0, 2**32))
def test_decomposition_identity_symmetric(n, seed):
    gen = RngStream(seed).generator()
    chain = random_chain(n, gen)
    order = gen.permutation(n)[: int(gen.integers(1, min(n, 8) + 1))].tolist()
    assert abs(exact_decomposition(chain, order) - exact_capacity(chain, order)) <= 1e-10


def test_permutation_exhaustive_small_sets():
    for s in range(5):
        gen = RngStream(100 + s).generator()
        chain = random_chain(20, gen)
        A = gen.choice(20, size=6, replace=False).tolist()
        vals = [exact_decomposition(chain, list(p)) for p in itertools.permutations(A)]
        assert max(vals) - min(vals) <= 1e-10
        assert all_orderings_agree(chain, A[:4])


@given(st.integers(3, 30), st.integers(0, 2**32))
def test_subadditivity(n, seed):
    gen = RngStream(seed).generator()
    chain = random_chain(n, gen)
    A = gen.choice(n, size=min(n, 4), replace=False).tolist()
    B = gen.choice(n, size=min(n, 4), replace=False).tolist()
    U = sorted(set(A) | set(B))
    assert exact_capacity(chain, U) <= exact_capacity(chain, A) + exact_capacity(chain, B) + 1e-10


def test_nonsymmetric_chains_break_the_identity():
    # the ordered decomposition needs a symmetric transition matrix
    devs = []
    for s in range(20):
        gen = RngStream(7, s).generator()
        chain = random_chain(10, gen, symmetric=False)
        order = gen.permutation(10)[:4].tolist()
        devs.append(abs(exact_decomposition(chain, order) - exact_capacity(chain, order)))
    assert max(devs) > 1e-3


def test_boxed_chain_capacity_decreases_to_lattice_value():
    caps = [exact_capacity(c, [c.state_of((0, 0, 0))]) for c in (BoxedWalkChain.build(3, R) for R in (2, 4, 8))]
    assert caps[0] > caps[1] > caps[2] > 0.659463
    assert caps == pytest.approx([0.7279, 0.6982, 0.6803], abs=5e-4)


def test_boxed_chain_structure():
    c = BoxedWalkChain.build(3, 2)
    assert c.n_states == 125
    s = c.state_of((1, -2, 0))
    assert c.point_of(s) == (1, -2, 0)
    row = c.P[s].toarray().ravel()
    assert np.isclose(row.sum(), 5 / 6) and set(np.unique(row)) <= {0.0, 1 / 6}


def test_chain_file_roundtrip():
    chain = random_chain(6, RngStream(1))
    buf = io.StringIO()
    write_chain(chain, buf)
    buf.seek(0)
    back = read_chain(buf)
    assert np.allclose(np.asarray(back.P), np.asarray(chain.P), atol=1e-15)


def test_suite_small():
    rep = decomposition_suite(n_chains=50, max_states=20, seed=4)
    assert rep.passed(1e-10) and rep.checks == 150
    assert rep.max_equilibrium_gap < 1e-10
