import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagnet.netgraph import (
    DisconnectedGraphError,
    GraphSpec,
    GraphTopologyError,
    GraphWeightError,
    build_incidence,
    check_connected,
    from_edges,
    kron_lift,
    laplacian,
    nullspace_projector,
)


def two_agent(s12=1.0, s21=1.0):
    return GraphSpec(2, ((0, 1, s12), (1, 0, s21)))


def path3():
    return from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])


def test_incidence_unit_two_agents():
    inc = build_incidence(two_agent())
    assert inc.row_order == ((0, 1), (1, 0))
    assert np.array_equal(inc.S, [[1.0, -1.0], [-1.0, 1.0]])


def test_incidence_asymmetric_weights():
    inc = build_incidence(two_agent(2.0, 3.0))
    assert np.array_equal(inc.S, [[2.0, -2.0], [-3.0, 3.0]])


def test_incidence_path3_rows():
    inc = build_incidence(path3())
    assert inc.row_order == ((0, 1), (1, 0), (1, 2), (2, 1))
    expected = np.array(
        [[1, -1, 0], [-1, 1, 0], [0, 1, -1], [0, -1, 1]], dtype=float
    )
    assert np.array_equal(inc.S, expected)


def test_nonsymmetric_presence_rejected():
    with pytest.raises(GraphTopologyError):
        GraphSpec(3, ((0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0)))


def test_nonpositive_weight_rejected():
    with pytest.raises(GraphWeightError):
        GraphSpec(2, ((0, 1, 0.0), (1, 0, 1.0)))


def test_duplicate_pair_rejected():
    with pytest.raises(GraphTopologyError):
        GraphSpec(2, ((0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0)))


def test_laplacian_unit():
    L = laplacian(build_incidence(two_agent()))
    assert np.array_equal(L, [[2.0, -2.0], [-2.0, 2.0]])


def test_laplacian_weighted_offdiagonal():
    L = laplacian(build_incidence(two_agent(2.0, 3.0)))
    assert np.array_equal(L, [[13.0, -13.0], [-13.0, 13.0]])
    assert L[0, 1] == -(2.0**2 + 3.0**2)


def test_laplacian_nullvector_ones():
    L = laplacian(build_incidence(path3()))
    assert np.allclose(L @ np.ones(3), 0.0, atol=1e-14)
    assert np.min(np.linalg.eigvalsh(L)) == pytest.approx(0.0, abs=1e-12)


def test_kron_lift_identity_case():
    A = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert np.array_equal(kron_lift(A, 1), A)


def test_kron_lift_scalar():
    assert np.array_equal(kron_lift(np.array([[2.0]]), 3), 2.0 * np.eye(3))


def test_kron_lift_nullspace_consensus():
    S = build_incidence(two_agent()).S
    Sb = kron_lift(S, 2)
    v = np.concatenate([[0.3, -0.7], [0.3, -0.7]])
    assert np.allclose(Sb @ v, 0.0, atol=1e-14)


def test_projector_two_agents():
    proj = nullspace_projector(build_incidence(two_agent()))
    assert np.allclose(proj.J, 0.5 * np.ones((2, 2)), atol=1e-12)


def test_projector_kills_range_of_S():
    inc = build_incidence(path3())
    proj = nullspace_projector(inc)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(3)
        assert np.linalg.norm(proj.J @ (inc.S @ v)) <= 1e-12


def test_projector_rank_path3():
    proj = nullspace_projector(build_incidence(path3()))
    assert proj.rank == 4 - 3 + 1
    assert np.linalg.matrix_rank(proj.J) == 2


def test_projector_disconnected_rejected():
    spec = from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
    with pytest.raises(DisconnectedGraphError):
        nullspace_projector(build_incidence(spec))


def test_check_connected():
    assert check_connected(two_agent())
    assert check_connected(path3())
    assert not check_connected(from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]))


def test_from_edges_synthesizes_reverse():
    spec = from_edges(2, [(0, 1, 2.5)])
    weights = dict(((i, j), w) for i, j, w in spec.directed_weights)
    assert weights == {(0, 1): 2.5, (1, 0): 2.5}


@st.composite
def connected_specs(draw):
    num = draw(st.integers(2, 6))
    pairs = set()
    for node in range(1, num):  # random spanning tree keeps it connected
        parent = draw(st.integers(0, node - 1))
        pairs.add((parent, node))
    for _ in range(draw(st.integers(0, 3))):
        i = draw(st.integers(0, num - 1))
        j = draw(st.integers(0, num - 1))
        if i != j:
            pairs.add((min(i, j), max(i, j)))
    weight = st.floats(0.1, 10.0, allow_nan=False)
    triples = []
    for i, j in sorted(pairs):
        triples.append((i, j, draw(weight)))
        triples.append((j, i, draw(weight)))
    return GraphSpec(num, tuple(triples))


@settings(max_examples=25, deadline=None)
@given(connected_specs())
def test_laplacian_matches_direct_formula(spec):
    inc = build_incidence(spec)
    L = laplacian(inc)
    w = {(i, j): s for i, j, s in spec.directed_weights}
    direct = np.zeros((spec.num_agents, spec.num_agents))
    for i, j in w:
        lij = w[(i, j)] ** 2 + w[(j, i)] ** 2
        direct[i, j] = -lij
        direct[i, i] += lij
    assert np.max(np.abs(L - direct)) <= 1e-12 * max(1.0, np.max(np.abs(direct)))


@settings(max_examples=25, deadline=None)
@given(connected_specs())
def test_projector_invariants(spec):
    inc = build_incidence(spec)
    proj = nullspace_projector(inc)
    J = proj.J
    assert np.linalg.norm(J @ J - J) <= 1e-10
    assert np.linalg.norm(J - J.T) <= 1e-10
    assert np.linalg.norm(inc.S.T @ J) <= 1e-10  # projects onto Null(S')


@settings(max_examples=25, deadline=None)
@given(connected_specs(), st.integers(0, 2**31 - 1))
def test_nullspace_of_S_is_consensus(spec, seed):
    inc = build_incidence(spec)
    # projection of a random vector onto Null(S) = span{ones} is its mean
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(spec.num_agents)
    basis = np.ones(spec.num_agents) / np.sqrt(spec.num_agents)
    proj_v = basis * (basis @ v)
    import scipy.linalg

    U = scipy.linalg.null_space(inc.S, rcond=1e-10)
    assert U.shape[1] == 1
    assert np.linalg.norm(U @ (U.T @ v) - proj_v) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(connected_specs(), st.integers(1, 3))
def test_lifted_projector_annihilates_lifted_S(spec, n):
    inc = build_incidence(spec)
    proj = nullspace_projector(inc)
    Sb = kron_lift(inc.S, n)
    Jb = kron_lift(proj.J, n)
    assert np.linalg.norm(Sb.T @ Jb) <= 1e-10
