import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from delicoco.errors import ContractViolation
from delicoco.numkit import COMPRESSION_STREAM, DATA_STREAM, SeededRng, eig_sym, mix64, randn

MASK = (1 << 64) - 1


def splitmix64_reference(seed, count):
    """Textbook sequential SplitMix64 on Python ints."""
    state, out = seed, []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_splitmix64_published_vector(backend):
    got = backend.splitmix64_block(np.array([1234567], dtype=np.uint64), 0, 5)[0]
    assert got.tolist() == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


@pytest.mark.parametrize("seed", [0, 1, 2**63 + 5, MASK])
def test_splitmix64_counter_addressing_matches_sequential(backend, seed):
    ref = splitmix64_reference(seed, 40)
    keys = np.array([seed], dtype=np.uint64)
    assert backend.splitmix64_block(keys, 0, 40)[0].tolist() == ref
    assert backend.splitmix64_block(keys, 17, 23)[0].tolist() == ref[17:]


def test_rng_stream_continues_across_calls():
    a, b = SeededRng(9), SeededRng(9)
    whole = a.bits(10)
    parts = np.concatenate([b.bits(3), b.bits(7)])
    assert np.array_equal(whole, parts)
    assert b.counter == 10


def test_spawn_is_independent_of_parent_counter():
    a = SeededRng(5)
    child_before = a.spawn(2, 3).bits(4)
    a.bits(100)
    assert np.array_equal(a.spawn(2, 3).bits(4), child_before)
    assert a.spawn(DATA_STREAM).key != a.spawn(COMPRESSION_STREAM).key
    assert a.spawn(1, 2).key != a.spawn(2, 1).key


def test_mix64_matches_kernel_finalizer(backend):
    # mix64(k + golden) is output 0 of the stream keyed by k
    k = 0xDEADBEEF
    assert mix64(k + 0x9E3779B97F4A7C15) == int(backend.splitmix64_block(np.array([k], dtype=np.uint64), 0, 1)[0, 0])


def test_uniform_range():
    u = SeededRng(1).uniform(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005


def test_randn_golden():
    # frozen from the splitmix64 + Box-Muller stream at seed 42
    got = randn(SeededRng(42), 1, 4)[0]
    np.testing.assert_array_equal(
        got, np.array([0.7189198751663963, 1.138605979315142, 0.5760621378390508, 0.17930521621753695])
    )


def test_randn_moments():
    z = randn(SeededRng(2024), 1000, 1000).ravel()
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_randn_deterministic_and_row_major():
    a = randn(SeededRng(3), 4, 5)
    b = randn(SeededRng(3), 4, 5)
    assert np.array_equal(a, b)
    flat = randn(SeededRng(3), 1, 20)[0]
    assert np.array_equal(a.ravel(), flat)


def test_randn_rejects_empty():
    with pytest.raises(ContractViolation):
        randn(SeededRng(0), 0, 3)


# -- eigensolver ----------------------------------------------------------------

def test_eig_identity():
    np.testing.assert_array_equal(eig_sym(np.eye(3)), [1.0, 1.0, 1.0])


def test_eig_swap():
    np.testing.assert_allclose(eig_sym([[0.0, 1.0], [1.0, 0.0]]), [1.0, -1.0], atol=1e-15)


def test_eig_ring4_circulant():
    w = np.array([[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]]) / 3.0
    formula = [(1 + 2 * np.cos(2 * np.pi * k / 4)) / 3 for k in range(4)]
    np.testing.assert_allclose(np.sort(eig_sym(w)), np.sort(formula), atol=1e-12)
    np.testing.assert_allclose(eig_sym(w), [1.0, 1 / 3, 1 / 3, -1 / 3], atol=1e-12)


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros((0, 0))])
def test_eig_rejects_bad_input(bad):
    with pytest.raises(ContractViolation):
        eig_sym(bad)


def _charpoly_roots(a):
    # independent oracle: roots of det(lambda I - A) from numpy's polynomial machinery
    return np.sort(np.real(np.roots(np.poly(a))))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-3, 3, allow_nan=False, width=64)))
def test_eig_matches_charpoly(m):
    a = m + m.T
    vals = np.sort(eig_sym(a))
    # polynomial rooting loses accuracy near clustered roots; compare to a dense reference too
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(a), atol=1e-10)
    np.testing.assert_allclose(vals, _charpoly_roots(a), atol=1e-5 * max(1.0, np.abs(a).max()))


@pytest.mark.parametrize("n", [1, 2, 5, 13, 20, 50, 100])
def test_eig_against_reference_and_trace(n, rng):
    m = rng.standard_normal((n, n))
    a = m + m.T
    vals = eig_sym(a)
    assert vals.shape == (n,)
    np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(a), atol=1e-10)
    assert abs(vals.sum() - np.trace(a)) <= 1e-9 * max(1.0, np.abs(np.trace(a)), np.abs(a).sum())
    assert np.all(np.diff(np.abs(vals)) <= 1e-12)


def test_eig_charpoly_small_well_separated(rng):
    for n in range(2, 9):
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        lam = np.arange(1, n + 1, dtype=float) * 1.5 - 4.1
        a = q @ np.diag(lam) @ q.T
        a = 0.5 * (a + a.T)
        np.testing.assert_allclose(np.sort(eig_sym(a)), np.sort(lam), atol=1e-8)
        np.testing.assert_allclose(np.sort(eig_sym(a)), _charpoly_roots(a), atol=1e-8)


def test_eig_deterministic(rng):
    m = rng.standard_normal((30, 30))
    a = m + m.T
    assert np.array_equal(eig_sym(a), eig_sym(a))


def test_jacobi_backends_bit_identical(rng):
    from conftest import BACKENDS

    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    py, cy = (p.values[0] for p in BACKENDS)
    for n in (3, 17, 40):
        m = rng.standard_normal((n, n))
        a = m + m.T
        tol = np.finfo(float).eps * np.linalg.norm(a)
        v1, s1 = py.jacobi_eigenvalues(a.copy(), tol, 60)
        v2, s2 = cy.jacobi_eigenvalues(a.copy(), tol, 60)
        assert s1 == s2
        assert np.array_equal(v1, v2)
