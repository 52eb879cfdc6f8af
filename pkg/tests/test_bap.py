import numpy as np
import pytest

from bapkit.bap import (
    PerturbationContext,
    bap,
    block_arnoldi,
    build_eim,
    chord_lags,
    chord_vectors,
    eif,
    eim_leading_sv,
    linearity_defect,
    random_block,
    subspace_capture_ratio,
)
from bapkit.dynamics import LinearModel, ModelSpec, NormKind, StepCounter, l96_rhs, propagate
from bapkit.errors import (
    BreakdownError,
    InsufficientHistoryError,
    OffManifoldError,
    PreconditionError,
    RankDeficiencyError,
)
from bapkit.metrics import sample_states
from bapkit.smalldense import arnoldi_relation_residual

L96 = ModelSpec.lorenz96()


@pytest.fixture(scope="module")
def l96_samples():
    return sample_states(L96, 1500, 10000, 3, seed=11, lags=chord_lags(5))


@pytest.fixture
def l96_ctx(l96_samples):
    return PerturbationContext(L96, l96_samples.states[0], T=0.2, h=0.015)


def linear_ctx(n=12, seed=0, h=0.5):
    A = np.random.default_rng(seed).standard_normal((n, n)) / np.sqrt(n)
    model = LinearModel(A)
    x0 = np.random.default_rng(seed + 1).standard_normal(n)
    return A, PerturbationContext(model, x0, T=0.01, h=h)


# ---------------------------------------------------------------- EIF and EIM


def test_eif_zero_time_is_scaled_direction():
    x0 = np.random.default_rng(0).standard_normal(50)
    ctx = PerturbationContext(L96, x0, T=0.0, h=0.015)
    v = np.random.default_rng(1).standard_normal(50)
    v /= np.linalg.norm(v)
    np.testing.assert_allclose(eif(ctx, v), 0.015 * v, rtol=0, atol=1e-15 * np.abs(x0).max())


def test_eif_at_fixed_point():
    x0 = np.full(50, 8.0)
    ctx = PerturbationContext(L96, x0)
    v = np.eye(50)[3]
    np.testing.assert_array_equal(eif(ctx, v), propagate(x0 + 0.015 * v, 0.2, L96) - x0)


def test_eif_block_matches_columns(l96_ctx):
    V = random_block(50, 3, 4)
    E = eif(l96_ctx, V)
    for j in range(3):
        np.testing.assert_array_equal(E[:, j], eif(l96_ctx, V[:, j].copy()))


def test_eif_richardson_consistency(l96_ctx):
    v = random_block(50, 1, 5)[:, 0]
    v /= np.linalg.norm(v)

    def slope(h):
        ctx = PerturbationContext(L96, l96_ctx.x0, T=0.2, h=h)
        return eif(ctx, v) / h

    d1 = slope(0.02) - slope(0.01)
    d2 = slope(0.01) - slope(0.005)
    assert np.linalg.norm(d1) / np.linalg.norm(d2) == pytest.approx(2.0, rel=0.05)


def test_eim_of_linear_model_is_scaled_matrix():
    A, ctx = linear_ctx()
    np.testing.assert_allclose(build_eim(ctx), 0.5 * A, rtol=0, atol=1e-14)


def test_eim_singular_vectors_of_linear_model():
    A, ctx = linear_ctx(seed=3)
    _, s, Vt = np.linalg.svd(A)
    trips = eim_leading_sv(ctx, 3)
    for t, sig, row in zip(trips, s, Vt):
        assert t.sigma == pytest.approx(0.5 * sig, rel=1e-12)
        assert abs(t.right @ row) == pytest.approx(1.0, abs=1e-10)


def test_build_eim_integration_count(l96_ctx):
    c = StepCounter()
    ctx = PerturbationContext(L96, l96_ctx.x0)
    B = build_eim(ctx, c)
    assert c.value == (50 + 1) * 20
    assert np.all(np.isfinite(B)) and np.linalg.norm(B) > 0


def test_build_eim_names_failing_column():
    swm = ModelSpec.shallow_water()
    ctx = PerturbationContext(swm, swm.initial_state(), NormKind.TOTAL_ENERGY, T=0.02, h=-0.0 + 40.0)
    # a unit step in the first transformed height entry is huge at this amplitude
    ctx.h = -40.0
    with pytest.raises(OffManifoldError, match="column 0"):
        build_eim(ctx)


def test_eim_sv_deterministic(l96_ctx):
    a = eim_leading_sv(PerturbationContext(L96, l96_ctx.x0))[0]
    b = eim_leading_sv(PerturbationContext(L96, l96_ctx.x0))[0]
    assert a.sigma == b.sigma
    np.testing.assert_array_equal(a.right, b.right)


def test_linearity_defect_shrinks_with_h(l96_ctx):
    V = random_block(50, 4, 6)
    V /= np.linalg.norm(V, axis=0)
    big = linearity_defect(PerturbationContext(L96, l96_ctx.x0, h=0.015), V)
    small = linearity_defect(PerturbationContext(L96, l96_ctx.x0, h=0.0075), V)
    assert np.all(small < big)
    assert np.all(big < 0.05)


def test_context_validation():
    with pytest.raises(PreconditionError):
        PerturbationContext(L96, np.zeros(50), h=0.0)
    with pytest.raises(PreconditionError):
        PerturbationContext(L96, np.zeros(49))
    with pytest.raises(PreconditionError):
        PerturbationContext(L96, np.zeros(50), T=-1.0)


# ---------------------------------------------------------------- start blocks


def test_chord_lags():
    assert chord_lags(1) == [0, 2]
    assert chord_lags(3) == [0, 2, 15, 17, 30, 32]


def test_chord_vectors_indexing():
    hist = {lag: np.full(4, float(lag * lag)) for lag in range(40)}
    C = chord_vectors(hist, 2)
    # column j: x(t0 - 15 j) - x(t0 - 15 j - 2), state at lag L is L^2
    np.testing.assert_allclose(C[:, 0], -np.ones(4) / 2)
    np.testing.assert_allclose(C[:, 1], -np.ones(4) / 2)
    C2 = chord_vectors(lambda lag: np.array([lag, 1.0, 0.0]) ** 2, 2)
    assert C2.shape == (3, 2)


def test_chord_vectors_unit_norm(l96_samples):
    C = chord_vectors(l96_samples.history(0), 5, L96)
    np.testing.assert_allclose(np.linalg.norm(C, axis=0), 1.0, rtol=1e-14)


def test_first_chord_near_tangent(l96_samples):
    for i in range(len(l96_samples)):
        c = chord_vectors(l96_samples.history(i), 1, L96)[:, 0]
        # the chord spans steps t0-2 .. t0; its midpoint tangent is the rhs one step back
        f = l96_rhs(l96_samples.history(i)[0], 8.0)
        assert c @ f / np.linalg.norm(f) > 0.99


def test_chord_vectors_insufficient_history():
    hist = {0: np.ones(3), 2: np.ones(3)}
    with pytest.raises(InsufficientHistoryError, match="17 steps"):
        chord_vectors(hist, 2)


def test_constant_trajectory_gives_rank_deficiency():
    C = chord_vectors(lambda lag: np.ones(6), 2)
    assert np.all(C == 0)
    with pytest.raises(RankDeficiencyError):
        bap(PerturbationContext(L96, np.full(50, 8.0)), np.vstack([C, np.zeros((44, 2))]), 1)


def test_random_block_seeding():
    np.testing.assert_array_equal(random_block(50, 3, 7), random_block(50, 3, 7))
    assert not np.array_equal(random_block(50, 3, 7), random_block(50, 3, 8))
    with pytest.raises(PreconditionError):
        random_block(3, 4, 0)


def test_random_block_full_rank():
    for seed in range(1000):
        assert np.linalg.matrix_rank(random_block(20, 5, seed)) == 5


# ---------------------------------------------------------------- block Arnoldi / BAP


def test_block_arnoldi_structure():
    B = np.random.default_rng(0).standard_normal((30, 30))
    Q, H, G, Qn, Hn, events = block_arnoldi(lambda X: B @ X, random_block(30, 3, 1), 4)
    assert Q.shape == (30, 12) and H.shape == (12, 12)
    assert np.abs(Q.T @ Q - np.eye(12)).max() < 1e-10
    # zero below the first block subdiagonal
    for i in range(4):
        for j in range(4):
            if i > j + 1:
                assert np.all(H[3 * i:3 * i + 3, 3 * j:3 * j + 3] == 0)
    np.testing.assert_allclose(G, Qn @ Hn, atol=1e-12)
    assert events == []


def test_block_arnoldi_m_times_l_exceeds_n():
    with pytest.raises(PreconditionError):
        block_arnoldi(lambda X: X, random_block(10, 3, 0), 4)


def test_bap_relation_on_linear_double():
    A, ctx = linear_ctx(n=20, seed=4)
    res = bap(ctx, random_block(20, 2, 0), 5)
    B = build_eim(ctx)
    assert arnoldi_relation_residual(B, res.Q, res.H, res.G) <= 1e-10


def test_bap_full_space_recovers_eim_sv(l96_ctx):
    ref = eim_leading_sv(l96_ctx)[0]
    res = bap(l96_ctx, random_block(50, 5, 3), 10)
    assert abs(res.P[:, 0] @ ref.right) >= 0.999
    assert res.sigmas[0] == pytest.approx(ref.sigma, rel=1e-3)


def test_bap_single_vector_returns_start(l96_ctx):
    q = random_block(50, 1, 9)
    res = bap(l96_ctx, q, 1)
    q = q[:, 0] / np.linalg.norm(q)
    assert abs(res.P[:, 0] @ q) == pytest.approx(1.0, abs=1e-14)


def test_bap_output_properties(l96_ctx):
    res = bap(l96_ctx, random_block(50, 3, 2), 4, k=2)
    assert res.P.shape == (50, 2)
    np.testing.assert_allclose(np.linalg.norm(res.P, axis=0), 1.0, atol=1e-10)
    assert np.abs(res.Q.T @ res.Q - np.eye(12)).max() < 1e-10
    assert np.all(np.diff(res.sigmas) <= 0)


def test_bap_deterministic(l96_ctx):
    a = bap(PerturbationContext(L96, l96_ctx.x0), random_block(50, 2, 1), 3)
    b = bap(PerturbationContext(L96, l96_ctx.x0), random_block(50, 2, 1), 3)
    np.testing.assert_array_equal(a.P, b.P)
    np.testing.assert_array_equal(a.H, b.H)


def test_bap_integration_count(l96_ctx):
    ctx = PerturbationContext(L96, l96_ctx.x0)
    first = bap(ctx, random_block(50, 3, 0), 4)
    assert first.integration_steps == 4 * 3 * 20 + 20
    second = bap(ctx, random_block(50, 2, 0), 5)
    assert second.integration_steps == 5 * 2 * 20


def test_bap_truncation_matches_shorter_run(l96_ctx):
    Q1 = random_block(50, 2, 4)
    long = bap(l96_ctx, Q1, 6)
    short = bap(l96_ctx, Q1, 3)
    P, _ = long.truncated(3)
    np.testing.assert_allclose(P, short.P, atol=1e-12)


def test_bap_breakdown_replaces_column():
    # the rank-2 map makes span{q, Aq} invariant; the third loop breaks down
    n = 10
    U = np.linalg.qr(np.random.default_rng(0).standard_normal((n, 2)))[0]
    A = U @ np.array([[2.0, 1.0], [0.5, 1.0]]) @ U.T
    ctx = PerturbationContext(LinearModel(A), np.zeros(n), T=0.01, h=1.0)
    res = bap(ctx, U[:, :1] + 0.0, 4)
    assert len(res.breakdowns) >= 1
    assert np.abs(res.Q.T @ res.Q - np.eye(4)).max() < 1e-10


def test_bap_repeated_breakdown_aborts():
    ctx = PerturbationContext(LinearModel(np.zeros((20, 20))), np.zeros(20), T=0.01, h=1.0)
    with pytest.raises(BreakdownError, match="loop 1"):
        bap(ctx, random_block(20, 5, 0), 2)


def test_bap_rejects_bad_k(l96_ctx):
    with pytest.raises(PreconditionError):
        bap(l96_ctx, random_block(50, 2, 0), 1, k=3)


def test_capture_ratio_full_space():
    rng = np.random.default_rng(5)
    Z, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    B = Z @ np.diag(rng.standard_normal(8)) @ Z.T
    Q, H, *_ = block_arnoldi(lambda X: B @ X, random_block(8, 2, 0), 4)
    assert subspace_capture_ratio(H, B) == pytest.approx(1.0, abs=1e-8)
