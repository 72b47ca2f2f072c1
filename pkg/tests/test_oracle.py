"""Tests for the exact finite-state kernels and orderings."""

import math

import numpy as np
import pytest
from conftest import chi2_pvalue, finite_bundle

from ccmix import State, fcc_step, gibbs_step, mcc_step
from ccmix.oracle import (
    DimensionMismatch,
    FiniteKernel,
    FiniteMixtureSpec,
    NonErgodic,
    NotReversible,
    OrderingViolation,
    TooLarge,
    build_gibbs_index_kernel,
    build_P3,
    build_Q3,
    build_Q4,
    check_covariance_ordering,
    check_gibbs_iid_bound,
    check_offdiagonal_dominance,
    check_reversibility,
    exact_asymptotic_variance_alternating,
    index_function_vector,
    index_lag1_autocorrelation,
    index_marginal,
    lag_covariances,
    load_spec,
    random_spec,
    save_spec,
    spec_from_log_densities,
    target_distribution,
)


@pytest.fixture(scope="module")
def specs():
    rng = np.random.default_rng(2024)
    return [
        random_spec(rng, n, G) for n, G in ((2, 5), (2, 10), (3, 5), (3, 10), (2, 25))
    ]


class TestSpecValidation:
    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            FiniteMixtureSpec(
                2, np.arange(3.0), np.full((2, 4), 0.125), np.full((2, 3), 1 / 3)
            )

    def test_prob_must_sum_to_one(self):
        with pytest.raises(ValueError):
            FiniteMixtureSpec(
                2, np.arange(3.0), np.full((2, 3), 0.2), np.full((2, 3), 1 / 3)
            )

    def test_negative_mass_rejected(self):
        prob = np.full((2, 3), 1 / 6)
        pseudo = np.array([[1.4, -0.2, -0.2], [1 / 3, 1 / 3, 1 / 3]])
        with pytest.raises(ValueError):
            FiniteMixtureSpec(2, np.arange(3.0), prob, pseudo)

    def test_proposal_must_be_row_stochastic(self):
        prob = np.full((2, 3), 1 / 6)
        pseudo = np.full((2, 3), 1 / 3)
        proposal = np.full((2, 3, 3), 0.2)
        with pytest.raises(ValueError):
            FiniteMixtureSpec(2, np.arange(3.0), prob, pseudo, proposal)

    def test_state_index_layout(self):
        spec = random_spec(np.random.default_rng(0), 3, 4)
        assert spec.state_index(1, 0) == 0
        assert spec.state_index(2, 0) == 4
        assert spec.state_index(3, 3) == 11
        assert spec.n_states == 12

    def test_kernel_row_sums_checked(self):
        with pytest.raises(ValueError):
            FiniteKernel(np.array([[0.5, 0.4], [0.0, 1.0]]), 2, 1)


class TestKernelStructure:
    def test_p3_rows_stochastic_and_reversible(self, specs):
        for spec in specs:
            pi = target_distribution(spec)
            P3 = build_P3(spec)
            np.testing.assert_allclose(P3.matrix.sum(axis=1), 1.0, atol=1e-12)
            assert check_reversibility(P3, pi) <= 1e-12

    def test_q3_block_diagonal_and_reversible(self, specs):
        for spec in specs:
            pi = target_distribution(spec)
            Q3 = build_Q3(spec)
            assert check_reversibility(Q3, pi) <= 1e-14
            G = spec.grid_size
            M = Q3.matrix.copy()
            for m in range(spec.n):
                M[m * G : (m + 1) * G, m * G : (m + 1) * G] = 0.0
            assert np.max(np.abs(M)) == 0.0

    def test_q3_never_moves_the_label(self, specs):
        # Block-diagonality means composing with Q3 leaves the label
        # marginal dynamics of P3 unchanged.
        spec = specs[0]
        P3 = build_P3(spec)
        Q3 = build_Q3(spec)
        G = spec.grid_size
        lift = np.kron(np.eye(spec.n), np.ones((G, 1)))
        np.testing.assert_allclose(
            P3.matrix @ lift, (P3.matrix @ Q3.matrix) @ lift, atol=1e-13
        )

    def test_q4_is_identity(self, specs):
        spec = specs[0]
        np.testing.assert_array_equal(build_Q4(spec).matrix, np.eye(spec.n_states))

    def test_p3_single_component_fixes_the_state(self):
        spec = random_spec(np.random.default_rng(1), 1, 6)
        np.testing.assert_allclose(build_P3(spec).matrix, np.eye(6), atol=1e-14)

    def test_p3_optimal_pseudo_closed_form(self):
        # With rho_j proportional to pi*(j, .) the index draw is i.i.d.
        # from the label marginal.  Moving to another component lands on
        # its exact conditional; staying keeps z, so the row is pi* on
        # the foreign blocks and pi_m(m) * delta_z on the home block.
        rng = np.random.default_rng(2)
        spec0 = random_spec(rng, 3, 6)
        pseudo = spec0.prob / spec0.prob.sum(axis=1, keepdims=True)
        spec = FiniteMixtureSpec(3, spec0.grid, spec0.prob, pseudo)
        P3 = build_P3(spec)
        pi = target_distribution(spec)
        pim = index_marginal(spec)
        G = spec.grid_size
        for m in range(1, 4):
            for g in range(G):
                want = pi.copy()
                want[(m - 1) * G : m * G] = 0.0
                want[spec.state_index(m, g)] = pim[m - 1]
                np.testing.assert_allclose(
                    P3.matrix[spec.state_index(m, g)], want, atol=1e-13
                )

    def test_p3_invariance(self, specs):
        for spec in specs:
            pi = target_distribution(spec)
            for K in (build_P3(spec), build_Q3(spec)):
                assert np.max(np.abs(pi @ K.matrix - pi)) <= 1e-12

    def test_too_large_enumeration(self):
        spec = random_spec(np.random.default_rng(3), 3, 200, with_proposal=False)
        with pytest.raises(TooLarge):
            build_P3(spec)

    def test_gibbs_index_kernel(self, specs):
        for spec in specs:
            G = build_gibbs_index_kernel(spec)
            pim = index_marginal(spec)
            np.testing.assert_allclose(G.matrix.sum(axis=1), 1.0, atol=1e-13)
            assert check_reversibility(G, pim) <= 1e-14

    def test_gibbs_kernel_well_separated_strata(self):
        # Almost-disjoint components: the label chain barely moves.
        grid = np.linspace(-2, 2, 81)
        spec = spec_from_log_densities(
            2,
            grid,
            lambda m, z: -((z - (2 * m - 3)) ** 2) / (2 * 0.04),
            lambda j, u: -u * u / 2,
        )
        G = build_gibbs_index_kernel(spec)
        assert G.matrix[0, 0] > 0.999 and G.matrix[1, 1] > 0.999


class TestChecks:
    def test_reversibility_detects_cycle(self):
        # A deterministic 3-cycle is stationary for the uniform law but
        # maximally non-reversible.
        K = FiniteKernel(np.roll(np.eye(3), 1, axis=1), 3, 1)
        pi = np.full(3, 1 / 3)
        assert check_reversibility(K, pi) == pytest.approx(1 / 3)

    def test_offdiagonal_dominance(self, specs):
        for spec in specs:
            assert check_offdiagonal_dominance(build_Q3(spec), build_Q4(spec))

    def test_offdiagonal_dominance_false_case(self):
        lazy = FiniteKernel(np.array([[0.9, 0.1], [0.1, 0.9]]), 2, 1)
        busy = FiniteKernel(np.array([[0.5, 0.5], [0.5, 0.5]]), 2, 1)
        assert check_offdiagonal_dominance(busy, lazy)
        assert not check_offdiagonal_dominance(lazy, busy)

    def test_covariance_ordering_equal_kernels_is_zero(self, specs):
        spec = specs[0]
        pi = target_distribution(spec)
        Q3 = build_Q3(spec)
        assert check_covariance_ordering(Q3, Q3, pi) == pytest.approx(0.0, abs=1e-15)

    def test_covariance_ordering_q3_dominates_identity(self, specs):
        for spec in specs:
            pi = target_distribution(spec)
            lam = check_covariance_ordering(build_Q3(spec), build_Q4(spec), pi)
            assert lam >= -1e-10

    def test_covariance_ordering_requires_reversibility(self):
        K = FiniteKernel(np.roll(np.eye(3), 1, axis=1), 3, 1)
        eye = FiniteKernel(np.eye(3), 3, 1)
        with pytest.raises(NotReversible):
            check_covariance_ordering(K, eye, np.full(3, 1 / 3))


class TestAsymptoticVariance:
    def test_two_state_closed_form(self):
        # Flip probabilities a, b; h = indicator of state 2:
        # sigma^2 = pi1 * pi2 * (2 - a - b) / (a + b).
        a, b = 0.2, 0.45
        K = FiniteKernel(np.array([[1 - a, a], [b, 1 - b]]), 2, 1)
        pi = np.array([b, a]) / (a + b)
        f = np.array([0.0, 1.0])
        got = exact_asymptotic_variance_alternating(K, K, pi, f, tol=1e-13)
        want = pi[0] * pi[1] * (2 - a - b) / (a + b)
        assert got == pytest.approx(want, abs=1e-10)

    def test_independence_kernel_gives_iid_variance(self):
        # Rows all equal to pi: zero correlation at every positive lag.
        rng = np.random.default_rng(4)
        pi = rng.dirichlet(np.ones(6))
        K = FiniteKernel(np.tile(pi, (6, 1)), 6, 1)
        f = rng.standard_normal(6)
        var = float(pi @ (f - pi @ f) ** 2)
        got = exact_asymptotic_variance_alternating(K, K, pi, f)
        assert got == pytest.approx(var, abs=1e-10)

    def test_constant_function_gives_zero(self, specs):
        spec = specs[0]
        pi = target_distribution(spec)
        P3 = build_P3(spec)
        assert exact_asymptotic_variance_alternating(
            P3, P3, pi, np.ones(spec.n_states)
        ) == 0.0

    def test_batched_matches_scalar(self, specs):
        spec = specs[2]
        pi = target_distribution(spec)
        P3, Q3 = build_P3(spec), build_Q3(spec)
        F = np.random.default_rng(5).standard_normal((6, spec.n_states))
        batch = exact_asymptotic_variance_alternating(P3, Q3, pi, F)
        singles = [
            exact_asymptotic_variance_alternating(P3, Q3, pi, f) for f in F
        ]
        np.testing.assert_allclose(batch, singles, atol=1e-9)

    def test_mcc_never_beats_fcc(self, specs):
        rng = np.random.default_rng(6)
        for spec in specs:
            pi = target_distribution(spec)
            P3, Q3, Q4 = build_P3(spec), build_Q3(spec), build_Q4(spec)
            F = rng.standard_normal((20, spec.n_states))
            s_mcc = exact_asymptotic_variance_alternating(P3, Q3, pi, F)
            s_fcc = exact_asymptotic_variance_alternating(P3, Q4, pi, F)
            assert np.max(s_mcc - s_fcc) <= 1e-10

    def test_periodic_kernel_raises(self):
        swap = FiniteKernel(np.array([[0.0, 1.0], [1.0, 0.0]]), 2, 1)
        pi = np.array([0.5, 0.5])
        with pytest.raises(NonErgodic):
            exact_asymptotic_variance_alternating(
                swap, swap, pi, np.array([0.0, 1.0])
            )

    def test_dimension_mismatch(self, specs):
        spec = specs[0]
        P3 = build_P3(spec)
        with pytest.raises(DimensionMismatch):
            exact_asymptotic_variance_alternating(
                P3, P3, target_distribution(spec), np.ones(3)
            )


class TestGibbsBound:
    def test_bound_holds_on_random_specs(self, specs):
        for spec in specs:
            s2, viid = check_gibbs_iid_bound(spec, lambda m: float(m == 1))
            assert s2 >= viid - 1e-10

    def test_single_component_degenerate(self):
        spec = random_spec(np.random.default_rng(7), 1, 5)
        s2, viid = check_gibbs_iid_bound(spec, lambda m: float(m == 1))
        assert s2 == 0.0 and viid == 0.0

    def test_equality_for_independence_label_chain(self):
        # Pseudo structure is irrelevant here: a product target makes
        # the Gibbs label chain i.i.d., so the bound is tight.
        G = 4
        pim = np.array([0.3, 0.7])
        within = np.random.default_rng(8).dirichlet(np.ones(G))
        prob = np.outer(pim, within)
        spec = FiniteMixtureSpec(2, np.arange(float(G)), prob, np.full((2, G), 1 / G))
        s2, viid = check_gibbs_iid_bound(spec, lambda m: float(m == 2))
        assert s2 == pytest.approx(viid, abs=1e-10)
        assert viid == pytest.approx(0.21, abs=1e-12)

    def test_violation_raised_for_rigged_variance(self, monkeypatch):
        import ccmix.oracle as oracle_mod

        spec = random_spec(np.random.default_rng(9), 2, 5)
        monkeypatch.setattr(
            oracle_mod,
            "exact_asymptotic_variance_alternating",
            lambda *a, **k: 0.0,
        )
        with pytest.raises(OrderingViolation):
            oracle_mod.check_gibbs_iid_bound(spec, lambda m: float(m == 1))

    def test_lag_covariances_nonnegative_for_gibbs(self, specs):
        # Reversible plus positive semidefinite sweep: every lag
        # covariance of a label function is nonnegative.
        for spec in specs:
            G = build_gibbs_index_kernel(spec)
            pim = index_marginal(spec)
            h = np.arange(1, spec.n + 1, dtype=float)
            cov = lag_covariances(G, pim, h, 200)
            assert np.min(cov) >= -1e-12

    def test_index_lag1_autocorrelation_toy_value(self):
        from ccmix.experiments import toy_model

        bundle = toy_model()
        grid = np.linspace(-4.0, 4.0, 2001)
        spec = spec_from_log_densities(
            2, grid, bundle.target.log_density, bundle.pseudo.log_density
        )
        rho = index_lag1_autocorrelation(spec)
        # Well-separated strata: the label chain is extremely sticky.
        assert rho == pytest.approx(0.9615, abs=0.0005)


class TestHelpers:
    def test_index_function_vector(self, specs):
        spec = specs[0]
        v = index_function_vector(spec, lambda m: 10.0 * m)
        assert v.shape == (spec.n_states,)
        assert v[0] == 10.0 and v[-1] == 10.0 * spec.n

    def test_index_marginal_sums_to_one(self, specs):
        for spec in specs:
            assert index_marginal(spec).sum() == pytest.approx(1.0, abs=1e-12)

    def test_save_load_round_trip(self, tmp_path, specs):
        for i, spec in enumerate(specs[:2]):
            path = tmp_path / f"spec{i}.tsv"
            save_spec(spec, path)
            back = load_spec(path)
            np.testing.assert_array_equal(back.grid, spec.grid)
            np.testing.assert_array_equal(back.prob, spec.prob)
            np.testing.assert_array_equal(back.pseudo, spec.pseudo)
            np.testing.assert_array_equal(back.proposal, spec.proposal)

    def test_save_load_without_proposal(self, tmp_path):
        spec = random_spec(np.random.default_rng(10), 2, 4, with_proposal=False)
        path = tmp_path / "spec.tsv"
        save_spec(spec, path)
        assert load_spec(path).proposal is None

    def test_load_rejects_missing_section(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("#grid\n0.0\t1.0\n")
        with pytest.raises(ValueError):
            load_spec(path)

    def test_spec_from_log_densities_normalizes(self):
        grid = np.linspace(-3, 3, 61)
        spec = spec_from_log_densities(
            2,
            grid,
            lambda m, z: -((z - (2 * m - 3)) ** 2),
            lambda j, u: -u * u,
            lambda l, u, z: -((z - u) ** 2),
        )
        assert spec.prob.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(spec.pseudo.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(spec.proposal.sum(axis=2), 1.0, atol=1e-12)


class TestMonteCarloBridge:
    """Empirical one-step transition frequencies of the samplers must
    match the exact kernel rows (chi-square at level 0.999)."""

    STEPS = 200_000

    def _empirical_row(self, spec, bundle, stepper, m0, g0):
        rng = np.random.default_rng(31415)
        counts = np.zeros(spec.n_states)
        state0 = State(m0, float(spec.grid[g0]))
        for _ in range(self.STEPS):
            new = stepper(bundle, state0, rng)
            g = int(np.searchsorted(spec.grid, new.z))
            counts[spec.state_index(new.m, g)] += 1
        return counts

    def test_fcc_matches_p3_row(self):
        spec = random_spec(np.random.default_rng(11), 2, 5)
        bundle = finite_bundle(spec)
        P3 = build_P3(spec)
        m0, g0 = 1, 2
        counts = self._empirical_row(
            spec,
            bundle,
            lambda b, s, r: fcc_step(b.target, b.pseudo, s, r),
            m0,
            g0,
        )
        row = P3.matrix[spec.state_index(m0, g0)]
        assert chi2_pvalue(counts, row) > 0.001

    def test_mcc_matches_p3_q3_row(self):
        spec = random_spec(np.random.default_rng(12), 2, 5)
        bundle = finite_bundle(spec)
        K = build_P3(spec).matrix @ build_Q3(spec).matrix
        m0, g0 = 2, 0
        counts = self._empirical_row(
            spec,
            bundle,
            lambda b, s, r: mcc_step(b.target, b.pseudo, b.proposal, s, r)[0],
            m0,
            g0,
        )
        row = K[spec.state_index(m0, g0)]
        assert chi2_pvalue(counts, row) > 0.001

    def test_gibbs_label_chain_matches_kernel(self):
        spec = random_spec(np.random.default_rng(14), 3, 5)
        bundle = finite_bundle(spec)
        G = build_gibbs_index_kernel(spec).matrix
        rng = np.random.default_rng(27182)
        # Start from the conditional pi*(z | m = 2) so the label draw
        # follows row 2 of the induced kernel exactly.
        cond = spec.prob[1] / spec.prob[1].sum()
        counts = np.zeros(spec.n)
        for _ in range(50_000):
            g = rng.choice(spec.grid_size, p=cond)
            new = gibbs_step(bundle.target, State(2, float(spec.grid[g])), rng)
            counts[new.m - 1] += 1
        assert chi2_pvalue(counts, G[1]) > 0.001
