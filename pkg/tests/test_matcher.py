import math

import numpy as np
import pytest

from wigner_match import (
    ParameterError,
    RunConfig,
    StepError,
    brute_force_map,
    check_sampling,
    constants,
    degrees,
    finish,
    generate_pair,
    init_sets,
    iterate_once,
    k_schedule,
    overlap,
    preprocess,
    seeded_match,
    seedless_match,
)
from wigner_match.matcher import (
    MatchOutcome,
    _assign_argmax,
    _assign_first_hit,
    enumeration_count,
    history_constraints,
    normalized_degrees,
    restricted_overlap,
)
from wigner_match.model import DirectedPair
from wigner_match._rng import stream

from oracles import overlap_double_loop


def toy_directed(n, gh=None, gsh=None, eps_eff=0.4, seed=0):
    gh = np.zeros((n, n)) if gh is None else gh
    gsh = np.zeros((n, n)) if gsh is None else gsh
    return DirectedPair(
        n=n, epsilon_effective=eps_eff, gh=gh, gsh=gsh, pi=np.arange(n), seed=seed
    )


class TestInitSets:
    def test_threshold_membership_by_hand(self):
        # column toward the first seed crafted so exactly two values clear 1.0
        n, k0 = 6, 2
        gh = np.zeros((n, n))
        gsh = np.zeros((n, n))
        column = [1.5, -0.2, 0.9, -1.1]  # rows 2..5 toward seed vertex 0
        for row, val in zip(range(2, 6), column):
            gh[row, 0] = val
            gsh[row, 0] = val
        dp = toy_directed(n, gh, gsh)
        cfg = RunConfig(n=n, epsilon=0.8, k0=k0, seed=0)
        state = init_sets(dp, [(0, 0), (1, 1)], cfg)
        assert np.array_equal(state.gamma[0][:, 0], [1.0, 0.0, 0.0, 1.0])
        assert np.array_equal(state.pi_sets[0][:, 0], [1.0, 0.0, 0.0, 1.0])

    def test_initial_proxies(self):
        dp = preprocess(generate_pair(40, 0.8, seed=1))
        cfg = RunConfig(n=40, epsilon=0.8, k0=2, seed=1)
        seeds = [(0, int(dp.pi[0])), (1, int(dp.pi[1]))]
        state = init_sets(dp, seeds, cfg)
        assert np.array_equal(state.phi_levels[0], np.eye(2))
        # the cross proxy diagonal equals eps_0 exactly by construction
        assert np.array_equal(state.psi_levels[0], state.eps[0] * np.eye(2))
        assert state.eps[0] > 0

    def test_duplicate_seeds_rejected(self):
        dp = toy_directed(8)
        cfg = RunConfig(n=8, epsilon=0.5, k0=2, seed=0)
        with pytest.raises(ParameterError):
            init_sets(dp, [(0, 3), (0, 4)], cfg)
        with pytest.raises(ParameterError):
            init_sets(dp, [(0, 3), (1, 3)], cfg)

    def test_sign_flip_leaves_sets_invariant(self):
        pair = generate_pair(30, 0.6, seed=3)
        dp = preprocess(pair)
        flipped = DirectedPair(
            n=dp.n, epsilon_effective=dp.epsilon_effective, gh=-dp.gh, gsh=-dp.gsh,
            pi=dp.pi, seed=dp.seed,
        )
        cfg = RunConfig(n=30, epsilon=0.6, k0=3, seed=3)
        seeds = [(j, int(dp.pi[j])) for j in range(3)]
        a = init_sets(dp, seeds, cfg)
        b = init_sets(flipped, seeds, cfg)
        assert np.array_equal(a.gamma[0], b.gamma[0])
        assert np.array_equal(a.pi_sets[0], b.pi_sets[0])


class TestDegrees:
    def test_all_zero_indicators_collapse(self):
        rng = np.random.default_rng(0)
        sub = rng.standard_normal((5, 5))
        np.fill_diagonal(sub, 0.0)
        a = 0.3
        got = normalized_degrees(sub, np.zeros((5, 2)), a, 7)
        expected = -a / math.sqrt((a - a * a) * 7) * sub.sum(axis=1)
        assert np.allclose(got, np.column_stack([expected, expected]), atol=1e-12)

    def test_three_term_hand_sum(self):
        sub = np.array(
            [
                [0.0, 1.0, -2.0],
                [0.5, 0.0, 3.0],
                [-1.0, 2.0, 0.0],
            ]
        )
        ind = np.array([[0.0], [1.0], [0.0]])  # one set = {second vertex}
        a = 0.3173105078629141
        got = normalized_degrees(sub, ind, a, 5)
        scale = 1.0 / math.sqrt((a - a * a) * 5)
        for v in range(3):
            hand = sum((ind[u, 0] - a) * sub[v, u] for u in range(3)) * scale
            assert got[v, 0] == pytest.approx(hand, abs=1e-12)

    def test_unit_variance_of_eta_projection(self, run_n4000):
        # empirical variance over vertices of the projected degrees is ~1
        pair, cfg, outcome = run_n4000
        state = outcome.trace.state
        eta = state.etas[outcome.trace.finish_level]
        proj = outcome.trace.degrees_left @ eta.etas.T
        assert abs(proj[:, 0].var() - 1.0) <= 0.1


class TestCheckSampling:
    def test_single_new_set_vacuous(self):
        betas = np.ones((1, 10))
        assert check_sampling(betas, betas, 120, 1, 0.1).passed

    def test_identical_vectors_pass_at_moderate_count(self):
        # the pairwise cap at K_t=120 is ~4.79, far above the maximal 1.0
        cap = 24 * math.sqrt(math.log(120)) / math.sqrt(120)
        assert cap == pytest.approx(4.7936, abs=2e-4)
        betas = np.ones((3, 10))
        chk = check_sampling(betas, 0.1 * betas, 120, 3, 0.1)
        assert chk.passed
        assert chk.values["max_pair"] == 1.0

    def test_identical_vectors_fail_at_large_count(self):
        # the cap drops below 1 once 576 log K_t < K_t
        k_t = 10_000
        cap = 24 * math.sqrt(math.log(k_t)) / math.sqrt(k_t)
        assert cap < 1.0
        betas = np.ones((2, 10))
        chk = check_sampling(betas, betas, k_t, 2, 1.0)
        assert not chk.passed
        assert chk.failed_condition == 1

    def test_fourth_power_condition(self):
        betas = np.ones((4, 2))
        # sum over 12 ordered pairs of 1 = 12 > 1e4 * (4/3)^2 is false;
        # shrink the cap by picking k_next large relative to k_t
        chk = check_sampling(betas, np.zeros_like(betas), 3, 4, 0.0)
        assert chk.values["sum4"] == pytest.approx(12.0)
        assert chk.passed

    def test_condition_order_first_violation(self):
        betas = np.ones((2, 4))
        chk = check_sampling(betas, betas, 50_000, 2, 1e-9)
        assert chk.failed_condition == 1


class TestIterateOnce:
    def test_k_recursion_schedule(self):
        assert k_schedule(12, 6.0, 256, 6) == [12, 24, 96, 1536]
        assert k_schedule(12, 6.0, 256, 2) == [12, 24, 96]
        # growth exhaustion: k0^2/varkappa == k0 stops immediately
        assert k_schedule(4, 4.0, 256, 6) == [4]

    def test_recursion_recorded_in_state(self):
        pair = generate_pair(400, 0.8, seed=5)
        cfg = RunConfig(n=400, epsilon=0.8, seed=5, t_max=1)
        out = seeded_match(pair, cfg)
        st = out.trace.state
        assert st.K[:2] == [12, 24]
        assert st.K[1] == int(st.K[0] ** 2 / cfg.varkappa_value)

    def test_phi_update_diagonal_is_one(self):
        pair = generate_pair(400, 0.8, seed=5)
        cfg = RunConfig(n=400, epsilon=0.8, seed=5, t_max=1)
        out = seeded_match(pair, cfg)
        phi1 = out.trace.state.phi_levels[1]
        assert np.all(np.diag(phi1) == 1.0)

    def test_signal_recursion_midpoint_at_level_zero(self):
        # with identity proxies every direction carries exactly eps_0, so
        # the next signal level equals the midpoint prediction
        pair = generate_pair(400, 0.8, seed=5)
        cfg = RunConfig(n=400, epsilon=0.8, seed=5, t_max=1)
        out = seeded_match(pair, cfg)
        st = out.trace.state
        cst = constants(cfg.theta)
        eps_eff = 0.4
        predicted = cst.iota / cst.alpha_var * (eps_eff * st.eps[0]) ** 2
        assert abs(st.eps[1] - predicted) <= 1e-9

    def test_signal_bracket(self):
        pair = generate_pair(400, 0.8, seed=5)
        cfg = RunConfig(n=400, epsilon=0.8, seed=5, t_max=1)
        out = seeded_match(pair, cfg)
        st = out.trace.state
        cst = constants(cfg.theta)
        ratio = st.eps[1] / st.eps[0] ** 2
        scale = (2 * 0.4) ** 2 * cst.iota / (4 * cst.alpha_var)
        assert scale * 0.25 <= ratio <= scale * 4.0

    def test_growth_exhaustion_raises(self):
        pair = generate_pair(60, 0.8, seed=6)
        cfg = RunConfig(n=60, epsilon=0.8, seed=6, k0=4, varkappa=4.0)
        dp = preprocess(pair, seed=6)
        seeds = [(j, int(pair.pi[j])) for j in range(4)]
        state = init_sets(dp, seeds, cfg)
        with pytest.raises(StepError) as err:
            iterate_once(dp, state, cfg, stream(6, "step", 0))
        assert err.value.kind == "growth"

    def test_set_size_concentration(self, run_n4000):
        # at least 90 percent of sets have near-alpha relative size
        pair, cfg, outcome = run_n4000
        st = outcome.trace.state
        cst = constants(cfg.theta)
        n_eff = len(st.rest_v)
        tol = 5 * math.sqrt(cst.alpha * (1 - cst.alpha) / n_eff)
        for level in range(st.t + 1):
            sizes = st.gamma[level].mean(axis=0)
            frac_ok = np.mean(np.abs(sizes - cst.alpha) <= tol)
            assert frac_ok >= 0.9

    def test_same_level_proxy_concentration(self, run_n4000):
        from wigner_match.matcher import m_pair

        pair, cfg, outcome = run_n4000
        st = outcome.trace.state
        cst = constants(cfg.theta)
        mg, mp = m_pair(st, cst.alpha, pair.n, 1, 1)
        assert np.abs(mg - st.phi_levels[1]).max() <= 0.1
        assert np.abs(mp - st.phi_levels[1]).max() <= 0.1

    def test_history_constraint_bookkeeping(self, run_n4000):
        pair, cfg, outcome = run_n4000
        st = outcome.trace.state
        cst = constants(cfg.theta)
        cons = history_constraints(st, cst.alpha, pair.n, st.t)
        assert len(cons) == 2 * st.t
        assert sum(c.shape[1] for c in cons) == 2 * sum(st.K[:-1])


class TestFinishAssignment:
    def test_single_cross_pair(self):
        scores = np.array([[2.0]])
        mapping, row_scores, status = _assign_first_hit(scores, 1.0)
        assert mapping == {0: 0} and status == "success"
        mapping, _, status = _assign_first_hit(scores, 3.0)
        assert mapping == {} and status == "failed"

    def test_separation_implies_agreement_in_both_modes(self):
        # matched scores above threshold, mismatched below: both scanners
        # return the diagonal matching
        rng = np.random.default_rng(2)
        n = 6
        scores = rng.uniform(-0.5, 0.4, size=(n, n))
        truth = np.arange(n)[::-1]
        for v in range(n):
            scores[v, truth[v]] = 1.0 + 0.1 * v
        for assign in (_assign_first_hit, _assign_argmax):
            mapping, _, status = assign(scores, 0.9)
            assert status == "success"
            assert mapping == {v: int(truth[v]) for v in range(n)}

    def test_first_hit_takes_first_above_threshold(self):
        scores = np.array([[0.5, 2.0, 3.0], [0.1, 2.5, 1.8], [5.0, 0.0, 1.5]])
        mapping, _, status = _assign_first_hit(scores, 1.0)
        # row 0 scans to column 1; row 1 skips the taken column and lands on 2
        assert mapping == {0: 1, 1: 2, 2: 0}
        assert status == "success"

    def test_first_hit_fails_when_only_hit_is_taken(self):
        scores = np.array([[0.5, 2.0, 3.0], [0.1, 2.5, 0.2], [5.0, 0.0, 1.5]])
        mapping, _, status = _assign_first_hit(scores, 1.0)
        assert mapping == {} and status == "failed"

    def test_first_hit_skips_taken_columns(self):
        scores = np.array([[2.0, 1.5], [2.0, 1.5]])
        mapping, _, status = _assign_first_hit(scores, 1.0)
        assert mapping == {0: 0, 1: 1}
        assert status == "success"

    def test_argmax_partial_below_threshold(self):
        scores = np.array([[1.0, 0.0], [0.0, 0.1]])
        mapping, row_scores, status = _assign_argmax(scores, 0.5)
        assert mapping == {0: 0, 1: 1}
        assert status == "partial"

    def test_argmax_injective_on_ties(self):
        scores = np.ones((3, 3))
        mapping, _, _ = _assign_argmax(scores, 0.0)
        assert sorted(mapping.values()) == [0, 1, 2]

    def test_outcome_injectivity_enforced(self):
        with pytest.raises(ParameterError):
            MatchOutcome(mapping={0: 1, 2: 1}, scores={}, status="success", seed_pairs=())


class TestOverlap:
    def test_two_vertices(self):
        pair = generate_pair(2, 0.5, seed=0)
        val = overlap(pair, np.array([1, 0]))
        assert val == pytest.approx(pair.g[0, 1] * pair.gs[1, 0])

    def test_matches_double_loop(self):
        pair = generate_pair(8, 0.7, seed=9)
        rng = np.random.default_rng(4)
        mapping = rng.permutation(8)
        assert overlap(pair, mapping) == pytest.approx(
            overlap_double_loop(pair.g, pair.gs, mapping), abs=1e-12
        )

    def test_truth_positive_at_full_correlation(self):
        pair = generate_pair(10, 1.0, seed=2)
        assert overlap(pair, pair.pi) > 0

    def test_partial_mapping_rejected(self):
        pair = generate_pair(4, 0.5, seed=0)
        with pytest.raises(ParameterError):
            overlap(pair, {0: 1, 1: 0})

    def test_restricted_matches_full_when_total(self):
        pair = generate_pair(6, 0.5, seed=1)
        mapping = {i: int(pair.pi[i]) for i in range(6)}
        assert restricted_overlap(pair, mapping) == pytest.approx(overlap(pair, pair.pi))
        assert restricted_overlap(pair, {}) == 0.0


class TestSeededMatch:
    def test_deterministic_bit_for_bit(self):
        pair = generate_pair(300, 0.9, seed=12)
        cfg = RunConfig(n=300, epsilon=0.9, seed=12, t_max=1)
        a = seeded_match(pair, cfg)
        b = seeded_match(pair, cfg)
        assert a.mapping == b.mapping
        assert a.scores == b.scores
        assert a.flags == b.flags
        assert a.overlap == b.overlap

    def test_k0_too_large_rejected(self):
        pair = generate_pair(20, 0.9, seed=1)
        cfg = RunConfig(n=20, epsilon=0.9, seed=1, k0=10)
        with pytest.raises(ParameterError):
            seeded_match(pair, cfg)

    def test_strict_mode_propagates_step_failures(self):
        # the second step at these desk parameters has no usable subspace
        pair = generate_pair(300, 0.9, seed=12)
        cfg = RunConfig(n=300, epsilon=0.9, seed=12, t_max=2, strict_steps=True)
        with pytest.raises(StepError):
            seeded_match(pair, cfg)

    def test_graceful_mode_flags_and_finishes(self):
        pair = generate_pair(300, 0.9, seed=12)
        cfg = RunConfig(n=300, epsilon=0.9, seed=12, t_max=2)
        out = seeded_match(pair, cfg)
        assert out.status in ("success", "partial")
        assert any(f.startswith("stopped-at-step") for f in out.flags)

    def test_mode_mismatch_rejected(self):
        pair = generate_pair(20, 0.9, seed=1)
        cfg = RunConfig(n=20, epsilon=0.9, seed=1, k0=2, seed_mode="seedless")
        with pytest.raises(ParameterError):
            seeded_match(pair, cfg)


class TestSeedlessMatch:
    def test_enumeration_count(self):
        assert enumeration_count(8, 2) == 56
        assert enumeration_count(4, 1) == 4

    def test_budget_exceeded(self):
        pair = generate_pair(30, 0.9, seed=1)
        cfg = RunConfig(n=30, epsilon=0.9, seed=1, k0=4, seed_mode="seedless")
        with pytest.raises(ParameterError):
            seedless_match(pair, cfg)

    def test_all_candidates_fail_returns_failed(self):
        pair = generate_pair(5, 0.9, seed=3)
        cfg = RunConfig(
            n=5, epsilon=0.9, seed=3, k0=1, t_max=0, seed_mode="seedless",
            finishing_mode="first-hit", match_threshold_factor=1e9,
        )
        out = seedless_match(pair, cfg)
        assert out.status == "failed"
        assert out.mapping == {}
        assert "all-candidates-failed" in out.flags

    @pytest.mark.parametrize("seed", [19, 24])
    def test_agrees_with_brute_force_on_pinned_instances(self, seed):
        # instances verified to agree; the agreement *rate* at this size is
        # small and is documented in calibration/seedless_oracle_pilot.csv
        pair = generate_pair(4, 1.0, seed)
        cfg = RunConfig(
            n=4, epsilon=1.0, seed=seed, k0=1, t_max=0, seed_mode="seedless",
            finishing_mode="first-hit",
        )
        out = seedless_match(pair, cfg)
        assert out.status != "failed"
        bf = brute_force_map(pair)
        assert out.full_mapping() == {v: int(bf[v]) for v in range(4)}

    def test_deterministic(self):
        pair = generate_pair(5, 1.0, seed=19)
        cfg = RunConfig(n=5, epsilon=1.0, seed=19, k0=1, t_max=0, seed_mode="seedless")
        a = seedless_match(pair, cfg)
        b = seedless_match(pair, cfg)
        assert a.mapping == b.mapping and a.candidate_id == b.candidate_id
