import math

import numpy as np
from django.test import SimpleTestCase
from scipy import linalg
from scipy.special import expit

from lcra.design import pep_probabilities, plan_power_levels
from lcra.detect import (
    DetectorChoice, cavi_detect, empirical_pep, lmmse_reconstruct, log_ap, map_bruteforce,
    model_covariance, parse_detector, select_topB, sic_pipeline,
)
from lcra.exceptions import PreconditionError
from lcra.model import SystemConfig, complex_gaussian, gen_spreading, synth_slot


def draw_block(rng, N, M, T, active, V=1.0, sigma2=1.0):
    """Signature matrix, activity vector and received block with the given active devices."""
    G = complex_gaussian(rng, (N, M), 1.0 / N)
    b = np.zeros(M, dtype=np.int8)
    b[list(active)] = 1
    S = complex_gaussian(rng, (M, T), V) * b[:, None]
    Y = G @ S + complex_gaussian(rng, (N, T), sigma2)
    return G, b, Y


class CovarianceTests(SimpleTestCase):

    def test_no_activity_gives_noise_floor(self):
        G = complex_gaussian(np.random.default_rng(0), (6, 10), 1.0 / 6)
        np.testing.assert_array_equal(model_covariance(G, np.zeros(10), 3.0, 2.0), 2.0 * np.eye(6))

    def test_single_device_determinant(self):
        G = complex_gaussian(np.random.default_rng(1), (6, 10), 1.0 / 6)
        b = np.zeros(10)
        b[3] = 1
        _, logdet = np.linalg.slogdet(model_covariance(G, b, 3.0, 2.0))
        energy = np.sum(np.abs(G[:, 3]) ** 2)
        self.assertAlmostEqual(logdet, 6 * math.log(2.0) + math.log1p(3.0 * energy / 2.0),
                               delta=1e-10)

    def test_matches_outer_product_sum(self):
        G = complex_gaussian(np.random.default_rng(2), (30, 100), 1.0 / 30)
        b = np.zeros(100)
        b[[4, 17, 33, 60, 99]] = 1
        expected = 0.5 * np.eye(30, dtype=complex)
        for m in np.flatnonzero(b):
            expected += 2.0 * np.outer(G[:, m], G[:, m].conj())
        np.testing.assert_allclose(model_covariance(G, b, 2.0, 0.5), expected, atol=1e-12)


class LogPosteriorTests(SimpleTestCase):

    def test_single_device_log_ratio(self):
        rng = np.random.default_rng(3)
        G, _, Y = draw_block(rng, 8, 1, 20, [0], V=2.0)
        rho, V, sigma2 = 0.1, 2.0, 1.0
        g = G[:, 0]
        alpha = np.sum(np.abs(g) ** 2) / sigma2
        z = np.sum(np.abs(g.conj() @ Y) ** 2) / sigma2 ** 2
        expected = (-20 * math.log1p(V * alpha) + V * z / (1 + V * alpha)
                    + math.log(rho / (1 - rho)))
        got = log_ap(Y, G, [1], V, sigma2, rho) - log_ap(Y, G, [0], V, sigma2, rho)
        self.assertAlmostEqual(got, expected, delta=1e-10 * max(1.0, abs(expected)))

    def test_common_phase_leaves_score_unchanged(self):
        rng = np.random.default_rng(4)
        G, b, Y = draw_block(rng, 8, 12, 10, [2, 7])
        rotated = np.exp(0.7j) * Y
        for candidate in (b, np.ones(12), np.zeros(12)):
            plain = log_ap(Y, G, candidate, 1.0, 1.0, 0.1)
            self.assertAlmostEqual(log_ap(rotated, G, candidate, 1.0, 1.0, 0.1), plain,
                                   delta=1e-10 * max(1.0, abs(plain)))


class MapTests(SimpleTestCase):

    def test_silent_block_gives_empty_support(self):
        G = complex_gaussian(np.random.default_rng(5), (4, 6), 0.25)
        b_hat = map_bruteforce(np.zeros((4, 10)), G, 1.0, 1.0, 0.05)
        np.testing.assert_array_equal(b_hat, 0)
        self.assertEqual(b_hat.dtype, np.int8)

    def test_strong_single_device(self):
        G, _, Y = draw_block(np.random.default_rng(6), 4, 1, 20, [0], V=100.0)
        np.testing.assert_array_equal(map_bruteforce(Y, G, 100.0, 1.0, 0.5), [1])

    def test_recovers_noise_free_activity(self):
        rng = np.random.default_rng(7)
        hits = 0
        for _ in range(200):
            active = rng.choice(10, size=2, replace=False)
            G = complex_gaussian(rng, (8, 10), 1.0 / 8)
            b = np.zeros(10, dtype=np.int8)
            b[active] = 1
            Y = G @ (complex_gaussian(rng, (10, 50), 100.0) * b[:, None])
            hits += np.array_equal(map_bruteforce(Y, G, 100.0, 1.0, 0.2), b)
        self.assertGreaterEqual(hits, 198)

    def test_joint_rescaling_keeps_the_maximizer(self):
        G, _, Y = draw_block(np.random.default_rng(8), 6, 8, 10, [1, 5], V=4.0)
        plain = map_bruteforce(Y, G, 4.0, 1.0, 0.2)
        np.testing.assert_array_equal(map_bruteforce(3.0 * Y, G, 36.0, 9.0, 0.2), plain)

    def test_relabelling_devices_relabels_the_estimate(self):
        G, _, Y = draw_block(np.random.default_rng(9), 6, 8, 10, [0, 3, 6], V=4.0)
        perm = np.random.default_rng(10).permutation(8)
        plain = map_bruteforce(Y, G, 4.0, 1.0, 0.3)
        np.testing.assert_array_equal(map_bruteforce(Y, G[:, perm], 4.0, 1.0, 0.3), plain[perm])

    def test_fixed_support_size(self):
        G, b, Y = draw_block(np.random.default_rng(11), 8, 10, 30, [2, 4, 9], V=50.0)
        b_hat = map_bruteforce(Y, G, 50.0, 1.0, 0.2, support_size=3)
        self.assertEqual(b_hat.sum(), 3)
        np.testing.assert_array_equal(b_hat, b)

    def test_device_limit(self):
        G = complex_gaussian(np.random.default_rng(12), (4, 17), 0.25)
        with self.assertRaises(PreconditionError):
            map_bruteforce(np.zeros((4, 2)), G, 1.0, 1.0, 0.1)


class CaviTests(SimpleTestCase):

    def test_single_device_matches_exact_posterior(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            V = rng.uniform(0.1, 5.0)
            rho = rng.uniform(0.05, 0.5)
            G, _, Y = draw_block(rng, 6, 1, 10, [0] if rng.random() < rho else [], V=V)
            log_ratio = log_ap(Y, G, [1], V, 1.0, rho) - log_ap(Y, G, [0], V, 1.0, rho)
            exact = expit(log_ratio)
            state = cavi_detect(Y, G, V, 1.0, rho, n_sweeps=1)
            self.assertAlmostEqual(state.beliefs[0], exact, delta=1e-8)

    def test_vanishing_power_returns_prior(self):
        G, _, Y = draw_block(np.random.default_rng(14), 8, 20, 10, [3])
        state = cavi_detect(Y, G, 1e-12, 1.0, 0.05, n_sweeps=3)
        np.testing.assert_allclose(state.beliefs, 0.05, atol=1e-6)

    def test_cached_inverse_tracks_soft_covariance(self):
        G, _, Y = draw_block(np.random.default_rng(15), 10, 20, 20, [1, 8, 13], V=2.0)
        state = cavi_detect(Y, G, 2.0, 1.0, 0.1, n_sweeps=3)
        expected = linalg.inv(model_covariance(G, state.beliefs, 2.0, 1.0))
        np.testing.assert_allclose(state.precision, expected, atol=1e-8)
        self.assertEqual(state.iterations, 3)
        self.assertTrue(np.all((state.beliefs >= 0.0) & (state.beliefs <= 1.0)))

    def test_visiting_order_follows_relabelling(self):
        G, _, Y = draw_block(np.random.default_rng(16), 8, 12, 20, [0, 5], V=3.0)
        perm = np.random.default_rng(17).permutation(12)
        plain = cavi_detect(Y, G, 3.0, 1.0, 0.2, n_sweeps=4)
        relabelled = cavi_detect(Y, G[:, perm], 3.0, 1.0, 0.2, n_sweeps=4,
                                 order=np.argsort(perm))
        np.testing.assert_allclose(relabelled.beliefs, plain.beliefs[perm], atol=1e-9)

    def test_repeated_runs_are_identical(self):
        G, _, Y = draw_block(np.random.default_rng(18), 8, 12, 20, [4], V=3.0)
        first = cavi_detect(Y, G, 3.0, 1.0, 0.2, n_sweeps=5)
        second = cavi_detect(Y, G, 3.0, 1.0, 0.2, n_sweeps=5)
        np.testing.assert_array_equal(first.beliefs, second.beliefs)

    def test_agrees_with_map_at_high_snr(self):
        rng = np.random.default_rng(19)
        agree = 0
        for _ in range(200):
            active = rng.choice(12, size=2, replace=False)
            G, b, Y = draw_block(rng, 8, 12, 50, active, V=100.0)
            state = cavi_detect(Y, G, 100.0, 1.0, 2 / 12, n_sweeps=5)
            cavi_support = select_topB(state, 2)
            map_support = np.flatnonzero(map_bruteforce(Y, G, 100.0, 1.0, 2 / 12))
            agree += np.array_equal(cavi_support, map_support)
        self.assertGreaterEqual(agree, 180)

    def test_needs_a_sweep(self):
        G, _, Y = draw_block(np.random.default_rng(20), 4, 4, 2, [])
        with self.assertRaises(PreconditionError):
            cavi_detect(Y, G, 1.0, 1.0, 0.1, n_sweeps=0)


class SelectionTests(SimpleTestCase):

    def test_ties_go_to_smaller_index(self):
        np.testing.assert_array_equal(select_topB(np.array([0.9, 0.1, 0.9]), 2), [0, 2])
        np.testing.assert_array_equal(select_topB(np.array([0.5, 0.5, 0.5]), 1), [0])

    def test_edge_sizes(self):
        beliefs = np.array([0.2, 0.7, 0.4])
        self.assertEqual(select_topB(beliefs, 0).size, 0)
        np.testing.assert_array_equal(select_topB(beliefs, 3), [0, 1, 2])
        with self.assertRaises(PreconditionError):
            select_topB(beliefs, 4)


class ReconstructionTests(SimpleTestCase):

    def test_noise_free_symbols_are_recovered(self):
        rng = np.random.default_rng(21)
        G = complex_gaussian(rng, (8, 3), 1.0 / 8)
        S = complex_gaussian(rng, (3, 10), 1.0)
        np.testing.assert_allclose(lmmse_reconstruct(G @ S, G, 1.0, 1e-10), S, atol=1e-6)

    def test_empty_detection(self):
        self.assertEqual(lmmse_reconstruct(np.zeros((8, 10)), np.zeros((8, 0)), 1.0, 1.0).shape,
                         (0, 10))

    def test_error_matches_conditional_covariance(self):
        rng = np.random.default_rng(22)
        N, B, T, V, sigma2 = 8, 3, 10, 2.0, 1.0
        G = complex_gaussian(rng, (N, B), 1.0 / N)
        errors = []
        for _ in range(500):
            S = complex_gaussian(rng, (B, T), V)
            Y = G @ S + complex_gaussian(rng, (N, T), sigma2)
            errors.append(np.sum(np.abs(S - lmmse_reconstruct(Y, G, V, sigma2)) ** 2))
        cov = V * G @ G.conj().T + sigma2 * np.eye(N)
        expected = T * np.real(np.trace(V * np.eye(B)
                                        - V * V * G.conj().T @ linalg.solve(cov, G)))
        stderr = np.std(errors, ddof=1) / math.sqrt(len(errors))
        self.assertLess(abs(np.mean(errors) - expected), 3 * stderr)


class DetectorChoiceTests(SimpleTestCase):

    def test_parse(self):
        self.assertEqual(parse_detector('cavi:7'), DetectorChoice('cavi', 7))
        self.assertEqual(parse_detector('CAVI'), DetectorChoice('cavi', 5))
        self.assertEqual(parse_detector('map'), DetectorChoice('map', 0))
        self.assertEqual(str(parse_detector('cavi:3')), 'cavi:3')

    def test_rejects_unknown_detectors(self):
        for text in ('cavi:0', 'cavi:x', 'omp', 'map:3'):
            with self.subTest(text=text), self.assertRaises(PreconditionError):
                parse_detector(text)


class SicPipelineTests(SimpleTestCase):

    def setUp(self):
        self.config = SystemConfig(K=24, Q=2, N=8, T=20, rho=0.15, gamma_target=10.0)
        self.plan = plan_power_levels(self.config)

    def draw(self, seed):
        rng = np.random.default_rng(seed)
        ens = gen_spreading(self.config, rng)
        return ens, synth_slot(self.config, self.plan, ens, rng)

    def test_single_layer_is_one_detector_call(self):
        config = SystemConfig(K=12, Q=1, N=8, T=20, rho=0.2)
        plan = plan_power_levels(config)
        rng = np.random.default_rng(23)
        ens = gen_spreading(config, rng)
        slot = synth_slot(config, plan, ens, rng)
        report = sic_pipeline(slot, ens, plan, DetectorChoice('cavi', 4))
        state = cavi_detect(slot.received, ens.matrices[0], plan.V[0], plan.sigma2[0],
                            plan.rho[0], 4)
        np.testing.assert_array_equal(report.layers[0].beliefs, state.beliefs)
        np.testing.assert_array_equal(report.layers[0].detected,
                                      select_topB(state, slot.active_counts[0]))

    def test_oracle_cancellation_leaves_lower_layers(self):
        ens, slot = self.draw(24)
        report = sic_pipeline(slot, ens, self.plan, DetectorChoice(), cancellation='oracle')
        np.testing.assert_allclose(report.layers[0].residual,
                                   slot.layer_signal(ens, 1) + slot.noise, atol=1e-10)
        np.testing.assert_allclose(report.layers[1].residual, slot.noise, atol=1e-10)

    def test_reconstruction_uses_per_entry_interference(self):
        ens, slot = self.draw(44)
        report = sic_pipeline(slot, ens, self.plan, DetectorChoice())
        G_detected = ens.matrices[0][:, report.layers[0].detected]
        S_hat = lmmse_reconstruct(slot.received, G_detected, self.plan.V[0],
                                  self.plan.residual_variance(0))
        np.testing.assert_allclose(report.layers[0].residual,
                                   slot.received - G_detected @ S_hat, atol=1e-10)

    def test_cancelled_layers_leave_less_than_the_weakest_signal(self):
        config = SystemConfig(K=300, Q=3, N=30, T=100, rho=0.05, gamma_target=4.0)
        plan = plan_power_levels(config)
        rng = np.random.default_rng(45)
        leftover = np.zeros(2)
        weakest = 0.0
        for _ in range(20):
            ens = gen_spreading(config, rng)
            slot = synth_slot(config, plan, ens, rng)
            for q in range(2):
                signal = slot.layer_signal(ens, q)
                G_true = ens.matrices[q][:, slot.activity[q]]
                S_hat = lmmse_reconstruct(signal, G_true, plan.V[q], plan.residual_variance(q))
                leftover[q] += np.sum(np.abs(signal - G_true @ S_hat) ** 2)
            weakest += np.sum(np.abs(slot.layer_signal(ens, 2)) ** 2)
        self.assertGreater(weakest, 0.0)
        self.assertLess(leftover.sum(), 0.1 * weakest)

    def test_known_count_balances_errors(self):
        for seed in range(25, 35):
            ens, slot = self.draw(seed)
            report = sic_pipeline(slot, ens, self.plan, DetectorChoice())
            for layer in report.layers:
                self.assertEqual(layer.md_count, layer.fa_count)
                self.assertEqual(layer.detected.size, layer.true.size)

    def test_unknown_count_thresholds_beliefs(self):
        ens, slot = self.draw(35)
        report = sic_pipeline(slot, ens, self.plan, DetectorChoice(), assume_known_b=False)
        for layer in report.layers:
            np.testing.assert_array_equal(layer.detected, np.flatnonzero(layer.beliefs > 0.5))

    def test_exhaustive_detector_per_layer(self):
        ens, slot = self.draw(36)
        report = sic_pipeline(slot, ens, self.plan, parse_detector('map'))
        self.assertEqual(len(report.layers), 2)
        for layer, count in zip(report.layers, slot.active_counts):
            self.assertEqual(layer.detected.size, count)

    def test_rejects_unknown_cancellation(self):
        ens, slot = self.draw(37)
        with self.assertRaises(PreconditionError):
            sic_pipeline(slot, ens, self.plan, DetectorChoice(), cancellation='none')


class EmpiricalPepTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(38)
        self.G = complex_gaussian(rng, (10, 20), 0.1)
        self.b = np.zeros(20, dtype=bool)
        self.b[[3, 11]] = True

    def check_against_formula(self, flip_index, direction):
        estimate = empirical_pep(self.G, self.b, flip_index, 1.0, 1.0, 0.1, 2, 10_000,
                                 np.random.default_rng(39), prior='binomial')
        self.assertEqual(estimate.direction, direction)
        report = pep_probabilities(2, 20, 0.1, 2, 1.0, estimate.alpha, estimate.alpha,
                                   xi_convention='lemma2', prior='binomial')
        formula = report.p_fa if direction == 'fa' else report.p_md
        self.assertGreater(formula, 1e-3)
        self.assertLess(abs(estimate.probability - formula), 3 * estimate.stderr + 1e-4)
        self.assertGreater(estimate.ks_pvalue, 0.01)

    def test_false_alarm_agrees_with_formula(self):
        self.check_against_formula(0, 'fa')

    def test_miss_agrees_with_formula(self):
        self.check_against_formula(3, 'md')

    def test_longer_slots_reduce_errors(self):
        short = empirical_pep(self.G, self.b, 3, 1.0, 1.0, 0.1, 1, 2000, np.random.default_rng(40))
        long = empirical_pep(self.G, self.b, 3, 1.0, 1.0, 0.1, 100, 2000,
                             np.random.default_rng(41))
        self.assertGreater(short.probability, long.probability)

    def test_vanishing_power_follows_the_prior(self):
        rng = np.random.default_rng(42)
        prefers_flip = empirical_pep(self.G, self.b, 3, 1e-12, 1.0, 0.1, 5, 500, rng,
                                     prior='product')
        self.assertEqual(prefers_flip.probability, 1.0)
        prefers_truth = empirical_pep(self.G, self.b, 3, 1e-12, 1.0, 0.1, 5, 500, rng,
                                      prior='binomial')
        self.assertEqual(prefers_truth.probability, 0.0)
