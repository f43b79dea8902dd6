import numpy as np
import pytest

from mmi_lab import (CoincidenceDistribution, coincidence_classical,
                     coincidence_mixture, coincidence_quantum,
                     detection_prob_first, detection_prob_second,
                     fit_visibility, fock_oracle,
                     project_first_detection, random_unitary,
                     renormalization_magnitude, similarity)
from mmi_lab.core import (DegenerateDistributionError, ModeIndexError,
                          TwoPhotonState, UnreachableHeraldError)


class TestFirstDetection:
    def test_chip_example(self, chip):
        # 0.5 * (0.28^2 + 0.41^2)
        assert detection_prob_first(chip, 0, 1, 0) == pytest.approx(0.12325, abs=1e-12)

    def test_identity_straight_through(self, identity4):
        assert detection_prob_first(identity4, 0, 1, 0) == pytest.approx(0.5)

    def test_identity_unpopulated_mode(self, identity4):
        assert detection_prob_first(identity4, 0, 1, 2) == 0.0

    def test_unitary_normalisation(self, rng):
        u = random_unitary(4, rng)
        total = sum(detection_prob_first(u, 0, 2, k) for k in range(4))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_rejects_same_input(self, chip):
        with pytest.raises(ModeIndexError):
            detection_prob_first(chip, 1, 1, 0)

    def test_rejects_out_of_range(self, chip):
        with pytest.raises(ModeIndexError):
            detection_prob_first(chip, 0, 1, 4)


class TestHeraldedState:
    def test_identity_removes_detected_photon(self, identity4):
        state = project_first_detection(identity4, 0, 1, 0)
        assert state.amp_on_j == pytest.approx(1.0)
        assert state.amp_on_i == pytest.approx(0.0)
        assert state.mode_j == 1

    def test_splitter_symmetric_superposition(self, splitter):
        state = project_first_detection(splitter, 0, 1, 0)
        assert abs(state.amp_on_j) == pytest.approx(1 / np.sqrt(2))
        assert abs(state.amp_on_i) == pytest.approx(1 / np.sqrt(2))

    def test_chip_herald_output_3(self, chip):
        # amplitudes M[0,2] and M[1,2] normalised; values evaluated from the
        # matrix itself
        state = project_first_detection(chip, 0, 1, 2)
        norm = np.sqrt(0.45 ** 2 + 0.41 ** 2)
        assert state.amp_on_j == pytest.approx(0.45 / norm, abs=1e-12)
        assert abs(state.amp_on_i) == pytest.approx(0.41 / norm, abs=1e-12)
        assert np.angle(state.amp_on_i) == pytest.approx(3.86 - 2 * np.pi, abs=1e-12)

    def test_unreachable_herald(self, identity4):
        with pytest.raises(UnreachableHeraldError):
            project_first_detection(identity4, 0, 1, 3)


class TestSecondDetection:
    def test_identity_forces_partner_mode(self, identity4):
        state = project_first_detection(identity4, 0, 1, 0)
        probs = [detection_prob_second(state, identity4, l) for l in range(4)]
        assert probs[1] == pytest.approx(1.0)
        assert sum(probs) == pytest.approx(1.0)

    def test_splitter_coalescence(self, splitter):
        state = project_first_detection(splitter, 0, 1, 0)
        assert detection_prob_second(state, splitter, 0) == pytest.approx(1.0)
        assert detection_prob_second(state, splitter, 1) == pytest.approx(0.0, abs=1e-12)

    def test_unitary_completeness(self, rng):
        for n in (2, 3, 4):
            u = random_unitary(n, rng)
            state = project_first_detection(u, 0, n - 1, 1)
            total = sum(detection_prob_second(state, u, l) for l in range(n))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_chip_completeness_within_unitarity_deviation(self, chip):
        state = project_first_detection(chip, 0, 1, 0)
        total = sum(detection_prob_second(state, chip, l) for l in range(4))
        assert abs(total - 1.0) <= chip.unitarity_deviation()


class TestCoincidenceTables:
    def test_splitter_hom_dip(self, splitter):
        q = coincidence_quantum(splitter, 0, 1, renormalized=False)
        assert q[(0, 1)] == pytest.approx(0.0, abs=1e-15)
        assert q[(0, 0)] == pytest.approx(0.5)
        assert q[(1, 1)] == pytest.approx(0.5)

    def test_identity_single_outcome(self, identity4):
        q = coincidence_quantum(identity4, 0, 1, renormalized=False)
        assert q[(0, 1)] == pytest.approx(1.0)
        assert q.total() == pytest.approx(1.0)

    def test_chip_same_detector_entry(self, chip):
        q = coincidence_quantum(chip, 0, 1, renormalized=False)
        assert q[(0, 0)] == pytest.approx(2 * (0.28 * 0.41) ** 2, abs=1e-12)

    def test_splitter_classical(self, splitter):
        c = coincidence_classical(splitter, 0, 1, renormalized=False)
        assert c[(0, 1)] == pytest.approx(0.5)
        assert c[(0, 0)] == pytest.approx(0.25)
        assert c[(1, 1)] == pytest.approx(0.25)

    def test_identity_classical(self, identity4):
        c = coincidence_classical(identity4, 0, 1, renormalized=False)
        assert c[(0, 1)] == pytest.approx(1.0)

    def test_chip_same_detector_ratio_is_exactly_two(self, chip):
        q = coincidence_quantum(chip, 0, 1, renormalized=False)
        c = coincidence_classical(chip, 0, 1, renormalized=False)
        assert q[(0, 0)] / c[(0, 0)] == 2.0

    def test_same_detector_ratio_all_pairs_and_random(self, chip, rng):
        mats = [chip] + [random_unitary(4, rng) for _ in range(5)]
        for mat in mats:
            for i in range(4):
                for j in range(i + 1, 4):
                    q = coincidence_quantum(mat, i, j, renormalized=False)
                    c = coincidence_classical(mat, i, j, renormalized=False)
                    for k in range(4):
                        if c[(k, k)] > 0:
                            assert q[(k, k)] / c[(k, k)] == 2.0

    def test_unitary_tables_sum_to_one(self, rng):
        for n in (2, 3, 4):
            u = random_unitary(n, rng)
            q = coincidence_quantum(u, 0, 1, renormalized=False)
            c = coincidence_classical(u, 0, 1, renormalized=False)
            assert q.total() == pytest.approx(1.0, abs=1e-12)
            assert c.total() == pytest.approx(1.0, abs=1e-12)

    def test_hom_dip_for_phased_balanced_splitters(self, rng):
        # any balanced 2x2 unitary suppresses cross coincidences exactly
        from mmi_lab import TransferMatrix
        for _ in range(20):
            a, b = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
            bal = TransferMatrix(np.array([[a, b], [np.conj(b), -np.conj(a)]]) / np.sqrt(2))
            q = coincidence_quantum(bal, 0, 1, renormalized=False)
            assert q[(0, 1)] == pytest.approx(0.0, abs=1e-12)

    def test_renormalization_magnitude(self, chip):
        # non-unitarity of the measured matrix: average correction ~1.9%
        assert renormalization_magnitude(chip) == pytest.approx(0.019, abs=0.005)

    def test_renormalized_tables_sum_to_one(self, chip):
        q = coincidence_quantum(chip, 0, 1, renormalized=True)
        assert q.total() == pytest.approx(1.0, abs=1e-12)
        assert q.renormalized

    def test_degenerate_distribution_raises(self):
        from mmi_lab import TransferMatrix
        m = TransferMatrix(np.array([[0, 0, 1], [0, 0, 0], [0, 1, 0]], dtype=complex))
        with pytest.raises(DegenerateDistributionError):
            coincidence_quantum(m, 0, 1, renormalized=True)


class TestMixture:
    def test_endpoints(self, chip):
        q = coincidence_quantum(chip, 0, 1)
        c = coincidence_classical(chip, 0, 1)
        r1 = coincidence_mixture(chip, 0, 1, 1.0)
        r0 = coincidence_mixture(chip, 0, 1, 0.0)
        assert np.allclose(r1.values, q.values)
        assert np.allclose(r0.values, c.values)

    def test_interior_point(self, chip):
        v = 0.708
        q = coincidence_quantum(chip, 0, 1)
        c = coincidence_classical(chip, 0, 1)
        r = coincidence_mixture(chip, 0, 1, v)
        assert np.allclose(r.values, v * q.values + (1 - v) * c.values)

    def test_out_of_range(self, chip):
        with pytest.raises(ValueError):
            coincidence_mixture(chip, 0, 1, 1.2)


class TestFockOracle:
    def test_identity_matches_closed_form(self, identity4):
        q = coincidence_quantum(identity4, 0, 1, renormalized=False)
        o = fock_oracle(identity4, 0, 1)
        assert np.abs(o.values - q.values).max() < 1e-15

    def test_random_unitaries_match_both_forms(self, rng):
        for n in (2, 3, 4):
            for _ in range(20):
                u = random_unitary(n, rng)
                for i in range(n):
                    for j in range(i + 1, n):
                        q = coincidence_quantum(u, i, j, renormalized=False)
                        c = coincidence_classical(u, i, j, renormalized=False)
                        assert np.abs(fock_oracle(u, i, j).values - q.values).max() <= 1e-12
                        assert np.abs(fock_oracle(u, i, j, True).values - c.values).max() <= 1e-12

    def test_splitter_distinguishable(self, splitter):
        c = coincidence_classical(splitter, 0, 1, renormalized=False)
        o = fock_oracle(splitter, 0, 1, distinguishable=True)
        assert np.abs(o.values - c.values).max() < 1e-15

    def test_non_unitary_matrix_pre_normalisation(self, chip):
        q = coincidence_quantum(chip, 0, 1, renormalized=False)
        assert np.abs(fock_oracle(chip, 0, 1).values - q.values).max() <= 1e-12


class TestTwoPhotonState:
    def test_normalised_after_unitary_evolution(self, rng):
        u = random_unitary(3, rng)
        state = TwoPhotonState.from_input_pair(3, 0, 2).evolve(u)
        assert state.norm() == pytest.approx(1.0, abs=1e-12)

    def test_superposition_evolution_is_linear(self, rng):
        u = random_unitary(3, rng)
        a = TwoPhotonState.from_input_pair(3, 0, 1)
        b = TwoPhotonState.from_input_pair(3, 1, 2)
        combo = TwoPhotonState(3, (a.amplitudes + b.amplitudes) / np.sqrt(2))
        lhs = combo.evolve(u).amplitudes
        rhs = (a.evolve(u).amplitudes + b.evolve(u).amplitudes) / np.sqrt(2)
        assert np.allclose(lhs, rhs, atol=1e-14)

    def test_rejects_single_mode_pair(self):
        with pytest.raises(ModeIndexError):
            TwoPhotonState.from_input_pair(4, 2, 2)


class TestVisibilityFit:
    def test_exact_quantum_counts(self, chip):
        q = coincidence_quantum(chip, 0, 1)
        meas = CoincidenceDistribution(4, q.values * 5000)
        v, s = fit_visibility(meas, chip, 0, 1)
        assert v == pytest.approx(1.0)
        assert s == pytest.approx(1.0, abs=1e-9)

    def test_exact_classical_counts(self, chip):
        c = coincidence_classical(chip, 0, 1)
        meas = CoincidenceDistribution(4, c.values * 5000)
        v, s = fit_visibility(meas, chip, 0, 1)
        assert v == pytest.approx(0.0)
        assert s == pytest.approx(1.0, abs=1e-9)

    def test_multinomial_resampling_recovers_v(self, chip):
        rng = np.random.default_rng(314)
        r = coincidence_mixture(chip, 0, 1, 0.7)
        counts = rng.multinomial(100_000, r.values / r.values.sum()).astype(float)
        v, _ = fit_visibility(CoincidenceDistribution(4, counts), chip, 0, 1)
        assert v == pytest.approx(0.70, abs=0.02)

    def test_empty_counts_rejected(self, chip):
        with pytest.raises(ValueError):
            fit_visibility(CoincidenceDistribution(4, np.zeros(10)), chip, 0, 1)


class TestDistributionContainer:
    def test_pair_count_for_four_modes(self, chip):
        q = coincidence_quantum(chip, 0, 1)
        assert len(q.pairs) == 10
        assert len(q.cross_only().pairs) == 6
        assert q.same_detector_values().shape == (4,)

    def test_dict_round_trip(self, chip):
        q = coincidence_quantum(chip, 0, 1)
        d = q.as_dict()
        assert set(d) == {f"{k},{l}" for k in range(1, 5) for l in range(k, 5)}
        back = CoincidenceDistribution.from_dict(d, 4)
        assert np.allclose(back.values, q.values)

    def test_cross_only_dict_round_trip(self, chip):
        q = coincidence_quantum(chip, 0, 1).cross_only()
        back = CoincidenceDistribution.from_dict(q.as_dict(), 4)
        assert back.cross_detector_only
        assert np.allclose(back.values, q.values)

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            CoincidenceDistribution(4, np.full(10, -1.0))


def test_similarity_bound_between_predictions(chip):
    q = coincidence_quantum(chip, 0, 1).cross_only()
    c = coincidence_classical(chip, 0, 1).cross_only()
    assert similarity(q.values, c.values) == pytest.approx(0.901, abs=0.003)
