import io
import math

import numpy as np
import pytest

from qrbg.errors import EmptyInputError, ParameterError
from qrbg.minentropy import closed_form_minentropy, minentropy_decomposition
from qrbg.sources import (
    Adversarial,
    Entangled,
    SinglePhoton,
    SourceModel,
    blocked_schedule,
    constant_schedule,
    effective_qubit,
    read_event_log,
    round_robin_schedule,
    sample_coincidences,
    sample_events,
    sample_raw_bits,
    save_event_log,
    write_event_log,
)
from qrbg.states import (
    StokesVector,
    density_to_stokes,
    mix,
    stokes_to_density,
    worst_case_decomposition,
)


def single(s1, s2, s3, seed=1):
    return SourceModel(SinglePhoton(StokesVector(s1, s2, s3)), seed)


class TestSampleEvents:
    def test_deterministic_source_all_zero(self):
        log = sample_events(single(0, 0, 1), constant_schedule("Z", 1000), 1000)
        assert not log.outcomes.any()

    def test_balanced_source_statistics(self):
        log = sample_events(single(1, 0, 0, seed=42), constant_schedule("Z", 10**6), 10**6)
        assert abs(log.outcomes.mean() - 0.5) < 0.002

    def test_reproducibility_bytewise(self):
        a = sample_events(single(0.3, 0.2, 0.1, seed=99), blocked_schedule(9000), 9000)
        b = sample_events(single(0.3, 0.2, 0.1, seed=99), blocked_schedule(9000), 9000)
        assert np.array_equal(a.outcomes, b.outcomes)
        assert np.array_equal(a.bases, b.bases)
        buf_a, buf_b = io.StringIO(), io.StringIO()
        write_event_log(a, buf_a)
        write_event_log(b, buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()

    def test_different_seeds_differ(self):
        a = sample_events(single(1, 0, 0, seed=1), constant_schedule("Z", 4000), 4000)
        b = sample_events(single(1, 0, 0, seed=2), constant_schedule("Z", 4000), 4000)
        assert not np.array_equal(a.outcomes, b.outcomes)

    def test_schedule_length_mismatch(self):
        with pytest.raises(ParameterError):
            sample_events(single(0, 0, 1), constant_schedule("Z", 10), 20)

    def test_unknown_basis(self):
        with pytest.raises(ParameterError):
            sample_events(single(0, 0, 1), ["Q"], 1)

    def test_basis_dependent_probabilities(self):
        # X basis on an s1-polarized state is deterministic
        log = sample_events(single(1, 0, 0, seed=5), constant_schedule("X", 2000), 2000)
        assert not log.outcomes.any()

    def test_raw_bits_match_constant_z(self):
        model = single(0.6, 0, 0.3, seed=77)
        raw = sample_raw_bits(model, 50_000)
        log = sample_events(model, constant_schedule("Z", 50_000), 50_000)
        assert np.array_equal(raw, log.outcomes)


class TestAdversarialSource:
    def test_labels_recorded_and_marginal(self):
        rho = stokes_to_density(StokesVector(0.6, 0, 0.3))
        d = worst_case_decomposition(rho)
        model = SourceModel(Adversarial(d), 31337)
        log = sample_events(model, constant_schedule("Z", 10**6), 10**6)
        assert log.eve_labels is not None
        zeros = 1.0 - log.outcomes.mean()
        assert abs(zeros - 0.65) < 0.002
        for label, p0 in ((0, 0.9), (1, 0.1)):
            sel = log.outcomes[log.eve_labels == label]
            assert abs((1.0 - sel.mean()) - p0) < 0.003

    def test_label_frequencies_match_weights(self):
        rho = stokes_to_density(StokesVector(0.6, 0, 0.3))
        d = worst_case_decomposition(rho)
        log = sample_events(SourceModel(Adversarial(d), 4), constant_schedule("Z", 10**6), 10**6)
        frac_up = (log.eve_labels == 0).mean()
        assert abs(frac_up - 0.6875) < 0.002

    def test_marginal_consistency_three_bases(self):
        rho = stokes_to_density(StokesVector(0.4, -0.3, 0.5))
        d = worst_case_decomposition(rho)
        log = sample_events(SourceModel(Adversarial(d), 8), blocked_schedule(10**6), 10**6)
        want = density_to_stokes(mix(d)).as_array()
        per = 10**6 // 3
        for code, comp in ((0, 2), (1, 0), (2, 1)):
            sel = log.outcomes[log.bases == code]
            est = 1.0 - 2.0 * sel.mean()
            sigma = math.sqrt((1 - want[comp] ** 2) / per)
            assert abs(est - want[comp]) <= 3 * sigma

    def test_eve_advantage_matches_worst_case(self):
        # knowing the per-event term, the adversary's average surprisal
        # equals the closed-form rate of the mixed state
        rho = stokes_to_density(StokesVector(0.6, 0, 0.3))
        d = worst_case_decomposition(rho)
        log = sample_events(SourceModel(Adversarial(d), 11), constant_schedule("Z", 10**5), 10**5)
        p_max = np.array([0.5 * (1 + abs(psi.bloch.s3)) for _, psi in d.terms])
        empirical = float(np.mean(-np.log2(p_max[log.eve_labels])))
        assert empirical == pytest.approx(float(closed_form_minentropy(rho)), abs=3e-3)

    def test_eve_advantage_generic_decomposition(self, rng):
        from qrbg.states import Decomposition, PureState

        dirs = rng.normal(size=(3, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        w = np.array([0.5, 0.3, 0.2])
        d = Decomposition(
            tuple((float(wi), PureState(StokesVector(*r))) for wi, r in zip(w, dirs))
        )
        log = sample_events(SourceModel(Adversarial(d), 21), constant_schedule("Z", 10**6), 10**6)
        p_max = np.array([0.5 * (1 + abs(psi.bloch.s3)) for _, psi in d.terms])
        surprisal = -np.log2(p_max[log.eve_labels])
        want = float(minentropy_decomposition(d))
        sigma = surprisal.std() / math.sqrt(len(surprisal))
        assert abs(surprisal.mean() - want) <= 3 * sigma + 1e-9
        assert surprisal.mean() >= float(closed_form_minentropy(mix(d))) - 3 * sigma - 1e-9

    def test_chunk_boundary_reproducibility(self):
        rho = stokes_to_density(StokesVector(0.2, 0.1, 0.4))
        d = worst_case_decomposition(rho)
        n = (1 << 22) + 17
        model = SourceModel(Adversarial(d), 3)
        a = sample_events(model, constant_schedule("Z", n), n)
        b = sample_events(model, constant_schedule("Z", n), n)
        assert np.array_equal(a.outcomes, b.outcomes)
        assert np.array_equal(a.eve_labels, b.eve_labels)


class TestEffectiveQubit:
    def test_ideal_pair(self):
        s = density_to_stokes(effective_qubit(1.0, 0.0))
        assert (s.s1, s.s2, s.s3) == (1.0, 0.0, 0.0)

    def test_fully_dephased(self):
        s = density_to_stokes(effective_qubit(0.0, 0.7))
        assert s.as_array() == pytest.approx(np.zeros(3), abs=1e-15)

    def test_accidentals_shrink_coherence(self):
        rho = effective_qubit(0.88, 0.0409)
        s = density_to_stokes(rho)
        assert s.s1 == pytest.approx(0.88 * (1 - 0.0409), abs=1e-12)
        assert s.s3 == pytest.approx(0.0, abs=1e-15)
        assert float(closed_form_minentropy(rho)) == pytest.approx(0.3805, abs=1e-4)

    def test_no_subtraction_monotonicity(self):
        rates = [
            float(closed_form_minentropy(effective_qubit(0.9, a)))
            for a in np.linspace(0.0, 0.9, 10)
        ]
        assert all(b < a for a, b in zip(rates, rates[1:]))

    def test_phase_leaves_rate_unchanged(self):
        base = float(closed_form_minentropy(effective_qubit(0.844, 0.0)))
        for phase in (0.3, 1.2, math.pi / 2, 4.0):
            rot = float(closed_form_minentropy(effective_qubit(0.844, 0.0, phase)))
            assert rot == pytest.approx(base, abs=1e-12)

    def test_populations_stay_balanced(self):
        rho = effective_qubit(0.5, 0.2, 0.7)
        assert rho.matrix[0, 0].real == pytest.approx(0.5, abs=1e-12)

    def test_range_validation(self):
        with pytest.raises(ParameterError):
            effective_qubit(1.2, 0.0)
        with pytest.raises(ParameterError):
            effective_qubit(0.5, 1.0)


class TestSampleCoincidences:
    def test_ideal_pair_balanced_z(self):
        log = sample_coincidences(1.0, 0.0, constant_schedule("Z", 10**6), 10**6, seed=6)
        assert abs(log.outcomes.mean() - 0.5) < 0.002

    def test_ideal_pair_deterministic_x(self):
        log = sample_coincidences(1.0, 0.0, constant_schedule("X", 10**5), 10**5, seed=7)
        assert not log.outcomes.any()

    def test_degraded_pair_x_fraction(self):
        log = sample_coincidences(0.844, 0.0, constant_schedule("X", 10**6), 10**6, seed=8)
        zeros = 1.0 - log.outcomes.mean()
        assert abs(zeros - 0.922) < 0.002


class TestEventLogFiles:
    def test_roundtrip_with_labels(self):
        d = worst_case_decomposition(stokes_to_density(StokesVector(0.6, 0, 0.3)))
        log = sample_events(SourceModel(Adversarial(d), 5), round_robin_schedule(500), 500)
        buf = io.StringIO()
        write_event_log(log, buf)
        back = read_event_log(io.StringIO(buf.getvalue()))
        assert back.source == log.source
        assert back.seed == log.seed
        assert np.array_equal(back.bases, log.bases)
        assert np.array_equal(back.outcomes, log.outcomes)
        assert np.array_equal(back.eve_labels, log.eve_labels)

    def test_roundtrip_via_path(self, tmp_path):
        log = sample_events(single(0.5, 0, 0.5, seed=13), blocked_schedule(300), 300)
        path = tmp_path / "events.log"
        save_event_log(log, str(path))
        text = path.read_text()
        assert text.startswith("# source=single_photon(")
        assert "# seed=13" in text
        first_record = text.splitlines()[4]
        assert first_record.startswith("0,Z,")

    def test_empty_log_rejected(self):
        with pytest.raises(EmptyInputError):
            read_event_log(io.StringIO("# source=x\n# seed=0\n"))

    def test_index_gap_rejected(self):
        with pytest.raises(ParameterError):
            read_event_log(io.StringIO("0,Z,0\n2,Z,1\n"))

    def test_header_count_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            read_event_log(io.StringIO("# n=3\n0,Z,0\n1,Z,1\n"))


def test_event_records_iteration():
    log = sample_events(single(0, 0, 1, seed=2), ["Z", "X", "Y"], 3)
    records = list(log.records())
    assert [r.index for r in records] == [0, 1, 2]
    assert [r.basis for r in records] == ["Z", "X", "Y"]
    assert all(r.eve_label is None for r in records)
    assert records[0].outcome == 0


def test_blocked_schedule_is_equal_thirds():
    sched = blocked_schedule(9_999)
    counts = np.bincount(sched, minlength=3)
    assert counts.tolist() == [3333, 3333, 3333]
    assert (np.diff(np.flatnonzero(np.diff(sched))) > 0).all()


def test_source_model_seed_range():
    with pytest.raises(ParameterError):
        SourceModel(SinglePhoton(StokesVector(0, 0, 0)), -1)
    with pytest.raises(ParameterError):
        SourceModel(SinglePhoton(StokesVector(0, 0, 0)), 2**64)


def test_entangled_describe_round_trips_parameters():
    v = Entangled(0.88, 0.0409, 0.25)
    text = v.describe()
    assert "coherence=0.88" in text and "accidental_fraction=0.0409" in text
