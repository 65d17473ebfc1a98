import math

import numpy as np
import pytest

from qrbg.errors import EmptyInputError, InsufficientDataError
from qrbg.minentropy import rate_from_coherence
from qrbg.sources import (
    EventLog,
    SinglePhoton,
    SourceModel,
    blocked_schedule,
    constant_schedule,
    sample_events,
)
from qrbg.states import StokesVector
from qrbg.tomography import (
    CountTable,
    certify,
    estimate_stokes,
    reconstruct,
    state_report,
    tally,
)


def table(z0, z1, x0, x1, y0, y1):
    return CountTable(np.array([[z0, z1], [x0, x1], [y0, y1]]))


def eigenclip(s_raw):
    """Independent nearest-physical-state oracle: clip negative
    eigenvalues of the raw matrix and renormalize the trace."""
    s1, s2, s3 = (float(x) for x in s_raw)
    m = 0.5 * np.array([[1 + s3, s1 - 1j * s2], [s1 + 1j * s2, 1 - s3]])
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    vals /= vals.sum()
    m = (vecs * vals) @ vecs.conj().T
    return np.array([2 * m[0, 1].real, -2 * m[0, 1].imag, (m[0, 0] - m[1, 1]).real])


class TestTally:
    def test_all_same_cell(self):
        log = EventLog("t", 0, np.zeros(10, dtype=np.uint8), np.zeros(10, dtype=np.uint8))
        c = tally(log)
        assert c.n0("Z") == 10
        assert c.total() == 10
        assert c.n1("Z") == c.n0("X") == c.n1("Y") == 0

    def test_alternating(self):
        outcomes = np.tile([0, 1], 500).astype(np.uint8)
        log = EventLog("t", 0, np.zeros(1000, dtype=np.uint8), outcomes)
        c = tally(log)
        assert c.n0("Z") == c.n1("Z") == 500

    def test_simulated_fraction(self):
        model = SourceModel(SinglePhoton(StokesVector(0.6, 0, 0.3)), 2024)
        log = sample_events(model, blocked_schedule(3 * 10**6), 3 * 10**6)
        c = tally(log)
        frac = c.n0("X") / (c.n0("X") + c.n1("X"))
        assert abs(frac - 0.8) < 0.001

    def test_empty_rejected(self):
        log = EventLog("t", 0, np.empty(0, dtype=np.uint8), np.empty(0, dtype=np.uint8))
        with pytest.raises(EmptyInputError):
            tally(log)


class TestEstimateStokes:
    def test_balanced_counts_give_origin(self):
        r = estimate_stokes(table(500, 500, 500, 500, 500, 500))
        assert r.s_hat.as_array() == pytest.approx(np.zeros(3), abs=1e-15)
        assert not r.projected

    def test_component_arithmetic(self):
        r = estimate_stokes(table(500, 500, 900, 100, 500, 500))
        assert r.s_hat.s1 == pytest.approx(0.8, abs=1e-15)
        assert r.stderr[0] == pytest.approx(math.sqrt((1 - 0.64) / 1000), abs=1e-12)

    def test_projection_back_to_sphere(self):
        # raw vector (0.9, 0, 0.6) has norm ~1.0817
        r = estimate_stokes(table(800, 200, 950, 50, 500, 500))
        assert r.projected
        assert np.linalg.norm(r.s_raw) > 1
        np.testing.assert_allclose(r.s_raw, [0.9, 0.0, 0.6], atol=1e-12)
        np.testing.assert_allclose(
            r.s_hat.as_array(), np.array([0.9, 0, 0.6]) / np.linalg.norm([0.9, 0, 0.6]),
            atol=1e-12,
        )
        np.testing.assert_allclose(r.s_hat.as_array(), eigenclip(r.s_raw), atol=1e-10)

    def test_count_floor(self):
        with pytest.raises(InsufficientDataError):
            estimate_stokes(table(1000, 1000, 40, 40, 1000, 1000))
        estimate_stokes(table(60, 40, 60, 40, 60, 40))  # floor met exactly at 100

    def test_nearest_psd_equivalence_random(self, rng):
        # radial scaling and eigenvalue clipping agree for qubit states
        v = rng.normal(size=(10_000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        radii = 1.0 + 0.3 * rng.random(10_000)
        for vec, r in zip(v, radii):
            s_raw = vec * r
            np.testing.assert_allclose(eigenclip(s_raw), s_raw / r, atol=1e-10)

    def test_projection_never_raises_rate(self, rng):
        done = 0
        while done < 200:
            s_raw = rng.uniform(-1, 1, size=3)
            norm = np.linalg.norm(s_raw)
            if not 1.0 + 1e-6 < norm <= 1.3:
                continue
            done += 1
            n = 10**6
            counts = np.round((1 + s_raw[[2, 0, 1]]) / 2 * n).astype(int)
            t = CountTable(np.stack([counts, n - counts], axis=1))
            r = estimate_stokes(t)
            if not r.projected:
                continue
            c_raw = min(1.0, math.hypot(r.s_raw[0], r.s_raw[1]))
            assert float(rate_from_coherence(r.s_hat.coherence)) <= float(
                rate_from_coherence(c_raw)
            ) + 1e-12

    def test_estimator_consistency(self, rng):
        # component error within 4 standard errors in virtually all runs
        s_true = np.array([0.55, -0.2, 0.3])
        n = 10_000
        p0 = (1 + s_true[[2, 0, 1]]) / 2
        failures = 0
        for _ in range(1000):
            n0 = rng.binomial(n, p0)
            r = estimate_stokes(CountTable(np.stack([n0, n - n0], axis=1)))
            err = np.abs(r.s_hat.as_array() - s_true)
            if (err > 4 * r.stderr).any():
                failures += 1
        assert failures <= 1


class TestReconstruct:
    def test_high_coherence_source(self):
        model = SourceModel(SinglePhoton(StokesVector(0.9996, 0, 0)), 515)
        log = sample_events(model, blocked_schedule(3 * 10**6), 3 * 10**6)
        result, rate = reconstruct(log, alpha=0.01)
        assert 0.94 <= float(rate) <= 0.98
        assert abs(float(rate) - 0.96) < 0.02

    def test_ideal_diagonal_source(self):
        model = SourceModel(SinglePhoton(StokesVector(1, 0, 0)), 616)
        log = sample_events(model, blocked_schedule(3 * 10**6), 3 * 10**6)
        _, rate = reconstruct(log, alpha=0.01)
        assert float(rate) >= 0.99

    def test_zero_coherence_source(self):
        model = SourceModel(SinglePhoton(StokesVector(0, 0, 0.5)), 717)
        log = sample_events(model, blocked_schedule(300_000), 300_000)
        _, rate = reconstruct(log, alpha=0.01)
        assert float(rate) < 1e-4
        _, conservative = reconstruct(log, alpha=0.01, conservative=True)
        assert float(conservative) == 0.0

    def test_conservative_rate_never_higher(self):
        model = SourceModel(SinglePhoton(StokesVector(0.8, 0, 0.1)), 818)
        log = sample_events(model, blocked_schedule(300_000), 300_000)
        _, plug_in = reconstruct(log, alpha=0.01)
        _, lower = reconstruct(log, alpha=0.01, conservative=True)
        assert float(lower) <= float(plug_in)

    def test_certify_returns_both(self):
        model = SourceModel(SinglePhoton(StokesVector(0.8, 0, 0.1)), 919)
        log = sample_events(model, blocked_schedule(300_000), 300_000)
        result, rate = reconstruct(log, alpha=0.01)
        plug_in, lower = certify(result, 0.01)
        assert float(plug_in) == float(rate)
        assert float(lower) <= float(plug_in)

    def test_requires_all_bases(self):
        model = SourceModel(SinglePhoton(StokesVector(0.5, 0, 0)), 10)
        log = sample_events(model, constant_schedule("Z", 1000), 1000)
        with pytest.raises(InsufficientDataError):
            reconstruct(log)


def test_state_report_block():
    r = estimate_stokes(table(600, 400, 800, 200, 500, 500))
    plug_in, lower = certify(r, 0.01)
    block = state_report(r, plug_in, 0.01, lower)
    for key in ("s1=", "s2=", "s3=", "stderr1=", "stderr2=", "stderr3=",
                "projected=", "minentropy_rate=", "alpha=", "minentropy_lower="):
        assert any(line.startswith(key) for line in block.splitlines())
