import math

import numpy as np
import pytest

from stepaudit import bounds as bnd
from stepaudit import engine
from stepaudit import instances as inst
from stepaudit import schedules as sched
from stepaudit.errors import ConstructionError, InvalidParameterError

PHI = bnd.log_envelope()
SQRT21 = sched.sqrt_decay(2, 1)


class TestVShape:
    def test_example_parameters(self):
        v = inst.build_vshape(sched.constant(0.5), 2, shrink=1e-6)
        assert v.epsilon == pytest.approx(5e-7, rel=1e-12)
        assert v.c_eps == pytest.approx(1e-6, rel=1e-9)
        assert 0 < v.c_eps < 1

    def test_example_run(self):
        s = sched.constant(0.5)
        v = inst.build_vshape(s, 2, shrink=1e-6)
        rec = engine.run(v.convex, s, 2, snapshots="all")
        assert abs(rec.snapshots[1][0]) <= 1e-12 * v.epsilon
        assert rec.snapshots[2][0] == pytest.approx(0.5, rel=1e-9)
        expected = 0.5 - v.epsilon + v.c_eps * v.epsilon
        assert rec.error_at(2) == pytest.approx(expected, rel=1e-12)

    def test_error_approaches_exit_step_as_shrink_vanishes(self):
        s = sched.constant(0.5)
        gaps = []
        for shrink in (1e-4, 1e-6, 1e-8):
            v = inst.build_vshape(s, 6, shrink=shrink)
            err = engine.run(v.convex, s, 6).error_at(6)
            gaps.append(abs(err - 0.5))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-8

    def test_landing_is_clean(self):
        for t in (4, 8, 64, 512):
            v = inst.build_vshape(SQRT21, t)
            assert v.landing <= 0
            assert abs(v.landing) <= 1e-12 * v.epsilon
            assert v.certified

    def test_closed_form_matches_simulation(self):
        v = inst.build_vshape(SQRT21, 16)
        rec = engine.run(v.convex, SQRT21, 16, snapshots="all")
        for t in range(1, 17):
            cf = v.closed_form_iterate(t)
            assert abs(rec.snapshots[t][0] - cf[0]) <= 1e-6

    def test_closed_form_hits_zero_before_target(self):
        v = inst.build_vshape(SQRT21, 32)
        assert abs(v.closed_form_iterate(31)[0]) <= 1e-12 * v.epsilon

    def test_preconditions(self):
        with pytest.raises(InvalidParameterError):
            inst.build_vshape(SQRT21, 1)
        with pytest.raises(ConstructionError):
            inst.build_vshape(sched.constant(0), 3)
        with pytest.raises(ConstructionError):
            inst.build_vshape(sched.from_table([0.0, 1.0, 1.0]), 2)  # empty ramp

    def test_range_checks(self):
        v = inst.build_vshape(SQRT21, 8)
        with pytest.raises(InvalidParameterError):
            v.closed_form_iterate(0)
        with pytest.raises(InvalidParameterError):
            v.closed_form_iterate(9)

    def test_dump(self):
        v = inst.build_vshape(SQRT21, 8)
        d = v.to_dict()
        assert d["family"] == "vshape"
        assert d["T"] == 8
        assert d["epsilon"] == v.epsilon


class TestQuadratic:
    def test_closed_form_values(self):
        q = inst.build_quadratic(sched.constant(1), 2)
        assert q.S == 2.0
        assert q.closed_form_iterate(2)[0] == pytest.approx(9 / 16, rel=1e-15)
        assert q.closed_form_error(2) == pytest.approx(81 / 2048, rel=1e-15)

    def test_single_step(self):
        q = inst.build_quadratic(sched.constant(1), 1)
        assert q.closed_form_iterate(1)[0] == 0.5
        assert q.closed_form_error(1) == pytest.approx(1 / 16, rel=1e-15)
        assert q.closed_form_error(1) >= q.certified_bound()

    def test_lipschitz_precondition(self):
        with pytest.raises(ConstructionError, match="S >= 1/2"):
            inst.build_quadratic(sched.constant(0.2), 2)

    def test_simulation_matches_closed_form(self):
        q = inst.build_quadratic(SQRT21, 64)
        rec = engine.run(q.convex, SQRT21, 64, snapshots="all")
        for t in range(1, 65):
            assert abs(rec.snapshots[t][0] - q.closed_form_iterate(t)[0]) <= 1e-9

    def test_measured_beats_certificate(self):
        q = inst.build_quadratic(SQRT21, 128)
        err = engine.run(q.convex, SQRT21, 128).error_at(128)
        assert err >= q.certified_bound() - 1e-12

    def test_dump(self):
        q = inst.build_quadratic(sched.constant(1), 2)
        assert q.to_dict() == {
            "family": "quadratic",
            "T": 2,
            "schedule_label": "constant(c=1)",
            "S": 2.0,
        }


class TestCouplingWeights:
    def test_example_values(self):
        a, b = inst.coupling_weights(sched.constant(1), 1, PHI)
        phi2 = 8 + 4 * math.log(2)
        assert a[0] == pytest.approx(min(1, math.sqrt(2)) / (16 * phi2 * 2), rel=1e-15)
        assert b[0] == pytest.approx(1 / (2 * math.sqrt(2)), rel=1e-15)

    def test_zero_step_branches(self):
        a, b = inst.coupling_weights(sched.from_table([0.0, 1.0, 0.0]), 2, PHI)
        assert a[0] == 0.0 and a[2] == 0.0
        assert b[0] == 0.5 and b[2] == 0.5

    def test_sum_sq_headroom(self):
        # the weights keep a fixed distance below the admissible mass
        cap = (1 / 256) * (math.pi**2 / 6)
        for s in (SQRT21, sched.constant(0.5)):
            for t in (1, 7, 63, 255):
                a, _ = inst.coupling_weights(s, t, PHI)
                assert float(np.sum(a * a)) <= cap < 0.5

    def test_envelope_below_one_rejected(self):
        bad = bnd.GuaranteeEnvelope(lambda t: 0.5, label="bad")
        with pytest.raises(InvalidParameterError):
            inst.coupling_weights(sched.constant(1), 4, bad)


class TestConditionChecks:
    def test_zero_weights_pass(self):
        s = sched.constant(1)
        rep = inst.check_weight_conditions(np.zeros(3), np.zeros(3), s, 2)
        assert rep.ok

    def test_built_weights_pass(self):
        a, b = inst.coupling_weights(SQRT21, 64, PHI)
        rep = inst.check_weight_conditions(a, b, SQRT21, 64)
        assert rep.ok
        assert rep.sum_sq.slack >= 0.5 - math.pi**2 / 1536

    def test_crafted_failure(self):
        s = sched.constant(1)
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.5, 0.5, 0.5])
        rep = inst.check_weight_conditions(a, b, s, 2)
        assert not rep.ok
        assert not rep.tail_coupling.passed
        assert rep.tail_coupling.worst_index == 0

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            inst.check_weight_conditions(np.zeros(2), np.zeros(3), sched.constant(1), 2)

    def test_report_dict(self):
        rep = inst.check_weight_conditions(np.zeros(2), np.zeros(2), sched.constant(1), 1)
        d = rep.to_dict()
        assert d["ok"] is True
        assert len(d["checks"]) == 3


class TestMaxLinear:
    def test_subgradient_at_origin_uses_minimal_index(self):
        m = inst.build_maxlinear(SQRT21, 3, PHI)
        g = m.convex.subgradient(np.zeros(4))
        expected = np.zeros(4)
        expected[0] = -m.b[0]
        assert np.array_equal(g, expected)

    def test_first_iterate(self):
        m = inst.build_maxlinear(SQRT21, 3, PHI)
        assert m.b[0] == 0.125
        assert np.array_equal(m.closed_form_iterate(1), np.array([0.25, 0.0, 0.0, 0.0]))

    def test_argmax_identity_along_trajectory(self):
        m = inst.build_maxlinear(SQRT21, 40, PHI)
        rec = engine.run(m.convex, SQRT21, 40)
        assert np.array_equal(rec.argmax_trace, np.arange(41))

    def test_coordinates_stay_in_half_band(self):
        m = inst.build_maxlinear(SQRT21, 64, PHI)
        eta = SQRT21.rates(64)
        for t in (1, 13, 40, 64):
            x = m.closed_form_iterate(t)
            hi = m.b[:t] * eta[:t]
            assert np.all(x[:t] <= hi + 1e-15)
            assert np.all(x[:t] >= 0.5 * hi - 1e-15)
            assert np.all(x[t:] == 0.0)

    def test_measured_error_dominates_certificate(self):
        for T in (8, 32, 128):
            m = inst.build_maxlinear(SQRT21, T, PHI)
            err = engine.run(m.convex, SQRT21, T).error_at(T)
            assert err >= m.certified_bound() - 1e-12

    def test_certificate_equals_analytic_bound(self):
        for s in (SQRT21, sched.constant(0.5), sched.constant(0.1)):
            for phi in (PHI, bnd.constant_envelope(16.0)):
                for T in (8, 64, 256):
                    m = inst.build_maxlinear(s, T, phi)
                    analytic = bnd.maxlinear_bound(s, T, phi)
                    assert m.certified_bound() == pytest.approx(analytic, rel=1e-12)

    def test_linear_pieces_are_unit_bounded(self):
        m = inst.build_maxlinear(SQRT21, 64, PHI)
        sq_prefix = np.concatenate(([0.0], np.cumsum(m.a * m.a)))
        norms = np.sqrt(sq_prefix[:-1] + m.b * m.b)  # piece i couples a_0..a_{i-1} and -b_i
        assert float(np.max(norms)) <= 1.0

    def test_condition_failure_aborts_construction(self):
        # a constant envelope of 1 cannot absorb large constant steps
        with pytest.raises(ConstructionError) as excinfo:
            inst.build_maxlinear(sched.constant(2), 512, bnd.constant_envelope(1.0))
        assert excinfo.value.report is not None

    def test_zero_step_gates_certificate(self):
        # with a zero step the argmax can tie away from the active piece,
        # so the instance builds but refuses to certify its floor
        s = sched.from_table([0.0, 1.0, 1.0])
        m = inst.build_maxlinear(s, 2, bnd.constant_envelope(16.0))
        assert m.conditions.ok
        assert not m.certified
        measured = engine.run(m.convex, s, 2).error_at(2)
        assert measured < m.certified_bound()  # the gate is load-bearing

    def test_ball_projection_never_activates(self):
        m = inst.build_maxlinear(SQRT21, 100, PHI)
        rec = engine.run(m.convex, SQRT21, 100)
        assert rec.projection_activations == 0
        assert rec.max_norm_seen <= 1.0

    def test_dump_roundtrip(self):
        m = inst.build_maxlinear(SQRT21, 4, PHI)
        d = m.to_dict()
        assert d["family"] == "maxlinear"
        assert len(d["a"]) == 5 and len(d["b"]) == 5

    def test_range_checks(self):
        m = inst.build_maxlinear(SQRT21, 4, PHI)
        with pytest.raises(InvalidParameterError):
            m.closed_form_iterate(0)
        with pytest.raises(InvalidParameterError):
            m.closed_form_iterate(5)
