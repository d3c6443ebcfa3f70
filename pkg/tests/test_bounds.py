import math

import numpy as np
import pytest

from stepaudit import bounds as bnd
from stepaudit import engine
from stepaudit import schedules as sched
from stepaudit.errors import InvalidParameterError


def brute_force_average(schedule, T):
    """Independent oracle for the averaged fourth-power floor."""
    total = 0.0
    for t in range(1, T + 1):
        eta = schedule.rates(t)
        for j in range(t):
            total += j * eta[j] ** 2 / (t + 1 - j)
    return total / T


class TestHarmonic:
    def test_values(self):
        assert bnd.harmonic(1) == 1.0
        assert bnd.harmonic(2) == 1.5
        assert bnd.harmonic(4) == pytest.approx(25 / 12, rel=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidParameterError):
            bnd.harmonic(0)

    def test_table_matches_scalar(self):
        table = bnd.harmonic_table(50)
        for n in (1, 2, 10, 50):
            assert table[n - 1] == pytest.approx(bnd.harmonic(n), rel=1e-14)


class TestElementaryFloors:
    def test_last_step(self):
        table = sched.from_table([0.3, 0.2, 0.1])
        assert bnd.last_step_bound(table, 3) == 0.1
        assert bnd.last_step_bound(sched.sqrt_decay(2, 1), 1) == 2.0
        assert bnd.last_step_bound(sched.constant(0), 17) == 0.0

    def test_step_sum(self):
        assert bnd.step_sum_bound(sched.constant(0.5), 2) == pytest.approx(
            math.exp(-2) / 4, rel=1e-15
        )
        assert bnd.step_sum_bound(sched.constant(0.1), 2) is None
        assert bnd.step_sum_bound(sched.constant(1), 1) == pytest.approx(
            math.exp(-2) / 4, rel=1e-15
        )

    def test_maxlinear_floor_examples(self):
        assert bnd.maxlinear_bound(sched.constant(0), 5, bnd.constant_envelope(1)) == 0.0
        got = bnd.maxlinear_bound(sched.constant(1), 1, bnd.constant_envelope(2))
        assert got == pytest.approx(1 / (256 * math.sqrt(2)), rel=1e-15)


class TestQuarticFloor:
    def test_examples(self):
        assert bnd.quartic_floor(sched.constant(1), 1) == 0.0
        assert bnd.quartic_floor(sched.constant(1), 3) == pytest.approx(
            (1 / 128) * (4 / 3), rel=1e-15
        )
        assert bnd.quartic_floor(sched.constant(0), 9) == 0.0

    def test_shifted_variant_dominates(self):
        s = sched.sqrt_decay(2, 1)
        for t in (1, 5, 50):
            assert bnd.quartic_floor(s, t, shifted=True) >= bnd.quartic_floor(s, t)


class TestAveragedFloor:
    def test_single_term(self):
        # T=2 has one contributing pair (t=2, j=1) with weight 1/2
        assert bnd.averaged_quartic_floor(sched.constant(1), 2) == pytest.approx(0.25, rel=1e-15)

    def test_zero_schedule(self):
        assert bnd.averaged_quartic_floor(sched.constant(0), 10) == 0.0

    def test_identity_against_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            table = sched.from_table(rng.uniform(0, 2, size=64))
            closed = bnd.averaged_quartic_floor(table, 64)
            brute = brute_force_average(table, 64)
            assert closed == pytest.approx(brute, rel=1e-12)


class TestCutoffAndFloor:
    def test_cutoff_examples(self):
        one = bnd.constant_envelope(1)
        assert bnd.tail_cutoff(55924, one) == 1
        assert bnd.tail_cutoff(10**6, one) == 34
        assert bnd.tail_cutoff(100, one) is None

    def test_envelope_floor_values(self):
        base = 2**2.5
        h2, l2 = bnd.envelope_floor(2)
        assert h2 == pytest.approx(1 / (base * math.exp(2)), rel=1e-15)
        assert l2 == 0.0
        h4, l4 = bnd.envelope_floor(4)
        assert h4 == pytest.approx(1.5**0.125 / (base * math.exp(2)), rel=1e-15)
        assert l4 == pytest.approx(math.log(2) ** 0.125 / (base * math.exp(1)), rel=1e-15)
        # the log form overtakes the harmonic form beyond tiny horizons
        assert l4 > h4

    def test_harmonic_form_nondecreasing(self):
        values = [bnd.envelope_floor(T)[0] for T in (2, 4, 8, 64, 512, 4096)]
        assert values == sorted(values)


class TestStepSumUpper:
    def test_zero_schedule_passes(self):
        check = bnd.step_sum_upper(sched.constant(0), 3, 9, bnd.constant_envelope(1))
        assert check.lhs == 0.0 and check.passed

    def test_known_envelope_passes(self):
        check = bnd.step_sum_upper(sched.sqrt_decay(2, 1), 4, 16, bnd.log_envelope())
        assert check.passed

    def test_invalid_envelope_fails(self):
        check = bnd.step_sum_upper(sched.constant(10), 1, 2, bnd.constant_envelope(1))
        assert not check.passed
        assert check.lhs == 20.0
        assert check.rhs == pytest.approx(2 * (math.sqrt(2) - 1), rel=1e-15)

    def test_bad_range(self):
        with pytest.raises(InvalidParameterError):
            bnd.step_sum_upper(sched.constant(1), 3, 3, bnd.constant_envelope(1))


def test_l1_l2_equality_case():
    check = bnd.l1_l2_gap([1.0, 1.0, 1.0, 1.0])
    assert check.lhs == 4.0 and check.rhs == 4.0 and check.passed


def _record(errors, label="s", horizon=None):
    errors = np.asarray(errors, dtype=np.float64)
    return engine.RunRecord(label, horizon or len(errors), errors)


class TestEmpiricalEnvelope:
    def test_all_zero_errors_clamp_to_one(self):
        phi = bnd.empirical_envelope([_record([0.0, 0.0, 0.0])])
        assert [phi(t) for t in (1, 2, 3, 9)] == [1.0, 1.0, 1.0, 1.0]

    def test_single_spike(self):
        phi = bnd.empirical_envelope([_record([0.0, 0.0, 0.0, 3.0, 0.0])])
        assert phi(3) == 1.0
        assert phi(4) == 6.0  # sqrt(4) * 3
        assert phi(5) == 6.0
        assert phi(100) == 6.0

    def test_monotone_and_multi_record(self):
        phi = bnd.empirical_envelope([
            _record([2.0, 0.0]),
            _record([0.0, 0.0, 1.0]),
        ])
        vals = [phi(t) for t in (1, 2, 3)]
        assert vals == sorted(vals)
        assert vals[0] == 2.0

    def test_mixed_schedules_rejected(self):
        with pytest.raises(InvalidParameterError):
            bnd.empirical_envelope([_record([0.0], label="a"), _record([0.0], label="b")])

    def test_stays_below_known_envelope(self):
        from stepaudit import build_maxlinear, run, sqrt_decay

        s = sqrt_decay(2, 1)
        phi_known = bnd.log_envelope()
        records = [run(build_maxlinear(s, T, phi_known).convex, s, T) for T in (64, 512)]
        phi_hat = bnd.empirical_envelope(records)
        for t in range(1, 513):
            assert phi_hat(t) <= phi_known(t)


class TestValidateEnvelope:
    def test_known_pair_passes(self):
        rep = bnd.validate_envelope(sched.sqrt_decay(2, 1), bnd.log_envelope(), t_max=512)
        assert rep.passed

    def test_step_condition_failure(self):
        rep = bnd.validate_envelope(sched.constant(2), bnd.constant_envelope(1), t_max=16)
        assert not rep.step_ok
        assert any("t=0" in f for f in rep.failures)

    def test_monotonicity_failure(self):
        phi = bnd.GuaranteeEnvelope(lambda t: 2.0 if t < 5 else 1.5, label="dip")
        rep = bnd.validate_envelope(sched.constant(0), phi, t_max=16)
        assert not rep.monotone_ok

    def test_below_one_failure(self):
        phi = bnd.GuaranteeEnvelope(lambda t: 0.9, label="low")
        rep = bnd.validate_envelope(sched.constant(0), phi, t_max=4)
        assert not rep.ge_one_ok

    def test_record_violation(self):
        rep = bnd.validate_envelope(
            sched.constant(0), bnd.constant_envelope(1), records=[_record([5.0, 0.0])], t_max=4
        )
        assert not rep.records_ok


class TestBoundReport:
    def test_csv_layout(self, tmp_path):
        report = bnd.BoundReport("s", "phi")
        report.rows.append(
            bnd.BoundRow(
                t=4,
                last_step=1.0,
                step_sum=None,
                maxlinear=0.5,
                quartic=0.25,
                quartic_shifted=0.3,
                floor_harmonic=0.1,
                floor_log=0.2,
                measured={"maxlinear": 0.75},
            )
        )
        path = tmp_path / "rep.csv"
        report.write_csv(str(path), header="hello")
        lines = path.read_text().splitlines()
        assert lines[0] == "# hello"
        assert lines[1].startswith("t,last_step,step_sum,maxlinear,quartic_floor")
        assert lines[2] == "4,1.0,,0.5,0.25,0.3,0.1,0.2,0.75,,"
