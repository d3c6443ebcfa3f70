import json

import numpy as np
import pytest

from stepaudit import bounds as bnd
from stepaudit import schedules as sched
from stepaudit.errors import InvalidParameterError
from stepaudit.harness import (
    ExperimentSpec,
    audit_schedule,
    chain_check,
    density_experiment,
    verify_trajectories,
)

SQRT21 = sched.sqrt_decay(2, 1)


def make_spec(**kwargs):
    defaults = dict(schedule=SQRT21, horizons=[8, 16], families=("maxlinear",))
    defaults.update(kwargs)
    return ExperimentSpec(**defaults)


class TestSpecValidation:
    def test_horizons_must_ascend(self):
        with pytest.raises(InvalidParameterError):
            make_spec(horizons=[16, 8]).validate()

    def test_horizons_must_be_positive(self):
        with pytest.raises(InvalidParameterError):
            make_spec(horizons=[0, 4]).validate()

    def test_unknown_family(self):
        with pytest.raises(InvalidParameterError):
            make_spec(families=("cubic",)).validate()

    def test_unresolved_envelope(self):
        with pytest.raises(InvalidParameterError):
            make_spec(envelope="empirical").resolved_envelope()


class TestVerify:
    def test_all_families_small(self):
        spec = make_spec(horizons=[4, 16], families=("maxlinear", "vshape", "quadratic"))
        report = verify_trajectories(spec)
        assert report.passed
        assert report.max_deviation <= 1e-9

    def test_construction_failures_become_skips(self):
        spec = make_spec(schedule=sched.constant(0.1), horizons=[2], families=("quadratic",))
        report = verify_trajectories(spec)
        assert report.entries[0]["skipped"].startswith("quadratic instance needs")

    def test_zero_schedule_is_trivially_exact(self):
        spec = make_spec(
            schedule=sched.constant(0), horizons=[8], envelope=bnd.constant_envelope(1)
        )
        report = verify_trajectories(spec)
        assert report.passed
        assert report.max_deviation == 0.0


class TestAudit:
    def test_passes_on_reference_setup(self):
        spec = make_spec(horizons=[8, 16, 32], families=("maxlinear", "vshape", "quadratic"))
        result = audit_schedule(spec)
        assert result.passed
        checks = {a["check"] for a in result.assertions}
        assert checks == {"measured_ge_certified", "certificate_matches_analytic"}
        assert result.skipped == []
        assert all(row.measured for row in result.report.rows)

    def test_reference_audit_larger_horizons(self):
        spec = make_spec(horizons=[8, 64, 512], families=("maxlinear", "vshape", "quadratic"))
        result = audit_schedule(spec)
        assert result.passed
        for row in result.report.rows:
            assert row.measured["maxlinear"] >= row.maxlinear - 1e-12

    def test_degenerate_zero_schedule(self):
        spec = make_spec(
            schedule=sched.constant(0),
            horizons=[4, 8],
            families=("maxlinear",),
            envelope=bnd.constant_envelope(1),
        )
        result = audit_schedule(spec)
        assert result.passed
        for row in result.report.rows:
            assert row.last_step == 0.0
            assert row.step_sum is None
            assert row.measured["maxlinear"] == 0.0

    def test_small_t_skips_recorded(self):
        spec = make_spec(horizons=[1, 8], families=("vshape",))
        result = audit_schedule(spec)
        assert any(s["t"] == 1 and s["family"] == "vshape" for s in result.skipped)
        assert result.passed

    def test_envelope_validation_gates_named_envelopes(self):
        spec = make_spec(
            schedule=sched.constant(2), horizons=[4, 8], envelope=bnd.constant_envelope(1)
        )
        result = audit_schedule(spec)
        assert not result.passed
        assert not result.envelope_validation["passed"]

    def test_empirical_two_phase(self):
        spec = make_spec(horizons=[8, 16], envelope="empirical")
        result = audit_schedule(spec)
        assert result.passed
        assert result.report.envelope_label.startswith("empirical(")
        assert result.envelope_validation["gating"] is False

    def test_workers_do_not_change_results(self):
        spec1 = make_spec(horizons=[8, 16, 32], families=("maxlinear", "quadratic"), workers=1)
        spec4 = make_spec(horizons=[8, 16, 32], families=("maxlinear", "quadratic"), workers=4)
        s1 = json.dumps(audit_schedule(spec1).summary(), sort_keys=True, default=str)
        s4 = json.dumps(audit_schedule(spec4).summary(), sort_keys=True, default=str)
        assert s1 == s4


class TestDensity:
    def test_threshold_edges(self):
        spec = make_spec(horizons=[32])
        table = density_experiment(spec, [0.0, float("inf")])
        by_c = {row["c"]: row for row in table.rows}
        assert by_c[0.0]["density"] == 1.0
        assert by_c[float("inf")]["density"] == 0.0

    def test_monotone_in_threshold(self):
        spec = make_spec(horizons=[64])
        table = density_experiment(spec, [0.0, 1e-4, 1e-3, 1e-2, 1.0])
        densities = [row["density"] for row in table.rows]
        assert densities == sorted(densities, reverse=True)

    def test_per_t_matches_single_run_at_the_horizon(self):
        spec = make_spec(horizons=[48])
        single = density_experiment(spec, [0.0])
        per_t = density_experiment(spec, [0.0], per_t=True)
        assert single.profiles[48][47] == per_t.profiles[48][47]

    def test_requires_single_family(self):
        spec = make_spec(families=("maxlinear", "vshape"))
        with pytest.raises(InvalidParameterError):
            density_experiment(spec, [0.0])

    def test_repeat_runs_identical(self):
        spec = make_spec(horizons=[32])
        t1 = density_experiment(spec, [0.0, 0.5])
        t2 = density_experiment(spec, [0.0, 0.5])
        assert t1.rows == t2.rows
        assert np.array_equal(t1.profiles[32], t2.profiles[32])

    def test_workers_do_not_change_profiles(self):
        t1 = density_experiment(make_spec(horizons=[16, 32, 48], workers=1), [0.0, 0.5])
        t4 = density_experiment(make_spec(horizons=[16, 32, 48], workers=4), [0.0, 0.5])
        assert t1.rows == t4.rows
        for T in (16, 32, 48):
            assert np.array_equal(t1.profiles[T], t4.profiles[T])

    def test_csv_files(self, tmp_path):
        spec = make_spec(horizons=[8])
        table = density_experiment(spec, [0.0])
        p = tmp_path / "density.csv"
        table.write_csv(str(p), header="hdr")
        lines = p.read_text().splitlines()
        assert lines[1] == "c,T,count,density"
        assert lines[2] == "0.0,8,8,1.0"


class TestChain:
    def test_requires_even_horizon(self):
        with pytest.raises(InvalidParameterError):
            chain_check(SQRT21, bnd.log_envelope(), 7)
        with pytest.raises(InvalidParameterError):
            chain_check(SQRT21, bnd.log_envelope(), 2)

    def test_reference_setup_passes(self):
        report = chain_check(SQRT21, bnd.log_envelope(), 64)
        assert report.passed
        assert set(report.inconclusive) == {"tail_sum_floor", "cutoff_margin"}
        statuses = {s["step"]: s["status"] for s in report.steps if s["step"] != "quartic_floor"}
        assert statuses["average_identity"] == "pass"
        assert statuses["l1_l2"] == "pass"
        assert statuses["envelope_floor"] == "pass"

    def test_zero_schedule_trivially_consistent(self):
        report = chain_check(sched.constant(0), bnd.constant_envelope(1), 8)
        assert report.passed
        by_name = {s["step"]: s for s in report.steps}
        assert by_name["step_sum_floor"]["status"] == "not_applicable"

    def test_cutoff_steps_engage_on_huge_horizon(self):
        # with phi == 1 the cutoff first engages near T = 56k
        report = chain_check(sched.sqrt_decay(1, 4), bnd.constant_envelope(1), 55924)
        by_name = {s["step"]: s for s in report.steps}
        assert by_name["tail_sum_floor"]["t1"] == 1
        assert report.inconclusive == []
        assert report.passed

    def test_fft_profile_matches_exact_floor(self):
        from stepaudit.harness import _quartic_profile

        profile = _quartic_profile(SQRT21, 512)
        for t in (1, 2, 17, 256, 511, 512):
            exact = bnd.quartic_floor(SQRT21, t)
            assert profile[t - 1] == pytest.approx(exact, rel=1e-9, abs=1e-15)

    def test_step_payloads_have_sides(self):
        report = chain_check(SQRT21, bnd.log_envelope(), 16)
        quartics = [s for s in report.steps if s["step"] == "quartic_floor"]
        assert len(quartics) == 16
        assert all({"lhs", "rhs", "t"} <= set(q) for q in quartics)
