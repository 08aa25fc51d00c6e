import json
import math
import os

import numpy as np
import pytest

from core.exc import ConfigurationError, DomainError, ParameterDomainError, QuarantineExceededError
from core.integrators import integrate_mass_ladder
from core.models import noiseless_benchmark
from core.montecarlo import (
    ConvergenceTable,
    ExperimentPlan,
    estimate_exceedance,
    estimate_exit_probability,
    resolve_threads,
    run_experiment,
    wilson_interval,
)

Z95 = 1.959964


def _wilson_bounds(successes, n, z=Z95):
    p = successes / n
    center = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return center - half, center + half


class TestWilsonInterval:
    def test_no_successes(self):
        low, high = wilson_interval(0, 100)
        assert low == 0.0
        assert high == pytest.approx(Z95**2 / 100 / (1 + Z95**2 / 100), rel=1e-12)

    def test_all_successes(self):
        low, high = wilson_interval(100, 100)
        assert high == 1.0
        assert low == pytest.approx(1 - Z95**2 / 100 / (1 + Z95**2 / 100), rel=1e-12)

    def test_half(self):
        low, high = wilson_interval(50, 100)
        expected = _wilson_bounds(50, 100)
        assert (low, high) == pytest.approx(expected, rel=1e-12)
        assert low + high == pytest.approx(1.0)
        assert high - low == pytest.approx(2 * 0.09617, abs=1e-4)

    def test_interval_contains_estimate(self):
        for successes in (1, 7, 33, 99):
            low, high = wilson_interval(successes, 100)
            assert low <= successes / 100 <= high

    def test_other_confidence(self):
        _, high = wilson_interval(0, 100, confidence=0.99)
        z = 2.5758293035489
        assert high == pytest.approx(z * z / 100 / (1 + z * z / 100), rel=1e-9)

    @pytest.mark.parametrize("successes, n, confidence", [(5, 3, 0.95), (0, 0, 0.95), (-1, 10, 0.95), (1, 10, 1.5), (0.5, 10, 0.95)])
    def test_domain(self, successes, n, confidence):
        with pytest.raises(DomainError):
            wilson_interval(successes, n, confidence)


class TestExperimentPlan:
    @pytest.mark.parametrize(
        "changes",
        [
            {"n_paths": 0},
            {"masses": (1e-2, 1e-1)},
            {"masses": ()},
            {"epsilon": (0.1, 0.1)},
            {"epsilon": (-0.1,)},
            {"T": 0.5e-5},
            {"T": 0.25, "dt": 0.1},
            {"T": -1.0},
            {"dt": 0.0},
            {"master_seed": -3},
        ],
    )
    def test_rejects_invalid_plans(self, changes):
        plan = ExperimentPlan(model_name="constant", **changes)
        with pytest.raises(ParameterDomainError):
            plan.validate()

    def test_zero_horizon_is_valid(self):
        ExperimentPlan(model_name="constant", T=0.0).validate()

    def test_document(self):
        plan = ExperimentPlan(model_name="constant", params={"g": 2.0}, masses=(0.1,), n_paths=10, master_seed=4)
        document = plan.as_dict()
        assert document["model"] == "constant"
        assert document["seed"] == 4
        assert document["masses"] == [0.1]


class TestResolveThreads:
    def test_explicit(self):
        assert resolve_threads(3) == 3

    def test_from_settings(self, settings):
        settings.KRAMERS_THREADS = 2
        assert resolve_threads() == 2

    def test_all_cores(self, settings):
        settings.KRAMERS_THREADS = 0
        assert resolve_threads() == (os.cpu_count() or 1)

    def test_negative(self):
        with pytest.raises(ConfigurationError):
            resolve_threads(-1)


class TestExceedance:
    def test_noiseless_indicator(self):
        masses = (1e-1, 1e-2, 1e-3)
        eps = 0.01
        reference = integrate_mass_ladder(noiseless_benchmark(), [1.0], masses=masses, T=0.5, dt=1e-4).sup_distance[:, 0]
        plan = ExperimentPlan(model_name="noiseless", x0=(1.0,), masses=masses, epsilon=(eps,), T=0.5, dt=1e-4, n_paths=5)
        table = estimate_exceedance(plan, threads=1)
        for row, sup in zip(table.rows, reference, strict=True):
            assert row.p_exceed == float(sup > eps)
            assert row.n == 5
        assert table.rows[0].p_exceed == 1.0
        assert table.rows[-1].p_exceed == 0.0

    def test_monotone_in_mass_and_threshold(self):
        plan = ExperimentPlan(
            model_name="constant", masses=(1e-1, 1e-2, 1e-3), epsilon=(0.1, 0.2), T=0.2, dt=1e-4, n_paths=100, master_seed=1
        )
        table = estimate_exceedance(plan, threads=1)
        wide, narrow = table.for_epsilon(0.1), table.for_epsilon(0.2)
        for a, b in zip(wide, narrow, strict=True):
            assert b.p_exceed <= a.p_exceed
        p = [row.p_exceed for row in narrow]
        assert p[2] < p[0]
        assert all(later <= earlier + 0.1 for earlier, later in zip(p, p[1:]))

    def test_exceedance_bounds_exit(self):
        plan = ExperimentPlan(model_name="wall-gravity", x0=(0.05,), masses=(1e-1, 1e-2), epsilon=(0.05,), T=0.05, dt=1e-4, n_paths=40)
        table = estimate_exceedance(plan, threads=1)
        for row in table.rows:
            assert row.p_exceed >= row.p_exit
            assert row.ci_low <= row.p_exceed <= row.ci_high

    def test_zero_horizon(self):
        plan = ExperimentPlan(model_name="wall-gravity", masses=(1e-1, 1e-2), T=0.0, dt=1e-3, n_paths=10)
        table = estimate_exceedance(plan, threads=1)
        assert all(row.p_exceed == 0.0 and row.p_exit == 0.0 and row.ci_low == 0.0 for row in table.rows)

    def test_independent_of_threads_and_chunks(self):
        plan = ExperimentPlan(model_name="constant", masses=(1e-1, 1e-2), epsilon=(0.05, 0.1), T=0.05, dt=1e-3, n_paths=40, master_seed=7)
        serial = estimate_exceedance(plan, threads=1, chunk_size=40).to_csv()
        threaded = estimate_exceedance(plan, threads=4, chunk_size=7).to_csv()
        assert serial == threaded

    def test_quarantine(self):
        plan = ExperimentPlan(model_name="explosive", x0=(1e200,), masses=(1e-1,), T=0.1, dt=1e-2, n_paths=4)
        with pytest.raises(QuarantineExceededError) as e:
            estimate_exceedance(plan, threads=1)
        assert e.value.exit_code == 2
        assert isinstance(e.value.table, ConvergenceTable)
        assert e.value.table.rows[0].aborted == 4

    def test_aborted_paths_leave_denominator(self):
        plan = ExperimentPlan(model_name="explosive", x0=(1e200,), masses=(1e-1,), T=0.1, dt=1e-2, n_paths=4)
        counts = run_experiment(plan, threads=1, quarantine_fraction=1.0)
        assert counts.valid.tolist() == [0]
        table = ConvergenceTable.from_counts(plan, counts)
        assert math.isnan(table.rows[0].p_exceed)


class TestExitProbability:
    def test_whole_space_never_exits(self):
        plan = ExperimentPlan(model_name="constant", masses=(1e-1, 1e-2), T=0.1, dt=1e-3, n_paths=20)
        table = estimate_exit_probability(plan, threads=1)
        assert [row.p_exit for row in table.rows] == [0.0, 0.0]
        assert all(row.ci_low == 0.0 for row in table.rows)


class TestTables:
    @pytest.fixture
    def table(self):
        plan = ExperimentPlan(model_name="constant", masses=(1e-1, 1e-2), epsilon=(0.05, 0.1), T=0.02, dt=1e-3, n_paths=10)
        return estimate_exceedance(plan, threads=1)

    def test_csv(self, table):
        lines = table.to_csv().splitlines()
        assert lines[0].startswith("#")
        assert json.loads(lines[1][2:])["model"] == "constant"
        assert lines[2] == "m,epsilon,p_exceed,ci_low,ci_high,p_exit,aborted"
        assert len(lines) == 3 + 4
        assert lines[3].split(",")[:2] == ["0.1", "0.05"]

    def test_json(self, table):
        document = json.loads(table.to_json())
        assert document["config"]["domain"]["kind"] == "all-space"
        assert len(document["rows"]) == 4
        assert set(document["rows"][0]) >= {"m", "epsilon", "p_exceed", "ci_low", "ci_high", "p_exit", "aborted"}

    def test_gnuplot_blocks(self, table):
        text = table.to_gnuplot()
        assert text.count("# epsilon = ") == 2
        blocks = [block for block in text.split("\n\n\n") if block.strip()]
        assert len(blocks) == 2
        data = [line for line in blocks[1].splitlines() if line and not line.startswith("#")]
        assert len(data) == 2
        assert np.isfinite([float(v) for v in data[0].split()]).all()
