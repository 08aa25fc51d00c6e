import pytest

from core.montecarlo import ConvergenceTable, ExitTable, ExperimentPlan, estimate_exceedance, run_experiment

pytestmark = pytest.mark.slow

LADDER = dict(masses=(1e-1, 1e-2, 1e-3, 1e-4), epsilon=(0.05,), T=1.0, dt=1e-5, n_paths=400, master_seed=7)


@pytest.fixture(scope="module")
def wall_gravity():
    plan = ExperimentPlan(model_name="wall-gravity", **LADDER)
    model = plan.build_model()
    counts = run_experiment(plan, model=model, threads=4)
    return plan, counts, ConvergenceTable.from_counts(plan, counts, model), ExitTable.from_counts(plan, counts)


def test_constant_benchmark_converges():
    table = estimate_exceedance(ExperimentPlan(model_name="constant", **LADDER), threads=4)
    rows = table.for_epsilon(0.05)
    assert rows[-1].p_exceed < 0.1
    assert rows[-1].p_exceed < rows[0].p_exceed
    assert all(row.aborted == 0 for row in rows)


def test_wall_gravity_exceedance_decreases(wall_gravity):
    _, _, table, _ = wall_gravity
    rows = table.for_epsilon(0.05)
    for earlier, later in zip(rows, rows[1:]):
        assert later.ci_low <= earlier.ci_high
    assert rows[-1].p_exceed < rows[0].p_exceed
    assert all(row.aborted == 0 for row in rows)


def test_wall_gravity_exit_ladder_approaches_limit(wall_gravity):
    plan, counts, _, exits = wall_gravity
    limit_fraction = counts.limit_exits / plan.n_paths
    assert limit_fraction > 0
    gaps = [abs(row.p_exit - limit_fraction) for row in exits.rows]
    assert all(later <= earlier for earlier, later in zip(gaps, gaps[1:]))
    assert exits.rows[-1].ci_low <= limit_fraction <= exits.rows[-1].ci_high


def test_thread_count_does_not_change_table():
    plan = ExperimentPlan(model_name="constant", **LADDER)
    assert estimate_exceedance(plan, threads=1).to_csv() == estimate_exceedance(plan, threads=0).to_csv()


@pytest.mark.parametrize("model_name", ["wall-gravity", "dlvo-pair", "rotational-pore"])
def test_exceedance_vanishes_along_mass_ladder(model_name):
    plan = ExperimentPlan(
        model_name=model_name,
        masses=(1e-1, 1e-2, 1e-3, 1e-4),
        epsilon=(0.1, 0.3),
        T=0.2,
        dt=1e-5,
        n_paths=200,
        master_seed=2024,
    )
    table = estimate_exceedance(plan)
    wide, narrow = table.for_epsilon(0.1), table.for_epsilon(0.3)
    assert wide[-1].p_exceed < wide[0].p_exceed
    assert narrow[-1].p_exceed <= narrow[0].p_exceed
    assert narrow[-1].p_exceed <= 0.1
    assert all(row.aborted == 0 for row in table.rows)
