from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from config.settings import COMPUTE_COLUMN, EXIT_OK, RESULT_COLUMNS
from modules.core_types import OpKind, reader, server, writer
from modules.errors import ConfigError, InvalidParameterError
from modules.harness import (
    ScenarioConfig, apply_overrides, build_workload, expand_grid, load_config, load_grid, parse_config,
    parse_crash, parse_grid, report, run_scenario, sweep, write_rows_csv, write_run_outputs,
)

DATA_DIR = Path(__file__).parent.parent / "data"

MINIMAL = """
[scenario]
algorithm = "erato"

[topology]
kind = "star"
n_servers = 9

[clients]
readers = 10
"""

SMALL = ScenarioConfig(n_servers=9, quorum="matrix", n_readers=10, ops_per_client=3)


def problems_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.problems


class TestConfig:
    def test_minimal(self):
        config = parse_config(MINIMAL)
        assert config.algorithm == "erato"
        assert config.n_readers == 10
        assert config.quorum == "matrix"

    def test_sample_scenarios_load(self):
        for path in sorted((DATA_DIR / "scenarios").glob("*.toml")):
            load_config(path)

    def test_swmr_two_writers(self):
        problems = problems_of(MINIMAL + "writers = 2\n")
        assert any("SWMR requires one writer" in p for p in problems)
        assert all(p.startswith("clients.writers") for p in problems)

    def test_matrix_needs_square(self):
        problems = problems_of(MINIMAL.replace("n_servers = 9", "n_servers = 8"))
        assert any("square required" in p for p in problems)

    def test_reports_every_problem(self):
        text = MINIMAL + "writers = 3\n\n[workload]\nscheme = \"poisson\"\nops_per_client = -1\n\n[extra]\nx = 1\n"
        problems = problems_of(text)
        assert len(problems) == 4

    def test_wrong_type(self):
        assert problems_of(MINIMAL.replace("readers = 10", "readers = \"ten\"")) == [
            "clients.readers: 类型应为 int，收到 'ten'"
        ]

    def test_bad_toml(self):
        assert problems_of("[scenario")[0].startswith("toml:")

    def test_internal_algorithm_hidden(self):
        text = MINIMAL.replace('"erato"', '"erato_mutant"')
        with pytest.raises(ConfigError):
            parse_config(text)
        assert parse_config(text, allow_internal=True).algorithm == "erato_mutant"

    def test_crash_entries(self):
        assert parse_crash("s3@0.5") == (server(3), 0.5)
        with pytest.raises(InvalidParameterError):
            parse_crash("s3")
        config = parse_config(MINIMAL + '\n[faults]\ncrashes = ["s4@1.0", "r2@3"]\n')
        assert config.crash_schedule == {server(4): 1.0, reader(2): 3.0}

    def test_crashes_must_leave_quorum(self):
        crashes = ", ".join(f'"s{i}@0"' for i in (0, 4, 8))
        problems = problems_of(MINIMAL + f"\n[faults]\ncrashes = [{crashes}]\n")
        assert any("faults.crashes" in p for p in problems)

    def test_overrides(self):
        config = apply_overrides(SMALL, seed=7, jitter_max=0.0)
        assert (config.seed, config.jitter_max) == (7, 0.0)
        assert apply_overrides(SMALL) is SMALL
        with pytest.raises(ConfigError):
            apply_overrides(SMALL, cap_seconds=-1.0)


class TestWorkload:
    def test_fixed_offsets(self):
        config = replace(SMALL, n_readers=1, read_interval=2.0, write_interval=4.0, ops_per_client=3)
        workload = build_workload(config, np.random.default_rng(0))
        reads = [inv.time for inv in workload if inv.kind is OpKind.READ]
        writes = [inv.time for inv in workload if inv.kind is OpKind.WRITE]
        assert reads == [2.0, 4.0, 6.0]
        assert writes == [4.0, 8.0, 12.0]

    def test_op_ids_writers_first(self):
        config = replace(SMALL, n_readers=2, ops_per_client=2)
        workload = build_workload(config, np.random.default_rng(0))
        by_id = {inv.op_id: inv.process for inv in workload}
        assert sorted(by_id) == list(range(1, 7))
        assert [by_id[i] for i in (1, 2)] == [writer(1), writer(1)]

    def test_stochastic_reproducible(self):
        config = replace(SMALL, scheme="stochastic", n_readers=3)
        first = build_workload(config, np.random.default_rng([5, 1]))
        second = build_workload(config, np.random.default_rng([5, 1]))
        assert first == second

    def test_stochastic_within_interval(self):
        config = replace(SMALL, scheme="stochastic", n_readers=4, ops_per_client=10, read_interval=2.0)
        reads = [inv for inv in build_workload(config, np.random.default_rng(3)) if inv.kind is OpKind.READ]
        for r in reads:
            per_reader = sorted(x.time for x in reads if x.process == r.process)
            for i, at in enumerate(per_reader, start=1):
                assert (i - 1) * 2.0 < at <= i * 2.0

    def test_zero_ops(self):
        assert build_workload(replace(SMALL, ops_per_client=0), np.random.default_rng(0)) == []

    def test_distinct_write_values(self):
        config = replace(SMALL, algorithm="erato_mw", n_writers=3)
        values = [inv.value for inv in build_workload(config, np.random.default_rng(0)) if inv.kind is OpKind.WRITE]
        assert len(set(values)) == len(values) == 9


class TestRunScenario:
    def test_erato_fixed(self):
        result = run_scenario(SMALL)
        reads = [r for r in result.rows if r.op_kind == "read"]
        assert len(reads) == 30
        assert result.verdict.ok
        assert result.bound_violations == []
        assert result.exit_code == EXIT_OK

    def test_abd_reads_four_exchanges(self):
        result = run_scenario(replace(SMALL, algorithm="abd"))
        assert {r.exchanges for r in result.rows if r.op_kind == "read"} == {4}

    def test_erato_mw_with_crash(self):
        config = replace(SMALL, algorithm="erato_mw", n_writers=2, topology="series", crashes=((server(4), 0.0),))
        result = run_scenario(config)
        assert result.exit_code == EXIT_OK
        assert {r.exchanges for r in result.rows if r.op_kind == "write"} == {4}

    def test_no_operations(self):
        result = run_scenario(replace(SMALL, ops_per_client=0))
        assert result.rows == []
        assert result.verdict.ok

    def test_csv_bytes_deterministic(self, tmp_path):
        config = replace(SMALL, scheme="stochastic", jitter_max=0.004, seed=3)
        a = write_rows_csv(run_scenario(config).rows, tmp_path / "a.csv")
        b = write_rows_csv(run_scenario(config).rows, tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == ",".join(RESULT_COLUMNS)

    def test_compute_column_optional(self, tmp_path):
        result = run_scenario(replace(SMALL, record_compute=True))
        write_run_outputs(result, tmp_path)
        df = pd.read_csv(tmp_path / "results.csv")
        assert list(df.columns) == RESULT_COLUMNS + [COMPUTE_COLUMN]
        assert (tmp_path / "trace.tsv").exists()
        assert (tmp_path / "verdict.txt").read_text().startswith("verdict\tok")


GRID = """
[topology]
kind = "star"
n_servers = 9
quorum = "matrix"

[workload]
ops_per_client = 2

[grid]
scenario.algorithm = ["erato", "ohsam", "abd"]
clients.readers = [10, 20]

[sweep]
seeds = 1
"""


class TestSweep:
    def test_six_cells(self, tmp_path):
        grid = parse_grid(GRID)
        assert len(expand_grid(grid)) == 6
        paths = sweep(grid, tmp_path)
        assert len(paths) == 6
        summary = pd.read_csv(tmp_path / "summary.csv")
        reads = summary[summary["op_kind"] == "read"]
        assert len(reads) == 6
        table = report(paths, by=["algorithm"])
        assert set(table["algorithm"]) == {"erato", "ohsam", "abd"}

    def test_empty_grid(self, tmp_path):
        grid = parse_grid(GRID.split("[grid]")[0])
        assert sweep(grid, tmp_path / "out") == []
        assert not (tmp_path / "out").exists()

    def test_grid_axis_must_be_list(self):
        with pytest.raises(ConfigError):
            parse_grid(GRID.replace('["erato", "ohsam", "abd"]', '"erato"'))

    def test_sample_grids_expand(self):
        assert len(expand_grid(load_grid(DATA_DIR / "grids" / "swmr_star.toml"))) == 6
