import math

import pytest

from fedgs_sim.config import parse_config
from fedgs_sim.harness import (
    CSV_VERSION_LINE,
    emit_difficulty_curve,
    fedgs_overhead,
    geometric_grid,
    run_experiment,
    write_curve_csv,
    write_results_csv,
)

TINY_CONFIG = """
[experiment]
seeds = 1 2
rounds = 3
strategies = fedgs fedavg

[strategy]
batch_size = 4
local_epochs = 1

[optimizer]
kind = adamw
learning_rate = 0.01

[difficulty]
log_base = 100.0
threshold = 7.0
regime = whole_mask

[client 1]
n_samples = 8
image_size = 16 16
small_radius_range = 1.5 2.0
large_radius_range = 4.0 5.0
small_fraction = 0.25
seed_offset = 1

[client 2]
n_samples = 8
image_size = 16 16
small_radius_range = 1.5 2.0
large_radius_range = 4.0 5.0
small_fraction = 0.25
seed_offset = 2

[test]
n_samples = 10
image_size = 16 16
small_radius_range = 1.5 2.0
large_radius_range = 4.0 5.0
small_fraction = 0.3
seed_offset = 50
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_CONFIG)
    return parse_config(path)


def strip_wall_ms(csv_text: str) -> str:
    # wall_ms is the final column and the only nondeterministic one
    return "\n".join(line.rsplit(",", 1)[0] for line in csv_text.strip().splitlines())


class TestRunExperiment:
    def test_row_count_and_order(self, tiny_cfg):
        rows = run_experiment(tiny_cfg)
        assert len(rows) == 2 * 2 * 3  # seeds x strategies x rounds
        keys = [(r.seed, r.strategy, r.round) for r in rows]
        assert keys == sorted(keys)

    def test_rerun_is_byte_identical_up_to_wall_time(self, tiny_cfg, tmp_path):
        a_path, b_path = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(run_experiment(tiny_cfg), a_path)
        write_results_csv(run_experiment(tiny_cfg), b_path)
        assert strip_wall_ms(a_path.read_text()) == strip_wall_ms(b_path.read_text())

    def test_threads_do_not_change_results(self, tiny_cfg, tmp_path):
        serial = tmp_path / "serial.csv"
        threaded = tmp_path / "threaded.csv"
        write_results_csv(run_experiment(tiny_cfg, threads=1), serial)
        write_results_csv(run_experiment(tiny_cfg, threads=4), threaded)
        assert strip_wall_ms(serial.read_text()) == strip_wall_ms(threaded.read_text())

    def test_fedavg_only_leaves_eta_at_sentinel_one(self, tiny_cfg, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(tiny_cfg, strategies=("fedavg",))
        rows = run_experiment(cfg)
        assert all(r.mean_eta == 1.0 and r.max_eta == 1.0 for r in rows)

    def test_row_invariants(self, tiny_cfg):
        for row in run_experiment(tiny_cfg):
            assert 0.0 <= row.dice <= 1.0
            if row.dice_s is not None:
                assert 0.0 <= row.dice_s <= 1.0
            assert 1.0 <= row.mean_eta < 3.0
            assert row.steps_total == 2 * 2  # 2 clients x ceil(8/4) batches x 1 epoch

    def test_csv_layout(self, tiny_cfg, tmp_path):
        path = tmp_path / "out.csv"
        write_results_csv(run_experiment(tiny_cfg), path)
        lines = path.read_text().splitlines()
        assert lines[0] == CSV_VERSION_LINE
        assert lines[1] == "seed,strategy,round,dice,dice_s,dice_l,mean_eta,max_eta,steps_total,wall_ms"
        assert len(lines) == 2 + 12

    def test_overhead_report(self, tiny_cfg):
        rows = run_experiment(tiny_cfg)
        overhead = fedgs_overhead(rows)
        assert overhead is not None and overhead > -1.0
        only_fedgs = [r for r in rows if r.strategy == "fedgs"]
        assert fedgs_overhead(only_fedgs) is None


class TestDifficultyCurve:
    def test_raw_at_log_base_is_tanh_one(self):
        points = emit_difficulty_curve(100.0, 150.0, grid=[100.0])
        assert points[0].raw == pytest.approx(math.tanh(1.0), abs=1e-15)

    def test_gated_column_is_zero_below_threshold(self):
        points = emit_difficulty_curve(100.0, 150.0, grid=[10.0, 100.0, 149.0])
        assert all(p.delta == 0.0 for p in points)
        above = emit_difficulty_curve(100.0, 150.0, grid=[150.0, 200.0])
        assert all(p.delta == p.raw > 0.0 for p in above)

    def test_raw_strictly_increasing(self):
        points = emit_difficulty_curve(100.0, 150.0, grid=geometric_grid(1.5, 1e7, 60))
        raws = [p.raw for p in points]
        assert all(b > a for a, b in zip(raws, raws[1:]))

    def test_default_grid_and_bounds(self):
        points = emit_difficulty_curve(100.0, 150.0)
        assert points[0].inverse_area == 1.0
        assert points[-1].inverse_area == pytest.approx(1e7)
        with pytest.raises(ValueError):
            emit_difficulty_curve(100.0, 150.0, grid=[0.5])
        with pytest.raises(ValueError):
            emit_difficulty_curve(100.0, 150.0, grid=[1e8])

    def test_curve_csv(self, tmp_path):
        path = tmp_path / "curve.csv"
        write_curve_csv(emit_difficulty_curve(100.0, 150.0, grid=[150.0]), path)
        lines = path.read_text().splitlines()
        assert lines[0] == CSV_VERSION_LINE
        assert lines[1] == "inverse_area,raw,delta"
        a_inv, raw, delta = lines[2].split(",")
        assert float(a_inv) == 150.0
        assert float(raw) == float(delta)
        # full float precision survives the round trip
        assert float(raw) == emit_difficulty_curve(100.0, 150.0, grid=[150.0])[0].raw
