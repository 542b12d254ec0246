from __future__ import annotations

import math
import pickle

import numpy as np
import pytest

from app.core.errors import DomainError, InsufficientGridError, ReplicationError
from app.core.harness import (
    consistency_curve,
    generated_data,
    real_data_trajectories,
    replication_frame,
    run_experiment,
    run_replication,
)
from app.core.simulation import gen_gaussian_topk
from app.models.experiment import ExperimentConfig, SummaryRow, VctConfig
from app.models.pvalues import PValueBatch
from app.services.rng import replication_rng


def _topk_config(**overrides) -> ExperimentConfig:
    data = {
        "setting": "topk",
        "m_grid": [100, 400],
        "alpha_grid": [0.1, 0.2],
        "replications": 12,
        "methods": ["Simes", "KR", "Wellner-adapt", "DKW-interp"],
        "seed": 7,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def _without_timing(rows: list[SummaryRow]) -> list[dict]:
    return [row.model_dump(exclude={"wall_time"}) for row in rows]


# ---------------------------------------------------------------------------
# Top-k
# ---------------------------------------------------------------------------


def test_simes_median_is_alpha_over_delta():
    rows = run_experiment(_topk_config(alpha_grid=[0.2]), progress=False)
    simes = [row for row in rows if row.method == "Simes"]
    assert {row.m for row in simes} == {100, 400}
    for row in simes:
        assert row.q25 == row.median == row.q75 == 0.8
        assert 0.0 <= row.coverage_rate <= 1.0
        assert row.coverage_se == pytest.approx(math.sqrt(row.coverage_rate * (1 - row.coverage_rate) / 12))


def test_rows_follow_grid_order():
    cfg = _topk_config()
    rows = run_experiment(cfg, progress=False)
    keys = [(row.m, row.alpha, row.method) for row in rows]
    expected = [(m, a, tag) for m in cfg.m_grid for a in cfg.alpha_grid for tag in cfg.methods]
    assert keys == expected


def test_adaptive_rows_report_pi0():
    rows = run_experiment(_topk_config(), progress=False)
    for row in rows:
        if row.method == "Wellner-adapt":
            assert 0.0 < row.pi0_hat <= 1.0
        else:
            assert row.pi0_hat is None


def test_results_do_not_depend_on_workers():
    serial = run_experiment(_topk_config(), progress=False)
    again = run_experiment(_topk_config(), progress=False)
    parallel = run_experiment(_topk_config(workers=2), progress=False)
    assert _without_timing(serial) == _without_timing(again) == _without_timing(parallel)


def test_interpolated_variants_skipped_above_cap():
    rows = run_experiment(_topk_config(interp_max_m=200), progress=False)
    interp_m = {row.m for row in rows if row.method == "DKW-interp"}
    assert interp_m == {100}


def test_no_coverage_mode():
    rows = run_experiment(_topk_config(compute_coverage=False, methods=["KR", "Hybrid"]), progress=False)
    assert all(row.coverage_rate is None and row.coverage_se is None for row in rows)
    assert all(0.0 < row.median <= 1.0 for row in rows)


def test_replication_error_wraps_cause():
    cfg = _topk_config(delta=0.5, methods=["KR"])
    with pytest.raises(ReplicationError) as info:
        run_experiment(cfg, progress=False)
    assert isinstance(info.value.__cause__, DomainError)
    assert info.value.setting == "topk"
    assert info.value.m == 100


def test_replication_error_survives_pickling():
    err = ReplicationError("online", 500, 3, reason="DomainError: x")
    clone = pickle.loads(pickle.dumps(err))
    assert (clone.setting, clone.m, clone.replication, clone.reason) == ("online", 500, 3, "DomainError: x")
    assert str(clone) == str(err)


def test_replication_frame_is_sorted():
    cfg = _topk_config(methods=["KR", "Simes"])
    records = [record for unit in [(400, 1), (100, 0), (400, 0)] for record in run_replication(cfg, unit)]
    frame = replication_frame(records, cfg)
    keys = list(zip(frame["m"], frame["alpha"], frame["method"], frame["rep"], strict=True))
    assert keys[0] == (100, 0.1, "KR", 0)
    assert keys[-1] == (400, 0.2, "Simes", 1)
    assert keys == sorted(keys, key=lambda k: (k[0], k[1], ["KR", "Simes"].index(k[2]), k[3]))


def test_generated_data_matches_replication():
    cfg = _topk_config()
    batch = generated_data(cfg, 100, 2)
    expected = gen_gaussian_topk(cfg.gaussian.with_m(100), replication_rng(cfg.seed, 100, 2))
    assert np.array_equal(batch.values, expected.values)
    assert np.array_equal(batch.labels, expected.labels)


# ---------------------------------------------------------------------------
# Pré-ordenado e online
# ---------------------------------------------------------------------------


def test_preordered_experiment():
    cfg = ExperimentConfig(
        setting="preordered",
        vct=VctConfig.lf_setting(),
        m_grid=[300],
        alpha_grid=[0.2],
        replications=8,
        methods=["Freedman", "KR", "KRU", "KRU-interp"],
        s_alpha_multiple=0.5,
        seed=3,
    )
    rows = run_experiment(cfg, progress=False)
    assert [row.method for row in rows] == cfg.methods
    for row in rows:
        assert 0.0 <= row.q25 <= row.median <= row.q75 <= 1.0
        assert row.mean_rejections > 0
        assert 0.0 <= row.coverage_rate <= 1.0
    by_method = {row.method: row for row in rows}
    assert by_method["KRU-interp"].median <= 1.0


def test_online_experiment():
    cfg = ExperimentConfig(setting="online", m_grid=[400], alpha_grid=[0.1], replications=5, seed=11)
    rows = run_experiment(cfg, progress=False)
    assert [row.method for row in rows] == ["Freedman", "KR", "KRU"]
    assert len({row.mean_rejections for row in rows}) == 1
    assert all(row.coverage_rate is not None for row in rows)


def test_real_data_trajectories():
    batch = PValueBatch(values=np.array([0.001, 0.5, 0.0001, 0.9, 0.02]))
    table = real_data_trajectories(batch, [0.05, 0.1], 0.25)
    assert list(table.columns) == ["alpha", "k", "alpha_k", "rejected", "R_k", "bound_freed", "bound_kr", "bound_kru"]
    assert len(table) == 10
    assert table["k"].tolist() == [1, 2, 3, 4, 5] * 2
    for _, group in table.groupby("alpha"):
        assert group["R_k"].is_monotonic_increasing
        assert group["rejected"].sum() == group["R_k"].iloc[-1]


# ---------------------------------------------------------------------------
# Consistência
# ---------------------------------------------------------------------------


def _row(m: int, method: str, median: float, alpha: float = 0.2) -> SummaryRow:
    return SummaryRow(m=m, alpha=alpha, method=method, q25=median, median=median, q75=median, mean_rejections=1.0)


def test_consistency_requires_three_sizes():
    with pytest.raises(InsufficientGridError):
        consistency_curve([_row(100, "Simes", 0.8), _row(1000, "Simes", 0.8)])


def test_consistency_slopes():
    ms = [100, 1_000, 10_000, 100_000]
    rows = [_row(m, "Simes", 0.8) for m in ms] + [_row(m, "KRU", 0.2 + m**-0.5) for m in ms]
    series = {s.method: s for s in consistency_curve(rows)}
    assert series["Simes"].slope == pytest.approx(0.0, abs=1e-9)
    assert series["Simes"].gap == pytest.approx([0.6] * 4)
    assert series["KRU"].slope == pytest.approx(-0.5, abs=1e-6)
    assert series["KRU"].m == ms


def test_consistency_short_series_has_nan_slope():
    rows = [_row(m, "Simes", 0.8) for m in (100, 1_000, 10_000)] + [_row(100, "KR", 0.5)]
    series = {s.method: s for s in consistency_curve(rows)}
    assert math.isnan(series["KR"].slope)
