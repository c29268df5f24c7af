import numpy as np
import pytest

from pcabench.analysis import (
    WO_PCA,
    InfoKeptRecord,
    MetricsRecord,
    average_reduction,
    info_kept_table,
    load_expected_reductions,
    load_paper_fixture,
    mae,
    mse,
    pcc_matrix,
    pearson,
    reduction_table,
)
from pcabench.dataset import SeriesTable
from pcabench.errors import ContractError, InsufficientDataError, ShapeError
from pcabench import pca

from oracles import pearson_direct


def rec(ds, model, p, mse_v, mae_v=0.5, rt=10.0):
    return MetricsRecord(dataset=ds, model=model, p_components=p,
                         mse=mse_v, mae=mae_v, runtime_s=rt)


class TestMetrics:
    def test_mse_hand(self):
        assert mse([1, 2, 3, 4], [2, 4, 2, 6]) == 2.5

    def test_mae_hand(self):
        assert mae([1, 2, 3, 4], [2, 4, 2, 6]) == 1.5

    def test_perfect_prediction(self):
        y = np.arange(12.0).reshape(3, 4)
        assert mse(y, y) == 0.0
        assert mae(y, y) == 0.0

    def test_jensen_inequality(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            a = rng.normal(size=40)
            b = rng.normal(size=40)
            assert mse(a, b) >= mae(a, b) ** 2 - 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.zeros(3), np.zeros(4))
        with pytest.raises(ShapeError):
            mae(np.zeros((2, 2)), np.zeros(4))

    def test_empty(self):
        with pytest.raises(ContractError):
            mse(np.zeros(0), np.zeros(0))


class TestMetricsRecord:
    def test_control_label(self):
        r = rec("d", "m", None, 1.0)
        assert r.components_label == WO_PCA
        assert rec("d", "m", 4, 1.0).components_label == "4"

    def test_validation(self):
        with pytest.raises(ContractError):
            rec("d", "m", 2, -0.1)
        with pytest.raises(ContractError):
            rec("d", "m", 0, 1.0)
        with pytest.raises(ContractError):
            MetricsRecord("d", "m", 2, 1.0, 1.0, 0.0)


class TestPearson:
    def test_hand_value(self):
        # x=[1,2,3], y=[2,4,5]: r = 9/sqrt(84)
        assert pearson([1, 2, 3], [2, 4, 5]) == pytest.approx(9 / np.sqrt(84), abs=1e-12)

    def test_perfect_and_inverse(self):
        x = np.arange(10.0)
        assert pearson(x, 3 * x + 2) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, -0.5 * x + 7) == pytest.approx(-1.0, abs=1e-12)

    def test_against_direct_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.normal(size=60)
            y = 0.4 * x + rng.normal(size=60)
            assert pearson(x, y) == pytest.approx(pearson_direct(x, y), abs=1e-12)

    def test_independent_series_near_zero(self):
        rng = np.random.default_rng(3)
        vals = [pearson(rng.normal(size=500), rng.normal(size=500)) for _ in range(30)]
        assert abs(np.mean(vals)) < 0.02
        assert max(abs(v) for v in vals) < 0.2

    def test_constant_input_sentinel(self):
        assert pearson(np.ones(5), np.arange(5.0)) == 0.0

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            pearson([1.0], [2.0])


def small_table(t=40, m=3, seed=0):
    rng = np.random.default_rng(seed)
    ch = rng.normal(size=(t, m))
    tgt = ch @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=t)
    names = [f"c{i}" for i in range(m)]
    return SeriesTable(channels=ch, target=tgt, channel_names=names, target_name="y")


class TestPccMatrix:
    def test_layout(self):
        table = small_table()
        out = pcc_matrix(table)
        assert out.names == ["c0", "c1", "c2", "y"]
        assert out.values.shape == (4, 4)
        assert np.array_equal(out.values, out.values.T)
        assert np.all(np.diag(out.values) == 1.0)
        assert np.all(np.abs(out.values) <= 1.0)

    def test_entries_match_pairwise_pearson(self):
        table = small_table(seed=5)
        out = pcc_matrix(table)
        cols = [table.channels[:, i] for i in range(3)] + [table.target]
        for i in range(4):
            for j in range(4):
                assert out.values[i, j] == pytest.approx(
                    pearson_direct(cols[i], cols[j]), abs=1e-10)

    def test_constant_column_flagged(self):
        ch = np.column_stack([np.ones(20), np.arange(20.0)])
        tgt = np.arange(20.0) ** 2
        table = SeriesTable(channels=ch, target=tgt,
                            channel_names=["flat", "ramp"], target_name="y")
        out = pcc_matrix(table)
        assert out.constant_columns == [0]
        assert np.all(out.values[0, 1:] == 0.0)
        assert np.all(out.values[1:, 0] == 0.0)
        assert out.values[0, 0] == 1.0

    def test_appended_target_layout_not_duplicated(self):
        base = small_table(seed=2)
        ch = np.column_stack([base.channels, base.target])
        table = SeriesTable(channels=ch, target=base.target,
                            channel_names=["c0", "c1", "c2", "y"], target_name="y",
                            target_in_channels=True)
        out = pcc_matrix(table)
        assert out.names == ["c0", "c1", "c2", "y"]
        assert out.values.shape == (4, 4)

    def test_needs_two_rows(self):
        table = SeriesTable(channels=np.zeros((1, 2)), target=np.zeros(1),
                            channel_names=["a", "b"], target_name="y")
        with pytest.raises(InsufficientDataError):
            pcc_matrix(table)

    def test_csv_header_matches_row_order(self):
        out = pcc_matrix(small_table())
        lines = out.to_csv().splitlines()
        header = lines[0].split(",")[1:]
        row_labels = [line.split(",")[0] for line in lines[1:]]
        assert header == row_labels == out.names


class TestReductionTable:
    def test_single_group_hand_numbers(self):
        acc = [rec("E", "M", None, 2.0, rt=100.0), rec("E", "M", 4, 1.5, rt=40.0)]
        rows = reduction_table(acc)
        assert len(rows) == 1
        r = rows[0]
        assert r.best_p == 4
        assert r.mse_reduction_pct == pytest.approx(25.0)
        assert r.runtime_reduction_pct == pytest.approx(60.0)

    def test_published_worked_examples(self):
        acc, rt = load_paper_fixture()
        rows = {(r.dataset, r.model): r for r in reduction_table(acc, rt)}
        r = rows[("Electricity", "PatchTST")]
        assert r.mse_reduction_pct == pytest.approx(2.14, abs=0.02)
        assert r.runtime_reduction_pct == pytest.approx(88.68, abs=0.02)
        r = rows[("Electricity", "Crossformer")]
        assert r.mse_reduction_pct == pytest.approx(14.27, abs=0.02)
        assert r.runtime_reduction_pct == pytest.approx(76.64, abs=0.02)

    def test_baseline_wins_reports_zero(self):
        acc = [rec("D", "M", None, 1.0, rt=50.0), rec("D", "M", 2, 1.4, rt=20.0)]
        r = reduction_table(acc)[0]
        assert r.best_p is None
        assert r.mse_reduction_pct == 0.0
        assert r.runtime_reduction_pct == 0.0

    def test_tie_goes_to_smaller_p(self):
        acc = [rec("D", "M", None, 2.0), rec("D", "M", 8, 1.0, rt=30.0),
               rec("D", "M", 2, 1.0, rt=60.0)]
        r = reduction_table(acc)[0]
        assert r.best_p == 2
        assert r.best_runtime_s == 60.0

    def test_tie_with_baseline_prefers_pca_row(self):
        acc = [rec("D", "M", None, 1.0, rt=50.0), rec("D", "M", 3, 1.0, rt=10.0)]
        r = reduction_table(acc)[0]
        assert r.best_p == 3
        assert r.mse_reduction_pct == 0.0
        assert r.runtime_reduction_pct == pytest.approx(80.0)

    def test_scale_free_in_mse_units(self):
        acc = [rec("D", "M", None, 2.0), rec("D", "M", 2, 1.2), rec("D", "M", 4, 1.7)]
        base = reduction_table(acc)[0]
        scaled = [rec("D", "M", r.p_components, r.mse * 37.0) for r in acc]
        r2 = reduction_table(scaled)[0]
        assert r2.mse_reduction_pct == pytest.approx(base.mse_reduction_pct, abs=1e-12)

    def test_missing_baseline_rejected(self):
        with pytest.raises(ContractError):
            reduction_table([rec("D", "M", 2, 1.0)])

    def test_duplicate_baseline_rejected(self):
        with pytest.raises(ContractError):
            reduction_table([rec("D", "M", None, 1.0), rec("D", "M", None, 2.0),
                             rec("D", "M", 2, 0.5)])

    def test_no_pca_rows_rejected(self):
        with pytest.raises(ContractError):
            reduction_table([rec("D", "M", None, 1.0)])

    def test_missing_runtime_rejected(self):
        acc = [rec("D", "M", None, 2.0), rec("D", "M", 2, 1.0)]
        rt = [rec("D", "M", None, 2.0, rt=9.0)]
        with pytest.raises(ContractError):
            reduction_table(acc, rt)

    def test_duplicate_runtime_rejected(self):
        acc = [rec("D", "M", None, 2.0), rec("D", "M", 2, 1.0)]
        rt = [rec("D", "M", 2, 1.0, rt=5.0), rec("D", "M", 2, 1.0, rt=6.0),
              rec("D", "M", None, 2.0, rt=9.0)]
        with pytest.raises(ContractError):
            reduction_table(acc, rt)

    def test_rows_sorted_by_dataset_then_model(self):
        acc = [rec("B", "Z", None, 1.0), rec("B", "Z", 1, 0.5),
               rec("A", "M", None, 1.0), rec("A", "M", 1, 0.5)]
        rows = reduction_table(acc)
        assert [(r.dataset, r.model) for r in rows] == [("A", "M"), ("B", "Z")]


class TestFixtureReproduction:
    """Re-derive every published consolidated cell from the raw tables."""

    def test_all_cells_within_tolerance(self):
        acc, rt = load_paper_fixture()
        expected = load_expected_reductions()
        rows = reduction_table(acc, rt)
        checked = 0
        for r in rows:
            want_mse, want_rt = expected[(r.dataset, r.model)]
            assert r.mse_reduction_pct == pytest.approx(want_mse, abs=0.02), \
                (r.dataset, r.model)
            assert r.runtime_reduction_pct == pytest.approx(want_rt, abs=0.02), \
                (r.dataset, r.model)
            checked += 1
        assert checked == 24

    def test_model_averages(self):
        acc, rt = load_paper_fixture()
        expected = load_expected_reductions()
        avg = average_reduction(reduction_table(acc, rt))
        assert len(avg) == 6
        for model, (mse_avg, rt_avg) in avg.items():
            want_mse, want_rt = expected[("Average", model)]
            assert mse_avg == pytest.approx(want_mse, abs=0.02), model
            assert rt_avg == pytest.approx(want_rt, abs=0.02), model

    def test_negative_average_preserved(self):
        # one backbone slows down on average; that must survive as-is
        acc, rt = load_paper_fixture()
        avg = average_reduction(reduction_table(acc, rt))
        assert avg["iTransformer"][1] == pytest.approx(-8.08, abs=0.02)

    def test_fixture_shape(self):
        acc, rt = load_paper_fixture()
        assert len(acc) == 144
        datasets = {r.dataset for r in acc}
        assert datasets == {"ETTh1", "Weather", "Electricity", "Traffic"}
        models = {r.model for r in acc}
        assert len(models) == 6
        controls = [r for r in acc if r.p_components is None]
        assert len(controls) == 24


class TestAverageReduction:
    def test_first_appearance_order(self):
        acc = [rec("A", "N", None, 2.0), rec("A", "N", 1, 1.0),
               rec("A", "M", None, 2.0), rec("A", "M", 1, 1.5)]
        avg = average_reduction(reduction_table(acc))
        assert list(avg.keys()) == ["M", "N"]

    def test_full_precision_mean(self):
        rows = reduction_table([
            rec("A", "M", None, 3.0), rec("A", "M", 1, 2.0),
            rec("B", "M", None, 3.0), rec("B", "M", 1, 1.0),
        ])
        avg = average_reduction(rows)
        assert avg["M"][0] == pytest.approx((100 / 3 + 200 / 3) / 2, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            average_reduction([])


class TestInfoKeptTable:
    def test_against_fit(self):
        rng = np.random.default_rng(9)
        h = rng.normal(size=(60, 5)) @ np.diag([4.0, 2.0, 1.0, 0.5, 0.25])
        model = pca.fit(h, 3, method="exact")
        recs = info_kept_table([("toy", model)])
        assert len(recs) == 1
        r = recs[0]
        assert r.m_variables == 5
        assert r.p_components == 3
        assert r.dataset_ratio == 3 / 5
        assert r.information_kept == pytest.approx(
            float(np.sum(model.explained_variance_ratio[:3])), abs=1e-12)
        assert 0.0 < r.information_kept <= 1.0

    def test_ratio_must_be_exact(self):
        with pytest.raises(ContractError):
            InfoKeptRecord("d", 5, 3, 0.9, 0.61)
