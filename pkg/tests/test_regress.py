import math

import numpy as np
import pytest

from perfcast.errors import (FormatError, InsufficientData, OpMismatch,
                             PerfcastError)
from perfcast.regress import (FitReport, TrainedRegressor, default_candidate_grid,
                              fit_forest, fit_gbt, fit_tree, load_model, mape,
                              predict_latency, save_model, select_model)
from perfcast.workload import OperatorKind, WorkloadVector


def _grid_samples(fn, lo=1, hi=10):
    return [((float(a), float(b)), fn(a, b))
            for a in range(lo, hi + 1) for b in range(lo, hi + 1)]


class TestFitTree:
    def test_constant_target_is_single_leaf(self):
        X = [[1, 2], [3, 4], [5, 6]]
        t = fit_tree(X, [7.0, 7.0, 7.0])
        assert t.n_nodes == 1
        assert t.predict([[0, 0]])[0] == 7.0

    def test_step_function_recovered_exactly(self):
        X = [[float(i)] for i in range(1, 11)]
        y = [1.0] * 5 + [9.0] * 5
        t = fit_tree(X, y, max_depth=1)
        assert t.depth == 1
        assert 5.0 < t.threshold[0] < 6.0  # midpoint of the jump
        assert t.predict([[2.0]])[0] == 1.0
        assert t.predict([[8.0]])[0] == 9.0

    def test_depth_zero_predicts_mean(self):
        t = fit_tree([[1.0], [2.0]], [2.0, 4.0], max_depth=0)
        assert t.n_nodes == 1
        assert t.predict([[5.0]])[0] == 3.0

    def test_deep_tree_interpolates_training_set(self):
        samples = _grid_samples(lambda a, b: a * 10.0 + b)
        X = [list(f) for f, _ in samples]
        y = [t for _, t in samples]
        tree = fit_tree(X, y, max_depth=12)
        assert np.allclose(tree.predict(X), y)

    def test_min_samples_leaf_respected(self):
        X = [[float(i)] for i in range(8)]
        t = fit_tree(X, [0, 0, 0, 0, 1, 1, 1, 1], max_depth=10, min_samples_leaf=4)
        assert t.depth <= 1

    def test_empty_input_rejected(self):
        with pytest.raises(InsufficientData):
            fit_tree(np.empty((0, 2)), np.empty(0))


class TestFitForest:
    def test_degenerate_forest_equals_tree(self):
        samples = _grid_samples(lambda a, b: a + b)
        model = fit_forest(samples, n_trees=1, bootstrap=False, log_target=False)
        X = [list(f) for f, _ in samples]
        tree = fit_tree(X, [t for _, t in samples])
        assert np.allclose(model.predict(X), tree.predict(X))

    def test_seed_determinism(self, tmp_path):
        samples = _grid_samples(lambda a, b: a * b)
        for i, seed in enumerate((3, 3)):
            save_model(fit_forest(samples, n_trees=20, seed=seed),
                       tmp_path / f"m{i}.model")
        assert (tmp_path / "m0.model").read_bytes() == \
            (tmp_path / "m1.model").read_bytes()

    def test_predictions_bounded_by_training_targets(self):
        samples = _grid_samples(lambda a, b: a * b)
        model = fit_forest(samples, n_trees=30, log_target=False)
        preds = model.predict([[0.0, 0.0], [100.0, 100.0], [5.0, 5.0]])
        assert preds.min() >= 1.0 and preds.max() <= 100.0

    def test_extrapolation_flag_uses_training_hull(self):
        model = fit_forest(_grid_samples(lambda a, b: a + b), n_trees=2)
        assert not model.is_extrapolation((5.0, 5.0))
        assert model.is_extrapolation((11.0, 5.0))
        assert model.is_extrapolation((5.0, 0.5))


class TestFitGbt:
    def test_zero_estimators_predict_mean(self):
        samples = [((1.0, 1.0), 2.0), ((2.0, 2.0), 6.0)]
        model = fit_gbt(samples, n_estimators=0, log_target=False)
        assert model.predict([[9.0, 9.0]])[0] == 4.0

    def test_one_stage_with_unit_rate_fits_residual(self):
        X = [[float(i)] for i in range(1, 11)]
        y = [1.0] * 5 + [9.0] * 5
        samples = list(zip([tuple(x) for x in X], y))
        model = fit_gbt(samples, n_estimators=1, learning_rate=1.0,
                        max_depth=4, log_target=False)
        assert np.allclose(model.predict(X), y)

    def test_boosting_reduces_training_error(self):
        samples = _grid_samples(lambda a, b: a * a + 3 * b, hi=8)
        X = [list(f) for f, _ in samples]
        y = [t for _, t in samples]
        few = fit_gbt(samples, n_estimators=3, max_depth=2, log_target=False)
        many = fit_gbt(samples, n_estimators=60, max_depth=2, log_target=False)
        assert mape(y, many.predict(X)) < mape(y, few.predict(X))

    def test_log_target_requires_positive(self):
        with pytest.raises(PerfcastError):
            fit_gbt([((1.0,), 0.0), ((2.0,), 1.0)] * 5)


class TestSelectModel:
    def test_requires_ten_samples(self):
        with pytest.raises(InsufficientData):
            select_model([((1.0,), 1.0)] * 9)

    def test_single_candidate_selected(self):
        samples = _grid_samples(lambda a, b: a * b)
        model, report = select_model(samples, [{"kind": "gbt", "n_estimators": 30,
                                                "learning_rate": 0.3, "max_depth": 4}])
        assert report.selected == 0
        assert model.kind == "gbt"
        assert model.train_stats["n_samples"] == len(samples)

    def test_tie_breaks_toward_smaller_model(self):
        # constant target: every candidate scores zero error
        samples = [((float(i), float(j)), 5.0) for i in range(5) for j in range(5)]
        grid = [{"kind": "forest", "n_trees": 50, "max_depth": 8},
                {"kind": "forest", "n_trees": 10, "max_depth": 4},
                {"kind": "forest", "n_trees": 10, "max_depth": 2}]
        _, report = select_model(samples, grid)
        assert report.selected == 2

    def test_selection_prefers_expressive_model(self):
        samples = _grid_samples(lambda a, b: a * b * 100.0)
        grid = [{"kind": "gbt", "n_estimators": 0},      # constant predictor
                {"kind": "gbt", "n_estimators": 100, "learning_rate": 0.3,
                 "max_depth": 6}]
        model, report = select_model(samples, grid)
        assert report.selected == 1
        assert report.val_mape[1] < report.val_mape[0]

    def test_report_shape(self):
        samples = _grid_samples(lambda a, b: a + b, hi=5)
        _, report = select_model(samples, default_candidate_grid()[:3])
        assert len(report.val_mape) == 3
        assert report.n_train + report.n_val == len(samples)
        assert sum(r["selected"] for r in report.rows()) == 1

    def test_empty_grid_rejected(self):
        with pytest.raises(PerfcastError):
            select_model(_grid_samples(lambda a, b: a + b, hi=4), [])


class TestPredictLatency:
    def test_op_mismatch(self):
        model = fit_forest([((1.0, 1.0, 1.0), 2.0)] * 3, n_trees=1,
                           op=OperatorKind.LINEAR1, direction="fwd")
        vec = WorkloadVector(OperatorKind.LINEAR2, "fwd", (1, 1, 1))
        with pytest.raises(OpMismatch):
            predict_latency(model, vec)
        bad_dir = WorkloadVector(OperatorKind.LINEAR1, "bwd", (1, 1, 1))
        with pytest.raises(OpMismatch):
            predict_latency(model, bad_dir)

    def test_piecewise_constant_target_recovered(self):
        samples = [((float(a), float(b), 1.0), 10.0 if a > 4 else 2.0)
                   for a in range(1, 9) for b in range(1, 9)]
        model = fit_forest(samples, n_trees=10, bootstrap=False,
                           op=OperatorKind.LINEAR1, direction="fwd")
        vec = WorkloadVector(OperatorKind.LINEAR1, "fwd", (6, 3, 1))
        assert predict_latency(model, vec) == pytest.approx(10.0)


class TestModelFiles:
    def _fit(self):
        samples = _grid_samples(lambda a, b: a * 3.0 + b * b)
        return fit_gbt(samples, n_estimators=40, max_depth=4,
                       op=OperatorKind.QKT, direction="bwd")

    def test_round_trip_is_prediction_identical(self, tmp_path):
        model = self._fit()
        save_model(model, tmp_path / "m.model")
        loaded = load_model(tmp_path / "m.model")
        X = np.random.default_rng(0).uniform(0, 12, size=(200, 2))
        assert np.array_equal(model.predict(X), loaded.predict(X))
        assert loaded.op is OperatorKind.QKT
        assert loaded.direction == "bwd"
        assert loaded.hyperparams == model.hyperparams
        assert loaded.feat_min == model.feat_min

    def test_save_is_deterministic(self, tmp_path):
        save_model(self._fit(), tmp_path / "a.model")
        save_model(self._fit(), tmp_path / "b.model")
        assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.model"
        p.write_text("not-a-model\n")
        with pytest.raises(FormatError):
            load_model(p)

    def test_truncated_file_reports_offset(self, tmp_path):
        p = tmp_path / "m.model"
        save_model(self._fit(), p)
        text = p.read_text()
        p.write_text(text[:len(text) // 2].rsplit("\n", 1)[0] + "\n")
        with pytest.raises(FormatError) as exc:
            load_model(p)
        assert exc.value.offset > 0


def test_mape_definition():
    assert mape([10.0, 20.0], [11.0, 18.0]) == pytest.approx((0.1 + 0.1) / 2)
