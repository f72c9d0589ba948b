"""Module models: cubic power curves, the 3-hidden-unit MLP, and the
composed plant model graph."""
import numpy as np
import pytest

from chillerplant import surrogate
from chillerplant.simplant import ControlVector, OnOff, Weather
from chillerplant.surrogate import (
    CH_FEATURE_NAMES,
    MlpModel,
    PlantModelGraph,
    UntrainedModule,
    fit_mlp,
    fit_poly,
    graph_from_dict,
    graph_to_dict,
    load_bundle,
    mlp_loss_gradients,
    predict_graph,
    predict_poly,
    predict_total_batch,
    save_bundle,
    siso_dataset,
)
from chillerplant.telemetry import Degenerate, mape

from conftest import noiseless_scenario
from chillerplant.simplant import simulate
from chillerplant import enrich


class TestFitPoly:
    def test_exact_cubic_recovered_to_machine_precision(self):
        rng = np.random.default_rng(0)
        true = np.array([4.0, -0.3, 0.02, 0.0007])
        xs = rng.uniform(20, 100, 50)
        ys = np.polynomial.polynomial.polyval(xs, true)
        model = fit_poly(xs, ys)
        assert np.allclose(model.coefficients, true, rtol=1e-9, atol=1e-9)
        assert model.x_min == xs.min() and model.x_max == xs.max()

    def test_residuals_orthogonal_to_design_columns(self):
        rng = np.random.default_rng(1)
        xs = rng.uniform(20, 100, 300)
        ys = 0.0005 * xs ** 3 + rng.normal(0, 2.0, xs.size)
        model = fit_poly(xs, ys)
        resid = ys - predict_poly(model, xs)[0]
        design = np.vander(xs, 4, increasing=True)
        dots = design.T @ resid
        scale = np.linalg.norm(design, axis=0) * np.linalg.norm(ys)
        assert np.all(np.abs(dots) / scale <= 1e-8)

    def test_constant_input_is_degenerate(self):
        with pytest.raises(Degenerate):
            fit_poly(np.full(20, 85.0), np.full(20, 40.0))

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_poly(np.arange(5.0), np.arange(5.0))

    def test_extrapolation_flag(self):
        model = fit_poly(np.linspace(30, 70, 20), np.linspace(30, 70, 20) ** 3)
        _, inside = predict_poly(model, 50.0)
        _, outside = predict_poly(model, 90.0)
        assert not inside and outside

    def test_cube_law_coefficient_recovery_on_noise_free_pump_data(self):
        scn = noiseless_scenario(days=1)
        plan = enrich.plan_for_days(1, 6, 60, seed=3)
        controller = enrich.enrichment_controller(plan, None, seed=3)
        recs = simulate(scn, controller, 1440)
        for idx in range(3):
            xs, ys = siso_dataset(recs, "cwp", idx)
            model = fit_poly(xs, ys)
            rated = scn.plant.cwp_rated_kw[idx]
            a0, a1, a2, a3 = model.coefficients
            assert a3 * 100.0 ** 3 == pytest.approx(rated, rel=1e-3)
            assert abs(a1) <= 1e-6 * rated and abs(a2) <= 1e-6 * rated


class TestMlp:
    def test_hidden_width_is_three(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 2))
        y = X @ [1.0, -2.0] + 3.0
        model = fit_mlp(X, y, epochs=300, feature_names=("a", "b"))
        assert model.w1.shape == (2, 3)
        assert model.w2.shape == (3,)

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 4))
        y = rng.normal(size=40)
        w1 = rng.normal(size=(4, 3))
        b1 = rng.normal(size=3)
        w2 = rng.normal(size=3)
        b2 = rng.normal()
        _, (gw1, gb1, gw2, gb2) = mlp_loss_gradients(w1, b1, w2, b2, X, y)
        h = 1e-5

        def loss_at(params):
            return mlp_loss_gradients(*params, X, y)[0]

        for arr, grad in ((w1, gw1), (b1, gb1), (w2, gw2)):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                orig = arr[i]
                arr[i] = orig + h
                up = loss_at((w1, b1, w2, b2))
                arr[i] = orig - h
                dn = loss_at((w1, b1, w2, b2))
                arr[i] = orig
                fd = (up - dn) / (2 * h)
                assert abs(grad[i] - fd) <= 1e-4 * max(abs(fd), 1e-8)

    def test_learns_affine_target_to_under_half_percent(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, size=(1500, 3))
        y = 40.0 + X @ [5.0, -3.0, 2.0]
        model = fit_mlp(X, y, epochs=1500, seed=1)
        assert mape(y, model.predict(X)) <= 0.5

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(400, 2))
        y = np.sin(X[:, 0]) + X[:, 1]
        a = fit_mlp(X, y, epochs=200, seed=3)
        b = fit_mlp(X, y, epochs=200, seed=3)
        assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)
        assert a.b2 == b.b2

    def test_constant_feature_does_not_blow_up(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([rng.normal(size=500), np.full(500, 7.0)])
        y = 2.0 * X[:, 0] + 10.0
        model = fit_mlp(X, y, epochs=300)
        assert np.all(np.isfinite(model.predict(X)))

    def test_too_few_rows(self):
        with pytest.raises(Exception):
            fit_mlp(np.zeros((10, 2)), np.zeros(10))


class TestGraph:
    def test_ch_feature_names_are_the_composed_quantities(self):
        assert CH_FEATURE_NAMES == ("chfhdr", "cwfhdr", "cwshdr", "load_rt", "chsp")

    def test_untrained_graph_raises(self):
        with pytest.raises(UntrainedModule):
            predict_graph(PlantModelGraph(), ControlVector(90, 85, 30),
                          Weather(30, 60), 500.0, 7.0, OnOff())

    def test_all_off_predicts_zero(self):
        off = OnOff(ch=(0, 0, 0), ct=(0, 0, 0), cwp=(0, 0, 0), chwp=(0, 0, 0))
        out = predict_graph(PlantModelGraph(), ControlVector(90, 85, 30),
                            Weather(30, 60), 0.0, 7.0, off)
        assert out.total_kw == 0.0 and out.chfhdr == 0.0


@pytest.mark.usefixtures("graph")
class TestTrainedGraph:
    def test_chiller_power_responds_to_tower_speed(self, graph):
        w, onoff = Weather(30.0, 60.0), OnOff()
        lo = predict_graph(graph, ControlVector(90, 85, 30), w, 600.0, 7.0, onoff)
        hi = predict_graph(graph, ControlVector(90, 85, 90), w, 600.0, 7.0, onoff)
        assert hi.cwshdr < lo.cwshdr
        assert sum(hi.chkw) < sum(lo.chkw)

    def test_supply_temperature_invariant_to_condenser_pump_speed(self, graph):
        w, onoff = Weather(30.0, 60.0), OnOff()
        a = predict_graph(graph, ControlVector(40, 85, 60), w, 600.0, 7.0, onoff)
        b = predict_graph(graph, ControlVector(95, 85, 60), w, 600.0, 7.0, onoff)
        assert a.cwshdr == b.cwshdr
        assert "cwp_speed" not in graph.cwtm.feature_names

    def test_batch_prediction_matches_single_point(self, graph):
        w, onoff = Weather(31.0, 55.0), OnOff()
        controls = np.array([[70.0, 80.0, 50.0], [90.0, 60.0, 70.0]])
        total, chf, cwf, cwsh = predict_total_batch(
            graph, controls, w, 650.0, 7.0, onoff)
        for i, row in enumerate(controls):
            one = predict_graph(graph, ControlVector.from_array(row),
                                w, 650.0, 7.0, onoff)
            assert total[i] == pytest.approx(one.total_kw, rel=1e-12)
            assert chf[i] == pytest.approx(one.chfhdr, rel=1e-12)
            assert cwsh[i] == pytest.approx(one.cwshdr, rel=1e-12)

    def test_bundle_round_trip_is_exact(self, graph, tmp_path):
        path = tmp_path / "bundle.json"
        save_bundle(graph, path)
        reread = load_bundle(path)
        assert graph_to_dict(reread) == graph_to_dict(graph)
        w, onoff = Weather(29.0, 70.0), OnOff()
        a = predict_graph(graph, ControlVector(75, 65, 55), w, 500.0, 7.0, onoff)
        b = predict_graph(reread, ControlVector(75, 65, 55), w, 500.0, 7.0, onoff)
        assert a.total_kw == b.total_kw

    def test_report_has_all_table_rows(self, train_report):
        expected = (
            [f"CHWP{i}" for i in (1, 2, 3)] + ["AVG_CHWP"]
            + [f"CWP{i}" for i in (1, 2, 3)] + ["AVG_CWP"]
            + [f"CT{i}" for i in (1, 2, 3)] + ["AVG_CT"]
            + ["CHFM", "CWFM", "CWTM"]
            + [f"CH{i}" for i in (1, 2, 3)] + ["AVG_CH", "TOTAL"]
        )
        assert set(expected) <= set(train_report.rows)
        for name in expected:
            row = train_report.rows[name]
            assert len(row["fold_mapes"]) == 5
            assert row["mape"] == pytest.approx(
                float(np.mean(row["fold_mapes"])))

    def test_quantity_bounds_are_ordered(self, graph):
        for lo, hi in graph.quantity_bounds.values():
            assert lo < hi
