import json

import numpy as np
import pytest

from heatreg import (ModelFileError, PenaltyParams, fit_heat, model_from_fit,
                     read_model, write_model)
from heatreg.model_file import (ModelFile, PopulationModel, export_weights,
                                predict_with_model)

from conftest import random_multipop


def _fitted_model(rng, seed=0):
    data, _, _ = random_multipop(rng)
    params = PenaltyParams.for_dataset(data, 0.05, 0.01)
    fit = fit_heat(data, params)
    return model_from_fit(fit, data, seed=seed), fit, data


class TestRoundTrip:
    def test_write_read_write_identical(self, tmp_path, rng):
        model, _, _ = _fitted_model(rng)
        p1 = tmp_path / "m1.json"
        p2 = tmp_path / "m2.json"
        write_model(model, p1)
        write_model(read_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_content(self, tmp_path, rng):
        model, fit, data = _fitted_model(rng, seed=42)
        path = tmp_path / "m.json"
        write_model(model, path)
        doc = json.loads(path.read_text())
        assert doc["format"] == "heatreg-model"
        assert doc["version"] == 1
        assert doc["seed"] == 42
        labels = [p["label"] for p in doc["populations"]]
        assert labels == list(data.labels)
        for p, col in zip(doc["populations"], fit.B_hat.T):
            assert len(p["coefficients"]) == np.count_nonzero(col)

    def test_version_mismatch(self, tmp_path, rng):
        model, _, _ = _fitted_model(rng)
        path = tmp_path / "m.json"
        write_model(model, path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFileError, match="version"):
            read_model(path)
        doc["format"] = "other"
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFileError, match="not a"):
            read_model(path)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ModelFileError):
            PopulationModel(label="A", n=5, intercept=0.0, sigma=0.0)


def _toy_model():
    return ModelFile(
        estimator="heat", lam=0.1, gamma=0.0, seed=0, converged=True,
        iterations=3, kkt=1e-6, standardize="unit_norm_bounded",
        populations=[
            PopulationModel("AA", 10, intercept=0.0, sigma=1.0,
                            coefficients={"s7": 2.0}),
            PopulationModel("EA", 12, intercept=1.5, sigma=2.0,
                            coefficients={}),
        ])


class TestPredict:
    def test_constant_for_empty_model(self):
        preds = predict_with_model(_toy_model(), ["s1"], np.ones((4, 1)),
                                   population="EA")
        np.testing.assert_array_equal(preds["EA"], np.full(4, 1.5))

    def test_single_coefficient(self):
        X = np.array([[0.0, 1.0], [0.0, 2.0]])
        preds = predict_with_model(_toy_model(), ["s1", "s7"], X,
                                   population="AA")
        np.testing.assert_array_equal(preds["AA"], [2.0, 4.0])

    def test_column_permutation_invariant(self):
        X1 = np.array([[1.0, 3.0]])
        X2 = X1[:, ::-1]
        p1 = predict_with_model(_toy_model(), ["s7", "zz"], X1)
        p2 = predict_with_model(_toy_model(), ["zz", "s7"], X2)
        np.testing.assert_array_equal(p1["AA"], p2["AA"])

    def test_missing_predictor_listed(self):
        with pytest.raises(ModelFileError, match="s7"):
            predict_with_model(_toy_model(), ["s1"], np.ones((2, 1)),
                               population="AA")

    def test_unknown_population(self):
        with pytest.raises(ModelFileError, match="no population"):
            predict_with_model(_toy_model(), ["s7"], np.ones((1, 1)),
                               population="XX")


class TestExport:
    def test_weight_table(self, tmp_path):
        path = tmp_path / "w.tsv"
        export_weights(_toy_model(), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "population\tpredictor\tweight"
        assert "AA\t(intercept)\t0.0" in lines
        assert "AA\ts7\t2.0" in lines
        assert "EA\t(intercept)\t1.5" in lines
