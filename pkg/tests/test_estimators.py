import numpy as np
import pytest
from sklearn.base import clone

from heatreg import (AenRegressor, HeatApproxRegressor, HeatRegressor,
                     SenRegressor)


def two_pop_arrays(rng, n=120, p=10):
    X = rng.standard_normal((n, p))
    pops = np.where(np.arange(n) % 2 == 0, "AA", "EA")
    beta = {"AA": np.zeros(p), "EA": np.zeros(p)}
    beta["AA"][:3] = [1.0, -0.8, 0.6]
    beta["EA"][:3] = [0.9, -0.7, 0.5]
    sigma = {"AA": 1.0, "EA": 0.5}
    y = np.empty(n)
    for lab in ("AA", "EA"):
        m = pops == lab
        y[m] = 0.3 + X[m] @ beta[lab] + sigma[lab] * rng.standard_normal(m.sum())
    return X, y, pops


class TestHeatRegressor:
    def test_fit_predict_roundtrip(self, rng):
        X, y, pops = two_pop_arrays(rng)
        est = HeatRegressor(lam=0.05, gamma=0.01)
        assert est.fit(X, y, populations=pops) is est
        assert est.coef_.shape == (10, 2)
        assert est.sigma_.shape == (2,)
        pred = est.predict(X, populations=pops)
        # matches the underlying fit's own prediction path
        j = est.population_labels_.index("AA")
        m = pops == "AA"
        manual = est.intercept_[j] + X[m] @ est.coef_[:, j]
        np.testing.assert_allclose(pred[m], manual, atol=1e-12)
        assert est.score(X, y, populations=pops) > 0.2

    def test_single_population_default(self, rng):
        X = rng.standard_normal((60, 6))
        y = X[:, 0] + 0.5 * rng.standard_normal(60)
        est = HeatRegressor(lam=0.02).fit(X, y)
        pred = est.predict(X)
        assert pred.shape == (60,)

    def test_cv_mode(self, rng):
        X, y, pops = two_pop_arrays(rng)
        est = HeatRegressor(cv_folds=3, grid_size=6, gamma_ratios=(0.0,))
        est.fit(X, y, populations=pops)
        assert est.result_.cv is not None

    def test_sklearn_protocol(self):
        est = HeatRegressor(lam=0.1, gamma=0.05, rho_mode="unit")
        params = est.get_params()
        assert params["lam"] == 0.1 and params["rho_mode"] == "unit"
        est2 = clone(est)
        assert est2.get_params() == params
        est2.set_params(gamma=0.2)
        assert est2.gamma == 0.2

    def test_validation_errors(self, rng):
        X, y, pops = two_pop_arrays(rng)
        est = HeatRegressor(lam=0.05)
        with pytest.raises(ValueError):
            est.fit(X, y[:-1], populations=pops)
        est.fit(X, y, populations=pops)
        with pytest.raises(ValueError, match="populations is required"):
            est.predict(X)
        with pytest.raises(ValueError, match="no population"):
            est.predict(X[:4], populations=["XX"] * 4)
        with pytest.raises(ValueError, match="number of features"):
            est.predict(X[:, :5], populations=pops[:120])

    def test_oracle_mode_requires_sigma(self, rng):
        X, y, pops = two_pop_arrays(rng)
        with pytest.raises(ValueError, match="sigma_fixed"):
            HeatRegressor(lam=0.05, rho_mode="fixed").fit(X, y,
                                                          populations=pops)
        est = HeatRegressor(lam=0.05, rho_mode="fixed",
                            sigma_fixed=(1.0, 0.5))
        est.fit(X, y, populations=pops)
        np.testing.assert_allclose(est.sigma_, [1.0, 0.5])


class TestOtherEstimators:
    def test_heat_approx(self, rng):
        X, y, pops = two_pop_arrays(rng)
        est = HeatApproxRegressor(lam=0.05, gamma=0.0, pilot_folds=4)
        est.fit(X, y, populations=pops)
        assert est.result_.pilot is not None
        assert est.predict(X, populations=pops).shape == (120,)

    def test_sen(self, rng):
        X, y, pops = two_pop_arrays(rng)
        est = SenRegressor(cv_folds=4, n_lambda=20).fit(X, y,
                                                        populations=pops)
        assert est.coef_.shape == (10, 2)
        # columns are fitted independently
        assert not np.allclose(est.coef_[:, 0], est.coef_[:, 1])

    def test_aen_shares_coefficients(self, rng):
        X, y, pops = two_pop_arrays(rng)
        est = AenRegressor(cv_folds=4, n_lambda=20).fit(X, y,
                                                        populations=pops)
        np.testing.assert_array_equal(est.coef_[:, 0], est.coef_[:, 1])
        assert est.intercept_[0] != est.intercept_[1]
