import numpy as np
import pytest

from heatreg import SimScenario, gen_coefficients, gen_genotypes, gen_responses
from heatreg.simulation import (HARNESS_PLAN, draw_mafs, generate_replicate,
                                parse_scenario_config, run_experiment,
                                summarize, write_rows)

SMALL = dict(p=30, s=4, n_per_pop=(80, 70), n_test=50)


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestGenotypes:
    def test_values_are_dosages(self):
        sc = SimScenario(**SMALL, seed=1)
        X = gen_genotypes(sc, "AA", 100, _rng(1))
        assert set(np.unique(X)) <= {0.0, 1.0, 2.0}

    def test_uncorrelated_when_ld_zero(self):
        sc = SimScenario(p=30, s=4, rho_ld={"AA": 0.0, "EA": 0.0}, seed=2)
        X = gen_genotypes(sc, "AA", 2000, _rng(2))
        keep = X.std(axis=0) > 0
        C = np.corrcoef(X[:, keep], rowvar=False)
        off = np.abs(C[np.triu_indices_from(C, k=1)])
        assert np.quantile(off, 0.95) <= 0.1

    def test_common_allele_mean_dosage(self):
        sc = SimScenario(p=40, s=4,
                         maf_range={"AA": (0.5, 0.5), "EA": (0.5, 0.5)},
                         seed=3)
        X = gen_genotypes(sc, "AA", 4000, _rng(3))
        assert np.all(np.abs(X.mean(axis=0) - 1.0) <= 0.05)

    def test_identical_seeds_identical_matrices(self):
        sc = SimScenario(**SMALL, seed=4)
        X1 = gen_genotypes(sc, "EA", 50, _rng(9))
        X2 = gen_genotypes(sc, "EA", 50, _rng(9))
        np.testing.assert_array_equal(X1, X2)

    def test_degenerate_maf_range_rejected(self):
        with pytest.raises(ValueError, match="MAF"):
            SimScenario(maf_range={"AA": (0.0, 0.5), "EA": (0.05, 0.5)})


class TestCoefficients:
    def _sds(self, sc, seed=0):
        r = _rng(seed)
        sds = np.column_stack(
            [gen_genotypes(sc, lab, 400, r).std(axis=0)
             for lab in sc.labels])
        sds[sds == 0] = 0.3
        return sds

    def test_full_overlap(self):
        sc = SimScenario(**SMALL, q=1.0, seed=5)
        B, shared, specific = gen_coefficients(sc, self._sds(sc), _rng(5))
        assert len(shared) == sc.s
        assert all(len(s) == 0 for s in specific)
        np.testing.assert_array_equal(B[:, 0] != 0, B[:, 1] != 0)

    def test_disjoint_supports(self):
        sc = SimScenario(p=30, s=5, q=0.0, seed=6)
        B, shared, specific = gen_coefficients(sc, self._sds(sc), _rng(6))
        assert len(shared) == 0
        s0, s1 = map(set, (np.flatnonzero(B[:, 0]), np.flatnonzero(B[:, 1])))
        assert len(s0) == len(s1) == 5
        assert not (s0 & s1)

    def test_magnitudes_inverse_sd(self):
        sc = SimScenario(**SMALL, q=0.5, seed=7)
        sds = self._sds(sc, 7)
        B, _, _ = gen_coefficients(sc, sds, _rng(7))
        nz = B != 0
        np.testing.assert_allclose(np.abs(B[nz]), (1.0 / sds)[nz])

    def test_sign_frequency(self):
        sc = SimScenario(p=60, s=10, q=0.5, seed=8)
        sds = self._sds(sc, 8)
        signs = []
        for rep in range(500):
            B, _, _ = gen_coefficients(sc, sds, _rng(rep))
            signs.extend(np.sign(B[B != 0.0]))
        frac = np.mean(np.asarray(signs) > 0)   # 10000 draws
        assert abs(frac - 0.8) <= 0.03

    def test_shared_sign_mode(self):
        sc = SimScenario(p=40, s=8, q=1.0, sign_sharing="shared", seed=9)
        sds = self._sds(sc, 9)
        for rep in range(20):
            B, shared, _ = gen_coefficients(sc, sds, _rng(rep))
            np.testing.assert_array_equal(np.sign(B[shared, 0]),
                                          np.sign(B[shared, 1]))

    def test_unavailable_columns_excluded(self):
        sc = SimScenario(p=20, s=6, q=0.5, unavailable={"AA": tuple(range(10))},
                         seed=10)
        sds = self._sds(sc, 10)
        B, _, _ = gen_coefficients(sc, sds, _rng(10))
        assert np.all(B[:10, 0] == 0.0)


class TestResponses:
    def test_snr_definition(self):
        sc = SimScenario(p=40, s=8, n_per_pop=(2000, 2000), snr=1.0, seed=11)
        rep_rng = _rng(11)
        Xs = [gen_genotypes(sc, lab, 2000, rep_rng) for lab in sc.labels]
        sds = np.column_stack([X.std(axis=0) for X in Xs])
        sds[sds == 0] = 0.3
        B, _, _ = gen_coefficients(sc, sds, rep_rng)
        ys, sigma, intercepts = gen_responses(sc, Xs, B, rep_rng)
        j = sc.labels.index("EA")
        ratio = np.var(Xs[j] @ B[:, j]) / sigma[j] ** 2
        assert abs(ratio - 1.0) <= 0.1

    def test_sigma_ratio_exact(self):
        sc = SimScenario(**SMALL, sigma_ratio=1.0, seed=12)
        rep = generate_replicate(sc, 0)
        assert rep.sigma_star[0] == rep.sigma_star[1]

    def test_doubling_beta_doubles_sigma(self):
        sc = SimScenario(**SMALL, seed=13)
        r = _rng(13)
        Xs = [gen_genotypes(sc, lab, 300, r) for lab in sc.labels]
        sds = np.column_stack([X.std(axis=0) for X in Xs])
        sds[sds == 0] = 0.3
        B, _, _ = gen_coefficients(sc, sds, r)
        _, s1, _ = gen_responses(sc, Xs, B, _rng(0))
        _, s2, _ = gen_responses(sc, Xs, 2 * B, _rng(0))
        np.testing.assert_allclose(s2, 2 * s1)

    def test_as_printed_formula_inverts(self):
        sc1 = SimScenario(**SMALL, snr=4.0, seed=14)
        sc2 = SimScenario(**SMALL, snr=4.0, snr_formula="as_printed", seed=14)
        r1 = generate_replicate(sc1, 0)
        r2 = generate_replicate(sc2, 0)
        np.testing.assert_allclose(r2.sigma_star, 4.0 * r1.sigma_star)


class TestReplicatesAndExperiment:
    def test_replicate_deterministic(self):
        sc = SimScenario(**SMALL, seed=15)
        r1 = generate_replicate(sc, 3)
        r2 = generate_replicate(sc, 3)
        np.testing.assert_array_equal(r1.train.blocks[0].X,
                                      r2.train.blocks[0].X)
        np.testing.assert_array_equal(r1.B_star, r2.B_star)
        assert r1.fold_seed == r2.fold_seed

    def test_unavailable_padded_in_datasets(self):
        sc = SimScenario(**SMALL, unavailable={"EA": (0, 1)}, seed=16)
        rep = generate_replicate(sc, 0)
        j = rep.train.label_index("EA")
        assert np.all(rep.train.blocks[j].X[:, :2] == 0.0)
        assert np.all(rep.B_star[:2, j] == 0.0)

    def test_sen_only_rows(self, tmp_path):
        sc = SimScenario(**SMALL, seed=17)
        rows = run_experiment([sc], ["sen"], 1, tmp_path / "r.csv",
                              plan=HARNESS_PLAN)
        per_pop = [r for r in rows if r["population"] in ("AA", "EA")
                   and r["metric"] == "rmse"]
        assert len(per_pop) == 2
        assert (tmp_path / "r.csv").exists()

    def test_oracle_near_interpolation(self):
        sc = SimScenario(p=25, s=4, n_per_pop=(150, 120), snr=1e6,
                         n_test=40, seed=18)
        rows = run_experiment([sc], ["heat-oracle"], 1, plan=HARNESS_PLAN)
        vals = [r["value"] for r in rows if r["metric"] == "rmse"]
        assert max(vals) < 0.01

    def test_byte_identical_results_files(self, tmp_path):
        sc = SimScenario(**SMALL, seed=19)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_experiment([sc], ["sen"], 2, a, plan=HARNESS_PLAN)
        run_experiment([sc], ["sen"], 2, b, plan=HARNESS_PLAN)
        assert a.read_bytes() == b.read_bytes()

    def test_summarize_quartiles_and_ratios(self):
        rows = []
        for rep, (v1, v2) in enumerate([(0.2, 0.4), (0.3, 0.3), (0.1, 0.4)]):
            base = dict(scenario=0, p=10, s=2, q=0.5, snr=1.0,
                        sigma_ratio=1.0, n="10:10", replicate=rep)
            rows.append(dict(base, estimator="heat", population="AA",
                             metric="rmse", value=v1))
            rows.append(dict(base, estimator="sen", population="AA",
                             metric="rmse", value=v2))
        summary = summarize(rows)
        med = {(r["estimator"], r["metric"]): r["median"] for r in summary}
        assert med[("heat", "rmse")] == 0.2
        ratios = [r for r in summary if r["metric"] == "rmse_ratio"
                  and r["estimator"] == "heat/sen"]
        assert len(ratios) == 1
        assert np.isclose(ratios[0]["mean"], np.mean([0.5, 1.0, 0.25]))

    def test_failure_recorded_not_raised(self, tmp_path, monkeypatch):
        import heatreg.simulation as sim

        def boom(*a, **k):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(sim, "fit_cv", boom)
        sc = SimScenario(**SMALL, seed=20)
        rows = sim.run_experiment([sc], ["heat"], 1, plan=HARNESS_PLAN)
        assert any(r["metric"] == "failed" and r["value"] == 1.0
                   for r in rows)


class TestScenarioConfig:
    def test_cartesian_grid(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            "p = 40\ns = 5\nq = 0.6, 0.9\nsnr = 1\n"
            "sigma_ratio = 1, 2\nn = 100:90\nreplicates = 3\nseed = 7\n")
        scenarios, options = parse_scenario_config(cfg)
        assert len(scenarios) == 4
        assert options["replicates"] == 3
        assert {sc.q for sc in scenarios} == {0.6, 0.9}
        assert all(sc.n_per_pop == (100, 90) for sc in scenarios)
        assert all(sc.seed == 7 for sc in scenarios)

    def test_bad_line(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("p 40\n")
        with pytest.raises(ValueError, match="expected"):
            parse_scenario_config(cfg)

    def test_write_rows_roundtrip(self, tmp_path):
        rows = [dict(scenario=0, p=1, s=1, q=0.1, snr=1.0, sigma_ratio=1.0,
                     n="5:5", replicate=0, estimator="sen",
                     population="AA", metric="rmse", value=0.125)]
        path = tmp_path / "rows.csv"
        write_rows(rows, path)
        text = path.read_text().splitlines()
        assert text[0].startswith("scenario,")
        assert "0.125" in text[1]
