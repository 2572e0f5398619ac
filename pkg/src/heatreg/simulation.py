"""Synthetic multi-population data generator and experiment runner.

Genotype-like predictors are built from latent AR(1) Gaussians thresholded at
per-column minor-allele frequencies (two haplotypes summed to a 0/1/2
dosage), so populations can differ in both correlation strength and allele
frequencies.  True coefficients put ``s`` nonzeros per population with a
controlled shared fraction, magnitudes inverse to the column's standard
deviation in that population, and mostly-positive signs.  The noise scale in
the reference population is set from the target signal-to-noise ratio and the
other populations follow the requested variance ratio.

All randomness flows from ``(scenario seed, replicate, substream)`` so every
component is independently reproducible.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import ndtri

from .dataset import MultiPopDataset, build_dataset
from .tuning import CVPlan, compute_metrics, fit_cv

log = logging.getLogger(__name__)

_STREAMS = {"genotypes": 0, "coefficients": 1, "noise": 2, "folds": 3,
            "test_genotypes": 4, "test_noise": 5}


def _rng(seed: int, replicate: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), int(replicate), _STREAMS[stream])))


@dataclass(frozen=True)
class SimScenario:
    """One simulation setting; list-valued experiments build many of these."""

    p: int = 200
    labels: tuple = ("AA", "EA")
    n_per_pop: tuple = (1000, 850)
    s: int = 20
    q: float = 0.8                      # shared-support proportion
    snr: float = 1.0                    # signal-to-noise in the reference
    sigma_ratio: float = 1.0            # noise SD ratio, others vs reference
    reference: str = "EA"
    rho_ld: Mapping[str, float] = field(
        default_factory=lambda: {"AA": 0.4, "EA": 0.7})
    maf_range: Mapping[str, tuple] = field(
        default_factory=lambda: {"AA": (0.05, 0.5), "EA": (0.05, 0.5)})
    sign_prob_positive: float = 0.8
    sign_sharing: str = "independent"   # or "shared"
    snr_formula: str = "definition"     # or "as_printed"
    unavailable: Mapping[str, tuple] = field(default_factory=dict)
    n_test: int = 400
    seed: int = 0

    def __post_init__(self):
        if len(self.labels) != len(set(self.labels)):
            raise ValueError("duplicate population labels")
        if len(self.n_per_pop) != len(self.labels):
            raise ValueError("n_per_pop must match labels")
        if self.reference not in self.labels:
            raise ValueError("reference population missing from labels")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if self.snr <= 0 or self.sigma_ratio <= 0:
            raise ValueError("snr and sigma_ratio must be positive")
        if self.s > self.p:
            raise ValueError("support size exceeds predictor count")
        if not 0.0 <= self.sign_prob_positive <= 1.0:
            raise ValueError("sign probability must lie in [0, 1]")
        if self.sign_sharing not in ("independent", "shared"):
            raise ValueError("sign_sharing must be 'independent' or 'shared'")
        if self.snr_formula not in ("definition", "as_printed"):
            raise ValueError("snr_formula must be 'definition' or 'as_printed'")
        for lab in self.labels:
            lo, hi = self.maf_range[lab]
            if not (0.0 < lo <= hi < 1.0):
                raise ValueError(f"degenerate MAF range for {lab!r}")

    @property
    def n_populations(self) -> int:
        return len(self.labels)

    def availability(self) -> np.ndarray:
        avail = np.ones((self.p, self.n_populations), dtype=bool)
        for j, lab in enumerate(self.labels):
            for k in self.unavailable.get(lab, ()):
                avail[int(k), j] = False
        return avail

    def describe(self) -> dict:
        return {
            "p": self.p, "s": self.s, "q": self.q, "snr": self.snr,
            "sigma_ratio": self.sigma_ratio,
            "n": ":".join(str(v) for v in self.n_per_pop),
        }


def draw_mafs(scenario: SimScenario, label: str,
              rng: np.random.Generator) -> np.ndarray:
    lo, hi = scenario.maf_range[label]
    return rng.uniform(lo, hi, scenario.p)


def gen_genotypes(scenario: SimScenario, label: str, n: int,
                  rng: np.random.Generator,
                  maf: np.ndarray | None = None) -> np.ndarray:
    """Dosage matrix in {0,1,2} with AR(1) latent correlation."""
    p = scenario.p
    r = float(scenario.rho_ld[label])
    if maf is None:
        maf = draw_mafs(scenario, label, rng)
    cut = ndtri(maf)
    dosage = np.zeros((n, p))
    carry = math.sqrt(max(0.0, 1.0 - r * r))
    for _ in range(2):  # two haplotypes
        eps = rng.standard_normal((n, p))
        Z = np.empty((n, p))
        Z[:, 0] = eps[:, 0]
        for k in range(1, p):
            Z[:, k] = r * Z[:, k - 1] + carry * eps[:, k]
        dosage += Z < cut[None, :]
    return dosage


def gen_coefficients(scenario: SimScenario, genotype_sds: np.ndarray,
                     rng: np.random.Generator,
                     availability: np.ndarray | None = None):
    """True coefficient matrix with controlled support overlap.

    Returns ``(B_star, shared_idx, specific_idx_by_pop)``.  Magnitudes are the
    reciprocal of the column's standard deviation within the population;
    signs are positive with the configured probability, drawn independently
    per population by default (one draw per shared index when
    ``sign_sharing='shared'``).
    """
    p, J, s = scenario.p, scenario.n_populations, scenario.s
    if availability is None:
        availability = scenario.availability()
    eligible = (genotype_sds > 0) & availability
    n_shared = int(math.floor(s * scenario.q))
    if abs(s * scenario.q - n_shared) > 1e-9:
        log.info("shared support %.2f rounded down to %d", s * scenario.q,
                 n_shared)
    pool_shared = np.flatnonzero(eligible.all(axis=1))
    if len(pool_shared) < n_shared:
        raise ValueError("not enough jointly eligible predictors for the "
                         "shared support")
    shared = np.sort(rng.choice(pool_shared, size=n_shared, replace=False))
    used = set(shared.tolist())
    specific = []
    for j in range(J):
        pool = [k for k in np.flatnonzero(eligible[:, j]) if k not in used]
        need = s - n_shared
        if len(pool) < need:
            raise ValueError("not enough predictors for disjoint "
                             "population-specific supports")
        pick = np.sort(rng.choice(np.asarray(pool), size=need, replace=False))
        used.update(pick.tolist())
        specific.append(pick)

    def draw_sign():
        return 1.0 if rng.random() < scenario.sign_prob_positive else -1.0

    B = np.zeros((p, J))
    for k in shared:
        if scenario.sign_sharing == "shared":
            sign = draw_sign()
            for j in range(J):
                B[k, j] = sign / genotype_sds[k, j]
        else:
            for j in range(J):
                B[k, j] = draw_sign() / genotype_sds[k, j]
    for j in range(J):
        for k in specific[j]:
            B[k, j] = draw_sign() / genotype_sds[k, j]
    return B, shared, specific


def gen_responses(scenario: SimScenario, Xs: Sequence[np.ndarray],
                  B_star: np.ndarray, rng: np.random.Generator,
                  sigma: np.ndarray | None = None,
                  intercepts: np.ndarray | None = None):
    """Responses with reference-population SNR control.

    Returns ``(ys, sigma, intercepts)``.  The reference noise SD is
    SD(signal)/sqrt(SNR) so that Var(signal)/Var(noise) equals the requested
    SNR; the historical ``as_printed`` switch multiplies by sqrt(SNR)
    instead.  Non-reference populations use ``sigma_ratio`` times the
    reference SD.
    """
    J = scenario.n_populations
    signals = [X @ B_star[:, j] for j, X in enumerate(Xs)]
    if sigma is None:
        ref = scenario.labels.index(scenario.reference)
        sd_sig = float(np.std(signals[ref]))
        if sd_sig == 0:
            raise ValueError("reference population has zero signal variance")
        if scenario.snr_formula == "definition":
            sigma_ref = sd_sig / math.sqrt(scenario.snr)
        else:
            sigma_ref = sd_sig * math.sqrt(scenario.snr)
        sigma = np.full(J, scenario.sigma_ratio * sigma_ref)
        sigma[ref] = sigma_ref
    if intercepts is None:
        intercepts = rng.standard_normal(J)
    ys = [intercepts[j] + signals[j] + sigma[j] * rng.standard_normal(len(signals[j]))
          for j in range(J)]
    return ys, np.asarray(sigma, float), np.asarray(intercepts, float)


@dataclass
class Replicate:
    """One generated train/test pair with its generating truth."""

    train: MultiPopDataset
    test: MultiPopDataset
    B_star: np.ndarray
    sigma_star: np.ndarray
    intercepts_star: np.ndarray
    fold_seed: int


def generate_replicate(scenario: SimScenario, replicate: int) -> Replicate:
    geno_rng = _rng(scenario.seed, replicate, "genotypes")
    coef_rng = _rng(scenario.seed, replicate, "coefficients")
    noise_rng = _rng(scenario.seed, replicate, "noise")
    test_geno_rng = _rng(scenario.seed, replicate, "test_genotypes")
    test_noise_rng = _rng(scenario.seed, replicate, "test_noise")
    avail = scenario.availability()

    mafs, Xs, Xs_test = [], [], []
    for j, lab in enumerate(scenario.labels):
        maf = draw_mafs(scenario, lab, geno_rng)
        mafs.append(maf)
        X = gen_genotypes(scenario, lab, scenario.n_per_pop[j], geno_rng, maf)
        X[:, ~avail[:, j]] = 0.0
        Xs.append(X)
    sds = np.column_stack([X.std(axis=0) for X in Xs])
    B_star, _, _ = gen_coefficients(scenario, sds, coef_rng, avail)
    ys, sigma, intercepts = gen_responses(scenario, Xs, B_star, noise_rng)

    for j, lab in enumerate(scenario.labels):
        Xt = gen_genotypes(scenario, lab, scenario.n_test, test_geno_rng,
                           mafs[j])
        Xt[:, ~avail[:, j]] = 0.0
        Xs_test.append(Xt)
    ys_test, _, _ = gen_responses(scenario, Xs_test, B_star, test_noise_rng,
                                  sigma=sigma, intercepts=intercepts)

    train = build_dataset(ys, Xs, scenario.labels, availability=avail)
    test = build_dataset(ys_test, Xs_test, scenario.labels, availability=avail)
    fold_seed = int(_rng(scenario.seed, replicate, "folds").integers(2 ** 31))
    return Replicate(train=train, test=test, B_star=B_star, sigma_star=sigma,
                     intercepts_star=intercepts, fold_seed=fold_seed)


# Lighter-than-library CV defaults keep full experiment grids tractable.
HARNESS_PLAN = CVPlan(folds=5, grid_size=30, gamma_ratios=(0.0, 0.5))


def _run_cell(index: int, scenario: SimScenario, replicate: int,
              estimators: Sequence[str], plan: CVPlan) -> list[dict]:
    import time

    from .tuning import build_cv_folds

    rep = generate_replicate(scenario, replicate)
    base = dict(scenario=index, **scenario.describe(), replicate=replicate)
    rows: list[dict] = []

    def emit(estimator, population, metric, value):
        rows.append(dict(base, estimator=estimator, population=population,
                         metric=metric, value=float(value)))

    cell_plan = replace(plan, seed=rep.fold_seed)
    folds_cache = None
    if any(e not in ("sen", "aen") for e in estimators):
        folds_cache = build_cv_folds(rep.train, cell_plan.folds,
                                     cell_plan.seed)
    for est in estimators:
        try:
            t0 = time.perf_counter()
            fit = fit_cv(rep.train, est, cell_plan,
                         sigma_true=rep.sigma_star if est == "heat-oracle"
                         else None,
                         pilot_folds=cell_plan.folds,
                         folds_cache=None if est in ("sen", "aen")
                         else folds_cache)
            seconds = time.perf_counter() - t0
            report = compute_metrics(fit, rep.B_star, rep.train, rep.test)
        except Exception:
            log.exception("estimator %s failed on scenario %d replicate %d",
                          est, index, replicate)
            emit(est, "all", "failed", 1.0)
            continue
        for lab in fit.population_labels:
            emit(est, lab, "rmse", report.rmse[lab])
            emit(est, lab, "rme", report.rme[lab])
            emit(est, lab, "r2_test", report.r2_test[lab])
            emit(est, lab, "sigma_hat", report.sigma_hat[lab])
            emit(est, lab, "support_size", report.support_sizes[lab])
        emit(est, "all", "support_total", report.support_total)
        emit(est, "all", "support_shared", report.support_shared)
        emit(est, "all", "seconds", seconds)
        if np.isfinite(fit.lam):
            emit(est, "all", "lambda", fit.lam)
            emit(est, "all", "gamma", fit.gamma)
    return rows


def run_experiment(scenarios: Sequence[SimScenario], estimators: Sequence[str],
                   replicates: int, out_path=None, *,
                   plan: CVPlan = HARNESS_PLAN, threads: int = 1):
    """Generate-fit-score every scenario x replicate cell; returns row dicts.

    Cells are independent jobs; failures are recorded per cell and do not
    abort the run.  Output rows are sorted so a fixed seed yields a
    byte-identical results file.
    """
    jobs = [(i, sc, r) for i, sc in enumerate(scenarios)
            for r in range(replicates)]
    chunks = Parallel(n_jobs=threads)(
        delayed(_run_cell)(i, sc, r, tuple(estimators), plan)
        for i, sc, r in jobs)
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r["scenario"], r["replicate"], r["estimator"],
                             r["population"], r["metric"]))
    if out_path is not None:
        # wall-clock rows go to a sibling file so the main results are
        # byte-identical across same-seed runs
        write_rows([r for r in rows if r["metric"] != "seconds"], out_path)
        timing_path = Path(out_path).with_suffix("")
        write_rows([r for r in rows if r["metric"] == "seconds"],
                   str(timing_path) + ".timings.csv")
    return rows


RESULT_COLUMNS = ("scenario", "p", "s", "q", "snr", "sigma_ratio", "n",
                  "replicate", "estimator", "population", "metric", "value")


def write_rows(rows: Sequence[dict], path, columns=RESULT_COLUMNS) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    q1, q2, q3 = np.percentile(np.asarray(values, float), [25, 50, 75])
    return float(q1), float(q2), float(q3)


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Quartiles and means per cell, plus paired per-replicate RMSE ratios."""
    groups: dict[tuple, list] = {}
    meta: dict[int, dict] = {}
    for row in rows:
        meta.setdefault(row["scenario"], {k: row[k] for k in
                                          ("p", "s", "q", "snr",
                                           "sigma_ratio", "n")})
        key = (row["scenario"], row["estimator"], row["population"],
               row["metric"])
        groups.setdefault(key, []).append((row["replicate"], row["value"]))
    out = []
    for (sc, est, pop, metric), pairs in sorted(groups.items()):
        vals = [v for _, v in pairs]
        q1, q2, q3 = _quartiles(vals)
        out.append(dict(scenario=sc, **meta[sc], estimator=est,
                        population=pop, metric=metric, q1=q1, median=q2,
                        q3=q3, mean=float(np.mean(vals)), count=len(vals)))

    # Paired RMSE ratios between estimators sharing replicates.
    by_cell: dict[tuple, dict] = {}
    for (sc, est, pop, metric), pairs in groups.items():
        if metric != "rmse":
            continue
        by_cell.setdefault((sc, pop), {})[est] = dict(pairs)
    for (sc, pop), per_est in sorted(by_cell.items()):
        for a in sorted(per_est):
            for b in sorted(per_est):
                if a == b:
                    continue
                common = sorted(set(per_est[a]) & set(per_est[b]))
                ratios = [per_est[a][r] / per_est[b][r] for r in common
                          if per_est[b][r] != 0]
                if not ratios:
                    continue
                q1, q2, q3 = _quartiles(ratios)
                out.append(dict(scenario=sc, **meta[sc],
                                estimator=f"{a}/{b}", population=pop,
                                metric="rmse_ratio", q1=q1, median=q2, q3=q3,
                                mean=float(np.mean(ratios)),
                                count=len(ratios)))
    return out


SUMMARY_COLUMNS = ("scenario", "p", "s", "q", "snr", "sigma_ratio", "n",
                   "estimator", "population", "metric", "q1", "median", "q3",
                   "mean", "count")


def write_summary(summary_rows: Sequence[dict], path) -> None:
    write_rows(summary_rows, path, columns=SUMMARY_COLUMNS)


def parse_scenario_config(path) -> tuple[list[SimScenario], dict]:
    """Build a scenario grid from a plain ``key = value`` file.

    List-valued keys (q, snr, sigma_ratio, n) expand as a Cartesian product.
    ``n`` entries use ':' between populations, e.g. ``n = 1000:850``.
    Returns the scenarios plus leftover run options (replicates, seed).
    """
    text = Path(path).read_text(encoding="utf-8")
    raw: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        raw[key.strip()] = [v.strip() for v in value.split(",") if v.strip()]

    def one(key, default=None, cast=float):
        if key not in raw:
            return default
        if len(raw[key]) != 1:
            raise ValueError(f"{key} must have a single value")
        return cast(raw[key][0])

    labels = tuple(raw.get("labels", ["AA:EA"])[0].split(":")) \
        if "labels" in raw else ("AA", "EA")
    base = SimScenario(
        p=int(one("p", 200, int)),
        s=int(one("s", 20, int)),
        labels=labels,
        reference=one("reference", labels[-1], str),
        sign_prob_positive=one("sign_prob", 0.8),
        sign_sharing=one("sign_sharing", "independent", str),
        snr_formula=one("snr_formula", "definition", str),
        n_test=int(one("n_test", 400, int)),
        seed=int(one("seed", 0, int)),
    )
    qs = [float(v) for v in raw.get("q", ["0.8"])]
    snrs = [float(v) for v in raw.get("snr", ["1.0"])]
    ratios = [float(v) for v in raw.get("sigma_ratio", ["1.0"])]
    ns = [tuple(int(x) for x in v.split(":"))
          for v in raw.get("n", ["1000:850"])]
    scenarios = [replace(base, q=q, snr=snr, sigma_ratio=ratio, n_per_pop=n)
                 for q in qs for snr in snrs for ratio in ratios for n in ns]
    options = {"replicates": int(one("replicates", 50, int)),
               "seed": base.seed}
    return scenarios, options
