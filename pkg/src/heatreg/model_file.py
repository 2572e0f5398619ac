"""Portable fitted-model files and weight export.

Models are stored as canonical JSON (sorted keys, two-space indent, trailing
newline) so that write -> read -> write is byte-identical and files diff
cleanly.  Only nonzero coefficients are stored, keyed by predictor name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_FORMAT = "heatreg-model"
MODEL_VERSION = 1


class ModelFileError(ValueError):
    pass


@dataclass
class PopulationModel:
    label: str
    n: int
    intercept: float
    sigma: float
    coefficients: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ModelFileError(f"population {self.label!r}: sigma must be positive")


@dataclass
class ModelFile:
    estimator: str
    lam: float | None
    gamma: float | None
    seed: int
    converged: bool
    iterations: int
    kkt: float
    standardize: str
    populations: list[PopulationModel]
    version: int = MODEL_VERSION


def model_from_fit(fit, data, seed: int = 0) -> ModelFile:
    """Package a fit into its portable form (original units, sparse)."""
    pops = []
    for col, lab in enumerate(fit.population_labels):
        j = data.label_index(lab)
        coefs = {}
        for k in np.flatnonzero(fit.B_hat[:, col]):
            coefs[data.feature_names[k]] = float(fit.B_hat[k, col])
        pops.append(PopulationModel(
            label=lab, n=data.blocks[j].n,
            intercept=float(fit.intercepts[col]),
            sigma=float(fit.sigma_hat[col]),
            coefficients=dict(sorted(coefs.items())),
        ))
    lam = None if not np.isfinite(fit.lam) else float(fit.lam)
    gamma = None if not np.isfinite(fit.gamma) else float(fit.gamma)
    return ModelFile(
        estimator=fit.estimator, lam=lam, gamma=gamma, seed=int(seed),
        converged=bool(fit.converged), iterations=int(fit.iterations),
        kkt=float(fit.kkt), standardize=data.options.mode, populations=pops,
    )


def _to_dict(model: ModelFile) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": model.version,
        "estimator": model.estimator,
        "lambda": model.lam,
        "gamma": model.gamma,
        "seed": model.seed,
        "converged": model.converged,
        "iterations": model.iterations,
        "kkt": model.kkt,
        "standardize": model.standardize,
        "populations": [
            {
                "label": p.label,
                "n": p.n,
                "intercept": p.intercept,
                "sigma": p.sigma,
                "coefficients": p.coefficients,
            }
            for p in model.populations
        ],
    }


def write_model(model: ModelFile, path) -> None:
    text = json.dumps(_to_dict(model), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_model(path) -> ModelFile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFileError(
            f"{path}: unsupported version {doc.get('version')!r} "
            f"(expected {MODEL_VERSION})")
    pops = [
        PopulationModel(
            label=p["label"], n=int(p["n"]), intercept=float(p["intercept"]),
            sigma=float(p["sigma"]),
            coefficients={str(k): float(v)
                          for k, v in p["coefficients"].items()},
        )
        for p in doc["populations"]
    ]
    return ModelFile(
        estimator=doc["estimator"], lam=doc["lambda"], gamma=doc["gamma"],
        seed=int(doc["seed"]), converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]), kkt=float(doc["kkt"]),
        standardize=doc["standardize"], populations=pops,
        version=int(doc["version"]),
    )


def export_weights(model: ModelFile, path) -> None:
    """Flat tab-separated weights: population, predictor, weight.

    Intercepts are exported with the pseudo-predictor name ``(intercept)``.
    """
    lines = ["population\tpredictor\tweight"]
    for p in model.populations:
        lines.append(f"{p.label}\t(intercept)\t{p.intercept!r}")
        for name, w in sorted(p.coefficients.items()):
            lines.append(f"{p.label}\t{name}\t{w!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def predict_with_model(model: ModelFile, names: list[str], X: np.ndarray,
                       population: str | None = None) -> dict[str, np.ndarray]:
    """Predictions per population for a named-column data matrix.

    Columns are joined by name; every nonzero coefficient must have a
    matching column, otherwise the missing names are reported.
    """
    index = {s: k for k, s in enumerate(names)}
    targets = (model.populations if population is None else
               [p for p in model.populations if p.label == population])
    if population is not None and not targets:
        raise ModelFileError(f"model has no population {population!r}")
    out = {}
    for p in targets:
        missing = sorted(set(p.coefficients) - set(index))
        if missing:
            raise ModelFileError(
                f"population {p.label!r}: data is missing predictor(s) "
                + ", ".join(missing))
        pred = np.full(X.shape[0], p.intercept)
        for name, w in p.coefficients.items():
            pred += w * X[:, index[name]]
        out[p.label] = pred
    return out
