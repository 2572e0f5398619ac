"""Multi-population data model.

Each population contributes a response vector and a design matrix over a
(possibly population-specific) predictor set.  Predictors are identified by
name; the union of all names forms the shared column space, and populations
missing a predictor get a column of exact zeros ("padding").  Per-population
centering absorbs intercepts, and column scaling enforces the blockwise
normalization ``||X[:, k]||^2 <= n`` that lasso-type fitting assumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

SCALE_MODES = ("none", "unit_norm_bounded", "unit_variance")


class DataError(ValueError):
    """Raised for malformed input files or inconsistent population data."""


@dataclass(frozen=True)
class StandardizeOptions:
    """How population blocks are put on a common scale.

    mode:
        "unit_norm_bounded" rescales each available column so its squared
        Euclidean norm equals the population sample size (default);
        "unit_variance" divides by the sample standard deviation (ddof=1);
        "none" leaves columns untouched.
    center:
        Mean-center the response and available columns per population, so
        intercepts stay unpenalized and are recovered after fitting.
    """

    mode: str = "unit_norm_bounded"
    center: bool = True

    def __post_init__(self):
        if self.mode not in SCALE_MODES:
            raise ValueError(f"unknown standardization mode {self.mode!r}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PopulationBlock:
    """One population's data after centering/scaling.

    ``y`` and ``X`` are the working (centered, scaled) arrays; the recorded
    means/scales invert the transformation exactly, so coefficients fitted on
    the block can be mapped back to the original units.
    """

    label: str
    y: np.ndarray            # (n,) centered response
    X: np.ndarray            # (n, p) padded, centered, scaled design
    column_means: np.ndarray  # (p,) zero for padded columns
    column_scales: np.ndarray  # (p,) one for padded columns; X_raw = X*scale + mean
    response_mean: float

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def raw(self) -> tuple[np.ndarray, np.ndarray]:
        """Reconstruct the original (uncentered, unscaled) response and design."""
        y = self.y + self.response_mean
        X = self.X * self.column_scales + self.column_means
        return y, X


def standardize(block: PopulationBlock, mode: str = "unit_norm_bounded",
                available: np.ndarray | None = None) -> PopulationBlock:
    """Rescale the available columns of a block, composing with prior scales.

    Columns with zero norm are left untouched (they carry no information and
    are expected to be masked out by the caller).
    """
    if mode not in SCALE_MODES:
        raise ValueError(f"unknown standardization mode {mode!r}")
    X = np.array(block.X, dtype=np.float64)
    n, p = X.shape
    if available is None:
        available = np.linalg.norm(X, axis=0) > 0
    scale = np.ones(p)
    if mode != "none":
        if mode == "unit_norm_bounded":
            size = np.linalg.norm(X, axis=0) / np.sqrt(n)
        else:  # unit_variance
            size = X.std(axis=0, ddof=1) if n > 1 else np.zeros(p)
        adjust = available & (size > 0)
        scale[adjust] = size[adjust]
        X[:, adjust] /= scale[adjust]
    return replace(
        block,
        X=_freeze(X),
        column_scales=_freeze(block.column_scales * scale),
    )


@dataclass(frozen=True, eq=False)
class MultiPopDataset:
    """Immutable bundle of population blocks over a shared predictor union."""

    blocks: tuple[PopulationBlock, ...]
    feature_names: tuple[str, ...]
    availability: np.ndarray         # (p, J) bool, after zero-variance demotion
    declared_availability: np.ndarray  # (p, J) bool, as declared by the inputs
    options: StandardizeOptions
    demoted: tuple[tuple[str, str], ...] = ()  # (feature, population) pairs

    def __post_init__(self):
        p = len(self.feature_names)
        J = len(self.blocks)
        if self.availability.shape != (p, J):
            raise DataError("availability mask shape mismatch")
        for j, b in enumerate(self.blocks):
            if b.n < 1:
                raise DataError(f"population {b.label!r} is empty")
            if b.X.shape[1] != p:
                raise DataError(f"population {b.label!r} has wrong design width")
            dead = ~self.availability[:, j]
            if np.any(b.X[:, dead] != 0.0):
                raise DataError(
                    f"population {b.label!r} has nonzero data in unavailable columns")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.blocks)

    @property
    def n_populations(self) -> int:
        return len(self.blocks)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_total(self) -> int:
        return sum(b.n for b in self.blocks)

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown population {label!r}") from None

    def block(self, label: str) -> PopulationBlock:
        return self.blocks[self.label_index(label)]

    def subset(self, rows: Mapping[str, np.ndarray]) -> "MultiPopDataset":
        """Rebuild the dataset from a row subset of each population.

        Standardization is recomputed on the subset, so cross-validation folds
        see exactly the pipeline a fresh dataset would.
        """
        ys, Xs = [], []
        for b in self.blocks:
            idx = np.asarray(rows[b.label])
            y_raw, X_raw = b.raw()
            ys.append(y_raw[idx])
            Xs.append(X_raw[idx])
        return build_dataset(
            ys, Xs, self.labels,
            feature_names=self.feature_names,
            availability=self.declared_availability,
            options=self.options,
        )


def _as_matrix(X, label: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"population {label!r}: design must be 2-D")
    if not np.all(np.isfinite(X)):
        raise DataError(f"population {label!r}: non-finite design entries")
    return X


def build_dataset(ys: Sequence, Xs: Sequence, labels: Sequence[str],
                  feature_names: Sequence[str] | None = None,
                  availability: np.ndarray | None = None,
                  options: StandardizeOptions = StandardizeOptions()) -> MultiPopDataset:
    """Assemble a dataset from in-memory arrays.

    All designs must share the same column count and ordering.  Columns marked
    unavailable are zeroed (padding semantics); columns that are constant
    within a population are demoted to unavailable rather than rejected, since
    they carry no signal and would break scaling.
    """
    if len(ys) != len(Xs) or len(ys) != len(labels):
        raise DataError("ys, Xs and labels must have equal length")
    if len(ys) == 0:
        raise DataError("at least one population is required")
    if len(set(labels)) != len(labels):
        raise DataError("duplicate population labels")
    J = len(labels)
    Xs = [_as_matrix(X, lab) for X, lab in zip(Xs, labels)]
    p = Xs[0].shape[1]
    for X, lab in zip(Xs, labels):
        if X.shape[1] != p:
            raise DataError(f"population {lab!r}: inconsistent predictor count")
    if feature_names is None:
        feature_names = tuple(f"x{k:04d}" for k in range(p))
    else:
        feature_names = tuple(str(s) for s in feature_names)
        if len(feature_names) != p:
            raise DataError("feature_names length does not match design width")
        if len(set(feature_names)) != p:
            raise DataError("duplicate predictor names")
    if availability is None:
        declared = np.ones((p, J), dtype=bool)
    else:
        declared = np.asarray(availability, dtype=bool).copy()
        if declared.shape != (p, J):
            raise DataError("availability mask must be (n_features, n_populations)")

    avail = declared.copy()
    demoted: list[tuple[str, str]] = []
    blocks = []
    for j, (y, X, lab) in enumerate(zip(ys, Xs, labels)):
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise DataError(f"population {lab!r}: response/design row mismatch")
        if y.shape[0] == 0:
            raise DataError(f"population {lab!r} is empty")
        if not np.all(np.isfinite(y)):
            raise DataError(f"population {lab!r}: non-finite response entries")
        n = y.shape[0]
        X = X.copy()
        X[:, ~declared[:, j]] = 0.0

        means = np.zeros(p)
        y_mean = 0.0
        if options.center:
            y_mean = float(y.mean())
            y = y - y_mean
            live = declared[:, j]
            means[live] = X[:, live].mean(axis=0)
            X[:, live] -= means[live]

        # Demote constant columns: after centering they are (numerically) zero
        # and cannot be scaled or estimated.
        live = np.flatnonzero(declared[:, j])
        cols = X[:, live]
        flat = (np.ptp(cols, axis=0) == 0.0) | (
            np.linalg.norm(cols, axis=0)
            <= 1e-12 * np.sqrt(n) * np.maximum(1.0, np.abs(means[live])))
        for k in live[flat]:
            avail[k, j] = False
            demoted.append((feature_names[k], lab))
            if not options.center:
                means[k] = X[0, k]
            X[:, k] = 0.0

        block = PopulationBlock(
            label=str(lab),
            y=_freeze(y),
            X=_freeze(X),
            column_means=_freeze(means),
            column_scales=_freeze(np.ones(p)),
            response_mean=y_mean,
        )
        block = standardize(block, options.mode, available=avail[:, j])
        blocks.append(block)

    avail.flags.writeable = False
    declared.flags.writeable = False
    return MultiPopDataset(
        blocks=tuple(blocks),
        feature_names=feature_names,
        availability=avail,
        declared_availability=declared,
        options=options,
        demoted=tuple(demoted),
    )


def read_manifest(path) -> dict[str, Path]:
    """Parse a ``label = file`` manifest; paths resolve relative to it."""
    path = Path(path)
    files: dict[str, Path] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'label = file'")
        label, _, target = line.partition("=")
        label, target = label.strip(), target.strip()
        if not label or not target:
            raise DataError(f"{path}:{lineno}: empty label or path")
        if label in files:
            raise DataError(f"{path}:{lineno}: duplicate population {label!r}")
        files[label] = (path.parent / target).resolve()
    if not files:
        raise DataError(f"{path}: manifest lists no populations")
    return files


def _read_table(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = "\t" if "\t" in lines[0] else ","
    reader = csv.reader(lines, delimiter=delim)
    header = next(reader)
    header = [h.strip() for h in header]
    if not header or header[0] != "response":
        raise DataError(f"{path}:1: first column must be named 'response'")
    names = header[1:]
    if len(set(names)) != len(names):
        dup = sorted({s for s in names if names.count(s) > 1})
        raise DataError(f"{path}:1: duplicate predictor name(s) {dup}")
    rows = []
    for lineno, row in enumerate(reader, 2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DataError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(cell) for cell in row]
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise DataError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    return data[:, 0], data[:, 1:], names


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_dataset(files, options: StandardizeOptions = StandardizeOptions()) -> MultiPopDataset:
    """Load per-population delimited files (or a manifest path) into a dataset.

    The union predictor set is ordered lexicographically by name, so the
    resulting indexing does not depend on file order.  Predictors absent from
    a population's file are padded with zero columns and masked unavailable.
    """
    if not isinstance(files, Mapping):
        files = read_manifest(files)
    parsed = {label: _read_table(p) for label, p in files.items()}
    union = sorted({name for _, _, names in parsed.values() for name in names})
    index = {name: k for k, name in enumerate(union)}
    p = len(union)

    labels = list(parsed)
    ys, Xs = [], []
    declared = np.zeros((p, len(labels)), dtype=bool)
    for j, label in enumerate(labels):
        y, X_file, names = parsed[label]
        X = np.zeros((X_file.shape[0], p))
        for c, name in enumerate(names):
            k = index[name]
            X[:, k] = X_file[:, c]
            declared[k, j] = True
        ys.append(y)
        Xs.append(X)
    return build_dataset(ys, Xs, labels, feature_names=union,
                         availability=declared, options=options)
