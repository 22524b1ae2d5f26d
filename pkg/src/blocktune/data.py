"""Synthetic classification task plus the three drift transforms.

Each class is a mixture of Gaussian subpopulations: subpop means sit at
``class_center + subpop_offset`` so subpopulations of one class are
related but distinct (the source domain sees the first half of each
class's subpopulations, the feature-drifted target the second half).
Input drift rescales/shifts/noises X, output drift flips labels
y -> (C-1) - y; both leave everything else untouched.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import InputError, ParseError, UsageError

DRIFT_KINDS = ("input", "feature", "output")


@dataclass(frozen=True)
class TaskSpec:
    n_classes: int = 10
    subpops_per_class: int = 4
    input_dim: int = 32
    samples_per_subpop: int = 150
    cluster_spread: float = 0.55
    class_scale: float = 1.0
    subpop_scale: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if self.subpops_per_class < 2:
            raise InputError("subpops_per_class must be >= 2 "
                             "(feature drift needs disjoint subpopulation sets)")
        if self.n_classes < 2 or self.input_dim < 1 or self.samples_per_subpop < 1:
            raise InputError("n_classes >= 2, input_dim >= 1, "
                             "samples_per_subpop >= 1 required")


@dataclass
class Dataset:
    X: np.ndarray          # (N, input_dim) float64
    y: np.ndarray          # (N,) int64 in [0, n_classes)
    n_classes: int
    domain_tag: str = "source"   # source | target
    drift_tag: str = "none"      # none | input | feature | output

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx].copy(), y=self.y[idx].copy())


@dataclass(frozen=True)
class DriftSpec:
    """Target-domain transformation; fields irrelevant to `kind` are
    ignored but kept for provenance."""

    kind: str
    gamma: float = 1.0         # input gain
    beta: float = 0.0          # input offset
    noise_sigma: float = 0.0   # input additive noise
    subpop_swap: str = "second-half"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise InputError(f"unknown drift kind {self.kind!r}; "
                             f"expected one of {DRIFT_KINDS}")
        if self.noise_sigma < 0:
            raise InputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass
class TaskPool:
    """Every sample of every subpopulation, with per-sample subpop ids.

    The source pool is the first half of each class's subpopulations;
    feature drift draws the second half.
    """

    spec: TaskSpec
    X: np.ndarray        # (N_total, input_dim)
    y: np.ndarray        # (N_total,)
    subpop: np.ndarray   # (N_total,) subpop index within the class
    means: np.ndarray    # (n_classes, subpops_per_class, input_dim)

    @property
    def source_subpops(self) -> np.ndarray:
        return np.arange(self.spec.subpops_per_class // 2)

    @property
    def target_subpops(self) -> np.ndarray:
        return np.arange(self.spec.subpops_per_class // 2,
                         self.spec.subpops_per_class)

    def source(self) -> Dataset:
        mask = self.subpop < self.spec.subpops_per_class // 2
        return Dataset(X=self.X[mask].copy(), y=self.y[mask].copy(),
                       n_classes=self.spec.n_classes,
                       domain_tag="source", drift_tag="none")


def gen_task(spec: TaskSpec) -> TaskPool:
    """Draw the full mixture, deterministically under (spec, seed)."""
    rng = np.random.default_rng(spec.seed)
    C, P, D = spec.n_classes, spec.subpops_per_class, spec.input_dim
    centers = rng.normal(0.0, spec.class_scale, size=(C, D))
    offsets = rng.normal(0.0, spec.subpop_scale, size=(C, P, D))
    means = centers[:, None, :] + offsets
    n = spec.samples_per_subpop
    chunks_X, chunks_y, chunks_p = [], [], []
    for c in range(C):
        for p in range(P):
            chunks_X.append(means[c, p]
                            + spec.cluster_spread * rng.standard_normal((n, D)))
            chunks_y.append(np.full(n, c, dtype=np.int64))
            chunks_p.append(np.full(n, p, dtype=np.int64))
    return TaskPool(spec=spec, X=np.concatenate(chunks_X),
                    y=np.concatenate(chunks_y), subpop=np.concatenate(chunks_p),
                    means=means)


def input_drift(ds: Dataset, spec: DriftSpec) -> Dataset:
    """x' = gamma*x + beta + N(0, noise_sigma^2); labels untouched."""
    if spec.kind != "input":
        raise UsageError(f"input_drift called with kind={spec.kind!r}")
    X = spec.gamma * ds.X + spec.beta
    if spec.gamma == 1.0 and spec.beta == 0.0:
        X = ds.X.copy()
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        X = X + rng.normal(0.0, spec.noise_sigma, size=X.shape)
    return Dataset(X=X, y=ds.y.copy(), n_classes=ds.n_classes,
                   domain_tag="target", drift_tag="input")


def feature_drift(pool: TaskPool) -> Dataset:
    """Target domain drawn from the held-out second-half subpopulations."""
    boundary = pool.spec.subpops_per_class // 2
    mask = pool.subpop >= boundary
    return Dataset(X=pool.X[mask].copy(), y=pool.y[mask].copy(),
                   n_classes=pool.spec.n_classes,
                   domain_tag="target", drift_tag="feature")


def output_drift(ds: Dataset) -> Dataset:
    """Flip every label y to (n_classes - 1) - y; X untouched."""
    return Dataset(X=ds.X.copy(), y=(ds.n_classes - 1) - ds.y,
                   n_classes=ds.n_classes,
                   domain_tag="target", drift_tag="output")


def _allocate(class_counts: np.ndarray, available: np.ndarray,
              frac: float, total: int) -> np.ndarray:
    """Largest-remainder allocation of `total` slots across classes,
    proportional to class_counts and capped by availability."""
    exact = frac * class_counts
    take = np.minimum(np.floor(exact).astype(np.int64), available)
    rem = total - int(take.sum())
    if rem > 0:
        order = np.argsort(-(exact - np.floor(exact)), kind="stable")
        while rem > 0:
            progressed = False
            for c in order:
                if rem == 0:
                    break
                if take[c] < available[c]:
                    take[c] += 1
                    rem -= 1
                    progressed = True
            if not progressed:
                break  # pool exhausted
    return take


def split_indices(y: np.ndarray, train_frac: float, val_frac: float,
                  test_frac: float, seed: int,
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint, seed-deterministic, class-stratified index split."""
    fracs = (train_frac, val_frac, test_frac)
    if any(f < 0 for f in fracs):
        raise UsageError(f"split fractions must be >= 0, got {fracs}")
    if sum(fracs) > 1.0 + 1e-9:
        raise UsageError(f"split fractions sum to {sum(fracs)} > 1")
    y = np.asarray(y)
    N = y.shape[0]
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    per_class = {c: rng.permutation(np.flatnonzero(y == c)) for c in classes}
    counts = np.array([per_class[c].size for c in classes])
    offsets = np.zeros(len(classes), dtype=np.int64)
    parts = []
    for frac in fracs:
        total = int(frac * N + 0.5)
        take = _allocate(counts, counts - offsets, frac, total)
        chunk = [per_class[c][offsets[i]:offsets[i] + take[i]]
                 for i, c in enumerate(classes)]
        offsets += take
        parts.append(np.concatenate(chunk) if chunk else np.empty(0, np.int64))
    return parts[0], parts[1], parts[2]


def split(ds: Dataset, train_frac: float, val_frac: float, test_frac: float,
          seed: int) -> tuple[Dataset, Dataset, Dataset]:
    tr, va, te = split_indices(ds.y, train_frac, val_frac, test_frac, seed)
    return ds.subset(tr), ds.subset(va), ds.subset(te)


def stratified_sample_indices(y: np.ndarray, n_take: int, seed: int) -> np.ndarray:
    """Class-stratified subsample of exactly n_take indices."""
    y = np.asarray(y)
    if n_take > y.shape[0]:
        raise UsageError(f"cannot take {n_take} samples from {y.shape[0]}")
    tr, _, _ = split_indices(y, n_take / y.shape[0], 0.0, 0.0, seed)
    if tr.size != n_take:  # rounding slack: top up from a fresh pass
        raise UsageError(f"stratified sampling produced {tr.size} != {n_take}")
    return tr


def write_dataset_csv(ds: Dataset, path, provenance: dict | None = None) -> None:
    """CSV with header y,x0,...,x{D-1}; floats via repr so values
    round-trip bitwise.  A .json sidecar carries tags and provenance."""
    D = ds.X.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["y"] + [f"x{i}" for i in range(D)])
        for label, row in zip(ds.y, ds.X):
            w.writerow([int(label)] + [repr(float(v)) for v in row])
    sidecar = {
        "format": "blocktune-dataset/1",
        "n_classes": ds.n_classes,
        "domain_tag": ds.domain_tag,
        "drift_tag": ds.drift_tag,
        "n_samples": int(len(ds)),
        "input_dim": int(D),
        "provenance": provenance or {},
    }
    with open(_sidecar_path(path), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def read_dataset_csv(path) -> Dataset:
    try:
        with open(_sidecar_path(path)) as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        raise UsageError(f"missing dataset sidecar for {path}")
    X_rows, y_rows = [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "y":
            raise ParseError(f"{path} line 1: expected header starting with 'y'")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width + 1:
                raise ParseError(f"{path} line {lineno}: expected "
                                 f"{width + 1} fields, got {len(row)}")
            try:
                y_rows.append(int(row[0]))
                X_rows.append([float(v) for v in row[1:]])
            except ValueError as e:
                raise ParseError(f"{path} line {lineno}: {e}") from e
    return Dataset(X=np.array(X_rows, dtype=np.float64),
                   y=np.array(y_rows, dtype=np.int64),
                   n_classes=sidecar["n_classes"],
                   domain_tag=sidecar["domain_tag"],
                   drift_tag=sidecar["drift_tag"])


def _sidecar_path(path) -> str:
    return f"{path}.json" if not str(path).endswith(".csv") \
        else str(path)[:-4] + ".json"


def task_provenance(spec: TaskSpec, drift: DriftSpec | None = None) -> dict:
    out = {"task_spec": asdict(spec)}
    if drift is not None:
        out["drift_spec"] = asdict(drift)
    return out
