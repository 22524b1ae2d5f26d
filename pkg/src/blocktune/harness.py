"""Experiment orchestration: data generation, base-model training, the
noise probe, the drift x block x training-size matrix, and the summary
and plot emitters.

Every run is derived from one master seed: each cell of the matrix gets
its own RNG stream via a stable hash of (master_seed, cell key), so
serial and parallel execution produce identical artifacts.  Cost columns
in results.csv are per-training-step estimates (one sample forward +
backward for the cell's selection); realized training length is the
separate ``epochs`` column.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import fmean

import numpy as np

from . import __version__
from .cost import CostModel, block_avg, selection_cost_table
from .data import (Dataset, DriftSpec, TaskSpec, feature_drift, gen_task,
                   input_drift, output_drift, read_dataset_csv, split_indices,
                   stratified_sample_indices, task_provenance,
                   write_dataset_csv)
from .errors import ParseError, UsageError
from .model import (ArchSpec, BlockNet, build, inject_noise, load_checkpoint,
                    param_hash, save_checkpoint, selection_for)
from .train import TrainConfig, TrainedModel, evaluate, train

DEFAULT_BLOCKS = ["block1", "block2", "block3", "fc", "full"]
DEFAULT_TRAIN_FRACS = [0.10, 0.20, 0.30]
RESULT_COLUMNS = ["drift_kind", "block_selection", "train_frac", "seed",
                  "accuracy_pct", "accuracy_std", "epochs", "time_s",
                  "flops_fwd", "flops_bwd", "energy_j", "es_pct", "status"]


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit stream seed for a named cell of the experiment."""
    text = "|".join([str(master_seed)] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    task: TaskSpec = field(default_factory=TaskSpec)
    arch: ArchSpec = None
    train: TrainConfig = field(default_factory=TrainConfig)
    cost: CostModel = field(default_factory=CostModel)
    drifts: list = field(default_factory=list)
    blocks: list = field(default_factory=lambda: list(DEFAULT_BLOCKS))
    train_fracs: list = field(default_factory=lambda: list(DEFAULT_TRAIN_FRACS))
    n_seeds: int = 3
    master_seed: int = 0
    val_frac: float = 0.10
    test_frac: float = 0.10
    base_pool_frac: float = 0.80
    probe_noise_sigma: float = 0.8
    probe_train_frac: float = 0.30
    stem_with_block1: bool = True

    def __post_init__(self):
        if self.arch is None:
            self.arch = ArchSpec(input_dim=self.task.input_dim,
                                 n_classes=self.task.n_classes)
        if not self.drifts:
            self.drifts = default_drifts(self.master_seed)
        if self.n_seeds < 1:
            raise UsageError(f"n_seeds must be >= 1, got {self.n_seeds}")
        for f in self.train_fracs:
            if not 0.0 < f <= 1.0:
                raise UsageError(f"train_fracs must lie in (0, 1], got {f}")
        if self.arch.input_dim != self.task.input_dim:
            raise UsageError("arch.input_dim must match task.input_dim")
        if self.arch.n_classes != self.task.n_classes:
            raise UsageError("arch.n_classes must match task.n_classes")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f_.name for f_ in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        master = d.get("master_seed", 0)
        kwargs = {}
        if "task" in d:
            kwargs["task"] = TaskSpec(**d["task"])
        task = kwargs.get("task", TaskSpec())
        if "arch" in d:
            arch = dict(d["arch"])
            arch.setdefault("input_dim", task.input_dim)
            arch.setdefault("n_classes", task.n_classes)
            kwargs["arch"] = ArchSpec(**arch)
        if "train" in d:
            kwargs["train"] = TrainConfig(**d["train"])
        if "cost" in d:
            kwargs["cost"] = CostModel(**d["cost"])
        if "drifts" in d:
            drifts = []
            for spec in d["drifts"]:
                spec = dict(spec)
                if "seed" not in spec:
                    spec["seed"] = derive_seed(master, "drift", spec.get("kind"))
                defaults = _drift_defaults(spec.get("kind"))
                defaults.update(spec)
                drifts.append(DriftSpec(**defaults))
            kwargs["drifts"] = drifts
        for key in ("blocks", "train_fracs", "n_seeds", "master_seed",
                    "val_frac", "test_frac", "base_pool_frac",
                    "probe_noise_sigma", "probe_train_frac", "stem_with_block1"):
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["drifts"] = [asdict(s) for s in self.drifts]
        return out

    def single_blocks(self) -> list:
        return [b for b in self.blocks if b != "full"]


def _drift_defaults(kind: str) -> dict:
    if kind == "input":
        return {"gamma": 0.6, "beta": 0.4, "noise_sigma": 0.8}
    return {}


def default_drifts(master_seed: int) -> list:
    out = []
    for kind in ("input", "feature", "output"):
        defaults = _drift_defaults(kind)
        out.append(DriftSpec(kind=kind, seed=derive_seed(master_seed, "drift", kind),
                             **defaults))
    return out


def load_config(path=None, seed_override=None) -> ExperimentConfig:
    d = {}
    if path is not None:
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path} line {e.lineno}: {e.msg}") from e
    if seed_override is not None:
        d["master_seed"] = seed_override
    return ExperimentConfig.from_dict(d)


class Paths:
    """Canonical artifact locations under one output directory."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.config = self.out / "config.resolved.json"
        self.data = self.out / "data"
        self.splits = self.data / "splits.json"
        self.base_dir = self.out / "base"
        self.checkpoint = self.base_dir / "checkpoint.npz"
        self.base_meta = self.base_dir / "meta.json"
        self.base_log = self.base_dir / "trainlog.json"
        self.probe_matrix = self.out / "noise_probe.csv"
        self.probe_raw = self.out / "noise_probe_raw.csv"
        self.results = self.out / "results.csv"
        self.summary = self.out / "summary.md"
        self.plots = self.out / "plots"

    def dataset_csv(self, domain: str) -> Path:
        name = "source" if domain == "source" else f"target_{domain}"
        return self.data / f"{name}.csv"


def _write_resolved_config(cfg: ExperimentConfig, paths: Paths) -> None:
    paths.out.mkdir(parents=True, exist_ok=True)
    doc = {"version": __version__, "config": cfg.to_dict()}
    paths.config.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _frac_key(frac: float) -> str:
    return repr(float(frac))


# ----------------------------------------------------------------------
# gen-data


def build_domains(cfg: ExperimentConfig) -> dict[str, Dataset]:
    """Source pool plus one drifted target pool per configured drift."""
    pool = gen_task(cfg.task)
    source = pool.source()
    domains = {"source": source}
    for dspec in cfg.drifts:
        if dspec.kind == "input":
            domains["input"] = input_drift(source, dspec)
        elif dspec.kind == "feature":
            domains["feature"] = feature_drift(pool)
        elif dspec.kind == "output":
            domains["output"] = output_drift(source)
    return domains


def _domain_splits(cfg: ExperimentConfig, domain: str, ds: Dataset) -> dict:
    """Holdout split plus the per-(frac, seed) stratified train subsets.

    Validation and test sets are fixed per domain (independent of the
    training size), mirroring the fixed 10%/10% holdout protocol; train
    subsets of size frac*N are drawn from the remaining pool.
    """
    pool_frac = 1.0 - cfg.val_frac - cfg.test_frac
    if domain == "source":
        pool_frac = min(pool_frac, cfg.base_pool_frac)
    tr, va, te = split_indices(ds.y, pool_frac, cfg.val_frac, cfg.test_frac,
                               derive_seed(cfg.master_seed, "split", domain))
    fracs = list(cfg.train_fracs)
    if domain == "source" and cfg.probe_train_frac not in fracs:
        fracs.append(cfg.probe_train_frac)
    subsets: dict[str, dict[str, list]] = {}
    for frac in fracs:
        n_take = int(frac * len(ds) + 0.5)
        per_seed = {}
        for s in range(cfg.n_seeds):
            pos = stratified_sample_indices(
                ds.y[tr], n_take,
                derive_seed(cfg.master_seed, "subset", domain, _frac_key(frac), s))
            per_seed[str(s)] = tr[pos].tolist()
        subsets[_frac_key(frac)] = per_seed
    return {"train_pool": tr.tolist(), "val": va.tolist(), "test": te.tolist(),
            "train_subsets": subsets}


def cmd_gen_data(cfg: ExperimentConfig, out_dir) -> dict[str, Dataset]:
    """Write the source pool, the drifted targets, and the split indices."""
    paths = Paths(out_dir)
    _write_resolved_config(cfg, paths)
    paths.data.mkdir(parents=True, exist_ok=True)
    domains = build_domains(cfg)
    drift_by_kind = {d.kind: d for d in cfg.drifts}
    splits = {"version": 1, "domains": {}}
    for domain, ds in domains.items():
        prov = task_provenance(cfg.task, drift_by_kind.get(domain))
        prov["master_seed"] = cfg.master_seed
        write_dataset_csv(ds, paths.dataset_csv(domain), prov)
        splits["domains"][domain] = _domain_splits(cfg, domain, ds)
    paths.splits.write_text(json.dumps(splits, indent=2, sort_keys=True) + "\n")
    print(f"gen-data: wrote {len(domains)} datasets under {paths.data}")
    return domains


# ----------------------------------------------------------------------
# train-base


def _load_domain(paths: Paths, domain: str) -> Dataset:
    path = paths.dataset_csv(domain)
    if not path.exists():
        raise UsageError(f"missing dataset {path}; run gen-data first")
    return read_dataset_csv(path)


def _load_splits(paths: Paths) -> dict:
    if not paths.splits.exists():
        raise UsageError(f"missing {paths.splits}; run gen-data first")
    return json.loads(paths.splits.read_text())


def cmd_train_base(cfg: ExperimentConfig, out_dir) -> dict:
    """Train the full model from scratch on the source training pool."""
    paths = Paths(out_dir)
    _write_resolved_config(cfg, paths)
    source = _load_domain(paths, "source")
    dom = _load_splits(paths)["domains"]["source"]
    train_ds = source.subset(dom["train_pool"])
    val_ds = source.subset(dom["val"])
    test_ds = source.subset(dom["test"])

    net0 = build(cfg.arch, seed=derive_seed(cfg.master_seed, "init"))
    tcfg = replace(cfg.train, seed=derive_seed(cfg.master_seed, "base"))
    tm = train(net0, selection_for(net0, "full"), train_ds, val_ds, tcfg)
    test_acc = evaluate(tm.net, test_ds) * 100.0

    paths.base_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(tm.net, paths.checkpoint)
    paths.base_log.write_text(tm.log.to_json() + "\n")
    meta = {
        "param_sha256": param_hash(tm.net),
        "source_test_accuracy_pct": test_acc,
        "build_seed": net0.seed,
        "best_epoch": tm.log.best_epoch,
        "stopped_epoch": tm.log.stopped_epoch,
    }
    paths.base_meta.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"train-base: source test accuracy {test_acc:.2f}% "
          f"(best epoch {tm.log.best_epoch}/{tm.log.stopped_epoch})")
    return meta


def _load_base(paths: Paths) -> tuple[BlockNet, str]:
    if not paths.checkpoint.exists():
        raise UsageError(f"missing base checkpoint {paths.checkpoint}; "
                         f"run train-base first")
    net = load_checkpoint(paths.checkpoint)
    expected = json.loads(paths.base_meta.read_text())["param_sha256"]
    return net, expected


# ----------------------------------------------------------------------
# noise-probe


def cmd_noise_probe(cfg: ExperimentConfig, out_dir) -> list[dict]:
    """Inject parameter noise into one block at a time, fine-tune each
    selection on clean source-domain data, and emit the accuracy matrix."""
    paths = Paths(out_dir)
    base, base_hash = _load_base(paths)
    source = _load_domain(paths, "source")
    dom = _load_splits(paths)["domains"]["source"]
    val_ds = source.subset(dom["val"])
    test_ds = source.subset(dom["test"])
    subsets = dom["train_subsets"][_frac_key(cfg.probe_train_frac)]

    noised_blocks = [b for b in cfg.single_blocks()]
    rows = []
    for noised in noised_blocks:
        for s in range(cfg.n_seeds):
            if param_hash(base) != base_hash:
                raise UsageError("base checkpoint hash mismatch; "
                                 "stale or corrupted artifacts")
            noisy = inject_noise(base, noised, cfg.probe_noise_sigma,
                                 derive_seed(cfg.master_seed, "probe-noise",
                                             noised, s))
            train_ds = source.subset(subsets[str(s)])
            for tuned in cfg.blocks:
                sel = selection_for(noisy, tuned, cfg.stem_with_block1)
                tcfg = replace(cfg.train,
                               seed=derive_seed(cfg.master_seed, "probe",
                                                noised, tuned, s))
                tm = train(noisy, sel, train_ds, val_ds, tcfg)
                acc = evaluate(tm.net, test_ds) * 100.0
                rows.append({"noised_block": noised, "tuned": tuned,
                             "seed": s, "accuracy_pct": acc,
                             "epochs": tm.log.stopped_epoch})
        print(f"noise-probe: noised {noised} done")

    _write_probe_raw(rows, paths.probe_raw)
    _write_probe_matrix(cfg, rows, noised_blocks, paths.probe_matrix)
    print(f"noise-probe: wrote {paths.probe_matrix}")
    return rows


def _write_probe_raw(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["noised_block", "tuned", "seed", "accuracy_pct", "epochs"])
        for r in rows:
            w.writerow([r["noised_block"], r["tuned"], r["seed"],
                        repr(float(r["accuracy_pct"])), r["epochs"]])


def _write_probe_matrix(cfg: ExperimentConfig, rows: list[dict],
                        noised_blocks: list, path: Path) -> None:
    def cell(noised, tuned) -> tuple[float, float]:
        accs = [r["accuracy_pct"] for r in rows
                if r["noised_block"] == noised and r["tuned"] == tuned]
        return fmean(accs), float(np.std(accs))

    singles = cfg.single_blocks()
    table: dict[str, dict[str, str]] = {}
    for tuned in cfg.blocks:
        table[tuned] = {}
        for noised in noised_blocks:
            m, s = cell(noised, tuned)
            table[tuned][noised] = f"{m:.2f}±{s:.2f}"
    avg_row = {}
    for noised in noised_blocks:
        shown = [round(cell(noised, t)[0], 2) for t in singles]
        per_seed = [fmean([r["accuracy_pct"] for r in rows
                           if r["noised_block"] == noised
                           and r["tuned"] == t and r["seed"] == s]
                          ) for s in range(cfg.n_seeds)
                    for t in [None]]
        # per-seed block averages for the std part
        per_seed = []
        for s in range(cfg.n_seeds):
            vals = [r["accuracy_pct"] for r in rows
                    if r["noised_block"] == noised and r["seed"] == s
                    and r["tuned"] in singles]
            per_seed.append(fmean(vals))
        avg_row[noised] = f"{block_avg(shown):.2f}±{float(np.std(per_seed)):.2f}"

    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["tuned"] + [f"noised_{b}" for b in noised_blocks])
        for tuned in singles:
            w.writerow([tuned] + [table[tuned][n] for n in noised_blocks])
        w.writerow(["block_avg"] + [avg_row[n] for n in noised_blocks])
        if "full" in cfg.blocks:
            w.writerow(["full"] + [table["full"][n] for n in noised_blocks])


# ----------------------------------------------------------------------
# run-matrix


@dataclass(frozen=True)
class Cell:
    drift_kind: str
    block: str
    frac: float
    seed: int


def matrix_cells(cfg: ExperimentConfig) -> list[Cell]:
    return [Cell(d.kind, b, f, s)
            for d in cfg.drifts for b in cfg.blocks
            for f in cfg.train_fracs for s in range(cfg.n_seeds)]


@dataclass
class Materials:
    """Read-only inputs shared by every matrix cell."""

    base: BlockNet
    base_hash: str
    domains: dict[str, Dataset]
    splits: dict
    cost_table: dict


def load_materials(cfg: ExperimentConfig, out_dir) -> Materials:
    paths = Paths(out_dir)
    base, base_hash = _load_base(paths)
    domains = {d.kind: _load_domain(paths, d.kind) for d in cfg.drifts}
    splits = _load_splits(paths)["domains"]
    selections = {name: selection_for(base, name, cfg.stem_with_block1)
                  for name in cfg.blocks}
    if "full" not in selections:
        selections["full"] = selection_for(base, "full")
    cost_table = selection_cost_table(base, selections, cfg.cost)
    return Materials(base=base, base_hash=base_hash, domains=domains,
                     splits=splits, cost_table=cost_table)


def run_matrix_cell(cfg: ExperimentConfig, mats: Materials,
                    cell: Cell) -> tuple[dict, TrainedModel]:
    """Fine-tune one (drift, block, frac, seed) cell from the base model."""
    if param_hash(mats.base) != mats.base_hash:
        raise UsageError("base checkpoint hash mismatch before cell "
                         f"{cell}; aborting to avoid contamination")
    ds = mats.domains[cell.drift_kind]
    dom = mats.splits[cell.drift_kind]
    train_idx = dom["train_subsets"][_frac_key(cell.frac)][str(cell.seed)]
    sel = selection_for(mats.base, cell.block, cfg.stem_with_block1)
    tcfg = replace(cfg.train,
                   seed=derive_seed(cfg.master_seed, "cell", cell.drift_kind,
                                    cell.block, _frac_key(cell.frac), cell.seed))
    tm = train(mats.base, sel, ds.subset(train_idx), ds.subset(dom["val"]), tcfg)
    acc = evaluate(tm.net, ds.subset(dom["test"])) * 100.0
    report = mats.cost_table[cell.block]
    row = {
        "drift_kind": cell.drift_kind,
        "block_selection": cell.block,
        "train_frac": cell.frac,
        "seed": cell.seed,
        "accuracy_pct": acc,
        "accuracy_std": None,
        "epochs": tm.log.stopped_epoch,
        "time_s": report.time_s,
        "flops_fwd": report.flops_forward,
        "flops_bwd": report.flops_backward,
        "energy_j": report.energy_j,
        "es_pct": report.energy_saving_pct,
        "status": "ok",
    }
    return row, tm


_WORKER_STATE: dict = {}


def _matrix_worker(payload) -> dict:
    config_dict, out_dir, cell_tuple = payload
    key = (json.dumps(config_dict, sort_keys=True), str(out_dir))
    if _WORKER_STATE.get("key") != key:
        cfg = ExperimentConfig.from_dict(config_dict)
        _WORKER_STATE.clear()
        _WORKER_STATE.update(key=key, cfg=cfg,
                             mats=load_materials(cfg, out_dir))
    cfg, mats = _WORKER_STATE["cfg"], _WORKER_STATE["mats"]
    cell = Cell(*cell_tuple)
    try:
        row, _ = run_matrix_cell(cfg, mats, cell)
    except Exception as e:  # keep the sweep alive; record the failure
        row = _error_row(cell, e)
    return row


def _error_row(cell: Cell, e: Exception) -> dict:
    return {"drift_kind": cell.drift_kind, "block_selection": cell.block,
            "train_frac": cell.frac, "seed": cell.seed,
            "accuracy_pct": None, "accuracy_std": None, "epochs": None,
            "time_s": None, "flops_fwd": None, "flops_bwd": None,
            "energy_j": None, "es_pct": None,
            "status": f"error:{type(e).__name__}: {e}"}


def cmd_run_matrix(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> list[dict]:
    """Full drift x block x training-size x seed sweep from the base model."""
    paths = Paths(out_dir)
    _write_resolved_config(cfg, paths)
    cells = matrix_cells(cfg)
    if jobs > 1:
        payloads = [(cfg.to_dict(), str(out_dir),
                     (c.drift_kind, c.block, c.frac, c.seed)) for c in cells]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_matrix_worker, payloads))
    else:
        mats = load_materials(cfg, out_dir)
        rows = []
        for c in cells:
            try:
                row, _ = run_matrix_cell(cfg, mats, c)
            except Exception as e:
                row = _error_row(c, e)
            rows.append(row)
            if c.seed == cfg.n_seeds - 1:
                print(f"run-matrix: {c.drift_kind}/{c.block}/{c.frac} done")

    rows = _sorted_rows(cfg, rows)
    aggregates = _aggregate_rows(cfg, rows)
    _write_results(rows + aggregates, paths.results)
    print(f"run-matrix: wrote {len(rows)} rows + {len(aggregates)} aggregates "
          f"to {paths.results}")
    return rows + aggregates


def _sorted_rows(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    drift_order = {d.kind: i for i, d in enumerate(cfg.drifts)}
    block_order = {b: i for i, b in enumerate(cfg.blocks)}
    return sorted(rows, key=lambda r: (drift_order[r["drift_kind"]],
                                       block_order[r["block_selection"]],
                                       r["train_frac"], r["seed"]))


def _aggregate_rows(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    out = []
    for d in cfg.drifts:
        for b in cfg.blocks:
            for f in cfg.train_fracs:
                group = [r for r in rows
                         if r["drift_kind"] == d.kind
                         and r["block_selection"] == b
                         and r["train_frac"] == f and r["status"] == "ok"]
                if not group:
                    continue
                accs = [r["accuracy_pct"] for r in group]
                status = ("ok" if len(group) == cfg.n_seeds
                          else f"partial({len(group)}/{cfg.n_seeds})")
                out.append({
                    "drift_kind": d.kind, "block_selection": b,
                    "train_frac": f, "seed": "mean",
                    "accuracy_pct": fmean(accs),
                    "accuracy_std": float(np.std(accs)),
                    "epochs": fmean(r["epochs"] for r in group),
                    "time_s": group[0]["time_s"],
                    "flops_fwd": group[0]["flops_fwd"],
                    "flops_bwd": group[0]["flops_bwd"],
                    "energy_j": group[0]["energy_j"],
                    "es_pct": group[0]["es_pct"],
                    "status": status,
                })
    return out


def _fmt_field(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_results(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_fmt_field(r[c]) for c in RESULT_COLUMNS])


# ----------------------------------------------------------------------
# summarize / plot


def read_results(path) -> list[dict]:
    """Raw (per-seed) rows of a results.csv, parsed and validated."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"missing results file {path}; run run-matrix first")
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ParseError(f"{path} line 1: unexpected columns "
                             f"{reader.fieldnames}")
        for lineno, r in enumerate(reader, start=2):
            if r["seed"] == "mean":
                continue
            if not r["status"].startswith("ok"):
                continue
            try:
                rows.append({
                    "drift_kind": r["drift_kind"],
                    "block_selection": r["block_selection"],
                    "train_frac": float(r["train_frac"]),
                    "seed": int(r["seed"]),
                    "accuracy_pct": float(r["accuracy_pct"]),
                    "epochs": int(r["epochs"]),
                    "time_s": float(r["time_s"]),
                    "energy_j": float(r["energy_j"]),
                    "es_pct": float(r["es_pct"]) if r["es_pct"] else None,
                })
            except ValueError as e:
                raise ParseError(f"{path} line {lineno}: {e}") from e
    if not rows:
        raise UsageError(f"{path} contains no usable result rows")
    return rows


def _group_stats(rows, drift, block, frac=None) -> tuple[float, float]:
    accs = [r["accuracy_pct"] for r in rows
            if r["drift_kind"] == drift and r["block_selection"] == block
            and (frac is None or r["train_frac"] == frac)]
    return fmean(accs), float(np.std(accs))


def _ordered_unique(values) -> list:
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def cmd_summarize(results_path, out_path) -> str:
    """Render per-drift accuracy tables and the energy table as markdown."""
    rows = read_results(results_path)
    drifts = _ordered_unique(r["drift_kind"] for r in rows)
    blocks = _ordered_unique(r["block_selection"] for r in rows)
    fracs = sorted(_ordered_unique(r["train_frac"] for r in rows))
    singles = [b for b in blocks if b != "full"]
    has_full = "full" in blocks

    lines = ["# Experiment summary", "",
             "Accuracy is mean±std over seeds; the best single-block "
             "selection per row is bold.  Block Avg averages the single-block "
             "columns (full fine-tuning excluded).", ""]
    for drift in drifts:
        lines.append(f"## {drift}-level drift")
        lines.append("")
        header = (["training size"] + singles + ["Block Avg"]
                  + (["full"] if has_full else []))
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for frac, label in [(f, f"{f:.0%}") for f in fracs] + [(None, "all")]:
            means = {}
            cells = []
            for b in singles:
                m, s = _group_stats(rows, drift, b, frac)
                means[b] = round(m, 2)
                cells.append(f"{m:.2f}±{s:.2f}")
            best = max(singles, key=lambda b: means[b])
            cells = [f"**{c}**" if b == best else c
                     for b, c in zip(singles, cells)]
            avg_std = _block_avg_std(rows, drift, singles, frac)
            cells.append(f"{block_avg(means.values()):.2f}±{avg_std:.2f}")
            if has_full:
                m, s = _group_stats(rows, drift, "full", frac)
                cells.append(f"{m:.2f}±{s:.2f}")
            lines.append("| " + " | ".join([label] + cells) + " |")
        lines.append("")

    lines.append("## Cost per training step (estimated)")
    lines.append("")
    lines.append("| selection | time (s) | energy (J) | energy saving (%) |")
    lines.append("|---|---|---|---|")
    by_block = {b: next(r for r in rows if r["block_selection"] == b)
                for b in blocks}
    for b in singles:
        r = by_block[b]
        lines.append(f"| {b} | {r['time_s']:.6g} | {r['energy_j']:.6g} "
                     f"| {r['es_pct']:.2f} |")
    e_avg = block_avg([by_block[b]["energy_j"] for b in singles])
    es_avg = block_avg([by_block[b]["es_pct"] for b in singles])
    lines.append(f"| Block Avg | | {e_avg:.6g} | **{es_avg:.2f}** |")
    if has_full:
        r = by_block["full"]
        lines.append(f"| full | {r['time_s']:.6g} | {r['energy_j']:.6g} | - |")
    lines.append("")

    text = "\n".join(lines)
    Path(out_path).write_text(text)
    print(f"summarize: wrote {out_path}")
    return text


def _block_avg_std(rows, drift, singles, frac) -> float:
    """Std over seeds (and fracs, for the 'all' row) of per-seed block averages."""
    keys = sorted({(r["train_frac"], r["seed"]) for r in rows
                   if r["drift_kind"] == drift
                   and (frac is None or r["train_frac"] == frac)})
    per_seed = []
    for f, s in keys:
        vals = [r["accuracy_pct"] for r in rows
                if r["drift_kind"] == drift and r["train_frac"] == f
                and r["seed"] == s and r["block_selection"] in singles]
        if vals:
            per_seed.append(fmean(vals))
    return float(np.std(per_seed)) if per_seed else 0.0


def cmd_plot(results_path, plots_dir) -> list[Path]:
    """One grouped-bar SVG per drift kind, with Block Avg (solid) and full
    fine-tuning (dashed) reference lines."""
    from .svg import grouped_bar_chart

    rows = read_results(results_path)
    drifts = _ordered_unique(r["drift_kind"] for r in rows)
    blocks = _ordered_unique(r["block_selection"] for r in rows)
    fracs = sorted(_ordered_unique(r["train_frac"] for r in rows))
    singles = [b for b in blocks if b != "full"]
    plots_dir = Path(plots_dir)
    plots_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for drift in drifts:
        series = [(b, [_group_stats(rows, drift, b, f)[0] for f in fracs])
                  for b in singles]
        avg = block_avg([_group_stats(rows, drift, b)[0] for b in singles])
        reflines = [("Block Avg", avg, False)]
        if "full" in blocks:
            reflines.append(("full", _group_stats(rows, drift, "full")[0], True))
        svg = grouped_bar_chart(
            title=f"{drift}-level drift: accuracy vs training size",
            group_labels=[f"{f:.0%}" for f in fracs],
            series=series, reference_lines=reflines)
        path = plots_dir / f"{drift}.svg"
        path.write_text(svg)
        written.append(path)
    print(f"plot: wrote {len(written)} charts under {plots_dir}")
    return written
