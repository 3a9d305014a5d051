"""Experiment configuration, pipeline stages, artifact manifest and exports.

Artifact tree under ``output_dir``::

    config.json
    data/raw/<subject>/                       gen-data
    split.json                                split
    normalized/<method>/<part>/<subject>/      normalize (part: train, test, val, common_test)
    normalized/nyul/scales.json
    models/st-<method>/, models/centralized/   train-baselines (checkpoint + train_log.jsonl)
    fl/<fedavg|fedbn>/...                      federate (checkpoints + round_log.jsonl)
    results/dice_matrix.csv, scores.csv        evaluate
    results/histograms.csv                     export-histograms
    results/dice_matrix.txt                    report
    manifest.json                              sha256 of every file, plus stage keys
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .federated import (
    CENTRALIZED, FEDAVG, FEDBN, DiceMatrix, FLConfig, cross_evaluate, run_baselines, run_federated,
)
from .nn.params import load_checkpoint, save_checkpoint
from .norm import METHOD_ORDER, NormMethod, NyulStandardScale, fit_nyul_scales, normalize_subset
from .phantom import PhantomConfig, write_cohort
from .pipeline import make_clients
from .unet import UNet, UNetConfig
from .volume import MODALITIES, CohortSplit, load_study, save_study, split_cohort

log = logging.getLogger(__name__)

STAGES = ("gen-data", "split", "normalize", "train-baselines", "federate", "evaluate",
          "export-histograms", "report")
PARTS = ("train", "test", "val", "common_test")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage


@dataclass
class TrainConfig:
    epochs: int = 16
    lr: float = 1e-3
    batch_size: int = 2
    checkpoint_on: str = "train"
    seed: int = 0


@dataclass
class ExperimentConfig:
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    n_subjects: int = 60
    n_subsets: int = 6
    split_ratios: tuple[float, float, float] = (0.75, 0.20, 0.05)
    split_seed: int = 0
    common_subset: int = 0
    methods: tuple[str, ...] = tuple(m.value for m in METHOD_ORDER)
    unet: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fl_rounds: int = 32
    fl_local_epochs: int = 2
    fl_lr: float = 1e-3
    fl_batch_size: int = 2
    fl_seed: int = 0
    hist_bins: int = 100
    output_dir: str = "runs/default"

    def validate(self):
        if list(self.methods) != [m.value for m in METHOD_ORDER]:
            raise ConfigError(f"methods must be exactly {[m.value for m in METHOD_ORDER]} in that order")
        if self.n_subsets != len(self.methods):
            raise ConfigError("need one subset per normalization arm")
        if self.n_subjects < 3 * self.n_subsets:
            raise ConfigError(f"n_subjects={self.n_subjects} is too small for {self.n_subsets} subsets")
        if not 0 <= self.common_subset < self.n_subsets:
            raise ConfigError("common_subset out of range")
        if self.hist_bins < 1:
            raise ConfigError("hist_bins must be >= 1")
        try:
            self.fl_config(FEDAVG)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def fl_config(self, aggregation: str, threads: int = 1) -> FLConfig:
        return FLConfig(self.fl_rounds, self.fl_local_epochs, aggregation, self.fl_lr,
                        self.fl_batch_size, self.fl_seed, threads)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Every seed set to ``seed`` (the --seed-override flag)."""
        return replace(
            self,
            phantom=self.phantom.with_seed(seed),
            split_seed=seed,
            unet=replace(self.unet, seed=seed),
            train=replace(self.train, seed=seed),
            fl_seed=seed,
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["phantom"] = self.phantom.to_dict()
        d["unet"] = asdict(self.unet)
        d["train"] = asdict(self.train)
        d["split_ratios"] = list(self.split_ratios)
        d["methods"] = list(self.methods)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "phantom" in d:
                d["phantom"] = PhantomConfig.from_dict(d["phantom"])
            if "unet" in d:
                d["unet"] = UNetConfig(**d["unet"])
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            if "split_ratios" in d:
                d["split_ratios"] = tuple(d["split_ratios"])
            if "methods" in d:
                d["methods"] = tuple(d["methods"])
            return cls(**d).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# DiceMatrix CSV / text export


def matrix_to_csv(m: DiceMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["model"]
    for c in m.cols + ["Average"]:
        header += [f"{c}_mean", f"{c}_std"]
    w.writerow(header)
    avg_mean, avg_std = m.average_column()
    for i, r in enumerate(m.rows):
        label = r + "*" if r == CENTRALIZED else r
        cells = []
        for j in range(len(m.cols)):
            cells += [repr(float(m.mean[i, j])), repr(float(m.std[i, j]))]
        cells += [repr(float(avg_mean[i])), repr(float(avg_std[i]))]
        w.writerow([label] + cells)
    row_mean, row_std = m.average_row()
    cells = []
    for j in range(len(m.cols)):
        cells += [repr(float(row_mean[j])), repr(float(row_std[j]))]
    cells += [repr(float(row_mean.mean())), repr(float(row_mean.std()))]
    w.writerow(["Average"] + cells)
    return buf.getvalue()


def matrix_from_csv(text: str) -> DiceMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 3:
        raise ValueError("dice matrix CSV needs a header, model rows and an Average row")
    header = rows[0]
    if header[0] != "model" or len(header) % 2 == 0:
        raise ValueError("malformed dice matrix header")
    cols = [header[k][: -len("_mean")] for k in range(1, len(header), 2)]
    if cols[-1] != "Average":
        raise ValueError("last column pair must be Average")
    cols = cols[:-1]
    body = [r for r in rows[1:] if r[0] != "Average"]
    labels = [r[0].rstrip("*") for r in body]
    vals = np.array([[float(v) for v in r[1:]] for r in body])
    mean, std = vals[:, 0:-2:2], vals[:, 1:-2:2]
    return DiceMatrix(labels, cols, mean, std, [r for r in labels if r in cols])


def matrix_equal(a: DiceMatrix, b: DiceMatrix) -> bool:
    return (a.rows == b.rows and a.cols == b.cols and a.st_rows == b.st_rows
            and np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std))


def matrix_table(m: DiceMatrix) -> str:
    """Aligned plain-text table with mean±std cells."""
    head = ["Model \\ Test set"] + m.cols + ["Average"]
    avg_mean, avg_std = m.average_column()
    body = []
    for i, r in enumerate(m.rows):
        label = r + "*" if r == CENTRALIZED else r
        cells = [f"{m.mean[i, j]:.3f}±{m.std[i, j]:.3f}" for j in range(len(m.cols))]
        body.append([label] + cells + [f"{avg_mean[i]:.3f}±{avg_std[i]:.3f}"])
    row_mean, row_std = m.average_row()
    body.append(["Average"] + [f"{a:.3f}±{s:.3f}" for a, s in zip(row_mean, row_std)]
                + [f"{row_mean.mean():.3f}±{row_mean.std():.3f}"])
    widths = [max(len(r[k]) for r in [head] + body) for k in range(len(head))]
    lines = ["  ".join(c.ljust(wd) if k == 0 else c.rjust(wd) for k, (c, wd) in enumerate(zip(r, widths)))
             for r in [head] + body]
    lines.insert(1, "-" * len(lines[0]))
    lines.append("* trained on pooled data from every site (not privacy preserving)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# histograms


def histogram_rows(sets: dict, bins: int = 100):
    """Long-format rows (norm, modality, subject, bin_lo, bin_hi, count) of brain voxels.

    ``sets`` maps a method to its list of studies; bin edges span the global
    brain-voxel range of that (method, modality) set.
    """
    out = []
    for method in METHOD_ORDER:
        if method not in sets:
            continue
        studies = sets[method]
        for mod in MODALITIES:
            vals = [s.modality(mod)[s.brain_mask > 0].astype(np.float64) for s in studies]
            lo = min(v.min() for v in vals)
            hi = max(v.max() for v in vals)
            if hi <= lo:
                hi = lo + 1.0
            edges = np.linspace(lo, hi, bins + 1)
            for s, v in zip(studies, vals):
                counts, _ = np.histogram(v, edges)
                for k in range(bins):
                    out.append((method.value, mod, s.subject_id, float(edges[k]), float(edges[k + 1]), int(counts[k])))
    return out


def write_histograms(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["norm", "modality", "subject", "bin_lo", "bin_hi", "count"])
        for norm, mod, sid, lo, hi, c in rows:
            w.writerow([norm, mod, sid, repr(lo), repr(hi), c])


def read_histograms(path) -> dict:
    """(norm, modality) -> {subject: (edges, counts)}"""
    acc: dict = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            key = (r["norm"], r["modality"])
            d = acc.setdefault(key, {}).setdefault(r["subject"], ([], [], []))
            d[0].append(float(r["bin_lo"]))
            d[1].append(float(r["bin_hi"]))
            d[2].append(int(r["count"]))
    out = {}
    for key, subjects in acc.items():
        out[key] = {
            sid: (np.array(lo + hi[-1:]), np.array(counts)) for sid, (lo, hi, counts) in subjects.items()
        }
    return out


def ks_distance(counts_a, counts_b) -> float:
    """Kolmogorov-Smirnov distance between two histograms sharing bin edges."""
    ca = np.cumsum(counts_a) / np.sum(counts_a)
    cb = np.cumsum(counts_b) / np.sum(counts_b)
    return float(np.max(np.abs(ca - cb)))


def pairwise_ks(hists: dict, norm: str) -> list[float]:
    out = []
    for mod in MODALITIES:
        subjects = hists[(norm, mod)]
        ids = sorted(subjects)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                out.append(ks_distance(subjects[a][1], subjects[b][1]))
    return out


# ---------------------------------------------------------------------------
# pipeline


class Experiment:
    """Runs pipeline stages against an artifact directory with hash-keyed skipping."""

    def __init__(self, cfg: ExperimentConfig, out_dir=None, force: bool = False, threads: int = 1):
        self.cfg = cfg.validate()
        self.root = Path(out_dir if out_dir is not None else cfg.output_dir)
        self.force = force
        self.threads = threads
        self.methods = [NormMethod(m) for m in cfg.methods]
        self.ran: list[str] = []
        self.skipped: list[str] = []

    # manifest -----------------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text())
        return {"files": {}, "stages": {}}

    def _save_manifest(self, manifest: dict):
        files = {}
        for p in sorted(self.root.rglob("*")):
            if p.is_file() and p != self.manifest_path:
                files[p.relative_to(self.root).as_posix()] = sha256_file(p)
        manifest["files"] = files
        self.manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    def verify_manifest(self) -> list[str]:
        """Relative paths whose content no longer matches the manifest (empty when intact)."""
        manifest = self._load_manifest()
        bad = []
        for rel, digest in manifest["files"].items():
            p = self.root / rel
            if not p.exists() or sha256_file(p) != digest:
                bad.append(rel)
        return bad

    def _stage_key(self, stage: str, manifest: dict) -> str:
        c = self.cfg
        sections = {
            "gen-data": [c.phantom.to_dict(), c.n_subjects],
            "split": [c.n_subsets, list(c.split_ratios), c.split_seed, c.common_subset],
            "normalize": [list(c.methods)],
            "train-baselines": [asdict(c.unet), asdict(c.train)],
            "federate": [asdict(c.unet), c.fl_rounds, c.fl_local_epochs, c.fl_lr, c.fl_batch_size, c.fl_seed],
            "evaluate": [asdict(c.unet)],
            "export-histograms": [c.hist_bins],
            "report": [],
        }
        upstream = {
            "gen-data": [],
            "split": ["gen-data"],
            "normalize": ["gen-data", "split"],
            "train-baselines": ["normalize"],
            "federate": ["normalize"],
            "evaluate": ["normalize", "train-baselines", "federate"],
            "export-histograms": ["normalize"],
            "report": ["evaluate"],
        }
        ups = [manifest["stages"].get(u, {}).get("outputs_digest") for u in upstream[stage]]
        return _digest([stage, sections[stage], ups])

    def _outputs_digest(self, outputs: list[Path]) -> str:
        files = []
        for o in outputs:
            paths = sorted(p for p in o.rglob("*") if p.is_file()) if o.is_dir() else [o]
            files += [(p.relative_to(self.root).as_posix(), sha256_file(p)) for p in paths]
        return _digest(files)

    def _outputs(self, stage: str) -> list[Path]:
        r = self.root
        return {
            "gen-data": [r / "data" / "raw"],
            "split": [r / "split.json"],
            "normalize": [r / "normalized"],
            "train-baselines": [r / "models"],
            "federate": [r / "fl"],
            "evaluate": [r / "results" / "dice_matrix.csv", r / "results" / "scores.csv"],
            "export-histograms": [r / "results" / "histograms.csv"],
            "report": [r / "results" / "dice_matrix.txt"],
        }[stage]

    def run_stage(self, stage: str) -> bool:
        """Run one stage unless its key and outputs are unchanged.  Returns True if it ran."""
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "config.json").write_text(self.cfg.to_json())
        manifest = self._load_manifest()
        key = self._stage_key(stage, manifest)
        outputs = self._outputs(stage)
        prev = manifest["stages"].get(stage)
        if (not self.force and prev and prev["key"] == key and all(o.exists() for o in outputs)
                and prev["outputs_digest"] == self._outputs_digest(outputs)):
            log.info("stage %s up to date, skipped", stage)
            self.skipped.append(stage)
            return False
        t0 = time.perf_counter()
        log.info("stage %s started", stage)
        try:
            getattr(self, "_stage_" + stage.replace("-", "_"))()
        except (ConfigError, StageError):
            raise
        except Exception as exc:  # any failure halts with stage name and cause
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        manifest["stages"][stage] = {"key": key, "outputs_digest": self._outputs_digest(outputs)}
        # downstream stages keyed on the old digest will rerun on their next call
        self._save_manifest(manifest)
        log.info("stage %s done in %.1f s", stage, time.perf_counter() - t0)
        self.ran.append(stage)
        return True

    def run_all(self):
        for stage in STAGES:
            self.run_stage(stage)

    # loading helpers ------------------------------------------------------------

    def _split(self) -> CohortSplit:
        p = self.root / "split.json"
        if not p.exists():
            raise FileNotFoundError(f"{p} missing; run the split stage first")
        return CohortSplit.from_json(p.read_text())

    def _norm_dir(self, method: NormMethod, part: str) -> Path:
        return self.root / "normalized" / method.value / part

    def _load_part(self, method: NormMethod, part: str, ids) -> list:
        return [load_study(self._norm_dir(method, part) / i) for i in ids]

    def load_arms(self):
        """Per method: dict of part -> list of normalized studies, in split order."""
        split = self._split()
        arms = {}
        for method, subset in zip(self.methods, split.subsets):
            arms[method] = {
                "train": self._load_part(method, "train", subset.train),
                "test": self._load_part(method, "test", subset.test),
                "val": self._load_part(method, "val", subset.val),
                "common_test": self._load_part(method, "common_test", split.common_test),
            }
        return arms

    def _clients(self, arms):
        from .pipeline import Arm

        return make_clients([Arm(m, a["train"], a["test"], a["val"], a["common_test"]) for m, a in arms.items()])

    def _save_params(self, path: Path, params: dict):
        model = UNet(self.cfg.unet)
        save_checkpoint(path, model.names, model.kinds, params)

    def _load_params(self, path: Path) -> dict:
        if not (path / "params.bin").exists():
            raise FileNotFoundError(f"missing checkpoint {path}")
        return load_checkpoint(path)[2]

    # stages ---------------------------------------------------------------------

    def _stage_gen_data(self):
        out = self.root / "data" / "raw"
        if out.exists():
            _rmtree(out)
        write_cohort(self.cfg.phantom, self.cfg.n_subjects, out)

    def _stage_split(self):
        raw = self.root / "data" / "raw"
        ids = sorted(p.name for p in raw.iterdir() if p.is_dir())
        c = self.cfg
        split = split_cohort(ids, c.n_subsets, c.split_ratios, c.split_seed, c.common_subset)
        (self.root / "split.json").write_text(split.to_json() + "\n")

    def _stage_normalize(self):
        from .pipeline import build_arms

        split = self._split()
        raw = self.root / "data" / "raw"
        needed = {i for s in split.subsets for i in s.ids} | set(split.common_test)
        studies = {i: load_study(raw / i) for i in sorted(needed)}
        out = self.root / "normalized"
        if out.exists():
            _rmtree(out)
        for arm in build_arms(studies, split, self.methods):
            for part in PARTS:
                for s in getattr(arm, part):
                    save_study(s, self._norm_dir(arm.method, part) / s.subject_id)
            if arm.nyul_scales is not None:
                scales = {mod: json.loads(sc.to_json()) for mod, sc in arm.nyul_scales.items()}
                (out / arm.method.value / "scales.json").write_text(json.dumps(scales, indent=1) + "\n")

    def _stage_train_baselines(self):
        arms = self.load_arms()
        clients = self._clients(arms)
        t = self.cfg.train
        res = run_baselines(clients, self.cfg.unet, t.epochs, t.batch_size, t.lr, t.seed, t.checkpoint_on)
        out = self.root / "models"
        for label, r in res.items():
            d = out / _model_dir(label)
            self._save_params(d, r.params)
            (d / "train_log.jsonl").write_text(r.report.to_jsonl())
            (d / "train_subjects.json").write_text(json.dumps(sorted(r.train_subjects)) + "\n")

    def _stage_federate(self):
        arms = self.load_arms()
        out = self.root / "fl"
        for agg in (FEDAVG, FEDBN):
            clients = self._clients(arms)
            res = run_federated(clients, self.cfg.fl_config(agg, self.threads), self.cfg.unet)
            d = out / agg
            d.mkdir(parents=True, exist_ok=True)
            (d / "round_log.jsonl").write_text("".join(json.dumps(e) + "\n" for e in res.round_log))
            if agg == FEDAVG:
                self._save_params(d / "global", res.global_params)
            else:
                for method, params in res.personalized.items():
                    self._save_params(d / f"personalized-{method.value}", params)

    def _stage_evaluate(self):
        arms = self.load_arms()
        models = {}
        for m in self.methods:
            models[m.label] = self._load_params(self.root / "models" / _model_dir(m.label))
        models["FedAvg"] = self._load_params(self.root / "fl" / FEDAVG / "global")
        models["FedBN"] = {m: self._load_params(self.root / "fl" / FEDBN / f"personalized-{m.value}")
                           for m in self.methods}
        models[CENTRALIZED] = self._load_params(self.root / "models" / _model_dir(CENTRALIZED))
        common = {m: a["common_test"] for m, a in arms.items()}
        matrix = cross_evaluate(models, common, self.cfg.unet, st_rows=[m.label for m in self.methods])
        res = self.root / "results"
        res.mkdir(parents=True, exist_ok=True)
        (res / "dice_matrix.csv").write_text(matrix_to_csv(matrix))
        ids = [s.subject_id for s in next(iter(common.values()))]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "test_set", "subject", "gds"])
        for (row, col), scores in matrix.scores.items():
            for sid, g in zip(ids, scores):
                w.writerow([row, col, sid, repr(float(g))])
        (res / "scores.csv").write_text(buf.getvalue())

    def _stage_export_histograms(self):
        split = self._split()
        sets = {m: self._load_part(m, "common_test", split.common_test) for m in self.methods}
        res = self.root / "results"
        res.mkdir(parents=True, exist_ok=True)
        write_histograms(histogram_rows(sets, self.cfg.hist_bins), res / "histograms.csv")

    def _stage_report(self):
        p = self.root / "results" / "dice_matrix.csv"
        if not p.exists():
            raise FileNotFoundError(f"{p} missing; run the evaluate stage first")
        table = matrix_table(matrix_from_csv(p.read_text()))
        (self.root / "results" / "dice_matrix.txt").write_text(table)
        print(table, end="")

    def load_matrix(self) -> DiceMatrix:
        return matrix_from_csv((self.root / "results" / "dice_matrix.csv").read_text())


def _model_dir(label: str) -> str:
    return "centralized" if label == CENTRALIZED else "st-" + NormMethod(_label_to_value(label)).value


def _label_to_value(label: str) -> str:
    for m in METHOD_ORDER:
        if m.label == label:
            return m.value
    raise KeyError(label)


def _rmtree(path: Path):
    import shutil

    shutil.rmtree(path)


def normalize_directory(method: NormMethod, in_dir, out_dir, fit_ids=None) -> list[str]:
    """Normalize every study under ``in_dir`` into ``out_dir``; returns the subject ids.

    Nyul is fitted on the studies named in ``fit_ids`` (all studies when None)
    and the fitted scales are written to ``out_dir/scales.json``.
    """
    method = NormMethod(method)
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    ids = sorted(p.name for p in in_dir.iterdir() if (p / "meta.json").exists())
    if not ids:
        raise FileNotFoundError(f"no studies under {in_dir}")
    studies = {i: load_study(in_dir / i) for i in ids}
    scales = None
    if method is NormMethod.NYUL:
        pool = ids if fit_ids is None else [i for i in fit_ids if i in studies]
        if not pool:
            raise ValueError("no fit-split subjects found in the input directory")
        scales = fit_nyul_scales([studies[i] for i in pool])
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in normalize_subset(list(studies.values()), method, nyul_scales=scales):
        save_study(s, out_dir / s.subject_id)
    if scales is not None:
        d = {mod: json.loads(sc.to_json()) for mod, sc in scales.items()}
        (out_dir / "scales.json").write_text(json.dumps(d, indent=1) + "\n")
    return ids


def load_nyul_scales(path) -> dict:
    d = json.loads(Path(path).read_text())
    return {mod: NyulStandardScale.from_json(json.dumps(v)) for mod, v in d.items()}
