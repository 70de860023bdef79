"""Stage orchestration: configuration validation, provenance records, and
the file-based pipeline synth -> fcm -> train-vae -> embed -> cluster ->
train-clf -> evaluate -> report.

Each stage reads the previous stage's artifacts by manifest, writes its own
outputs under one subdirectory of the output root, and drops a provenance
record carrying the config hash and seed.  Two runs with the same config
and seed produce byte-identical trees except for the provenance timestamp
field.
"""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import classifier as clf
from . import cluster as clu
from . import fcm as fcm_mod
from . import nn, synthesis, vae
from .soundscape import LandUseClass, TimeCode, read_manifest

__all__ = ["PipelineConfig", "validate_config", "run_subcommand",
           "ConfigError", "MissingArtifactError", "InvariantViolationError",
           "DEFAULTS", "STAGES"]

VERSION = "0.1.0"

STAGES = ("synth", "fcm", "train-vae", "embed", "cluster", "train-clf",
          "evaluate", "report", "selftest")


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


class InvariantViolationError(RuntimeError):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "scenario": {
        "n_classes": 9,
        "devices_per_class": 2,
        "days": 14,
        "recordings_per_day": 12,
        "recording_seconds": 1.0,
        "sample_rate": 8000.0,
        "noise_amplitude": 0.01,
        "noise_kind": "white",
        "comodulation": [0.4, 1.0],
        "fingerprint_freq_jitter": 0.1,
        "fingerprint_tones": 2,
        "fingerprint_level_jitter": 0.2,
        "start_date": [2019, 5, 6],
    },
    "spectral": {
        "n_bins": 1024,
        "log_eps": 1e-12,
        "half_spectrum": True,
    },
    "fcm": {
        "variance_threshold": 0.95,
        "squared": False,
        "resize_target": 64,
    },
    "vae": {
        "input_side": 64,
        "feature_maps": [8, 16, 32],
        "latent_dim": 16,
        "fc_widths": [256, 128],
        "epochs": 2000,
        "lr": 1e-5,
        "e_max": 700,
        "s": 1e-4,
        "pyramid_levels": 4,
        "batch_size": 16,
        "train_subset": 100,
    },
    "cluster": {
        "k_min": 2,
        "k_max": 8,
    },
    "classifier": {
        "scale": "desk",
        "fractions": [0.6, 0.2, 0.2],
        "scope": "per_device",
        "epochs": 100,
        "lr": 1e-4,
        "batch_size": 16,
    },
}


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = {}
    for key, dval in defaults.items():
        if key in given:
            gval = given[key]
            if isinstance(dval, dict):
                if not isinstance(gval, dict):
                    raise ConfigError(f"{path}{key}: expected an object")
                out[key] = _merge(dval, gval, f"{path}{key}.")
            else:
                out[key] = gval
        else:
            # deep-copy so later overrides cannot mutate DEFAULTS itself
            out[key] = copy.deepcopy(dval)
    for key in given:
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key}")
    return out


@dataclass
class PipelineConfig:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    def hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def scenario(self) -> synthesis.ScenarioConfig:
        s = self.raw["scenario"]
        return synthesis.default_scenario(
            n_classes=s["n_classes"],
            devices_per_class=s["devices_per_class"],
            days=s["days"],
            recordings_per_day=s["recordings_per_day"],
            recording_seconds=s["recording_seconds"],
            sample_rate=s["sample_rate"],
            seed=self.raw["seed"],
            start_date=tuple(s["start_date"]),
            noise_amplitude=s["noise_amplitude"],
            noise_kind=s["noise_kind"],
            comodulation=tuple(s["comodulation"]),
            fingerprint_freq_jitter=s["fingerprint_freq_jitter"],
            fingerprint_tones=s["fingerprint_tones"],
            fingerprint_level_jitter=s["fingerprint_level_jitter"],
        )

    def fcm_config(self) -> fcm_mod.FcmPipelineConfig:
        return fcm_mod.FcmPipelineConfig(
            n_bins=self.raw["spectral"]["n_bins"],
            log_eps=self.raw["spectral"]["log_eps"],
            half_spectrum=self.raw["spectral"]["half_spectrum"],
            variance_threshold=self.raw["fcm"]["variance_threshold"],
            squared=self.raw["fcm"]["squared"],
            resize_target=self.raw["fcm"]["resize_target"],
        )

    def vae_config(self) -> vae.VaeConfig:
        v = self.raw["vae"]
        return vae.VaeConfig(
            input_side=v["input_side"],
            feature_maps=tuple(v["feature_maps"]),
            latent_dim=v["latent_dim"],
            fc_widths=tuple(v["fc_widths"]),
            epochs=v["epochs"],
            lr=v["lr"],
            e_max=v["e_max"],
            s=v["s"],
            pyramid_levels=v["pyramid_levels"],
            batch_size=v["batch_size"],
            seed=self.raw["seed"],
        )

    def classifier_scale(self) -> clf.ClassifierScale:
        name = self.raw["classifier"]["scale"]
        if name == "desk":
            return clf.ClassifierScale.desk()
        if name == "paper":
            return clf.ClassifierScale.paper()
        raise ConfigError(f"classifier.scale: unknown scale {name!r}")


def _validate_ranges(raw: dict) -> None:
    fr = raw["classifier"]["fractions"]
    if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(
            f"classifier.fractions: values {fr} must sum to 1")
    if raw["cluster"]["k_min"] < 1 or raw["cluster"]["k_max"] < raw["cluster"]["k_min"]:
        raise ConfigError("cluster.k_min/k_max: invalid range")
    if raw["spectral"]["n_bins"] < 1:
        raise ConfigError("spectral.n_bins: must be >= 1")
    if raw["spectral"]["log_eps"] <= 0:
        raise ConfigError("spectral.log_eps: must be > 0")
    if not 0 < raw["fcm"]["variance_threshold"] <= 1:
        raise ConfigError("fcm.variance_threshold: must be in (0, 1]")
    if raw["classifier"]["scale"] not in ("desk", "paper"):
        raise ConfigError(
            f"classifier.scale: unknown scale {raw['classifier']['scale']!r}")
    if raw["classifier"]["scope"] not in ("per_device", "cross_device"):
        raise ConfigError(
            f"classifier.scope: unknown scope {raw['classifier']['scope']!r}")


def validate_config(path_or_dict, overrides: Optional[dict] = None
                    ) -> PipelineConfig:
    """Load, default-fill, and range-check a pipeline config."""
    if isinstance(path_or_dict, dict):
        given = path_or_dict
    else:
        try:
            text = Path(path_or_dict).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path_or_dict}: {exc}")
        try:
            given = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path_or_dict}: parse error at line {exc.lineno}, "
                f"column {exc.colno}: {exc.msg}")
    raw = _merge(DEFAULTS, given, "")
    for key, value in (overrides or {}).items():
        if key == "seed":
            raw["seed"] = int(value)
        elif key == "scale":
            raw["classifier"]["scale"] = value
            raw["vae"]["input_side"] = 64 if value == "desk" else 128
        else:
            raise ConfigError(f"unknown override {key}")
    _validate_ranges(raw)
    return PipelineConfig(raw)


# ----------------------------------------------------------------------
# provenance
# ----------------------------------------------------------------------

def _write_provenance(stage_dir: Path, stage: str,
                      config: PipelineConfig) -> None:
    doc = {
        "config_hash": config.hash(),
        "seed": config.raw["seed"],
        "stage": stage,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "version": VERSION,
    }
    (stage_dir / "provenance.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _check_dependency(path: Path, producer: str) -> None:
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {path}; run the '{producer}' stage first")


def _read_provenance_hash(stage_dir: Path) -> str:
    doc = json.loads((stage_dir / "provenance.json").read_text())
    return doc["config_hash"]


def _parallel_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------

def stage_synth(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    corpus = out / "corpus"
    synthesis.synthesize_corpus(config.scenario(), corpus)
    _write_provenance(corpus, "synth", config)


FCM_MANIFEST_COLUMNS = ("device_id", "lut_id", "t1", "t2", "t3", "path")


def stage_fcm(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    corpus = out / "corpus"
    _check_dependency(corpus / "manifest.csv", "synth")
    rows = read_manifest(corpus / "manifest.csv")
    groups: Dict[tuple, list] = {}
    luts: Dict[str, int] = {}
    for row in rows:
        key = (row.device_id, row.time_code.date_code())
        groups.setdefault(key, []).append(row)
        luts[row.device_id] = row.lut_id
    fcm_dir = out / "fcm"
    fcm_dir.mkdir(parents=True, exist_ok=True)
    pipe = config.fcm_config()
    keys = sorted(groups, key=lambda k: (k[0], k[1]))

    def compute(key):
        device_id, date = key
        day_rows = sorted(groups[key], key=lambda r: r.time_code)
        recs = []
        rate = None
        for r in day_rows:
            samples, rate = synthesis.read_wav(corpus / r.wav_path)
            recs.append(samples)
        return key, fcm_mod.fcm_for_day(recs, rate, pipe, device_id, date)

    results = _parallel_map(compute, keys, jobs)
    index = []
    for (device_id, date), F in results:
        rel = (f"device_{device_id}/"
               f"{date.t1}-{date.t2:02d}-{date.t3:02d}.fcm")
        path = fcm_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        fcm_mod.write_fcm(path, F)
        index.append((device_id, luts[device_id], date, rel))
    with open(fcm_dir / "fcm_manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FCM_MANIFEST_COLUMNS)
        for device_id, lut, date, rel in index:
            writer.writerow([device_id, lut, date.t1, date.t2, date.t3, rel])
    _write_provenance(fcm_dir, "fcm", config)


def _read_fcm_manifest(out: Path) -> List[dict]:
    fcm_dir = out / "fcm"
    _check_dependency(fcm_dir / "fcm_manifest.csv", "fcm")
    entries = []
    with open(fcm_dir / "fcm_manifest.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            entries.append({
                "device_id": rec["device_id"],
                "lut_id": int(rec["lut_id"]),
                "date": TimeCode(int(rec["t1"]), int(rec["t2"]),
                                 int(rec["t3"])),
                "path": fcm_dir / rec["path"],
            })
    return entries


def _load_fcm_image(path: Path, side: int) -> np.ndarray:
    F = fcm_mod.read_fcm(path)
    if F.n_bins != side:
        F = fcm_mod.resize_fcm(F, side)
    return F.r_squared().values


def stage_train_vae(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    entries = _read_fcm_manifest(out)
    vcfg = config.vae_config()
    rng = np.random.default_rng(config.raw["seed"])
    subset = config.raw["vae"]["train_subset"]
    if subset < len(entries):
        picks = sorted(rng.choice(len(entries), size=subset, replace=False))
    else:
        picks = range(len(entries))
    images = [_load_fcm_image(entries[i]["path"], vcfg.input_side)
              for i in picks]
    model, history = vae.train_vae(images, vcfg)
    vae_dir = out / "vae"
    vae_dir.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(vae_dir / "checkpoint.gnn", model.state_dict())
    vae.write_loss_history(vae_dir / "loss_history.csv", history)
    _write_provenance(vae_dir, "train-vae", config)


def _load_vae(config: PipelineConfig, out: Path) -> vae.Vae:
    _check_dependency(out / "vae" / "checkpoint.gnn", "train-vae")
    model = vae.build_vae(config.vae_config())
    model.load_state_dict(nn.load_checkpoint(out / "vae" / "checkpoint.gnn"))
    return model


def stage_embed(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    entries = _read_fcm_manifest(out)
    model = _load_vae(config, out)
    side = config.vae_config().input_side
    embeddings = [
        vae.encode(model, _load_fcm_image(e["path"], side),
                   e["device_id"], e["date"])
        for e in entries
    ]
    emb_dir = out / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    vae.write_embeddings_csv(emb_dir / "embeddings.csv", embeddings)
    _write_provenance(emb_dir, "embed", config)


def _read_embeddings(out: Path):
    path = out / "embeddings" / "embeddings.csv"
    _check_dependency(path, "embed")
    device_ids, dates, mus = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            device_ids.append(row[0])
            dates.append(row[1])
            mus.append([float(v) for v in row[2:]])
    return device_ids, dates, np.asarray(mus)


def stage_cluster(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    device_ids, dates, mus = _read_embeddings(out)
    seed = config.raw["seed"]
    ks = range(config.raw["cluster"]["k_min"],
               config.raw["cluster"]["k_max"] + 1)
    k = clu.select_k(mus, ks, seed)
    result = clu.kmeans(mus, max(k, 1), seed)
    clu_dir = out / "cluster"
    clu_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "k": int(result.k),
        "assignments": [
            {"device_id": d, "date": t, "cluster": int(c)}
            for d, t, c in zip(device_ids, dates, result.assignments)
        ],
        "inertia": float(result.inertia),
        "silhouette": float(result.silhouette),
        "seed": seed,
    }
    (clu_dir / "cluster_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n")
    embeddings = [vae.LatentEmbedding(mu, np.ones_like(mu), d)
                  for mu, d in zip(mus, device_ids)]
    vae.export_embedding_scatter_svg(clu_dir / "embeddings_scatter.svg",
                                     embeddings, result.assignments)
    _write_provenance(clu_dir, "cluster", config)


def _sequences_from_manifest(config: PipelineConfig, out: Path):
    entries = _read_fcm_manifest(out)
    side = config.classifier_scale().side
    records = [
        (e["device_id"], e["date"], LandUseClass(e["lut_id"]),
         _load_fcm_image(e["path"], side))
        for e in entries
    ]
    return clf.assemble_sequences(records)


def _split_spec(config: PipelineConfig) -> clf.SplitSpec:
    c = config.raw["classifier"]
    return clf.SplitSpec(tuple(c["fractions"]), config.raw["seed"],
                         c["scope"])


def stage_train_clf(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    sequences = _sequences_from_manifest(config, out)
    n_classes = config.raw["scenario"]["n_classes"]
    splits = clf.split_dataset(sequences, _split_spec(config))
    c = config.raw["classifier"]
    model, history = clf.train_classifier(
        splits, epochs=c["epochs"], lr=c["lr"], seed=config.raw["seed"],
        batch_size=c["batch_size"], classes=n_classes,
        scale=config.classifier_scale())
    clf_dir = out / "clf"
    clf_dir.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(clf_dir / "checkpoint.gnn", model.state_dict())
    with open(clf_dir / "history.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_acc"])
        for row in history:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    _write_provenance(clf_dir, "train-clf", config)


def stage_evaluate(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    _check_dependency(out / "clf" / "checkpoint.gnn", "train-clf")
    sequences = _sequences_from_manifest(config, out)
    n_classes = config.raw["scenario"]["n_classes"]
    splits = clf.split_dataset(sequences, _split_spec(config))
    model = clf.build_classifier(classes=n_classes,
                                 scale=config.classifier_scale(),
                                 seed=config.raw["seed"])
    model.load_state_dict(nn.load_checkpoint(out / "clf" / "checkpoint.gnn"))
    metrics = clf.evaluate(model, splits[2], classes=n_classes)
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    scenario = ("cross_device"
                if config.raw["classifier"]["scope"] == "cross_device"
                else "same_device")
    doc = json.loads(clf.metrics_to_json(metrics))
    doc["scenario"] = scenario
    (eval_dir / "metrics.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n")
    _write_provenance(eval_dir, "evaluate", config)


def stage_report(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    eval_path = out / "eval" / "metrics.json"
    _check_dependency(eval_path, "evaluate")
    # refuse mixed-config inputs
    hashes = set()
    for stage_dir in ("corpus", "fcm", "clf", "eval"):
        prov = out / stage_dir / "provenance.json"
        if prov.exists():
            hashes.add(_read_provenance_hash(out / stage_dir))
    if len(hashes) > 1:
        raise InvariantViolationError(
            f"mixed config hashes across stages: {sorted(hashes)}")
    doc = json.loads(eval_path.read_text())
    confusion = np.asarray(doc["confusion"])
    metrics = clf.metrics_from_confusion(confusion)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    table = clf.render_metrics_table({doc.get("scenario", "same_device"):
                                      metrics})
    (report_dir / "table.txt").write_text(table)
    img_dir = report_dir / "images"
    img_dir.mkdir(exist_ok=True)
    seen = set()
    for e in _read_fcm_manifest(out):
        if e["device_id"] in seen:
            continue
        seen.add(e["device_id"])
        F = fcm_mod.read_fcm(e["path"])
        fcm_mod.export_fcm_image(F, img_dir / f"{e['device_id']}.pgm")
    _write_provenance(report_dir, "report", config)


def stage_selftest(config: PipelineConfig, out: Path, jobs: int = 1) -> None:
    """Fast oracle suite: transform equivalence, correlation identities,
    gradient checks on every differentiable op family."""
    from .tensor import Tensor

    rng = np.random.default_rng(0)
    # transform vs naive sum
    x = rng.standard_normal(128)
    m = x.size
    naive = np.array([(x * np.exp(-2j * np.pi * np.arange(m) * u / m)).sum()
                      for u in range(m)]) / m
    from .spectral import dft_spectrum
    if np.abs(dft_spectrum(x) - naive).max() > 1e-9:
        raise InvariantViolationError("transform/naive-sum mismatch")
    # correlation identities
    if abs(fcm_mod.pearson([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) > 1e-12:
        raise InvariantViolationError("pearson closed-form mismatch")
    # gradient checks; constants are drawn once so the probed function is
    # identical across the repeated finite-difference evaluations
    w_dense = Tensor(rng.standard_normal((6, 4)))
    k_conv = Tensor(rng.standard_normal((2, 1, 3, 3)))
    w_soft = Tensor(rng.standard_normal((2, 3)))
    checks = {
        "dense": lambda t: ((t @ w_dense) ** 2.0).sum(),
        "conv2d": lambda t: (nn.conv2d(t.reshape(1, 1, 6, 6), k_conv)
                             ** 2.0).sum(),
        "softmax": lambda t: (nn.softmax(t.reshape(2, 3), axis=-1)
                              * w_soft).sum(),
    }
    for name, f in checks.items():
        t = Tensor(rng.standard_normal(36 if name == "conv2d" else
                                       (4, 6) if name == "dense" else 6),
                   requires_grad=True)
        err = nn.grad_check(f, t, 1e-5)
        if err > 1e-3:
            raise InvariantViolationError(
                f"gradient check failed for {name}: {err}")


_STAGE_FNS = {
    "synth": stage_synth,
    "fcm": stage_fcm,
    "train-vae": stage_train_vae,
    "embed": stage_embed,
    "cluster": stage_cluster,
    "train-clf": stage_train_clf,
    "evaluate": stage_evaluate,
    "report": stage_report,
    "selftest": stage_selftest,
}


def run_subcommand(name: str, config: PipelineConfig, out,
                   jobs: int = 1) -> int:
    """Run one stage; returns the process exit status."""
    if name not in _STAGE_FNS:
        raise ConfigError(f"unknown subcommand {name!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _STAGE_FNS[name](config, out, jobs)
    except ConfigError:
        raise
    except MissingArtifactError:
        raise
    return 0
