"""File formats: datasets, run configs, Pareto-front documents, reports.

All documents are format_version-tagged JSON. Masks serialize as
run-length subsequence triples (start, channel, length), which keeps
front files compact and human-auditable. Serialization is byte-stable:
identical inputs produce identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from importlib import resources
import jsonschema
import numpy as np

from .core import (
    ChangeMask,
    LabeledDataset,
    Subsequence,
    TimeSeriesInstance,
    decompose_mask,
    reconstruct_mask,
)
from .driver import FrontMember, ParetoFront, RunConfig, UtilityWeights
from .genetic import MutationRates
from .objectives import ObjectiveVector

FORMAT_VERSION = 1


class FileFormatError(ValueError):
    pass


def _check(doc: dict, path, kind: str) -> dict:
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: expected a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise FileFormatError(
            f"{path}: {kind} format_version {doc.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    return doc


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def dump_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------- datasets

def dataset_to_doc(dataset: LabeledDataset) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "length": dataset.length,
        "channels": dataset.channels,
        "classes": dataset.class_count,
        "instances": [
            {"label": inst.label, "values": inst.values.T.tolist()}
            for inst in dataset.instances
        ],
    }


def dataset_from_doc(doc: dict, path="<doc>") -> LabeledDataset:
    _check(doc, path, "dataset")
    try:
        length, channels, classes = doc["length"], doc["channels"], doc["classes"]
        instances = []
        for entry in doc["instances"]:
            values = np.asarray(entry["values"], dtype=float).T
            if values.shape != (length, channels):
                raise FileFormatError(
                    f"{path}: instance shape {values.shape} != ({length}, {channels})"
                )
            instances.append(TimeSeriesInstance(values, int(entry["label"])))
        return LabeledDataset(tuple(instances), class_count=int(classes))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"{path}: {exc}") from exc


def save_dataset(dataset: LabeledDataset, path) -> None:
    dump_json(dataset_to_doc(dataset), path)


def load_dataset(path) -> LabeledDataset:
    return dataset_from_doc(_load_json(path), path)


# ------------------------------------------------------------------ config

def config_to_doc(cfg: RunConfig, weights: UtilityWeights) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "population_size": cfg.population_size,
        "phase1_generations": cfg.phase1_generations,
        "phase2_generations": cfg.phase2_generations,
        "phase1_rates": asdict(cfg.phase1_rates),
        "phase2_rates": asdict(cfg.phase2_rates),
        "init_percent": cfg.init_percent,
        "reinit_increment": cfg.reinit_increment,
        "reinit_after": cfg.reinit_after,
        "gamma": cfg.gamma,
        "penalty": cfg.penalty,
        "seed": cfg.seed,
        "nun_target_class": cfg.nun_target_class,
        "nun_by_label": cfg.nun_by_label,
        "weights": asdict(weights),
    }


def config_from_doc(doc: dict, path="<doc>") -> tuple[RunConfig, UtilityWeights]:
    """Every field is optional; omitted ones keep their defaults."""
    _check(doc, path, "config")
    known = {
        "population_size", "phase1_generations", "phase2_generations",
        "phase1_rates", "phase2_rates", "init_percent", "reinit_increment",
        "reinit_after", "gamma", "penalty", "seed", "nun_target_class",
        "nun_by_label", "weights", "format_version",
    }
    unknown = set(doc) - known
    if unknown:
        raise FileFormatError(f"{path}: unknown config fields {sorted(unknown)}")
    kwargs = {k: doc[k] for k in known - {"format_version", "weights", "phase1_rates", "phase2_rates"} if k in doc}
    try:
        for rates_key in ("phase1_rates", "phase2_rates"):
            if rates_key in doc:
                kwargs[rates_key] = MutationRates(**doc[rates_key])
        cfg = RunConfig(**kwargs)
        weights = UtilityWeights(**doc["weights"]) if "weights" in doc else UtilityWeights()
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return cfg, weights


def load_config(path) -> tuple[RunConfig, UtilityWeights]:
    return config_from_doc(_load_json(path), path)


def config_hash(cfg: RunConfig, weights: UtilityWeights) -> str:
    payload = json.dumps(config_to_doc(cfg, weights), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ------------------------------------------------------------------ fronts

def mask_to_doc(mask: ChangeMask) -> dict:
    return {
        "kind": mask.kind,
        "length": mask.length,
        "channels": 1 if mask.bits.ndim == 1 else mask.bits.shape[1],
        "subsequences": [[s.start, s.channel, s.length] for s in decompose_mask(mask)],
    }


def mask_from_doc(doc: dict) -> ChangeMask:
    subs = [Subsequence(int(s), int(c), int(n)) for s, c, n in doc["subsequences"]]
    return reconstruct_mask(subs, int(doc["length"]), int(doc["channels"]), doc["kind"])


def front_to_doc(front: ParetoFront, config_digest: str) -> dict:
    members = []
    for m in front.members:
        obj = m.objectives
        members.append(
            {
                "mask": mask_to_doc(m.mask),
                "counterfactual": m.counterfactual.values.T.tolist(),
                "objectives": {
                    "o1": obj.o1, "o2": obj.o2, "o3": obj.o3, "o4": obj.o4,
                    "valid": obj.valid,
                },
            }
        )
    return {
        "format_version": FORMAT_VERSION,
        "config_hash": config_digest,
        **front.provenance,
        "members": members,
    }


def front_from_doc(doc: dict, path="<doc>") -> ParetoFront:
    _check(doc, path, "front")
    members = []
    for entry in doc["members"]:
        mask = mask_from_doc(entry["mask"])
        cf = TimeSeriesInstance(np.asarray(entry["counterfactual"], dtype=float).T)
        obj = entry["objectives"]
        members.append(
            FrontMember(
                mask,
                cf,
                ObjectiveVector(obj["o1"], obj["o2"], obj["o3"], obj["o4"], obj["valid"]),
            )
        )
    provenance = {
        k: v for k, v in doc.items() if k not in ("format_version", "members", "config_hash")
    }
    return ParetoFront(tuple(members), provenance)


def load_front(path) -> ParetoFront:
    return front_from_doc(_load_json(path), path)


# ----------------------------------------------------------------- reports

def write_report_csv(report: dict, path) -> None:
    """One row per instance; per-method metric columns side by side."""
    methods = list(report["records"])
    by_instance: dict[int, dict[str, dict]] = {}
    for method in methods:
        for rec in report["records"][method]:
            by_instance.setdefault(rec["instance_id"], {})[method] = rec
    metric_names = ("valid", "proximity", "sparsity", "nos", "os_scaled",
                    "sparsity_nos_mean", "wall_time_s")
    header = ["instance_id"]
    for method in methods:
        prefix = "" if len(methods) == 1 else f"{method}_"
        header.extend(prefix + name for name in metric_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for instance_id in sorted(by_instance):
            row = [instance_id]
            for method in methods:
                rec = by_instance[instance_id].get(method, {})
                row.extend(rec.get(name) for name in metric_names)
            writer.writerow(row)


# ----------------------------------------------------------------- schemas

def validate_document(doc: dict, schema_name: str) -> None:
    """Validate against one of the shipped JSON schemas
    (dataset, model, config, front, report)."""
    schema_text = resources.files("tscf.schemas").joinpath(f"{schema_name}.json").read_text()
    jsonschema.validate(doc, json.loads(schema_text))


def parse_instance_selector(spec: str, size: int) -> list[int]:
    """'all', 'a..b' (inclusive), or comma-separated ids."""
    if spec == "all":
        return list(range(size))
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        ids = list(range(int(lo), int(hi) + 1))
    else:
        ids = [int(tok) for tok in spec.split(",") if tok.strip()]
    for i in ids:
        if not 0 <= i < size:
            raise ValueError(f"instance id {i} outside 0..{size - 1}")
    return ids
