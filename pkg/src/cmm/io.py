"""Dataset files, run configs and result documents.

A dataset is UTF-8 JSON lines.  The first line holds metadata,

    {"meta": {"dims": {"r": 2, "p": 1}, "support_f": ..., "support_g": ...,
              "box_f": [lo, hi], "box_g": [lo, hi], "maps": {...}, ...}}

and every further line is one observation,

    {"space": "F", "v": [u, d]}   or   {"space": "G", "v": [itd]}

with an optional integer ``"label"`` (1..N, N+1 for outliers).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .mappings import Box, MapPair, maps_from_config
from .model import Assignment, ModelParams, ObservationSet


class DatasetError(ValueError):
    """Malformed dataset file; the message starts with the offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(ValueError):
    """Invalid run configuration."""


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and dataclass-like values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _box(value):
    return None if value is None else Box.make(*value)


def dataset_meta(obs: ObservationSet, maps: MapPair | None = None) -> dict:
    meta = dict(obs.meta)
    meta["dims"] = {"r": int(obs.f.shape[1]), "p": int(obs.g.shape[1])}
    meta["support_f"] = float(obs.support_f)
    meta["support_g"] = float(obs.support_g)
    for key, box in (("box_f", obs.box_f), ("box_g", obs.box_g)):
        meta[key] = None if box is None else [box.lo.tolist(), box.hi.tolist()]
    if maps is not None:
        meta["maps"] = maps.to_config()
    return to_jsonable(meta)


def write_dataset(path, obs: ObservationSet, labels: Assignment | None = None,
                  maps: MapPair | None = None) -> None:
    """Write ``obs`` (and optional true labels) as JSON lines."""
    lines = [json.dumps({"meta": dataset_meta(obs, maps)}, sort_keys=True)]
    for space, data, lab in (("F", obs.f, None if labels is None else labels.labels_f),
                             ("G", obs.g, None if labels is None else labels.labels_g)):
        for i, row in enumerate(data):
            rec = {"space": space, "v": [float(x) for x in row]}
            if lab is not None:
                rec["label"] = int(lab[i])
            lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _vector(rec, lineno, dim):
    v = rec.get("v")
    if not isinstance(v, list) or len(v) != dim:
        raise DatasetError(lineno, f"'v' must be a list of {dim} numbers")
    try:
        out = [float(x) for x in v]
    except (TypeError, ValueError):
        raise DatasetError(lineno, "'v' must contain numbers") from None
    if not all(math.isfinite(x) for x in out) or any(isinstance(x, bool) for x in v):
        raise DatasetError(lineno, "'v' must contain finite numbers")
    return out


def read_dataset(path):
    """Parse a dataset file.

    Returns
    -------
    obs : ObservationSet
    labels : Assignment or None
        Present only when every observation line carries a label.
    meta : dict
        The metadata block as stored.

    Raises
    ------
    DatasetError
        With the 1-based line number of the first problem found.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as err:
        raise DatasetError(0, f"cannot read {path}: {err}") from None
    rows = text.splitlines()
    if not rows:
        raise DatasetError(1, "empty file; expected a metadata line")
    try:
        head = json.loads(rows[0])
    except json.JSONDecodeError as err:
        raise DatasetError(1, f"invalid JSON ({err.msg})") from None
    if not isinstance(head, dict) or not isinstance(head.get("meta"), dict):
        raise DatasetError(1, "first line must be {\"meta\": {...}}")
    meta = head["meta"]
    try:
        r, p = int(meta["dims"]["r"]), int(meta["dims"]["p"])
        support_f, support_g = float(meta["support_f"]), float(meta["support_g"])
        box_f, box_g = _box(meta.get("box_f")), _box(meta.get("box_g"))
    except (KeyError, TypeError, ValueError) as err:
        raise DatasetError(1, f"metadata incomplete or invalid ({err})") from None

    f, g, lab_f, lab_g = [], [], [], []
    for lineno, raw in enumerate(rows[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as err:
            raise DatasetError(lineno, f"invalid JSON ({err.msg})") from None
        if not isinstance(rec, dict):
            raise DatasetError(lineno, "observation must be a JSON object")
        space = rec.get("space")
        if space == "F":
            vec = _vector(rec, lineno, r)
            if box_f is not None and not box_f.contains(vec):
                raise DatasetError(lineno, "F observation outside the support box")
            f.append(vec)
            lab_f.append(rec.get("label"))
        elif space == "G":
            vec = _vector(rec, lineno, p)
            if box_g is not None and not box_g.contains(vec):
                raise DatasetError(lineno, "G observation outside the support box")
            g.append(vec)
            lab_g.append(rec.get("label"))
        else:
            raise DatasetError(lineno, "'space' must be \"F\" or \"G\"")
    if not f or not g:
        raise DatasetError(len(rows), "both F and G observations are required")
    try:
        obs = ObservationSet(np.array(f), np.array(g), support_f, support_g, box_f, box_g,
                             meta={k: v for k, v in meta.items()
                                   if k not in ("dims", "support_f", "support_g", "box_f",
                                                "box_g")})
    except ValueError as err:
        raise DatasetError(1, str(err)) from None
    labels = None
    if all(isinstance(x, int) for x in lab_f + lab_g):
        labels = Assignment(np.array(lab_f), np.array(lab_g))
    return obs, labels, meta


def maps_from_meta(meta: dict) -> MapPair:
    if "maps" not in meta:
        raise ConfigError("dataset metadata has no map configuration")
    return maps_from_config(meta["maps"])


def load_config(path) -> dict:
    """Read a run config in JSON or YAML."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        cfg = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot parse config {path}: {err}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def params_to_dict(params: ModelParams) -> dict:
    return to_jsonable({"priors_f": params.priors_f, "priors_g": params.priors_g,
                        "positions": params.positions, "cov_f": params.cov_f,
                        "cov_g": params.cov_g})


def params_from_dict(data: dict) -> ModelParams:
    return ModelParams(data["priors_f"], data["priors_g"], data["positions"],
                       data["cov_f"], data["cov_g"])


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                             for x in row])
