"""Run manifests: resolved config, seeds, wall clock, and artifact digests.

The determinism contract is (config, seed, build) -> byte-identical CSVs;
floats are serialized with 17 significant digits so round-trips are exact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from typing import Any


def fmt_float(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def rows_to_csv(header: list[str], rows: list[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(v) for v in row])
    return buf.getvalue()


def digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays and dataclass-ish values to
    plain Python so summaries serialize identically everywhere."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


@dataclass
class RunResult:
    subcommand: str
    config: dict
    summary: dict
    tables: dict[str, str] = field(default_factory=dict)  # filename -> CSV text
    verdicts: dict[str, bool] = field(default_factory=dict)
    wall_seconds: float = 0.0
    stream_paths: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        self.config = to_jsonable(self.config)
        self.summary = to_jsonable(self.summary)
        self.verdicts = {k: bool(v) for k, v in self.verdicts.items()}

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def manifest(self) -> dict:
        from .. import __version__

        inventory = {name: digest(text) for name, text in self.tables.items()}
        summary_text = canonical_json(self.summary)
        return {
            "subcommand": self.subcommand,
            "artifact_version": __version__,
            "config": self.config,
            "config_digest": digest(canonical_json(self.config)),
            "wall_seconds": self.wall_seconds,
            "stream_paths": self.stream_paths,
            "outputs": {**inventory, "summary.json": digest(summary_text)},
            "verdicts": self.verdicts,
            "passed": self.passed,
        }

    def write(self, out_dir: str) -> list[str]:
        import os

        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name, text in self.tables.items():
            path = os.path.join(out_dir, name)
            with open(path, "w") as fh:
                fh.write(text)
            written.append(path)
        spath = os.path.join(out_dir, "summary.json")
        with open(spath, "w") as fh:
            json.dump(self.summary, fh, indent=2, default=str)
        written.append(spath)
        mpath = os.path.join(out_dir, "manifest.json")
        with open(mpath, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, default=str)
        written.append(mpath)
        return written


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
