"""Deterministic on-disk store for orbit records and reports.

Records are JSON keyed by a content hash of the loop samples and the system
document, so re-running a command on unchanged inputs reproduces identical
files byte for byte (Python's float repr is shortest round-trip).
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .loopspace import SymmetricLoop
from .model import TorusSpace

__all__ = ["OrbitStore", "canonical_json", "content_hash"]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:12]


class OrbitStore:
    """Directory of orbit JSON/CSV records plus attached reports."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "orbits").mkdir(parents=True, exist_ok=True)
        (self.root / "reports").mkdir(parents=True, exist_ok=True)

    def orbit_ids(self):
        return sorted(p.stem for p in (self.root / "orbits").glob("*.json"))

    def _orbit_path(self, orbit_id):
        return self.root / "orbits" / f"{orbit_id}.json"

    def save_orbit(self, loop: SymmetricLoop, system_doc: dict, extra: dict) -> str:
        payload = {
            "period": loop.period,
            "grid": loop.n,
            "dim": loop.dim,
            "half_values": [[float(v) for v in row] for row in loop.half_values],
            "periods": [float(p) for p in loop.torus.periods],
            "system": system_doc,
        }
        orbit_id = content_hash(payload)
        record = dict(payload)
        record["id"] = orbit_id
        record.update(extra)
        with open(self._orbit_path(orbit_id), "w") as fh:
            json.dump(record, fh, sort_keys=True, indent=1)
            fh.write("\n")
        self._write_loop_csv(loop, self.root / "orbits" / f"{orbit_id}.csv")
        return orbit_id

    @staticmethod
    def _write_loop_csv(loop: SymmetricLoop, path):
        ts = loop.full_times()
        vals = loop.full_values()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"q{i + 1}" for i in range(loop.dim)])
            for t, row in zip(ts, vals):
                writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    def load_orbit(self, orbit_id):
        with open(self._orbit_path(orbit_id)) as fh:
            record = json.load(fh)
        torus = TorusSpace(record["dim"], np.asarray(record["periods"]))
        loop = SymmetricLoop(record["period"], np.asarray(record["half_values"]),
                             torus)
        return loop, record

    def save_report(self, name: str, payload: dict):
        path = self.root / "reports" / f"{name}.json"
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
        return path
