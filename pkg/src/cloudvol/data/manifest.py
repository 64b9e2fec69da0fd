"""Dataset manifest: one JSON file indexing every stored sample."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

MANIFEST_VERSION = 1

SPLITS = ("train", "val", "test", "excluded")


@dataclass
class SampleRecord:
    sample_id: str
    path: str
    satellite_id: str
    timestamp: int
    split: str
    cloudy_fraction: float
    kind: str = "general"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split '{self.split}'")


@dataclass
class DatasetManifest:
    version: int = MANIFEST_VERSION
    channel_maps: Dict[str, List[int]] = field(default_factory=dict)
    samples: List[SampleRecord] = field(default_factory=list)

    def add(self, record: SampleRecord):
        if any(s.sample_id == record.sample_id for s in self.samples):
            raise ValueError(f"duplicate sample id '{record.sample_id}'")
        self.samples.append(record)

    def split(self, name: str) -> List[SampleRecord]:
        return [s for s in self.samples if s.split == name]

    def save(self, path):
        doc = {
            "version": self.version,
            "channel_maps": self.channel_maps,
            "samples": [asdict(s) for s in self.samples],
        }
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"manifest version {doc.get('version')} unsupported")
        m = cls(channel_maps={k: list(v) for k, v in doc["channel_maps"].items()})
        seen = set()
        for rec in doc["samples"]:
            if rec["sample_id"] in seen:
                raise ValueError(f"duplicate sample id '{rec['sample_id']}'")
            seen.add(rec["sample_id"])
            m.samples.append(SampleRecord(**rec))
        return m
