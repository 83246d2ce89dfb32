"""Dataset manifest: one record per utterance with speaker, gender and load label."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

from .errors import DataError

LABELS = ("no_load", "load")
COLUMNS = ("utterance_id", "path", "speaker", "gender", "label")


@dataclass(frozen=True)
class Record:
    utterance_id: str
    path: str
    speaker: str
    gender: str
    label: str
    duration: float | None = None


class Manifest:
    def __init__(self, records, root: str = "."):
        self.records = list(records)
        self.root = root

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self):
        return [r.utterance_id for r in self.records]

    @property
    def speakers(self):
        return sorted({r.speaker for r in self.records})

    def resolve(self, rec: Record) -> str:
        return rec.path if os.path.isabs(rec.path) else os.path.join(self.root, rec.path)

    def labels01(self):
        """Integer labels: no_load -> 0, load -> 1."""
        return [LABELS.index(r.label) for r in self.records]

    def validate(self, check_files: bool = True, for_evaluation: bool = True) -> None:
        seen = set()
        for r in self.records:
            if r.utterance_id in seen:
                raise DataError(f"duplicate utterance_id {r.utterance_id!r}")
            seen.add(r.utterance_id)
            if r.label not in LABELS:
                raise DataError(f"{r.utterance_id}: label {r.label!r} not in {LABELS}")
            if check_files and not os.path.isfile(self.resolve(r)):
                raise DataError(f"{r.utterance_id}: audio file {self.resolve(r)} does not exist")
        if for_evaluation:
            if len(self.speakers) < 2:
                raise DataError("need at least 2 distinct speakers")
            if {r.label for r in self.records} != set(LABELS):
                raise DataError("both classes must be present")


def read_manifest(path) -> Manifest:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: manifest lacks columns {sorted(missing)}")
        recs = []
        for row in reader:
            dur = row.get("duration")
            recs.append(Record(row["utterance_id"], row["path"], row["speaker"], row["gender"],
                               row["label"], float(dur) if dur else None))
    return Manifest(recs, root=os.path.dirname(os.path.abspath(path)))


def write_manifest(path, m: Manifest) -> None:
    with_duration = any(r.duration is not None for r in m.records)
    cols = COLUMNS + (("duration",) if with_duration else ())
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for r in m.records:
            row = [r.utterance_id, r.path, r.speaker, r.gender, r.label]
            if with_duration:
                row.append("" if r.duration is None else repr(r.duration))
            writer.writerow(row)
    os.replace(tmp, path)
