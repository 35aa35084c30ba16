"""Training-set manifests: record model, JSON-lines I/O, combined-set
assembly and the summed negative log-likelihood over a manifest."""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

from .errors import DuplicateId, MalformedRecord, ScorerFailure, SourceTagMismatch

SOURCES = ("orig", "tts", "cgan", "pl")
SUFFIX = {"tts": "-tts", "cgan": "-cgan", "pl": "-pl"}
FIELDS = ("utt_id", "audio_path", "duration_s", "text", "source", "speaker_id")


@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    audio_path: str
    duration_s: float
    text: str
    source: str
    speaker_id: str | None = None

    def __post_init__(self):
        if not isinstance(self.utt_id, str) or not self.utt_id:
            raise ValueError("utt_id must be a non-empty string")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        d = float(self.duration_s)
        if not (d > 0 and math.isfinite(d)):
            raise ValueError(f"{self.utt_id}: duration_s must be positive, got {self.duration_s}")
        object.__setattr__(self, "duration_s", d)
        object.__setattr__(self, "audio_path", str(self.audio_path))
        if not isinstance(self.text, str):
            raise ValueError(f"{self.utt_id}: text must be a string")
        if self.source != "pl" and not self.text:
            raise ValueError(f"{self.utt_id}: empty text is only allowed for pseudo-labels")

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in FIELDS}
        if d["speaker_id"] is None:
            del d["speaker_id"]
        return json.dumps(d, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRecord":
        unknown = set(d) - set(FIELDS)
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        return cls(d["utt_id"], d["audio_path"], d["duration_s"], d["text"],
                   d["source"], d.get("speaker_id"))


class Manifest:
    """Ordered, immutable collection of records with unique utt_ids."""

    __slots__ = ("_records", "_index")

    def __init__(self, records: Iterable[ManifestRecord] = ()):
        self._records = tuple(records)
        self._index = {}
        for i, r in enumerate(self._records):
            if r.utt_id in self._index:
                raise DuplicateId(r.utt_id)
            self._index[r.utt_id] = i

    @property
    def records(self):
        return self._records

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, utt_id) -> ManifestRecord:
        return self._records[self._index[utt_id]]

    def __contains__(self, utt_id):
        return utt_id in self._index

    def __eq__(self, other):
        return isinstance(other, Manifest) and self._records == other._records

    def __repr__(self):
        return f"Manifest({len(self)} records, {self.total_hours:.4f} h)"

    @property
    def provenance_counts(self) -> dict:
        c = Counter(r.source for r in self._records)
        return {s: c.get(s, 0) for s in SOURCES}

    @property
    def total_hours(self) -> float:
        return math.fsum(r.duration_s for r in self._records) / 3600.0

    def hours_by_source(self) -> dict:
        out = {}
        for s in SOURCES:
            out[s] = math.fsum(r.duration_s for r in self._records if r.source == s) / 3600.0
        return out


def read_manifest(path) -> Manifest:
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = ManifestRecord.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            if rec.utt_id in seen:
                raise DuplicateId(rec.utt_id)
            seen.add(rec.utt_id)
            records.append(rec)
    return Manifest(records)


def write_manifest(m: Manifest, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in m:
            fh.write(r.to_json())
            fh.write("\n")


def resolve_audio(record: ManifestRecord, manifest_path) -> Path:
    """Audio paths are stored relative to the manifest's directory."""
    p = Path(record.audio_path)
    if p.is_absolute():
        return p
    return Path(manifest_path).parent / p


def rebase(m: Manifest, src_manifest, dst_manifest) -> Manifest:
    """Rewrite relative audio paths for a manifest moving to ``dst_manifest``."""
    dst_dir = Path(dst_manifest).parent
    out = []
    for r in m:
        if Path(r.audio_path).is_absolute():
            out.append(r)
            continue
        audio = resolve_audio(r, src_manifest)
        rel = Path(os.path.relpath(audio, dst_dir)).as_posix()
        out.append(replace(r, audio_path=rel))
    return Manifest(out)


def _check_tags(m: Manifest, expected: str, role: str):
    for r in m:
        if r.source != expected:
            raise SourceTagMismatch(
                f"{role} manifest holds {r.utt_id!r} tagged {r.source!r}, expected {expected!r}")


def assemble_combined(orig: Manifest, tts: Manifest = Manifest(), cgan: Manifest = Manifest(),
                      pl: Manifest = Manifest()) -> Manifest:
    """Union of the four training sets that the joint loss sums over.

    An utt_id that collides with an earlier one gets its source suffix
    appended; a collision that survives the suffix is an error.
    """
    parts = (("orig", orig), ("tts", tts), ("cgan", cgan), ("pl", pl))
    for tag, m in parts:
        _check_tags(m, tag, tag)
    out = []
    taken = set()
    for tag, m in parts:
        for r in m:
            if r.utt_id in taken:
                if tag == "orig":
                    raise DuplicateId(r.utt_id)
                r = replace(r, utt_id=r.utt_id + SUFFIX[tag])
                if r.utt_id in taken:
                    raise DuplicateId(r.utt_id)
            taken.add(r.utt_id)
            out.append(r)
    return Manifest(out)


def combined_loss(m: Manifest, scorer: Callable[[str, str], float]) -> float:
    """Sum of scorer(audio_path, text) over all records.

    The scorer returns the negative log-probability of the label given
    the audio; with the combined manifest this is the joint training loss.
    """
    terms = []
    for r in m:
        try:
            v = float(scorer(r.audio_path, r.text))
        except Exception as exc:
            raise ScorerFailure(r.utt_id, exc) from exc
        if not math.isfinite(v):
            raise ScorerFailure(r.utt_id, f"non-finite score {v}")
        terms.append(v)
    return math.fsum(terms)
