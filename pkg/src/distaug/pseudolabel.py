"""Character error rates and CER-threshold filtering of pseudo-labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import EmptyReference
from .manifest import Manifest, ManifestRecord

INF = math.inf


@dataclass(frozen=True)
class EditCounts:
    edits: int
    substitutions: int
    insertions: int
    deletions: int


@dataclass(frozen=True)
class CerReport:
    utt_id: str
    ref_len: int
    edits: int
    cer_percent: float


def edit_distance(ref, hyp) -> EditCounts:
    """Levenshtein distance with the S/I/D breakdown.

    Among minimal alignments the one with the most substitutions is
    reported, so swapping ref and hyp keeps S and exchanges I with D.
    """
    n, m = len(ref), len(hyp)
    # cost[j] = (edits, -subs, ins) for ref[:i] vs hyp[:j]
    prev = [(j, 0, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, 0)]
        r = ref[i - 1]
        for j in range(1, m + 1):
            e, ns, ins = prev[j - 1]
            if r == hyp[j - 1]:
                best = (e, ns, ins)
            else:
                best = (e + 1, ns - 1, ins)
            e, ns, ins = prev[j]
            cand = (e + 1, ns, ins)  # deletion
            if cand[:2] < best[:2]:
                best = cand
            e, ns, ins = cur[j - 1]
            cand = (e + 1, ns, ins + 1)  # insertion
            if cand[:2] < best[:2]:
                best = cand
            cur.append(best)
        prev = cur
    edits, neg_subs, ins = prev[m]
    subs = -neg_subs
    dels = edits - subs - ins
    return EditCounts(edits, subs, ins, dels)


def normalize_text(text: str, count_spaces: bool = True) -> str:
    t = text.strip().upper()
    if not count_spaces:
        t = t.replace(" ", "")
    return t


def cer(ref: str, hyp: str, utt_id: str = "", count_spaces: bool = True) -> CerReport:
    r = normalize_text(ref, count_spaces)
    h = normalize_text(hyp, count_spaces)
    if not r:
        raise EmptyReference(f"empty reference for {utt_id!r}")
    d = edit_distance(r, h)
    return CerReport(utt_id, len(r), d.edits, 100.0 * d.edits / len(r))


def parse_delta(text) -> float:
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        t = str(text).strip().lower()
        value = INF if t in ("inf", "infinity", "all") else float(t)
    if math.isnan(value) or value < 0:
        raise ValueError(f"threshold must be >= 0, got {text!r}")
    return value


def read_hypotheses(path) -> dict:
    """utt_id<TAB>hypothesis per line; a missing hypothesis field means empty."""
    hyps = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            utt_id, _, text = line.partition("\t")
            hyps[utt_id] = text
    return hyps


def write_hypotheses(hyps: dict, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in hyps.items():
            fh.write(f"{k}\t{v}\n")


@dataclass
class FilterSummary:
    delta: float
    kept: int = 0
    dropped: int = 0
    kept_hours: float = 0.0
    missing: list = field(default_factory=list)
    unscorable: list = field(default_factory=list)

    def to_dict(self):
        return {"delta": "inf" if math.isinf(self.delta) else self.delta,
                "kept": self.kept, "dropped": self.dropped,
                "kept_hours": self.kept_hours, "missing": list(self.missing),
                "unscorable": list(self.unscorable)}


def score_all(refs: Manifest, hyps: dict, count_spaces=True):
    """CER per utterance, plus the ids that could not be scored."""
    scores, missing, unscorable = {}, [], []
    for r in refs:
        if r.utt_id not in hyps:
            missing.append(r.utt_id)
            continue
        try:
            scores[r.utt_id] = cer(r.text, hyps[r.utt_id], r.utt_id, count_spaces)
        except EmptyReference:
            unscorable.append(r.utt_id)
    return scores, missing, unscorable


def keep(c: float, delta: float, exclude_exact: bool) -> bool:
    if exclude_exact and c == 0:
        return False
    return c <= delta


def filter_pseudo_labels(refs: Manifest, hyps: dict, delta, exclude_exact=False,
                         count_spaces=True, scores=None):
    """Keep (audio, hypothesis) pairs whose CER is at most ``delta`` percent.

    Kept records reuse the reference record's audio, duration and speaker
    and are tagged ``pl``. Returns the filtered manifest and a summary.
    """
    delta = parse_delta(delta)
    if scores is None:
        scores, missing, unscorable = score_all(refs, hyps, count_spaces)
    else:
        missing = [r.utt_id for r in refs if r.utt_id not in hyps]
        unscorable = [r.utt_id for r in refs if r.utt_id in hyps and r.utt_id not in scores]
    summary = FilterSummary(delta, missing=missing, unscorable=unscorable)
    out = []
    for r in refs:
        rep = scores.get(r.utt_id)
        if rep is None:
            continue
        if keep(rep.cer_percent, delta, exclude_exact):
            out.append(ManifestRecord(r.utt_id, r.audio_path, r.duration_s,
                                      hyps[r.utt_id], "pl", r.speaker_id))
        else:
            summary.dropped += 1
    m = Manifest(out)
    summary.kept = len(m)
    summary.kept_hours = m.total_hours
    return m, summary


@dataclass(frozen=True)
class SweepRow:
    delta: float
    kept: int
    kept_hours: float
    total_hours: float


def threshold_sweep(refs: Manifest, hyps: dict, deltas, exclude_exact=False,
                    base_hours: float = 0.0, count_spaces=True):
    """One row per threshold: kept count, kept hours, and base + kept hours."""
    deltas = [parse_delta(d) for d in deltas]
    if not deltas:
        raise ValueError("need at least one threshold")
    scores, _, _ = score_all(refs, hyps, count_spaces)
    rows = []
    for d in deltas:
        m, s = filter_pseudo_labels(refs, hyps, d, exclude_exact, scores=scores)
        rows.append(SweepRow(d, s.kept, s.kept_hours, base_hours + s.kept_hours))
    return rows


def format_delta(d: float) -> str:
    return "inf" if math.isinf(d) else f"{d:g}"
