"""Batch analysis over a manifest, aggregate statistics and serialization.

The published per-part widths for the four gharanas ship as
``data/reference_widths.csv`` and load through :func:`load_reference`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audio import ManifestEntry, PartitionPlan, decimate, extract_parts, read_wav
from .core import AnalysisConfig, analyze_with_fallback
from .errors import MFWidthError, ReferenceIntegrityError, UnknownArtist, ValidationError

CSV_COLUMNS = ("gharana", "artist_id", "generation", "lineage", "part_index",
               "W", "alpha0", "quadA", "quadB")
REFERENCE_COLUMNS = ("gharana", "artist_id", "generation", "lineage", "part_index", "W")
REFERENCE_SHA256 = "5200e0d45feee54bdba3c5a8cecf3805448b3c6596bc56673b135ad0895b15aa"


def fmt_float(v: float | None) -> str:
    """Six significant digits, ``""`` for missing values."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.6g}"


def _round6(v: float | None) -> float | None:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return float(f"{float(v):.6g}")


@dataclass
class ClipRecord:
    gharana: str
    artist_id: str
    generation: int
    lineage: str | None
    part_index: int
    W: float
    alpha0: float | None = None
    quadA: float | None = None
    quadB: float | None = None
    h_table: dict[float, float] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.part_index < 1:
            raise ValidationError("part_index must be >= 1")
        if not self.W >= 0:
            raise ValidationError(f"width must be non-negative, got {self.W}")
        if self.generation < 1:
            raise ValidationError("generation must be >= 1")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.gharana, self.artist_id, self.part_index)


@dataclass
class Failure:
    path: str
    part_index: int | None
    error: str
    message: str

    def __str__(self):
        where = self.path if self.part_index is None else f"{self.path} part {self.part_index}"
        return f"{where}: {self.error}: {self.message}"


@dataclass
class BatchResult:
    records: list[ClipRecord]
    failures: list[Failure]


# --------------------------------------------------------------------------
# batch


def record_from_spectrum(entry: ManifestEntry, part_index: int, spec) -> ClipRecord:
    a, b, _ = spec.quad if spec.quad is not None else (None, None, None)
    h_table = spec.hurst.as_dict() if spec.hurst is not None else {}
    return ClipRecord(entry.gharana, entry.artist_id, entry.generation, entry.lineage,
                      part_index, float(spec.width), spec.alpha0, a, b, h_table,
                      spec.diagnostics)


def _run_entry(entry: ManifestEntry, cfg: AnalysisConfig, plan: PartitionPlan,
               decimate_factor: int = 1):
    records, failures = [], []
    try:
        clip = read_wav(entry.path)
        parts = extract_parts(clip, PartitionPlan(entry.clip_start_s, plan.clip_length_s,
                                                  plan.n_parts))
    except (OSError, MFWidthError) as exc:
        return records, [Failure(entry.path, None, type(exc).__name__, str(exc))]
    for i, part in enumerate(parts, start=1):
        try:
            if decimate_factor > 1:
                part = decimate(part, decimate_factor)
            records.append(record_from_spectrum(entry, i, analyze_with_fallback(part, cfg)))
        except MFWidthError as exc:
            failures.append(Failure(entry.path, i, type(exc).__name__, str(exc)))
    return records, failures


def run_batch(entries: Sequence[ManifestEntry], cfg: AnalysisConfig | None = None,
              plan: PartitionPlan | None = None, jobs: int = 1,
              decimate_factor: int = 1) -> BatchResult:
    """One record per (entry, part) in manifest order.

    Failing entries or parts are collected in ``failures``; the plan's
    ``clip_start_s`` is replaced by each entry's own start offset.
    """
    cfg = cfg or AnalysisConfig()
    plan = plan or PartitionPlan()
    n = len(entries)
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, n)) as pool:
            outs = list(pool.map(_run_entry, entries, [cfg] * n, [plan] * n,
                                 [decimate_factor] * n))
    else:
        outs = [_run_entry(e, cfg, plan, decimate_factor) for e in entries]
    records = [r for recs, _ in outs for r in recs]
    failures = [f for _, fails in outs for f in fails]
    return BatchResult(records, failures)


# --------------------------------------------------------------------------
# statistics


def artist_mean_width(records: Iterable[ClipRecord], artist_id: str,
                      gharana: str | None = None) -> float:
    """Mean width over all parts of one artist."""
    records = list(records)
    ws = [r.W for r in records
          if r.artist_id == artist_id and (gharana is None or r.gharana == gharana)]
    if not ws:
        raise UnknownArtist(artist_id if gharana is None else f"{gharana}/{artist_id}")
    if gharana is None:
        owners = {r.gharana for r in records if r.artist_id == artist_id}
        if len(owners) > 1:
            raise ValidationError(f"{artist_id!r} appears in {sorted(owners)}; pass gharana")
    return float(np.mean(ws))


@dataclass(frozen=True)
class GroupStats:
    mean: float
    sd: float
    n: int


def _stats(ws: Sequence[float]) -> GroupStats:
    arr = np.asarray(ws, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return GroupStats(float(arr.mean()), sd, int(arr.size))


def generation_summary(records: Iterable[ClipRecord]) -> "OrderedDict[tuple[str, int], GroupStats]":
    """Mean, sample standard deviation and count of W per (gharana, generation)."""
    groups: dict[tuple[str, int], list[float]] = {}
    for r in records:
        groups.setdefault((r.gharana, r.generation), []).append(r.W)
    return OrderedDict((k, _stats(groups[k])) for k in sorted(groups))


def pooled_mean(records: Iterable[ClipRecord], gharana: str, generations: Iterable[int]) -> float:
    """Mean W over every record of ``gharana`` in the given generations."""
    gens = set(generations)
    ws = [r.W for r in records if r.gharana == gharana and r.generation in gens]
    if not ws:
        raise ValidationError(f"no records for {gharana} generations {sorted(gens)}")
    return float(np.mean(ws))


def summary_to_nested(summary) -> dict:
    out: dict = {}
    for (gharana, gen), st in summary.items():
        out.setdefault(gharana, {})[str(gen)] = {
            "mean": _round6(st.mean), "sd": _round6(st.sd), "n": st.n}
    return out


# --------------------------------------------------------------------------
# reference dataset


def _reference_bytes() -> bytes:
    return resources.files("mfwidth").joinpath("data/reference_widths.csv").read_bytes()


def load_reference(path=None, sha256: str | None = None) -> list[ClipRecord]:
    """Published widths as records, after an integrity check.

    The bundled file is always checked against :data:`REFERENCE_SHA256`; a
    custom ``path`` is checked only when ``sha256`` is given.
    """
    if path is None:
        data = _reference_bytes()
        sha256 = sha256 or REFERENCE_SHA256
    else:
        data = Path(path).read_bytes()
    if sha256 is not None:
        digest = hashlib.sha256(data).hexdigest()
        if digest != sha256:
            raise ReferenceIntegrityError(
                f"reference CSV hash {digest} does not match expected {sha256}")
    return parse_records_csv(data.decode("utf-8"), required=REFERENCE_COLUMNS)


@dataclass
class Comparison:
    rows: list[tuple[tuple[str, str, int], float, float, float]]
    unmatched: list[tuple[str, str, int]]

    @property
    def n_matched(self) -> int:
        return len(self.rows)


def compare_to_reference(records: Iterable[ClipRecord],
                         reference: Sequence[ClipRecord] | None = None) -> Comparison:
    """Per-cell (computed, published, computed - published)."""
    ref = {r.key: r.W for r in (load_reference() if reference is None else reference)}
    rows, unmatched = [], []
    for r in records:
        if r.key in ref:
            rows.append((r.key, r.W, ref[r.key], r.W - ref[r.key]))
        else:
            unmatched.append(r.key)
    return Comparison(rows, unmatched)


# --------------------------------------------------------------------------
# serialization


def _csv_row(r: ClipRecord) -> list[str]:
    return [r.gharana, r.artist_id, str(r.generation), r.lineage or "", str(r.part_index),
            fmt_float(r.W), fmt_float(r.alpha0), fmt_float(r.quadA), fmt_float(r.quadB)]


def _json_obj(r: ClipRecord) -> dict:
    return {
        "gharana": r.gharana,
        "artist_id": r.artist_id,
        "generation": r.generation,
        "lineage": r.lineage,
        "part_index": r.part_index,
        "W": _round6(r.W),
        "alpha0": _round6(r.alpha0),
        "quadA": _round6(r.quadA),
        "quadB": _round6(r.quadB),
        "h_table": {f"{q:g}": _round6(h) for q, h in sorted(r.h_table.items())},
        "diagnostics": list(r.diagnostics),
    }


def emit(records: Sequence[ClipRecord], fmt: str = "csv") -> bytes:
    """Serialize records as CSV or JSON bytes (6 significant digits)."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(_csv_row(r))
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        return (json.dumps([_json_obj(r) for r in records], indent=2) + "\n").encode("utf-8")
    raise ValidationError(f"unknown output format {fmt!r}")


def emit_summary(summary, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(summary_to_nested(summary), indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("gharana", "generation", "mean", "sd", "n"))
        for (g, gen), st in summary.items():
            w.writerow((g, gen, fmt_float(st.mean), fmt_float(st.sd), st.n))
        return buf.getvalue().encode("utf-8")
    raise ValidationError(f"unknown output format {fmt!r}")


def _opt_float(s: str) -> float | None:
    return None if s == "" else float(s)


def parse_records_csv(text: str, required: Sequence[str] = ("gharana", "artist_id", "generation",
                                                             "part_index", "W")) -> list[ClipRecord]:
    """Records from results CSV text; raises :class:`ValidationError` if malformed."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ValidationError("CSV is empty")
    missing = set(required) - set(reader.fieldnames)
    if missing:
        raise ValidationError(f"CSV lacks columns {sorted(missing)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append(ClipRecord(
                gharana=row["gharana"],
                artist_id=row["artist_id"],
                generation=int(row["generation"]),
                lineage=row.get("lineage") or None,
                part_index=int(row["part_index"]),
                W=float(row["W"]),
                alpha0=_opt_float(row.get("alpha0") or ""),
                quadA=_opt_float(row.get("quadA") or ""),
                quadB=_opt_float(row.get("quadB") or ""),
            ))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"CSV line {lineno}: {exc}") from exc
    return out


def parse_records_json(text: str) -> list[ClipRecord]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ValidationError("results JSON must be an array")
    out = []
    for obj in raw:
        try:
            out.append(ClipRecord(
                gharana=obj["gharana"], artist_id=obj["artist_id"],
                generation=int(obj["generation"]), lineage=obj.get("lineage"),
                part_index=int(obj["part_index"]), W=float(obj["W"]),
                alpha0=obj.get("alpha0"), quadA=obj.get("quadA"), quadB=obj.get("quadB"),
                h_table={float(k): v for k, v in obj.get("h_table", {}).items()},
                diagnostics=list(obj.get("diagnostics", [])),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed record {obj!r}: {exc}") from exc
    return out


def read_records(path) -> list[ClipRecord]:
    """Records from a results file; JSON when it parses as an array, else CSV."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        return parse_records_json(text)
    return parse_records_csv(text)
