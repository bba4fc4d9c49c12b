"""Command-line entry point: ``mfwidth {analyze,batch,synth,shuffle-test,report}``.

Exit codes: 0 success, 1 runtime/analysis error, 2 validation error,
3 batch finished with some failures.  Option values come from flags, then
from the JSON file given by ``--config``, then from built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio import PartitionPlan, decimate, encode_wav, extract_parts, load_manifest, read_wav
from .core import AnalysisConfig, Series, analyze_with_fallback, default_q_grid
from .errors import BadParam, MFWidthError, ValidationError
from .report import (
    artist_mean_width,
    compare_to_reference,
    emit,
    emit_summary,
    fmt_float,
    generation_summary,
    load_reference,
    read_records,
    run_batch,
    summary_to_nested,
)
from .surrogate import shuffle_test
from .synth import KINDS, SynthSpec

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, EXIT_PARTIAL = 0, 1, 2, 3

ANALYSIS_KEYS = ("q_min", "q_max", "q_step", "scales_min", "scales_max", "n_scales",
                 "detrend_order", "segmentation", "width_method", "fit_min_f")
PLAN_KEYS = ("parts", "clip_start", "clip_length")
OTHER_KEYS = ("format", "out", "jobs", "seed", "surrogates", "decimate", "summary")
CONFIG_KEYS = frozenset(ANALYSIS_KEYS + PLAN_KEYS + OTHER_KEYS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# option handling


def _add_analysis_flags(p):
    g = p.add_argument_group("analysis")
    g.add_argument("--q-min", type=float, help="smallest moment order q (default -5)")
    g.add_argument("--q-max", type=float, help="largest moment order q (default 5)")
    g.add_argument("--q-step", type=float, help="spacing of the q grid (default 0.25)")
    g.add_argument("--scales-min", type=int, help="smallest window size in samples (default 16)")
    g.add_argument("--scales-max", type=int,
                   help="largest window size in samples (default N/8, never above N/4)")
    g.add_argument("--n-scales", type=int,
                   help="number of log-spaced scales; omit for one scale per octave")
    g.add_argument("--detrend-order", type=int, help="polynomial order removed per window (default 1)")
    g.add_argument("--segmentation", choices=("one_ended", "two_ended"),
                   help="window families counted from the head only or from both ends "
                        "(default two_ended)")
    g.add_argument("--width-method", choices=("quadratic_fit", "endpoint_span"),
                   help="spectrum width estimator (default quadratic_fit)")
    g.add_argument("--fit-min-f", type=float,
                   help="fit the parabola only to spectrum points with f >= this value")


def _add_plan_flags(p):
    g = p.add_argument_group("partition")
    g.add_argument("--parts", type=int, help="number of equal parts per clip (default 4)")
    g.add_argument("--clip-start", type=float, help="clip offset into the recording, seconds")
    g.add_argument("--clip-length", type=float, help="clip length in seconds (default 120)")


def _add_common(p, *, fmt=True, jobs=False, seed=False, out_help="output file (default stdout)"):
    if fmt:
        p.add_argument("--format", choices=("csv", "json"), help="machine-readable output format")
    p.add_argument("--out", help=out_help)
    if jobs:
        p.add_argument("--jobs", type=int,
                       help="parallel workers (default: available CPUs)")
    if seed:
        p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--config", help="JSON file of option defaults; flags take precedence")


def _merged(args) -> dict:
    """Flags over config file over nothing (defaults are applied later)."""
    opts: dict = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(raw) - CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(raw)
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def _q_grid(opts) -> tuple[float, ...]:
    if not any(k in opts for k in ("q_min", "q_max", "q_step")):
        return tuple(default_q_grid().tolist())
    q_min = float(opts.get("q_min", -5.0))
    q_max = float(opts.get("q_max", 5.0))
    step = float(opts.get("q_step", 0.25))
    if not step > 0:
        raise UsageError("--q-step must be positive")
    if not q_max > q_min:
        raise UsageError("--q-max must exceed --q-min")
    n = round((q_max - q_min) / step)
    if abs(q_min + n * step - q_max) > 1e-9 * max(1.0, abs(q_max)):
        raise UsageError("q range is not a whole number of steps")
    grid = np.round(q_min + step * np.arange(n + 1), 12)
    grid[np.abs(grid) < 1e-12] = 0.0
    return tuple(grid.tolist())


def build_config(opts) -> AnalysisConfig:
    kw = dict(q_grid=_q_grid(opts))
    mapping = {"scales_min": "min_scale", "scales_max": "max_scale", "n_scales": "n_scales",
               "detrend_order": "detrend_order", "segmentation": "segmentation",
               "width_method": "width_method", "fit_min_f": "fit_min_f"}
    for src, dst in mapping.items():
        if opts.get(src) is not None:
            kw[dst] = opts[src]
    return AnalysisConfig(**kw)


def build_plan(opts) -> PartitionPlan:
    return PartitionPlan(clip_start_s=float(opts.get("clip_start", 0.0)),
                         clip_length_s=float(opts.get("clip_length", 120.0)),
                         n_parts=int(opts.get("parts", 4)))


def load_series(path) -> Series:
    """A WAV file, or a one-column CSV (header ``value``) as written by ``synth``."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["value"]:
            raise ValidationError(f"{path}: expected a one-column CSV with header 'value'")
        try:
            values = [float(r[0]) for r in rows[1:]]
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"{path}: {exc}") from exc
        return Series(np.asarray(values), label=str(path))
    return read_wav(path).to_series()


def _write(data: bytes, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(data.decode("utf-8"))
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands

ANALYZE_COLUMNS = ("source", "part_index", "n_samples", "W", "width_method", "alpha0",
                   "quadA", "quadB", "h2", "diagnostics")


def cmd_analyze(args) -> int:
    opts = _merged(args)
    cfg = build_config(opts)
    use_plan = any(k in opts for k in PLAN_KEYS)
    plan = build_plan(opts) if use_plan else None
    factor = int(opts.get("decimate", 1))
    if factor < 1:
        raise UsageError("--decimate must be >= 1")
    path = args.path
    if path.lower().endswith(".csv"):
        if use_plan:
            raise UsageError("partition flags need a WAV input")
        parts = [load_series(path)]
    else:
        clip = read_wav(path)
        parts = extract_parts(clip, plan) if use_plan else [clip.to_series()]
    rows = []
    for i, part in enumerate(parts, start=1):
        if factor > 1:
            part = decimate(part, factor)
        spec = analyze_with_fallback(part, cfg)
        a, b, _ = spec.quad
        try:
            h2 = spec.hurst.at(2.0)
        except KeyError:
            h2 = None
        rows.append({"source": path, "part_index": i, "n_samples": len(part),
                     "W": spec.width, "width_method": spec.width_method,
                     "alpha0": spec.alpha0, "quadA": a, "quadB": b, "h2": h2,
                     "diagnostics": ";".join(spec.diagnostics),
                     "h_table": {f"{q:g}": float(f"{h:.6g}") for q, h in spec.hurst.as_dict().items()}})
    fmt = opts.get("format")
    out = opts.get("out")
    if fmt is None and out is not None:
        fmt = "csv"
    if fmt is not None:
        _write(_analyze_bytes(rows, fmt), out)
    if fmt is None or out not in (None, "-"):
        sys.stdout.write(_table(ANALYZE_COLUMNS[:-1], [
            [r["source"], r["part_index"], r["n_samples"], fmt_float(r["W"]), r["width_method"],
             fmt_float(r["alpha0"]), fmt_float(r["quadA"]), fmt_float(r["quadB"]),
             fmt_float(r["h2"])] for r in rows]))
    return EXIT_OK


def _analyze_bytes(rows, fmt) -> bytes:
    if fmt == "json":
        objs = [{k: (float(fmt_float(v)) if isinstance(v, float) else v) for k, v in r.items()}
                for r in rows]
        return (json.dumps(objs, indent=2) + "\n").encode("utf-8")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANALYZE_COLUMNS)
    for r in rows:
        w.writerow([fmt_float(r[k]) if isinstance(r[k], float) or r[k] is None else r[k]
                    for k in ANALYZE_COLUMNS])
    return buf.getvalue().encode("utf-8")


def cmd_batch(args) -> int:
    opts = _merged(args)
    cfg = build_config(opts)
    plan = build_plan(opts)
    jobs = int(opts.get("jobs") or (os.cpu_count() or 1))
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    factor = int(opts.get("decimate", 1))
    entries = load_manifest(args.manifest)
    result = run_batch(entries, cfg, plan, jobs=jobs, decimate_factor=factor)
    fmt = opts.get("format", "csv")
    _write(emit(result.records, fmt), opts.get("out"))
    if opts.get("summary"):
        Path(opts["summary"]).write_bytes(emit_summary(generation_summary(result.records), "json"))
    for f in result.failures:
        print(f"failed: {f}", file=sys.stderr)
    if result.failures:
        return EXIT_PARTIAL if result.records else EXIT_RUNTIME
    return EXIT_OK


def cmd_synth(args) -> int:
    opts = _merged(args)
    params = {}
    if args.a is not None:
        params["a"] = args.a
    if args.beta is not None:
        params["beta"] = args.beta
    length = args.length
    if args.k is not None:
        length = 2 ** args.k
    spec = SynthSpec(args.kind, length if length is not None else 2 ** 16, params,
                     int(opts.get("seed", 0)))
    series = spec.generate()
    out = opts.get("out")
    fmt = args.format or ("csv" if out and out.lower().endswith(".csv") else "wav")
    if fmt == "wav":
        if out in (None, "-"):
            raise UsageError("WAV output needs --out PATH")
        Path(out).write_bytes(encode_wav(series, args.sample_rate, peak=args.peak))
    else:
        buf = io.StringIO()
        buf.write("value\n")
        for v in series.samples:
            buf.write(repr(float(v)) + "\n")
        _write(buf.getvalue().encode("utf-8"), out)
    return EXIT_OK


def cmd_shuffle_test(args) -> int:
    opts = _merged(args)
    cfg = build_config(opts)
    n = int(opts.get("surrogates", 20))
    if n < 1:
        raise UsageError("--surrogates must be >= 1")
    series = load_series(args.path)
    res = shuffle_test(series, cfg, n, int(opts.get("seed", 0)))
    fmt = opts.get("format")
    out = opts.get("out")
    if fmt == "json" or (fmt is None and out is not None):
        _write((json.dumps(res.as_dict(), indent=2) + "\n").encode("utf-8"), out)
    elif fmt == "csv":
        _write(("W_original,W_shuffled_mean,W_shuffled_sd,verdict\n"
                f"{fmt_float(res.W_original)},{fmt_float(res.W_shuffled_mean)},"
                f"{fmt_float(res.W_shuffled_sd)},{res.verdict}\n").encode("utf-8"), out)
    if fmt is None or out not in (None, "-"):
        sys.stdout.write(
            f"W original:        {fmt_float(res.W_original)}\n"
            f"W shuffled (mean): {fmt_float(res.W_shuffled_mean)} "
            f"(sd {fmt_float(res.W_shuffled_sd)}, n={n})\n"
            f"h(2) original:     {fmt_float(res.h2_original)}\n"
            f"h(2) shuffled:     {fmt_float(res.h2_shuffled_mean)}\n"
            f"verdict:           {res.verdict}\n")
    return EXIT_OK


def cmd_report(args) -> int:
    opts = _merged(args)
    bundled = load_reference()
    records = bundled if args.results is None else read_records(args.results)
    means = []
    seen = []
    for r in records:
        if (r.gharana, r.artist_id) not in seen:
            seen.append((r.gharana, r.artist_id))
    for g, a in seen:
        gen = next(r.generation for r in records if r.gharana == g and r.artist_id == a)
        means.append((g, a, gen, artist_mean_width(records, a, g)))
    summary = generation_summary(records)
    comparison = None
    if args.reference is not None:
        ref = bundled if args.reference == "" else load_reference(args.reference,
                                                                   args.reference_sha256)
        comparison = compare_to_reference(records, ref)

    fmt = opts.get("format")
    out = opts.get("out")
    if fmt == "json":
        doc = {"artist_means": [{"gharana": g, "artist_id": a, "generation": gen,
                                 "mean_W": float(fmt_float(m))} for g, a, gen, m in means],
               "summary": summary_to_nested(summary)}
        if comparison is not None:
            doc["comparison"] = {
                "matched": comparison.n_matched,
                "rows": [{"gharana": k[0], "artist_id": k[1], "part_index": k[2],
                          "computed": float(fmt_float(c)), "published": float(fmt_float(p)),
                          "delta": float(fmt_float(d))} for k, c, p, d in comparison.rows],
                "unmatched": [list(k) for k in comparison.unmatched]}
        _write((json.dumps(doc, indent=2) + "\n").encode("utf-8"), out)
    elif fmt == "csv":
        _write(emit_summary(summary, "csv"), out)
    if fmt is None or out not in (None, "-"):
        text = "Artist mean widths\n" + _table(
            ("gharana", "artist", "generation", "mean W"),
            [(g, a, gen, fmt_float(m)) for g, a, gen, m in means])
        text += "\nGeneration summary\n" + _table(
            ("gharana", "generation", "mean W", "sd", "n"),
            [(g, gen, fmt_float(st.mean), fmt_float(st.sd), st.n)
             for (g, gen), st in summary.items()])
        if comparison is not None:
            text += f"\nReference comparison: {comparison.n_matched} matched, " \
                    f"{len(comparison.unmatched)} unmatched\n"
            if comparison.rows:
                text += _table(("gharana", "artist", "part", "computed", "published", "delta"),
                               [(k[0], k[1], k[2], fmt_float(c), fmt_float(p), fmt_float(d))
                                for k, c, p, d in comparison.rows])
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfwidth", description="Multifractal spectral width of audio and "
                                                 "synthetic time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="analyze one WAV (or synth CSV) file",
                       description="Analyze one recording. Without partition flags the "
                                   "whole file is one series.")
    p.add_argument("path", help="input WAV file, or CSV written by 'synth'")
    _add_analysis_flags(p)
    _add_plan_flags(p)
    p.add_argument("--decimate", type=int, help="anti-aliased downsampling factor (default 1)")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("batch", help="analyze every clip listed in a manifest",
                       description="Analyze every manifest entry, one record per part.")
    p.add_argument("manifest", help="manifest JSON: array of {path, gharana, artist_id, "
                                    "generation, lineage, clip_start_s}")
    _add_analysis_flags(p)
    _add_plan_flags(p)
    p.add_argument("--decimate", type=int, help="anti-aliased downsampling factor (default 1)")
    p.add_argument("--summary", help="write the per-generation summary JSON here")
    _add_common(p, jobs=True, out_help="results file (default stdout)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("synth", help="write a synthetic test series",
                       description="Generate a series with known scaling as WAV or CSV.")
    p.add_argument("kind", choices=KINDS, help="generator")
    p.add_argument("--length", type=int, help="number of samples (default 65536)")
    p.add_argument("--k", type=int, help="cascade depth; sets length to 2**k")
    p.add_argument("--a", type=float, help="cascade multiplier in (0, 1) (default 0.6)")
    p.add_argument("--beta", type=float, help="spectral exponent in [0, 2] (default 1)")
    p.add_argument("--format", choices=("wav", "csv"),
                   help="file format (default from --out extension, else wav)")
    p.add_argument("--sample-rate", type=int, default=44100, help="WAV sample rate in Hz")
    p.add_argument("--peak", type=float, default=0.99,
                   help="rescale so the largest magnitude is this fraction of full scale")
    _add_common(p, fmt=False, seed=True, out_help="output path (CSV may go to stdout)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("shuffle-test", help="compare width against shuffled surrogates",
                       description="Width of a recording against seeded shuffle surrogates.")
    p.add_argument("path", help="input WAV file, or CSV written by 'synth'")
    p.add_argument("--surrogates", type=int, help="number of shuffled surrogates (default 20)")
    _add_analysis_flags(p)
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_shuffle_test)

    p = sub.add_parser("report", help="summaries and reference comparison",
                       description="Artist means and per-generation summaries of a results "
                                   "file; without RESULTS the bundled published widths.")
    p.add_argument("results", nargs="?", help="results CSV/JSON written by 'batch'")
    p.add_argument("--reference", nargs="?", const="",
                   help="compare against a reference CSV (bundled one when no path is given)")
    p.add_argument("--reference-sha256", help="expected SHA-256 of a custom reference CSV")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValidationError, BadParam) as exc:
        print(f"mfwidth {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MFWidthError, OSError) as exc:
        print(f"mfwidth {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
