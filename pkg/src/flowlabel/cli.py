"""Command-line interface: extract, label, split, pipeline.

Exit codes: 0 success, 1 usage error, 2 input format error, 3 I/O error.
Flag spellings follow the original tools (-i input, -c classifier, -o
output, -n window seconds, --sec for seconds rendering).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .errors import InputFormatError
from .flow_builder import (AggregationConfig, MODE_AGGREGATE, MODE_PER_PACKET,
                           build_flows)
from .flow_io import (MILLISECONDS, SECONDS, split_by_window, write_flows,
                      write_traffic, read_traffic)
from .labeler import CLASS_UNSURE, LabelStats, build_index, label_flows
from .mawilab_log import DEFAULT_ACCEPTED_LABELS, LABEL_NOTICE, parse_log
from .pcap_reader import open_capture

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_IO = 3

PROGRESS_EVERY = 1_000_000


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _timeout_ms(seconds: float) -> int | None:
    if seconds <= 0 or seconds == float("inf"):
        return None
    return round(seconds * 1000)


def _require_inputs(*paths):
    for p in paths:
        if not os.path.exists(p):
            raise UsageError(f"input path does not exist: {p}")


def _stem(path) -> str:
    name = Path(path).name
    if name.endswith(".gz"):
        name = name[:-3]
    return Path(name).stem or name


def _resolve_out(output, input_path, suffix: str) -> str:
    """-o may name a file (used as-is) or an existing directory (the file
    name is derived from the input, like the original tools did)."""
    if os.path.isdir(output):
        return os.path.join(output, _stem(input_path) + suffix)
    return str(output)


def _progress(packets, quiet: bool):
    if quiet:
        yield from packets
        return
    n = 0
    for p in packets:
        n += 1
        if n % PROGRESS_EVERY == 0:
            print(f"flowlabel: {n:,} packets read", file=sys.stderr)
        yield p


def _say(quiet: bool, message: str):
    if not quiet:
        print(message, file=sys.stderr)


def _write_stats_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in lines:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# command bodies (shared between the subcommands and pipeline)

def _do_extract(pcap_path, out_path, args) -> dict:
    cfg = AggregationConfig(
        mode=args.mode,
        idle_timeout_ms=_timeout_ms(args.idle_timeout),
        active_timeout_ms=_timeout_ms(args.active_timeout),
    )
    unit = SECONDS if args.sec else MILLISECONDS
    counters = {}
    with open_capture(pcap_path) as reader:
        flows = build_flows(_progress(reader, args.quiet), cfg, counters)
        rows = write_traffic(flows, out_path, unit)
        summary = {
            "kind": "extract",
            "packets_decoded": reader.decoded,
            "packets_skipped": reader.skipped,
            "flows_written": rows,
            "out_of_order_packets": counters.get("out_of_order", 0),
        }
    _say(args.quiet,
         f"flowlabel: {summary['packets_decoded']} packets decoded "
         f"({summary['packets_skipped']} skipped), {rows} flows -> {out_path}")
    return summary


def _do_label(flow_csv, log_csv, out_path, args) -> tuple[LabelStats, dict]:
    accepted = set(DEFAULT_ACCEPTED_LABELS)
    if args.accept_notice:
        accepted.add(LABEL_NOTICE)
    log_counters = {}
    entries = parse_log(log_csv, accepted, log_counters)
    index = build_index(entries)
    unit = SECONDS if args.sec else MILLISECONDS

    stats = LabelStats()
    labeled = label_flows(read_traffic(flow_csv), index, stats, threads=args.threads)
    if args.drop_unsure:
        labeled = (lf for lf in labeled if lf.class_label != CLASS_UNSURE)
    rows = write_flows(labeled, out_path, unit)

    counts = dict(sorted(stats.class_counts.items()))
    _say(args.quiet,
         f"flowlabel: {stats.rows} flows labeled {counts}, "
         f"{rows} rows -> {out_path}")
    summary = {
        "kind": "label",
        "rows_written": rows,
        "dropped_unsure": stats.rows - rows,
        "log_entries": len(entries),
        "log_rows_skipped_by_label": log_counters.get("skipped_label", 0),
    }
    return stats, summary


def _stats_lines(stats: LabelStats, summary: dict):
    yield {"kind": "classes", "counts": dict(stats.class_counts), "rows": stats.rows}
    yield {"kind": "taxonomies", "counts": dict(stats.taxonomy_counts)}
    yield {"kind": "l_histogram",
           "counts": {str(k): v for k, v in stats.l_histogram.items()}}
    yield summary


# ---------------------------------------------------------------------------
# subcommands

def cmd_extract(args) -> int:
    _require_inputs(args.input)
    out = _resolve_out(args.output, args.input, "_result.data")
    summary = _do_extract(args.input, out, args)
    if args.stats:
        _write_stats_lines(args.stats, [summary])
    return EXIT_OK


def cmd_label(args) -> int:
    _require_inputs(args.input, args.classifier)
    out = _resolve_out(args.output, args.input, "_mawilab_flow.csv")
    stats, summary = _do_label(args.input, args.classifier, out, args)
    if args.stats:
        _write_stats_lines(args.stats, _stats_lines(stats, summary))
    return EXIT_OK


def cmd_split(args) -> int:
    _require_inputs(args.input)
    if args.window <= 0:
        raise UsageError(f"window must be positive, got {args.window}")
    created = split_by_window(args.input, args.window, args.output)
    if not created:
        _say(args.quiet, f"flowlabel: {args.input} has no data rows; nothing to split")
    else:
        _say(args.quiet, f"flowlabel: wrote {len(created)} window files to {args.output}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    _require_inputs(args.input, args.classifier)
    if args.window is not None and args.window <= 0:
        raise UsageError(f"window must be positive, got {args.window}")
    out = _resolve_out(args.output, args.input, "_mawilab_flow.csv")

    tmpdir = os.environ.get("FLOWLABEL_TMPDIR") or None
    fd, tmp = tempfile.mkstemp(prefix="flowlabel_", suffix=".csv", dir=tmpdir)
    os.close(fd)
    try:
        extract_summary = _do_extract(args.input, tmp, args)
        stats, label_summary = _do_label(tmp, args.classifier, out, args)
    finally:
        os.unlink(tmp)

    if args.window is not None:
        split_dir = args.output if os.path.isdir(args.output) else os.path.dirname(out) or "."
        created = split_by_window(out, args.window, split_dir)
        _say(args.quiet, f"flowlabel: wrote {len(created)} window files to {split_dir}")
    if args.stats:
        _write_stats_lines(args.stats,
                           [extract_summary, *_stats_lines(stats, label_summary)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_extract_options(p):
    p.add_argument("--mode", choices=[MODE_AGGREGATE, MODE_PER_PACKET],
                   default=MODE_AGGREGATE,
                   help="aggregate packets into flows (default) or emit one flow per packet")
    p.add_argument("--idle-timeout", type=float, default=30.0, metavar="SECONDS",
                   help="cut a flow after this long without a packet (default 30; 0 disables)")
    p.add_argument("--active-timeout", type=float, default=1800.0, metavar="SECONDS",
                   help="cut a flow after this total lifetime (default 1800; 0 disables)")


def _add_label_options(p):
    p.add_argument("--drop-unsure", action="store_true",
                   help="exclude flows whose best match has only one attribute")
    p.add_argument("--accept-notice", action="store_true",
                   help="also accept log rows labeled notice")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, metavar="N",
                   help="labeling worker threads (output is identical for any N)")


def _add_common(p):
    p.add_argument("--sec", action="store_true",
                   help="flow times in seconds, rather than milliseconds")
    p.add_argument("--quiet", action="store_true", help="suppress progress and summaries")
    p.add_argument("--stats", metavar="PATH", help="write run statistics as JSON lines")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="flowlabel",
        description="Build labeled NetFlow-style flow datasets from pcap traces "
                    "and MAWILab-style anomaly logs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("extract", help="decode a pcap into unlabeled flow records (CSV)")
    p.add_argument("-i", "--input", required=True, metavar="PCAP",
                   help="input pcap path (.gz accepted)")
    p.add_argument("-o", "--output", required=True, metavar="OUT",
                   help="output flow CSV path, or an existing directory")
    _add_extract_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("label", help="combine a flow CSV with an anomaly log")
    p.add_argument("-i", "--input", required=True, metavar="FLOWCSV",
                   help="input flow file path, e.g. *_result.data")
    p.add_argument("-c", "--classifier", required=True, metavar="LOGCSV",
                   help="input classifier file path, e.g. *_anomalous_suspicious.csv")
    p.add_argument("-o", "--output", required=True, metavar="OUT",
                   help="output labeled CSV path, or an existing directory")
    _add_label_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("split", help="split a labeled CSV into fixed time windows")
    p.add_argument("-i", "--input", required=True, metavar="FLOWCSV",
                   help="input labeled flow file path, e.g. *_mawilab_flow.csv")
    p.add_argument("-o", "--output", required=True, metavar="OUTDIR",
                   help="output directory path")
    p.add_argument("-n", "--window", type=float, default=5.0, metavar="SPLITSEC",
                   help="time separation in seconds (default 5)")
    p.add_argument("--quiet", action="store_true", help="suppress summaries")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pipeline", help="extract, label, and optionally split in one run")
    p.add_argument("-i", "--input", required=True, metavar="PCAP")
    p.add_argument("-c", "--classifier", required=True, metavar="LOGCSV")
    p.add_argument("-o", "--output", required=True, metavar="OUT",
                   help="labeled CSV path, or an existing directory")
    p.add_argument("-n", "--window", type=float, default=None, metavar="SPLITSEC",
                   help="also split the labeled output with this window (seconds)")
    _add_extract_options(p)
    _add_label_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"flowlabel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputFormatError as exc:
        print(f"flowlabel: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"flowlabel: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
