"""Match flow records against IDS log entries and assign classes.

A flow matches an entry when every non-null attribute of the entry equals
the flow's corresponding attribute (protocol plays no part).  Among all
matching entries the winner is the maximum under (L, weight, earlier file
position).  Classes: no match = normal, winner with L=1 = unsure, winner
with L>1 = anomaly.

MatchIndex holds one hash map per non-empty subset of {dip, sip, dport,
sport}; an entry lives in the map of exactly its non-null subset, so a
lookup probes at most fifteen maps instead of scanning the log.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import islice

from .flow_builder import FlowKey, FlowRecord
from .mawilab_log import IdsLogEntry, precedence_key, specificity

CLASS_NORMAL = "normal"
CLASS_ANOMALY = "anomaly"
CLASS_UNSURE = "unsure"

# bit positions within a subset mask, most significant first
_BIT_DIP = 8
_BIT_SIP = 4
_BIT_DPORT = 2
_BIT_SPORT = 1

_ALL_MASKS = tuple(range(1, 16))


@dataclass(frozen=True)
class LabeledFlow:
    flow: FlowRecord
    class_label: str
    taxonomy: str = ""
    heuristic: int = 0
    distance: float = 0.0
    nb_detectors: int = 0
    mawilab_label: str = CLASS_NORMAL


@dataclass
class LabelStats:
    rows: int = 0
    class_counts: Counter = field(default_factory=Counter)
    taxonomy_counts: Counter = field(default_factory=Counter)
    l_histogram: Counter = field(default_factory=Counter)   # winner L; 0 = no match

    def add(self, labeled: LabeledFlow, winner_l: int):
        self.rows += 1
        self.class_counts[labeled.class_label] += 1
        if winner_l:
            self.taxonomy_counts[labeled.taxonomy] += 1
        self.l_histogram[winner_l] += 1


class MatchIndex:
    def __init__(self):
        self.maps: dict[int, dict[tuple, IdsLogEntry]] = {m: {} for m in _ALL_MASKS}
        self.size = 0

    def __len__(self):
        return self.size


def _project_entry(entry: IdsLogEntry, mask: int) -> tuple:
    vals = []
    if mask & _BIT_DIP:
        vals.append(entry.dip)
    if mask & _BIT_SIP:
        vals.append(entry.sip)
    if mask & _BIT_DPORT:
        vals.append(entry.dport)
    if mask & _BIT_SPORT:
        vals.append(entry.sport)
    return tuple(vals)


def _project_flow(dip, sip, dport, sport, mask: int) -> tuple:
    vals = []
    if mask & _BIT_DIP:
        vals.append(dip)
    if mask & _BIT_SIP:
        vals.append(sip)
    if mask & _BIT_DPORT:
        vals.append(dport)
    if mask & _BIT_SPORT:
        vals.append(sport)
    return tuple(vals)


def build_index(entries) -> MatchIndex:
    """Place each entry in the map of its non-null subset; when two entries
    claim the same subset and values, the greater by the total order keeps
    the slot (the loser could never win a match anyway)."""
    index = MatchIndex()
    for entry in entries:
        _, mask = specificity(entry)
        slot = index.maps[mask]
        vals = _project_entry(entry, mask)
        current = slot.get(vals)
        if current is None or precedence_key(entry) > precedence_key(current):
            slot[vals] = entry
        index.size += 1
    return index


def match_flow(index: MatchIndex, key: FlowKey):
    """Winning IdsLogEntry for this flow's four-tuple, or None.  Only the
    four attributes take part; key.proto is ignored."""
    dip, sip, dport, sport = key.dst_ip, key.src_ip, key.dst_port, key.src_port
    best = None
    best_key = None
    for mask, table in index.maps.items():
        if not table:
            continue
        entry = table.get(_project_flow(dip, sip, dport, sport, mask))
        if entry is not None:
            k = precedence_key(entry)
            if best is None or k > best_key:
                best, best_key = entry, k
    return best


def assign_class(winner) -> str:
    if winner is None:
        return CLASS_NORMAL
    l_value, _ = specificity(winner)
    return CLASS_UNSURE if l_value == 1 else CLASS_ANOMALY


def _label_with_l(flow: FlowRecord, index: MatchIndex) -> tuple[LabeledFlow, int]:
    winner = match_flow(index, flow.key)
    if winner is None:
        return LabeledFlow(flow=flow, class_label=CLASS_NORMAL), 0
    labeled = LabeledFlow(
        flow=flow,
        class_label=assign_class(winner),
        taxonomy=winner.taxonomy,
        heuristic=winner.heuristic,
        distance=winner.distance,
        nb_detectors=winner.nb_detectors,
        mawilab_label=winner.mawilab_label,
    )
    return labeled, specificity(winner)[0]


def label_one(flow: FlowRecord, index: MatchIndex) -> LabeledFlow:
    return _label_with_l(flow, index)[0]


def label_flows(flows, index: MatchIndex, stats: LabelStats | None = None, threads: int = 1):
    """Order-preserving map of label_one over the stream.

    threads > 1 fans chunks out to a thread pool and merges results back
    in input order; output is identical for any thread count.
    """
    if threads <= 1:
        for flow in flows:
            labeled, winner_l = _label_with_l(flow, index)
            if stats is not None:
                stats.add(labeled, winner_l)
            yield labeled
        return

    def run(chunk):
        return [_label_with_l(f, index) for f in chunk]

    flows = iter(flows)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for chunk in pool.map(run, iter(lambda: list(islice(flows, 4096)), [])):
            for labeled, winner_l in chunk:
                if stats is not None:
                    stats.add(labeled, winner_l)
                yield labeled
