"""Aggregate PacketRecords into unidirectional flow records.

Two modes: `aggregate` merges packets sharing a five-tuple until an idle
or active timeout cuts the flow; `per-packet` turns every packet into its
own single-packet flow record.  Both emit flows ordered by flow end time
(ties by first-seen order) and conserve packet and byte totals exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

MODE_AGGREGATE = "aggregate"
MODE_PER_PACKET = "per-packet"

DEFAULT_IDLE_TIMEOUT_MS = 30_000
DEFAULT_ACTIVE_TIMEOUT_MS = 30 * 60 * 1000
DEFAULT_REORDER_WINDOW_MS = 1000


@dataclass(frozen=True)
class FlowKey:
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: int


@dataclass
class FlowRecord:
    key: FlowKey
    packets: int
    bytes: int
    flags: int
    initial_flags: int
    session_flags: int
    stime_ms: int
    etime_ms: int
    icmp_type: int | None = None
    icmp_code: int | None = None
    # metadata with no pcap source; emitted as configured constants
    sensor: str = "0"
    input_if: str = "0"
    output_if: str = "0"
    next_hop: str = "0"
    sensor_class: str = ""
    flow_type: str = ""
    attributes: str = ""
    application: str = ""

    @property
    def duration_ms(self) -> int:
        return self.etime_ms - self.stime_ms


@dataclass
class AggregationConfig:
    mode: str = MODE_AGGREGATE
    idle_timeout_ms: int | None = DEFAULT_IDLE_TIMEOUT_MS      # None = never
    active_timeout_ms: int | None = DEFAULT_ACTIVE_TIMEOUT_MS  # None = never
    reorder_window_ms: int = DEFAULT_REORDER_WINDOW_MS
    sensor: str = "0"
    input_if: str = "0"
    output_if: str = "0"
    next_hop: str = "0"
    sensor_class: str = ""
    flow_type: str = ""
    attributes: str = ""
    application: str = ""


@dataclass
class _FlowState:
    key: FlowKey
    seq: int
    stime: int
    etime: int
    packets: int
    bytes: int
    flags: int
    initial_flags: int
    session_flags: int = 0
    icmp_type: int | None = None
    icmp_code: int | None = None


def _record(st: _FlowState, cfg: AggregationConfig) -> FlowRecord:
    return FlowRecord(
        key=st.key, packets=st.packets, bytes=st.bytes, flags=st.flags,
        initial_flags=st.initial_flags, session_flags=st.session_flags,
        stime_ms=st.stime, etime_ms=st.etime,
        icmp_type=st.icmp_type, icmp_code=st.icmp_code,
        sensor=cfg.sensor, input_if=cfg.input_if, output_if=cfg.output_if,
        next_hop=cfg.next_hop, sensor_class=cfg.sensor_class,
        flow_type=cfg.flow_type, attributes=cfg.attributes,
        application=cfg.application,
    )


def build_flows(packets, config: AggregationConfig | None = None, counters=None):
    """Yield FlowRecords for a stream of PacketRecords.

    Emission is ordered by (etime, first-seen) whenever input reordering
    stays inside config.reorder_window_ms; packets reordered further than
    that are still processed but counted in counters["out_of_order"].
    """
    cfg = config or AggregationConfig()
    if cfg.mode not in (MODE_AGGREGATE, MODE_PER_PACKET):
        raise ValueError(f"unknown aggregation mode {cfg.mode!r}")
    per_packet = cfg.mode == MODE_PER_PACKET
    idle = cfg.idle_timeout_ms
    active = cfg.active_timeout_ms
    reorder = cfg.reorder_window_ms
    # No flow still active (nor any packet still to come, within tolerance)
    # can end earlier than clock - barrier_lag, so pending records older
    # than that are safe to emit.
    barrier_lag = reorder if per_packet else (None if idle is None else idle + reorder)

    flows: dict[FlowKey, _FlowState] = {}
    active_heap: list = []   # (etime, seq, key), lazily invalidated
    pending: list = []       # (etime, seq, FlowRecord)
    clock = None
    seq = 0

    for p in packets:
        if clock is None or p.ts_ms > clock:
            clock = p.ts_ms
        elif counters is not None and p.ts_ms < clock - reorder:
            counters["out_of_order"] = counters.get("out_of_order", 0) + 1

        if per_packet:
            st = _FlowState(
                key=FlowKey(p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.proto),
                seq=seq, stime=p.ts_ms, etime=p.ts_ms, packets=1, bytes=p.ip_len,
                flags=p.tcp_flags, initial_flags=p.tcp_flags,
                icmp_type=p.icmp_type, icmp_code=p.icmp_code,
            )
            heapq.heappush(pending, (p.ts_ms, seq, _record(st, cfg)))
            seq += 1
        else:
            key = FlowKey(p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.proto)
            st = flows.get(key)
            if st is not None and (
                (idle is not None and p.ts_ms - st.etime > idle)
                or (active is not None and p.ts_ms - st.stime > active)
            ):
                del flows[key]
                heapq.heappush(pending, (st.etime, st.seq, _record(st, cfg)))
                st = None
            if st is None:
                st = _FlowState(
                    key=key, seq=seq, stime=p.ts_ms, etime=p.ts_ms, packets=1,
                    bytes=p.ip_len, flags=p.tcp_flags, initial_flags=p.tcp_flags,
                    icmp_type=p.icmp_type, icmp_code=p.icmp_code,
                )
                seq += 1
                flows[key] = st
                heapq.heappush(active_heap, (st.etime, st.seq, key))
            else:
                st.packets += 1
                st.bytes += p.ip_len
                st.flags |= p.tcp_flags
                st.session_flags |= p.tcp_flags
                if p.ts_ms < st.stime:
                    st.stime = p.ts_ms
                if p.ts_ms > st.etime:
                    st.etime = p.ts_ms
                    heapq.heappush(active_heap, (st.etime, st.seq, key))

        if barrier_lag is None:
            continue
        barrier = clock - barrier_lag
        while active_heap and active_heap[0][0] < barrier:
            etime, s, key = heapq.heappop(active_heap)
            st = flows.get(key)
            if st is None or st.seq != s or st.etime != etime:
                continue   # stale entry; the live one is elsewhere in the heap
            del flows[key]
            heapq.heappush(pending, (st.etime, st.seq, _record(st, cfg)))
        while pending and pending[0][0] < barrier:
            yield heapq.heappop(pending)[2]
        if len(active_heap) > 64 and len(active_heap) > 4 * len(flows):
            active_heap = [(st.etime, st.seq, k) for k, st in flows.items()]
            heapq.heapify(active_heap)

    for st in flows.values():
        heapq.heappush(pending, (st.etime, st.seq, _record(st, cfg)))
    while pending:
        yield heapq.heappop(pending)[2]
