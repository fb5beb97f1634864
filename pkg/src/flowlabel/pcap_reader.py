"""Stream-decode classic libpcap files into PacketRecord values.

Supports both file endiannesses, microsecond and nanosecond timestamp
magics, and transparent gzip input.  Link layers: Ethernet (including
802.1Q tags), Linux cooked capture, and raw IP.  Frames that are not
IPv4/IPv6, or whose captured bytes truncate a header we need, are skipped
and counted rather than treated as fatal.
"""

from __future__ import annotations

import gzip
import socket
import struct
from collections import Counter
from dataclasses import dataclass

from .errors import NotPcapError, TruncatedFileError, UnsupportedLinkTypeError

# TCP flag bits (RFC 793 + ECN), low bit first.
TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20
TCP_ECE = 0x40
TCP_CWR = 0x80

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LINUX_SLL = 113
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229

SUPPORTED_LINKTYPES = (
    LINKTYPE_ETHERNET,
    LINKTYPE_RAW,
    LINKTYPE_LINUX_SLL,
    LINKTYPE_IPV4,
    LINKTYPE_IPV6,
)

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMP6 = 58

_ETH_IPV4 = 0x0800
_ETH_IPV6 = 0x86DD
_ETH_VLAN = 0x8100
_ETH_QINQ = 0x88A8

# first 4 bytes of the file -> (struct byte order, nanosecond resolution)
_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", False),
    b"\xa1\xb2\xc3\xd4": (">", False),
    b"\x4d\x3c\xb2\xa1": ("<", True),
    b"\xa1\xb2\x3c\x4d": (">", True),
}

# IPv6 extension headers we walk through to reach the transport header.
_IPV6_EXT = (0, 43, 60)   # hop-by-hop, routing, destination options
_IPV6_FRAGMENT = 44


@dataclass(frozen=True)
class PacketRecord:
    ts_ms: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: int
    ip_len: int
    tcp_flags: int
    icmp_type: int | None = None
    icmp_code: int | None = None


class CaptureReader:
    """Iterator over the decodable packets of one pcap file.

    Counters: `decoded`, `skipped` (with per-reason detail in
    `skip_reasons`), and `records_read` for the raw record count;
    decoded + skipped == records_read at all times.
    """

    def __init__(self, path):
        self._fh = None
        raw = open(path, "rb")
        try:
            if raw.read(2) == b"\x1f\x8b":
                raw.seek(0)
                self._fh = gzip.GzipFile(fileobj=raw)
            else:
                raw.seek(0)
                self._fh = raw
            head = self._read_header(24)
        except Exception:
            (self._fh or raw).close()
            raise
        magic = _MAGICS.get(head[:4])
        if magic is None:
            self._fh.close()
            raise NotPcapError(f"{path}: bad magic {head[:4].hex()}, not a pcap file")
        self._order, self.nanosecond = magic
        _, _, _, _, self.snaplen, self.linktype = struct.unpack(self._order + "HHiIII", head[4:])
        if self.linktype not in SUPPORTED_LINKTYPES:
            self._fh.close()
            raise UnsupportedLinkTypeError(
                f"{path}: link type {self.linktype} not supported "
                f"(supported: {', '.join(str(t) for t in SUPPORTED_LINKTYPES)})"
            )
        self.path = path
        self.records_read = 0
        self.decoded = 0
        self.skipped = 0
        self.skip_reasons = Counter()
        self._iter = None

    def _read_header(self, n):
        try:
            data = self._fh.read(n)
        except (gzip.BadGzipFile, EOFError) as exc:
            raise NotPcapError(f"unreadable gzip stream: {exc}") from exc
        if len(data) < n:
            raise NotPcapError(f"file too short for a pcap global header ({len(data)} bytes)")
        return data

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def __iter__(self):
        rec_hdr = struct.Struct(self._order + "IIII")
        div = 1_000_000 if self.nanosecond else 1000
        while True:
            try:
                head = self._fh.read(16)
            except EOFError as exc:   # truncated gzip stream
                raise TruncatedFileError(f"{self.path}: compressed stream ends early") from exc
            if not head:
                return
            if len(head) < 16:
                raise TruncatedFileError(f"{self.path}: file ends inside a packet record header")
            ts_sec, frac, incl_len, _orig = rec_hdr.unpack(head)
            try:
                data = self._fh.read(incl_len)
            except EOFError as exc:
                raise TruncatedFileError(f"{self.path}: compressed stream ends early") from exc
            if len(data) < incl_len:
                raise TruncatedFileError(
                    f"{self.path}: record claims {incl_len} bytes, only {len(data)} remain"
                )
            self.records_read += 1
            rec = self._decode_frame(ts_sec * 1000 + frac // div, data)
            if rec is None:
                self.skipped += 1
            else:
                self.decoded += 1
                yield rec

    def next_packet(self):
        """PacketRecord, or None at end of stream (skips are counted, not
        surfaced)."""
        if self._iter is None:
            self._iter = iter(self)
        return next(self._iter, None)

    # -- decoding ----------------------------------------------------------

    def _skip(self, reason):
        self.skip_reasons[reason] += 1
        return None

    def _decode_frame(self, ts_ms, data):
        lt = self.linktype
        if lt == LINKTYPE_ETHERNET:
            if len(data) < 14:
                return self._skip("short link header")
            ethertype = int.from_bytes(data[12:14], "big")
            off = 14
            while ethertype in (_ETH_VLAN, _ETH_QINQ):
                if len(data) < off + 4:
                    return self._skip("short link header")
                ethertype = int.from_bytes(data[off + 2:off + 4], "big")
                off += 4
            payload = data[off:]
        elif lt == LINKTYPE_LINUX_SLL:
            if len(data) < 16:
                return self._skip("short link header")
            ethertype = int.from_bytes(data[14:16], "big")
            payload = data[16:]
        else:   # raw IP variants
            if not data:
                return self._skip("short link header")
            version = data[0] >> 4
            if lt == LINKTYPE_IPV4 or (lt == LINKTYPE_RAW and version == 4):
                return self._decode_ipv4(ts_ms, data)
            if lt == LINKTYPE_IPV6 or (lt == LINKTYPE_RAW and version == 6):
                return self._decode_ipv6(ts_ms, data)
            return self._skip("not IP")

        if ethertype == _ETH_IPV4:
            return self._decode_ipv4(ts_ms, payload)
        if ethertype == _ETH_IPV6:
            return self._decode_ipv6(ts_ms, payload)
        return self._skip("not IP")

    def _decode_ipv4(self, ts_ms, buf):
        if len(buf) < 20:
            return self._skip("short IP header")
        b0 = buf[0]
        if b0 >> 4 != 4:
            return self._skip("not IP")
        ihl = (b0 & 0x0F) * 4
        if ihl < 20 or len(buf) < ihl:
            return self._skip("short IP header")
        total_len = int.from_bytes(buf[2:4], "big")
        frag_field = int.from_bytes(buf[6:8], "big")
        proto = buf[9]
        src = socket.inet_ntop(socket.AF_INET, buf[12:16])
        dst = socket.inet_ntop(socket.AF_INET, buf[16:20])
        first_fragment = (frag_field & 0x1FFF) == 0
        return self._decode_transport(ts_ms, src, dst, proto, total_len,
                                      buf[ihl:], first_fragment)

    def _decode_ipv6(self, ts_ms, buf):
        if len(buf) < 40:
            return self._skip("short IP header")
        if buf[0] >> 4 != 6:
            return self._skip("not IP")
        payload_len = int.from_bytes(buf[4:6], "big")
        proto = buf[6]
        src = socket.inet_ntop(socket.AF_INET6, buf[8:24])
        dst = socket.inet_ntop(socket.AF_INET6, buf[24:40])
        off = 40
        first_fragment = True
        while True:
            if proto in _IPV6_EXT:
                if len(buf) < off + 2:
                    return self._skip("short IP header")
                proto, length_units = buf[off], buf[off + 1]
                off += (length_units + 1) * 8
            elif proto == _IPV6_FRAGMENT:
                if len(buf) < off + 8:
                    return self._skip("short IP header")
                proto = buf[off]
                if int.from_bytes(buf[off + 2:off + 4], "big") >> 3:
                    first_fragment = False
                off += 8
            else:
                break
        if len(buf) < off:
            return self._skip("short IP header")
        return self._decode_transport(ts_ms, src, dst, proto, 40 + payload_len,
                                      buf[off:], first_fragment)

    def _decode_transport(self, ts_ms, src, dst, proto, ip_len, seg, first_fragment):
        sport = dport = 0
        flags = 0
        itype = icode = None
        if not first_fragment:
            # ports (and the ICMP header) live in the first fragment only
            if proto in (PROTO_ICMP, PROTO_ICMP6):
                itype = icode = 0
        elif proto in (PROTO_TCP,):
            if len(seg) < 20:
                return self._skip("short transport header")
            sport = int.from_bytes(seg[0:2], "big")
            dport = int.from_bytes(seg[2:4], "big")
            flags = seg[13]
        elif proto == PROTO_UDP:
            if len(seg) < 8:
                return self._skip("short transport header")
            sport = int.from_bytes(seg[0:2], "big")
            dport = int.from_bytes(seg[2:4], "big")
        elif proto in (PROTO_ICMP, PROTO_ICMP6):
            if len(seg) < 4:
                return self._skip("short transport header")
            itype, icode = seg[0], seg[1]
        return PacketRecord(ts_ms, src, dst, sport, dport, proto, ip_len,
                            flags, itype, icode)


def open_capture(path) -> CaptureReader:
    return CaptureReader(path)
