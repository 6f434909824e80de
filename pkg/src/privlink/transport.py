"""Wire format, framing and byte-counting channels.

A frame is ``tag(1) || payload_len(4, little-endian) || payload``.  Element
lists are ``count(4, little-endian)`` followed by ``count`` canonical
33-byte group elements.  The format is fixed so byte accounting is
reproducible across implementations; the channel carries no encryption of
its own because the blinded elements are the protection.
"""

from __future__ import annotations

import array
import queue
import socket
import struct
import sys
from dataclasses import dataclass, field

from .group import ELEMENT_LEN, GroupElement

__all__ = [
    "TransportError",
    "MSG_OFFER_SETS",
    "MSG_RESPONDER_SETS",
    "MSG_RESULT",
    "MSG_BATCH",
    "MSG_ABORT",
    "SUB_HEADER",
    "SUB_DEGREES",
    "SUB_CNS",
    "encode_frame",
    "decode_frame",
    "decode_frames",
    "encode_element_list",
    "decode_element_list",
    "encode_result",
    "decode_result",
    "offer_sets_size",
    "responder_sets_size",
    "RESULT_FRAME_SIZE",
    "Channel",
    "LoopbackChannel",
    "loopback_pair",
    "SocketChannel",
]

MSG_OFFER_SETS = 0x01
MSG_RESPONDER_SETS = 0x02
MSG_RESULT = 0x03
MSG_BATCH = 0x04
MSG_ABORT = 0x05

_KNOWN_TAGS = {MSG_OFFER_SETS, MSG_RESPONDER_SETS, MSG_RESULT, MSG_BATCH, MSG_ABORT}

# Batch-frame subtypes (first payload byte of MSG_BATCH).
SUB_HEADER = 0x00
SUB_DEGREES = 0x01
SUB_CNS = 0x02

_HEADER = struct.Struct("<BI")
_U32 = struct.Struct("<I")

RESULT_FRAME_SIZE = _HEADER.size + 12  # one (cn, deg_x, deg_y) triple


class TransportError(RuntimeError):
    pass


def encode_frame(tag: int, payload: bytes) -> bytes:
    return _HEADER.pack(tag, len(payload)) + payload


def decode_frame(data: bytes) -> tuple[int, bytes]:
    """Decode exactly one frame; trailing bytes or truncation are errors."""
    if len(data) < _HEADER.size:
        raise TransportError(f"truncated frame header at offset {len(data)}")
    tag, length = _HEADER.unpack_from(data)
    if tag not in _KNOWN_TAGS:
        raise TransportError(f"unknown frame tag 0x{tag:02x} at offset 0")
    end = _HEADER.size + length
    if len(data) < end:
        raise TransportError(f"truncated payload: need {end} bytes, have {len(data)}")
    if len(data) > end:
        raise TransportError(f"trailing garbage at offset {end}")
    return tag, data[_HEADER.size:end]


def decode_frames(data: bytes) -> list[tuple[int, bytes]]:
    """Decode a concatenation of frames back into the original sequence."""
    frames = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < _HEADER.size:
            raise TransportError(f"truncated frame header at offset {offset}")
        tag, length = _HEADER.unpack_from(data, offset)
        if tag not in _KNOWN_TAGS:
            raise TransportError(f"unknown frame tag 0x{tag:02x} at offset {offset}")
        start = offset + _HEADER.size
        if len(data) - start < length:
            raise TransportError(f"truncated payload at offset {start}")
        frames.append((tag, data[start:start + length]))
        offset = start + length
    return frames


def encode_element_list(elements) -> bytes:
    parts = [_U32.pack(len(elements))]
    parts.extend(e.encoding for e in elements)
    return b"".join(parts)


def decode_element_list(data: bytes, offset: int = 0) -> tuple[list[GroupElement], int]:
    """Decode one element list starting at ``offset``; returns (list, next offset)."""
    if len(data) - offset < 4:
        raise TransportError(f"truncated element count at offset {offset}")
    (count,) = _U32.unpack_from(data, offset)
    offset += 4
    need = count * ELEMENT_LEN
    if len(data) - offset < need:
        raise TransportError(f"truncated element list at offset {offset}")
    elements = []
    for _ in range(count):
        raw = data[offset:offset + ELEMENT_LEN]
        if raw[0] != 0x02:
            raise TransportError(
                f"non-canonical element encoding (prefix 0x{raw[0]:02x}) at offset {offset}")
        elements.append(GroupElement(raw))
        offset += ELEMENT_LEN
    return elements, offset


def encode_element_lists(lists) -> bytes:
    return b"".join(encode_element_list(lst) for lst in lists)


def decode_element_lists(data: bytes, count: int) -> list[list[GroupElement]]:
    offset = 0
    lists = []
    for _ in range(count):
        lst, offset = decode_element_list(data, offset)
        lists.append(lst)
    if offset != len(data):
        raise TransportError(f"trailing garbage at offset {offset}")
    return lists


def encode_result(triples) -> bytes:
    """Pack one or more (cn, deg_x, deg_y) triples; a single triple is 12 bytes."""
    return b"".join(struct.pack("<III", *t) for t in triples)


def decode_result(data: bytes) -> list[tuple[int, int, int]]:
    if len(data) % 12:
        raise TransportError(f"result payload length {len(data)} not a multiple of 12")
    return [struct.unpack_from("<III", data, i) for i in range(0, len(data), 12)]


def offer_sets_size(s1: int, s2: int) -> int:
    """Analytic size of an OfferSets frame carrying lists of s1 and s2 elements."""
    return _HEADER.size + (4 + ELEMENT_LEN * s1) + (4 + ELEMENT_LEN * s2)


def responder_sets_size(s1: int, s2: int, s3: int, s4: int) -> int:
    return _HEADER.size + sum(4 + ELEMENT_LEN * s for s in (s1, s2, s3, s4))


class Channel:
    """Ordered, reliable frame channel with per-direction byte counters."""

    def __init__(self, capture: bool = False):
        self.bytes_sent = 0
        self.bytes_received = 0
        self.sent_frames: list[tuple[int, bytes]] | None = [] if capture else None

    def _transmit(self, data: bytes) -> None:
        raise NotImplementedError

    def _receive(self) -> bytes:
        raise NotImplementedError

    def send_frame(self, tag: int, payload: bytes) -> None:
        data = encode_frame(tag, payload)
        self._transmit(data)
        self.bytes_sent += len(data)
        if self.sent_frames is not None:
            self.sent_frames.append((tag, payload))

    def recv_frame(self) -> tuple[int, bytes]:
        data = self._receive()
        self.bytes_received += len(data)
        tag, payload = decode_frame(data)
        if tag == MSG_ABORT:
            raise TransportError(f"peer aborted: {payload.decode('utf-8', 'replace')}")
        return tag, payload

    def abort(self, reason: str) -> None:
        self.send_frame(MSG_ABORT, reason.encode("utf-8"))


class LoopbackChannel(Channel):
    """In-process channel endpoint; create pairs with :func:`loopback_pair`."""

    def __init__(self, capture: bool = False):
        super().__init__(capture)
        self._inbox: queue.Queue[bytes] = queue.Queue()
        self._peer: "LoopbackChannel | None" = None

    def _transmit(self, data: bytes) -> None:
        assert self._peer is not None, "unpaired loopback channel"
        self._peer._inbox.put(data)

    def _receive(self) -> bytes:
        try:
            return self._inbox.get(timeout=120)
        except queue.Empty:
            raise TransportError("loopback receive timed out")


def loopback_pair(capture: bool = False) -> tuple[LoopbackChannel, LoopbackChannel]:
    a, b = LoopbackChannel(capture), LoopbackChannel(capture)
    a._peer, b._peer = b, a
    return a, b


class SocketChannel(Channel):
    """Frame channel over a connected stream socket."""

    def __init__(self, sock: socket.socket, capture: bool = False):
        super().__init__(capture)
        self._sock = sock

    def _transmit(self, data: bytes) -> None:
        self._sock.sendall(data)

    def _read_exact(self, size: int, context: str) -> bytes:
        chunks = []
        got = 0
        while got < size:
            chunk = self._sock.recv(size - got)
            if not chunk:
                raise TransportError(
                    f"peer disconnected mid-frame: {got}/{size} bytes of {context}")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def _receive(self) -> bytes:
        header = self._read_exact(_HEADER.size, "frame header")
        _, length = _HEADER.unpack(header)
        payload = self._read_exact(length, "frame payload") if length else b""
        return header + payload

    def close(self) -> None:
        self._sock.close()


@dataclass
class BatchHeader:
    """Contents of a SUB_HEADER batch frame."""

    cached: bool
    n: int
    topology: str  # "explicit" | "all-vs-all" | "one-vs-all"
    queries: list[tuple[int, int]] = field(default_factory=list)
    anchor: int = 0

    _TOPOLOGY_CODES = {"explicit": 0, "all-vs-all": 1, "one-vs-all": 2}

    def encode(self) -> bytes:
        parts = [bytes([SUB_HEADER, int(self.cached)]), _U32.pack(self.n),
                 bytes([self._TOPOLOGY_CODES[self.topology]])]
        if self.topology == "explicit":
            parts.append(_U32.pack(len(self.queries)))
            parts.extend(struct.pack("<II", x, y) for x, y in self.queries)
        elif self.topology == "one-vs-all":
            parts.append(_U32.pack(self.anchor))
        return b"".join(parts)

    @classmethod
    def decode(cls, payload: bytes) -> "BatchHeader":
        if len(payload) < 7 or payload[0] != SUB_HEADER:
            raise TransportError("malformed batch header frame")
        cached = bool(payload[1])
        (n,) = _U32.unpack_from(payload, 2)
        code = payload[6]
        names = {v: k for k, v in cls._TOPOLOGY_CODES.items()}
        if code not in names:
            raise TransportError(f"unknown topology code {code}")
        topology = names[code]
        queries: list[tuple[int, int]] = []
        anchor = 0
        if topology == "explicit":
            (count,) = _U32.unpack_from(payload, 7)
            offset = 11
            for _ in range(count):
                x, y = struct.unpack_from("<II", payload, offset)
                queries.append((x, y))
                offset += 8
        elif topology == "one-vs-all":
            (anchor,) = _U32.unpack_from(payload, 7)
        return cls(cached, n, topology, queries, anchor)

    def expand_queries(self) -> list[tuple[int, int]]:
        if self.topology == "all-vs-all":
            return [(x, y) for x in range(self.n) for y in range(x + 1, self.n)]
        if self.topology == "one-vs-all":
            return [(self.anchor, y) for y in range(self.n) if y != self.anchor]
        return list(self.queries)


def encode_u32_table(subtype: int, values) -> bytes:
    # array('I') keeps large tables (one entry per node pair) off the slow path
    arr = array.array("I", values)
    if sys.byteorder != "little":
        arr.byteswap()
    return bytes([subtype]) + _U32.pack(len(arr)) + arr.tobytes()


def decode_u32_table(payload: bytes, subtype: int) -> list[int]:
    if not payload or payload[0] != subtype:
        raise TransportError(f"expected batch subtype {subtype}, got {payload[:1]!r}")
    (count,) = _U32.unpack_from(payload, 1)
    if len(payload) != 5 + 4 * count:
        raise TransportError("batch table length mismatch")
    arr = array.array("I")
    arr.frombytes(payload[5:])
    if sys.byteorder != "little":
        arr.byteswap()
    return arr.tolist()
