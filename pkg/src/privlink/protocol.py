"""The two-party private common-neighbor counting protocol.

Party 1 (the initiator) blinds its local neighborhoods under its key a and
sends them over; party 2 (the responder) re-blinds them under its key b,
shuffles, and returns them together with its own singly-blinded
neighborhoods.  The initiator re-blinds those with a, forms the oblivious
union neighborhoods and counts matches.  For a query (x, y) this yields
the triple (cn, deg_x, deg_y) on the union graph, from which common
neighbors, Jaccard and cosine all follow; the triple is sent back so both
parties end up with the same scores.

Two key regimes are supported.  In fresh mode both parties rotate their
keys for every query, which is the regime the per-instantiation security
argument covers.  In cached mode the keys persist for the whole batch, so
each distinct node is blinded at most once per party and re-blinded at most
once, making the exponentiation count O(n) regardless of how many pairs
are evaluated.
"""

from __future__ import annotations

import random
import threading
import uuid
from dataclasses import dataclass, field

from . import group as grp
from .graphs import Graph
from .group import GroupElement, GroupError, NodeScalar, Scalar
from .similarity import SimilarityReport, derive_scores
from . import transport as wire
from .transport import (
    BatchHeader,
    Channel,
    MSG_BATCH,
    MSG_OFFER_SETS,
    MSG_RESPONDER_SETS,
    MSG_RESULT,
    SUB_CNS,
    SUB_DEGREES,
    TransportError,
    loopback_pair,
)

__all__ = [
    "ProtocolError",
    "PairQuery",
    "SessionKeys",
    "BlindedSet",
    "ResponderMessage",
    "BlindCache",
    "Transcript",
    "offline_blind",
    "respond",
    "finalize",
    "InitiatorSession",
    "ResponderSession",
    "run_single",
    "run_pairs",
    "all_pairs",
]


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class PairQuery:
    x: int
    y: int

    def __post_init__(self):
        if self.x == self.y:
            raise ProtocolError(f"query endpoints must differ, got ({self.x}, {self.y})")
        if self.x < 0 or self.y < 0:
            raise ProtocolError(f"negative node id in query ({self.x}, {self.y})")


@dataclass
class SessionKeys:
    """A party's blinding key for one protocol instantiation.

    When ``fresh`` is set the key may drive exactly one query; the state
    machine marks it consumed afterwards and refuses reuse.
    """

    own_key: Scalar
    session_id: str
    fresh: bool
    consumed: bool = field(default=False)

    @classmethod
    def generate(cls, fresh: bool, rng=None) -> "SessionKeys":
        return cls(grp.random_scalar(rng), uuid.uuid4().hex, fresh)

    def mark_used(self) -> None:
        if self.fresh:
            if self.consumed:
                raise ProtocolError(f"fresh session keys {self.session_id} already consumed")
            self.consumed = True


@dataclass(frozen=True, slots=True)
class BlindedSet:
    """A neighborhood as blinded group elements at a uniform blinding depth."""

    elements: tuple[GroupElement, ...]
    depth: int

    def __post_init__(self):
        if self.depth not in (1, 2):
            raise ProtocolError(f"blinding depth must be 1 or 2, got {self.depth}")
        if len(set(self.elements)) != len(self.elements):
            raise ProtocolError("blinded set contains duplicate elements")

    def __len__(self):
        return len(self.elements)


@dataclass(frozen=True, slots=True)
class ResponderMessage:
    """Responder's reply for one query: re-blinded peer sets plus own sets."""

    reblinded_x: BlindedSet
    reblinded_y: BlindedSet
    own_x: BlindedSet
    own_y: BlindedSet


@dataclass
class BlindCache:
    """Per-session blind reuse, valid only while the session keys stand.

    ``depth1`` maps a local node id to its singly-blinded element under the
    party's own key; ``depth2`` maps an incoming element encoding to its
    re-blinded (doubly-blinded) form.  Both are dropped on key rotation.
    """

    depth1: dict[int, GroupElement] = field(default_factory=dict)
    depth2: dict[bytes, GroupElement] = field(default_factory=dict)

    def invalidate(self) -> None:
        self.depth1.clear()
        self.depth2.clear()


@dataclass
class Transcript:
    """Per-party accounting: wire bytes, group exponentiations, pairs served."""

    bytes_sent: int = 0
    bytes_received: int = 0
    exponentiations: int = 0
    pairs_evaluated: int = 0

    def merge_channel(self, channel: Channel) -> None:
        self.bytes_sent = channel.bytes_sent
        self.bytes_received = channel.bytes_received


def offline_blind(g: Graph, keys: SessionKeys, query: PairQuery,
                  cache: BlindCache | None = None,
                  transcript: Transcript | None = None) -> tuple[BlindedSet, BlindedSet]:
    """Blind the local neighborhoods of both query endpoints under own key."""
    sets = []
    for node in (query.x, query.y):
        elements = []
        for neighbor in sorted(g.neighbors(node)):
            elements.append(_blind_node(neighbor, keys, cache, transcript))
        sets.append(BlindedSet(tuple(elements), depth=1))
    return sets[0], sets[1]


def _blind_node(node: int, keys: SessionKeys, cache: BlindCache | None,
                transcript: Transcript | None) -> GroupElement:
    if cache is not None and node in cache.depth1:
        return cache.depth1[node]
    element = grp.blind(grp.encode_node(node), keys.own_key)
    if transcript is not None:
        transcript.exponentiations += 1
    if cache is not None:
        cache.depth1[node] = element
    return element


def _reblind(element: GroupElement, keys: SessionKeys, cache: BlindCache | None,
             transcript: Transcript | None) -> GroupElement:
    if cache is not None:
        hit = cache.depth2.get(element.encoding)
        if hit is not None:
            return hit
    try:
        result = grp.reblind(element, keys.own_key)
    except GroupError as exc:
        raise ProtocolError(f"malformed peer element: {exc}") from exc
    if transcript is not None:
        transcript.exponentiations += 1
    if cache is not None:
        cache.depth2[element.encoding] = result
    return result


def respond(peer_sets: tuple[BlindedSet, BlindedSet], g: Graph, keys: SessionKeys,
            query: PairQuery, rng: random.Random,
            cache: BlindCache | None = None,
            transcript: Transcript | None = None) -> ResponderMessage:
    """Re-blind the initiator's sets and attach own blinded neighborhoods.

    Every outgoing list is independently shuffled so transmission order
    carries no information about neighbor identities.
    """
    for s in peer_sets:
        if s.depth != 1:
            raise ProtocolError(f"expected depth-1 peer sets, got depth {s.depth}")
    reblinded = []
    for s in peer_sets:
        elements = [_reblind(e, keys, cache, transcript) for e in s.elements]
        rng.shuffle(elements)
        reblinded.append(BlindedSet(tuple(elements), depth=2))
    own_x, own_y = offline_blind(g, keys, query, cache, transcript)
    shuffled_own = []
    for s in (own_x, own_y):
        elements = list(s.elements)
        rng.shuffle(elements)
        shuffled_own.append(BlindedSet(tuple(elements), depth=1))
    return ResponderMessage(reblinded[0], reblinded[1], shuffled_own[0], shuffled_own[1])


def finalize(keys: SessionKeys, msg: ResponderMessage, query: PairQuery,
             cache: BlindCache | None = None,
             transcript: Transcript | None = None) -> tuple[int, int, int]:
    """Complete the query: oblivious unions and the (cn, deg_x, deg_y) triple."""
    if msg.reblinded_x.depth != 2 or msg.reblinded_y.depth != 2:
        raise ProtocolError("responder's re-blinded sets must be at depth 2")
    if msg.own_x.depth != 1 or msg.own_y.depth != 1:
        raise ProtocolError("responder's own sets must be at depth 1")
    oblivious_x = set(msg.reblinded_x.elements)
    oblivious_x.update(_reblind(e, keys, cache, transcript) for e in msg.own_x.elements)
    oblivious_y = set(msg.reblinded_y.elements)
    oblivious_y.update(_reblind(e, keys, cache, transcript) for e in msg.own_y.elements)
    cn = len(oblivious_x & oblivious_y)
    return cn, len(oblivious_x), len(oblivious_y)


def all_pairs(n: int) -> list[PairQuery]:
    return [PairQuery(x, y) for x in range(n) for y in range(x + 1, n)]


class _Session:
    def __init__(self, graph: Graph, seed: int | None = None, key_rng=None):
        self.graph = graph
        self.rng = random.Random(seed)
        self.key_rng = key_rng
        self.keys: SessionKeys | None = None
        self.cache = BlindCache()
        self.transcript = Transcript()

    def rotate_keys(self, fresh: bool) -> None:
        self.keys = SessionKeys.generate(fresh, self.key_rng)
        self.cache.invalidate()

    def _ensure_keys(self, cached: bool) -> None:
        if cached:
            if self.keys is None or self.keys.fresh:
                self.rotate_keys(fresh=False)
        else:
            self.rotate_keys(fresh=True)

    def _shuffled(self, elements) -> list[GroupElement]:
        out = list(elements)
        self.rng.shuffle(out)
        return out


class InitiatorSession(_Session):
    """Party 1: drives queries, performs the matching, distributes results."""

    def run_query(self, channel: Channel, query: PairQuery, cached: bool) -> SimilarityReport:
        """One Fig-2-style exchange: offer, response, result."""
        self._ensure_keys(cached)
        cache = self.cache if cached else None
        bx, by = offline_blind(self.graph, self.keys, query, cache, self.transcript)
        channel.send_frame(MSG_OFFER_SETS, wire.encode_element_lists(
            [self._shuffled(bx.elements), self._shuffled(by.elements)]))
        tag, payload = channel.recv_frame()
        if tag != MSG_RESPONDER_SETS:
            raise ProtocolError(f"expected responder sets, got frame tag {tag}")
        lists = wire.decode_element_lists(payload, 4)
        msg = ResponderMessage(
            BlindedSet(tuple(lists[0]), 2), BlindedSet(tuple(lists[1]), 2),
            BlindedSet(tuple(lists[2]), 1), BlindedSet(tuple(lists[3]), 1))
        cn, deg_x, deg_y = finalize(self.keys, msg, query, cache, self.transcript)
        channel.send_frame(MSG_RESULT, wire.encode_result([(cn, deg_x, deg_y)]))
        self.keys.mark_used()
        self.transcript.pairs_evaluated += 1
        return derive_scores(query.x, query.y, cn, deg_x, deg_y)

    def run_batch(self, channel: Channel, queries: list[PairQuery], cached: bool,
                  topology: str = "explicit", anchor: int = 0) -> list[SimilarityReport]:
        unique = list(dict.fromkeys(queries))
        # the header carries the full request list (duplicates included) so
        # both parties expand and dedupe it identically
        header = BatchHeader(cached, self.graph.n, topology,
                             [(q.x, q.y) for q in queries] if topology == "explicit" else [],
                             anchor)
        channel.send_frame(MSG_BATCH, header.encode())
        if cached:
            reports = self._run_batch_cached(channel, unique)
        else:
            reports = [self.run_query(channel, q, cached=False) for q in unique]
        by_query = {(r.x, r.y): r for r in reports}
        return [by_query[(q.x, q.y)] for q in queries]

    def _run_batch_cached(self, channel: Channel,
                          unique: list[PairQuery]) -> list[SimilarityReport]:
        self._ensure_keys(cached=True)
        involved = sorted({node for q in unique for node in (q.x, q.y)})
        for node in involved:
            blinds = [_blind_node(nb, self.keys, self.cache, self.transcript)
                      for nb in self.graph.neighbors(node)]
            channel.send_frame(MSG_OFFER_SETS, wire.encode_element_lists(
                [self._shuffled(blinds), []]))
        oblivious: dict[int, frozenset[GroupElement]] = {}
        for node in involved:
            tag, payload = channel.recv_frame()
            if tag != MSG_RESPONDER_SETS:
                raise ProtocolError(f"expected responder sets for node {node}, got tag {tag}")
            lists = wire.decode_element_lists(payload, 4)
            union = set(lists[0])
            union.update(_reblind(e, self.keys, self.cache, self.transcript)
                         for e in lists[1])
            oblivious[node] = frozenset(union)
        degrees = [len(oblivious[node]) for node in involved]
        channel.send_frame(MSG_BATCH, wire.encode_u32_table(SUB_DEGREES, degrees))
        reports = []
        cns = []
        for q in unique:
            sx, sy = oblivious[q.x], oblivious[q.y]
            cn = len(sx & sy)
            cns.append(cn)
            reports.append(derive_scores(q.x, q.y, cn, len(sx), len(sy)))
        channel.send_frame(MSG_BATCH, wire.encode_u32_table(SUB_CNS, cns))
        self.transcript.pairs_evaluated += len(unique)
        return reports


class ResponderSession(_Session):
    """Party 2: answers offers and receives the score results."""

    def serve_query(self, channel: Channel, query: PairQuery, cached: bool) -> SimilarityReport:
        self._ensure_keys(cached)
        cache = self.cache if cached else None
        tag, payload = channel.recv_frame()
        if tag != MSG_OFFER_SETS:
            raise ProtocolError(f"expected offer sets, got frame tag {tag}")
        lists = wire.decode_element_lists(payload, 2)
        peer = (BlindedSet(tuple(lists[0]), 1), BlindedSet(tuple(lists[1]), 1))
        msg = respond(peer, self.graph, self.keys, query, self.rng, cache, self.transcript)
        channel.send_frame(MSG_RESPONDER_SETS, wire.encode_element_lists(
            [msg.reblinded_x.elements, msg.reblinded_y.elements,
             msg.own_x.elements, msg.own_y.elements]))
        tag, payload = channel.recv_frame()
        if tag != MSG_RESULT:
            raise ProtocolError(f"expected result, got frame tag {tag}")
        (triple,) = wire.decode_result(payload)
        self.keys.mark_used()
        self.transcript.pairs_evaluated += 1
        return derive_scores(query.x, query.y, *triple)

    def serve_batch(self, channel: Channel) -> list[SimilarityReport]:
        tag, payload = channel.recv_frame()
        if tag != MSG_BATCH:
            raise ProtocolError(f"expected batch header, got frame tag {tag}")
        header = BatchHeader.decode(payload)
        queries = [PairQuery(x, y) for x, y in header.expand_queries()]
        unique = list(dict.fromkeys(queries))
        if header.cached:
            reports = self._serve_batch_cached(channel, unique)
        else:
            reports = [self.serve_query(channel, q, cached=False) for q in unique]
        by_query = {(r.x, r.y): r for r in reports}
        return [by_query[(q.x, q.y)] for q in queries]

    def _serve_batch_cached(self, channel: Channel,
                            unique: list[PairQuery]) -> list[SimilarityReport]:
        self._ensure_keys(cached=True)
        involved = sorted({node for q in unique for node in (q.x, q.y)})
        for node in involved:
            tag, payload = channel.recv_frame()
            if tag != MSG_OFFER_SETS:
                raise ProtocolError(f"expected offer for node {node}, got tag {tag}")
            lists = wire.decode_element_lists(payload, 2)
            reblinded = [_reblind(e, self.keys, self.cache, self.transcript)
                         for e in lists[0]]
            own = [_blind_node(nb, self.keys, self.cache, self.transcript)
                   for nb in self.graph.neighbors(node)]
            channel.send_frame(MSG_RESPONDER_SETS, wire.encode_element_lists(
                [self._shuffled(reblinded), self._shuffled(own), [], []]))
        tag, payload = channel.recv_frame()
        if tag != MSG_BATCH:
            raise ProtocolError(f"expected degree table, got frame tag {tag}")
        degrees = wire.decode_u32_table(payload, SUB_DEGREES)
        degree_of = dict(zip(involved, degrees))
        tag, payload = channel.recv_frame()
        if tag != MSG_BATCH:
            raise ProtocolError(f"expected result table, got frame tag {tag}")
        cns = wire.decode_u32_table(payload, SUB_CNS)
        if len(cns) != len(unique):
            raise ProtocolError(f"result count {len(cns)} != query count {len(unique)}")
        self.transcript.pairs_evaluated += len(unique)
        return [derive_scores(q.x, q.y, cn, degree_of[q.x], degree_of[q.y])
                for q, cn in zip(unique, cns)]


def _responder_thread(session: ResponderSession, channel: Channel, mode: str,
                      out: dict, single_query: PairQuery | None = None):
    def work():
        try:
            if single_query is not None:
                out["reports"] = [session.serve_query(channel, single_query,
                                                      cached=(mode == "cached"))]
            else:
                out["reports"] = session.serve_batch(channel)
        except BaseException as exc:  # re-raised in the driving thread
            out["error"] = exc
    thread = threading.Thread(target=work, daemon=True)
    thread.start()
    return thread


def run_single(g1: Graph, g2: Graph, query: PairQuery, mode: str = "fresh",
               channels: tuple[Channel, Channel] | None = None,
               seed: int | None = None):
    """Run one query end to end; returns (report, transcript1, transcript2).

    This is the bare three-frame exchange with no batch header, which makes
    its byte count exactly the analytic frame-format sum.
    """
    return _drive(g1, g2, [query], mode, channels, seed, single=True)


def run_pairs(g1: Graph, g2: Graph, queries: list[PairQuery] | None = None,
              mode: str = "cached", topology: str = "explicit", anchor: int = 0,
              channels: tuple[Channel, Channel] | None = None,
              seed: int | None = None):
    """Evaluate a batch of queries; returns (reports, transcript1, transcript2).

    ``topology`` may be "explicit" (with ``queries``), "all-vs-all" or
    "one-vs-all" (with ``anchor``).  Duplicate explicit queries are served
    from the first evaluation and counted once.
    """
    if topology == "all-vs-all":
        queries = all_pairs(g1.n)
    elif topology == "one-vs-all":
        queries = [PairQuery(anchor, y) for y in range(g1.n) if y != anchor]
    elif queries is None:
        raise ProtocolError("explicit topology requires a query list")
    return _drive(g1, g2, queries, mode, channels, seed, single=False,
                  topology=topology, anchor=anchor)


def _drive(g1, g2, queries, mode, channels, seed, single, topology="explicit", anchor=0):
    if mode not in ("fresh", "cached"):
        raise ProtocolError(f"unknown mode {mode!r}")
    if g1.n != g2.n:
        raise ProtocolError(f"party node counts differ: {g1.n} != {g2.n}")
    own_channels = channels is None
    if own_channels:
        c1, c2 = loopback_pair()
    else:
        c1, c2 = channels
    seed1 = None if seed is None else seed * 2 + 1
    seed2 = None if seed is None else seed * 2 + 2
    initiator = InitiatorSession(g1, seed=seed1)
    responder = ResponderSession(g2, seed=seed2)
    out: dict = {}
    thread = _responder_thread(responder, c2, mode,
                               out, single_query=queries[0] if single else None)
    try:
        if single:
            reports = [initiator.run_query(c1, queries[0], cached=(mode == "cached"))]
        else:
            reports = initiator.run_batch(c1, queries, cached=(mode == "cached"),
                                          topology=topology, anchor=anchor)
    finally:
        thread.join(timeout=120)
    if "error" in out:
        raise out["error"]
    peer_reports = out.get("reports")
    if peer_reports is None or [(r.x, r.y, r.cn, r.deg_x, r.deg_y) for r in peer_reports] \
            != [(r.x, r.y, r.cn, r.deg_x, r.deg_y) for r in reports]:
        raise ProtocolError("parties disagree on batch results")
    initiator.transcript.merge_channel(c1)
    responder.transcript.merge_channel(c2)
    if single:
        return reports[0], initiator.transcript, responder.transcript
    return reports, initiator.transcript, responder.transcript
