"""Message buffers and the epidemic, binary spray-and-wait and PRoPHET routers."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional

from .scenario import EPIDEMIC, PROPHET, SPRAY_AND_WAIT, RouterParams

# tolerance when turning an elapsed float time into whole seconds
_TIME_EPS = 1e-9


@dataclass(slots=True)
class Message:
    id: int
    src: int
    dst: int
    size: int
    created_at: float
    ttl: float
    copies: int = 1
    hops: int = 0

    @property
    def expires_at(self) -> float:
        return self.created_at + self.ttl

    def expired(self, now: float) -> bool:
        return self.created_at + self.ttl < now


class Buffer:
    """FIFO message store bounded in bytes; ids are unique."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self.capacity = capacity
        self.occupancy = 0
        self._entries: OrderedDict[int, Message] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, msg_id: int) -> bool:
        return msg_id in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def get(self, msg_id: int) -> Optional[Message]:
        return self._entries.get(msg_id)

    def ids(self) -> set[int]:
        return set(self._entries)

    def remove(self, msg_id: int) -> Message:
        msg = self._entries.pop(msg_id)
        self.occupancy -= msg.size
        return msg

    def _add(self, msg: Message) -> None:
        self._entries[msg.id] = msg
        self.occupancy += msg.size

    def _pop_oldest(self) -> Message:
        _, msg = self._entries.popitem(last=False)
        self.occupancy -= msg.size
        return msg


def buffer_insert(buf: Buffer, msg: Message, now: float) -> list[Message]:
    """Insert ``msg``, evicting oldest entries until it fits. Returns the dropped messages."""
    if msg.id in buf:
        raise KeyError(f"duplicate message id {msg.id}")
    if msg.expired(now):
        raise ValueError(f"message {msg.id} already expired at {now}")
    if msg.size > buf.capacity:
        return [msg]
    dropped = []
    while buf.occupancy + msg.size > buf.capacity:
        dropped.append(buf._pop_oldest())
    buf._add(msg)
    return dropped


def expire_ttl(buf: Buffer, now: float) -> list[Message]:
    stale = [m for m in buf if m.expired(now)]
    for m in stale:
        buf.remove(m.id)
    return stale


def epidemic_plan(buf: Buffer, peer_ids: set[int], now: float = -math.inf) -> list[Message]:
    offers = [m for m in buf if m.id not in peer_ids and not m.expired(now)]
    offers.sort(key=lambda m: (m.created_at, m.id))
    return offers


class SnwAction(NamedTuple):
    kind: str  # "forward_half" | "forward_final" | "hold"
    kept: int = 0
    given: int = 0


FORWARD_FINAL = SnwAction("forward_final")
HOLD = SnwAction("hold")


def snw_on_contact(msg: Message, peer_is_destination: bool) -> SnwAction:
    if peer_is_destination:
        return FORWARD_FINAL
    if msg.copies > 1:
        given = msg.copies // 2
        return SnwAction("forward_half", kept=msg.copies - given, given=given)
    return HOLD


def _check_unit(**kwargs: float) -> None:
    for name, v in kwargs.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v!r}")


def prophet_update_direct(p_ij: float, p0: float) -> float:
    _check_unit(p_ij=p_ij, p0=p0)
    return min(1.0, (1.0 - p_ij) * p0 + p_ij)


def prophet_age(p_ij: float, alpha: float, k: float) -> float:
    _check_unit(p_ij=p_ij)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha!r}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k!r}")
    return alpha**k * p_ij


def prophet_transitive(p_iz: float, p_ij: float, p_jz: float, beta: float) -> float:
    _check_unit(p_iz=p_iz, p_ij=p_ij, p_jz=p_jz, beta=beta)
    return min(1.0, p_iz + (1.0 - p_iz) * p_ij * p_jz * beta)


class PredictabilityTable:
    """Per-destination delivery predictabilities, aged lazily in whole seconds.

    Reads never mutate: the value at ``now`` is ``p * alpha**k`` with ``k`` the
    whole seconds since the entry was last written.
    """

    def __init__(self, owner: int, alpha: float):
        self.owner = owner
        self.alpha = alpha
        self._p: dict[int, float] = {}
        self._last: dict[int, float] = {}

    def __contains__(self, dst: int) -> bool:
        return dst in self._p

    def destinations(self) -> list[int]:
        return sorted(self._p)

    def elapsed_units(self, dst: int, now: float) -> int:
        return max(0, math.floor(now - self._last[dst] + _TIME_EPS))

    def get(self, dst: int, now: float) -> float:
        if dst == self.owner:
            return 1.0
        if dst not in self._p:
            return 0.0
        return prophet_age(self._p[dst], self.alpha, self.elapsed_units(dst, now))

    def set(self, dst: int, value: float, now: float) -> None:
        _check_unit(value=value)
        self._p[dst] = value
        self._last[dst] = now

    def next_change(self, dst: int, now: float) -> float:
        """Earliest time after ``now`` at which ``get(dst, .)`` can change."""
        if dst not in self._p or self._p[dst] == 0.0 or dst == self.owner:
            return math.inf
        return self._last[dst] + self.elapsed_units(dst, now) + 1


def prophet_encounter(a: PredictabilityTable, b: PredictabilityTable, now: float,
                      p0: float, beta: float) -> None:
    """Direct then transitive update of both tables when ``a`` meets ``b``."""
    for tab, peer in ((a, b.owner), (b, a.owner)):
        tab.set(peer, prophet_update_direct(tab.get(peer, now), p0), now)
    snap_a = {z: a.get(z, now) for z in a.destinations()}
    snap_b = {z: b.get(z, now) for z in b.destinations()}
    for tab, mine, theirs, peer in ((a, snap_a, snap_b, b.owner), (b, snap_b, snap_a, a.owner)):
        p_ij = mine[peer]
        for z, p_jz in theirs.items():
            if z in (tab.owner, peer):
                continue
            tab.set(z, prophet_transitive(mine.get(z, 0.0), p_ij, p_jz, beta), now)


def prophet_plan(self_table: PredictabilityTable, peer_table: PredictabilityTable, self_buf: Buffer,
                 peer_ids: set[int], now: float = 0.0) -> list[Message]:
    """Offer messages whose destination the peer predicts strictly better."""
    scored = []
    for m in self_buf:
        if m.id in peer_ids or m.expired(now):
            continue
        theirs = peer_table.get(m.dst, now)
        if theirs > self_table.get(m.dst, now):
            scored.append((-theirs, m.created_at, m.id, m))
    scored.sort(key=lambda s: s[:3])
    return [s[3] for s in scored]


@dataclass
class Carrier:
    """Routing-side state of one node."""
    id: int
    buffer: Buffer
    delivered: set[int] = field(default_factory=set)
    table: Optional[PredictabilityTable] = None

    def known_ids(self) -> set[int]:
        return self.buffer.ids() | self.delivered


class Router:
    kind = ""

    def __init__(self, params: RouterParams):
        self.params = params

    def new_carrier(self, node_id: int, capacity: int) -> Carrier:
        return Carrier(node_id, Buffer(capacity))

    def initial_copies(self) -> int:
        return 1

    def on_contact_up(self, a: Carrier, b: Carrier, now: float) -> None:
        pass

    def plan(self, sender: Carrier, receiver: Carrier, now: float) -> list[Message]:
        raise NotImplementedError

    def stable_until(self, sender: Carrier, receiver: Carrier, now: float) -> float:
        """Time up to which ``plan`` cannot change while both buffers stay untouched."""
        return math.inf

    def hand_over(self, sender: Carrier, receiver: Carrier, msg_id: int) -> Optional[Message]:
        """Complete a transfer: adjust the sender's replica, return the receiver's, or None to abort."""
        msg = sender.buffer.get(msg_id)
        if msg is None:
            return None
        return replace(msg, copies=1, hops=msg.hops + 1)


class EpidemicRouter(Router):
    kind = EPIDEMIC

    def plan(self, sender, receiver, now):
        return epidemic_plan(sender.buffer, receiver.known_ids(), now)


class SprayAndWaitRouter(Router):
    kind = SPRAY_AND_WAIT

    def initial_copies(self) -> int:
        return self.params.snw_copies

    def plan(self, sender, receiver, now):
        known = receiver.known_ids()
        return [m for m in epidemic_plan(sender.buffer, known, now)
                if snw_on_contact(m, m.dst == receiver.id) is not HOLD]

    def hand_over(self, sender, receiver, msg_id):
        msg = sender.buffer.get(msg_id)
        if msg is None:
            return None
        action = snw_on_contact(msg, msg.dst == receiver.id)
        if action.kind == "hold":
            return None
        if action.kind == "forward_final":
            return replace(msg, hops=msg.hops + 1)
        msg.copies = action.kept
        return replace(msg, copies=action.given, hops=msg.hops + 1)


class ProphetRouter(Router):
    kind = PROPHET

    def new_carrier(self, node_id, capacity):
        return Carrier(node_id, Buffer(capacity), table=PredictabilityTable(node_id, self.params.alpha))

    def on_contact_up(self, a, b, now):
        prophet_encounter(a.table, b.table, now, self.params.p0, self.params.beta)

    def plan(self, sender, receiver, now):
        return prophet_plan(sender.table, receiver.table, sender.buffer, receiver.known_ids(), now)

    def stable_until(self, sender, receiver, now):
        known = receiver.known_ids()
        dsts = {m.dst for m in sender.buffer if m.id not in known}
        return min((t.next_change(d, now) for d in dsts for t in (sender.table, receiver.table)),
                   default=math.inf)


def make_router(kind: str, params: RouterParams) -> Router:
    routers = {EPIDEMIC: EpidemicRouter, SPRAY_AND_WAIT: SprayAndWaitRouter, PROPHET: ProphetRouter}
    try:
        return routers[kind](params)
    except KeyError:
        raise ValueError(f"unknown router {kind!r}") from None


def copies_in_network(carriers: Iterable[Carrier], msg_id: int) -> int:
    return sum(c.buffer.get(msg_id).copies for c in carriers if msg_id in c.buffer)
