"""Fixed-step opportunistic network simulation.

Each step runs, in order: clock, mobility, TTL expiry, contact detection,
router planning, rate-limited transfers, hand-over of completed transfers,
traffic generation. Every action lands in an :class:`EventLog`.

With ``fast=True`` the loop jumps over steps in which provably nothing can
happen (no transfer pending, no pair able to cross its range boundary, no
pause ending, no message due or expiring). The resulting log is identical to
plain stepping.
"""
from __future__ import annotations

import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .mobility import MobilityState, advance, initial_state
from .routing import Carrier, Message, buffer_insert, expire_ttl, make_router
from .scenario import (NodeSpec, Point, ScenarioConfig, TrafficSpec, TRAFFIC_STREAM,
                       rng_stream, validate_scenario)

CREATED = "created"
RELAYED = "relayed"
DELIVERED = "delivered"
DROPPED_TTL = "dropped_ttl"
DROPPED_BUFFER = "dropped_buffer"
CONTACT_UP = "contact_up"
CONTACT_DOWN = "contact_down"
TRANSFER_ABORTED = "transfer_aborted"

LOG_HEADER = "time,event,msg_id,node_a,node_b,detail"

# metres; range boundaries are widened by this much when predicting crossings
_GAP_SLACK = 1e-4


@dataclass
class ContactEvent:
    node_a: int
    node_b: int
    start: float
    end: Optional[float] = None

    @property
    def duration(self) -> Optional[float]:
        return None if self.end is None else self.end - self.start


@dataclass(slots=True)
class Transfer:
    msg_id: int
    sender: int
    receiver: int
    size: int
    moved: float = 0.0
    started: Optional[float] = None


@dataclass(frozen=True)
class TransferRecord:
    msg_id: int
    sender: int
    receiver: int
    started: Optional[float]
    completed: Optional[float]
    aborted: bool
    bytes_moved: float


class EventLog:
    def __init__(self) -> None:
        self.entries: list[tuple] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def append(self, time: float, event: str, msg_id=None, node_a=None, node_b=None, detail="") -> None:
        self.entries.append((time, event, msg_id, node_a, node_b, detail))

    def of(self, event: str) -> list[tuple]:
        return [e for e in self.entries if e[1] == event]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(LOG_HEADER + "\n")
        for t, ev, mid, a, b, detail in self.entries:
            cells = (repr(t), ev, "" if mid is None else str(mid),
                     "" if a is None else str(a), "" if b is None else str(b), str(detail))
            out.write(",".join(cells) + "\n")
        return out.getvalue()


@dataclass(frozen=True)
class MetricsReport:
    created: int
    delivered: int
    relayed: int
    dropped_ttl: int
    dropped_buffer: int
    delivery_probability: float
    overhead_ratio: Optional[float]
    average_latency: Optional[float]


def compute_metrics(log: Iterable[tuple]) -> MetricsReport:
    """Delivery probability, overhead ratio and mean latency from an event log.

    Overhead and latency are ``None`` when nothing was delivered.
    """
    created: dict[int, float] = {}
    first_delivery: dict[int, float] = {}
    relayed = dropped_ttl = dropped_buffer = 0
    for t, ev, mid, *_ in log:
        if ev == CREATED:
            created[mid] = t
        elif ev == DELIVERED:
            first_delivery.setdefault(mid, t)
        elif ev == RELAYED:
            relayed += 1
        elif ev == DROPPED_TTL:
            dropped_ttl += 1
        elif ev == DROPPED_BUFFER:
            dropped_buffer += 1
    n_created, n_delivered = len(created), len(first_delivery)
    prob = n_delivered / n_created if n_created else 0.0
    if n_delivered:
        overhead = (relayed - n_delivered) / n_delivered
        latency = sum(t - created[m] for m, t in first_delivery.items()) / n_delivered
    else:
        overhead = latency = None
    return MetricsReport(n_created, n_delivered, relayed, dropped_ttl, dropped_buffer,
                         prob, overhead, latency)


def _pairs_within(pos: np.ndarray, pi: np.ndarray, pj: np.ndarray,
                  reach2: np.ndarray) -> list[tuple[int, int]]:
    x, y = pos[:, 0], pos[:, 1]
    dx, dy = x[pi] - x[pj], y[pi] - y[pj]
    d2 = dx * dx + dy * dy
    return [(int(pi[h]), int(pj[h])) for h in np.flatnonzero(d2 <= reach2)]


def detect_contacts(positions: Sequence[Point], specs: Sequence[NodeSpec]) -> set[tuple[int, int]]:
    """Pairs of node ids (smaller first) within min(R_i, R_j) of each other."""
    n = len(specs)
    if n < 2:
        return set()
    pos = np.array([[p.x, p.y] for p in positions], dtype=float)
    r = np.array([s.rf_range for s in specs], dtype=float)
    pi, pj = np.triu_indices(n, 1)
    reach = np.minimum(r[pi], r[pj])
    pairs = _pairs_within(pos, pi, pj, reach * reach)
    return {tuple(sorted((specs[i].id, specs[j].id))) for i, j in pairs}


def transfer_step(queue: list[Transfer], budget: float, now: float) -> tuple[list[Transfer], list[Transfer]]:
    """Push up to ``budget`` bytes through ``queue`` head first.

    Returns the still-pending queue (head possibly partial) and the transfers
    that completed.
    """
    done = []
    i = 0
    while i < len(queue) and budget > 0:
        tr = queue[i]
        if tr.started is None:
            tr.started = now
        step = min(tr.size - tr.moved, budget)
        tr.moved += step
        budget -= step
        if tr.moved >= tr.size:
            done.append(tr)
            i += 1
    return queue[i:], done


def generate_traffic(now: float, traffic: TrafficSpec, source: int, destination: int,
                     next_id: int, copies: int = 1, rng=None) -> list[Message]:
    """Ping-pong schedule: each endpoint emits one message to the other at every
    positive multiple of the generation interval. ``rng`` is unused; the schedule
    is deterministic."""
    n = round(now / traffic.generation_interval)
    if n < 1 or abs(now - n * traffic.generation_interval) > 1e-9 * max(1.0, now):
        return []
    return [Message(next_id + k, s, d, traffic.packet_size, now, traffic.ttl, copies)
            for k, (s, d) in enumerate(((source, destination), (destination, source)))]


@dataclass(frozen=True)
class TraceContact:
    """Synthetic contact interval, active for start <= t < end."""
    node_a: int
    node_b: int
    start: float
    end: float


@dataclass
class RunResult:
    report: MetricsReport
    log: EventLog
    contacts: list[ContactEvent]
    encounters: dict[int, int]
    steps_processed: int = 0
    delivered_ids: set[int] = field(default_factory=set)

    def __iter__(self):
        return iter((self.report, self.log))

    def static_contact_durations(self, static_ids: Iterable[int]) -> list[float]:
        ids = set(static_ids)
        return [c.duration for c in self.contacts
                if c.end is not None and ((c.node_a in ids) != (c.node_b in ids))]


class Simulation:
    def __init__(self, cfg: ScenarioConfig, trace: Optional[Sequence[TraceContact]] = None,
                 fast: bool = True):
        self.cfg = validate_scenario(cfg)
        self.dt = cfg.time_step
        self.total_steps = int(round(cfg.sim_time / cfg.time_step))
        self.fast = fast and trace is None
        self.trace = list(trace) if trace is not None else None

        self.specs = sorted(cfg.nodes, key=lambda s: s.id)
        self.ids = [s.id for s in self.specs]
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        n = len(self.specs)
        self.src = self.index[cfg.source.id]
        self.dst = self.index[cfg.destination.id]

        self.router = make_router(cfg.router, cfg.router_params)
        self.carriers: list[Carrier] = [self.router.new_carrier(s.id, s.buffer_capacity)
                                        for s in self.specs]
        self.log = EventLog()
        self.rngs = [rng_stream(cfg.seed, s.id) for s in self.specs]
        self.traffic_rng = rng_stream(cfg.seed, TRAFFIC_STREAM)

        self.states: list[Optional[MobilityState]] = [None] * n
        self.origin = np.zeros((n, 2))
        self.target = np.zeros((n, 2))
        self.leg_start = np.zeros(n)
        self.leg_arrival = np.zeros(n)
        self.pause_until = np.full(n, math.inf)
        self.vel = np.zeros((n, 2))
        for i, s in enumerate(self.specs):
            if s.is_static:
                self.origin[i] = self.target[i] = (s.position.x, s.position.y)
            else:
                self._set_state(i, initial_state(s, cfg.field, self.rngs[i]))
        self.mobile = np.array([not s.is_static for s in self.specs], dtype=bool)
        r = np.array([s.rf_range for s in self.specs], dtype=float)
        self.pi, self.pj = np.triu_indices(n, 1)
        self.reach = np.minimum(r[self.pi], r[self.pj])
        self.reach2 = self.reach * self.reach
        self.bit_rate = [s.bit_rate for s in self.specs]
        self.pos = self._positions(0.0)

        self.open: dict[tuple[int, int], ContactEvent] = {}
        self.closed: list[ContactEvent] = []
        self.inflight: dict[tuple[int, int], Transfer] = {}
        self.records: list[TransferRecord] = []
        self.expiry: list[tuple[float, int]] = []
        self.next_msg_id = 0
        self.encounters = {cfg.source.id: 0, cfg.destination.id: 0}
        self.now = 0.0
        self.steps_processed = 0

    # -- mobility -------------------------------------------------------
    def _set_state(self, i: int, st: MobilityState) -> None:
        self.states[i] = st
        self.origin[i] = (st.origin.x, st.origin.y)
        self.target[i] = (st.target.x, st.target.y)
        self.leg_start[i] = st.leg_start
        self.leg_arrival[i] = st.leg_arrival
        self.pause_until[i] = st.pause_until
        dur = st.leg_arrival - st.leg_start
        if dur > 0:
            self.vel[i] = ((st.target.x - st.origin.x) / dur, (st.target.y - st.origin.y) / dur)
        else:
            self.vel[i] = 0.0

    def _positions(self, t: float) -> np.ndarray:
        # same arithmetic as mobility.position_at, vectorised
        dur = self.leg_arrival - self.leg_start
        arrived = (t >= self.leg_arrival) | (dur <= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(arrived, 1.0, (t - self.leg_start) / np.where(dur > 0, dur, 1.0))
        moving = self.origin + (self.target - self.origin) * frac[:, None]
        return np.where(arrived[:, None], self.target, moving)

    def _move(self, t: float) -> None:
        for i in np.nonzero(t >= self.pause_until)[0]:
            self._set_state(i, advance(self.states[i], t, self.specs[i], self.cfg.field, self.rngs[i]))
        self.pos = self._positions(t)

    # -- contacts -------------------------------------------------------
    def _current_pairs(self, t: float) -> set[tuple[int, int]]:
        if self.trace is not None:
            pairs = set()
            for c in self.trace:
                if c.start <= t < c.end:
                    i, j = sorted((self.index[c.node_a], self.index[c.node_b]))
                    pairs.add((i, j))
            return pairs
        return set(_pairs_within(self.pos, self.pi, self.pj, self.reach2))

    def _abort(self, key: tuple[int, int], t: float) -> None:
        tr = self.inflight.pop(key, None)
        if tr is None:
            return
        self.records.append(TransferRecord(tr.msg_id, self.ids[tr.sender], self.ids[tr.receiver],
                                           tr.started, None, True, tr.moved))
        self.log.append(t, TRANSFER_ABORTED, tr.msg_id, self.ids[tr.sender], self.ids[tr.receiver],
                        int(tr.moved))

    def _update_contacts(self, t: float) -> None:
        pairs = self._current_pairs(t)
        for key in sorted(self.open.keys() - pairs):
            ev = self.open.pop(key)
            ev.end = t
            self.closed.append(ev)
            self.log.append(t, CONTACT_DOWN, None, ev.node_a, ev.node_b)
            i, j = key
            self._abort((i, j), t)
            self._abort((j, i), t)
        for key in sorted(pairs - self.open.keys()):
            i, j = key
            ev = ContactEvent(self.ids[i], self.ids[j], t)
            self.open[key] = ev
            self.log.append(t, CONTACT_UP, None, ev.node_a, ev.node_b)
            self.router.on_contact_up(self.carriers[i], self.carriers[j], t)
            for a, b in ((i, j), (j, i)):
                if a in (self.src, self.dst) and self.mobile[b]:
                    self.encounters[self.ids[a]] += 1

    # -- transfers ------------------------------------------------------
    def _queue(self, s: int, r: int, t: float) -> list[Transfer]:
        sender, receiver = self.carriers[s], self.carriers[r]
        known = receiver.known_ids()
        queue = []
        cur = self.inflight.get((s, r))
        if cur is not None:
            if cur.msg_id in sender.buffer and cur.msg_id not in known:
                queue.append(cur)
            else:
                self._abort((s, r), t)
                cur = None
        for m in self.router.plan(sender, receiver, t):
            if cur is None or m.id != cur.msg_id:
                queue.append(Transfer(m.id, s, r, m.size))
        return queue

    def _transfer(self, t: float) -> tuple[bool, list[Transfer]]:
        queues = {}
        for i, j in sorted(self.open):
            for key in ((i, j), (j, i)):
                q = self._queue(key[0], key[1], t)
                if q:
                    queues[key] = q
        active: dict[int, int] = {}
        for s, _ in queues:
            active[s] = active.get(s, 0) + 1
        completed = []
        for key, q in queues.items():
            share = self.bit_rate[key[0]] * self.dt / active[key[0]]
            pending, done = transfer_step(q, share, t)
            completed.extend(done)
            if pending and pending[0].moved > 0:
                self.inflight[key] = pending[0]
            else:
                self.inflight.pop(key, None)
        return bool(queues), completed

    def _complete(self, tr: Transfer, t: float) -> None:
        sender, receiver = self.carriers[tr.sender], self.carriers[tr.receiver]
        replica = self.router.hand_over(sender, receiver, tr.msg_id)
        if replica is None:
            self.records.append(TransferRecord(tr.msg_id, sender.id, receiver.id, tr.started, None,
                                               True, tr.moved))
            self.log.append(t, TRANSFER_ABORTED, tr.msg_id, sender.id, receiver.id, int(tr.moved))
            return
        self.records.append(TransferRecord(tr.msg_id, sender.id, receiver.id, tr.started, t,
                                           False, tr.size))
        self.log.append(t, RELAYED, tr.msg_id, sender.id, receiver.id, replica.hops)
        if receiver.id == replica.dst:
            first = tr.msg_id not in receiver.delivered
            receiver.delivered.add(tr.msg_id)
            self.log.append(t, DELIVERED, tr.msg_id, sender.id, receiver.id,
                            "first" if first else "duplicate")
            sender.buffer.remove(tr.msg_id)
            sender.delivered.add(tr.msg_id)
            return
        if tr.msg_id in receiver.buffer or tr.msg_id in receiver.delivered:
            return
        for d in buffer_insert(receiver.buffer, replica, t):
            self.log.append(t, DROPPED_BUFFER, d.id, receiver.id)

    # -- traffic & expiry -----------------------------------------------
    def _generate(self, t: float) -> bool:
        msgs = generate_traffic(t, self.cfg.traffic, self.ids[self.src], self.ids[self.dst],
                                self.next_msg_id, self.router.initial_copies(), self.traffic_rng)
        for m in msgs:
            self.next_msg_id = max(self.next_msg_id, m.id + 1)
            self.log.append(t, CREATED, m.id, m.src, m.dst)
            heapq.heappush(self.expiry, (m.expires_at, m.id))
            for d in buffer_insert(self.carriers[self.index[m.src]].buffer, m, t):
                self.log.append(t, DROPPED_BUFFER, d.id, m.src)
        return bool(msgs)

    def _expire(self, t: float) -> None:
        if not self.expiry or self.expiry[0][0] >= t:
            return
        while self.expiry and self.expiry[0][0] < t:
            heapq.heappop(self.expiry)
        for c in self.carriers:
            for m in expire_ttl(c.buffer, t):
                self.log.append(t, DROPPED_TTL, m.id, c.id)

    # -- stepping -------------------------------------------------------
    def clock(self, k: int) -> float:
        return round(k * self.dt, 9)

    def process_step(self, k: int) -> bool:
        """Run step ``k``; True when the step left nothing pending."""
        t = self.clock(k)
        self.now = t
        self.steps_processed += 1
        if self.trace is None:
            self._move(t)
        self._expire(t)
        self._update_contacts(t)
        busy, completed = self._transfer(t)
        for tr in completed:
            self._complete(tr, t)
        created = self._generate(t)
        return not (busy or created or self.inflight)

    def _first_step_at(self, time: float, strict: bool = False) -> int:
        """Smallest k with clock(k) >= time (> time when ``strict``)."""
        if time == math.inf:
            return self.total_steps
        k = max(0, math.ceil(time / self.dt) - 1)
        reached = (lambda c: c > time) if strict else (lambda c: c >= time)
        while k > 0 and reached(self.clock(k - 1)):
            k -= 1
        while not reached(self.clock(k)):
            k += 1
        return k

    def _crossing_horizon(self, t: float, moving: np.ndarray) -> float:
        """Seconds until some pair crosses its range boundary, assuming every
        node keeps its current velocity (true until the next leg event)."""
        pi, pj = self.pi, self.pj
        vx = np.where(moving, self.vel[:, 0], 0.0)
        vy = np.where(moving, self.vel[:, 1], 0.0)
        wx, wy = vx[pi] - vx[pj], vy[pi] - vy[pj]
        a = wx * wx + wy * wy
        if not a.any():
            return math.inf
        x, y = self.pos[:, 0], self.pos[:, 1]
        px, py = x[pi] - x[pj], y[pi] - y[pj]
        d2 = px * px + py * py
        inside = d2 <= self.reach2
        bound = np.where(inside, self.reach - _GAP_SLACK, self.reach + _GAP_SLACK)
        c = d2 - bound * bound
        live = a > 0
        if np.any(live & (inside == (c >= 0))):
            return 0.0
        b = 2.0 * (px * wx + py * wy)
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        leaving = live & inside
        entering = live & ~inside & (b < 0) & (disc >= 0)
        out = np.full(a.shape, np.inf)
        np.divide(-2.0 * c, b + root, out=out, where=leaving)
        np.divide(2.0 * c, root - b, out=out, where=entering)
        return float(out.min())

    def _next_step(self, k: int) -> int:
        """Earliest step after ``k`` at which anything could happen."""
        nxt = self.total_steps
        t = self.clock(k)
        interval = self.cfg.traffic.generation_interval
        next_gen = (math.floor(t / interval + 1e-9) + 1) * interval
        nxt = min(nxt, self._first_step_at(next_gen - 1e-9 * max(1.0, next_gen)))
        if self.expiry:
            nxt = min(nxt, self._first_step_at(self.expiry[0][0], strict=True))
        for i, j in self.open:
            for s, r in ((i, j), (j, i)):
                until = self.router.stable_until(self.carriers[s], self.carriers[r], t)
                if until < math.inf:
                    nxt = min(nxt, self._first_step_at(until - 1e-9))
        if self.mobile.any():
            moving = t < self.leg_arrival
            change = np.where(moving, self.leg_arrival, self.pause_until)[self.mobile].min()
            nxt = min(nxt, self._first_step_at(float(change)))
            crossing = self._crossing_horizon(t, moving)
            if crossing < math.inf:
                nxt = min(nxt, k + int(crossing / self.dt))
        return max(nxt, k + 1)

    def run(self) -> RunResult:
        k = 1
        while k <= self.total_steps:
            quiet = self.process_step(k)
            k = self._next_step(k) if (quiet and self.fast) else k + 1
        contacts = sorted(self.closed + list(self.open.values()), key=lambda c: (c.start, c.node_a, c.node_b))
        delivered = {e[2] for e in self.log if e[1] == DELIVERED}
        return RunResult(compute_metrics(self.log), self.log, contacts, dict(self.encounters),
                         self.steps_processed, delivered)


def run(cfg: ScenarioConfig, trace: Optional[Sequence[TraceContact]] = None, fast: bool = True) -> RunResult:
    return Simulation(cfg, trace=trace, fast=fast).run()
