import math

import pytest
from hypothesis import given, strategies as st

from oppnet.routing import (Buffer, Carrier, FORWARD_FINAL, HOLD, Message, PredictabilityTable,
                            SprayAndWaitRouter, buffer_insert, copies_in_network, epidemic_plan,
                            expire_ttl, make_router, prophet_age, prophet_encounter, prophet_plan,
                            prophet_transitive, prophet_update_direct, snw_on_contact)
from oppnet.scenario import RouterParams

KIB = 1024


def msg(i, created=0.0, ttl=200.0, dst=1, size=KIB, copies=1):
    return Message(i, 0, dst, size, created, ttl, copies)


def test_insert_fits():
    buf = Buffer(512 * KIB)
    assert buffer_insert(buf, msg(0), 0) == []
    assert buf.occupancy == KIB


def test_insert_evicts_oldest_when_full():
    buf = Buffer(512 * KIB)
    for i in range(512):
        assert buffer_insert(buf, msg(i), 0) == []
    dropped = buffer_insert(buf, msg(512), 0)
    assert [m.id for m in dropped] == [0]
    assert 512 in buf and 0 not in buf and buf.occupancy == 512 * KIB


def test_insert_rejects_oversize_duplicate_and_expired():
    buf = Buffer(KIB)
    big = msg(0, size=2 * KIB)
    assert buffer_insert(buf, big, 0) == [big] and len(buf) == 0
    buffer_insert(buf, msg(1), 0)
    with pytest.raises(KeyError):
        buffer_insert(buf, msg(1), 0)
    with pytest.raises(ValueError):
        buffer_insert(Buffer(KIB), msg(2, ttl=5), 10)


def test_expire_boundaries():
    buf = Buffer(10 * KIB)
    buffer_insert(buf, msg(0, created=0, ttl=200), 0)
    assert expire_ttl(buf, 199) == [] and expire_ttl(buf, 200) == []
    assert [m.id for m in expire_ttl(buf, 201)] == [0]
    assert expire_ttl(buf, 300) == []


def test_epidemic_plan_order_and_convergence():
    buf = Buffer(10 * KIB)
    for i, t in ((5, 3.0), (6, 1.0), (7, 2.0)):
        buffer_insert(buf, msg(i, created=t), t)
    assert [m.id for m in epidemic_plan(buf, set())] == [6, 7, 5]
    assert epidemic_plan(buf, {5, 6, 7}) == []


@given(st.sets(st.integers(0, 30), max_size=10), st.sets(st.integers(31, 60), max_size=10))
def test_epidemic_exchange_yields_union(a_ids, b_ids):
    a, b = Buffer(100 * KIB), Buffer(100 * KIB)
    for i in a_ids:
        buffer_insert(a, msg(i), 0)
    for i in b_ids:
        buffer_insert(b, msg(i), 0)
    to_b, to_a = epidemic_plan(a, b.ids()), epidemic_plan(b, a.ids())
    for m in to_b:
        buffer_insert(b, Message(m.id, m.src, m.dst, m.size, m.created_at, m.ttl), 0)
    for m in to_a:
        buffer_insert(a, Message(m.id, m.src, m.dst, m.size, m.created_at, m.ttl), 0)
    assert a.ids() == b.ids() == a_ids | b_ids


def test_snw_actions():
    act = snw_on_contact(msg(0, copies=6), False)
    assert (act.kind, act.kept, act.given) == ("forward_half", 3, 3)
    assert snw_on_contact(msg(0, copies=1), False) is HOLD
    assert snw_on_contact(msg(0, copies=1), True) is FORWARD_FINAL
    act = snw_on_contact(msg(0, copies=5), False)
    assert (act.kept, act.given) == (3, 2)


@given(st.integers(1, 10_000))
def test_snw_split_conserves(copies):
    act = snw_on_contact(msg(0, copies=copies), False)
    if copies == 1:
        assert act is HOLD
    else:
        assert act.kept + act.given == copies and act.kept >= 1 and act.given >= 1


def test_snw_hand_over_mutates_sender():
    router = SprayAndWaitRouter(RouterParams())
    a, b = router.new_carrier(2, 10 * KIB), router.new_carrier(3, 10 * KIB)
    buffer_insert(a.buffer, msg(0, copies=6), 0)
    replica = router.hand_over(a, b, 0)
    assert replica.copies == 3 and a.buffer.get(0).copies == 3 and replica.hops == 1
    buffer_insert(b.buffer, replica, 0)
    assert copies_in_network([a, b], 0) == 6
    a.buffer.get(0).copies = 1
    assert router.hand_over(a, b, 0) is None
    assert router.plan(a, router.new_carrier(4, KIB), 0) == []


def test_prophet_formulas():
    assert prophet_update_direct(0.0, 0.75) == 0.75
    assert prophet_update_direct(0.75, 0.75) == 0.9375
    assert prophet_update_direct(1.0, 0.75) == 1.0
    assert prophet_age(0.75, 0.98, 10) == pytest.approx(0.75 * 0.98**10, abs=1e-12)
    assert prophet_age(0.75, 0.98, 0) == 0.75
    assert prophet_age(0.75, 0.98, 1e6) == pytest.approx(0.0, abs=1e-300)
    assert prophet_transitive(0.0, 0.75, 0.75, 0.25) == 0.140625
    assert prophet_transitive(0.3, 0.0, 0.9, 0.25) == 0.3
    assert prophet_transitive(1.0, 0.5, 0.5, 0.25) == 1.0


@pytest.mark.parametrize("call", [
    lambda: prophet_update_direct(1.2, 0.75),
    lambda: prophet_age(0.5, 1.0, 1),
    lambda: prophet_age(0.5, 0.98, -1),
    lambda: prophet_transitive(0.5, 0.5, -0.1, 0.25),
])
def test_prophet_range_errors(call):
    with pytest.raises(ValueError):
        call()


unit = st.floats(0, 1)


@given(unit, unit, unit, unit, st.floats(0.01, 0.99), st.floats(0, 1e4))
def test_prophet_closure(p, q, r, beta, alpha, k):
    for v in (prophet_update_direct(p, q), prophet_transitive(p, q, r, beta), prophet_age(p, alpha, k)):
        assert 0.0 <= v <= 1.0
    assert prophet_update_direct(p, q) >= p
    assert prophet_transitive(p, q, r, beta) >= p


def test_table_ages_lazily_in_whole_seconds():
    t = PredictabilityTable(0, 0.98)
    t.set(5, 0.75, 100.0)
    assert t.get(5, 100.9) == 0.75
    assert t.get(5, 110.0) == pytest.approx(0.75 * 0.98**10)
    assert t.get(5, 100.0) == 0.75  # reads never mutate
    assert t.get(0, 500.0) == 1.0 and t.get(9, 0.0) == 0.0
    assert t.next_change(5, 100.5) == 101.0 and t.next_change(9, 0) == math.inf


def test_encounter_direct_then_transitive():
    a, b = PredictabilityTable(1, 0.98), PredictabilityTable(2, 0.98)
    b.set(3, 0.75, 0.0)
    prophet_encounter(a, b, 0.0, 0.75, 0.25)
    assert a.get(2, 0.0) == 0.75 and b.get(1, 0.0) == 0.75
    assert a.get(3, 0.0) == pytest.approx(0.140625)
    assert 3 not in PredictabilityTable(9, 0.98)


def test_prophet_plan_strict_dominance():
    mine, theirs = PredictabilityTable(1, 0.98), PredictabilityTable(2, 0.98)
    buf = Buffer(10 * KIB)
    buffer_insert(buf, msg(0, dst=7), 0)
    buffer_insert(buf, msg(1, dst=8), 0)
    theirs.set(7, 0.75, 0.0)
    assert [m.id for m in prophet_plan(mine, theirs, buf, set(), 0.0)] == [0]
    mine.set(7, 0.75, 0.0)
    assert prophet_plan(mine, theirs, buf, set(), 0.0) == []
    mine.set(7, 0.1, 0.0)
    assert prophet_plan(mine, theirs, buf, {0}, 0.0) == []


def test_prophet_plan_orders_by_peer_predictability():
    mine, theirs = PredictabilityTable(1, 0.98), PredictabilityTable(2, 0.98)
    buf = Buffer(10 * KIB)
    for i, d in enumerate((7, 8, 7)):
        buffer_insert(buf, msg(i, dst=d, created=float(i)), 0)
    theirs.set(7, 0.3, 0.0)
    theirs.set(8, 0.9, 0.0)
    assert [m.id for m in prophet_plan(mine, theirs, buf, set(), 0.0)] == [1, 0, 2]


def test_make_router():
    assert make_router("prophet", RouterParams()).new_carrier(1, KIB).table is not None
    with pytest.raises(ValueError):
        make_router("flood", RouterParams())


def test_carrier_known_ids():
    c = Carrier(1, Buffer(KIB), delivered={4})
    buffer_insert(c.buffer, msg(2), 0)
    assert c.known_ids() == {2, 4}
