"""Overlap classification, rescheduling rules, and the event-driven run loop."""

import pytest

from rtcsim.channel import RadioConfig, default_three_log_distance, rss_dbm
from rtcsim.errors import SchedulingError, ValidationError
from rtcsim.mac import (KeyedBackoffRng, MacParams, Outcome, OverlapState,
                        Packet, PdMode, apply_backoff, classify, init_queue,
                        reschedule_after_aifs, resolve_transmission, run)
from rtcsim.scenario import (MobilityTrace, Scenario, Topology, TopologySpec,
                             Waypoint, generate_topology)

MODEL = default_three_log_distance()
RADIO = RadioConfig()
PARAMS = MacParams()


def pkt(vid, sched, gen=None, pos=(0.0, 0.0), seq=0):
    gen = sched if gen is None else gen
    return Packet(vehicle_id=vid, seq=seq, gen_time_s=gen, sched_time_s=sched,
                  duration_s=PARAMS.tx_interval_s, tx_position=pos)


def static_scenario(positions, phases, duration_s=1.0, seed=0, rate=10.0):
    """HV at origin plus one static RV per (position, phase) pair."""
    def trace(vid, pos, phase):
        wps = (Waypoint(0.0, pos[0], pos[1], 0.0, 0.0),
               Waypoint(duration_s, pos[0], pos[1], 0.0, 0.0))
        return MobilityTrace(vid, wps, rate, phase)

    hv = trace(0, (0.0, 0.0), phases[0])
    rvs = tuple(trace(i + 1, p, ph)
                for i, (p, ph) in enumerate(zip(positions[1:], phases[1:])))
    return Scenario(hv_trace=hv, rv_traces=rvs, duration_s=duration_s, seed=seed)


class TestMacParams:
    def test_aifs_identity(self):
        p = MacParams(slot_time_s=13e-6, sifs_s=32e-6)
        assert p.aifs_s == 32e-6 + 2 * 13e-6

    def test_validation(self):
        with pytest.raises(ValidationError):
            MacParams(cw_min=5, cw_max=3)
        with pytest.raises(ValidationError):
            MacParams(slot_time_s=0.0)
        with pytest.raises(ValidationError):
            MacParams(pd_s=1e-3, tx_interval_s=520e-6)

    def test_per_pair_propagation_delay(self):
        p = MacParams(pd_mode=PdMode.PER_PAIR_SPEED_OF_LIGHT)
        a = pkt(1, 0.0, pos=(0.0, 0.0))
        b = pkt(2, 0.0, pos=(299.8, 0.0))
        assert p.pd_for(a, b) == pytest.approx(1e-6, rel=1e-9)


class TestClassify:
    def test_zero_diff_is_pd_collision(self):
        assert classify(pkt(1, 0.0), pkt(2, 0.0), PARAMS, hidden=False) \
            is OverlapState.COLLISION_PD

    def test_just_past_pd_is_backoff(self):
        nxt = pkt(2, PARAMS.pd_s + 1e-6)
        assert classify(pkt(1, 0.0), nxt, PARAMS, hidden=False) \
            is OverlapState.BACKOFF

    def test_hidden_mid_transmission_is_hidden_collision(self):
        nxt = pkt(2, PARAMS.tx_interval_s / 2)
        assert classify(pkt(1, 0.0), nxt, PARAMS, hidden=True) \
            is OverlapState.COLLISION_HIDDEN

    def test_hidden_takes_precedence_inside_pd(self):
        assert classify(pkt(1, 0.0), pkt(2, 0.0), PARAMS, hidden=True) \
            is OverlapState.COLLISION_HIDDEN

    def test_just_past_aifs_window_is_post_tx(self):
        nxt = pkt(2, PARAMS.tx_interval_s + PARAMS.aifs_s + 1e-6)
        assert classify(pkt(1, 0.0), nxt, PARAMS, hidden=False) \
            is OverlapState.POST_TX

    def test_boundary_partition(self):
        """Every band edge is inclusive on the documented side."""
        eps = 1e-12
        tx = PARAMS.tx_interval_s
        aifs = PARAMS.aifs_s
        table = {
            False: [
                (PARAMS.pd_s - eps, OverlapState.COLLISION_PD),
                (PARAMS.pd_s, OverlapState.COLLISION_PD),
                (PARAMS.pd_s + eps, OverlapState.BACKOFF),
                (tx - eps, OverlapState.BACKOFF),
                (tx, OverlapState.BACKOFF),
                (tx + eps, OverlapState.AIFS_WAIT),
                (tx + aifs - eps, OverlapState.AIFS_WAIT),
                (tx + aifs, OverlapState.AIFS_WAIT),
                (tx + aifs + eps, OverlapState.POST_TX),
            ],
            True: [
                (0.0, OverlapState.COLLISION_HIDDEN),
                (PARAMS.pd_s, OverlapState.COLLISION_HIDDEN),
                (PARAMS.pd_s + eps, OverlapState.COLLISION_HIDDEN),
                (tx, OverlapState.COLLISION_HIDDEN),
                (tx + eps, OverlapState.AIFS_WAIT),
                (tx + aifs, OverlapState.AIFS_WAIT),
                (tx + aifs + eps, OverlapState.POST_TX),
            ],
        }
        for hidden, cases in table.items():
            for diff, expected in cases:
                state = classify(pkt(1, 0.0), pkt(2, diff), PARAMS, hidden=hidden)
                assert state is expected, (diff, hidden, state)

    def test_negative_diff_raises(self):
        with pytest.raises(SchedulingError):
            classify(pkt(1, 1.0), pkt(2, 0.5), PARAMS, hidden=False)


class TestBackoff:
    def test_zero_counter_lands_on_first_idle_slot(self):
        rng = KeyedBackoffRng(0, 0, 0)  # degenerate window: always draws 0
        p = pkt(2, 1e-4)
        apply_backoff(p, rng, PARAMS, current_end_s=520e-6)
        assert p.sched_time_s == 520e-6 + PARAMS.aifs_s
        assert p.backoff_counter == 0

    def test_counter_fifteen_adds_fifteen_slots(self):
        p = pkt(2, 1e-4)
        p.backoff_counter = 15
        apply_backoff(p, KeyedBackoffRng(0, 0, 15), PARAMS, current_end_s=520e-6)
        # Table values: 15 slots of 13 us after the 58 us arbitration gap
        assert p.sched_time_s == pytest.approx(520e-6 + 58e-6 + 195e-6, abs=1e-15)

    def test_counter_is_consumed(self):
        p = pkt(2, 1e-4)
        p.backoff_counter = 7
        apply_backoff(p, KeyedBackoffRng(0, 0, 15), PARAMS, current_end_s=520e-6)
        assert p.backoff_counter == 0
        first = p.sched_time_s
        apply_backoff(p, KeyedBackoffRng(0, 0, 15), PARAMS, current_end_s=1e-3)
        assert p.sched_time_s == 1e-3 + PARAMS.aifs_s
        assert p.sched_time_s > first

    def test_draws_deterministic_and_in_window(self):
        rng_a = KeyedBackoffRng(99, 0, 15)
        rng_b = KeyedBackoffRng(99, 0, 15)
        draws = set()
        for vid in range(50):
            for seq in range(4):
                p = pkt(vid, 0.0, seq=seq)
                d = rng_a.draw(p)
                assert d == rng_b.draw(p)
                assert 0 <= d <= 15
                draws.add(d)
        assert len(draws) == 16  # every slot reachable

    def test_different_seed_changes_draws(self):
        p = pkt(3, 0.0)
        assert any(KeyedBackoffRng(s, 0, 15).draw(p)
                   != KeyedBackoffRng(s + 1, 0, 15).draw(p) for s in range(8))


class TestRescheduleAfterAifs:
    def test_moved_to_end_of_gap(self):
        p = pkt(2, 520e-6 + 29e-6)
        reschedule_after_aifs(p, 520e-6, PARAMS)
        assert p.sched_time_s == 520e-6 + PARAMS.aifs_s

    def test_boundary_is_a_no_op(self):
        target = 520e-6 + PARAMS.aifs_s
        p = pkt(2, target)
        reschedule_after_aifs(p, 520e-6, PARAMS)
        assert p.sched_time_s == target


class TestInitQueue:
    def test_head_is_earliest_phase(self):
        sc = static_scenario([(0, 0), (10, 0), (20, 0), (30, 0)],
                             [0.04, 0.01, 0.02, 0.03])
        heap = init_queue(sc, PARAMS)
        assert heap[0][3].vehicle_id == 1  # phase 0.01

    def test_tie_broken_by_vehicle_id(self):
        sc = static_scenario([(0, 0), (10, 0), (20, 0)], [0.05, 0.02, 0.02])
        heap = init_queue(sc, PARAMS)
        assert heap[0][3].vehicle_id == 1

    def test_one_entry_per_vehicle(self):
        sc = generate_topology(
            TopologySpec(kind=Topology.DISK, vehicle_count=100, radius_m=500.0),
            10.0, 20.0, seed=11)
        assert len(init_queue(sc, PARAMS)) == 100
        assert len(init_queue(sc, PARAMS, hv_transmits=False)) == 99


class TestResolveTransmission:
    def test_clean_transmission_decodes(self):
        current = pkt(1, 0.0, pos=(10.0, 0.0))
        ev = resolve_transmission(current, [], MODEL, RADIO, (0.0, 0.0))
        assert ev.outcome is Outcome.DECODED
        assert ev.winner is current
        assert ev.hv_distance_m == 10.0
        assert ev.end_s - ev.start_s == PARAMS.tx_interval_s

    def test_equidistant_overlap_collides(self):
        current = pkt(1, 0.0, pos=(100.0, 0.0))
        other = pkt(2, 0.0, pos=(-100.0, 0.0))
        ev = resolve_transmission(current, [other], MODEL, RADIO, (0.0, 0.0))
        assert ev.outcome is Outcome.COLLIDED
        assert ev.winner is None

    def test_near_transmitter_captures_over_far_collider(self):
        current = pkt(1, 0.0, pos=(50.0, 0.0))
        far = pkt(2, 0.0, pos=(400.0, 0.0))
        gap = (rss_dbm(RADIO, MODEL, 50.0) - rss_dbm(RADIO, MODEL, 400.0))
        assert gap >= RADIO.capture_margin_db  # premise of the example
        ev = resolve_transmission(current, [far], MODEL, RADIO, (0.0, 0.0))
        assert ev.outcome is Outcome.DECODED
        assert ev.winner is current

    def test_sole_weak_arrival_below_sensitivity(self):
        current = pkt(1, 0.0, pos=(2000.0, 0.0))
        ev = resolve_transmission(current, [], MODEL, RADIO, (0.0, 0.0))
        assert ev.outcome is Outcome.BELOW_SENSITIVITY


class TestRun:
    def test_hv_only_without_hv_traffic_is_empty(self):
        sc = static_scenario([(0.0, 0.0)], [0.0])
        events, stats = run(sc, MODEL, RADIO, PARAMS, hv_transmits=False)
        assert events == []
        assert stats.packets_generated == 0

    def test_hv_only_with_hv_traffic_transmits(self):
        sc = static_scenario([(0.0, 0.0)], [0.0], duration_s=1.0)
        events, stats = run(sc, MODEL, RADIO, PARAMS)
        assert len(events) == 10
        assert all(ev.outcome is Outcome.DECODED for ev in events)

    def test_two_vehicles_staggered_phases_never_collide(self):
        params = MacParams(tx_interval_s=440e-6)
        sc = static_scenario([(0.0, 0.0), (30.0, 0.0)], [0.0, 0.05],
                             duration_s=20.0)
        events, stats = run(sc, MODEL, RADIO, params)
        assert len(events) == 400
        assert all(ev.colliders == () for ev in events)
        assert stats.packets_collided == 0
        assert stats.packets_decoded == 400

    def test_colocated_same_phase_always_collides(self):
        sc = static_scenario([(0.0, 0.0), (5.0, 0.0), (5.0, 0.0)],
                             [0.05, 0.02, 0.02], duration_s=2.0)
        events, stats = run(sc, MODEL, RADIO, PARAMS, hv_transmits=False)
        assert len(events) == 20
        assert all(ev.outcome is Outcome.COLLIDED for ev in events)
        assert all(len(ev.colliders) == 1 for ev in events)

    def test_chained_aifs_reschedules_collide_on_the_shared_slot(self):
        # two packets inside the post-transmission gap both move to its end,
        # then the later-inserted one collides with the first at zero diff
        tx = PARAMS.tx_interval_s
        base = 0.01
        sc = static_scenario(
            [(0.0, 0.0), (10.0, 0.0), (-10.0, 0.0), (30.0, 0.0)],
            [base, base + tx + 10e-6, base + tx + 20e-6, 0.09],
            duration_s=0.1, seed=3)
        events, stats = run(sc, MODEL, RADIO, PARAMS, hv_transmits=True)
        second = events[1]
        assert second.start_s == pytest.approx(base + tx + PARAMS.aifs_s, abs=1e-12)
        assert len(second.colliders) == 1
        assert second.outcome is Outcome.COLLIDED  # near-equal signal levels

    def test_backoff_defers_past_busy_transmission(self):
        sc = static_scenario([(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)],
                             [0.01, 0.0101, 0.09], duration_s=0.1, seed=9)
        events, _ = run(sc, MODEL, RADIO, PARAMS, hv_transmits=True)
        first, second = events[0], events[1]
        assert first.start_s == 0.01
        counter = KeyedBackoffRng(9, 0, 15).draw(
            Packet(1, 0, 0.0101, 0.0101, 0, (10.0, 0.0)))
        assert counter > 0  # exercise the slot term, not just the gap
        expected = first.end_s + PARAMS.aifs_s + counter * PARAMS.slot_time_s
        assert second.start_s == pytest.approx(expected, abs=1e-15)

    def test_event_log_time_ordered_with_aifs_gaps(self):
        sc = generate_topology(
            TopologySpec(kind=Topology.DISK, vehicle_count=60, radius_m=400.0),
            10.0, 5.0, seed=17)
        events, stats = run(sc, MODEL, RADIO, PARAMS)  # invariants checked inside
        assert stats.conservation_holds()
        for a, b in zip(events, events[1:]):
            assert b.start_s - a.end_s >= PARAMS.aifs_s - 1e-12

    def test_monotone_rescheduling_and_conservation_at_saturation(self):
        sc = generate_topology(
            TopologySpec(kind=Topology.DISK, vehicle_count=300, radius_m=500.0),
            10.0, 2.0, seed=23)
        events, stats = run(sc, MODEL, RADIO, PARAMS)
        assert stats.conservation_holds()
        for ev in events:
            assert ev.transmitter.sched_time_s >= ev.transmitter.gen_time_s
            for c in ev.colliders:
                assert c.sched_time_s >= c.gen_time_s

    def test_determinism_same_seed(self):
        spec = TopologySpec(kind=Topology.DISK, vehicle_count=50, radius_m=500.0)
        sc = generate_topology(spec, 10.0, 5.0, seed=99)
        a, _ = run(sc, MODEL, RADIO, PARAMS)
        b, _ = run(sc, MODEL, RADIO, PARAMS)
        assert [(e.start_s, e.transmitter_id, e.outcome) for e in a] == \
            [(e.start_s, e.transmitter_id, e.outcome) for e in b]

    def test_expired_packets_counted(self):
        # the second vehicle senses the first and defers, but its backoff
        # slot lies past the horizon: the packet is dropped as expired
        sc = static_scenario([(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)],
                             [0.05, 0.0996, 0.0998], duration_s=0.1, seed=1)
        events, stats = run(sc, MODEL, RADIO, PARAMS, hv_transmits=False)
        assert stats.packets_expired == 1
        assert stats.conservation_holds()
