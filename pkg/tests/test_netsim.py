"""Packet-level mechanics: serialisation, drop-tail, slow start, recovery, RTT stats."""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from stepnet.kernel import FLOW_START, Kernel, RngStream
from stepnet.netsim import (
    ACK_BYTES,
    BottleneckQueue,
    FifoLink,
    FlowTransport,
    INITIAL_RTO_NS,
    MIN_RTO_NS,
    Receiver,
    RL_CONTROLLED,
    RTT_WINDOW_NS,
    SLOW_START,
)

# 100 Mbps / 35 ms reference geometry, all values exact in nanoseconds
BW = 100e6
SER_DATA = 120_000
SER_ACK = 3_200
ONE_WAY = 17_500_000
D_MIN = SER_DATA + SER_ACK + 2 * ONE_WAY  # 35_123_200
PIPE_PKTS = D_MIN / SER_DATA  # 292.69...


def build_flow(
    bw_mbps=100.0,
    rtt_ms=35.0,
    buffer_pkts=440,
    size=None,
    ssthresh=64.0,
    initial_cwnd=1.0,
):
    kernel = Kernel(0)
    bw = bw_mbps * 1e6
    one_way = round(rtt_ms * 1e6 / 2)
    queue = BottleneckQueue(bw, one_way, buffer_pkts)
    ack_link = FifoLink(bw, one_way, ACK_BYTES)
    receiver = Receiver(kernel, ack_link, "f.snd")
    transport = FlowTransport(kernel, queue, "flow0", size, initial_cwnd, ssthresh, "f.rcv", "f.tmr")
    kernel.register_component("f.rcv", receiver.on_data)
    kernel.register_component(
        "f.snd", lambda e: transport.start(e) if e.kind == FLOW_START else transport.on_ack(e)
    )
    kernel.register_component("f.tmr", transport.on_timer)
    kernel.register_component("halt", lambda e: None)
    kernel.schedule(0, "f.snd", FLOW_START)
    return kernel, transport, receiver, queue


def run_until_time(kernel, t_ns):
    kernel.schedule(t_ns, "halt", "HALT")
    kernel.run_until(lambda e: e.kind == "HALT")


def drain(kernel):
    kernel.run_until(lambda e: False)


class TestLinks:
    def test_serialisation_times_are_exact(self):
        queue = BottleneckQueue(BW, ONE_WAY, 10)
        ack = FifoLink(BW, ONE_WAY, ACK_BYTES)
        assert queue.ser_ns == SER_DATA
        assert ack.ser_ns == SER_ACK

    def test_idle_link_delivers_after_serialisation_plus_propagation(self):
        link = FifoLink(BW, ONE_WAY, ACK_BYTES)
        assert link.transmit(1000) == 1000 + SER_ACK + ONE_WAY

    def test_busy_link_queues_fifo(self):
        link = FifoLink(BW, ONE_WAY, ACK_BYTES)
        first = link.transmit(0)
        second = link.transmit(0)
        assert first == SER_ACK + ONE_WAY
        assert second == 2 * SER_ACK + ONE_WAY


class TestDropTail:
    def test_occupancy_counts_waiting_packets_only(self):
        queue = BottleneckQueue(BW, ONE_WAY, 10)
        queue.offer(0)  # enters service immediately
        assert queue.occupancy(0) == 0
        queue.offer(0)  # must wait behind the first
        assert queue.occupancy(0) == 1
        assert queue.occupancy(SER_DATA) == 0  # second entered service

    def test_drop_exactly_at_capacity(self):
        queue = BottleneckQueue(BW, ONE_WAY, 3)
        results = [queue.offer(0) for _ in range(5)]
        # one in service + three waiting fit; the fifth is dropped
        assert all(r is not None for r in results[:4])
        assert results[4] is None
        assert queue.drops == 1
        assert queue.accepted == 4
        assert queue.occupancy(0) == 3

    def test_accepting_into_last_slot(self):
        queue = BottleneckQueue(BW, ONE_WAY, 440)
        for _ in range(440):
            queue.offer(0)
        assert queue.occupancy(0) == 439
        assert queue.offer(0) is not None  # 440th waiter fills the buffer
        assert queue.occupancy(0) == 440
        assert queue.offer(0) is None
        assert queue.drops == 1

    def test_waiting_time_accounting(self):
        queue = BottleneckQueue(BW, ONE_WAY, 10)
        queue.offer(0)
        queue.offer(0)
        queue.offer(0)
        # waits: 0, ser, 2*ser
        assert queue.total_wait_ns == 3 * SER_DATA
        assert queue.accepted == 3


class TestRttTracking:
    def test_first_rtt_sample_is_exact(self):
        kernel, transport, receiver, queue = build_flow(size=1)
        drain(kernel)
        assert transport.complete
        assert transport.srtt == float(D_MIN)
        assert transport.d_min == D_MIN
        assert transport.d_max == D_MIN

    def test_ewma_gain_is_one_eighth(self):
        kernel, transport, *_ = build_flow()
        transport._rtt_sample(0, 100)
        assert transport.srtt == 100.0
        transport._rtt_sample(1, 200)
        assert transport.srtt == 112.5
        transport._rtt_sample(2, 80)
        assert transport.srtt == 112.5 + (80 - 112.5) / 8

    def test_windowed_minimum_matches_brute_force(self):
        kernel, transport, *_ = build_flow()
        rng = RngStream(9, "rtt")
        samples: list[tuple[int, int]] = []
        t = 0
        for _ in range(2000):
            t += rng.randrange(100_000_000)  # up to 0.1 s apart
            rtt = 1_000_000 + rng.randrange(50_000_000)
            transport._rtt_sample(t, rtt)
            samples.append((t, rtt))
            horizon = t - RTT_WINDOW_NS
            expected = min(r for ts, r in samples if ts >= horizon)
            assert transport.windowed_d_min(t) == float(expected)

    def test_windowed_minimum_forgets_old_samples(self):
        kernel, transport, *_ = build_flow()
        transport._rtt_sample(0, 50)
        transport._rtt_sample(1_000, 90)
        assert transport.windowed_d_min(1_000) == 50.0
        assert transport.windowed_d_min(RTT_WINDOW_NS + 500) == 90.0
        # everything expired: falls back to the all-time minimum
        assert transport.windowed_d_min(3 * RTT_WINDOW_NS) == 50.0


class TestSlowStart:
    def test_cwnd_doubles_every_round_until_ssthresh(self):
        kernel, transport, receiver, queue = build_flow(ssthresh=64.0)
        handovers = []
        transport.on_rl_handover = handovers.append
        run_until_time(kernel, 3_000_000_000)
        assert transport.phase == RL_CONTROLLED
        cwnds = [c for _, c in transport.rounds]
        assert cwnds[:7] == [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        assert transport.cwnd == 64.0  # threshold exit keeps the window
        assert queue.drops == 0
        assert len(handovers) == 1

    def test_threshold_exit_happens_exactly_once(self):
        kernel, transport, receiver, queue = build_flow(ssthresh=8.0)
        handovers = []
        transport.on_rl_handover = handovers.append
        run_until_time(kernel, 2_000_000_000)
        assert len(handovers) == 1
        assert transport.phase == RL_CONTROLLED

    def test_loss_exit_halves_window(self):
        kernel, transport, *_ = build_flow()
        transport.phase = SLOW_START
        transport.cwnd = 100.0
        transport._end_slow_start(0, via_loss=True)
        assert transport.cwnd == 50.0
        assert transport.phase == RL_CONTROLLED
        transport.cwnd = 80.0
        transport._end_slow_start(0, via_loss=True)  # second exit must not re-fire
        assert transport.cwnd == 80.0

    def test_loss_exit_never_goes_below_one_packet(self):
        kernel, transport, *_ = build_flow()
        transport.cwnd = 1.0
        transport._end_slow_start(0, via_loss=True)
        assert transport.cwnd == 1.0

    def test_overshoot_exits_via_loss_with_halved_window(self):
        kernel, transport, receiver, queue = build_flow(buffer_pkts=60, ssthresh=1e9)
        seen = []
        transport.on_rl_handover = lambda now: seen.append(transport.cwnd)
        run_until_time(kernel, 5_000_000_000)
        assert transport.phase == RL_CONTROLLED
        assert queue.drops >= 1
        assert transport.lost_total == queue.drops
        assert len(seen) == 1
        # nothing drives the window after handover, so it holds the halved value
        assert transport.cwnd == seen[0]
        last_round_cwnd = transport.rounds[-1][1]
        assert 1.0 <= seen[0] <= last_round_cwnd

    def test_no_drops_until_inflight_fills_pipe_and_buffer(self):
        # with the buffer at least pipe-sized the queue only builds once the
        # wire is full, so the first drop needs in-flight > BDP + buffer
        buffer_pkts = 440
        kernel, transport, receiver, queue = build_flow(buffer_pkts=buffer_pkts, ssthresh=1e9)
        kernel.schedule(30_000_000_000, "halt", "HALT")
        kernel.run_until(lambda e: queue.drops > 0 or e.kind == "HALT")
        assert queue.drops > 0, "slow start must eventually overrun the buffer"
        assert transport.outstanding() >= PIPE_PKTS + buffer_pkts - 2

    def test_cumulative_jump_counts_as_one_advancing_ack(self):
        kernel, transport, *_ = build_flow(initial_cwnd=3.0, ssthresh=100.0)
        run_until_time(kernel, 1)  # fire FLOW_START only
        assert transport.snd_nxt == 3
        transport.on_ack(SimpleNamespace(timestamp=D_MIN, payload=(3, 0)))
        assert transport.cwnd == 4.0  # +1 despite three packets acked at once


class TestRecovery:
    def test_rto_interval_rule(self):
        kernel, transport, *_ = build_flow()
        # without a sample the timer must not undercut any plausible RTT
        assert transport._rto_interval() == INITIAL_RTO_NS
        transport.srtt = 2e6  # 2 ms smoothed; the 10 ms floor wins
        assert transport._rto_interval() == MIN_RTO_NS
        transport.srtt = 30e6
        assert transport._rto_interval() == 60_000_000

    def test_three_duplicate_acks_resend_the_head_then_pace_the_replay(self):
        kernel, transport, receiver, queue = build_flow(initial_cwnd=5.0, ssthresh=3.0)
        run_until_time(kernel, 1)
        transport.phase = RL_CONTROLLED  # keep the window fixed for the check
        sent_before = transport.sent_copies
        for _ in range(2):
            transport.on_ack(SimpleNamespace(timestamp=100, payload=(0, 0)))
        assert transport.sent_copies == sent_before
        transport.on_ack(SimpleNamespace(timestamp=101, payload=(0, 0)))
        assert transport.sent_copies == sent_before + 1
        # resent copies were accepted by the queue, so no losses were recorded
        assert transport.lost_total == 0
        # duplicates inside the drain gate must not add traffic
        for _ in range(3):
            transport.on_ack(SimpleNamespace(timestamp=102, payload=(0, 0)))
        assert transport.sent_copies == sent_before + 1
        # past the gate each duplicate replays one hole, up to the loss point
        for _ in range(6):
            transport.on_ack(SimpleNamespace(timestamp=30_000_000, payload=(0, 0)))
        assert transport.sent_copies == sent_before + 5

    def test_timeout_resends_outstanding_window(self):
        kernel, transport, receiver, queue = build_flow(initial_cwnd=8.0, ssthresh=4.0)
        run_until_time(kernel, 1)
        transport.phase = RL_CONTROLLED
        assert transport.outstanding() == 8
        sent_before = transport.sent_copies
        transport._loss_event(5_000_000, timeout=True)
        assert transport.sent_copies == sent_before + 8
        assert transport.lost_total == 0

    def test_lossy_path_still_completes_and_conserves_packets(self):
        kernel, transport, receiver, queue = build_flow(buffer_pkts=30, ssthresh=1e9, size=3000)
        drain(kernel)
        assert transport.complete
        assert transport.snd_una == 3000
        assert receiver.next_expected == 3000
        assert queue.drops > 0
        # every copy ever sent either reached the receiver or died in the queue
        assert transport.sent_copies == receiver.delivered + queue.drops

    def test_clean_path_conservation_without_retransmissions(self):
        kernel, transport, receiver, queue = build_flow(size=500)
        drain(kernel)
        assert transport.complete
        assert queue.drops == 0
        assert transport.sent_copies == 500
        assert receiver.delivered == 500


class TestWindowControl:
    def test_below_one_clamps_and_counts(self):
        kernel, transport, *_ = build_flow()
        run_until_time(kernel, 1)
        transport.set_cwnd(0.25)
        assert transport.cwnd == 1.0
        assert transport.below_one_clamps == 1
        transport.set_cwnd(7.5)
        assert transport.cwnd == 7.5
        assert transport.below_one_clamps == 1

    def test_growing_window_pumps_new_packets(self):
        kernel, transport, receiver, queue = build_flow(initial_cwnd=2.0, ssthresh=1e9)
        run_until_time(kernel, 1)
        assert transport.snd_nxt == 2
        transport.set_cwnd(6.0)
        assert transport.snd_nxt == 6

    def test_fractional_windows_floor_but_never_stall(self):
        kernel, transport, *_ = build_flow()
        transport.cwnd = 1.7
        assert transport.window_pkts() == 1
        transport.cwnd = 0.0  # direct poke below the clamp still sends one
        assert transport.window_pkts() == 1


class TestBoundedFlows:
    def test_completion_time_of_tiny_flow_is_exact(self):
        # one packet: serialisation + propagation out, ack serialisation + back
        kernel, transport, receiver, queue = build_flow(size=1)
        drain(kernel)
        assert transport.completed_at == D_MIN
        assert transport.complete

    def test_flow_stops_sending_at_its_size(self):
        kernel, transport, receiver, queue = build_flow(size=10, initial_cwnd=64.0, ssthresh=128.0)
        drain(kernel)
        assert transport.snd_nxt == 10
        assert transport.sent_copies == 10
