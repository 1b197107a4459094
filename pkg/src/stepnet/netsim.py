"""Packet-level bottleneck network: FIFO links, drop-tail queue, sliding-window flows.

The model keeps the event count low on purpose: each data packet costs one
arrival event at the receiver and one ack arrival back at the sender.  Queue
waiting times fall out of the serialisation start times tracked per link, so
no per-packet dequeue events are needed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .kernel import Kernel, PACKET_ARRIVAL, TIMER

DATA_BYTES = 1500
ACK_BYTES = 40
DATA_BITS = DATA_BYTES * 8

DUP_ACK_THRESHOLD = 3
MIN_RTO_NS = 10_000_000  # 10 ms floor under the 2 x srtt rule
INITIAL_RTO_NS = 1_000_000_000  # before any RTT sample exists
RTO_SRTT_MULTIPLIER = 2.0
RTT_WINDOW_NS = 10_000_000_000  # lookback for the windowed minimum RTT

SLOW_START = "slow_start"
RL_CONTROLLED = "rl"


class FifoLink:
    """Unidirectional link serialising fixed-size packets in arrival order."""

    __slots__ = ("ser_ns", "prop_ns", "busy_until")

    def __init__(self, bandwidth_bps: float, prop_delay_ns: int, packet_bytes: int):
        self.ser_ns = max(1, round(packet_bytes * 8 * 1e9 / bandwidth_bps))
        self.prop_ns = prop_delay_ns
        self.busy_until = 0

    def transmit(self, now: int) -> int:
        """Accept a packet, returning its arrival time at the far end."""
        start = self.busy_until if self.busy_until > now else now
        self.busy_until = start + self.ser_ns
        return self.busy_until + self.prop_ns


class BottleneckQueue:
    """FIFO link fronted by a finite drop-tail buffer.

    Occupancy counts packets whose serialisation has not started yet; the
    packet on the wire has left the buffer.  A packet arriving while
    occupancy equals the capacity is dropped.
    """

    __slots__ = (
        "ser_ns",
        "prop_ns",
        "capacity",
        "busy_until",
        "_starts",
        "drops",
        "accepted",
        "total_wait_ns",
    )

    def __init__(self, bandwidth_bps: float, prop_delay_ns: int, capacity_pkts: int):
        self.ser_ns = max(1, round(DATA_BYTES * 8 * 1e9 / bandwidth_bps))
        self.prop_ns = prop_delay_ns
        self.capacity = capacity_pkts
        self.busy_until = 0
        self._starts: deque[int] = deque()
        self.drops = 0
        self.accepted = 0
        self.total_wait_ns = 0

    def _evict_started(self, now: int) -> None:
        starts = self._starts
        while starts and starts[0] <= now:
            starts.popleft()

    def occupancy(self, now: int) -> int:
        self._evict_started(now)
        return len(self._starts)

    def offer(self, now: int) -> Optional[int]:
        """Try to enqueue a data packet; arrival time at the far end, or None."""
        self._evict_started(now)
        if len(self._starts) >= self.capacity:
            self.drops += 1
            return None
        start = self.busy_until if self.busy_until > now else now
        self.busy_until = start + self.ser_ns
        self._starts.append(start)
        self.accepted += 1
        self.total_wait_ns += start - now
        return self.busy_until + self.prop_ns


class Receiver:
    """Cumulative-ack receiver with an out-of-order hold buffer."""

    __slots__ = ("_kernel", "_ack_link", "_ack_target", "next_expected", "delivered", "_held")

    def __init__(self, kernel: Kernel, ack_link: FifoLink, ack_target: str):
        self._kernel = kernel
        self._ack_link = ack_link
        self._ack_target = ack_target
        self.next_expected = 0
        self.delivered = 0
        self._held: set[int] = set()

    def on_data(self, event) -> None:
        seq, send_ts = event.payload
        now = event.timestamp
        self.delivered += 1
        if seq == self.next_expected:
            nxt = self.next_expected + 1
            held = self._held
            while nxt in held:
                held.remove(nxt)
                nxt += 1
            self.next_expected = nxt
        elif seq > self.next_expected:
            self._held.add(seq)
        # every arrival is acknowledged, duplicates included
        arrival = self._ack_link.transmit(now)
        self._kernel.schedule(arrival, self._ack_target, PACKET_ARRIVAL, (self.next_expected, send_ts))


@dataclass(frozen=True, slots=True)
class StepStats:
    """Per-flow statistics frozen at one step boundary."""

    t_ns: int
    flow: str
    R: float  # achieved throughput over the step, bits/s
    R_max: float  # best throughput seen so far (rounds and steps)
    L: float  # presumed-lost / sent within the step
    d: float  # smoothed RTT, ns
    d_min: float  # lowest RTT sample since flow start, ns
    d_max: float  # highest RTT sample since flow start, ns
    d_min_windowed: float  # lowest RTT sample in the last 10 s, ns
    cwnd: float
    sent: int
    acked: int
    lost: int
    inflight: int
    completed: bool


class FlowTransport:
    """Window-based sender: slow start, then an external window controller.

    Loss recovery is deliberately simple: three duplicate acks start a
    go-back-N replay from the ack point, paced at one resend per returning
    ack but held back for half a base RTT so the queue drains before the
    replay refills it; partial acks always resend the new head at once, and
    a 2 x srtt timeout (10 ms floor) resends the outstanding window in one
    burst as a backstop.  The L statistic counts packets this flow actually
    lost at the bottleneck against packets sent in the same step.
    """

    def __init__(
        self,
        kernel: Kernel,
        queue: BottleneckQueue,
        flow_id: str,
        size_pkts: Optional[int],
        initial_cwnd: float,
        ssthresh: float,
        data_target: str,
        timer_target: str,
    ):
        self._kernel = kernel
        self._queue = queue
        self.flow_id = flow_id
        self.size_pkts = size_pkts
        self._initial_cwnd = initial_cwnd
        self.ssthresh = ssthresh
        self._data_target = data_target
        self._timer_target = timer_target

        self.started = False
        self.complete = False
        self.completed_at: Optional[int] = None
        self.phase = SLOW_START
        self.cwnd = initial_cwnd
        self.snd_una = 0
        self.snd_nxt = 0
        self.dup_acks = 0
        self._recover = -1  # dup-ack triggers are suppressed up to this seq
        self._rtx_next = 0  # next sequence the paced replay will resend
        self._replay_open_ns = 0  # replay stays head-only until this time

        self.sent_copies = 0
        self.lost_total = 0
        self.below_one_clamps = 0
        self.step_sent = 0
        self.step_acked = 0
        self.step_lost = 0
        self._last_snap_ns = 0

        self.srtt: Optional[float] = None
        self.d_min: Optional[int] = None
        self.d_max: Optional[int] = None
        self._rtt_window: deque[tuple[int, int]] = deque()
        self.R_max = 0.0

        self._round_start_ns = 0
        self._round_start_acked = 0
        self._round_target: Optional[int] = None
        self.rounds: list[tuple[int, float]] = []  # (t_ns, cwnd at round start)
        self.series: list[tuple] = []  # flow time-series rows

        self._rto_deadline = 0
        self._timer_alive = False
        self.on_rl_handover: Optional[Callable[[int], None]] = None

    # -- sending ------------------------------------------------------------

    def start(self, event) -> None:
        now = event.timestamp
        self.started = True
        self._last_snap_ns = now
        self._round_start_ns = now
        self._round_start_acked = 0
        self.rounds.append((now, self.cwnd))
        self._pump(now)
        self._round_target = self.snd_nxt
        self._touch_rto(now)
        self._record_series(now)

    def window_pkts(self) -> int:
        w = int(self.cwnd)
        return w if w >= 1 else 1

    def outstanding(self) -> int:
        return self.snd_nxt - self.snd_una

    def _pump(self, now: int) -> None:
        limit = self.window_pkts()
        while self.snd_nxt - self.snd_una < limit and (
            self.size_pkts is None or self.snd_nxt < self.size_pkts
        ):
            self._xmit(self.snd_nxt, now)
            self.snd_nxt += 1

    def _xmit(self, seq: int, now: int) -> None:
        self.sent_copies += 1
        self.step_sent += 1
        arrival = self._queue.offer(now)
        if arrival is not None:
            self._kernel.schedule(arrival, self._data_target, PACKET_ARRIVAL, (seq, now))
        else:
            self.lost_total += 1
            self.step_lost += 1

    def set_cwnd(self, value: float, now: Optional[int] = None) -> None:
        """Install a new window; values below one packet clamp (and count)."""
        if value < 1.0:
            self.below_one_clamps += 1
            value = 1.0
        self.cwnd = float(value)
        if self.started and not self.complete:
            self._pump(self._kernel.clock if now is None else now)

    # -- receiving ----------------------------------------------------------

    def on_ack(self, event) -> None:
        if self.complete:
            return
        ack_num, echo_ts = event.payload
        now = event.timestamp
        if ack_num > self.snd_una:
            advanced = ack_num - self.snd_una
            self.snd_una = ack_num
            self.dup_acks = 0
            self.step_acked += advanced
            self._rtt_sample(now, now - echo_ts)
            if self.snd_una < self._recover:
                # partial ack during recovery: the hole at the new head goes
                # out at once, ahead of the paced replay
                if self._rtx_next <= self.snd_una:
                    self._rtx_next = self.snd_una
                    self._xmit(self._rtx_next, now)
                    self._rtx_next += 1
                else:
                    self._replay(now)
            round_crossed = False
            if self.phase == SLOW_START:
                self.cwnd += 1.0
                round_crossed = self._round_target is not None and ack_num >= self._round_target
                if round_crossed:
                    self._close_round(now)
                if self.cwnd >= self.ssthresh:
                    self._end_slow_start(now, via_loss=False)
            if self.size_pkts is not None and self.snd_una >= self.size_pkts:
                self._finish(now)
                return
            self._touch_rto(now)
            self._pump(now)
            if round_crossed and self.phase == SLOW_START:
                # the next round spans everything sent up to this instant
                self._round_target = self.snd_nxt
        elif ack_num == self.snd_una and self.outstanding() > 0:
            self.dup_acks += 1
            if self.snd_una < self._recover:
                self._replay(now)
            elif self.dup_acks == DUP_ACK_THRESHOLD and self.snd_una > self._recover:
                self._loss_event(now, timeout=False)

    def _close_round(self, now: int) -> None:
        dur = now - self._round_start_ns
        acked = self.snd_una - self._round_start_acked
        if dur > 0 and acked > 0:
            rate = acked * DATA_BITS * 1e9 / dur
            if rate > self.R_max:
                self.R_max = rate
        self.rounds.append((now, self.cwnd))
        self._record_series(now)
        self._round_start_ns = now
        self._round_start_acked = self.snd_una
        self._round_target = None  # the caller pins the next target after pumping

    def _end_slow_start(self, now: int, via_loss: bool) -> None:
        if self.phase != SLOW_START:
            return
        self.phase = RL_CONTROLLED
        self._round_target = None
        if via_loss:
            halved = self.cwnd / 2.0
            self.cwnd = halved if halved >= 1.0 else 1.0
        if self.on_rl_handover is not None:
            self.on_rl_handover(now)

    # -- loss recovery --------------------------------------------------------

    def _loss_event(self, now: int, timeout: bool) -> None:
        self.dup_acks = 0
        self._recover = self.snd_nxt
        if self.phase == SLOW_START:
            self._end_slow_start(now, via_loss=True)
        if timeout:
            resend = min(self.outstanding(), self.window_pkts())
            for seq in range(self.snd_una, self.snd_una + resend):
                self._xmit(seq, now)
            self._rtx_next = self.snd_una + resend
            self._replay_open_ns = now  # the burst already restarted the clock
        else:
            self._xmit(self.snd_una, now)
            self._rtx_next = self.snd_una + 1
            self._replay_open_ns = now + int(self.windowed_d_min(now) / 2.0)

    def _replay(self, now: int) -> None:
        """Resend one hole per returning ack once the drain gate has passed."""
        if self._rtx_next < self.snd_una:
            self._rtx_next = self.snd_una
        if now < self._replay_open_ns or self._rtx_next >= self._recover:
            return
        self._xmit(self._rtx_next, now)
        self._rtx_next += 1

    def _rto_interval(self) -> int:
        if self.srtt is None:
            return INITIAL_RTO_NS  # no estimate yet; don't fire under the first RTT
        scaled = int(RTO_SRTT_MULTIPLIER * self.srtt)
        return scaled if scaled > MIN_RTO_NS else MIN_RTO_NS

    def _touch_rto(self, now: int) -> None:
        self._rto_deadline = now + self._rto_interval()
        if not self._timer_alive:
            self._timer_alive = True
            self._kernel.schedule(self._rto_deadline, self._timer_target, TIMER)

    def on_timer(self, event) -> None:
        now = event.timestamp
        if self.complete or not self.started or self.outstanding() == 0:
            self._timer_alive = False
            return
        if now < self._rto_deadline:
            self._kernel.schedule(self._rto_deadline, self._timer_target, TIMER)
            return
        self._loss_event(now, timeout=True)
        self._rto_deadline = now + self._rto_interval()
        self._kernel.schedule(self._rto_deadline, self._timer_target, TIMER)

    # -- statistics -----------------------------------------------------------

    def _rtt_sample(self, now: int, rtt: int) -> None:
        if self.srtt is None:
            self.srtt = float(rtt)
            self.d_min = rtt
            self.d_max = rtt
        else:
            self.srtt += (rtt - self.srtt) / 8.0
            if rtt < self.d_min:
                self.d_min = rtt
            if rtt > self.d_max:
                self.d_max = rtt
        window = self._rtt_window
        while window and window[-1][1] >= rtt:
            window.pop()
        window.append((now, rtt))
        horizon = now - RTT_WINDOW_NS
        while window[0][0] < horizon:
            window.popleft()

    def windowed_d_min(self, now: int) -> float:
        window = self._rtt_window
        horizon = now - RTT_WINDOW_NS
        while window and window[0][0] < horizon:
            window.popleft()
        if window:
            return float(window[0][1])
        if self.d_min is not None:
            return float(self.d_min)
        return float(MIN_RTO_NS)

    def _finish(self, now: int) -> None:
        self.complete = True
        self.completed_at = now
        self._record_series(now)

    def _record_series(self, now: int) -> None:
        self.series.append(
            (
                now,
                self.flow_id,
                self.cwnd,
                self.srtt if self.srtt is not None else 0.0,
                self.outstanding(),
                self._queue.occupancy(now),
                self.snd_una,
                self.lost_total,
            )
        )

    def snapshot(self, now: int) -> StepStats:
        """Freeze per-step statistics and reset the step counters."""
        dt_ns = now - self._last_snap_ns
        if dt_ns > 0 and self.step_acked > 0:
            rate = self.step_acked * DATA_BITS * 1e9 / dt_ns
        else:
            rate = 0.0
        if rate > self.R_max:
            self.R_max = rate
        sent = self.step_sent
        loss = self.step_lost / sent if sent > 0 else 0.0
        stats = StepStats(
            t_ns=now,
            flow=self.flow_id,
            R=rate,
            R_max=self.R_max,
            L=loss,
            d=self.srtt if self.srtt is not None else 0.0,
            d_min=float(self.d_min) if self.d_min is not None else 0.0,
            d_max=float(self.d_max) if self.d_max is not None else 0.0,
            d_min_windowed=self.windowed_d_min(now),
            cwnd=self.cwnd,
            sent=sent,
            acked=self.step_acked,
            lost=self.step_lost,
            inflight=self.outstanding(),
            completed=self.complete,
        )
        self.step_sent = 0
        self.step_acked = 0
        self.step_lost = 0
        self._last_snap_ns = now
        self._record_series(now)
        return stats
