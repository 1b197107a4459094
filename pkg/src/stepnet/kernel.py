"""Deterministic discrete-event kernel.

Simulation time is an unsigned 64-bit count of nanoseconds.  Events are
ordered by (timestamp, sequence) where the sequence number is handed out by a
global counter at scheduling time, so simultaneous events always run in
insertion order and a run is reproducible from its seed alone.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, TextIO

from .errors import DispatchError, SchedulingInPast, SimTimeOverflow

MAX_SIMTIME = 2**64 - 1

# Event kinds used by the built-in components.  Kinds are plain strings so
# scenarios can add their own without touching the kernel.
TIMER = "TIMER"
PACKET_ARRIVAL = "PACKET_ARRIVAL"
STEP = "STEP"
FLOW_START = "FLOW_START"
FLOW_END = "FLOW_END"

_PENDING = 0
_DISPATCHED = 1
_CANCELLED = 2


def check_simtime(ns: int) -> int:
    """Validate a nanosecond timestamp, returning it unchanged."""
    if not isinstance(ns, int) or isinstance(ns, bool):
        raise SimTimeOverflow(f"timestamp must be an integer, got {type(ns).__name__}")
    if ns < 0 or ns > MAX_SIMTIME:
        raise SimTimeOverflow(f"timestamp {ns} outside [0, 2**64 - 1]")
    return ns


def add_simtime(a: int, b: int) -> int:
    """Checked addition of two nanosecond quantities."""
    total = a + b
    if total > MAX_SIMTIME:
        raise SimTimeOverflow(f"{a} + {b} exceeds the 64-bit time range")
    return total


@dataclass(eq=False, slots=True)
class Event:
    """A scheduled occurrence; also serves as its own cancellation handle."""

    timestamp: int
    sequence: int
    target: str
    kind: str
    payload: Any = None
    _state: int = _PENDING

    @property
    def cancelled(self) -> bool:
        return self._state == _CANCELLED

    @property
    def dispatched(self) -> bool:
        return self._state == _DISPATCHED


class Exhausted:
    """Sentinel returned by run_until when the event queue empties."""

    _instance: Optional["Exhausted"] = None

    def __new__(cls) -> "Exhausted":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EXHAUSTED"


EXHAUSTED = Exhausted()

_MASK64 = 2**64 - 1


class RngStream:
    """SplitMix64 generator for one named stream.

    The stream state is derived from the root seed and the stream id through
    SHA-256, so streams with different ids are statistically independent and
    adding a new stream never perturbs existing ones.
    """

    __slots__ = ("stream_id", "_state")

    def __init__(self, root_seed: int, stream_id: str):
        self.stream_id = stream_id
        digest = hashlib.sha256(f"{root_seed}:{stream_id}".encode()).digest()
        self._state = int.from_bytes(digest[:8], "big")

    def u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        limit = (_MASK64 + 1) - (_MASK64 + 1) % n
        while True:
            x = self.u64()
            if x < limit:
                return x % n


class Kernel:
    """Event queue, simulation clock and root of all randomness."""

    def __init__(self, seed: int = 0, trace: Optional[Callable[[Event], None]] = None):
        self.seed = seed
        self.clock = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._sequence = 0
        self._components: dict[str, Callable[[Event], None]] = {}
        self._streams: dict[str, RngStream] = {}
        self._trace = trace

    def register_component(self, name: str, handler: Callable[[Event], None]) -> None:
        if name in self._components:
            raise ValueError(f"component {name!r} already registered")
        self._components[name] = handler

    def rng(self, stream_id: str) -> RngStream:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = RngStream(self.seed, stream_id)
            self._streams[stream_id] = stream
        return stream

    def schedule(self, timestamp: int, target: str, kind: str, payload: Any = None) -> Event:
        """Queue an event and return it; the event doubles as a cancel handle."""
        check_simtime(timestamp)
        if timestamp < self.clock:
            raise SchedulingInPast(
                f"cannot schedule {kind} at {timestamp} ns; clock is {self.clock} ns"
            )
        event = Event(timestamp, self._sequence, target, kind, payload)
        self._sequence += 1
        heapq.heappush(self._heap, (timestamp, event.sequence, event))
        return event

    def cancel(self, event: Event) -> bool:
        """Mark a pending event dead.  False if it already ran or was cancelled."""
        if event._state != _PENDING:
            return False
        event._state = _CANCELLED
        return True

    def run_until(self, predicate: Callable[[Event], bool]):
        """Dispatch events in order until one matches the predicate.

        The matching event is popped and returned without being dispatched;
        its timestamp has already advanced the clock.  Returns EXHAUSTED when
        the queue empties first.
        """
        heap = self._heap
        components = self._components
        while heap:
            _, _, event = heapq.heappop(heap)
            if event._state == _CANCELLED:
                continue
            self.clock = event.timestamp
            if predicate(event):
                return event
            event._state = _DISPATCHED
            if self._trace is not None:
                self._trace(event)
            handler = components.get(event.target)
            if handler is None:
                raise DispatchError(f"no component registered for target {event.target!r}", event)
            try:
                handler(event)
            except DispatchError:
                raise
            except Exception as exc:
                raise DispatchError(
                    f"handler for {event.target!r} failed on {event.kind} "
                    f"at {event.timestamp} ns (sequence {event.sequence}): {exc}",
                    event,
                ) from exc
        return EXHAUSTED

    def pending_count(self) -> int:
        """Number of live events still queued (cancelled entries excluded)."""
        return sum(1 for _, _, e in self._heap if e._state == _PENDING)


def open_event_trace(path: str) -> tuple[Callable[[Event], None], Callable[[], None]]:
    """Return a trace callback writing one CSV line per dispatched event, plus a closer."""
    handle: TextIO = open(path, "w", encoding="utf-8")
    handle.write("timestamp_ns,sequence,target,kind\n")

    def write(event: Event) -> None:
        handle.write(f"{event.timestamp},{event.sequence},{event.target},{event.kind}\n")

    return write, handle.close
