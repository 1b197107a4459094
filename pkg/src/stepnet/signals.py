"""Typed publish-subscribe signal bus.

Signals decouple the stepping machinery from scenario components: neither
side holds a reference to the other, they only share type names.  Delivery is
synchronous on the caller's stack, in subscription order, which keeps the
whole platform single-threaded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, is_dataclass
from typing import Any, Callable, Optional

from .errors import PayloadMismatch, SignalLoopError, UnknownSignalType

MAX_PUBLISH_DEPTH = 8


@dataclass(frozen=True, slots=True)
class AgentRegister:
    agent_id: str


@dataclass(frozen=True, slots=True)
class AgentDeregister:
    agent_id: str


@dataclass(frozen=True, slots=True)
class ActionBroadcast:
    agent_id: str
    action: Any


@dataclass(frozen=True, slots=True)
class ObsReport:
    agent_id: str
    values: tuple


@dataclass(frozen=True, slots=True)
class RewardReport:
    agent_id: str
    value: float


@dataclass(frozen=True, slots=True)
class DoneReport:
    agent_id: str
    done: bool


@dataclass(frozen=True, slots=True)
class StepRequest:
    agent_id: str
    at: int


AGENT_REGISTER = "AGENT_REGISTER"
AGENT_DEREGISTER = "AGENT_DEREGISTER"
ACTION_BROADCAST = "ACTION_BROADCAST"
OBS_REPORT = "OBS_REPORT"
REWARD_REPORT = "REWARD_REPORT"
DONE_REPORT = "DONE_REPORT"
STEP_REQUEST = "STEP_REQUEST"

BUILTIN_SIGNALS: dict[str, type] = {
    AGENT_REGISTER: AgentRegister,
    AGENT_DEREGISTER: AgentDeregister,
    ACTION_BROADCAST: ActionBroadcast,
    OBS_REPORT: ObsReport,
    REWARD_REPORT: RewardReport,
    DONE_REPORT: DoneReport,
    STEP_REQUEST: StepRequest,
}


@dataclass(frozen=True, slots=True)
class Signal:
    type: str
    source: str
    payload: Any


class Subscription:
    """Handle returned by subscribe(); detaching it stops future deliveries."""

    __slots__ = ("type", "subscriber", "callback", "active")

    def __init__(self, type_name: str, subscriber: str, callback: Callable[[Signal], None]):
        self.type = type_name
        self.subscriber = subscriber
        self.callback = callback
        self.active = True


class SignalBus:
    def __init__(self) -> None:
        self._types: dict[str, Optional[type]] = dict(BUILTIN_SIGNALS)
        self._subscribers: dict[str, list[Subscription]] = {name: [] for name in BUILTIN_SIGNALS}
        self._depth = 0

    def define_type(self, name: str, payload_class: Optional[type] = None) -> None:
        """Register a user signal type, optionally with a payload dataclass."""
        if name in self._types:
            raise ValueError(f"signal type {name!r} already defined")
        if payload_class is not None and not is_dataclass(payload_class):
            raise TypeError("payload_class must be a dataclass")
        self._types[name] = payload_class
        self._subscribers[name] = []

    def subscribe(
        self, type_name: str, subscriber: str, callback: Callable[[Signal], None]
    ) -> Subscription:
        if type_name not in self._types:
            raise UnknownSignalType(f"cannot subscribe to undefined type {type_name!r}")
        sub = Subscription(type_name, subscriber, callback)
        self._subscribers[type_name].append(sub)
        return sub

    def unsubscribe(self, subscription: Subscription) -> bool:
        """Detach a subscription.  False when it was already detached."""
        if not subscription.active:
            return False
        subscription.active = False
        try:
            self._subscribers[subscription.type].remove(subscription)
        except (KeyError, ValueError):
            pass
        return True

    def publish(self, type_name: str, source: str, payload: Any) -> int:
        """Deliver a signal to all current subscribers; returns delivery count.

        Handlers may publish again, but nesting deeper than MAX_PUBLISH_DEPTH
        is treated as a feedback loop and aborts the run.
        """
        expected = self._types.get(type_name, _MISSING)
        if expected is _MISSING:
            raise UnknownSignalType(f"cannot publish undefined type {type_name!r}")
        if expected is not None and type(payload) is not expected:
            raise PayloadMismatch(
                f"signal {type_name!r} expects payload {expected.__name__}, "
                f"got {type(payload).__name__}"
            )
        if self._depth >= MAX_PUBLISH_DEPTH:
            raise SignalLoopError(
                f"publish depth exceeded {MAX_PUBLISH_DEPTH}; "
                f"signal {type_name!r} from {source!r} looks like a feedback loop"
            )
        signal = Signal(type_name, source, payload)
        delivered = 0
        self._depth += 1
        try:
            # Snapshot so handlers can (un)subscribe without skewing this round;
            # the active flag still honours mid-flight unsubscribes.
            for sub in list(self._subscribers[type_name]):
                if sub.active:
                    sub.callback(signal)
                    delivered += 1
        finally:
            self._depth -= 1
        return delivered


_MISSING = object()


def payload_field_names(type_name: str) -> tuple[str, ...]:
    """Field names of a built-in signal payload, mostly for introspection."""
    cls = BUILTIN_SIGNALS[type_name]
    return tuple(f.name for f in fields(cls))
