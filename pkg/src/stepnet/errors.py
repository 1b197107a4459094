"""Exception types shared across the kernel, signal bus, environment and trainer."""

from __future__ import annotations


class StepnetError(Exception):
    """Base class for all errors raised by this package."""


class SimTimeOverflow(StepnetError):
    """A simulation timestamp left the unsigned 64-bit nanosecond range."""


class SchedulingInPast(StepnetError):
    """An event was scheduled strictly before the current simulation clock."""


class DispatchError(StepnetError):
    """A component handler raised while processing an event.

    The failing event is attached so the offender can be located from the
    error alone.
    """

    def __init__(self, message: str, event=None):
        super().__init__(message)
        self.event = event


class UnknownSignalType(StepnetError):
    """A signal was published or subscribed with an undefined type name."""


class PayloadMismatch(StepnetError):
    """A signal payload did not match the schema registered for its type."""


class SignalLoopError(StepnetError):
    """Re-entrant signal publication exceeded the allowed nesting depth."""


class ConfigError(StepnetError):
    """A configuration document failed validation.

    The message names the offending field path.
    """


class ScenarioError(StepnetError):
    """A scenario reached an unusable state, e.g. it produced no step event."""


class UnknownAgent(StepnetError):
    """An action was supplied for an agent that is not currently stepping."""


class MissingAction(StepnetError):
    """A stepping agent was left without an action."""


class DuplicateAgent(StepnetError):
    """Two agents attempted to register under the same identifier."""


class EpisodeOver(StepnetError):
    """step() was called after the episode finished; only reset() is valid."""


class InvalidAction(StepnetError, ValueError):
    """An action value fell outside the declared action space."""


class OutOfRange(StepnetError, ValueError):
    """A scalar argument fell outside its documented interval."""


class ZeroDuration(StepnetError):
    """A step duration of zero nanoseconds was requested."""


class EnvironmentFault(StepnetError):
    """An agent callback raised; the episode is theirs no longer."""


class NonFiniteLoss(StepnetError):
    """Training produced a NaN or infinite loss value."""


class CorruptCheckpoint(StepnetError):
    """A checkpoint file failed structural or compatibility validation."""


class ClosedEnvironment(StepnetError):
    """The environment handle was used after close()."""
