"""Virtual-time discrete-event kernel.

Time is an integer count of milliseconds since the start of the run. Events
scheduled for the same instant pop in a fixed kind order and then in the order
they were scheduled, so a run is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, Mapping

logger = logging.getLogger(__name__)


class EventKind(IntEnum):
    """Event kinds. The integer value is the same-instant tie-break rank."""

    WORKER_BOOT_COMPLETE = 0  # freshly booted workers can take tasks freed at the same instant
    TASK_FINISH = 1
    JOB_ARRIVAL = 2
    JOB_CANCEL = 3
    WORKER_FAILURE = 4
    BILLING_BOUNDARY = 5
    SIM_END = 6

    @property
    def label(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))


@dataclass(frozen=True)
class Event:
    fire_at: int
    kind: EventKind
    payload: Any
    seq: int

    @property
    def event_id(self) -> int:
        return self.seq

    def sort_key(self) -> tuple[int, int, int]:
        return (self.fire_at, int(self.kind), self.seq)


class SimulationError(Exception):
    """Base class for kernel errors."""


class PastTime(SimulationError):
    def __init__(self, fire_at: int, now: int):
        super().__init__(f"cannot schedule at t={fire_at}, clock is already at t={now}")
        self.fire_at = fire_at
        self.now = now


class HandlerFault(SimulationError):
    """A handler raised while processing `event`."""

    def __init__(self, event: Event, cause: BaseException):
        super().__init__(f"handler for {event.kind.label} at t={event.fire_at} (seq {event.seq}) failed: {cause!r}")
        self.event = event
        self.cause = cause


Handler = Callable[[Event], None]


class EventQueue:
    """Priority queue of pending events with lazy cancellation."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Event]] = []
        self._pending: dict[int, Event] = {}
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._pending)

    def push(self, fire_at: int, kind: EventKind, payload: Any = None) -> Event:
        event = Event(fire_at, EventKind(kind), payload, self._next_seq)
        self._next_seq += 1
        heapq.heappush(self._heap, (*event.sort_key(), event))
        self._pending[event.seq] = event
        return event

    def remove(self, event_id: int) -> bool:
        return self._pending.pop(event_id, None) is not None

    def pop(self) -> Event | None:
        while self._heap:
            *_, event = heapq.heappop(self._heap)
            if self._pending.pop(event.seq, None) is not None:
                return event
        return None

    def peek(self) -> Event | None:
        while self._heap:
            event = self._heap[0][-1]
            if event.seq in self._pending:
                return event
            heapq.heappop(self._heap)
        return None

    def pending(self) -> list[Event]:
        return sorted(self._pending.values(), key=Event.sort_key)


class Kernel:
    """Single-threaded simulation clock plus event queue.

    Handlers receive the popped event and may schedule further events through
    the kernel. ``trace`` records every handled event in pop order.
    """

    def __init__(self) -> None:
        self.queue = EventQueue()
        self._now = 0
        self.trace: list[Event] = []

    def now(self) -> int:
        return self._now

    def schedule(self, fire_at: int, kind: EventKind, payload: Any = None) -> int:
        if fire_at < self._now:
            raise PastTime(fire_at, self._now)
        return self.queue.push(fire_at, kind, payload).event_id

    def cancel(self, event_id: int) -> bool:
        return self.queue.remove(event_id)

    def run_until_drained(self, handlers: Mapping[EventKind, Handler]) -> int:
        while True:
            event = self.queue.pop()
            if event is None:
                return self._now
            self._now = event.fire_at
            self.trace.append(event)
            if event.kind is EventKind.SIM_END:
                handler = handlers.get(EventKind.SIM_END)
                if handler is not None:
                    self._invoke(handler, event)
                return self._now
            handler = handlers.get(event.kind)
            if handler is None:
                raise HandlerFault(event, KeyError(f"no handler registered for {event.kind.label}"))
            self._invoke(handler, event)

    def _invoke(self, handler: Handler, event: Event) -> None:
        try:
            handler(event)
        except HandlerFault:
            raise
        except Exception as exc:
            logger.debug("handler fault on %s", event)
            raise HandlerFault(event, exc) from exc
