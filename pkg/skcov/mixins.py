"""Mixins for skcov runners."""

from __future__ import annotations

import logging
from typing import Callable

from .event import Event

_LOGGER = logging.getLogger(__name__)

Listener = Callable[[Event], None]


class EventMixin:
    """Dispatch progress events to registered listeners.

    Listeners are observers: an exception raised by one is logged and the
    remaining listeners still run.
    """

    _listeners: dict[str, list[Listener]]

    def on(  # pylint: disable=invalid-name
        self, event_name: str, callback: Listener
    ) -> Callable[[], None]:
        """Register `callback` for `event_name` and return an unsubscribe function."""
        if not hasattr(self, "_listeners"):
            self._listeners = {}
        listeners = self._listeners.setdefault(event_name, [])
        listeners.append(callback)

        def unsubscribe() -> None:
            if callback in listeners:
                listeners.remove(callback)

        return unsubscribe

    def listener_count(self, event_name: str) -> int:
        """Return how many listeners are registered for `event_name`."""
        return len(getattr(self, "_listeners", {}).get(event_name, []))

    def emit(self, event_name: str, event: Event) -> int:
        """Deliver `event` to every listener and return how many succeeded."""
        delivered = 0
        for listener in list(getattr(self, "_listeners", {}).get(event_name, [])):
            try:
                listener(event)
            except Exception:  # pylint: disable=broad-except
                _LOGGER.exception("Listener for %s failed", event_name)
            else:
                delivered += 1
        return delivered
