"""
Timed buffers and the per-provider request rate limiter built on them.
"""

import collections
import logging
import threading
import time


class TimedBuffer(object):
    """
    @brief A window of time stamps that evicts stamps older than a fixed age.

    The time information is unitless but expected to be consistent. Stamps must be appended in non-decreasing order.
    """

    def __init__(self, window=float('inf')):
        """
        @param window Stamps whose age reaches this value are evicted; must be non-negative
        """

        self._time_buffer = collections.deque()

        self._window = float('inf')
        self.window = window

    @property
    def window(self):
        return self._window

    @window.setter
    def window(self, val):
        if val < 0:
            raise ValueError('Expected window to be non-negative but got {}'.format(val))

        self._window = val

    @property
    def newest_time(self):
        if len(self) == 0:
            return None

        return self._time_buffer[-1]

    @property
    def oldest_time(self):
        if len(self) == 0:
            return None

        return self._time_buffer[0]

    def append(self, time_stamp):
        """
        @param[in] time_stamp The time to record; not earlier than the newest one.
        """

        if self.newest_time is not None and time_stamp < self.newest_time:
            raise ValueError(
                'Time out of order: last time was {}, but the new time is {}.'.format(self.newest_time, time_stamp)
            )

        self._time_buffer.append(time_stamp)

    def evict(self, now):
        """
        @brief Remove every stamp with ``now - time >= window``.

        @return The number of stamps removed
        """

        removed = 0
        while self._time_buffer and now - self._time_buffer[0] >= self._window:
            self._time_buffer.popleft()
            removed += 1

        return removed

    def __len__(self):
        return len(self._time_buffer)


class SystemClock(object):
    """
    Wall-clock time source; tests substitute a virtual clock with the same two methods.
    """

    def now(self):
        return time.monotonic()

    def sleep(self, seconds):
        time.sleep(seconds)


class RateLimiter(object):
    """
    @brief Sliding-window limiter: no window of ``period`` seconds ever holds more than ``max_requests`` grants.

    One limiter is shared by every worker calling the same provider, so acquire() is guarded by a lock. A caller that
    must wait sleeps outside the lock and then competes again.
    """

    def __init__(self, max_requests, period=60.0, clock=None, name=None):
        """
        @param max_requests Grants allowed per period; must be positive
        @param period Window length in seconds
        @param clock Object with now() and sleep(); defaults to SystemClock
        @param name Used in log messages
        """

        if max_requests <= 0:
            raise ValueError('Rate limit must be positive but got {}'.format(max_requests))

        self.logger = logging.getLogger(self.__class__.__name__)
        self.max_requests = max_requests
        self.clock = clock or SystemClock()
        self.name = name or 'provider'

        self._grants = TimedBuffer(window=period)
        self._lock = threading.Lock()

    @property
    def period(self):
        return self._grants.window

    def acquire(self):
        """
        @brief Block until a request may be sent, then record it.

        @return The total number of seconds spent waiting
        """

        waited = 0.
        while True:
            with self._lock:
                now = self.clock.now()
                self._grants.evict(now)

                if len(self._grants) < self.max_requests:
                    self._grants.append(now)
                    return waited

                delay = self._grants.oldest_time + self.period - now

            self.logger.debug('Throttling %s for %.3f s [limit=%d per %.0f s]', self.name, delay, self.max_requests,
                              self.period)
            self.clock.sleep(delay)
            waited += delay
