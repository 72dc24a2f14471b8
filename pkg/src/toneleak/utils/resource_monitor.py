"""Process resource tracking for pipeline stages.

This module provides the ResourceMonitor class, which reads the current
process's resident memory through psutil, warns once when a configurable
threshold is crossed, and measures wall-clock time and RSS growth of a stage.
"""

import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any

import psutil

logger = logging.getLogger(__name__)

_MB = 1024 * 1024


@dataclass
class StageUsage:
    """Resources used by one measured stage.

    Filled in when the measured block exits.
    """

    name: str
    runtime_s: float = 0.0
    rss_delta_mb: float = 0.0
    peak_rss_mb: float = 0.0


class ResourceMonitor:
    """Monitor memory usage and time pipeline stages.

    Args:
        threshold_mb: RSS in MB above which a warning is logged (default: 2048).

    Example:
        >>> monitor = ResourceMonitor(threshold_mb=1024)
        >>> with monitor.measure("train") as usage:
        ...     model = train(features, hp)
        >>> print(f"{usage.runtime_s:.1f} s, {usage.rss_delta_mb:+.1f} MB")
    """

    def __init__(self, threshold_mb: int = 2048) -> None:
        """Initialize the monitor.

        Raises:
            ValueError: If threshold_mb is not positive.
        """
        if threshold_mb <= 0:
            raise ValueError("threshold_mb must be positive")

        self._threshold_mb = threshold_mb
        self._process = psutil.Process()
        self._threshold_exceeded = False
        self._stages: list[StageUsage] = []

        logger.debug("ResourceMonitor initialized with threshold=%d MB", threshold_mb)

    def get_current_usage(self) -> float:
        """Current resident set size in MB."""
        return float(self._process.memory_info().rss / _MB)

    def check_threshold(self) -> bool:
        """Check memory against the threshold.

        Logs a WARNING the first time the threshold is exceeded and an INFO
        message when usage drops back below it.

        Returns:
            True if memory exceeds the threshold.
        """
        usage = self.get_current_usage()
        if usage > self._threshold_mb:
            if not self._threshold_exceeded:
                logger.warning(
                    "Memory usage (%.1f MB) exceeds threshold (%d MB)",
                    usage,
                    self._threshold_mb,
                )
                self._threshold_exceeded = True
            return True

        if self._threshold_exceeded:
            logger.info(
                "Memory usage (%.1f MB) dropped below threshold (%d MB)",
                usage,
                self._threshold_mb,
            )
            self._threshold_exceeded = False
        return False

    @contextmanager
    def measure(self, name: str) -> Iterator[StageUsage]:
        """Time a block and record its RSS growth."""
        usage = StageUsage(name=name)
        rss_before = self.get_current_usage()
        start = time.perf_counter()
        try:
            yield usage
        finally:
            usage.runtime_s = time.perf_counter() - start
            rss_after = self.get_current_usage()
            usage.rss_delta_mb = rss_after - rss_before
            usage.peak_rss_mb = max(rss_before, rss_after)
            self._stages.append(usage)
            self.check_threshold()
            logger.debug(
                "Stage %s: %.3f s, RSS %+.2f MB", name, usage.runtime_s, usage.rss_delta_mb
            )

    @property
    def stages(self) -> list[StageUsage]:
        return list(self._stages)

    def get_stats(self) -> dict[str, Any]:
        """Summary of the monitor state.

        Returns:
            Dictionary with current_usage_mb, threshold_mb, threshold_exceeded,
            and the total runtime of all measured stages.
        """
        return {
            "current_usage_mb": self.get_current_usage(),
            "threshold_mb": self._threshold_mb,
            "threshold_exceeded": self._threshold_exceeded,
            "total_runtime_s": sum(s.runtime_s for s in self._stages),
        }
