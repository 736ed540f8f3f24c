"""Video catalog, Zipf popularity and prefix sizing."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

X_MIN = 0.05
X_MAX = 0.95


@dataclass(frozen=True)
class Video:
    id: int
    duration_min: float
    playback_rate: float = 200.0  # storage units per hour, reporting only

    def __post_init__(self):
        if self.duration_min <= 0:
            raise ValueError(f"video {self.id}: duration must be positive")
        if self.playback_rate <= 0:
            raise ValueError(f"video {self.id}: playback rate must be positive")

    def units(self, minutes: float) -> float:
        """Storage units needed for `minutes` of this video."""
        return minutes * self.playback_rate / 60.0


@dataclass(frozen=True)
class ZipfModel:
    n_videos: int
    exponent: float = 0.73

    def pmf(self) -> np.ndarray:
        return zipf_pmf(self.n_videos, self.exponent)


def zipf_pmf(n_videos: int, exponent: float) -> np.ndarray:
    """Probability of each popularity rank; index 0 is the most popular."""
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    if exponent < 0:
        raise ValueError("exponent must be >= 0")
    weights = 1.0 / np.arange(1, n_videos + 1, dtype=float) ** exponent
    return weights / weights.sum()


def make_catalog(n_videos: int, rng: np.random.Generator,
                 min_duration: float = 120.0, max_duration: float = 180.0,
                 playback_rate: float = 200.0) -> list[Video]:
    """Videos with whole-minute durations drawn uniformly from the range.

    Ids follow popularity rank, so video 0 is the Zipf head.
    """
    durations = rng.integers(int(min_duration), int(max_duration) + 1, size=n_videos)
    return [Video(i, float(d), playback_rate) for i, d in enumerate(durations)]


@dataclass
class PopularityEstimate:
    x: dict[int, float]
    window_min: float
    request_counts: dict[int, int] = field(default_factory=dict)
    total: int = 0

    def __getitem__(self, video_id: int) -> float:
        return self.x[video_id]

    def count(self, video_id: int) -> int:
        return self.request_counts.get(video_id, 0)

    def ranked(self) -> list[int]:
        """Video ids, most popular first (ties: more requests, then lower id)."""
        return sorted(self.x, key=lambda v: (-self.x[v], -self.count(v), v))


def estimate_popularity(request_log: Iterable[tuple[float, int]], window_min: float,
                        now: float, video_ids: Sequence[int],
                        x_min: float = X_MIN, x_max: float = X_MAX) -> PopularityEstimate:
    """Sliding-window request frequencies n_i / I, clamped into [x_min, x_max].

    Only requests with timestamp in (now - window_min, now] are counted.
    """
    lo = now - window_min
    counts = Counter(v for t, v in request_log if lo < t <= now)
    total = sum(counts.values())
    x = {}
    for v in video_ids:
        raw = counts[v] / total if total else 0.0
        x[v] = min(max(raw, x_min), x_max)
    return PopularityEstimate(x, window_min, {v: counts[v] for v in video_ids if counts[v]}, total)


def prefix_sizes(x: float, duration_min: float) -> tuple[float, float]:
    """Minutes of prefix-1 (proxy) and prefix-2 (tracker) for popularity x."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"x must lie strictly in (0, 1), got {x}")
    if duration_min <= 0:
        raise ValueError("duration must be positive")
    w1 = x * duration_min
    w2 = x * (duration_min - w1)
    return w1, w2


def scaled_x(x: float, scale: float, x_max: float = X_MAX) -> float:
    """Apply the prefix-size sweep multiplier, capped at x_max."""
    return min(x * scale, x_max)
