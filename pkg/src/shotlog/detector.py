"""From window probabilities to discrete events, activity sessions and a
regulation-aware logbook.

Runs of above-threshold windows become detection events (nearby runs
merge); wall-clock-anchored events cluster into activity sessions that
are checked against the permitted-hours rule (Mon-Fri 07:00-19:00 local
time); annual counters track gunshot and explosion totals against the
regulatory limits and support resumable, chunked processing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from .indicators import HOP_S
from .labeling import WINDOW_LENGTH_S

GUNSHOT_ANNUAL_LIMIT = 2_000_000
EXPLOSION_ANNUAL_LIMIT = 1250
PERMITTED_START_HOUR = 7
PERMITTED_END_HOUR = 19

DEFAULT_MIN_GAP_S = 0.25
DEFAULT_SESSION_GAP_S = 600.0


@dataclass
class DetectionEvent:
    """A decoded event: span of merged above-threshold windows."""

    onset_s: float
    offset_s: float
    peak_probability: float
    n_windows: int

    def __post_init__(self):
        if self.offset_s <= self.onset_s:
            raise ValueError("offset must be after onset")


@dataclass
class AnchoredEvent:
    """A detection placed on the wall clock, optionally with a class label."""

    onset: datetime
    offset: datetime
    label: str | None = None
    peak_probability: float | None = None


@dataclass
class ActivitySession:
    start: datetime
    end: datetime
    event_count: int
    within_permitted_hours: bool


@dataclass
class RegulatoryCounters:
    """Annual event counters against the local regulation limits."""

    year: int
    gunshot_count: int = 0
    explosion_count: int = 0
    out_of_hours_event_count: int = 0
    gunshot_limit: int = GUNSHOT_ANNUAL_LIMIT
    explosion_limit: int = EXPLOSION_ANNUAL_LIMIT

    def violations(self) -> list[str]:
        flags = []
        if self.gunshot_count > self.gunshot_limit:
            flags.append("gunshot_limit_exceeded")
        if self.explosion_count > self.explosion_limit:
            flags.append("explosion_limit_exceeded")
        return flags

    def merge(self, other: "RegulatoryCounters") -> "RegulatoryCounters":
        if other.year != self.year:
            raise ValueError("cannot merge counters of different years")
        return replace(
            self,
            gunshot_count=self.gunshot_count + other.gunshot_count,
            explosion_count=self.explosion_count + other.explosion_count,
            out_of_hours_event_count=self.out_of_hours_event_count
            + other.out_of_hours_event_count,
        )

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "gunshot_count": self.gunshot_count,
            "explosion_count": self.explosion_count,
            "out_of_hours_event_count": self.out_of_hours_event_count,
            "gunshot_limit": self.gunshot_limit,
            "explosion_limit": self.explosion_limit,
            "violations": self.violations(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegulatoryCounters":
        return cls(
            year=data["year"],
            gunshot_count=data["gunshot_count"],
            explosion_count=data["explosion_count"],
            out_of_hours_event_count=data.get("out_of_hours_event_count", 0),
            gunshot_limit=data.get("gunshot_limit", GUNSHOT_ANNUAL_LIMIT),
            explosion_limit=data.get("explosion_limit", EXPLOSION_ANNUAL_LIMIT),
        )


def decode_events(
    probabilities,
    threshold: float,
    min_gap_s: float = DEFAULT_MIN_GAP_S,
    hop_s: float = HOP_S,
    window_length_s: float = WINDOW_LENGTH_S,
) -> list[DetectionEvent]:
    """Threshold the window probability series into discrete events.

    Maximal runs of windows with probability >= threshold become events
    spanning [first window start, last window end); runs whose window
    spans are closer than ``min_gap_s`` (including overlapping spans)
    merge into one event.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    above = probs >= threshold
    events: list[DetectionEvent] = []
    i = 0
    while i < len(above):
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(above) and above[j + 1]:
            j += 1
        onset = i * hop_s
        offset = j * hop_s + window_length_s
        peak = float(probs[i : j + 1].max())
        n = j - i + 1
        if events and onset - events[-1].offset_s < min_gap_s:
            prev = events[-1]
            events[-1] = DetectionEvent(
                onset_s=prev.onset_s,
                offset_s=offset,
                peak_probability=max(prev.peak_probability, peak),
                n_windows=prev.n_windows + n,
            )
        else:
            events.append(
                DetectionEvent(onset_s=onset, offset_s=offset, peak_probability=peak, n_windows=n)
            )
        i = j + 1
    return events


# A window [a, a+1) is positive as soon as the event intersects it, so the
# first positive window of a run starts up to one window before the event
# itself; the preceding negative window bounds the true onset to within one
# hop of this lead.
ONSET_LEAD_S = WINDOW_LENGTH_S - HOP_S


def correct_event_onsets(events: list[DetectionEvent], lead_s: float = ONSET_LEAD_S):
    """Shift window-run onsets to physical event onsets for matching and
    logging; the evidence span end is kept."""
    return [
        DetectionEvent(
            onset_s=e.onset_s + lead_s,
            offset_s=e.offset_s,
            peak_probability=e.peak_probability,
            n_windows=e.n_windows,
        )
        for e in events
    ]


def is_within_permitted_hours(start: datetime, end: datetime) -> bool:
    """Mon-Fri 07:00-19:00 local time; the whole span must fit in one
    permitted window of one day."""
    if start.date() != end.date():
        return False
    if start.weekday() > 4:  # Saturday/Sunday
        return False
    earliest = start.replace(hour=PERMITTED_START_HOUR, minute=0, second=0, microsecond=0)
    latest = start.replace(hour=PERMITTED_END_HOUR, minute=0, second=0, microsecond=0)
    return earliest <= start and end <= latest


def sessions_from_events(
    events: list[AnchoredEvent], session_gap_s: float = DEFAULT_SESSION_GAP_S
) -> list[ActivitySession]:
    """Cluster time-sorted events into activity sessions.

    Consecutive events whose onsets are at most ``session_gap_s`` apart
    share a session. Sessions spanning outside Mon-Fri 07:00-19:00 are
    flagged as out of permitted hours.
    """
    sessions = []
    group: list[AnchoredEvent] = []
    for event in events:
        if group and (event.onset - group[-1].onset) > timedelta(seconds=session_gap_s):
            sessions.append(_close_session(group))
            group = []
        group.append(event)
    if group:
        sessions.append(_close_session(group))
    return sessions


def _close_session(group: list[AnchoredEvent]) -> ActivitySession:
    start = group[0].onset
    end = max(e.offset for e in group)
    return ActivitySession(
        start=start,
        end=end,
        event_count=len(group),
        within_permitted_hours=is_within_permitted_hours(start, end),
    )


def update_counters(
    counters: RegulatoryCounters, events: list[AnchoredEvent]
) -> tuple[RegulatoryCounters, list[str]]:
    """Add classified events to the annual counters.

    Every event must fall inside the counter year and carry a class label.
    Returns the updated counters and the violation flags active after the
    update; processing a stream in chunks gives the same totals as one
    pass.
    """
    gunshots = counters.gunshot_count
    explosions = counters.explosion_count
    out_of_hours = counters.out_of_hours_event_count
    for event in events:
        if event.onset.year != counters.year:
            raise ValueError(
                f"event at {event.onset.isoformat()} outside counter year {counters.year}"
            )
        if event.label == "gunshot":
            gunshots += 1
        elif event.label == "explosion":
            explosions += 1
        else:
            raise ValueError(f"event has no class label: {event}")
        if not is_within_permitted_hours(event.onset, event.offset):
            out_of_hours += 1
    updated = replace(
        counters,
        gunshot_count=gunshots,
        explosion_count=explosions,
        out_of_hours_event_count=out_of_hours,
    )
    return updated, updated.violations()


@dataclass
class CountEstimate:
    corrected: float
    lower: float
    upper: float


def estimate_annual_counts(
    detected_count: int, deletion_rate: float, insertion_rate: float
) -> CountEstimate | None:
    """Correct a detected event count for known error rates.

    corrected = detected * (1 - insertion) / (1 - deletion). The interval
    is +-1.96 sigma with the two rates' binomial standard errors
    propagated to first order (insertion over the detections, deletion
    over the corrected reference-count estimate). Returns None when
    deletion_rate = 1 (nothing detectable survives).
    """
    if not (0.0 <= insertion_rate <= 1.0) or not (0.0 <= deletion_rate <= 1.0):
        raise ValueError("error rates must lie in [0, 1]")
    if deletion_rate >= 1.0:
        return None
    corrected = detected_count * (1.0 - insertion_rate) / (1.0 - deletion_rate)
    if detected_count == 0:
        return CountEstimate(corrected=0.0, lower=0.0, upper=0.0)
    var_ins = insertion_rate * (1.0 - insertion_rate) / detected_count
    n_ref = max(corrected, 1.0)
    var_del = deletion_rate * (1.0 - deletion_rate) / n_ref
    d_ins = -detected_count / (1.0 - deletion_rate)
    d_del = detected_count * (1.0 - insertion_rate) / (1.0 - deletion_rate) ** 2
    sigma = math.sqrt(d_ins**2 * var_ins + d_del**2 * var_del)
    return CountEstimate(
        corrected=corrected,
        lower=corrected - 1.96 * sigma,
        upper=corrected + 1.96 * sigma,
    )


def sessions_to_jsonl(sessions: list[ActivitySession], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(
                json.dumps(
                    {
                        "start": s.start.isoformat(),
                        "end": s.end.isoformat(),
                        "event_count": s.event_count,
                        "within_permitted_hours": s.within_permitted_hours,
                    }
                )
                + "\n"
            )
