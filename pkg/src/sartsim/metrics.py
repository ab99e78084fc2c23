"""Latency percentiles, accuracy and occupancy summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PERCENTILES = (50, 90, 97, 99)


def percentile(latencies, p: float):
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    values = sorted(latencies)
    if not values:
        raise ValueError("percentile of an empty sample")
    if not 0 < p <= 100:
        raise ValueError("p must be in (0, 100]")
    rank = max(1, math.ceil(p / 100.0 * len(values) - 1e-9))
    return values[rank - 1]


def accuracy(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("accuracy of an empty record set")
    return sum(1 for r in records if r.is_correct) / len(records)


@dataclass(frozen=True)
class OccupancySample:
    time: int
    running_branches: int
    resident_tokens: int
    batch_size: int = 0


def occupancy_trace(chunks) -> list[OccupancySample]:
    """One sample per chunk boundary, taken after that chunk's bookkeeping.

    ``batch_size`` is the number of branches that decoded in the chunk;
    ``running_branches`` those still in the batch afterwards.
    """
    return [OccupancySample(c.end, c.running_branches, c.resident_tokens, c.batch_size)
            for c in chunks]


def occupancy_area(samples, start: int = 0) -> float:
    """Time integral of resident tokens, holding each sample over the chunk before it."""
    area, prev = 0.0, start
    for s in samples:
        area += s.resident_tokens * (s.time - prev)
        prev = s.time
    return area


def summarize(records) -> dict:
    records = list(records)
    out = {"requests": len(records), "accuracy": accuracy(records)}
    for name in ("e2e", "queuing", "inference"):
        vals = [getattr(r, f"{name}_latency") for r in records]
        for p in PERCENTILES:
            out[f"{name}_p{p}"] = percentile(vals, p)
        out[f"{name}_mean"] = float(np.mean(vals))
    completed = [n for r in records for n in r.completed_lengths]
    out["mean_completed_length"] = float(np.mean(completed)) if completed else 0.0
    return out


def aggregate_trials(summaries) -> dict:
    """Mean and sample standard deviation of every numeric summary field."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("no trials to aggregate")
    out = {"trials": len(summaries)}
    for key in summaries[0]:
        vals = np.array([s[key] for s in summaries], dtype=float)
        out[key] = {"mean": float(vals.mean()),
                    "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return out
