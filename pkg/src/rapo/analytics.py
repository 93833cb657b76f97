"""Word-length distributions of prompt populations and distances between them."""

from __future__ import annotations

import csv
import json
import os
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptyCorpus
from .text import normalize_text

DEFAULT_MEDIAN_WORDS = 36.0


def word_count(prompt: str) -> int:
    norm = normalize_text(prompt)
    return len(norm.split()) if norm else 0


@dataclass(frozen=True)
class LengthDistribution:
    source_label: str
    counts: dict[int, int]
    n: int
    mean: float
    median: float
    p10: float
    p90: float

    @classmethod
    def from_counts(cls, label: str, counts: Mapping[int, int]) -> "LengthDistribution":
        counts = {int(k): int(v) for k, v in sorted(counts.items()) if v > 0}
        n = sum(counts.values())
        if n == 0:
            raise EmptyCorpus(f"{label}: no prompts")
        lengths = np.repeat(np.fromiter(counts, dtype=np.float64), list(counts.values()))
        p10, median, p90 = np.percentile(lengths, [10, 50, 90])
        return cls(
            source_label=label,
            counts=counts,
            n=n,
            mean=float(lengths.mean()),
            median=float(median),
            p10=float(p10),
            p90=float(p90),
        )

    def as_dict(self) -> dict:
        return {
            "label": self.source_label,
            "n": self.n,
            "mean": self.mean,
            "median": self.median,
            "p10": self.p10,
            "p90": self.p90,
            "counts": {str(k): v for k, v in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LengthDistribution":
        return cls.from_counts(data.get("label", ""), {int(k): v for k, v in data["counts"].items()})


def length_histogram(corpus: Iterable[str]) -> Counter:
    return Counter(word_count(p) for p in corpus)


def merge_histograms(parts: Iterable[Mapping[int, int]]) -> Counter:
    total: Counter = Counter()
    for part in parts:
        total.update(part)
    return total


def length_distribution(corpus: Iterable[str], label: str) -> LengthDistribution:
    return LengthDistribution.from_counts(label, length_histogram(corpus))


def distribution_distance(a: LengthDistribution, b: LengthDistribution) -> float:
    """1-D earth mover's distance between the normalized length histograms.

    Computed as the sum over integer lengths of |CDF_a - CDF_b|.
    """
    lo = min(min(a.counts), min(b.counts))
    hi = max(max(a.counts), max(b.counts))
    span = hi - lo + 1
    pa = np.zeros(span)
    pb = np.zeros(span)
    for k, v in a.counts.items():
        pa[k - lo] = v
    for k, v in b.counts.items():
        pb[k - lo] = v
    diff = np.cumsum(pa / a.n) - np.cumsum(pb / b.n)
    return float(np.abs(diff[:-1]).sum())


def write_stats(dist: LengthDistribution, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dist.as_dict(), fh, indent=2)
        fh.write("\n")


def load_median(path: str | os.PathLike | None, default: float = DEFAULT_MEDIAN_WORDS) -> float:
    """Median training-prompt length from a corpus_stats.json file, or ``default``."""
    if path is None or not os.path.exists(path):
        return default
    with open(path, encoding="utf-8") as fh:
        return float(json.load(fh)["median"])


def write_histogram_csv(dist: LengthDistribution, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["length", "count"])
        for length, count in dist.counts.items():
            writer.writerow([length, count])
