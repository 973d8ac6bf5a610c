"""Fired-pixel-count histograms and their serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class CountHistogram:
    """Tallies ``counts[k]`` of trials in which ``k`` pixels fired.

    Raw histograms hold non-negative integers summing to ``trials``.
    Dark-subtracted histograms are ``signed``: float tallies that may be
    negative. ``metadata`` carries simulation notes and is ignored by
    equality.
    """

    counts: np.ndarray
    trials: int
    signed: bool = False
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.signed:
            counts = counts.astype(np.float64)
        else:
            if counts.size and (np.any(counts < 0) or np.any(counts != np.round(counts))):
                raise ValueError("raw histogram tallies must be non-negative integers")
            counts = counts.astype(np.int64)
            if counts.sum() != self.trials:
                raise ValueError(f"raw tallies sum to {counts.sum()}, expected {self.trials}")
        self.counts = _trim(counts)

    def __eq__(self, other):
        if not isinstance(other, CountHistogram):
            return NotImplemented
        return (
            self.trials == other.trials
            and self.signed == other.signed
            and np.array_equal(self.counts, other.counts)
        )

    @classmethod
    def from_samples(cls, k: np.ndarray, **metadata) -> "CountHistogram":
        k = np.asarray(k, dtype=np.int64)
        return cls(np.bincount(k), int(k.size), metadata=dict(metadata))

    @classmethod
    def from_mapping(cls, tallies: dict[int, float], trials: int | None = None, signed=False):
        """Build from ``{k: tally}``; a missing k=0 bin is filled up to ``trials``."""
        k_max = max(tallies, default=0)
        counts = np.zeros(k_max + 1, dtype=np.float64 if signed else np.int64)
        for k, v in tallies.items():
            counts[k] = v
        if trials is None:
            trials = int(counts.sum())
        elif not signed and 0 not in tallies:
            counts[0] = trials - counts[1:].sum()
        return cls(counts, trials, signed=signed)

    @property
    def k_max(self) -> int:
        return self.counts.size - 1

    def tally(self, k: int):
        return self.counts[k] if 0 <= k < self.counts.size else 0

    def as_dict(self) -> dict[int, float]:
        return {k: v.item() for k, v in enumerate(self.counts) if v != 0}

    def probabilities(self) -> np.ndarray:
        return self.counts / self.trials

    def mean_counts(self) -> float:
        return float(np.dot(np.arange(self.counts.size), self.counts) / self.trials)


def _trim(counts: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(counts)
    size = nz[-1] + 1 if nz.size else 1
    out = counts[:size]
    if out.size == 0:
        out = np.zeros(1, dtype=counts.dtype)
    return out


def merge(*hists: CountHistogram) -> CountHistogram:
    """Combine histograms over disjoint trial sets."""
    if not hists:
        raise ValueError("nothing to merge")
    signed = any(h.signed for h in hists)
    size = max(h.counts.size for h in hists)
    total = np.zeros(size, dtype=np.float64 if signed else np.int64)
    meta: dict = {}
    for h in hists:
        total[: h.counts.size] += h.counts
        for key, value in h.metadata.items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                meta[key] = meta.get(key, 0) + value
    return CountHistogram(total, sum(h.trials for h in hists), signed=signed, metadata=meta)


def subtract_dark(signal: CountHistogram, dark: CountHistogram) -> CountHistogram:
    """Remove the dark-count histogram, rescaled to the signal's trial count.

    The result is signed; negative bins are kept because the moments used
    downstream are linear in the tallies.
    """
    if signal.signed or dark.signed:
        raise ValueError("dark subtraction expects two raw histograms")
    if dark.trials == 0:
        raise ValueError("dark histogram has no trials")
    size = max(signal.counts.size, dark.counts.size)
    out = np.zeros(size)
    out[: signal.counts.size] += signal.counts
    out[: dark.counts.size] -= dark.counts * (signal.trials / dark.trials)
    return CountHistogram(out, signal.trials, signed=True)


def _format_tally(value, signed: bool) -> str:
    return repr(float(value)) if signed else str(int(value))


def write_histogram(path: str | Path, hist: CountHistogram, metadata: dict | None = None) -> Path:
    """Write ``k,count`` CSV plus a JSON sidecar; returns the sidecar path."""
    path = Path(path)
    lines = ["k,count"]
    lines += [f"{k},{_format_tally(v, hist.signed)}" for k, v in enumerate(hist.counts)]
    path.write_text("\n".join(lines) + "\n")
    sidecar = sidecar_path(path)
    meta = {"trials": hist.trials, "signed": hist.signed, **hist.metadata, **(metadata or {})}
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def read_histogram(path: str | Path) -> tuple[CountHistogram, dict]:
    """Read a histogram CSV and its sidecar (if present)."""
    path = Path(path)
    try:
        rows = path.read_text().split()
    except OSError as exc:
        raise ConfigError(f"cannot read histogram {path}: {exc}") from exc
    if not rows or rows[0].strip() != "k,count":
        raise ConfigError(f"{path}: expected header 'k,count'")
    sidecar = sidecar_path(path)
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    signed = bool(meta.get("signed", False))
    tallies: dict[int, float] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            k_text, v_text = row.split(",")
            k = int(k_text)
            v = float(v_text) if signed else int(v_text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad row {row!r}") from exc
        if k < 0:
            raise ConfigError(f"{path}:{lineno}: negative k")
        tallies[k] = tallies.get(k, 0) + v
    trials = int(meta.get("trials", sum(tallies.values())))
    counts = np.zeros(max(tallies, default=0) + 1, dtype=np.float64 if signed else np.int64)
    for k, v in tallies.items():
        counts[k] = v
    try:
        hist = CountHistogram(counts, trials, signed=signed)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return hist, meta
