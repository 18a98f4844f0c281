"""Forward Monte Carlo of the box-filling process.

Box i at level n+1 merges the next M_{n+1}(i) unconsumed boxes of level n,
so its children form the contiguous index range
[offsets[i], offsets[i+1]) with offsets the prefix sums of the draws.
Only boxes that are transitively consumed by the I requested level-N
boxes are ever generated: draws are made top-down (level N first) and the
sizes are then filled in bottom-up. Level-0 boxes all hold one ball and
are never materialized individually.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import BudgetExceededError, InvalidMechanismError
from .mechanisms import Mechanism, MechanismSchedule
from .rng import make_rng

DEFAULT_BUDGET = 10**8


@dataclass(frozen=True)
class RunConfig:
    """``mechanisms[n-1]`` drives step n; ``boxes`` is I, the level-N box count."""

    mechanisms: tuple[Mechanism, ...]
    boxes: int
    seed: int = 0
    replicas: int = 1
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))

    @classmethod
    def from_schedule(cls, schedule: MechanismSchedule, horizon: int, boxes: int, **kw) -> "RunConfig":
        return cls(tuple(schedule.mechanisms(horizon)), boxes, **kw)

    @property
    def horizon(self) -> int:
        return len(self.mechanisms)

    def validate(self) -> list[str]:
        out = []
        if self.horizon < 1:
            out.append("horizon must be >= 1")
        if self.boxes < 1:
            out.append("boxes must be >= 1")
        if self.replicas < 1:
            out.append("replicas must be >= 1")
        if self.budget < self.boxes:
            out.append("budget must be at least the number of boxes")
        if not 0 <= self.seed < 2**64:
            out.append("seed must be a 64-bit unsigned integer")
        for n, m in enumerate(self.mechanisms, start=1):
            out.extend(f"step {n}: {v}" for v in m.validate())
        return out

    def check(self) -> "RunConfig":
        errs = self.validate()
        if errs:
            raise InvalidMechanismError(errs)
        return self


@dataclass
class Level:
    """Boxes of one level. Level 0 has no draws and implicit unit sizes."""

    n: int
    count: int
    draws: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None
    _sizes: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sizes(self) -> np.ndarray:
        if self._sizes is None:
            return np.ones(self.count, dtype=np.int64)
        return self._sizes

    @property
    def child_lo(self) -> np.ndarray:
        return self.offsets[:-1]

    @property
    def child_hi(self) -> np.ndarray:
        return self.offsets[1:]

    def children(self, i: int) -> range:
        return range(int(self.offsets[i]), int(self.offsets[i + 1]))


@dataclass
class RunLog:
    """Full record of one replica: ``levels[n]`` for n = 0..N."""

    levels: list[Level]
    seed: Optional[int] = None
    replica: Optional[int] = None

    @property
    def horizon(self) -> int:
        return len(self.levels) - 1

    def sizes(self, n: int) -> np.ndarray:
        return self.levels[n].sizes

    def draws(self, n: int) -> np.ndarray:
        return self.levels[n].draws

    def check_conservation(self) -> bool:
        """Every box holds the sum of its children's sizes; ranges tile a prefix of the level below."""
        for n in range(1, len(self.levels)):
            lv, below = self.levels[n], self.levels[n - 1]
            off = lv.offsets
            if off[0] != 0 or np.any(np.diff(off) != lv.draws) or off[-1] > below.count:
                return False
            if below._sizes is None:
                got = lv.draws  # unit sizes: a range's mass is its length
            else:
                cs = np.concatenate(([0], np.cumsum(below.sizes)))
                got = cs[off[1:]] - cs[off[:-1]]
            if np.any(got != lv.sizes):
                return False
            if np.any(lv.sizes[lv.draws == 0] != 0):
                return False
        return int(self.levels[-1].sizes.sum()) == self.consumed_level0()

    def consumed_level0(self) -> int:
        """Number of level-0 boxes lying under the level-N boxes."""
        end = self.levels[-1].count
        for n in range(self.horizon, 0, -1):
            end = int(self.levels[n].offsets[end])
        return end

    def rows(self) -> Iterable[tuple]:
        for lv in self.levels:
            sizes = lv.sizes
            for i in range(lv.count):
                if lv.n == 0:
                    yield (0, i, 1, "", "", "")
                else:
                    yield (lv.n, i, int(sizes[i]), int(lv.draws[i]), int(lv.offsets[i]), int(lv.offsets[i + 1]))

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "index", "size", "M", "child_lo", "child_hi"])
        w.writerows(self.rows())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _build_levels(draws_by_level: dict[int, np.ndarray], horizon: int, level0_count: int) -> list[Level]:
    levels = [Level(0, level0_count)]
    prev_sizes = None
    for n in range(1, horizon + 1):
        m = draws_by_level[n]
        offsets = np.zeros(len(m) + 1, dtype=np.int64)
        np.cumsum(m, out=offsets[1:])
        if prev_sizes is None:
            sizes = m.astype(np.int64, copy=True)
        else:
            cs = np.zeros(len(prev_sizes) + 1, dtype=np.int64)
            np.cumsum(prev_sizes, out=cs[1:])
            sizes = cs[offsets[1:]] - cs[offsets[:-1]]
        levels.append(Level(n, len(m), m, offsets, sizes))
        prev_sizes = sizes
    return levels


def run(config: RunConfig, replica: int = 0) -> RunLog:
    """One replica; deterministic in (config.seed, replica)."""
    config.check()
    rng = make_rng(config.seed, replica)
    need = config.boxes
    total = need
    draws: dict[int, np.ndarray] = {}
    for n in range(config.horizon, 0, -1):
        m = config.mechanisms[n - 1].sample_many(rng, need)
        draws[n] = m
        need = int(m.sum())
        total += need
        if total > config.budget:
            partial = {k: len(v) for k, v in draws.items()}
            partial[n - 1] = need
            raise BudgetExceededError(
                f"replica {replica}: {total} boxes exceed the budget of {config.budget} "
                f"(level {n - 1} alone needs {need})",
                partial,
            )
    return RunLog(_build_levels(draws, config.horizon, need), config.seed, replica)


def _run_star(args):
    return run(*args)


def run_replicas(config: RunConfig, workers: Optional[int] = None) -> list[RunLog]:
    """All ``config.replicas`` replicas, optionally across processes; order is by replica index."""
    jobs = [(config, r) for r in range(config.replicas)]
    if workers and workers > 1 and config.replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_star, jobs))
    return [run(*j) for j in jobs]


def replay(draw_sequences: Sequence[Sequence[int]]) -> RunLog:
    """Deterministic run from explicit draws; ``draw_sequences[n-1]`` lists M_n(1), M_n(2), ...

    Level-0 boxes are unlimited. At higher levels a box is kept only while
    the level below still has enough boxes to serve its draw, so the log
    holds every box that the given draws fully determine.
    """
    draws: dict[int, np.ndarray] = {}
    available = None
    for n, seq in enumerate(draw_sequences, start=1):
        m = np.asarray(seq, dtype=np.int64)
        if (m < 0).any():
            raise ValueError("draws must be non-negative")
        if available is not None:
            keep = int(np.searchsorted(np.cumsum(m), available, side="right"))
            m = m[:keep]
        draws[n] = m
        available = len(m)
    horizon = len(draw_sequences)
    level0 = int(draws[1].sum()) if horizon else 0
    return RunLog(_build_levels(draws, horizon, level0))


def read_draws_csv(fh) -> list[list[int]]:
    """Parse ``level,index,M`` rows (index from 1) into per-level draw lists."""
    by_level: dict[int, dict[int, int]] = {}
    for row in csv.DictReader(fh):
        by_level.setdefault(int(row["level"]), {})[int(row["index"])] = int(row["M"])
    if not by_level:
        return []
    out = []
    for n in range(1, max(by_level) + 1):
        seq = by_level.get(n, {})
        idx = sorted(seq)
        if idx != list(range(1, len(idx) + 1)):
            raise ValueError(f"level {n}: indices must run 1..k without gaps")
        out.append([seq[i] for i in idx])
    return out


def write_draws_csv(draw_sequences: Sequence[Sequence[int]], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["level", "index", "M"])
    for n, seq in enumerate(draw_sequences, start=1):
        for i, m in enumerate(seq, start=1):
            w.writerow([n, i, int(m)])


# ---------------------------------------------------------------------------
# statistics


LogOrLogs = Union[RunLog, Sequence[RunLog]]


def _level_sizes(logs: LogOrLogs, n: int) -> np.ndarray:
    if isinstance(logs, RunLog):
        return logs.sizes(n)
    return np.concatenate([lg.sizes(n) for lg in logs])


@dataclass(frozen=True)
class EmpiricalPmf:
    freq: np.ndarray
    stderr: np.ndarray
    sample_size: int

    def to_dict(self):
        return {"freq": self.freq.tolist(), "stderr": self.stderr.tolist(), "sample_size": self.sample_size}


def empirical_pmf(logs: LogOrLogs, level: int, jmax: int) -> EmpiricalPmf:
    """Relative frequencies of sizes 0..jmax at ``level`` with binomial standard errors."""
    s = _level_sizes(logs, level)
    n = len(s)
    counts = np.bincount(np.clip(s, 0, jmax + 1), minlength=jmax + 2)[: jmax + 1]
    freq = counts / n
    return EmpiricalPmf(freq, np.sqrt(freq * (1 - freq) / n), n)


def empirical_mean(logs: LogOrLogs, level: int) -> tuple[float, float]:
    """(sample mean, standard error) of level sizes."""
    s = _level_sizes(logs, level).astype(float)
    if len(s) < 2:
        return float(s.mean()), math.nan
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s)))


def lag1_autocorrelation(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    den = float(d @ d)
    return 0.0 if den == 0 else float(d[:-1] @ d[1:]) / den


def summary(logs: LogOrLogs, jmax: int = 10) -> dict:
    """Per-level empirical pmf and mean with standard errors (JSON-ready)."""
    first = logs if isinstance(logs, RunLog) else logs[0]
    out = {"levels": []}
    for n in range(first.horizon + 1):
        mean, se = empirical_mean(logs, n)
        out["levels"].append({"level": n, "mean": mean, "mean_stderr": se,
                              "pmf": empirical_pmf(logs, n, jmax).to_dict()})
    return out


def summary_json(logs: LogOrLogs, jmax: int = 10) -> str:
    return json.dumps(summary(logs, jmax), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# renewal coarse-graining


@dataclass
class RenewalLog:
    """Box counts placed at renewal positions s(i) = t(1) + ... + t(i)."""

    spacings: np.ndarray
    positions: np.ndarray
    log: RunLog

    def counts_at(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """(positions, counts) of the level-n sites."""
        c = self.log.levels[n].count
        return self.positions[:c], self.log.sizes(n)


Spacings = Union[Sequence[float], np.ndarray, Callable[[np.random.Generator, int], np.ndarray]]


def coarse_grain(spacings: Spacings, config: RunConfig, replica: int = 0) -> RenewalLog:
    """Run the process on a renewal sequence of sites.

    ``spacings`` is either an explicit positive sequence, long enough for the
    largest level, or a callable ``(rng, size) -> array`` drawing iid gaps
    from a stream separate from the box-filling draws.
    """
    log = run(config, replica)
    need = max(lv.count for lv in log.levels)
    if callable(spacings):
        t = np.asarray(spacings(make_rng(config.seed, replica, stream=1), need), dtype=float)
    else:
        t = np.asarray(spacings, dtype=float)
        if len(t) < need:
            raise ValueError(f"need {need} spacings, got {len(t)}")
        t = t[:need]
    if (t <= 0).any():
        raise ValueError("spacings must be positive")
    return RenewalLog(t, np.cumsum(t), log)
