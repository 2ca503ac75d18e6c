"""Tabular Q-values, the end-of-match backward update and epsilon schedules."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .engine import ConfigError, GameConfig


class TableFormatError(ValueError):
    """A persisted Q-table line could not be parsed."""


class IncompatibleTableError(ValueError):
    """A persisted Q-table belongs to a different game configuration."""


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = 0.1
    gamma: float = 0.9

    def __post_init__(self) -> None:
        for name in ("alpha", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


class ScheduleKind(str, enum.Enum):
    FIXED = "fixed"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class EpsilonSchedule:
    kind: ScheduleKind
    fixed_value: float = 0.0
    amplitude: float = 0.5
    offset: float = 0.0
    horizon: int = 30000

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.kind is ScheduleKind.FIXED:
            if not 0.0 <= self.fixed_value <= 1.0:
                raise ValueError(f"fixed epsilon must lie in [0, 1], got {self.fixed_value}")
        else:
            if self.amplitude < 0 or self.offset < 0 or self.amplitude + self.offset > 1:
                raise ValueError("need amplitude, offset >= 0 and amplitude + offset <= 1")
            if self.horizon < 1:
                raise ValueError("horizon must be positive")

    @classmethod
    def fixed(cls, value: float) -> "EpsilonSchedule":
        return cls(ScheduleKind.FIXED, fixed_value=value)

    @classmethod
    def dynamic(cls, amplitude: float = 0.5, offset: float = 0.0, horizon: int = 30000) -> "EpsilonSchedule":
        return cls(ScheduleKind.DYNAMIC, amplitude=amplitude, offset=offset, horizon=horizon)

    @classmethod
    def parse(cls, text: str, horizon: Optional[int] = None) -> "EpsilonSchedule":
        """Parse ``fixed:0.1`` or ``dynamic:a:b[:l]``; ``l`` falls back to ``horizon``."""
        parts = text.strip().split(":")
        try:
            if parts[0] == "fixed" and len(parts) == 2:
                return cls.fixed(float(parts[1]))
            if parts[0] == "dynamic" and len(parts) in (3, 4):
                l = int(parts[3]) if len(parts) == 4 else horizon
                if l is None:
                    raise ValueError("dynamic schedule needs a horizon")
                return cls.dynamic(float(parts[1]), float(parts[2]), l)
        except ValueError as exc:
            raise ValueError(f"bad schedule {text!r}: {exc}") from exc
        raise ValueError(f"bad schedule {text!r}; expected fixed:E or dynamic:A:B[:L]")

    def label(self) -> str:
        if self.kind is ScheduleKind.FIXED:
            return f"fixed:{self.fixed_value:g}"
        return f"dynamic:{self.amplitude:g}:{self.offset:g}:{self.horizon}"


def epsilon_at(schedule: EpsilonSchedule, m: int) -> float:
    if schedule.kind is ScheduleKind.FIXED:
        return schedule.fixed_value
    if m > schedule.horizon:
        return 0.0
    return schedule.amplitude * math.cos(m * math.pi / (2 * schedule.horizon)) + schedule.offset


@dataclass
class Trajectory:
    """The learner's own decisions in one match, in play order."""

    pairs: list[tuple[str, int, tuple[int, ...]]] = field(default_factory=list)
    final_state_key: str = ""
    final_goal: float = 0.0

    def record(self, key: str, move: int, legal: Sequence[int]) -> None:
        self.pairs.append((key, move, tuple(legal)))


class QTable:
    """Map from state key to ``{move: value}``.

    A state is *known* once at least one of its pairs has been stored; for a
    known state, pairs never stored read as 0.
    """

    def __init__(self, config: Optional[GameConfig] = None) -> None:
        self.config = config
        self.entries: dict[str, dict[int, float]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def __contains__(self, state_key: str) -> bool:
        return state_key in self.entries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QTable):
            return NotImplemented
        return self.config == other.config and self.entries == other.entries

    @property
    def n_states(self) -> int:
        return len(self.entries)

    def set(self, state_key: str, move: int, value: float) -> None:
        self.entries.setdefault(state_key, {})[move] = value

    def items(self) -> Iterable[tuple[str, int, float]]:
        for key, row in self.entries.items():
            for move, value in row.items():
                yield key, move, value

    def copy(self) -> "QTable":
        dup = QTable(self.config)
        dup.entries = {k: dict(v) for k, v in self.entries.items()}
        return dup


def q_value(table: QTable, state_key: str, move: int) -> Optional[float]:
    """Stored value, 0 for an unseen pair of a known state, None for an unknown state."""
    row = table.entries.get(state_key)
    if row is None:
        return None
    return row.get(move, 0.0)


def max_q(table: QTable, state_key: str, legal: Iterable[int]) -> float:
    row = table.entries.get(state_key)
    if not row:
        return 0.0
    return max((row.get(a, 0.0) for a in legal), default=0.0)


def best_action(table: QTable, state_key: str, legal: Sequence[int], tie_rng: random.Random) -> Optional[int]:
    """Greedy move with uniform tie-breaking; None if the state is unknown."""
    row = table.entries.get(state_key)
    if row is None:
        return None
    best = -math.inf
    ties: list[int] = []
    for a in legal:
        v = row.get(a, 0.0)
        if v > best:
            best = v
            ties = [a]
        elif v == best:
            ties.append(a)
    if len(ties) == 1:
        return ties[0]
    return ties[tie_rng.randrange(len(ties))]


def backward_update(table: QTable, trajectory: Trajectory, params: LearnerParams) -> QTable:
    """Apply the end-of-match sweep from the last decision back to the first.

    The final pair is rewarded with the learner's goal and has no successor
    value; each earlier pair bootstraps from the greedy value of the
    learner's next decision state, which has already been updated in this
    sweep.  The table is modified in place and returned.
    """
    pairs = trajectory.pairs
    if not pairs:
        raise ValueError("cannot update from an empty trajectory")
    if not 0.0 <= trajectory.final_goal <= 1.0:
        raise ValueError(f"final goal {trajectory.final_goal} outside [0, 1]")
    alpha, gamma = params.alpha, params.gamma
    entries = table.entries
    next_key: Optional[str] = None
    next_legal: tuple[int, ...] = ()
    for key, move, legal in reversed(pairs):
        if next_key is None:
            target = trajectory.final_goal
        else:
            nrow = entries.get(next_key)
            target = gamma * max((nrow.get(a, 0.0) for a in next_legal), default=0.0) if nrow else 0.0
        row = entries.get(key)
        if row is None:
            row = entries[key] = {}
        row[move] = (1.0 - alpha) * row.get(move, 0.0) + alpha * target
        next_key, next_legal = key, legal
    return table


def _format_value(v: float) -> str:
    return f"{v:.17g}"


def save_qtable(table: QTable, destination: Union[str, Path]) -> Path:
    path = Path(destination)
    header = "# qtable " + (table.config.tag if table.config else "-")
    lines = [header]
    for key, move, value in sorted(table.items()):
        lines.append(f"{key}\t{move}\t{_format_value(value)}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write Q-table to {path}: {exc}") from exc
    return path


def load_qtable(source: Union[str, Path], expected: Optional[GameConfig] = None) -> QTable:
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read Q-table from {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# qtable "):
        raise TableFormatError(f"{path}:1: missing '# qtable' header")
    tag = lines[0][len("# qtable "):].strip()
    try:
        config = None if tag == "-" else GameConfig.from_tag(tag)
    except ConfigError as exc:
        raise TableFormatError(f"{path}:1: {exc}") from exc
    if expected is not None and config != expected:
        raise IncompatibleTableError(
            f"{path} holds a table for {tag}, not {expected.tag}"
        )
    table = QTable(config)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TableFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
        key, move_s, value_s = fields
        try:
            move = int(move_s)
            value = float(value_s)
        except ValueError as exc:
            raise TableFormatError(f"{path}:{lineno}: {exc}") from exc
        if move < 0:
            raise TableFormatError(f"{path}:{lineno}: negative move index {move}")
        if not 0.0 <= value <= 1.0:
            raise TableFormatError(f"{path}:{lineno}: value {value_s} outside [0, 1]")
        table.set(key, move, value)
    return table
