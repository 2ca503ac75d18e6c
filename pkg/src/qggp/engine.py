"""Two-player alternating-move board games behind one interface.

Three families are provided: k-in-a-row Tic-Tac-Toe on a w x h board,
Connect Four (gravity drops, moves are column indices) and Hex (First joins
top and bottom, Second joins left and right).

Cells are stored row-major in a plain string using ``x`` for First, ``o``
for Second and ``.`` for an empty cell.  For Connect Four row 0 is the
bottom row.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

EMPTY = "."
SYMBOLS = ("x", "o")


class ConfigError(ValueError):
    """Raised for an inconsistent game configuration."""


class IllegalMoveError(ValueError):
    """Raised when a move is not legal in the given state."""


class Role(enum.IntEnum):
    FIRST = 0
    SECOND = 1

    @property
    def other(self) -> "Role":
        return Role(1 - self)

    @property
    def symbol(self) -> str:
        return SYMBOLS[self]


class GameKind(str, enum.Enum):
    TICTACTOE = "ttt"
    CONNECT_FOUR = "c4"
    HEX = "hex"


class GoalVector(NamedTuple):
    goal_first: int
    goal_second: int

    def for_role(self, role: Role) -> int:
        return self[role]


WIN_FIRST = GoalVector(100, 0)
WIN_SECOND = GoalVector(0, 100)
DRAW = GoalVector(50, 50)


@dataclass(frozen=True)
class GameConfig:
    kind: GameKind
    width: int
    height: int
    win_length: int = 0

    def __post_init__(self) -> None:
        kind = GameKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.width < 2 or self.height < 2:
            raise ConfigError(f"board must be at least 2x2, got {self.width}x{self.height}")
        if kind is GameKind.HEX:
            if self.width != self.height:
                raise ConfigError("hex board must be square")
            object.__setattr__(self, "win_length", 0)
            return
        if self.win_length < 1:
            raise ConfigError(f"win_length must be positive, got {self.win_length}")
        if self.win_length > max(self.width, self.height):
            raise ConfigError(
                f"win_length {self.win_length} does not fit on a "
                f"{self.width}x{self.height} board"
            )

    @classmethod
    def tictactoe(cls, size: int = 3, win_length: int = 3) -> "GameConfig":
        return cls(GameKind.TICTACTOE, size, size, win_length)

    @classmethod
    def connect_four(cls, width: int = 4, height: int = 4, win_length: int = 4) -> "GameConfig":
        return cls(GameKind.CONNECT_FOUR, width, height, win_length)

    @classmethod
    def hex(cls, size: int = 3) -> "GameConfig":
        return cls(GameKind.HEX, size, size, 0)

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def tag(self) -> str:
        """Config part of the state key, e.g. ``ttt:3x3k3``."""
        return f"{self.kind.value}:{self.width}x{self.height}k{self.win_length}"

    @classmethod
    def from_tag(cls, tag: str) -> "GameConfig":
        try:
            kind, dims = tag.split(":")
            size, k = dims.split("k")
            w, h = size.split("x")
            return cls(GameKind(kind), int(w), int(h), int(k))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad game tag {tag!r}") from exc


class _Geometry:
    """Precomputed lookup tables for one configuration."""

    def __init__(self, config: GameConfig) -> None:
        w, h = config.width, config.height
        self.lines_through: list[list[tuple[int, ...]]] = [[] for _ in range(w * h)]
        self.neighbors: list[tuple[int, ...]] = []
        if config.kind is GameKind.HEX:
            for r in range(h):
                for c in range(w):
                    adj = []
                    for dr, dc in ((0, 1), (0, -1), (-1, 0), (1, 0), (-1, 1), (1, -1)):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < h and 0 <= cc < w:
                            adj.append(rr * w + cc)
                    self.neighbors.append(tuple(adj))
            return
        k = config.win_length
        for r in range(h):
            for c in range(w):
                for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                    er, ec = r + dr * (k - 1), c + dc * (k - 1)
                    if not (0 <= er < h and 0 <= ec < w):
                        continue
                    line = tuple((r + dr * i) * w + (c + dc * i) for i in range(k))
                    for idx in line:
                        self.lines_through[idx].append(line)


@lru_cache(maxsize=None)
def _geometry(config: GameConfig) -> _Geometry:
    return _Geometry(config)


@dataclass(frozen=True)
class GameState:
    config: GameConfig
    cells: str
    to_move: Role = Role.FIRST
    move_count: int = 0
    goals: Optional[GoalVector] = field(default=None, compare=False, repr=False)

    @property
    def is_terminal(self) -> bool:
        return self.goals is not None

    @property
    def key(self) -> str:
        return f"{self.config.tag}:{SYMBOLS[self.to_move]}|{self.cells}"

    def cell(self, row: int, col: int) -> str:
        return self.cells[row * self.config.width + col]


def initial_state(config: GameConfig) -> GameState:
    return GameState(config, EMPTY * config.n_cells, Role.FIRST, 0, None)


def from_cells(config: GameConfig, cells: str) -> GameState:
    """Build a position from a row-major cell string, deriving the mover.

    Stone counts must be consistent with strict alternation; a board with
    two winners is rejected.
    """
    if len(cells) != config.n_cells or set(cells) - {EMPTY, *SYMBOLS}:
        raise ValueError(f"bad cell string {cells!r} for {config.tag}")
    nx, no = cells.count("x"), cells.count("o")
    if nx - no not in (0, 1):
        raise ValueError(f"stone counts x={nx} o={no} violate alternation")
    if config.kind is GameKind.CONNECT_FOUR:
        w = config.width
        for i in range(w, config.n_cells):
            if cells[i] != EMPTY and cells[i - w] == EMPTY:
                raise ValueError("connect four stone floating above an empty cell")
    to_move = Role.FIRST if nx == no else Role.SECOND
    goals = _evaluate_full(config, cells)
    return GameState(config, cells, to_move, nx + no, goals)


def legal_moves(state: GameState) -> list[int]:
    if state.goals is not None:
        return []
    cells = state.cells
    if state.config.kind is GameKind.CONNECT_FOUR:
        top = state.config.n_cells - state.config.width
        return [c for c in range(state.config.width) if cells[top + c] == EMPTY]
    return [i for i, ch in enumerate(cells) if ch == EMPTY]


def apply_move(state: GameState, move: int) -> GameState:
    config = state.config
    cells = state.cells
    if state.goals is not None:
        raise IllegalMoveError(f"move {move} played in a terminal state")
    if config.kind is GameKind.CONNECT_FOUR:
        w = config.width
        if not 0 <= move < w:
            raise IllegalMoveError(f"column {move} out of range")
        idx = move
        while idx < config.n_cells and cells[idx] != EMPTY:
            idx += w
        if idx >= config.n_cells:
            raise IllegalMoveError(f"column {move} is full")
    else:
        if not 0 <= move < config.n_cells:
            raise IllegalMoveError(f"cell {move} out of range")
        if cells[move] != EMPTY:
            raise IllegalMoveError(f"cell {move} is occupied")
        idx = move
    mover = state.to_move
    sym = SYMBOLS[mover]
    new_cells = cells[:idx] + sym + cells[idx + 1:]
    count = state.move_count + 1
    goals = _evaluate_after(config, new_cells, idx, mover, count)
    return GameState(config, new_cells, mover.other, count, goals)


def terminal_eval(state: GameState) -> Optional[GoalVector]:
    return state.goals


def state_key(state: GameState) -> str:
    return state.key


def _win_goals(role: Role) -> GoalVector:
    return WIN_FIRST if role is Role.FIRST else WIN_SECOND


def _evaluate_after(config: GameConfig, cells: str, idx: int, mover: Role, count: int) -> Optional[GoalVector]:
    # only the player who just moved can have completed a line or chain
    geo = _geometry(config)
    sym = SYMBOLS[mover]
    if config.kind is GameKind.HEX:
        if _hex_connected(config, geo, cells, mover):
            return _win_goals(mover)
        return None
    for line in geo.lines_through[idx]:
        for j in line:
            if cells[j] != sym:
                break
        else:
            return _win_goals(mover)
    if count == config.n_cells:
        return DRAW
    return None


def _evaluate_full(config: GameConfig, cells: str) -> Optional[GoalVector]:
    geo = _geometry(config)
    winners = set()
    if config.kind is GameKind.HEX:
        for role in Role:
            if _hex_connected(config, geo, cells, role):
                winners.add(role)
    else:
        for idx, lines in enumerate(geo.lines_through):
            ch = cells[idx]
            if ch == EMPTY:
                continue
            if any(all(cells[j] == ch for j in line) for line in lines):
                winners.add(Role(SYMBOLS.index(ch)))
    if len(winners) > 1:
        raise ValueError("both players hold a winning line")
    if winners:
        return _win_goals(winners.pop())
    if EMPTY not in cells:
        return DRAW
    return None


def _hex_connected(config: GameConfig, geo: _Geometry, cells: str, role: Role) -> bool:
    w, h = config.width, config.height
    sym = SYMBOLS[role]
    if role is Role.FIRST:
        start = [c for c in range(w) if cells[c] == sym]
        last = h - 1

        def at_goal(i: int) -> bool:
            return i // w == last
    else:
        start = [r * w for r in range(h) if cells[r * w] == sym]
        last = w - 1

        def at_goal(i: int) -> bool:
            return i % w == last
    seen = set(start)
    stack = list(start)
    while stack:
        i = stack.pop()
        if at_goal(i):
            return True
        for j in geo.neighbors[i]:
            if j not in seen and cells[j] == sym:
                seen.add(j)
                stack.append(j)
    return False


def render(state: GameState) -> str:
    """Text board; Connect Four is printed with its bottom row last."""
    w = state.config.width
    rows = [state.cells[r * w:(r + 1) * w] for r in range(state.config.height)]
    if state.config.kind is GameKind.CONNECT_FOUR:
        rows = rows[::-1]
        rows.append("".join(str(c % 10) for c in range(w)))
    elif state.config.kind is GameKind.HEX:
        rows = [" " * r + " ".join(row) for r, row in enumerate(rows)]
    return "\n".join(rows)
