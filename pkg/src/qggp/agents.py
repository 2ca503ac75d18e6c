"""Move-selection policies: random, epsilon-greedy Q, Q with Monte Carlo fallback, flat MCS and TD(lambda)."""

from __future__ import annotations

import enum
import random
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .engine import GameState, GoalVector, apply_move, legal_moves
from .learning import (
    LearnerParams,
    QTable,
    Trajectory,
    backward_update,
    best_action,
    max_q,
)


class NoMovesError(ValueError):
    """Raised when a move is requested in a terminal state."""


class BudgetMode(str, enum.Enum):
    WALL_CLOCK_MS = "ms"
    PLAYOUTS_PER_ACTION = "playouts"


@dataclass(frozen=True)
class McsBudget:
    mode: BudgetMode = BudgetMode.WALL_CLOCK_MS
    amount: int = 50

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", BudgetMode(self.mode))
        if self.amount < 1:
            raise ValueError(f"MCS budget must be >= 1, got {self.amount}")

    @classmethod
    def millis(cls, ms: int = 50) -> "McsBudget":
        return cls(BudgetMode.WALL_CLOCK_MS, ms)

    @classmethod
    def playouts(cls, n: int) -> "McsBudget":
        return cls(BudgetMode.PLAYOUTS_PER_ACTION, n)

    def label(self) -> str:
        return f"{self.amount}{self.mode.value}"


@dataclass(frozen=True)
class TdParams:
    alpha: float = 0.3
    gamma: float = 1.0
    lam: float = 0.7
    epsilon: float = 0.01

    def __post_init__(self) -> None:
        for name in ("alpha", "gamma", "lam", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


EligibilityTraces = dict  # (state_key, move) -> trace value


def _require_moves(state: GameState) -> list[int]:
    legal = legal_moves(state)
    if not legal:
        raise NoMovesError("no legal moves in a terminal state")
    return legal


def select_random(state: GameState, rng: random.Random) -> int:
    legal = _require_moves(state)
    return legal[rng.randrange(len(legal))]


def random_playout(state: GameState, rng: random.Random) -> GoalVector:
    while state.goals is None:
        legal = legal_moves(state)
        state = apply_move(state, legal[rng.randrange(len(legal))])
    return state.goals


def mcs_evaluate(state: GameState, budget: McsBudget, rng: random.Random) -> tuple[list[int], list[float], list[int]]:
    """Round-robin random playouts over the legal moves.

    Returns ``(moves, mean_goal, playouts)`` where the mean is the mover's
    normalized goal.  Every move gets at least one playout.
    """
    moves = _require_moves(state)
    mover = state.to_move
    children = [apply_move(state, a) for a in moves]
    totals = [0.0] * len(moves)
    counts = [0] * len(moves)

    def sweep() -> None:
        for i, child in enumerate(children):
            totals[i] += random_playout(child, rng)[mover]
            counts[i] += 1

    if budget.mode is BudgetMode.PLAYOUTS_PER_ACTION:
        for _ in range(budget.amount):
            sweep()
    else:
        deadline = time.perf_counter() + budget.amount / 1000.0
        sweep()
        while time.perf_counter() < deadline:
            sweep()
    means = [t / (100.0 * c) for t, c in zip(totals, counts)]
    return moves, means, counts


def mcs_select(state: GameState, budget: McsBudget, rng: random.Random) -> int:
    moves, means, _ = mcs_evaluate(state, budget, rng)
    best = max(means)
    ties = [a for a, v in zip(moves, means) if v == best]
    return ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]


def _epsilon_greedy(
    state: GameState,
    table: QTable,
    epsilon: float,
    rng: random.Random,
    fallback: Callable[[GameState, random.Random], int],
) -> tuple[int, bool]:
    """Return ``(move, explored)``; ``fallback`` handles states absent from the table."""
    legal = _require_moves(state)
    if rng.random() < epsilon:
        return legal[rng.randrange(len(legal))], True
    move = best_action(table, state.key, legal, rng)
    if move is None:
        return fallback(state, rng), False
    return move, False


def select_q(state: GameState, table: QTable, epsilon: float, rng: random.Random) -> int:
    return _epsilon_greedy(state, table, epsilon, rng, select_random)[0]


def select_qm(state: GameState, table: QTable, epsilon: float, budget: McsBudget, rng: random.Random) -> int:
    return _epsilon_greedy(state, table, epsilon, rng, lambda s, r: mcs_select(s, budget, r))[0]


def td_step(
    traces: EligibilityTraces,
    table: QTable,
    prev_pair: tuple[str, int],
    reward: float,
    next_state_info: Optional[tuple[str, Sequence[int]]],
    params: TdParams,
    exploratory: bool = False,
) -> tuple[QTable, EligibilityTraces]:
    """One Watkins Q(lambda) update with replacing traces.

    ``next_state_info`` is ``(key, legal_moves)`` of the learner's next
    decision state, or None when the match ended.
    """
    key, move = prev_pair
    bootstrap = 0.0 if next_state_info is None else max_q(table, *next_state_info)
    row = table.entries.setdefault(key, {})
    delta = reward + params.gamma * bootstrap - row.get(move, 0.0)
    traces[prev_pair] = 1.0
    step = params.alpha * delta
    entries = table.entries
    for (k, a), e in traces.items():
        r = entries.setdefault(k, {})
        r[a] = r.get(a, 0.0) + step * e
    if exploratory:
        traces.clear()
    else:
        decay = params.gamma * params.lam
        for pair in traces:
            traces[pair] *= decay
    return table, traces


class Agent:
    """A policy seated in a match; learners also see match boundaries."""

    name = "agent"
    learns = False

    def start_match(self, m: int, epsilon: float) -> None:
        pass

    def choose(self, state: GameState, rng: random.Random) -> int:
        raise NotImplementedError

    def end_match(self, trajectory: Trajectory) -> None:
        pass


class RandomPlayer(Agent):
    name = "random"

    def choose(self, state: GameState, rng: random.Random) -> int:
        return select_random(state, rng)


class McsPlayer(Agent):
    name = "mcs"

    def __init__(self, budget: McsBudget = McsBudget()) -> None:
        self.budget = budget

    def choose(self, state: GameState, rng: random.Random) -> int:
        return mcs_select(state, self.budget, rng)


class QPlayer(Agent):
    """Epsilon-greedy tabular player that learns once per match."""

    name = "q"
    learns = True

    def __init__(self, table: QTable, params: LearnerParams = LearnerParams(), epsilon: float = 0.0) -> None:
        self.table = table
        self.params = params
        self.epsilon = epsilon

    def start_match(self, m: int, epsilon: float) -> None:
        self.epsilon = epsilon

    def fallback(self, state: GameState, rng: random.Random) -> int:
        return select_random(state, rng)

    def choose(self, state: GameState, rng: random.Random) -> int:
        return _epsilon_greedy(state, self.table, self.epsilon, rng, self.fallback)[0]

    def end_match(self, trajectory: Trajectory) -> None:
        if trajectory.pairs:
            backward_update(self.table, trajectory, self.params)


class QMPlayer(QPlayer):
    """QPlayer whose unknown-state fallback is a Monte Carlo search."""

    name = "qm"

    def __init__(
        self,
        table: QTable,
        params: LearnerParams = LearnerParams(),
        epsilon: float = 0.0,
        budget: McsBudget = McsBudget(),
    ) -> None:
        super().__init__(table, params, epsilon)
        self.budget = budget

    def fallback(self, state: GameState, rng: random.Random) -> int:
        return mcs_select(state, self.budget, rng)


class TdLambdaPlayer(Agent):
    """Online Watkins Q(lambda) learner with a fixed exploration rate."""

    name = "td"
    learns = True

    def __init__(self, table: QTable, params: TdParams = TdParams()) -> None:
        self.table = table
        self.params = params
        self.epsilon = params.epsilon
        self.traces: EligibilityTraces = {}
        self._prev: Optional[tuple[str, int]] = None

    def start_match(self, m: int, epsilon: float) -> None:
        self.epsilon = epsilon
        self.traces.clear()
        self._prev = None

    def choose(self, state: GameState, rng: random.Random) -> int:
        move, explored = _epsilon_greedy(state, self.table, self.epsilon, rng, select_random)
        key = state.key
        if self._prev is not None:
            td_step(self.traces, self.table, self._prev, 0.0, (key, legal_moves(state)), self.params, explored)
        self._prev = (key, move)
        return move

    def end_match(self, trajectory: Trajectory) -> None:
        if self._prev is not None:
            td_step(self.traces, self.table, self._prev, trajectory.final_goal, None, self.params)
        self._prev = None
        self.traces.clear()
