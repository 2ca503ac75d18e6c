"""Exhaustive reference computations for small boards and a toy MDP.

These are kept independent of the learners: game trees are expanded through
the engine only, and the toy MDP is solved by value iteration over its own
transition table.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .engine import GameConfig, GameState, apply_move, initial_state, legal_moves
from .learning import LearnerParams, QTable, Trajectory, backward_update, best_action, q_value

DEFAULT_NODE_LIMIT = 200_000


class NodeLimitExceeded(RuntimeError):
    pass


def reachable_states(config: GameConfig, node_limit: int = DEFAULT_NODE_LIMIT) -> dict[str, GameState]:
    """Every position reachable from the start, terminal ones included."""
    start = initial_state(config)
    seen = {start.key: start}
    frontier = [start]
    while frontier:
        state = frontier.pop()
        for move in legal_moves(state):
            child = apply_move(state, move)
            if child.key not in seen:
                seen[child.key] = child
                if len(seen) > node_limit:
                    raise NodeLimitExceeded(
                        f"{config.tag} has more than {node_limit} reachable states; refusing to enumerate"
                    )
                frontier.append(child)
    return seen


def random_play_distribution(config: GameConfig, node_limit: int = DEFAULT_NODE_LIMIT) -> dict[str, Fraction]:
    """Exact probabilities of first win / second win / draw when both sides move uniformly at random."""
    reachable_states(config, node_limit)  # enforces the limit before recursing

    @lru_cache(maxsize=None)
    def dist(state: GameState) -> tuple[Fraction, Fraction, Fraction]:
        if state.goals is not None:
            g = state.goals.goal_first
            return (Fraction(g == 100), Fraction(g == 0), Fraction(g == 50))
        moves = legal_moves(state)
        acc = [Fraction(0)] * 3
        for m in moves:
            for i, p in enumerate(dist(apply_move(state, m))):
                acc[i] += p
        n = len(moves)
        return (acc[0] / n, acc[1] / n, acc[2] / n)

    first, second, draw = dist(initial_state(config))
    return {"first": first, "second": second, "draw": draw}


def minimax_value(state: GameState) -> int:
    """Goal of First under perfect play by both sides (100, 50 or 0)."""
    return _minimax(state)


@lru_cache(maxsize=None)
def _minimax(state: GameState) -> int:
    if state.goals is not None:
        return state.goals.goal_first
    values = [_minimax(apply_move(state, m)) for m in legal_moves(state)]
    return max(values) if state.to_move == 0 else min(values)


def winning_moves(state: GameState) -> list[int]:
    """Moves that keep the best achievable perfect-play result for the mover."""
    values = {m: _minimax(apply_move(state, m)) for m in legal_moves(state)}
    best = max(values.values()) if state.to_move == 0 else min(values.values())
    return [m for m, v in values.items() if v == best]


@dataclass(frozen=True)
class ToyMdp:
    """Two decision states, A and B, with deterministic transitions.

    A: move 0 leads to B with no reward, move 1 ends with goal 0.5.
    B: move 0 ends with goal 1, move 1 ends with goal 0.
    """

    start: str = "A"

    # state -> move -> (next state or None, terminal goal)
    transitions = {
        "A": {0: ("B", 0.0), 1: (None, 0.5)},
        "B": {0: (None, 1.0), 1: (None, 0.0)},
    }

    def moves(self, state: str) -> tuple[int, ...]:
        return tuple(sorted(self.transitions[state]))


def toy_value_iteration(gamma: float, tol: float = 1e-12, mdp: ToyMdp = ToyMdp()) -> dict[tuple[str, int], float]:
    q = {(s, a): 0.0 for s, acts in mdp.transitions.items() for a in acts}
    while True:
        new = {}
        for (s, a) in q:
            nxt, goal = mdp.transitions[s][a]
            if nxt is None:
                new[(s, a)] = goal
            else:
                new[(s, a)] = goal + gamma * max(q[(nxt, b)] for b in mdp.moves(nxt))
        delta = max(abs(new[k] - q[k]) for k in q)
        q = new
        if delta < tol:
            return q


def train_toy_mdp(
    params: LearnerParams,
    epsilon: float = 0.3,
    max_episodes: int = 100_000,
    tol: float = 1e-6,
    seed: int = 0,
    mdp: ToyMdp = ToyMdp(),
) -> tuple[QTable, int]:
    """Train with epsilon-greedy episodes and end-of-match backward updates.

    Stops once every pair is within ``tol`` of the value-iteration fixpoint;
    returns the table and the number of episodes used.
    """
    rng = random.Random(seed)
    target = toy_value_iteration(params.gamma, mdp=mdp)
    table = QTable()
    for episode in range(1, max_episodes + 1):
        traj = Trajectory()
        state = mdp.start
        while True:
            moves = mdp.moves(state)
            move = None if rng.random() < epsilon else best_action(table, state, moves, rng)
            if move is None:
                move = moves[rng.randrange(len(moves))]
            traj.record(state, move, moves)
            nxt, goal = mdp.transitions[state][move]
            if nxt is None:
                traj.final_goal = goal
                break
            state = nxt
        backward_update(table, traj, params)
        if all(abs((q_value(table, s, a) or 0.0) - v) <= tol for (s, a), v in target.items()):
            return table, episode
    return table, max_episodes
