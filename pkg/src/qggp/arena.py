"""Matches, the training protocol against a random opponent, win-rate statistics and exports."""

from __future__ import annotations

import csv
import enum
import math
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .agents import (
    Agent,
    McsBudget,
    QMPlayer,
    QPlayer,
    RandomPlayer,
    TdLambdaPlayer,
    TdParams,
)
from .engine import GameConfig, GoalVector, Role, apply_move, initial_state, legal_moves
from .learning import EpsilonSchedule, LearnerParams, QTable, Trajectory, epsilon_at

CSV_HEADER = (
    "match_index",
    "result",
    "epsilon",
    "window_win_rate",
    "cumulative_win_rate",
    "qtable_states",
    "elapsed_ms",
)
SUMMARY_HEADER = ("l", "learner", "mean_convergence_rate", "stddev")


class ProtocolError(RuntimeError):
    """An agent returned a move that is not legal."""


class InsufficientDataError(ValueError):
    pass


class SeriesFormatError(ValueError):
    pass


class LearnerKind(str, enum.Enum):
    Q = "q"
    QM = "qm"
    TD = "td"


@dataclass
class MatchResult:
    winner: Optional[Role]
    goal_vector: GoalVector
    learner_trajectory: Trajectory
    move_total: int
    match_index: int = 0
    epsilon_used: float = 0.0


def play_match(
    first_agent: Agent,
    second_agent: Agent,
    game: GameConfig,
    rng: random.Random,
    learner_role: Optional[Role] = None,
) -> MatchResult:
    """Play one match from the initial position.

    Only the decisions of ``learner_role`` are recorded in the trajectory;
    its ``final_goal`` is that role's goal scaled to [0, 1].
    """
    agents = (first_agent, second_agent)
    trajectory = Trajectory()
    state = initial_state(game)
    while state.goals is None:
        mover = state.to_move
        agent = agents[mover]
        move = agent.choose(state, rng)
        legal = legal_moves(state)
        if move not in legal:
            raise ProtocolError(f"{agent.name} ({mover.name}) played illegal move {move!r}")
        if mover is learner_role:
            trajectory.record(state.key, move, legal)
        state = apply_move(state, move)
    goals = state.goals
    trajectory.final_state_key = state.key
    if learner_role is not None:
        trajectory.final_goal = goals[learner_role] / 100.0
    if goals.goal_first == goals.goal_second:
        winner = None
    else:
        winner = Role.FIRST if goals.goal_first > goals.goal_second else Role.SECOND
    return MatchResult(winner, goals, trajectory, state.move_count)


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig
    learner_kind: LearnerKind = LearnerKind.Q
    schedule: EpsilonSchedule = EpsilonSchedule.dynamic(0.5, 0.0, 30000)
    horizon: int = 30000
    total_matches: Optional[int] = None
    rounds: int = 5
    budget: McsBudget = McsBudget.millis(50)
    seat: Role = Role.SECOND
    seed: int = 0
    window: int = 1000
    params: LearnerParams = LearnerParams()
    td_params: TdParams = TdParams()
    # multiplies every learner goal; only used to check scale invariance
    reward_scale: float = 1.0
    record_timing: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "learner_kind", LearnerKind(self.learner_kind))
        object.__setattr__(self, "seat", Role(self.seat))
        if self.total_matches is None:
            object.__setattr__(self, "total_matches", math.ceil(1.5 * self.horizon))
        if self.horizon < 1:
            raise ValueError("horizon l must be positive")
        if self.total_matches < self.horizon:
            raise ValueError("total_matches must be >= l")
        if self.rounds < 1 or self.window < 1:
            raise ValueError("rounds and window must be >= 1")
        if not 0.0 < self.reward_scale <= 1.0:
            raise ValueError("reward_scale must lie in (0, 1]")
        if not self.label:
            object.__setattr__(self, "label", self.default_label())

    def default_label(self) -> str:
        if self.learner_kind is LearnerKind.TD:
            return f"td l={self.horizon}"
        text = f"{self.learner_kind.value} {self.schedule.label()} l={self.horizon}"
        if self.learner_kind is LearnerKind.QM:
            text += f" mcs={self.budget.label()}"
        return text

    def round_seed(self, round_index: int) -> int:
        return self.seed + round_index

    def epsilon_for(self, m: int) -> float:
        return 0.0 if m > self.horizon else epsilon_at(self.schedule, m)


@dataclass
class MatchRecord:
    index: int
    result: str
    epsilon: float
    window_win_rate: float
    cumulative_win_rate: float
    qtable_states: int
    elapsed_ms: int = 0


@dataclass
class WinRateSeries:
    label: str
    horizon: int
    records: list[MatchRecord] = field(default_factory=list)
    round_index: int = 0
    table: Optional[QTable] = field(default=None, compare=False, repr=False)

    @property
    def outcomes(self) -> list[str]:
        return [r.result for r in self.records]

    def window_rate_at(self, match_index: int) -> float:
        return self.records[match_index - 1].window_win_rate

    def counts(self) -> dict[str, int]:
        out = {"W": 0, "D": 0, "L": 0}
        for r in self.records:
            out[r.result] += 1
        return out


def make_learner(config: ExperimentConfig, table: QTable) -> Agent:
    if config.learner_kind is LearnerKind.Q:
        return QPlayer(table, config.params)
    if config.learner_kind is LearnerKind.QM:
        return QMPlayer(table, config.params, budget=config.budget)
    return TdLambdaPlayer(table, config.td_params)


def run_round(config: ExperimentConfig, round_index: int = 0) -> WinRateSeries:
    """Train one fresh learner for ``total_matches`` matches against a random player."""
    rng = random.Random(config.round_seed(round_index))
    table = QTable(config.game)
    learner = make_learner(config, table)
    opponent = RandomPlayer()
    seat = config.seat
    seats = (learner, opponent) if seat is Role.FIRST else (opponent, learner)
    series = WinRateSeries(config.label, config.horizon, round_index=round_index, table=table)
    window = config.window
    recent: list[int] = []
    wins = 0
    win_in_window = 0
    for m in range(1, config.total_matches + 1):
        eps = config.epsilon_for(m)
        t0 = time.perf_counter() if config.record_timing else 0.0
        learner.start_match(m, eps)
        result = play_match(seats[0], seats[1], config.game, rng, learner_role=seat)
        result.match_index, result.epsilon_used = m, eps
        traj = result.learner_trajectory
        traj.final_goal *= config.reward_scale
        learner.end_match(traj)
        elapsed = round((time.perf_counter() - t0) * 1000) if config.record_timing else 0
        if result.winner is None:
            outcome = "D"
        else:
            outcome = "W" if result.winner is seat else "L"
        won = outcome == "W"
        wins += won
        recent.append(won)
        win_in_window += won
        if len(recent) > window:
            win_in_window -= recent[-window - 1]
        n_window = min(window, m)
        series.records.append(
            MatchRecord(
                m,
                outcome,
                eps,
                win_in_window / n_window,
                wins / m,
                table.n_states,
                elapsed,
            )
        )
    return series


def _run_round_job(args: tuple[ExperimentConfig, int]) -> WinRateSeries:
    return run_round(*args)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[WinRateSeries]:
    """All rounds of one experiment cell; rounds use seeds ``seed + round``."""
    tasks = [(config, r) for r in range(config.rounds)]
    return run_many(tasks, jobs)


def run_many(tasks: Sequence[tuple[ExperimentConfig, int]], jobs: int = 1) -> list[WinRateSeries]:
    if jobs <= 1 or len(tasks) <= 1:
        return [run_round(c, r) for c, r in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_round_job, tasks))


def window_series(results: Sequence[Union[str, bool]], window: int) -> list[float]:
    """Moving win rate; before the window fills this is the cumulative rate."""
    if window < 1:
        raise ValueError("window must be >= 1")
    wins = [1 if (r == "W" or r is True) else 0 for r in results]
    out = []
    acc = 0
    for i, w in enumerate(wins):
        acc += w
        if i >= window:
            acc -= wins[i - window]
        out.append(acc / min(window, i + 1))
    return out


def convergence_rate(series: WinRateSeries, l: Optional[int] = None) -> float:
    """Mean win rate over the matches after ``l`` (the greedy evaluation tail)."""
    l = series.horizon if l is None else l
    tail = [r for r in series.records if r.index > l]
    if not tail:
        raise InsufficientDataError(f"series of {len(series.records)} matches has no matches after l={l}")
    return sum(r.result == "W" for r in tail) / len(tail)


def summarize(rates: Sequence[float]) -> tuple[float, float]:
    mean = statistics.fmean(rates)
    sd = statistics.stdev(rates) if len(rates) > 1 else 0.0
    return mean, sd


def export_csv(series: WinRateSeries, destination: Union[str, Path]) -> Path:
    path = Path(destination)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in series.records:
                writer.writerow(
                    (
                        r.index,
                        r.result,
                        f"{r.epsilon:.6f}",
                        f"{r.window_win_rate:.6f}",
                        f"{r.cumulative_win_rate:.6f}",
                        r.qtable_states,
                        r.elapsed_ms,
                    )
                )
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(source: Union[str, Path], label: Optional[str] = None, horizon: int = 0) -> WinRateSeries:
    """Load a series written by :func:`export_csv`."""
    path = Path(source)
    series = WinRateSeries(label or path.stem, horizon)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise SeriesFormatError(f"{path}:1: unexpected header {header}")
        for row in reader:
            lineno = reader.line_num
            if len(row) != len(CSV_HEADER):
                raise SeriesFormatError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                rec = MatchRecord(
                    int(row[0]),
                    row[1],
                    float(row[2]),
                    float(row[3]),
                    float(row[4]),
                    int(row[5]),
                    int(row[6]),
                )
            except ValueError as exc:
                raise SeriesFormatError(f"{path}:{lineno}: {exc}") from exc
            if rec.result not in ("W", "D", "L"):
                raise SeriesFormatError(f"{path}:{lineno}: bad result {rec.result!r}")
            series.records.append(rec)
    return series


def export_summary(rows: Iterable[tuple[int, str, float, float]], destination: Union[str, Path]) -> Path:
    path = Path(destination)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for l, learner, mean, sd in rows:
            writer.writerow((l, learner, f"{mean:.6f}", f"{sd:.6f}"))
    return path


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def export_chart(
    series_set: Sequence[WinRateSeries],
    destination: Union[str, Path],
    l: Optional[int] = None,
    sample_every: int = 100,
    title: str = "Win rate vs random",
) -> Path:
    """Write an SVG line chart of window win rate against match index.

    Matches after ``l`` (default: the first series' horizon) are shaded.
    """
    if not series_set:
        raise ValueError("need at least one series to chart")
    l = series_set[0].horizon if l is None else l
    width, height = 800, 480
    left, right, top, bottom = 60, 200, 40, 50
    pw, ph = width - left - right, height - top - bottom
    x_max = max((s.records[-1].index for s in series_set if s.records), default=1)
    x_max = max(x_max, l, 1)

    def sx(x: float) -> str:
        return f"{left + pw * x / x_max:.2f}"

    def sy(y: float) -> str:
        return f"{top + ph * (1.0 - y):.2f}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="24" font-family="sans-serif" font-size="16">{_escape(title)}</text>',
    ]
    if 0 < l < x_max:
        out.append(
            f'<rect class="eval-region" x="{sx(l)}" y="{top}" width="{left + pw - float(sx(l)):.2f}" '
            f'height="{ph}" fill="#dddddd"/>'
        )
    for i in range(5):
        y = i / 4
        out.append(
            f'<line class="grid" x1="{left}" y1="{sy(y)}" x2="{left + pw}" y2="{sy(y)}" stroke="#bbbbbb" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{left - 8}" y="{float(sy(y)) + 4:.2f}" font-family="sans-serif" font-size="11" '
            f'text-anchor="end">{y:.2f}</text>'
        )
    out.append(
        f'<line class="l-marker" x1="{sx(l)}" y1="{top}" x2="{sx(l)}" y2="{top + ph}" '
        f'stroke="#555555" stroke-dasharray="4 3"/>'
    )
    out.append(
        f'<text x="{sx(l)}" y="{top + ph + 32}" font-family="sans-serif" font-size="11" '
        f'text-anchor="middle">l={l}</text>'
    )
    out.append(
        f'<text x="{left + pw / 2:.2f}" y="{height - 6}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle">match</text>'
    )
    for tick in range(0, 5):
        x = x_max * tick / 4
        out.append(
            f'<text x="{sx(x)}" y="{top + ph + 16}" font-family="sans-serif" font-size="11" '
            f'text-anchor="middle">{int(x)}</text>'
        )
    for n, s in enumerate(series_set):
        color = _PALETTE[n % len(_PALETTE)]
        pts = [r for r in s.records if r.index % sample_every == 0 or r.index == 1]
        if s.records and s.records[-1] not in pts:
            pts.append(s.records[-1])
        points = " ".join(f"{sx(r.index)},{sy(r.window_win_rate)}" for r in pts)
        out.append(
            f'<polyline class="series" points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = top + 10 + 18 * n
        out.append(
            f'<line class="legend" x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{left + pw + 38}" y="{ly + 4}" font-family="sans-serif" font-size="11">{_escape(s.label)}</text>'
        )
    out.append("</svg>")
    path = Path(destination)
    try:
        path.write_text("\n".join(out) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
