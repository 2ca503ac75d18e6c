"""Command-line entry point: ``qggp {train,compare,report,play,oracle}``.

Settings are resolved from built-in defaults, then a ``key=value`` config
file (``--config``), then ``QGGP_*`` environment variables, then flags.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
import time
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, TextIO

from .agents import McsBudget, McsPlayer, QMPlayer, TdParams
from .arena import (
    ExperimentConfig,
    InsufficientDataError,
    LearnerKind,
    SeriesFormatError,
    WinRateSeries,
    MatchRecord,
    convergence_rate,
    export_chart,
    export_csv,
    export_summary,
    read_csv,
    run_many,
    summarize,
)
from .engine import GameConfig, GameKind, Role, apply_move, initial_state, legal_moves, render
from .learning import (
    EpsilonSchedule,
    IncompatibleTableError,
    LearnerParams,
    TableFormatError,
    load_qtable,
    save_qtable,
)
from .oracle import (
    DEFAULT_NODE_LIMIT,
    NodeLimitExceeded,
    minimax_value,
    random_play_distribution,
    reachable_states,
    toy_value_iteration,
    train_toy_mdp,
)

ENV_PREFIX = "QGGP_"


class UsageError(Exception):
    pass


def _size(text: str) -> tuple[int, int]:
    if "x" in text:
        w, h = text.lower().split("x")
        return int(w), int(h)
    return int(text), int(text)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _seat(text: str) -> Role:
    t = text.lower()
    if t in ("first", "1", "x"):
        return Role.FIRST
    if t in ("second", "2", "o"):
        return Role.SECOND
    raise ValueError(f"seat must be first or second, not {text!r}")


# name -> (converter, default, help); defaults follow the published setup
OPTIONS: dict[str, tuple[Callable[[str], Any], Any, str]] = {
    "game": (str, "ttt", "game: ttt, c4 or hex"),
    "size": (_size, None, "board size N or WxH (ttt 3, c4 4, hex 3)"),
    "win_length": (int, None, "stones in a row to win (ttt 3, c4 4; ignored for hex)"),
    "learner": (str, None, "learner: q, qm or td"),
    "schedule": (str, None, "epsilon schedule fixed:E or dynamic:A:B[:L] (dynamic:0.5:0; td uses fixed:0.01)"),
    "l": (int, 30000, "matches in the learning phase"),
    "matches": (int, None, "total matches per round (ceil(1.5*l))"),
    "rounds": (int, 5, "independent rounds with fresh tables"),
    "mcs_ms": (int, 50, "Monte Carlo time limit per move in ms"),
    "mcs_playouts": (int, None, "playouts per move instead of a time limit"),
    "alpha": (float, None, "learning rate (q/qm 0.1, td 0.3)"),
    "gamma": (float, None, "discount factor (q/qm 0.9, td 1.0)"),
    "lambda": (float, 0.7, "trace decay for td"),
    "seat": (_seat, Role.SECOND, "learner seat: first or second"),
    "seed": (int, None, "master seed (random if omitted, printed for replay)"),
    "window": (int, 1000, "moving win-rate window in matches"),
    "jobs": (int, 1, "parallel worker processes"),
    "out": (str, "runs", "output directory"),
    "timing": (lambda s: str(s).lower() in ("1", "true", "yes", "on"), False, "record per-match wall time in the CSV"),
}


def _read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def resolve(ns: argparse.Namespace, names: Sequence[str], environ: Optional[dict] = None) -> dict[str, Any]:
    """Merge defaults, config file, environment and flags for ``names``."""
    environ = os.environ if environ is None else environ
    layered: dict[str, Any] = {}
    if getattr(ns, "config", None):
        layered.update(_read_config_file(Path(ns.config)))
    for name in names:
        env = environ.get(ENV_PREFIX + name.upper())
        if env is not None:
            layered[name] = env
    out = {}
    for name in names:
        conv, default, _ = OPTIONS[name]
        flag = getattr(ns, name, None)
        if flag is not None:
            out[name] = flag
        elif name in layered:
            try:
                out[name] = conv(layered[name])
            except ValueError as exc:
                raise UsageError(f"bad value for {name}: {exc}") from exc
        else:
            out[name] = default
    return out


def _add(parser: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        conv, default, text = OPTIONS[name]
        shown = default.name.lower() if isinstance(default, Role) else default
        parser.add_argument(
            "--" + name.replace("_", "-"),
            dest=name,
            type=conv,
            default=None,
            help=f"{text} [default: {shown}]",
        )


EXPERIMENT_KEYS = (
    "game", "size", "win_length", "learner", "schedule", "l", "matches", "rounds", "mcs_ms",
    "mcs_playouts", "alpha", "gamma", "lambda", "seat", "seed", "window", "jobs", "out", "timing",
)


def build_parser() -> argparse.ArgumentParser:
    layering = (
        f"Every option can also be set as KEY=VALUE in --config or as an environment "
        f"variable {ENV_PREFIX}<KEY> (e.g. {ENV_PREFIX}ROUNDS=3). Flags win over the environment, "
        f"which wins over the config file."
    )
    parser = argparse.ArgumentParser(
        prog="qggp",
        description="Tabular Q-learning experiments on small board games.",
        epilog=layering,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one learner against a random player", epilog=layering)
    _add(train, *EXPERIMENT_KEYS)
    train.add_argument("--config", help="key=value config file")

    compare = sub.add_parser("compare", help="compare learners or schedules over several l values", epilog=layering)
    _add(compare, *EXPERIMENT_KEYS)
    compare.add_argument("--config", help="key=value config file")
    compare.add_argument("--learners", type=_str_list, help="comma-separated learners, e.g. q,qm")
    compare.add_argument("--l-list", dest="l_list", type=_int_list, help="comma-separated l values")
    compare.add_argument("--schedules", type=_str_list, help="comma-separated schedules")

    report = sub.add_parser("report", help="chart and summarize stored CSV series")
    report.add_argument("csv", nargs="+", help="CSV files written by train/compare")
    report.add_argument("--l", dest="l", type=int, default=None, help="learning-phase length for shading and convergence")
    report.add_argument("--out", default="report", help="output directory [default: report]")

    play = sub.add_parser("play", help="play against a trained table in the terminal")
    _add(play, "game", "size", "win_length", "mcs_ms", "mcs_playouts", "seed")
    play.add_argument("--table", help="saved Q-table; without it the agent is pure MCS")
    play.add_argument("--human-seat", dest="human_seat", type=_seat, default=Role.FIRST,
                      help="seat of the human player [default: first]")
    play.add_argument("--config", help="key=value config file")

    oracle = sub.add_parser("oracle", help="exhaustive reference values for a small game")
    _add(oracle, "game", "size", "win_length", "seed")
    oracle.add_argument("--node-limit", dest="node_limit", type=int, default=DEFAULT_NODE_LIMIT,
                        help=f"refuse games with more reachable states [default: {DEFAULT_NODE_LIMIT}]")
    oracle.add_argument("--mdp-gamma", dest="mdp_gamma", type=float, default=0.9,
                        help="discount for the toy MDP [default: 0.9]")
    oracle.add_argument("--config", help="key=value config file")
    return parser


def game_from(opts: dict[str, Any]) -> GameConfig:
    kind = GameKind(opts["game"])
    defaults = {GameKind.TICTACTOE: (3, 3), GameKind.CONNECT_FOUR: (4, 4), GameKind.HEX: (3, 0)}
    size, k = defaults[kind]
    w, h = opts["size"] or (size, size)
    win = opts["win_length"] if opts["win_length"] is not None else k
    return GameConfig(kind, w, h, win)


def _seed(opts: dict[str, Any], out: TextIO) -> int:
    if opts["seed"] is None:
        opts["seed"] = random.SystemRandom().randrange(2**31)
        print(f"seed: {opts['seed']}", file=out)
    return opts["seed"]


def experiment_from(opts: dict[str, Any], learner: str, schedule_text: Optional[str], l: int) -> ExperimentConfig:
    kind = LearnerKind(learner)
    if schedule_text is None:
        schedule_text = "fixed:0.01" if kind is LearnerKind.TD else "dynamic:0.5:0"
    schedule = EpsilonSchedule.parse(schedule_text, horizon=l)
    budget = McsBudget.playouts(opts["mcs_playouts"]) if opts["mcs_playouts"] else McsBudget.millis(opts["mcs_ms"])
    td_defaults = TdParams()
    params = LearnerParams(
        0.1 if opts["alpha"] is None else opts["alpha"],
        0.9 if opts["gamma"] is None else opts["gamma"],
    )
    td = TdParams(
        td_defaults.alpha if opts["alpha"] is None else opts["alpha"],
        td_defaults.gamma if opts["gamma"] is None else opts["gamma"],
        opts["lambda"],
        schedule.fixed_value if schedule.kind.value == "fixed" else td_defaults.epsilon,
    )
    return ExperimentConfig(
        game=game_from(opts),
        learner_kind=kind,
        schedule=schedule,
        horizon=l,
        total_matches=opts["matches"],
        rounds=opts["rounds"],
        budget=budget,
        seat=opts["seat"],
        seed=opts["seed"],
        window=opts["window"],
        params=params,
        td_params=td,
        record_timing=opts["timing"],
    )


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-." else "_" for c in text).strip("_")


def mean_series(rounds: Sequence[WinRateSeries]) -> WinRateSeries:
    """Per-match average of the window rate across rounds, for charting."""
    first = rounds[0]
    avg = WinRateSeries(first.label, first.horizon)
    n = len(rounds)
    for i, rec in enumerate(first.records):
        w = sum(s.records[i].window_win_rate for s in rounds) / n
        c = sum(s.records[i].cumulative_win_rate for s in rounds) / n
        avg.records.append(MatchRecord(rec.index, rec.result, rec.epsilon, w, c, rec.qtable_states))
    return avg


def _run_cells(cells: list[ExperimentConfig], jobs: int) -> list[list[WinRateSeries]]:
    tasks = [(c, r) for c in cells for r in range(c.rounds)]
    flat = run_many(tasks, jobs)
    out, pos = [], 0
    for c in cells:
        out.append(flat[pos:pos + c.rounds])
        pos += c.rounds
    return out


def cmd_train(ns: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    opts = resolve(ns, EXPERIMENT_KEYS)
    if opts["learner"] is None:
        raise UsageError("train requires --learner {q,qm,td} (other flags: --game --size --l ...)")
    _seed(opts, out)
    config = experiment_from(opts, opts["learner"], opts["schedule"], opts["l"])
    outdir = Path(opts["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    series = _run_cells([config], opts["jobs"])[0]
    stem = _slug(f"{config.game.tag}_{config.label}")
    rates = []
    for s in series:
        export_csv(s, outdir / f"{stem}_round{s.round_index}.csv")
        rates.append(convergence_rate(s) if len(s.records) > config.horizon else float("nan"))
    export_chart(series, outdir / f"{stem}.svg", l=config.horizon,
                 title=f"{config.game.tag} {config.label}")
    mean, sd = summarize(rates)
    export_summary([(config.horizon, config.label, mean, sd)], outdir / f"{stem}_summary.csv")
    table = series[-1].table
    if table is not None:
        save_qtable(table, outdir / f"{stem}_qtable.tsv")
    print(f"{config.label}: convergence win rate {mean:.4f} +/- {sd:.4f} over {len(rates)} rounds "
          f"({time.perf_counter() - t0:.1f}s) -> {outdir}", file=out)
    return 0


def cmd_compare(ns: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    opts = resolve(ns, EXPERIMENT_KEYS)
    l_list = ns.l_list or [opts["l"]]
    learners = ns.learners or ([opts["learner"]] if opts["learner"] else ["q"])
    schedules = ns.schedules or [opts["schedule"]]
    if len(learners) * len(schedules) < 2:
        raise UsageError("compare needs at least two learners (--learners) or schedules (--schedules)")
    _seed(opts, out)
    cells = [
        experiment_from(opts, learner, sched, l)
        for l in l_list
        for learner in learners
        for sched in schedules
    ]
    outdir = Path(opts["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    results = _run_cells(cells, opts["jobs"])
    rows = []
    by_l: dict[int, list[WinRateSeries]] = {}
    for config, series in zip(cells, results):
        stem = _slug(f"{config.game.tag}_{config.label}")
        for s in series:
            export_csv(s, outdir / f"{stem}_round{s.round_index}.csv")
        mean, sd = summarize([convergence_rate(s) for s in series])
        rows.append((config.horizon, config.label, mean, sd))
        by_l.setdefault(config.horizon, []).append(mean_series(series))
        print(f"l={config.horizon:<6} {config.label:<40} {mean:.4f} +/- {sd:.4f}", file=out)
    for l, group in by_l.items():
        export_chart(group, outdir / f"compare_l{l}.svg", l=l, title=f"{cells[0].game.tag} l={l}")
    export_summary(rows, outdir / "summary.csv")
    return 0


def cmd_report(ns: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    series = []
    for path in ns.csv:
        s = read_csv(path, horizon=ns.l or 0)
        if not s.records:
            raise SeriesFormatError(f"{path}: no data rows")
        series.append(s)
    outdir = Path(ns.out)
    outdir.mkdir(parents=True, exist_ok=True)
    l = ns.l if ns.l is not None else 0
    export_chart(series, outdir / "report.svg", l=l, title="Win rate vs random")
    if ns.l is not None:
        rows = []
        for s in series:
            rate = convergence_rate(s, ns.l)
            rows.append((ns.l, s.label, rate, 0.0))
            print(f"{s.label}: convergence win rate {rate:.4f}", file=out)
        export_summary(rows, outdir / "summary.csv")
    print(f"wrote {outdir / 'report.svg'}", file=out)
    return 0


class _TablePlayer(QMPlayer):
    name = "table"


def cmd_play(ns: argparse.Namespace, stdin: TextIO = sys.stdin, out: TextIO = sys.stdout) -> int:
    opts = resolve(ns, ("game", "size", "win_length", "mcs_ms", "mcs_playouts", "seed"))
    game = game_from(opts)
    budget = McsBudget.playouts(opts["mcs_playouts"]) if opts["mcs_playouts"] else McsBudget.millis(opts["mcs_ms"])
    if ns.table:
        table = load_qtable(ns.table, expected=game)
        agent = _TablePlayer(table, budget=budget)
        print(f"agent: Q-table {ns.table} ({table.n_states} states), MCS {budget.label()} for unknown states", file=out)
    else:
        agent = McsPlayer(budget)
        print(f"agent: Monte Carlo search only, budget {budget.label()}", file=out)
    rng = random.Random(opts["seed"] if opts["seed"] is not None else 0)
    human = ns.human_seat
    state = initial_state(game)
    print(render(state), file=out)
    while state.goals is None:
        legal = legal_moves(state)
        if state.to_move is human:
            out.write(f"your move {legal}: ")
            out.flush()
            line = stdin.readline()
            if not line:
                print("\ninput closed", file=out)
                return 1
            try:
                move = int(line.strip())
            except ValueError:
                print(f"not a move index: {line.strip()!r}", file=out)
                continue
            if move not in legal:
                print(f"illegal move {move}; choose one of {legal}", file=out)
                continue
        else:
            move = agent.choose(state, rng)
            print(f"agent plays {move}", file=out)
        state = apply_move(state, move)
        print(render(state), file=out)
    g = state.goals
    print(f"final goals: first={g.goal_first} second={g.goal_second}", file=out)
    return 0


def cmd_oracle(ns: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    opts = resolve(ns, ("game", "size", "win_length", "seed"))
    game = game_from(opts)
    states = reachable_states(game, ns.node_limit)
    print(f"game: {game.tag}", file=out)
    print(f"reachable_states: {len(states)}", file=out)
    dist = random_play_distribution(game, ns.node_limit)
    for name in ("first", "second", "draw"):
        p = dist[name]
        print(f"random_play_{name}: {p.numerator}/{p.denominator} = {float(p):.10f}", file=out)
    value = minimax_value(initial_state(game))
    verdict = {100: "first wins", 0: "second wins", 50: "draw"}[value]
    print(f"minimax_value: {value} ({verdict})", file=out)
    gamma = ns.mdp_gamma
    fix = toy_value_iteration(gamma)
    for (s, a), v in sorted(fix.items()):
        print(f"toy_mdp_q[{s},{a}]: {v:.10f}", file=out)
    _, episodes = train_toy_mdp(LearnerParams(0.1, gamma), seed=opts["seed"] or 0)
    print(f"toy_mdp_training_episodes: {episodes}", file=out)
    return 0


COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "report": cmd_report,
    "play": cmd_play,
    "oracle": cmd_oracle,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "play":
            return cmd_play(ns, stdin=sys.stdin, out=sys.stdout)
        return COMMANDS[ns.command](ns, out=sys.stdout)
    except (OSError, TableFormatError, IncompatibleTableError, SeriesFormatError,
            InsufficientDataError, NodeLimitExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
