import random
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qggp.agents import Agent, McsBudget, RandomPlayer
from qggp.arena import (
    CSV_HEADER,
    ExperimentConfig,
    InsufficientDataError,
    MatchRecord,
    ProtocolError,
    SeriesFormatError,
    WinRateSeries,
    convergence_rate,
    export_chart,
    export_csv,
    export_summary,
    play_match,
    read_csv,
    run_experiment,
    run_round,
    window_series,
)
from qggp.engine import GameConfig, Role
from qggp.learning import EpsilonSchedule, epsilon_at
from qggp.oracle import reachable_states

TTT3 = GameConfig.tictactoe()


def small_config(**kw):
    base = dict(
        game=TTT3,
        schedule=EpsilonSchedule.dynamic(0.5, 0.0, 400),
        horizon=400,
        rounds=2,
        seed=7,
        window=50,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def series_from(outcomes, horizon=0, window=1000):
    s = WinRateSeries("test", horizon)
    rates = window_series(outcomes, window)
    wins = 0
    for i, (o, r) in enumerate(zip(outcomes, rates), start=1):
        wins += o == "W"
        s.records.append(MatchRecord(i, o, 0.0, r, wins / i, 0))
    return s


class TestPlayMatch:
    def test_deterministic(self):
        a = play_match(RandomPlayer(), RandomPlayer(), TTT3, random.Random(3), learner_role=Role.FIRST)
        b = play_match(RandomPlayer(), RandomPlayer(), TTT3, random.Random(3), learner_role=Role.FIRST)
        assert a == b

    @pytest.mark.parametrize("seed", range(30))
    def test_move_bound(self, seed):
        assert play_match(RandomPlayer(), RandomPlayer(), TTT3, random.Random(seed)).move_total <= 9

    @pytest.mark.parametrize("seed", range(10))
    def test_second_seat_records_own_turns(self, seed):
        r = play_match(RandomPlayer(), RandomPlayer(), TTT3, random.Random(seed), learner_role=Role.SECOND)
        keys = [k for k, _, _ in r.learner_trajectory.pairs]
        assert all(":o|" in k for k in keys)
        assert len(keys) == r.move_total // 2
        plies = [k.split("|")[1].count(".") for k in keys]
        assert plies == [8 - 2 * i for i in range(len(keys))]

    def test_winner_and_goal(self):
        r = play_match(RandomPlayer(), RandomPlayer(), TTT3, random.Random(1), learner_role=Role.SECOND)
        if r.winner is None:
            assert r.goal_vector == (50, 50)
        else:
            assert r.goal_vector[r.winner] == 100
        assert r.learner_trajectory.final_goal == r.goal_vector[Role.SECOND] / 100

    def test_illegal_move_names_agent(self):
        class Stubborn(Agent):
            name = "stubborn"

            def choose(self, state, rng):
                return 0

        with pytest.raises(ProtocolError, match="stubborn"):
            play_match(Stubborn(), Stubborn(), TTT3, random.Random(0))


class TestWindow:
    def test_all_wins(self):
        assert window_series(["W"] * 50, 10) == [1.0] * 50

    def test_alternation(self):
        rates = window_series(["W", "L"] * 200, 100)
        assert all(r == 0.5 for r in rates[99:])

    def test_underfull(self):
        assert window_series(["W", "L", "W"], 10) == [1.0, 0.5, pytest.approx(2 / 3)]

    @given(st.lists(st.sampled_from("WDL"), max_size=300), st.integers(1, 40))
    def test_matches_definition(self, results, window):
        rates = window_series(results, window)
        for i, r in enumerate(rates):
            chunk = results[max(0, i + 1 - window):i + 1]
            assert r == pytest.approx(chunk.count("W") / len(chunk))
            assert 0.0 <= r <= 1.0


class TestConvergence:
    def test_all_wins(self):
        assert convergence_rate(series_from(["L"] * 100 + ["W"] * 50), 100) == 1.0

    def test_arithmetic(self):
        tail = ["W"] * 870 + ["L"] * 130
        assert convergence_rate(series_from(["L"] * 10 + tail), 10) == pytest.approx(0.87)

    def test_short_series(self):
        with pytest.raises(InsufficientDataError):
            convergence_rate(series_from(["W"] * 10), 10)


class TestCsv:
    def test_empty(self, tmp_path):
        p = export_csv(WinRateSeries("x", 0), tmp_path / "a.csv")
        assert p.read_text().splitlines() == [",".join(CSV_HEADER)]

    def test_two_rows(self, tmp_path):
        p = export_csv(series_from(["W", "L"]), tmp_path / "a.csv")
        lines = p.read_bytes().split(b"\r\n")
        assert lines[-1] == b""
        assert len(lines) - 1 == 3
        assert lines[1] == b"1,W,0.000000,1.000000,1.000000,0,0"

    def test_reexport_identical(self, tmp_path):
        s = series_from(list("WLDWWL"))
        a = export_csv(s, tmp_path / "a.csv").read_bytes()
        b = export_csv(s, tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_read_back(self, tmp_path):
        s = series_from(list("WLDWWL"))
        back = read_csv(export_csv(s, tmp_path / "a.csv"))
        assert back.outcomes == s.outcomes
        assert [r.window_win_rate for r in back.records] == pytest.approx([r.window_win_rate for r in s.records])

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("index,result\n1,W\n")
        with pytest.raises(SeriesFormatError, match=":1:"):
            read_csv(p)

    def test_bad_row(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(",".join(CSV_HEADER) + "\n1,W,0,1,1,0,0\n2,W,0,1\n")
        with pytest.raises(SeriesFormatError, match=":3:"):
            read_csv(p)

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError, match="nope"):
            export_csv(series_from(["W"]), tmp_path / "nope" / "a.csv")

    def test_summary_format(self, tmp_path):
        p = export_summary([(5000, "q", 0.8, 0.01234567)], tmp_path / "s.csv")
        assert p.read_text().splitlines() == [
            "l,learner,mean_convergence_rate,stddev",
            "5000,q,0.800000,0.012346",
        ]


def _polylines(svg):
    return re.findall(r'<polyline class="series" points="([^"]+)"', svg)


class TestChart:
    def test_constant_series_on_top_gridline(self, tmp_path):
        svg = export_chart([series_from(["W"] * 500, horizon=300)], tmp_path / "c.svg").read_text()
        (points,) = _polylines(svg)
        ys = {p.split(",")[1] for p in points.split()}
        grid_ys = sorted(float(y) for y in re.findall(r'class="grid" x1="[^"]+" y1="([^"]+)"', svg))
        assert ys == {f"{grid_ys[0]:.2f}"}

    def test_two_series_two_legend_entries(self, tmp_path):
        a = series_from(["W", "L"] * 300, horizon=200)
        b = series_from(["L"] * 600, horizon=200)
        b.label = "other"
        svg = export_chart([a, b], tmp_path / "c.svg").read_text()
        assert len(_polylines(svg)) == 2
        assert svg.count('class="legend"') == 2
        assert ">other<" in svg

    def test_l_marker_and_shading(self, tmp_path):
        svg = export_chart([series_from(["W"] * 600, horizon=400)], tmp_path / "c.svg").read_text()
        assert 'class="l-marker"' in svg
        assert "l=400" in svg
        assert 'class="eval-region"' in svg

    def test_needs_a_series(self, tmp_path):
        with pytest.raises(ValueError):
            export_chart([], tmp_path / "c.svg")


class TestExperiment:
    def test_seed_determinism_and_identical_csv(self, tmp_path):
        cfg = small_config()
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a == b
        for s, t in zip(a, b):
            x = export_csv(s, tmp_path / "x.csv").read_bytes()
            y = export_csv(t, tmp_path / "y.csv").read_bytes()
            assert x == y

    def test_rounds_differ(self):
        a, b = run_experiment(small_config())
        assert a.outcomes != b.outcomes
        assert a.table is not b.table

    def test_epsilon_usage(self):
        (s,) = run_experiment(small_config(rounds=1))
        cfg = small_config()
        for r in s.records:
            if r.index > cfg.horizon:
                assert r.epsilon == 0.0
            else:
                assert r.epsilon == epsilon_at(cfg.schedule, r.index)

    def test_fixed_schedule_zero_after_l(self):
        (s,) = run_experiment(small_config(rounds=1, schedule=EpsilonSchedule.fixed(0.2)))
        assert {r.epsilon for r in s.records if r.index <= 400} == {0.2}
        assert {r.epsilon for r in s.records if r.index > 400} == {0.0}

    def test_accounting(self):
        (s,) = run_experiment(small_config(rounds=1))
        counts = s.counts()
        assert sum(counts.values()) == len(s.records) == 600
        wins = 0
        for r in s.records:
            wins += r.result == "W"
            assert r.cumulative_win_rate == pytest.approx(wins / r.index)

    @pytest.mark.parametrize("seat", [Role.FIRST, Role.SECOND])
    def test_table_growth_bound(self, seat):
        symbol = "x" if seat is Role.FIRST else "o"
        bound = sum(
            1 for k, st_ in reachable_states(TTT3).items() if st_.goals is None and f":{symbol}|" in k
        )
        (s,) = run_experiment(small_config(rounds=1, seat=seat, horizon=3000, schedule=EpsilonSchedule.fixed(1.0)))
        assert max(r.qtable_states for r in s.records) <= bound <= 5478
        assert all(f":{symbol}|" in k for k in s.table.entries)

    @pytest.mark.parametrize("scale", [0.5, 0.25])
    def test_reward_scaling_linearity(self, scale):
        base = run_round(small_config(rounds=1), 0)
        scaled = run_round(small_config(rounds=1, reward_scale=scale), 0)
        assert scaled.outcomes == base.outcomes
        assert scaled.table.entries.keys() == base.table.entries.keys()
        for key, row in base.table.entries.items():
            for a, v in row.items():
                assert scaled.table.entries[key][a] == v * scale

    def test_reward_scaling_nonbinary_factor(self):
        base = run_round(small_config(rounds=1), 0)
        scaled = run_round(small_config(rounds=1, reward_scale=0.3), 0)
        assert scaled.outcomes == base.outcomes
        for key, row in base.table.entries.items():
            for a, v in row.items():
                assert scaled.table.entries[key][a] == pytest.approx(0.3 * v, rel=1e-9, abs=1e-15)

    def test_values_bounded(self):
        (s,) = run_experiment(small_config(rounds=1))
        assert all(0.0 <= v <= 1.0 for _, _, v in s.table.items())

    def test_qm_and_td_run(self):
        qm = run_round(small_config(rounds=1, learner_kind="qm", budget=McsBudget.playouts(2), horizon=100), 0)
        td = run_round(small_config(rounds=1, learner_kind="td", schedule=EpsilonSchedule.fixed(0.01), horizon=100), 0)
        assert len(qm.records) == len(td.records) == 150

    def test_default_seat_and_total(self):
        cfg = ExperimentConfig(TTT3, horizon=5000)
        assert cfg.seat is Role.SECOND
        assert cfg.total_matches == 7500
        assert cfg.rounds == 5

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(total_matches=10)
        with pytest.raises(ValueError):
            small_config(window=0)

    def test_parallel_rounds_match_serial(self):
        cfg = small_config(horizon=100)
        assert run_experiment(cfg, jobs=2) == run_experiment(cfg, jobs=1)
