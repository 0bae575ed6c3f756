import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatv2tcn.graphkit import verify_cluster_structure, adjacency
from gatv2tcn.pipeline import (
    BOXSCORE_HEADER,
    DEFAULT_TARGETS,
    GAMES_HEADER,
    PLAYERS_HEADER,
    STATS,
    DataError,
    WindowSample,
    chrono_split,
    forward_fill,
    ingest,
    ingest_dir,
    make_windows,
    normalize,
    prepare,
    write_dataset,
)

NAN = np.nan


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _stats(seed):
    rng = np.random.default_rng(seed)
    vals = list(rng.integers(0, 30, size=10).astype(float)) + [100.0, 0.2, 0.55]
    return [repr(float(v)) for v in vals]


def league(tmp_path, players=None, games=None, box=None):
    players = players or [
        ("a1", "A One", "TA", "Team A", "G"),
        ("a2", "A Two", "TA", "Team A", "F"),
        ("b1", "B One", "TB", "Team B", "C"),
        ("b2", "B Two", "TB", "Team B", "F/C"),
    ]
    games = games or [("g1", "2023-01-02", "TA", "TB")]
    if box is None:
        box = [(g[0], p[0], "30") + tuple(_stats(k)) for g in games for k, p in enumerate(players)]
    return (
        _write(tmp_path / "players.csv", PLAYERS_HEADER, players),
        _write(tmp_path / "games.csv", GAMES_HEADER, games),
        _write(tmp_path / "boxscores.csv", BOXSCORE_HEADER, box),
    )


class TestIngest:
    def test_two_by_two_single_day(self, tmp_path):
        ds = ingest(*league(tmp_path))
        assert ds.n == 4 and ds.T == 1
        assert ds.snapshots[0].component_sizes == [4]
        assert len(ds.snapshots[0].edges) == 6
        assert ds.mask.all()
        assert ds.raw.shape == (1, 4, 13)

    def test_unknown_player_named(self, tmp_path):
        files = league(tmp_path)
        with open(files[2], "a", encoding="utf-8") as fh:
            fh.write(",".join(["g1", "zz9", "20"] + _stats(0)) + "\n")
        with pytest.raises(DataError, match="zz9") as exc:
            ingest(*files)
        assert exc.value.line == 6

    def test_duplicate_row(self, tmp_path):
        files = league(tmp_path)
        with open(files[2], "a", encoding="utf-8") as fh:
            fh.write(",".join(["g1", "a1", "20"] + _stats(0)) + "\n")
        with pytest.raises(DataError, match="duplicate"):
            ingest(*files)

    def test_non_chronological(self, tmp_path):
        games = [("g1", "2023-01-03", "TA", "TB"), ("g2", "2023-01-02", "TB", "TA")]
        with pytest.raises(DataError, match="precedes") as exc:
            ingest(*league(tmp_path, games=games))
        assert exc.value.line == 3

    def test_unknown_team(self, tmp_path):
        with pytest.raises(DataError, match="TZ"):
            ingest(*league(tmp_path, games=[("g1", "2023-01-02", "TA", "TZ")], box=[]))

    def test_bad_header(self, tmp_path):
        files = league(tmp_path)
        _write(files[0], ("id", "name"), [])
        with pytest.raises(DataError, match="header"):
            ingest(*files)

    def test_malformed_number(self, tmp_path):
        players = [("a1", "A", "TA", "Team A", "G"), ("b1", "B", "TB", "Team B", "G")]
        box = [("g1", "a1", "abc") + tuple(_stats(0))]
        with pytest.raises(DataError, match="minutes") as exc:
            ingest(*league(tmp_path, players=players, box=box))
        assert exc.value.line == 2

    def test_percentage_out_of_range(self, tmp_path):
        players = [("a1", "A", "TA", "Team A", "G"), ("b1", "B", "TB", "Team B", "G")]
        stats = _stats(0)
        stats[STATS.index("TS_PCT")] = "1.5"
        with pytest.raises(DataError, match="TS_PCT"):
            ingest(*league(tmp_path, players=players, box=[("g1", "a1", "20", *stats)]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            ingest(tmp_path / "x.csv", tmp_path / "y.csv", tmp_path / "z.csv")

    def test_mask_follows_minutes_threshold(self, tmp_path):
        players = [
            ("a1", "A1", "TA", "Team A", "G"),
            ("a2", "A2", "TA", "Team A", "G"),
            ("b1", "B1", "TB", "Team B", "G"),
        ]
        box = [
            ("g1", "a1", "25") + tuple(_stats(1)),
            ("g1", "a2", "9.5") + tuple(_stats(2)),
            ("g1", "b1", "10") + tuple(_stats(3)),
        ]
        ds = ingest(*league(tmp_path, players=players, box=box))
        assert ds.mask.tolist() == [[True, False, True]]
        assert np.isnan(ds.raw[0, 1]).all()
        assert ds.snapshots[0].edges == frozenset({(0, 2)})

    def test_calendar_groups_games_by_date(self, tmp_path):
        players = [("p%d" % i, "x", "T%d" % (i // 2), "Team %d" % (i // 2), "G") for i in range(8)]
        games = [
            ("g1", "2023-01-02", "T0", "T1"),
            ("g2", "2023-01-02", "T2", "T3"),
            ("g3", "2023-01-05", "T0", "T2"),
        ]
        sides = {"g1": (0, 1), "g2": (2, 3), "g3": (0, 2)}
        box = [(g, f"p{i}", "30", *_stats(i)) for g, teams in sides.items() for i in range(8) if i // 2 in teams]
        ds = ingest(*league(tmp_path, players=players, games=games, box=box))
        assert [d.isoformat() for d in ds.calendar] == ["2023-01-02", "2023-01-05"]
        assert sorted(ds.snapshots[0].component_sizes) == [4, 4]
        assert ds.snapshots[1].component_sizes == [4]
        assert not ds.mask[1, [2, 3, 6, 7]].any()
        for snap in ds.snapshots:
            verify_cluster_structure(adjacency(snap, ds.n))

    def test_export_round_trip_exact(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        players = [("a1", "A", "TA", "Team A", "G"), ("b1", "B", "TB", "Team B", "C")]
        box = [
            ("g1", "a1", "31.25", "0.1", "3", "1e-3", "2", "0", "1", "-7.5", "55", "40", "2.3456789", "101.1", "0.2", "0.625"),
            ("g1", "b1", "12", *_stats(4)),
        ]
        ds = ingest(*league(src, players=players, box=box))
        write_dataset(ds, tmp_path / "out")
        again = ingest_dir(tmp_path / "out")
        assert np.array_equal(again.raw, ds.raw, equal_nan=True)
        assert again.records == ds.records
        assert again.players == ds.players


class TestForwardFill:
    def test_interior_gap(self):
        filled, never = forward_fill(np.array([[5.0], [NAN], [NAN], [7.0]]))
        assert filled[:, 0].tolist() == [5, 5, 5, 7] and never == []

    def test_leading_gap(self):
        filled, _ = forward_fill(np.array([[NAN], [NAN], [3.0]]))
        assert filled[:, 0].tolist() == [3, 3, 3]

    def test_never_observed(self):
        with pytest.warns(UserWarning, match="never observed"):
            filled, never = forward_fill(np.array([[NAN, 1.0], [NAN, 2.0], [NAN, NAN]]))
        assert filled[:, 0].tolist() == [0, 0, 0]
        assert filled[:, 1].tolist() == [1, 2, 2]
        assert never == [0]

    def test_mask_overrides_values(self):
        raw = np.array([[[1.0]], [[2.0]]])
        filled, _ = forward_fill(raw, mask=np.array([[True], [False]]))
        assert filled[:, 0, 0].tolist() == [1.0, 1.0]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 5), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_forward_fill_leaves_nothing_missing(T, n, p_missing, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((T, n, 3))
    raw[rng.random((T, n)) < p_missing] = NAN
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        filled, never = forward_fill(raw)
    assert np.all(np.isfinite(filled))
    observed = ~np.isnan(raw).any(axis=2)
    assert np.array_equal(filled[observed], raw[observed])
    assert never == [i for i in range(n) if not observed[:, i].any()]


class TestNormalize:
    def test_two_values(self):
        z, norm = normalize(np.array([[[0.0]], [[10.0]]]), slice(0, 2))
        assert norm.mean.tolist() == [5.0] and norm.std.tolist() == [5.0]
        assert z[:, 0, 0].tolist() == [-1.0, 1.0]

    def test_constant_statistic(self):
        z, norm = normalize(np.full((3, 2, 1), 4.0), slice(0, 3))
        assert norm.std[0] == 1e-8 and not z.any()

    def test_round_trip(self):
        x = np.random.default_rng(0).normal(50, 20, size=(6, 4, 13))
        z, norm = normalize(x, slice(0, 3))
        assert np.max(np.abs(norm.invert(z) - x)) < 1e-12

    def test_uses_training_days_only(self):
        x = np.random.default_rng(1).standard_normal((8, 3, 2))
        _, a = normalize(x, slice(0, 4))
        y = x.copy()
        y[4:] += 1000.0
        _, b = normalize(y, slice(0, 4))
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)


class TestWindows:
    @pytest.mark.parametrize("T,count", [(92, 82), (11, 1), (30, 20)])
    def test_count(self, T, count):
        ws = make_windows(T, 10)
        assert len(ws) == count
        assert ws[0].target_day == 10 and ws[-1].target_day == T - 1

    def test_contiguous(self):
        for w in make_windows(20, 5):
            assert w.input_days == tuple(range(w.target_day - 5, w.target_day))

    def test_too_short(self):
        with pytest.raises(ValueError):
            make_windows(10, 10)


class TestChronoSplit:
    @pytest.mark.parametrize("N,sizes", [(82, (41, 20, 21)), (4, (2, 1, 1)), (10, (5, 2, 3))])
    def test_sizes(self, N, sizes):
        parts = chrono_split(make_windows(N + 10, 10))
        assert tuple(map(len, parts)) == sizes

    def test_empty_validation(self):
        with pytest.raises(ValueError, match="validation"):
            chrono_split(make_windows(20, 10), (1.0, 0.0, 0.0))

    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ValueError):
            chrono_split(make_windows(20, 10), (0.5, 0.5, 0.5))

    def test_order_independent_of_input_order(self):
        ws = make_windows(40, 10)
        assert chrono_split(ws[::-1]) == chrono_split(ws)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 200))
def test_split_boundaries_do_not_overlap(N):
    train, val, test = chrono_split([WindowSample((), t) for t in range(N)])
    assert max(w.target_day for w in train) < min(w.target_day for w in val)
    assert max(w.target_day for w in val) < min(w.target_day for w in test)
    assert len(train) + len(val) + len(test) == N


class TestPrepare:
    def test_on_synthetic_league(self, synth_dataset):
        prep = prepare(synth_dataset)
        assert prep.targets == DEFAULT_TARGETS
        assert prep.features.shape == (synth_dataset.T, synth_dataset.n, 13)
        assert np.all(np.isfinite(prep.features))
        train_days = slice(0, max(w.target_day for w in prep.train) + 1)
        flat = prep.features[train_days].reshape(-1, 13)
        assert np.allclose(flat.mean(0), 0, atol=1e-10)
        feats, edges = prep.window_inputs(prep.test[0])
        assert feats.shape[0] == 10 and len(edges) == 10
        y, m = prep.target(prep.test[0])
        assert y.shape == (synth_dataset.n, 6) and m.dtype == bool

    def test_unknown_target(self, synth_dataset):
        with pytest.raises(ValueError, match="XYZ"):
            prepare(synth_dataset, targets=("PTS", "XYZ"))
