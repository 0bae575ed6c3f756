"""Box-score ingestion, calendar alignment, gap filling, scaling and windowing.

Input files (UTF-8, comma separated, header row required):

``players.csv``    player_id,name,team_id,team_name,position
``games.csv``      game_id,date,home_team_id,away_team_id   (dates YYYY-MM-DD, non-decreasing)
``boxscores.csv``  game_id,player_id,minutes,<the 13 statistics in STATS order>
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphkit import DEFAULT_MINUTES_THRESHOLD, GraphSnapshot, build_snapshot, directed_edges
from .model import POSITIONS

STATS = (
    "PTS", "AST", "REB", "TO", "STL", "BLK", "PLUS_MINUS",
    "TCHS", "PASS", "DIST",
    "PACE", "USG_PCT", "TS_PCT",
)  # fmt: skip
PERCENT_STATS = ("USG_PCT", "TS_PCT")
SIGNED_STATS = ("PLUS_MINUS",)
DEFAULT_TARGETS = ("PTS", "REB", "AST", "STL", "BLK", "TO")

PLAYERS_HEADER = ("player_id", "name", "team_id", "team_name", "position")
GAMES_HEADER = ("game_id", "date", "home_team_id", "away_team_id")
BOXSCORE_HEADER = ("game_id", "player_id", "minutes") + STATS

STD_FLOOR = 1e-8


class DataError(ValueError):
    """Schema or referential problem in an input file; carries file and line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{os.path.basename(path)}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class Player:
    player_id: str
    name: str
    team_id: str
    team_name: str
    position: str


@dataclass(frozen=True)
class Game:
    game_id: str
    date: dt.date
    home_team_id: str
    away_team_id: str


@dataclass(frozen=True)
class BoxScoreRecord:
    game_id: str
    player_id: str
    minutes: float
    stats: tuple[float, ...]


@dataclass
class SeasonDataset:
    players: list[Player]
    teams: list[tuple[str, str]]
    games: list[Game]
    records: list[BoxScoreRecord]
    calendar: list[dt.date]
    snapshots: list[GraphSnapshot]
    raw: np.ndarray  # T x n x 13, NaN where not observed
    mask: np.ndarray  # T x n, played >= threshold minutes
    team_index: np.ndarray
    pos_index: np.ndarray
    minutes_threshold: float = DEFAULT_MINUTES_THRESHOLD

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def T(self) -> int:
        return len(self.calendar)

    @property
    def n_teams(self) -> int:
        return len(self.teams)


def _read_rows(path: str, header: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    if not os.path.exists(path):
        raise DataError("file not found", path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise DataError("missing header row", path, 1) from None
        found = [h.strip() for h in found]
        if tuple(found) != tuple(header):
            raise DataError(f"header {found} does not match expected {list(header)}", path, 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            rows.append((lineno, dict(zip(header, (c.strip() for c in row)))))
    return rows


def _float(text: str, column: str, path: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{column} value {text!r} is not a number", path, line) from None
    if not math.isfinite(value):
        raise DataError(f"{column} value {text!r} is not finite", path, line)
    return value


def ingest(
    players_file: str | os.PathLike,
    games_file: str | os.PathLike,
    boxscores_file: str | os.PathLike,
    minutes_threshold: float = DEFAULT_MINUTES_THRESHOLD,
) -> SeasonDataset:
    players_file, games_file, boxscores_file = map(str, (players_file, games_file, boxscores_file))
    players: list[Player] = []
    player_index: dict[str, int] = {}
    teams: dict[str, str] = {}
    for line, row in _read_rows(players_file, PLAYERS_HEADER):
        pid = row["player_id"]
        if not pid:
            raise DataError("empty player_id", players_file, line)
        if pid in player_index:
            raise DataError(f"duplicate player_id {pid}", players_file, line)
        if row["position"] not in POSITIONS:
            raise DataError(f"position {row['position']!r} not in {POSITIONS}", players_file, line)
        team_name = teams.setdefault(row["team_id"], row["team_name"])
        if team_name != row["team_name"]:
            raise DataError(f"team {row['team_id']} named both {team_name!r} and {row['team_name']!r}", players_file, line)
        player_index[pid] = len(players)
        players.append(Player(pid, row["name"], row["team_id"], row["team_name"], row["position"]))
    team_order = list(teams)
    team_pos = {t: i for i, t in enumerate(team_order)}

    games: dict[str, Game] = {}
    last_date = None
    for line, row in _read_rows(games_file, GAMES_HEADER):
        gid = row["game_id"]
        if gid in games:
            raise DataError(f"duplicate game_id {gid}", games_file, line)
        try:
            date = dt.date.fromisoformat(row["date"])
        except ValueError:
            raise DataError(f"date {row['date']!r} is not YYYY-MM-DD", games_file, line) from None
        if last_date is not None and date < last_date:
            raise DataError(f"date {date} precedes previous game date {last_date}", games_file, line)
        last_date = date
        for side in ("home_team_id", "away_team_id"):
            if row[side] not in team_pos:
                raise DataError(f"unknown team {row[side]!r}", games_file, line)
        if row["home_team_id"] == row["away_team_id"]:
            raise DataError(f"team {row['home_team_id']} plays itself", games_file, line)
        games[gid] = Game(gid, date, row["home_team_id"], row["away_team_id"])

    calendar = sorted({g.date for g in games.values()})
    day_of = {d: t for t, d in enumerate(calendar)}
    n, T = len(players), len(calendar)
    raw = np.full((T, n, len(STATS)), np.nan)
    mask = np.zeros((T, n), dtype=bool)
    records: list[BoxScoreRecord] = []
    seen: set[tuple[str, str]] = set()
    game_sides: dict[str, tuple[list, list]] = {gid: ([], []) for gid in games}
    for line, row in _read_rows(boxscores_file, BOXSCORE_HEADER):
        gid, pid = row["game_id"], row["player_id"]
        if gid not in games:
            raise DataError(f"unknown game {gid!r}", boxscores_file, line)
        if pid not in player_index:
            raise DataError(f"unknown player {pid!r}", boxscores_file, line)
        if (gid, pid) in seen:
            raise DataError(f"duplicate row for game {gid} player {pid}", boxscores_file, line)
        seen.add((gid, pid))
        game = games[gid]
        player = players[player_index[pid]]
        if player.team_id == game.home_team_id:
            side = 0
        elif player.team_id == game.away_team_id:
            side = 1
        else:
            raise DataError(f"player {pid} (team {player.team_id}) is not on either team of game {gid}", boxscores_file, line)
        minutes = _float(row["minutes"], "minutes", boxscores_file, line)
        if minutes < 0:
            raise DataError(f"negative minutes {minutes}", boxscores_file, line)
        values = tuple(_float(row[s], s, boxscores_file, line) for s in STATS)
        for s, v in zip(STATS, values):
            if s in PERCENT_STATS and not 0.0 <= v <= 1.0:
                raise DataError(f"{s}={v} outside [0, 1]", boxscores_file, line)
            if s == "DIST" and v < 0:
                raise DataError(f"DIST={v} is negative", boxscores_file, line)
        records.append(BoxScoreRecord(gid, pid, minutes, values))
        game_sides[gid][side].append((player_index[pid], minutes))
        if minutes >= minutes_threshold:
            t, i = day_of[game.date], player_index[pid]
            raw[t, i] = values
            mask[t, i] = True

    by_day: list[list[str]] = [[] for _ in range(T)]
    for gid, game in games.items():
        by_day[day_of[game.date]].append(gid)
    snapshots = []
    for t, gids in enumerate(by_day):
        try:
            snapshots.append(build_snapshot([game_sides[g] for g in gids], minutes_threshold, day_index=t))
        except ValueError as exc:
            raise DataError(f"game day {calendar[t]}: {exc}", boxscores_file) from exc

    return SeasonDataset(
        players=players,
        teams=[(t, teams[t]) for t in team_order],
        games=list(games.values()),
        records=records,
        calendar=calendar,
        snapshots=snapshots,
        raw=raw,
        mask=mask,
        team_index=np.array([team_pos[p.team_id] for p in players], dtype=np.int64),
        pos_index=np.array([POSITIONS.index(p.position) for p in players], dtype=np.int64),
        minutes_threshold=minutes_threshold,
    )


def ingest_dir(directory: str | os.PathLike, minutes_threshold: float = DEFAULT_MINUTES_THRESHOLD) -> SeasonDataset:
    d = Path(directory)
    return ingest(d / "players.csv", d / "games.csv", d / "boxscores.csv", minutes_threshold)


def _fmt(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def write_dataset(dataset: SeasonDataset, directory: str | os.PathLike) -> None:
    """Write the three input CSVs; re-ingesting reproduces every value exactly."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "players.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAYERS_HEADER)
        for p in dataset.players:
            w.writerow((p.player_id, p.name, p.team_id, p.team_name, p.position))
    with open(d / "games.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAMES_HEADER)
        for g in dataset.games:
            w.writerow((g.game_id, g.date.isoformat(), g.home_team_id, g.away_team_id))
    with open(d / "boxscores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOXSCORE_HEADER)
        for r in dataset.records:
            w.writerow((r.game_id, r.player_id, _fmt(r.minutes)) + tuple(_fmt(v) for v in r.stats))


def forward_fill(raw: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, list[int]]:
    """Fill gaps per player and statistic along the first (time) axis.

    Missing entries take the most recent observed value; entries before the
    first observation take that first value. Players never observed become
    zeros and are returned in the warning list.
    """
    raw = np.asarray(raw, dtype=np.float64)
    squeeze = raw.ndim == 2
    if squeeze:
        raw = raw[:, :, None]
    if mask is None:
        observed = ~np.isnan(raw).any(axis=2)
    else:
        observed = np.asarray(mask, dtype=bool)
    T, n, _ = raw.shape
    filled = np.zeros_like(raw)
    never = []
    for i in range(n):
        days = np.flatnonzero(observed[:, i])
        if days.size == 0:
            never.append(i)
            continue
        # index of most recent observation at or before t, clipped to first
        last = np.maximum.accumulate(np.where(observed[:, i], np.arange(T), -1))
        last = np.where(last < 0, days[0], last)
        filled[:, i] = raw[last, i]
    if never:
        warnings.warn(f"{len(never)} player(s) never observed; filled with zeros: {never[:10]}", stacklevel=2)
    return (filled[:, :, 0] if squeeze else filled), never


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


def normalize(filled: np.ndarray, train_days: slice | range | Sequence[int]) -> tuple[np.ndarray, Normalizer]:
    """Per-statistic z-score using statistics of the training days only."""
    if isinstance(train_days, range):
        train_days = slice(train_days.start, train_days.stop)
    train = np.asarray(filled)[train_days]
    flat = train.reshape(-1, train.shape[-1])
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), STD_FLOOR)
    norm = Normalizer(mean, std)
    return norm.apply(filled), norm


@dataclass(frozen=True)
class WindowSample:
    input_days: tuple[int, ...]
    target_day: int


def make_windows(T: int, t0: int = 10, horizon: int = 1) -> list[WindowSample]:
    if horizon != 1:
        raise ValueError("only one-step-ahead windows are supported")
    if T <= t0:
        raise ValueError(f"need more than t0={t0} game days, got T={T}")
    return [WindowSample(tuple(range(t - t0, t)), t) for t in range(t0, T)]


def chrono_split(
    samples: Sequence[WindowSample],
    ratios: tuple[float, float, float] = (0.5, 0.25, 0.25),
) -> tuple[list[WindowSample], list[WindowSample], list[WindowSample]]:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    ordered = sorted(samples, key=lambda w: w.target_day)
    N = len(ordered)
    a = math.floor(N * ratios[0] + 1e-9)
    b = math.floor(N * (ratios[0] + ratios[1]) + 1e-9)
    parts = (ordered[:a], ordered[a:b], ordered[b:])
    for name, part in zip(("train", "validation", "test"), parts):
        if not part:
            raise ValueError(f"{name} split is empty for {N} samples and ratios {ratios}")
    return parts


@dataclass
class PreparedSeason:
    """A dataset made model-ready: filled, scaled, windowed and split."""

    dataset: SeasonDataset
    t0: int
    targets: tuple[str, ...]
    target_idx: np.ndarray
    filled: np.ndarray
    features: np.ndarray
    normalizer: Normalizer
    edges: list[tuple[np.ndarray, np.ndarray]]
    train: list[WindowSample]
    val: list[WindowSample]
    test: list[WindowSample]
    never_observed: list[int] = field(default_factory=list)

    @property
    def target_mean(self) -> np.ndarray:
        return self.normalizer.mean[self.target_idx]

    @property
    def target_std(self) -> np.ndarray:
        return self.normalizer.std[self.target_idx]

    def window_inputs(self, w: WindowSample) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
        days = list(w.input_days)
        return self.features[days], [self.edges[t] for t in days]

    def target(self, w: WindowSample) -> tuple[np.ndarray, np.ndarray]:
        """Original-unit targets (forward-filled) and the active-player mask for ``w``."""
        return self.filled[w.target_day][:, self.target_idx], self.dataset.mask[w.target_day]


def resolve_targets(names: Sequence[str]) -> np.ndarray:
    unknown = [s for s in names if s not in STATS]
    if unknown:
        raise ValueError(f"unknown target statistic(s) {unknown}; choose from {STATS}")
    return np.array([STATS.index(s) for s in names], dtype=np.int64)


def prepare(
    dataset: SeasonDataset,
    t0: int = 10,
    targets: Sequence[str] = DEFAULT_TARGETS,
    ratios: tuple[float, float, float] = (0.5, 0.25, 0.25),
) -> PreparedSeason:
    target_idx = resolve_targets(targets)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        filled, never = forward_fill(dataset.raw, dataset.mask)
    windows = make_windows(dataset.T, t0)
    train, val, test = chrono_split(windows, ratios)
    # training range: every day a training window reads or predicts
    train_stop = max(w.target_day for w in train) + 1
    features, normalizer = normalize(filled, slice(0, train_stop))
    edges = [directed_edges(s, dataset.n) for s in dataset.snapshots]
    return PreparedSeason(
        dataset=dataset,
        t0=t0,
        targets=tuple(targets),
        target_idx=target_idx,
        filled=filled,
        features=features,
        normalizer=normalizer,
        edges=edges,
        train=train,
        val=val,
        test=test,
        never_observed=never,
    )
