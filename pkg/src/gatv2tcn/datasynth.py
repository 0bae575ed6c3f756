"""Synthetic leagues with a planted opponent-interaction effect.

Each player has a mean level per statistic and a standardised deviation
``u`` following

    u[t] = alpha * u[t-1] - beta * opp[t-1] + noise * eps[t]

where ``opp[t-1]`` is the mean defensive skill of the opponents the player
faced (with at least ``minutes_threshold`` minutes) on the previous game day.
The opponent term is therefore only visible through the previous day's
interaction graph. Reported values are ``mu + scale * u``, clipped to each
statistic's support.
"""

from __future__ import annotations

import csv
import datetime as dt
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphkit import DEFAULT_MINUTES_THRESHOLD
from .model import POSITIONS
from .pipeline import BOXSCORE_HEADER, GAMES_HEADER, PLAYERS_HEADER, STATS

# (low, high) of the per-player mean and the per-statistic scale
STAT_PROFILE = {
    "PTS": (4.0, 25.0, 5.0),
    "AST": (1.0, 8.0, 2.0),
    "REB": (2.0, 11.0, 2.5),
    "TO": (0.5, 3.0, 1.0),
    "STL": (0.3, 2.0, 0.7),
    "BLK": (0.1, 2.0, 0.6),
    "PLUS_MINUS": (-5.0, 5.0, 8.0),
    "TCHS": (20.0, 80.0, 10.0),
    "PASS": (15.0, 60.0, 8.0),
    "DIST": (1.5, 2.8, 0.2),
    "PACE": (95.0, 105.0, 3.0),
    "USG_PCT": (0.12, 0.32, 0.04),
    "TS_PCT": (0.48, 0.64, 0.08),
}


@dataclass
class SynthConfig:
    seed: int = 7
    teams: int = 8
    players_per_team: int = 8
    days: int = 120
    # 3 of the 4 possible games per day, so two teams sit out every day
    games_per_day: int = 3
    alpha: float = 0.5
    beta: float = 2.0
    noise: float = 1.0
    minutes_mean: float = 22.0
    minutes_sd: float = 9.5
    skill_spread: float = 0.3
    start_date: str = "2022-10-18"
    minutes_threshold: float = DEFAULT_MINUTES_THRESHOLD

    def __post_init__(self):
        if self.teams < 2 or self.players_per_team < 1 or self.days < 1 or self.games_per_day < 1:
            raise ValueError("teams >= 2, players_per_team/days/games_per_day >= 1 required")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.beta < 0 or self.noise < 0:
            raise ValueError("beta and noise must be non-negative")


@dataclass
class SynthTruth:
    """Latent quantities behind a generated league, for oracle checks."""

    mu: np.ndarray  # n x 13
    scale: np.ndarray  # 13
    defense: np.ndarray  # n
    team_defense: np.ndarray  # teams
    deviation: np.ndarray  # days x n x 13, standardised u
    opponent_skill: np.ndarray  # days x n, mean opponent defence that day (0 when idle)
    played: np.ndarray  # days x n, team had a game
    files: dict[str, str] = field(default_factory=dict)


def round_robin(teams: int) -> list[list[tuple[int, int]]]:
    """Circle-method rounds; with an odd count one team sits out each round."""
    ids = list(range(teams)) + ([-1] if teams % 2 else [])
    m = len(ids)
    rounds = []
    for r in range(m - 1):
        pairs = []
        for k in range(m // 2):
            a, b = ids[k], ids[m - 1 - k]
            if a >= 0 and b >= 0:
                pairs.append((a, b) if (r + k) % 2 == 0 else (b, a))
        rounds.append(pairs)
        ids = [ids[0], ids[-1]] + ids[1:-1]
    return rounds


def schedule(config: SynthConfig, rng: np.random.Generator) -> list[list[tuple[int, int]]]:
    """Per-day ``(home, away)`` pairs.

    Every cycle plays all round-robin rounds in a freshly shuffled order, so
    the opponent sequence is not periodic and cannot be read off a player's
    own history. When fewer games than pairs fit in a day the playing subset
    rotates.
    """
    rounds = round_robin(config.teams)
    days = []
    order: list[int] = []
    for t in range(config.days):
        if not order:
            order = list(rng.permutation(len(rounds)))
        pairs = rounds[order.pop()]
        k = min(config.games_per_day, len(pairs))
        shift = (t // len(rounds)) % len(pairs)
        days.append([pairs[(shift + j) % len(pairs)] for j in range(k)])
    return days


def _fmt(value: float) -> str:
    text = repr(round(float(value), 4))
    return "0" if text in ("0.0", "-0.0") else (text[:-2] if text.endswith(".0") else text)


def generate(config: SynthConfig, out_dir: str | os.PathLike | None = None) -> SynthTruth:
    """Simulate a league; write ``players.csv``, ``games.csv``, ``boxscores.csv`` when ``out_dir`` is given."""
    rng = np.random.default_rng(config.seed)
    nt, ppt = config.teams, config.players_per_team
    n = nt * ppt
    team_of = np.repeat(np.arange(nt), ppt)
    lows = np.array([STAT_PROFILE[s][0] for s in STATS])
    highs = np.array([STAT_PROFILE[s][1] for s in STATS])
    scale = np.array([STAT_PROFILE[s][2] for s in STATS])
    mu = rng.uniform(lows, highs, size=(n, len(STATS)))
    team_defense = rng.standard_normal(nt)
    defense = team_defense[team_of] + config.skill_spread * rng.standard_normal(n)

    days = schedule(config, rng)
    T = config.days
    u = np.zeros((T, n, len(STATS)))
    opp = np.zeros((T, n))
    played = np.zeros((T, n), dtype=bool)
    minutes = np.zeros((T, n))
    if config.alpha < 1 and config.noise > 0:
        prev = config.noise / np.sqrt(1 - config.alpha**2) * rng.standard_normal((n, len(STATS)))
    else:
        prev = np.zeros((n, len(STATS)))
    prev_opp = np.zeros(n)
    for t, games in enumerate(days):
        eps = rng.standard_normal((n, len(STATS)))
        u[t] = config.alpha * prev - config.beta * prev_opp[:, None] + config.noise * eps
        mins = np.clip(rng.normal(config.minutes_mean, config.minutes_sd, size=n), 0.0, 48.0)
        for home, away in games:
            for side, other in ((home, away), (away, home)):
                members = np.flatnonzero(team_of == side)
                opponents = np.flatnonzero(team_of == other)
                qualified = opponents[mins[opponents] >= config.minutes_threshold]
                played[t, members] = True
                minutes[t, members] = mins[members]
                opp[t, members] = defense[qualified].mean() if qualified.size else 0.0
        prev = u[t]
        prev_opp = opp[t]

    values = mu[None] + scale[None, None] * u
    for k, s in enumerate(STATS):
        if s == "PLUS_MINUS":
            continue
        values[:, :, k] = np.maximum(values[:, :, k], 0.0)
        if s in ("USG_PCT", "TS_PCT"):
            values[:, :, k] = np.minimum(values[:, :, k], 1.0)

    truth = SynthTruth(mu, scale, defense, team_defense, u, opp, played)
    if out_dir is not None:
        truth.files = _write(config, out_dir, days, team_of, minutes, values)
    return truth


def _write(config, out_dir, days, team_of, minutes, values) -> dict[str, str]:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    start = dt.date.fromisoformat(config.start_date)
    paths = {name: str(d / f"{name}.csv") for name in ("players", "games", "boxscores")}
    with open(paths["players"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAYERS_HEADER)
        for i, team in enumerate(team_of):
            w.writerow((f"P{i:04d}", f"Player {i}", f"T{team:02d}", f"Team {team}", POSITIONS[i % len(POSITIONS)]))
    game_rows, box_rows = [], []
    for t, games in enumerate(days):
        date = (start + dt.timedelta(days=t)).isoformat()
        for g, (home, away) in enumerate(games):
            gid = f"G{t:03d}{g:02d}"
            game_rows.append((gid, date, f"T{home:02d}", f"T{away:02d}"))
            for side in (home, away):
                for i in np.flatnonzero(team_of == side):
                    box_rows.append((gid, f"P{i:04d}", _fmt(minutes[t, i])) + tuple(_fmt(v) for v in values[t, i]))
    with open(paths["games"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAMES_HEADER)
        w.writerows(game_rows)
    with open(paths["boxscores"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOXSCORE_HEADER)
        w.writerows(box_rows)
    return paths
