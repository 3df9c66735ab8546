"""Game records, schedule matrices and schedule generators.

A schedule of n games among m teams is an n x m matrix Z whose row i has
+1 in the home team's column, -1 in the away team's column and zeros
elsewhere. The response is the home margin of victory, and the fixed
design is a single intercept column (the home advantage).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._parallel import parallel_map
from .errors import EmptyDesign, InvalidInput, ParseError
from .lmm import ModelSpec, nu_and_quad

CSV_HEADER = ("home_team", "away_team", "home_score", "away_score", "neutral")


@dataclass(frozen=True)
class GameRecord:
    home_team: str
    away_team: str
    home_score: float
    away_score: float
    neutral: bool = False

    @property
    def margin(self) -> float:
        return self.home_score - self.away_score


@dataclass(frozen=True)
class Schedule:
    """Schedule matrix plus the team ordering of its columns."""

    Z: np.ndarray
    teams: tuple
    margins: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_games(self) -> int:
        return self.Z.shape[0]

    @property
    def n_teams(self) -> int:
        return self.Z.shape[1]

    @property
    def team_index(self) -> dict:
        return {t: j for j, t in enumerate(self.teams)}

    def home_counts(self) -> np.ndarray:
        return (self.Z > 0).sum(axis=0)

    def is_balanced(self) -> bool:
        """Every team has as many home as away games (X'Z = 0)."""
        return bool(np.all(self.Z.sum(axis=0) == 0))


def _parse_bool(text, line):
    t = text.strip().lower()
    if t == "true":
        return True
    if t == "false":
        return False
    raise ParseError(f"neutral must be true or false, got {text!r}", line)


def _parse_float(text, what, line):
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"{what} is not a number: {text!r}", line) from None
    if not np.isfinite(val):
        raise ParseError(f"{what} must be finite", line)
    return val


def parse_games(source) -> list[GameRecord]:
    """Read games from a path, a file object, or CSV text.

    The header must be ``home_team,away_team,home_score,away_score,neutral``.
    Fields are split on bare commas; quoting is not supported, so a quoted
    team name containing a comma is rejected. Blank lines are skipped.
    Neutral-site rows are kept and flagged.
    """
    if isinstance(source, (str, os.PathLike)) and (
        isinstance(source, os.PathLike) or "\n" not in source and os.path.exists(source)
    ):
        with open(source, encoding="utf-8") as fh:
            return _parse_lines(fh)
    if isinstance(source, str):
        return _parse_lines(io.StringIO(source))
    return _parse_lines(source)


def _parse_lines(lines: Iterable[str]) -> list[GameRecord]:
    games = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if lineno == 1:
            line = line.lstrip("\ufeff")
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if not header_seen:
            if tuple(f.lower() for f in fields) != CSV_HEADER:
                raise ParseError(f"expected header {','.join(CSV_HEADER)}", lineno)
            header_seen = True
            continue
        if len(fields) != len(CSV_HEADER) or any('"' in f for f in fields):
            raise ParseError(f"expected {len(CSV_HEADER)} unquoted fields", lineno)
        home, away = fields[0], fields[1]
        if not home or not away:
            raise ParseError("empty team id", lineno)
        if home == away:
            raise ParseError(f"team {home!r} cannot play itself", lineno)
        games.append(GameRecord(
            home, away,
            _parse_float(fields[2], "home_score", lineno),
            _parse_float(fields[3], "away_score", lineno),
            _parse_bool(fields[4], lineno),
        ))
    if not header_seen:
        raise ParseError("missing header row", 1)
    return games


def build_design(games: Sequence[GameRecord], exclude_neutral: bool = True
                 ) -> tuple[Schedule, ModelSpec]:
    """Schedule matrix, margins and intercept-only design from game records.

    Team columns follow order of first appearance (home team before away
    team within a row). With ``exclude_neutral=False`` neutral games are
    kept with a zero in the intercept column, since no home advantage
    applies to them.
    """
    rows = [g for g in games if not (exclude_neutral and g.neutral)]
    if not rows:
        raise EmptyDesign("no non-neutral games to fit")
    teams = list(dict.fromkeys(t for g in rows for t in (g.home_team, g.away_team)))
    index = {t: j for j, t in enumerate(teams)}
    Z = np.zeros((len(rows), len(teams)))
    hi = np.array([index[g.home_team] for g in rows])
    ai = np.array([index[g.away_team] for g in rows])
    Z[np.arange(len(rows)), hi] = 1.0
    Z[np.arange(len(rows)), ai] = -1.0
    Y = np.array([g.margin for g in rows])
    X = np.array([[0.0 if g.neutral else 1.0] for g in rows])
    sched = Schedule(Z, tuple(teams), Y)
    return sched, ModelSpec(X, Z, x_names=("intercept",))


def games_from_schedule(sched: Schedule, margins=None) -> list[GameRecord]:
    """Inverse of :func:`build_design` for non-neutral schedules."""
    Y = sched.margins if margins is None else np.asarray(margins, dtype=float)
    if Y is None:
        raise InvalidInput("schedule has no margins")
    games = []
    for row, y in zip(sched.Z, Y):
        h, a = int(np.flatnonzero(row > 0)[0]), int(np.flatnonzero(row < 0)[0])
        games.append(GameRecord(sched.teams[h], sched.teams[a], float(y), 0.0, False))
    return games


def write_games(games: Sequence[GameRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for g in games:
            fh.write(f"{g.home_team},{g.away_team},{g.home_score!r},{g.away_score!r},"
                     f"{'true' if g.neutral else 'false'}\n")


def intercept_spec(Z) -> ModelSpec:
    Z = np.asarray(Z, dtype=float)
    return ModelSpec(np.ones((Z.shape[0], 1)), Z, x_names=("intercept",))


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def _team_ids(m):
    width = len(str(m - 1))
    return tuple(f"T{j:0{width}d}" for j in range(m))


def _pairings(m, games_per_team, rng):
    """(n, 2) array of unordered pairings, each team in games_per_team of them."""
    if m % 2 == 0:
        rounds = [rng.permutation(m).reshape(-1, 2) for _ in range(games_per_team)]
        return np.vstack(rounds)
    stubs = np.repeat(np.arange(m), games_per_team)
    for _ in range(100_000):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        if np.all(pairs[:, 0] != pairs[:, 1]):
            return pairs
    raise InvalidInput("could not draw a pairing without self-games")


def _to_z(pairs, m):
    n = pairs.shape[0]
    Z = np.zeros((n, m))
    Z[np.arange(n), pairs[:, 0]] = 1.0
    Z[np.arange(n), pairs[:, 1]] = -1.0
    return Z


def gen_random_schedule(m_teams: int, games_per_team: int, rng=None) -> Schedule:
    """Random schedule where every team plays ``games_per_team`` games.

    Opponents come from repeated random perfect matchings (self-games
    rejected) and home/away is a fair coin per game, so home counts vary
    across teams.
    """
    if m_teams < 2 or games_per_team < 1 or (m_teams * games_per_team) % 2:
        raise InvalidInput("need m_teams >= 2, games_per_team >= 1, even total")
    rng = np.random.default_rng(rng)
    pairs = _pairings(m_teams, games_per_team, rng)
    flip = rng.random(pairs.shape[0]) < 0.5
    pairs[flip] = pairs[flip][:, ::-1]
    return Schedule(_to_z(pairs, m_teams), _team_ids(m_teams))


def gen_balanced_schedule(m_teams: int, games_per_team: int, rng=None) -> Schedule:
    """Random home-and-home schedule: every pairing is played once at each venue.

    ``games_per_team`` must be even; every team then has equal home and
    away counts, so the schedule is orthogonal to the intercept.
    """
    if games_per_team % 2:
        raise InvalidInput("a balanced schedule needs an even games_per_team")
    if m_teams < 2 or games_per_team < 2 or (m_teams * games_per_team // 2) % 2:
        raise InvalidInput("need m_teams >= 2 and an even m_teams * games_per_team / 2")
    rng = np.random.default_rng(rng)
    pairs = _pairings(m_teams, games_per_team // 2, rng)
    both = np.vstack([pairs, pairs[:, ::-1]])
    both = both[rng.permutation(both.shape[0])]
    return Schedule(_to_z(both, m_teams), _team_ids(m_teams))


@dataclass(frozen=True)
class Selection:
    index: int
    nu_eta_value: float
    values: np.ndarray = field(repr=False)


def adversarial_select(candidates: Sequence, eta, k=None, theta: float = 225 / 529,
                       R_diag=None, X=None, workers: int = 1) -> Selection:
    """Pick the candidate schedule that maximizes nu_k' eta at a known theta.

    Candidates are Z matrices or :class:`Schedule` objects. ``X`` defaults
    to an intercept column and ``k`` to the intercept. Ties go to the
    lowest index.
    """
    if len(candidates) == 0:
        raise InvalidInput("no candidate schedules")
    eta = np.asarray(eta, dtype=float)

    def value(Z):
        Z = Z.Z if isinstance(Z, Schedule) else np.asarray(Z, dtype=float)
        Xc = np.ones((Z.shape[0], 1)) if X is None else X
        kk = np.ones(Xc.shape[1]) if k is None and Xc.shape[1] == 1 else np.asarray(k, float)
        nu, _ = nu_and_quad(Xc, Z, theta, kk, R_diag)
        return float(nu @ eta)

    vals = np.array(parallel_map(value, candidates, workers))
    i = int(np.argmax(vals))
    return Selection(i, float(vals[i]), vals)


def switch_homes(Z, p_s: float, rng=None) -> np.ndarray:
    """Negate round(p_s * n) rows of Z chosen uniformly without replacement."""
    if not 0.0 <= p_s <= 1.0:
        raise InvalidInput("p_s must lie in [0, 1]")
    Z = np.array(Z.Z if isinstance(Z, Schedule) else Z, dtype=float)
    n = Z.shape[0]
    n_switch = int(np.floor(p_s * n + 0.5))
    if n_switch == n:
        return -Z
    if n_switch:
        rows = np.random.default_rng(rng).choice(n, size=n_switch, replace=False)
        Z[rows] *= -1.0
    return Z


def shuffle_eta(eta, rng=None) -> np.ndarray:
    """Uniform random permutation of eta."""
    return np.random.default_rng(rng).permutation(np.asarray(eta, dtype=float))
