import io

import numpy as np
import pytest

from mixbias.errors import EmptyDesign, InvalidInput, ParseError
from mixbias.lmm import nu_and_quad
from mixbias.schedules import (
    GameRecord,
    adversarial_select,
    build_design,
    games_from_schedule,
    gen_balanced_schedule,
    gen_random_schedule,
    parse_games,
    shuffle_eta,
    switch_homes,
    write_games,
)

CSV = """home_team,away_team,home_score,away_score,neutral
A,B,21,14,false
C,A,10,17,false
B,C,3,3,true
C,B,24,20,false
"""


def test_parse_and_build():
    games = parse_games(CSV)
    assert len(games) == 4
    assert games[0] == GameRecord("A", "B", 21.0, 14.0, False)
    assert games[2].neutral
    sched, spec = build_design(games)
    assert sched.teams == ("A", "B", "C")
    assert np.array_equal(sched.Z, [[1, -1, 0], [-1, 0, 1], [0, -1, 1]])
    assert np.array_equal(sched.margins, [7.0, -7.0, 4.0])
    assert np.array_equal(spec.X, np.ones((3, 1)))


def test_neutral_games_can_be_kept():
    sched, spec = build_design(parse_games(CSV), exclude_neutral=False)
    assert sched.n_games == 4
    assert spec.X[:, 0].tolist() == [1.0, 1.0, 0.0, 1.0]


def test_parse_from_path_and_file_object(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("\ufeff" + CSV.replace("\n", "\r\n"), encoding="utf-8")
    assert parse_games(path) == parse_games(CSV)
    assert parse_games(str(path)) == parse_games(CSV)
    assert parse_games(io.StringIO(CSV)) == parse_games(CSV)


@pytest.mark.parametrize("body, line", [
    ("A,B,1,2\n", 2),
    ("A,B,x,2,false\n", 2),
    ("A,B,1,2,maybe\n", 2),
    ("A,A,1,2,false\n", 2),
    ('"A,B",C,1,2,false\n', 2),
    ("A,B,1,2,false\n,B,1,2,false\n", 3),
    ("A,B,nan,2,false\n", 2),
])
def test_parse_errors_carry_line_numbers(body, line):
    with pytest.raises(ParseError) as exc:
        parse_games("home_team,away_team,home_score,away_score,neutral\n" + body)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_bad_header():
    with pytest.raises(ParseError):
        parse_games("home,away,hs,as,neutral\nA,B,1,2,false\n")
    with pytest.raises(ParseError):
        parse_games("\n\n")


def test_all_neutral_is_empty_design():
    with pytest.raises(EmptyDesign):
        build_design(parse_games(CSV.splitlines()[0] + "\nA,B,1,2,true\n"))


def test_write_roundtrip(tmp_path):
    sched = gen_random_schedule(6, 4, 1)
    y = np.arange(sched.n_games, dtype=float) - 3.5
    path = tmp_path / "out.csv"
    write_games(games_from_schedule(sched, y), path)
    again, _ = build_design(parse_games(path))
    assert np.array_equal(again.margins, y)
    assert np.array_equal(np.abs(again.Z).sum(axis=1), np.full(sched.n_games, 2))


@pytest.mark.parametrize("m, g", [(8, 6), (7, 4), (10, 12)])
def test_random_schedule_structure(m, g):
    s = gen_random_schedule(m, g, 0)
    assert s.Z.shape == (m * g // 2, m)
    assert np.all(s.Z.sum(axis=1) == 0)
    assert np.all((s.Z != 0).sum(axis=1) == 2)
    assert np.all(np.abs(s.Z).sum(axis=0) == g)


def test_balanced_schedule():
    s = gen_balanced_schedule(9, 4, 2)
    assert s.is_balanced()
    assert np.all(s.home_counts() == 2)
    with pytest.raises(InvalidInput):
        gen_balanced_schedule(8, 5, 0)
    with pytest.raises(InvalidInput):
        gen_balanced_schedule(9, 6, 0)


def test_generator_rejects_impossible():
    with pytest.raises(InvalidInput):
        gen_random_schedule(5, 3, 0)
    with pytest.raises(InvalidInput):
        gen_random_schedule(1, 2, 0)


def test_adversarial_select_picks_max():
    rng = np.random.default_rng(3)
    cands = [gen_random_schedule(8, 4, rng) for _ in range(12)]
    eta = rng.standard_normal(8)
    sel = adversarial_select(cands, eta, theta=0.5, workers=2)
    ref = [nu_and_quad(np.ones((16, 1)), c.Z, 0.5, np.ones(1))[0] @ eta for c in cands]
    assert np.allclose(sel.values, ref)
    assert sel.index == int(np.argmax(ref))
    assert sel.nu_eta_value == max(ref)
    with pytest.raises(InvalidInput):
        adversarial_select([], eta)


def test_switch_homes_counts():
    Z = gen_random_schedule(6, 4, 0).Z
    rng = np.random.default_rng(1)
    for p, k in [(0.0, 0), (0.25, 3), (0.5, 6), (1.0, 12)]:
        W = switch_homes(Z, p, rng)
        assert int(np.sum(np.any(W != Z, axis=1))) == k
    assert np.array_equal(switch_homes(Z, 1.0, rng), -Z)
    with pytest.raises(InvalidInput):
        switch_homes(Z, 1.5)


def test_shuffle_eta_multiset():
    eta = np.arange(10.0)
    out = shuffle_eta(eta, 0)
    assert sorted(out) == list(eta)
    assert not np.array_equal(out, eta)
