import numpy as np
import pytest

from conftest import random_map, random_state
from losscodes import io
from losscodes.cli import build_parser, main
from losscodes.dicke import ChoiMap


def test_table_roundtrip(tmp_path):
    rows = [(0.5, 0.95), (0.51, 0.949999)]
    path = io.write_table(tmp_path / "a" / "2-5-3.dat", rows)
    assert path.read_text() == "0.50 0.950000\n0.51 0.949999\n"
    assert io.read_table(path) == rows
    with pytest.raises(ValueError):
        io.write_table(tmp_path / "b.dat", [(0.5, 1.0), (0.5, 1.0)])


@pytest.mark.parametrize("d,k", [(2, 3), (3, 2)])
def test_protocol_roundtrip(d, k, rng, tmp_path):
    st = random_state(d, k, rng)
    ch = random_map(d, k, rng)
    for obj in (st, ch):
        path = io.write_protocol(tmp_path / "x.txt", obj)
        back = io.read_protocol(path)
        assert type(back) is type(obj)
        np.testing.assert_array_equal(back.coeffs, obj.coeffs)


def test_protocol_parse_errors():
    with pytest.raises(ValueError):
        io.parse_protocol("d 2\n")
    with pytest.raises(ValueError):
        io.parse_protocol("d 2\ns 1\nkind blob\n")
    with pytest.raises(ValueError):
        io.parse_protocol("d 2\ns 1\nkind state\n0 1 0 1.0\n")
    out = io.parse_protocol("d 2\nr 1\nkind map\n0 1 0 0 1 0 1\n0 1 0 1 0 1 1\n1 0 1 1 0 1 1\n")
    assert isinstance(out, ChoiMap)
    np.testing.assert_allclose(out.coeffs, ChoiMap.identity().coeffs)


def test_default_outdir(monkeypatch, tmp_path):
    monkeypatch.setenv(io.OUTDIR_ENV, str(tmp_path))
    assert io.default_outdir() == tmp_path


def test_missing_args_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["optimize", "2", "2"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("d,s,r,check", [(2, 2, 1, lambda F: abs(F - 0.75) < 1e-3), (2, 4, 3, lambda F: F >= 0.999)])
def test_optimize_and_eval(d, s, r, check, tmp_path, capsys):
    assert main(["optimize", str(d), str(s), str(r), "--pmin", "1.0", "--pmax", "1.0", "--outdir", str(tmp_path),
                 "--save-protocols"]) == 0
    text = (tmp_path / f"{d}-{s}-{r}.dat").read_text()
    assert text.startswith("1.00 ")
    F = float(text.split()[1])
    assert check(F)
    capsys.readouterr()
    folder = tmp_path / f"{d}-{s}-{r}"
    assert main(["eval", str(folder / "1.00.state"), str(folder / "1.00.map")]) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert abs(float(out["fidelity"]) - F) < 1e-5
    assert abs(float(out["p_dist"]) - 1.0) < 1e-6


def test_optimize_is_byte_stable(tmp_path):
    args = ["optimize", "2", "3", "2", "--pmin", "0.98", "--pmax", "1.0", "--seed", "5"]
    main(args + ["--outdir", str(tmp_path / "a")])
    main(args + ["--outdir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "2-3-2.dat").read_bytes() == (tmp_path / "b" / "2-3-2.dat").read_bytes()


def test_analyze_rpe(capsys):
    assert main(["analyze", "rpe", "--ptrans", "0.82", "--threshold", "0.001"]) == 0
    rows = dict(tuple(map(int, line.split())) for line in capsys.readouterr().out.splitlines())
    assert rows[1] == 35 and rows[2] == 39 and rows[12] == 48 and rows[35] == 1


def test_analyze_keyrate_direct(capsys):
    assert main(["analyze", "keyrate", "--direct", "--alpha", "0.2dB", "--Lmax", "10", "--Lstep", "5"]) == 0
    for line in capsys.readouterr().out.splitlines():
        L, k = map(float, line.split())
        assert k == pytest.approx(np.exp(-0.0460517 * L), abs=1e-6)


def test_analyze_entropy_swap_distance(capsys):
    assert main(["analyze", "entropy", "--Lmin", "6", "--Lmax", "7"]) == 0
    rows = [list(map(float, line.split())) for line in capsys.readouterr().out.splitlines()]
    assert rows[0][1] < 1 < rows[1][1]
    assert main(["analyze", "swap", "--werner", "1.0"]) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert float(out["e_X"]) == 0.0 and float(out["e_Z"]) == 0.0
    assert main(["analyze", "distance"]) == 0
    assert 6 < float(capsys.readouterr().out.split()[1]) < 7
    assert main(["analyze", "swap"]) == 1


def test_analyze_yield_and_bestdist(tmp_path, capsys):
    main(["optimize", "2", "2", "1", "--pmin", "1.0", "--pmax", "1.0", "--outdir", str(tmp_path), "--save-protocols"])
    capsys.readouterr()
    assert main(["analyze", "yield", "--protocols", str(tmp_path), "--Lmax", "2"]) == 0
    rows = [list(map(float, line.split())) for line in capsys.readouterr().out.splitlines()]
    assert rows[0][1] == pytest.approx(1.0)
    assert main(["analyze", "distance", "--L", "2", "--protocols", str(tmp_path), "--outdir", str(tmp_path)]) == 0
    assert (tmp_path / "bestdist2.dat").read_text().strip().endswith("0.750000")
    assert main(["analyze", "keyrate", "--protocols", str(tmp_path / "none")]) == 1


def test_verify(capsys):
    assert main(["verify"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_all_r(tmp_path):
    assert main(["all-r", "2", "2", "--ptrans", "0.5", "--pmin", "0.5", "--pmax", "0.5", "--outdir", str(tmp_path)]) == 0
    rows = io.read_table(tmp_path / "2-2-all.dat")
    assert rows[0][0] == 0.5 and rows[0][1] > 0.8


def test_parser_has_all_commands():
    ap = build_parser()
    for cmd in (["verify"], ["eval", "a", "b"], ["analyze", "rpe"], ["all-r", "2", "3", "--L", "1"]):
        assert ap.parse_args(cmd).command == cmd[0]
