import io

from kochergin.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_cf_table():
    code, text = run("cf", "--alpha", "golden", "--depth", "8")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "n,a_n,p_n,q_n,D-check" and lines[1].startswith("1,1,")
    assert [int(l.split(",")[3]) for l in lines[1:]] == [1, 2, 3, 5, 8, 13, 21, 34]


def test_cf_check_violation_and_usage():
    assert run("cf", "--alpha", "golden", "--depth", "12", "--check-D", "--C", "2")[0] == 0
    assert run("cf", "--alpha", "golden", "--depth", "12", "--check-D", "--C", "1")[0] == 1
    assert run("cf", "--alpha", "e", "--depth", "25", "--check-D", "--C", "0.01")[0] == 1
    assert run("cf", "--alpha", "0.5")[0] == 2
    assert run("cf")[0] == 2
    assert run("frobnicate")[0] == 2


def test_dk_check():
    code, text = run("dk-check", "--z", "0.3", "--M", "34")
    assert code == 0 and len(text.splitlines()) == 7
    assert run("dk-check", "--sweep", "--cases", "5")[0] == 0
    assert run("dk-check", "--z", "0.3")[0] == 2


def test_simulate():
    code, text = run("simulate", "--x", "0.2,0.1", "--y", "0.7,0.05", "--steps", "3")
    assert code == 0 and len(text.splitlines()) == 5
    assert run("simulate", "--x", "0.2,99", "--y", "0.7,0.05", "--t", "1")[0] == 2


def test_code_and_fbar(tmp_path):
    code, _ = run("code", "--N", "64", "--count", "2", "--out", str(tmp_path / "w"))
    assert code == 0
    a, b = sorted((tmp_path / "w").iterdir())
    wit = tmp_path / "wit.txt"
    code, text = run("fbar", "--a", str(a), "--b", str(b), "--emit-witness", str(wit))
    assert code == 0 and "exact" in text
    card = int(text.split("\t")[3])
    assert len(wit.read_text().splitlines()) == card
    code, text = run("fbar", "--a", str(a), "--b", str(b), "--banded", "--band-width", "2")
    assert code == 0 and "approximate" in text
    code, _ = run("code", "--N", "10", "--text", "--out", str(tmp_path / "t.txt"))
    assert code == 0
    assert run("fbar", "--a", str(a), "--b", str(tmp_path / "t.txt"))[0] == 2
    assert run("fbar", "--a", str(tmp_path / "missing"), "--b", str(b))[0] == 2


def test_experiment(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("N_list = 16\npair_count = 1\nm = 2\n")
    code, text = run("experiment", "standardness-probe", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0 and len(text.splitlines()) == 3
    cfg.write_text("dk_cases = 1\ndichotomy_pairs = 1\nsandwich_points = 1\nsandwich_T = 300\n"
                   "nbound_points = 1\nnbound_times = 100\nshadow_exps = 10\n")
    code, text = run("experiment", "verify", "--config", str(cfg), "--out", str(tmp_path / "v"))
    assert code == 0 and "dichotomy" in text
    cfg.write_text("gamma1 = -0.5\ngamma2 = -0.5\n")
    assert run("experiment", "standardness-probe", "--config", str(cfg), "--out", str(tmp_path / "x"))[0] == 2
