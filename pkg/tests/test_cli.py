import io
import json
import subprocess
import sys

import numpy as np
import pytest

from pwlfit import Signal, solve_constrained
from pwlfit.cli import (EXIT_BUDGET, EXIT_INPUT, EXIT_OK, EXIT_ORACLE_GUARD,
                        EXIT_PENALTY, EXIT_USAGE, IngestError, RunConfig,
                        ingest, main, run)


@pytest.fixture
def write(tmp_path):
    def _write(text, name="in.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return str(p)
    return _write


@pytest.fixture
def vfile(write):
    return write("2\n1\n0\n1\n2\n")


def run_cfg(**kw):
    buf = io.StringIO()
    code = run(RunConfig(**kw), buf)
    return code, buf.getvalue()


# ------------------------------------------------------------------ ingest


def test_ingest_discrete(write):
    sig = ingest(write("0\n1\n2\n"))
    assert sig.kind == "discrete" and sig.N == 2
    assert list(sig.values) == [0, 1, 2]


def test_ingest_continuous(write):
    sig = ingest(write("0,5\n1,3\n2,5\n"))
    assert sig.kind == "continuous"
    assert list(sig.grid) == [0, 1, 2] and list(sig.values) == [5, 3, 5]


def test_ingest_header_optional(write):
    sig = ingest(write("t,g\n0,5\n1,3\n"))
    assert sig.kind == "continuous" and sig.N == 1


def test_ingest_non_increasing_grid(write):
    with pytest.raises(IngestError, match="non-increasing grid"):
        ingest(write("1,0\n0,1\n"))


@pytest.mark.parametrize("text, msg", [
    ("0\n1\nx\n", ":3:"),
    ("0,1\n1\n", "columns"),
    ("5\n", "at least 2"),
    ("0,1,2\n1,2,3\n", "1 or 2 columns"),
    ("0\nnan\n", "non-finite"),
])
def test_ingest_errors(write, text, msg):
    with pytest.raises(IngestError, match=msg):
        ingest(write(text))


def test_ingest_kind_mismatch(write):
    with pytest.raises(IngestError):
        ingest(write("0\n1\n2\n"), kind="continuous")


def test_ingest_missing_file(tmp_path):
    with pytest.raises(IngestError):
        ingest(str(tmp_path / "nope.csv"))


# ------------------------------------------------------------------ run


def test_constrained_row(vfile):
    code, out = run_cfg(mode="constrained", input=vfile, segments=2)
    assert code == EXIT_OK
    assert out == "m,objective,indices,values\n2,0.0,0;2;4,2.0;0.0;2.0\n"


def test_emit_all_m(vfile):
    code, out = run_cfg(mode="constrained", input=vfile, segments=3, emit_all_m=True)
    rows = out.splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["1", "2", "3"]


def test_stats_format(vfile):
    code, out = run_cfg(mode="constrained", input=vfile, segments=2, stats=True)
    lines = out.splitlines()
    k = lines.index("i,max_len")
    body = lines[k + 1:-1]
    assert [ln.split(",")[0] for ln in body] == ["0", "1", "2", "3"]
    assert all(int(ln.split(",")[1]) >= 1 for ln in body)
    tag, R, key, held = lines[-1].split(",")
    assert tag == "R" and int(R) >= 1 and key == "bound_held"
    assert held in ("true", "false")


def test_regularized_json(vfile):
    code, out = run_cfg(mode="regularized", input=vfile, zeta=0.1, format="json")
    doc = json.loads(out)
    res, = doc["results"]
    assert code == EXIT_OK and doc["mode"] == "regularized"
    assert res["segments"] == 2
    assert res["objective"] == pytest.approx(0.2, abs=1e-12)


def test_oracle_column(vfile):
    code, out = run_cfg(mode="constrained", input=vfile, segments=2, oracle=True)
    head, row = out.splitlines()
    assert code == EXIT_OK and head.endswith(",oracle_objective")
    assert float(row.split(",")[-1]) == pytest.approx(0, abs=1e-12)


def test_oracle_guard(write):
    rng = np.random.default_rng(1)
    path = write("\n".join(map(repr, rng.normal(size=45).tolist())) + "\n")
    code, _ = run_cfg(mode="constrained", input=path, segments=15, oracle=True)
    assert code == EXIT_ORACLE_GUARD


# ------------------------------------------------------------------ exit codes


@pytest.mark.parametrize("kw, want", [
    (dict(mode="constrained", segments=9), EXIT_BUDGET),
    (dict(mode="constrained", segments=0), EXIT_BUDGET),
    (dict(mode="regularized", zeta=-1.0), EXIT_PENALTY),
    (dict(mode="constrained"), EXIT_USAGE),
    (dict(mode="regularized", zeta=1.0, segments=2), EXIT_USAGE),
    (dict(mode="constrained", segments=2, threads=0), EXIT_USAGE),
])
def test_exit_codes(vfile, kw, want):
    assert run_cfg(input=vfile, **kw)[0] == want


def test_bad_input_exit(write, capsys):
    assert main(["--input", write("1,0\n0,1\n"), "--segments", "1"]) == EXIT_INPUT
    assert "non-increasing grid" in capsys.readouterr().err


def test_exit_codes_distinct_and_documented(capsys):
    from pwlfit import cli
    codes = [v for k, v in vars(cli).items() if k.startswith("EXIT_")]
    assert len(set(codes)) == len(codes)
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for c in codes:
        assert f"  {c}  " in text


# ------------------------------------------------------------------ stability


def test_byte_stable_and_thread_independent(write, tmp_path):
    rng = np.random.default_rng(3)
    path = write("\n".join(map(repr, np.cumsum(rng.normal(size=80)).tolist())) + "\n")
    outs = []
    for threads in ("1", "1", "3"):
        dest = tmp_path / f"out{len(outs)}.json"
        assert main(["--input", path, "--segments", "6", "--emit-all-m",
                     "--format", "json", "--stats", "--threads", threads,
                     "--output", str(dest)]) == EXIT_OK
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert b"\r\n" not in outs[0]


def test_round_trip_rescoring(write):
    """Re-score the emitted fit with an independent dense evaluation."""
    rng = np.random.default_rng(4)
    t = np.cumsum(rng.uniform(0.2, 1.0, 30))
    g = rng.normal(size=30)
    path = write("t,g\n" + "\n".join(f"{a!r},{b!r}" for a, b in zip(t.tolist(), g.tolist())) + "\n")
    code, out = run_cfg(mode="constrained", input=path, segments=4)
    _, obj, idx, vals = out.splitlines()[1].split(",")
    idx = [int(i) for i in idx.split(";")]
    vals = [float(v) for v in vals.split(";")]
    # the residual is linear between consecutive knots, so the closed-form
    # integral of a squared linear function is exact here
    knots = np.union1d(t, t[idx])
    e = np.interp(knots, t[idx], vals) - np.interp(knots, t, g)
    h = np.diff(knots)
    rescored = np.sum(h * (e[:-1] ** 2 + e[:-1] * e[1:] + e[1:] ** 2) / 3)
    assert rescored == pytest.approx(float(obj), rel=1e-8)
    direct = solve_constrained(Signal.continuous(t, g), 4)[-1].objective
    assert float(obj) == direct


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "pwlfit.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "exit codes" in proc.stdout
