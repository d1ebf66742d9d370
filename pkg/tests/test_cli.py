from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import pytest

from mringlab.cli import (
    EXIT_MISMATCH,
    EXIT_OK,
    EXIT_RESOURCE,
    EXIT_USAGE,
    CacheManager,
    atomic_write,
    cli_dispatch,
    parse_args,
)
from mringlab.errors import ResourceLimitError
from mringlab.graphs import GraphSpec


def run(argv, capsys):
    code = cli_dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_enumerate_to_stdout(capsys):
    code, out, _ = run(["enumerate", "--q", 3], capsys)
    assert code == EXIT_OK
    data = json.loads(out)
    assert data == {
        "q": 3,
        "modulus": [],
        "m2": 81,
        "sl2": 24,
        "gl2": 48,
        "d0": 33,
        "slices": {"0": 33, "1": 24, "2": 24},
    }


def test_exit_codes(capsys):
    assert run(["spectrum", "--q", 99991], capsys)[0] == EXIT_RESOURCE
    assert run(["spectrum", "--bogus"], capsys)[0] == EXIT_USAGE
    assert run(["spectrum", "--q", 6], capsys)[0] == EXIT_USAGE
    assert run(["verify", "--target", "nope", "--q", 2], capsys)[0] == EXIT_USAGE
    assert run([], capsys)[0] == EXIT_USAGE

    code, out, _ = run(["verify", "--target", "g1-mmt", "--q", 2, "--no-timing"], capsys)
    assert code == EXIT_OK
    assert json.loads(out)["verdict"] == "exact"

    # the G31 case summary disagrees with brute force; the mismatch is reported, not hidden
    code, out, _ = run(["verify", "--target", "cases:sl2-singular-diff", "--q", 3], capsys)
    assert code == EXIT_MISMATCH
    data = json.loads(out)
    assert data["verdict"] == "mismatch" and data["mismatch_count"] > 0


def test_spectrum_json_shape(tmp_path, capsys):
    out = tmp_path / "spec.json"
    code, _, _ = run(["spectrum", "--q", 3, "--family", "unit-cayley", "--out", out, "--no-timing"], capsys)
    assert code == EXIT_OK
    data = json.loads(out.read_text())
    for key in ("family", "q", "n", "d", "lambda2", "method", "tolerance", "runtime_ms", "cached"):
        assert key in data
    assert data["n"] == 81 and data["d"] == 24
    assert data["lambda2"] == pytest.approx(6.0, abs=1e-8)
    assert data["runtime_ms"] is None
    manifest = json.loads((tmp_path / "spec.json.manifest.json").read_text())
    assert manifest["command"] == "spectrum" and manifest["outputs"] == [str(out)]
    assert manifest["wall_clock_ms"] is None


def test_spectrum_cache_roundtrip_and_corruption(tmp_path, capsys, caplog):
    cache = tmp_path / "cache"
    argv = ["spectrum", "--q", 3, "--family", "sl2-singular-diff", "--cache-dir", cache]
    code, out, _ = run(argv, capsys)
    assert code == EXIT_OK and json.loads(out)["cached"] is False
    with caplog.at_level(logging.INFO, logger="mringlab"):
        code, out, _ = run(argv, capsys)
    first = json.loads(out)
    assert first["cached"] is True and first["lambda2"] == pytest.approx(4.0, abs=1e-8)
    assert any("spectrum cache hit" in r.getMessage() for r in caplog.records)

    for f in cache.glob("spectrum_*.npz"):
        f.write_bytes(f.read_bytes()[:20])
    code, out, _ = run(argv, capsys)
    again = json.loads(out)
    assert code == EXIT_OK and again["cached"] is False
    assert again["lambda2"] == pytest.approx(4.0, abs=1e-8)


def test_group_table_cache_hit(tmp_path, capsys, caplog):
    cache = tmp_path / "c"
    assert run(["enumerate", "--q", 5, "--cache-dir", cache], capsys)[0] == EXIT_OK
    assert list(cache.glob("groups_q5_*"))
    with caplog.at_level(logging.INFO, logger="mringlab"):
        code, out, _ = run(["enumerate", "--q", 5, "--cache-dir", cache], capsys)
    assert code == EXIT_OK and json.loads(out)["sl2"] == 120
    assert any("cache hit" in r.getMessage() for r in caplog.records)

    # a truncated table file is ignored and rebuilt
    for f in cache.glob("groups_q5_*"):
        f.write_bytes(f.read_bytes()[:10])
    code, out, _ = run(["enumerate", "--q", 5, "--cache-dir", cache], capsys)
    assert code == EXIT_OK and json.loads(out)["sl2"] == 120


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0, reason="root ignores permissions")
def test_unwritable_cache_dir_permissions(tmp_path, capsys):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    try:
        assert run(["enumerate", "--q", 3, "--cache-dir", locked / "x"], capsys)[0] == EXIT_RESOURCE
    finally:
        locked.chmod(0o700)


def test_unwritable_cache_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    with pytest.raises(ResourceLimitError):
        CacheManager(blocker / "cache")
    assert run(["enumerate", "--q", 3, "--cache-dir", blocker / "cache"], capsys)[0] == EXIT_RESOURCE
    assert run(["enumerate", "--q", 3, "--out", blocker / "out.json"], capsys)[0] == EXIT_RESOURCE


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nq = 5\nseed=7\nno-timing = yes\n")
    args = parse_args(["experiment", "--config", str(cfg)])
    assert (args.q, args.seed, args.no_timing) == (5, 7, True)
    args = parse_args(["experiment", "--config", str(cfg), "--q", "3"])
    assert (args.q, args.seed) == (3, 7)
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    with pytest.raises(SystemExit):
        parse_args(["experiment", "--config", str(bad)])


def test_experiment_and_sharpness(capsys):
    code, out, _ = run(["experiment", "--q", 3, "--poly", "sum", "--sizes", "10,20", "--trials", 3], capsys)
    data = json.loads(out)
    assert code == EXIT_OK and len(data["images"]) == 3 and data["theorem"] == "sum"
    code, out, _ = run(["experiment", "--q", 3, "--sharpness"], capsys)
    data = json.loads(out)
    assert data["equals_singular"] and data["image_size"] == 33


def test_sweep_outputs_and_determinism(tmp_path, capsys):
    argv = ["sweep", "--q", 3, "--poly", "product", "--exponents", "1.5,2.5", "--trials", 3, "--no-timing"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(argv + ["--out", a], capsys)[0] == EXIT_OK
    assert run(argv + ["--out", b, "--threads", 3], capsys)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("q,poly,domains,sizes,image")
    assert len(lines) == 1 + 2 * 3


def test_report_collects_manifests(tmp_path, capsys):
    run(["verify", "--target", "g2-mmt", "--q", 2, "--out", tmp_path / "v.json"], capsys)
    run(["enumerate", "--q", 2, "--out", tmp_path / "sub" / "e.json"], capsys)
    code, out, _ = run(["report", tmp_path], capsys)
    data = json.loads(out)
    assert code == EXIT_OK and data["count"] == 2
    verdicts = {r["command"]: r["verdicts"] for r in data["runs"]}
    assert verdicts["verify"] == ["exact"] and verdicts["enumerate"] == []


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "x" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert [f.name for f in p.parent.iterdir()] == ["f.txt"]


def test_spectrum_cache_key_depends_on_spec(tmp_path):
    c = CacheManager(tmp_path)
    assert c.spectrum_path(GraphSpec("sl2-singular-diff", 3), "auto") != c.spectrum_path(GraphSpec("sl2-invertible-diff", 3), "auto")
    assert c.load_spectrum(GraphSpec("sl2-singular-diff", 3), "auto") is None
    c.store_spectrum(GraphSpec("sl2-singular-diff", 3), "auto", 4.0, 1e-9)
    assert c.load_spectrum(GraphSpec("sl2-singular-diff", 3), "auto") == {"lambda2": 4.0, "tolerance": 1e-9}
    assert Path(c.spectrum_path(GraphSpec("sl2-singular-diff", 3), "auto")).exists()
