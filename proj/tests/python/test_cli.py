import csv
import os
import shutil
import subprocess
from fractions import Fraction
from pathlib import Path

import pytest

CLI = os.environ.get("ONEBEV_CLI", "build/onebev")
DATA = Path(os.environ.get("ONEBEV_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))
PAPER_RIG = DATA / "rigs" / "paper_rig.json"
SMALL_GRID = ["--width", "960", "--height", "60"]


def run(*args, check=None):
    proc = subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, timeout=600)
    if check is not None:
        assert proc.returncode == check, proc.stdout + proc.stderr
    return proc


def effective_line(stdout):
    lines = [l for l in stdout.splitlines() if l.startswith("effective config: ")]
    assert len(lines) == 1, stdout
    return lines[0]


def test_help_and_unknown_flag():
    assert run("--help").returncode == 0
    assert run("remap-build", "--bogus").returncode == 1


def test_remap_build_prints_config_and_is_job_independent(tmp_path):
    one = run("remap-build", "--rig", PAPER_RIG, "--out", tmp_path / "a.obrm", *SMALL_GRID, "--jobs", "1", check=0)
    run("remap-build", "--rig", PAPER_RIG, "--out", tmp_path / "b.obrm", *SMALL_GRID, "--jobs", "8", check=0)
    line = effective_line(one.stdout)
    for token in ["remap-build", "--width=960", "--height=60", "--vfov-deg=50", "--overlap=nearest", "--jobs=1"]:
        assert token in line
    assert "invalid entries 0" in one.stdout
    a = (tmp_path / "a.obrm").read_bytes()
    assert a == (tmp_path / "b.obrm").read_bytes()
    assert a[:4] == b"OBRM"
    assert len(a) == 16 + 60 * 960 * 10


def test_flags_file_sets_defaults_and_command_line_wins(tmp_path):
    flags = tmp_path / "flags.toml"
    flags.write_text("[remap-build]\nwidth = 480\nheight = 30\n")
    out = run("--flags-file", flags, "remap-build", "--rig", PAPER_RIG, "--out", tmp_path / "t.obrm",
              "--height", "20", check=0)
    line = effective_line(out.stdout)
    assert "--width=480" in line and "--height=20" in line
    assert "remap table 20x480" in out.stdout


def test_exit_codes(tmp_path):
    assert run("remap-build", "--rig", tmp_path / "none.json", "--out", tmp_path / "x.obrm").returncode == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"cameras": [{"name": "a"}]}')
    assert run("remap-build", "--rig", bad, "--out", tmp_path / "x.obrm").returncode == 1
    assert run("remap-build", "--rig", PAPER_RIG, "--out", tmp_path / "x.obrm", "--overlap", "best").returncode == 1
    assert run("remap-build", "--rig", PAPER_RIG, "--out", tmp_path / "x.obrm", "--width", "0").returncode == 1
    corrupt = tmp_path / "corrupt.obrm"
    corrupt.write_bytes(b"OBRX" + bytes(12))
    proc = run("stitch", "--remap", corrupt, "--images", tmp_path, "--out", tmp_path / "p.png")
    assert proc.returncode == 2
    assert run("stitch", "--images", tmp_path, "--out", tmp_path / "p.png").returncode == 1


@pytest.fixture(scope="module")
def rendered(tmp_path_factory):
    out = tmp_path_factory.mktemp("views")
    run("render-synthetic", "--rig", PAPER_RIG, "--out", out, "--panorama", out / "truth.png", *SMALL_GRID, check=0)
    return out


def test_stitch_matches_across_jobs_and_remap_path(rendered, tmp_path):
    run("stitch", "--rig", PAPER_RIG, "--images", rendered, "--out", tmp_path / "j1.png", *SMALL_GRID,
        "--jobs", "1", check=0)
    run("stitch", "--rig", PAPER_RIG, "--images", rendered, "--out", tmp_path / "j8.png", *SMALL_GRID,
        "--jobs", "8", check=0)
    assert (tmp_path / "j1.png").read_bytes() == (tmp_path / "j8.png").read_bytes()

    import json
    by_index = tmp_path / "by_index"
    by_index.mkdir()
    for cam in json.loads(PAPER_RIG.read_text())["cameras"]:
        shutil.copy(rendered / f"{cam['name']}.png", by_index / f"{cam['order_index']}.png")
    run("remap-build", "--rig", PAPER_RIG, "--out", tmp_path / "t.obrm", *SMALL_GRID, check=0)
    run("stitch", "--remap", tmp_path / "t.obrm", "--images", by_index, "--out", tmp_path / "r.png", check=0)
    assert (tmp_path / "r.png").read_bytes() == (tmp_path / "j1.png").read_bytes()


def test_stitch_missing_image_names_camera(rendered, tmp_path):
    partial = tmp_path / "partial"
    shutil.copytree(rendered, partial)
    (partial / "CAM_FRONT_LEFT.png").unlink()
    proc = run("stitch", "--rig", PAPER_RIG, "--images", partial, "--out", tmp_path / "p.png", *SMALL_GRID)
    assert proc.returncode == 2
    assert "CAM_FRONT_LEFT" in proc.stderr


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_stats_csv(tmp_path):
    out = tmp_path / "stats.csv"
    proc = run("stats", "--labels", DATA / "labels" / "frames", "--classes", DATA / "labels" / "classes.json",
               "--out", out, check=0)
    assert "--min-pixels=2" in effective_line(proc.stdout)
    rows = read_csv(out)
    assert rows[0] == ["class", "pixel_ratio", "presence_ratio"]
    got = {r[0]: (float(r[1]), float(r[2])) for r in rows[1:]}
    assert got["drivable_area"] == (float(Fraction(45, 61)), 1.0)
    assert got["ped_crossing"] == (float(Fraction(5, 61)), 0.25)
    assert got["walkway"] == (float(Fraction(3, 61)), 0.25)
    assert got["carpark"] == (float(Fraction(7, 61)), 0.5)
    assert got["lane_divider"] == (float(Fraction(1, 61)), 0.0)

    merged = tmp_path / "merged.csv"
    run("stats", "--labels", DATA / "labels" / "frames", "--classes", DATA / "labels" / "classes.json",
        "--out", merged, "--merge", "--jobs", "3", check=0)
    got = {r[0]: float(r[1]) for r in read_csv(merged)[1:]}
    assert got["walkway"] == float(Fraction(4, 61))
    assert "lane_divider" not in got


def test_eval_identical_is_perfect(tmp_path):
    out = tmp_path / "iou.csv"
    frames = DATA / "labels" / "frames"
    run("eval", "--pred", frames, "--gt", frames, "--classes", DATA / "labels" / "classes.json", "--out", out, check=0)
    rows = read_csv(out)
    assert rows[0] == ["class", "iou"]
    assert rows[-1] == ["mIoU", "1"]
    missing = tmp_path / "empty"
    missing.mkdir()
    shutil.copy(frames / "frame_000.png", missing / "frame_000.png")
    proc = run("eval", "--pred", missing, "--gt", frames, "--classes", DATA / "labels" / "classes.json")
    assert proc.returncode == 2


def test_gradcheck_passes():
    proc = run("gradcheck", "--seed", "3", check=0)
    assert "FAIL" not in proc.stdout
    assert proc.stdout.count("PASS") > 40


def test_train_then_forward(tmp_path):
    proc = run("train-toy", "--steps", "30", "--samples", "2", "--warmup", "5", "--log-every", "10",
               "--out-dir", tmp_path, check=0)
    assert "--steps=30" in effective_line(proc.stdout)
    rows = read_csv(tmp_path / "losses.csv")
    assert rows[0] == ["step", "lr", "loss"] and len(rows) == 31
    again = tmp_path / "again"
    run("train-toy", "--steps", "30", "--samples", "2", "--warmup", "5", "--out-dir", again, check=0)
    assert (again / "losses.csv").read_bytes() == (tmp_path / "losses.csv").read_bytes()

    ckpt = [p for p in tmp_path.iterdir() if p.suffix == ".json"]
    assert len(ckpt) == 1
    stem = ckpt[0].with_suffix("")
    fwd = run("forward", "--checkpoint", stem, "--out", tmp_path / "logits.bin", check=0)
    assert "logits [16, 16, 3]" in fwd.stdout
    assert (tmp_path / "logits.bin").stat().st_size == 4 + 3 * 4 + 16 * 16 * 3 * 8
