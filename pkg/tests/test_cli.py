import csv
import json
import zipfile

import numpy as np
import pytest

from teamest.cli import main
from teamest.errors import ScheduleFormatError
from teamest.model import random_world, sample_traces
from teamest.oedol import MESSAGE_COLUMNS, oedol_run_batch, oedol_schedule
from teamest.oracle import odol_schedule
from teamest.sdol import sdol_weights
from teamest.topology import random_tree
from teamest.weights_io import load_schedule, read_header, save_schedule, schedule_identity

SCALAR = """\
name: scalar
topology: {kind: line, m: 3}
model: {kind: scalar}
algorithms: [odol]
horizon: 4
trials: 20
seed: 1
"""

TREE = """\
topology: {kind: star, m: 5}
model: {p: 2, q: 1}
algorithms: [odol, oedol, {name: sdol, window: 3}]
horizon: 5
trials: 10
"""

CYCLE = """\
topology: {kind: cycle, m: 4}
model: {kind: scalar}
algorithms: [oedol]
horizon: 3
trials: 5
"""

CYCLE_ODOL = CYCLE.replace("[oedol]", "[odol]")


def _write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_simulate_scalar(tmp_path):
    cfg = _write(tmp_path, SCALAR)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    with (tmp_path / "o" / "costs.csv").open() as fh:
        rows = [r for r in csv.DictReader(fh) if r["metric"] == "J"]
    assert float(rows[0]["value"]) > 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["trials"] == 20


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml"), "--out",
                 str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_no_source_is_usage_error(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--preset", "fig6", "--trials", "0", "--out", str(tmp_path)]) == 2


def test_oedol_weights_on_cycle_fail_without_output(tmp_path, capsys):
    cfg = _write(tmp_path, CYCLE)
    out = tmp_path / "w"
    assert main(["weights", "--config", str(cfg), "--out", str(out)]) == 2
    assert "(3, 4)" in capsys.readouterr().err
    assert not out.exists()


def test_weights_then_simulate_matches_synthesis(tmp_path):
    cfg = _write(tmp_path, TREE)
    assert main(["weights", "--config", str(cfg), "--out", str(tmp_path / "w")]) == 0
    files = sorted((tmp_path / "w").glob("*.weights.zip"))
    assert [f.name for f in files] == ["star.odol.weights.zip", "star.oedol.weights.zip",
                                       "star.sdol-3.weights.zip"]
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"),
                 "--weights", *map(str, files)]) == 0
    for name in ("costs.csv", "mse.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_verify_tree_passes(tmp_path):
    cfg = _write(tmp_path, TREE)
    main(["weights", "--config", str(cfg), "--out", str(tmp_path / "w")])
    files = [str(f) for f in (tmp_path / "w").glob("*.zip")]
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "v"),
                 "--weights", *files]) == 0
    report = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert report["passed"]
    names = {c["name"] for c in report["checks"]}
    assert {"oracle_equivalence", "span_sufficiency", "oedol_equivalence",
            "sdol_windowed_equivalence[3]", "schedule_file"} <= names


def test_verify_cycle_reports_expected_counterexample(tmp_path, capsys):
    cfg = _write(tmp_path, CYCLE_ODOL)
    assert main(["verify", "--config", str(cfg), "--horizon", "3"]) == 0
    out = capsys.readouterr()
    report = json.loads(out.out)
    spans = [c for c in report["checks"] if c["name"] == "span_sufficiency"]
    assert spans and spans[0]["status"] == "expected-fail-achievability"


def test_corrupted_schedule_is_usage_error(tmp_path):
    cfg = _write(tmp_path, TREE)
    main(["weights", "--config", str(cfg), "--out", str(tmp_path / "w")])
    path = tmp_path / "w" / "star.odol.weights.zip"
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--weights", str(path)]) == 2


def test_outputs_are_idempotent(tmp_path):
    cfg = _write(tmp_path, SCALAR)
    for d in ("a", "b"):
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d), "--threads", "2"])
    for name in ("costs.csv", "mse.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_preset_with_trial_override(tmp_path):
    assert main(["figures", "--preset", "fig6", "--trials", "3", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "fig6" / "summary.json").read_text())
    assert summary["trials"] == 3 and summary["T"] == 20
    assert len(summary["curves"]) == 4


# ---------------------------------------------------------------- schedule files


def _schedules():
    model = random_world(2, 1, 5, [1, 0.5, 2, 1, 1.5], 0)
    tree = random_tree(5, 1)
    return [odol_schedule(tree, model, 4), oedol_schedule(tree, model, 4),
            sdol_weights(tree, model, 5)]


@pytest.mark.parametrize("idx", range(3))
def test_schedule_round_trip_is_exact(tmp_path, idx):
    sched = _schedules()[idx]
    path = tmp_path / "s.zip"
    save_schedule(sched, path)
    back = load_schedule(path)
    assert schedule_identity(back) == schedule_identity(sched)
    save_schedule(back, tmp_path / "t.zip")
    assert path.read_bytes() == (tmp_path / "t.zip").read_bytes()
    assert read_header(path)["m"] == 5


def test_schedule_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.zip"
    path.write_bytes(b"not a zip")
    with pytest.raises(ScheduleFormatError):
        load_schedule(path)
    save_schedule(_schedules()[0], path)
    with zipfile.ZipFile(path) as zf:
        entries = {n: zf.read(n) for n in zf.namelist()}
    header = json.loads(entries["header.json"])
    header["p"] = 3
    entries["header.json"] = json.dumps(header).encode()
    with zipfile.ZipFile(path, "w") as zf:
        for n, b in entries.items():
            zf.writestr(n, b)
    with pytest.raises(ScheduleFormatError):
        load_schedule(path)


def test_loaded_schedule_reproduces_estimates(tmp_path):
    sched = _schedules()[1]
    save_schedule(sched, tmp_path / "s.zip")
    back = load_schedule(tmp_path / "s.zip")
    _, y = sample_traces(sched.model, 4, 0, range(5))
    assert np.array_equal(oedol_run_batch(sched, y)[0], oedol_run_batch(back, y)[0])


def test_message_log(tmp_path):
    cfg = _write(tmp_path, TREE)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--message-log", "2"]) == 0
    with (tmp_path / "o" / "star.oedol.messages.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == MESSAGE_COLUMNS
    # 2 trials x T=5 x m=5 agents x p=2 components
    assert len(rows) == 1 + 2 * 5 * 5 * 2
    assert {r[0] for r in rows[1:]} == {"0", "1"}
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--message-log", "-1"]) == 2
