import numpy as np
import pytest

from shadowharmony import read_png, write_png
from shadowharmony.cli import main
from shadowharmony.evaluation import make_initial, standard_fixture
from shadowharmony.masks import make_mask


@pytest.fixture(scope="module")
def pngs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    fx = standard_fixture(size=80, box=30)
    write_png(root / "input.png", fx.shadow_full)
    write_png(root / "initial.png", make_initial(fx.case(0.2)))
    return root


def test_identical_input_and_initial(pngs, tmp_path):
    out = tmp_path / "out.png"
    rc = main(["harmonize", "--input", str(pngs / "initial.png"), "--initial", str(pngs / "initial.png"),
               "--output", str(out)])
    assert rc == 0
    assert out.read_bytes() and np.array_equal(read_png(out).data, read_png(pngs / "initial.png").data)


def test_missing_initial_is_usage_error(pngs, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["harmonize", "--input", str(pngs / "input.png"), "--output", "x.png"])
    assert exc.value.code == 2
    assert "--initial" in capsys.readouterr().err


def test_fixture_run_keeps_outside(pngs, tmp_path):
    out = tmp_path / "out.png"
    dump = tmp_path / "dbg"
    rc = main(["harmonize", "--input", str(pngs / "input.png"), "--initial", str(pngs / "initial.png"),
               "--output", str(out), "--dump-debug", str(dump), "--seed", "2", "--threads", "1"])
    assert rc == 0 and out.exists()
    orig, initial, result = read_png(pngs / "input.png"), read_png(pngs / "initial.png"), read_png(out)
    bits = make_mask(orig, initial).bits
    assert np.array_equal(result.data[~bits], initial.data[~bits])
    assert not np.array_equal(result.data[bits], initial.data[bits])
    assert (dump / "config.txt").exists() and (dump / "nnf.bin").exists()

    # re-running with the written config reproduces the output exactly
    again = tmp_path / "again.png"
    rc = main(["harmonize", "--input", str(pngs / "input.png"), "--initial", str(pngs / "initial.png"),
               "--output", str(again), "--config", str(dump / "config.txt")])
    assert rc == 0 and again.read_bytes() == out.read_bytes()


def test_user_mask_option(pngs, tmp_path):
    from shadowharmony import CorrectionMask
    from shadowharmony.masks import write_mask

    bits = np.zeros((80, 80), bool)
    bits[30:50, 30:50] = True
    write_mask(tmp_path / "mask.png", CorrectionMask(bits))
    out = tmp_path / "out.png"
    rc = main(["harmonize", "--input", str(pngs / "input.png"), "--initial", str(pngs / "initial.png"),
               "--output", str(out), "--mask", str(tmp_path / "mask.png"), "--model", "1"])
    assert rc == 0
    assert np.array_equal(read_png(out).data[~bits], read_png(pngs / "initial.png").data[~bits])


def test_runtime_failures_exit_one(pngs, tmp_path, capsys):
    rc = main(["harmonize", "--input", str(pngs / "input.png"), "--initial", str(tmp_path / "absent.png"),
               "--output", str(tmp_path / "o.png")])
    assert rc == 1 and "absent.png" in capsys.readouterr().err

    write_png(tmp_path / "small.png", read_png(pngs / "input.png").with_data(np.zeros((10, 10, 3))))
    rc = main(["harmonize", "--input", str(pngs / "input.png"), "--initial", str(tmp_path / "small.png"),
               "--output", str(tmp_path / "o.png")])
    assert rc == 1 and "initial" in capsys.readouterr().err

    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 1\n")
    rc = main(["harmonize", "--input", str(pngs / "input.png"), "--initial", str(pngs / "initial.png"),
               "--output", str(tmp_path / "o.png"), "--config", str(cfg)])
    assert rc == 1 and "no_such_key" in capsys.readouterr().err


def test_stage_failure_is_attributed(tmp_path, capsys):
    img = np.random.default_rng(0).random((30, 30, 3))
    from shadowharmony import ImageBuf

    write_png(tmp_path / "a.png", ImageBuf(img))
    write_png(tmp_path / "b.png", ImageBuf(1.0 - img))
    rc = main(["harmonize", "--input", str(tmp_path / "a.png"), "--initial", str(tmp_path / "b.png"),
               "--output", str(tmp_path / "o.png")])
    assert rc == 1 and "synthesis:" in capsys.readouterr().err


def test_eval_noop_alpha(tmp_path):
    rc = main(["eval", "--out-dir", str(tmp_path), "--alphas", "0"])
    assert rc == 0
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert len(lines) == 2
    before, after = (float(v) for v in lines[1].split(",")[3:5])
    assert before == 0.0 and after <= before + 0.01


@pytest.mark.slow
def test_eval_default_matrix_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["eval", "--out-dir", str(a)]) == 0
    assert main(["eval", "--out-dir", str(b)]) == 0
    csv = (a / "results.csv").read_bytes()
    assert len(csv.decode().splitlines()) >= 3
    assert csv == (b / "results.csv").read_bytes()


def test_eval_rejects_bad_lists(tmp_path):
    for args in (["--models", "9"], ["--ranges", "medium"], ["--alphas", "x"]):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--out-dir", str(tmp_path), *args])
        assert exc.value.code == 2


def test_eval_unwritable_directory(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    rc = main(["eval", "--out-dir", str(blocker / "sub"), "--alphas", "0"])
    assert rc == 1
