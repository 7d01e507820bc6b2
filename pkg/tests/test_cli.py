"""End-to-end tests for the command-line interface."""

import warnings

import numpy as np
import pytest

from maxent_lowrank.cli import main
from maxent_lowrank.fileio import (
    read_masks,
    read_matrix,
    read_observations,
    read_pgm,
    write_matrix,
    write_pgm,
)
from maxent_lowrank.smg import random_model, sample_smg


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(autouse=True)
def _silence_expected_runtime_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=RuntimeWarning)
        yield


@pytest.fixture()
def truth_csv(tmp_path):
    model = random_model(6, 6, 2, 1.0, 1e-4, seed=7)
    X = sample_smg(model, seed=8)
    path = tmp_path / "truth.csv"
    write_matrix(path, X)
    return path, X


class TestDesignInitial:
    @pytest.mark.parametrize(
        "method,m,n", [("flip", 7, 7), ("kk", 8, 8), ("random", 6, 5)]
    )
    def test_writes_unit_power_masks(self, tmp_path, method, m, n):
        out = tmp_path / "masks.csv"
        assert run_cli(
            "design-initial", "--m1", m, "--m2", m, "--n_ini", n,
            "--R_ini", 2, "--initMethod", method, "--out", out,
        ) == 0
        masks = read_masks(out, m)
        assert len(masks) == n
        for A in masks:
            assert np.linalg.norm(A) == pytest.approx(1.0)

    def test_auto_dispatch(self, tmp_path, capsys):
        out = tmp_path / "masks.csv"
        run_cli("design-initial", "--m1", 8, "--m2", 8, "--n_ini", 8,
                "--R_ini", 2, "--out", out)
        assert "kk" in capsys.readouterr().out

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("m1 = 7\nm2 = 7\nn_ini = 3\nR_ini = 2\ninitMethod = flip\n")
        out = tmp_path / "masks.csv"
        run_cli("design-initial", "--config", cfg, "--n_ini", 5, "--out", out)
        assert len(read_masks(out, 7)) == 5  # flag beats file


class TestPipeline:
    def test_measure_design_next_recover(self, tmp_path, truth_csv):
        truth_path, X = truth_csv
        masks_path = tmp_path / "masks.csv"
        obs_path = tmp_path / "obs.csv"
        run_cli("design-initial", "--m1", 6, "--m2", 6, "--n_ini", 12,
                "--R_ini", 2, "--initMethod", "flip", "--out", masks_path)
        run_cli("measure", "--truth", truth_path, "--masks", masks_path,
                "--eta2", "1e-6", "--seed", 3, "--out", obs_path)
        assert len(read_observations(obs_path)) == 12

        nxt_path = tmp_path / "next.csv"
        assert run_cli(
            "design-next", "--m1", 6, "--sigma2", 1.0, "--eta2", "1e-6",
            "--batchSize", 2, "--masks", masks_path, "--observations", obs_path,
            "--out", nxt_path,
        ) == 0
        designed = read_masks(nxt_path, 6)
        assert len(designed) == 2
        for A in designed:
            assert np.linalg.norm(A) == pytest.approx(1.0, abs=1e-9)

        est_path = tmp_path / "xhat.csv"
        run_cli("recover", "--m1", 6, "--eta2", "1e-6", "--maxIters", 5000,
                "--relTol", "1e-10", "--masks", masks_path,
                "--observations", obs_path, "--out", est_path,
                "--truth", truth_path)
        xhat = read_matrix(est_path)
        assert xhat.shape == (6, 6)

    def test_design_next_estimates_variance_when_unset(self, tmp_path, truth_csv, capsys):
        truth_path, _ = truth_csv
        masks_path = tmp_path / "masks.csv"
        obs_path = tmp_path / "obs.csv"
        run_cli("design-initial", "--m1", 6, "--m2", 6, "--n_ini", 10,
                "--R_ini", 2, "--initMethod", "random", "--out", masks_path)
        run_cli("measure", "--truth", truth_path, "--masks", masks_path, "--out", obs_path)
        run_cli("design-next", "--m1", 6, "--masks", masks_path,
                "--observations", obs_path, "--out", tmp_path / "next.csv")
        assert "estimated sigma2" in capsys.readouterr().out


class TestExperiment:
    def test_writes_all_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli(
            "experiment", "--m1", 6, "--m2", 6, "--R", 2, "--n_ini", 6,
            "--n_seq", 2, "--R_ini", 2, "--initMethod", "flip", "--trials", 1,
            "--seed", 4, "--maxIters", 400, "--relTol", "1e-6",
            "--evalStride", "6,8", "--out", out,
        ) == 0
        assert (out / "traces.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "config.txt").exists()
        assert (out / "summary.png").exists()
        text = (out / "traces.csv").read_text()
        assert text.startswith("method,trial,sample_size,normalized_error\n")
        assert "maxent-flip" in text and "random" in text


class TestPatchCommands:
    def test_pgm_to_matrix_and_back(self, tmp_path):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(16, 16)).astype(float)
        pgm_in = tmp_path / "in.pgm"
        write_pgm(pgm_in, img)
        mat = tmp_path / "patches.csv"
        run_cli("patch", "--image", pgm_in, "--out", mat)
        assert read_matrix(mat).shape == (64, 4)
        pgm_out = tmp_path / "out.pgm"
        run_cli("unpatch", "--matrix", mat, "--height", 16, "--width", 16,
                "--out", pgm_out)
        np.testing.assert_array_equal(read_pgm(pgm_out), img)

    def test_csv_image_input(self, tmp_path):
        img_csv = tmp_path / "img.csv"
        write_matrix(img_csv, np.arange(64.0).reshape(8, 8))
        out = tmp_path / "p.csv"
        run_cli("patch", "--image", img_csv, "--out", out)
        assert read_matrix(out).shape == (64, 1)


class TestErrors:
    def test_missing_required_key_exits_2(self, tmp_path, capsys):
        code = run_cli("design-initial", "--m2", 6, "--n_ini", 2,
                       "--out", tmp_path / "m.csv")
        assert code == 2
        assert "m1" in capsys.readouterr().err

    def test_mismatched_record_exits_2(self, tmp_path, capsys):
        masks_path = tmp_path / "masks.csv"
        obs_path = tmp_path / "obs.csv"
        run_cli("design-initial", "--m1", 6, "--m2", 6, "--n_ini", 4,
                "--R_ini", 2, "--initMethod", "random", "--out", masks_path)
        obs_path.write_text("0,1.0\n1,2.0\n")
        code = run_cli("recover", "--m1", 6, "--masks", masks_path,
                       "--observations", obs_path, "--out", tmp_path / "x.csv")
        assert code == 2
        assert "observations" in capsys.readouterr().err

    def test_unknown_config_key_in_file_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("bogus = 1\n")
        code = run_cli("design-initial", "--config", cfg, "--out", tmp_path / "m.csv")
        assert code == 2
        assert "bogus" in capsys.readouterr().err
