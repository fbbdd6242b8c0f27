import json
import subprocess
import sys

import pytest

from iristwin.cli import (
    Command,
    RunConfig,
    main,
    render_report,
    report_cells,
    run,
)
from iristwin.dataset import save_image
from iristwin.errors import EmptyReport
from iristwin.manifest import DatasetManifest, write_manifest
from iristwin.verifier import EvalReport

from conftest import make_face_image

# tiny toy-demo settings keep CLI runs quick
TOY_OVERRIDES = [
    "toy.n_real=12",
    "toy.n_gan=12",
    "toy.n_val=6",
    "toy.n_test=8",
    "toy.size=32",
    "loss.epochs=2",
    "loss.batch_size=8",
]

RESNET_ROW = EvalReport(
    model_name="ResNet50",
    train_params=87877632,
    train_loss=0.1273,
    train_accuracy=0.8684,
    compute_minutes=69.04,
    test_loss=0.1201,
    test_accuracy=0.8799,
    mean_similarity=94.9585,
)


class TestRenderReport:
    def test_resnet_row_cells_verbatim(self):
        assert report_cells(RESNET_ROW) == [
            "ResNet50",
            "87,877,632",
            "0.1273",
            "0.8684",
            "69.04",
            "0.1201",
            "0.8799",
            "94.9585",
        ]

    def test_variable_precision_minutes(self):
        row = EvalReport("Xception", 67308032, 0.0889, 0.9003, 24.196, 0.0762, 0.9238, 85.556)
        cells = report_cells(row)
        assert cells[4] == "24.196"
        assert cells[7] == "85.5560"
        row2 = EvalReport("MobileNet-v2", 42142208, 0.1815, 0.8058, 9.9126, 0.1726, 0.8274, 93.8425)
        assert report_cells(row2)[4] == "9.9126"

    def test_xception_row_cells_verbatim(self):
        row = EvalReport("Xception", 67308032, 0.0782, 0.9266, 24.67, 0.0678, 0.9322, 56.7691)
        assert report_cells(row) == [
            "Xception",
            "67,308,032",
            "0.0782",
            "0.9266",
            "24.67",
            "0.0678",
            "0.9322",
            "56.7691",
        ]

    def test_single_row_structure(self):
        text = render_report([RESNET_ROW])
        lines = text.strip().splitlines()
        assert len(lines) == 3  # header, rule, one data row
        assert "Similarity (Avrg)" in lines[0]

    def test_rows_render_in_input_order(self):
        other = EvalReport("Vgg16", 16976384, 0.1656, 0.845, 10.92, 0.1794, 0.8206, 90.4041)
        text = render_report([RESNET_ROW, other])
        lines = text.strip().splitlines()
        assert lines[2].startswith("ResNet50")
        assert lines[3].startswith("Vgg16")
        text2 = render_report([other, RESNET_ROW])
        assert text2.strip().splitlines()[2].startswith("Vgg16")

    def test_empty_rows_rejected(self):
        with pytest.raises(EmptyReport):
            render_report([])


class TestToyDemo:
    def test_end_to_end_smoke(self, tmp_path, capsys):
        cfg = RunConfig(
            command=Command.TOY_DEMO,
            overrides=list(TOY_OVERRIDES),
            output_dir=str(tmp_path / "run"),
            seed=3,
        )
        assert run(cfg) == 0
        out = tmp_path / "run"
        assert (out / "dataset" / "manifest").is_file()
        assert (out / "checkpoint.json").is_file()
        assert (out / "report.txt").is_file()
        assert (out / "run_metadata.json").is_file()
        meta = json.loads((out / "run_metadata.json").read_text())
        assert meta["status"] == "ok"
        table = capsys.readouterr().out
        assert "smallconv" in table

    def test_deterministic_runs_bit_identical(self, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            cfg = RunConfig(
                command=Command.TOY_DEMO,
                overrides=list(TOY_OVERRIDES),
                output_dir=str(tmp_path / name),
                seed=11,
                deterministic=True,
            )
            assert run(cfg) == 0
            outs.append(tmp_path / name)
        for rel in ("dataset/manifest", "checkpoint.json", "report.json", "report.txt"):
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
        crops1 = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.png"))
        crops2 = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*.png"))
        assert crops1 == crops2
        for rel in crops1:
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()


class TestExitCodes:
    def test_unknown_command_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "iristwin.cli", "frobnicate"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "usage" in proc.stderr.lower()

    def test_missing_command_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "iristwin.cli"], capture_output=True, text=True
        )
        assert proc.returncode == 2

    def test_evaluate_empty_manifest_exits_1(self, tmp_path, capsys):
        dataset = tmp_path / "dataset"
        dataset.mkdir()
        write_manifest(DatasetManifest(entries=()), dataset)
        cfg = RunConfig(
            command=Command.EVALUATE,
            overrides=[
                f'dataset.root="{dataset}"',
                'evaluate.checkpoint="missing.json"',
            ],
            output_dir=str(tmp_path / "out"),
        )
        assert run(cfg) == 1
        meta = json.loads((tmp_path / "out" / "run_metadata.json").read_text())
        assert meta["status"] == "domain-error"
        assert "EmptyCorpus" in meta["error"]

    def test_config_error_exits_2_and_writes_metadata(self, tmp_path):
        cfg = RunConfig(
            command=Command.TRAIN,
            output_dir=str(tmp_path / "out"),
        )
        assert run(cfg) == 2  # no dataset.root configured
        meta = json.loads((tmp_path / "out" / "run_metadata.json").read_text())
        assert meta["status"] == "config-error"

    def test_bad_override_exits_2(self, tmp_path):
        cfg = RunConfig(
            command=Command.TOY_DEMO,
            overrides=["notkeyvalue"],
            output_dir=str(tmp_path / "out"),
        )
        assert run(cfg) == 2


class TestBuildAndFriends:
    def _mini_corpus(self, tmp_path, n=3):
        corpus = tmp_path / "faces"
        corpus.mkdir()
        for i in range(n):
            save_image(make_face_image(320, noise=0.01, seed=50 + i), corpus / f"f{i}.png")
        return corpus

    def _corpus_conf(self, corpus, tmp_path):
        conf = {
            "corpus": {
                "root": str(corpus),
                "groups": [{"source": "real", "generator": "none", "pattern": "*.png"}],
                "split": [0.5, 0.25, 0.25],
                "split_seed": 3,
            },
            "extraction": {"r_min": 12, "r_max": 30, "crop_size": 64},
        }
        path = tmp_path / "conf.json"
        path.write_text(json.dumps(conf))
        return path

    def test_build_writes_dataset(self, tmp_path, capsys):
        corpus = self._mini_corpus(tmp_path)
        conf = self._corpus_conf(corpus, tmp_path)
        cfg = RunConfig(
            command=Command.BUILD, config_path=str(conf), output_dir=str(tmp_path / "out")
        )
        assert run(cfg) == 0
        assert (tmp_path / "out" / "dataset" / "manifest").is_file()

    def test_extract_then_reconstruct(self, tmp_path):
        corpus = self._mini_corpus(tmp_path, n=2)
        conf = self._corpus_conf(corpus, tmp_path)
        out1 = tmp_path / "stage1"
        assert run(
            RunConfig(command=Command.EXTRACT, config_path=str(conf), output_dir=str(out1))
        ) == 0
        doc = json.loads((out1 / "extraction.json").read_text())
        assert len(doc["records"]) == 4
        out2 = tmp_path / "stage2"
        code = run(
            RunConfig(
                command=Command.RECONSTRUCT,
                config_path=str(conf),
                overrides=[f'reconstruct.input="{out1}"'],
                output_dir=str(out2),
            )
        )
        assert code == 0
        stats = json.loads((out2 / "reconstruction.json").read_text())
        assert len(stats["stats"]) == 4

    def test_report_command(self, tmp_path, capsys):
        row_path = tmp_path / "row.json"
        row_path.write_text(json.dumps(RESNET_ROW.to_json()))
        cfg = RunConfig(
            command=Command.REPORT,
            overrides=[f'report.inputs=["{row_path}"]'],
            output_dir=str(tmp_path / "out"),
        )
        assert run(cfg) == 0
        text = (tmp_path / "out" / "report.txt").read_text()
        assert "94.9585" in text and "87,877,632" in text

    def test_main_returns_zero(self, tmp_path, capsys):
        code = main(
            ["toy-demo", "--out", str(tmp_path / "o"), "--seed", "2"]
            + [f"--set={o}" for o in TOY_OVERRIDES]
        )
        assert code == 0
