import json

import pytest

from dadetect.cli import main
from dadetect.data.manifest import load_manifest

@pytest.fixture(scope="module")
def cli_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("clidata")
    code = main(
        [
            "gen-data",
            "--scenario",
            "clean2fog",
            "--out",
            str(out),
            "--seed",
            "1",
            "--n-train",
            "4",
            "--n-val",
            "2",
        ]
    )
    assert code == 0
    return out


class TestGenData:
    def test_manifests_exist(self, cli_data):
        for name in ("source_train", "source_val", "target_train", "target_val"):
            manifest = load_manifest(cli_data / f"{name}.json")
            assert len(manifest) in (2, 4)

    def test_unknown_scenario_fails(self, tmp_path):
        with pytest.raises(KeyError):
            main(["gen-data", "--scenario", "clean2mars", "--out", str(tmp_path)])


class TestTrainAndInferCli:
    def test_train_det_infer_eval(self, cli_data, tmp_path, capsys):
        det_dir = tmp_path / "det"
        code = main(
            [
                "train-det",
                "--data",
                str(cli_data),
                "--out",
                str(det_dir),
                "--epochs",
                "1",
                "--seed",
                "0",
                "--set",
                "detector.proposals_per_image=16",
                "--set",
                "detector.pre_nms_top=64",
                "--set",
                "detector.rpn_batch=64",
            ]
        )
        assert code == 0
        assert (det_dir / "detector.pt").is_file()

        dets_path = tmp_path / "dets.jsonl"
        code = main(
            [
                "infer",
                "--ckpt",
                str(det_dir / "detector.pt"),
                "--in",
                str(cli_data / "source_val.json"),
                "--out",
                str(dets_path),
                "--short-side",
                "64",
            ]
        )
        assert code == 0
        lines = [json.loads(l) for l in dets_path.read_text().splitlines()]
        assert len(lines) == 2
        assert {"image_id", "detections"} <= set(lines[0])

        eval_dir = tmp_path / "eval"
        code = main(
            [
                "eval",
                "--dets",
                str(dets_path),
                "--manifest",
                str(cli_data / "source_val.json"),
                "--iou",
                "0.5",
                "--ap-rule",
                "allpoints",
                "--out",
                str(eval_dir),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "mAP@0.5" in out
        assert (eval_dir / "eval_report.json").is_file()

    def test_train_pda_and_translate(self, cli_data, tmp_path):
        pda_dir = tmp_path / "pda"
        code = main(
            [
                "train-pda",
                "--data",
                str(cli_data),
                "--out",
                str(pda_dir),
                "--epochs",
                "1",
                "--seed",
                "0",
                "--set",
                "gen_base=8",
                "--set",
                "gen_depth=3",
                "--set",
                "disc_base=8",
                "--set",
                "pda_decay_start=0",
            ]
        )
        assert code == 0
        ckpt = pda_dir / "translation.pt"
        assert ckpt.is_file()

        grid_dir = tmp_path / "grids"
        code = main(
            [
                "translate",
                "--ckpt",
                str(ckpt),
                "--direction",
                "s2t",
                "--in",
                str(cli_data / "source_val.json"),
                "--out",
                str(grid_dir),
            ]
        )
        assert code == 0
        triplets = sorted(grid_dir.glob("*_triplet.png"))
        assert len(triplets) == 2


class TestEvalCliErrors:
    def test_missing_dets_file(self, cli_data, tmp_path):
        with pytest.raises(FileNotFoundError):
            main(
                [
                    "eval",
                    "--dets",
                    str(tmp_path / "none.jsonl"),
                    "--manifest",
                    str(cli_data / "source_val.json"),
                ]
            )
