import json
from pathlib import Path

import pytest

from app.main import build_parser, main
from app.modules.evaluation.types import BenchmarkDataset, PredictionRecord, ScoredBox
from app.utils.file_utils import write_jsonl

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def run(tiny_config_file, tmp_path):
    """Invoke the CLI with the tiny config and an output directory under tmp_path."""

    def invoke(command, *args, output="out"):
        return main([command, "--config", tiny_config_file, "--output", str(tmp_path / output), *args])

    return invoke


@pytest.fixture
def benchmark(run, tmp_path):
    data = str(tmp_path / "benchmark")
    assert run("synth", "--data", data, output="synth") == 0
    return data


def perfect_predictions(data: str, path: Path) -> str:
    dataset = BenchmarkDataset.load(data)
    records = []
    for annotation in dataset.annotations():
        vocabulary = annotation.vocabulary()
        one_hot = [1.0 if i == annotation.positive_index else 0.0 for i in range(len(vocabulary))]
        records.append(
            PredictionRecord(
                image_id=annotation.image_id,
                annotation_id=annotation.annotation_id,
                track=annotation.track,
                vocabulary=[c.full_name for c in vocabulary],
                positive_index=annotation.positive_index,
                predictions=[ScoredBox(box=annotation.gt_box, s_coarse=one_hot, s_fine=one_hot, s_final=one_hot)],
            )
        )
    write_jsonl(str(path), records)
    return str(path)


def test_every_subcommand_is_registered():
    parser = build_parser()
    for command in ("parse", "synth", "eval", "ablate", "train", "detect"):
        args = parser.parse_args([command, "--data", "x"] if command != "parse" else [command, "--names", "x"])
        assert args.command == command
        assert callable(args.handler)


def test_unknown_subcommand_exits_with_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["fly"])
    assert excinfo.value.code == 2


def test_synth_writes_benchmark(run, tmp_path, capsys):
    data = tmp_path / "bench"
    assert run("synth", "--data", str(data)) == 0
    assert (data / "manifest.json").exists()
    assert (data / "images.jsonl").exists()
    echo = json.loads((tmp_path / "out" / "resolved_config.json").read_text())
    assert echo["command"] == "synth"
    assert echo["config"]["model"]["k"] == 6
    assert "Hard" in capsys.readouterr().out


def test_eval_of_perfect_predictions(run, benchmark, tmp_path, capsys):
    predictions = perfect_predictions(benchmark, tmp_path / "perfect.jsonl")
    capsys.readouterr()
    assert run("eval", "--data", benchmark, "--predictions", predictions) == 0
    out = capsys.readouterr().out
    assert "Average" in out
    assert out.splitlines()[-1].split()[1] == "100.0"
    results = json.loads((tmp_path / "out" / "results.json").read_text())
    assert results["average"] == pytest.approx(1.0)
    assert (tmp_path / "out" / "results.txt").read_text() == out


def test_eval_writes_plots_when_asked(run, benchmark, tmp_path):
    predictions = perfect_predictions(benchmark, tmp_path / "perfect.jsonl")
    assert run("eval", "--data", benchmark, "--predictions", predictions, "--set", "eval.plots=true") == 0
    assert (tmp_path / "out" / "pr_curves.png").exists()


def test_eval_with_oracle(run, benchmark, tmp_path):
    assert run("eval", "--data", benchmark, "--oracle") == 0
    assert json.loads((tmp_path / "out" / "results.json").read_text())["average"] > 0.9


def test_eval_needs_predictions(run, benchmark):
    assert run("eval", "--data", benchmark) == 2


def test_missing_benchmark_is_an_artifact_error(run, tmp_path):
    assert run("eval", "--data", str(tmp_path / "nowhere"), "--oracle") == 3
    assert run("detect", "--data", str(tmp_path / "nowhere")) == 3


def test_invalid_override_is_a_config_error(run, benchmark):
    assert run("detect", "--data", benchmark, "--set", "model.k=0") == 2


def test_detect_is_reproducible(run, benchmark, tmp_path):
    assert run("detect", "--data", benchmark, output="first") == 0
    assert run("detect", "--data", benchmark, "--workers", "2", output="second") == 0
    first = (tmp_path / "first" / "predictions.jsonl").read_bytes()
    second = (tmp_path / "second" / "predictions.jsonl").read_bytes()
    assert first == second
    records = [json.loads(line) for line in first.decode().splitlines()]
    assert len(records) == len(BenchmarkDataset.load(benchmark).annotations())


def test_train_then_detect(run, benchmark, tmp_path, capsys):
    assert run("train", "--data", benchmark, "--plot", output="train") == 0
    out = tmp_path / "train"
    for name in ("stage1.ckpt", "stage2.ckpt", "stage1_log.jsonl", "stage2_log.jsonl", "loss.png"):
        assert (out / name).exists()
    report = json.loads((out / "train_report.json").read_text())
    assert [r["stage"] for r in report] == [1, 2]
    assert report[1]["projection_distance"] > 0.0
    assert run("detect", "--data", benchmark, "--checkpoint", str(out / "stage2.ckpt")) == 0


def test_train_divergence_exit_code(run, benchmark):
    status = run("train", "--data", benchmark, "--set", "train.divergence_threshold=0.000000001")
    assert status == 4


def test_detect_with_foreign_checkpoint(run, benchmark, tmp_path):
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"not a checkpoint")
    assert run("detect", "--data", benchmark, "--checkpoint", str(bogus)) == 3


def test_ablate_reports_failed_variants(run, benchmark, tmp_path, capsys):
    capsys.readouterr()
    assert run("ablate", "--data", benchmark, "--variants", "full,bogus") == 0
    assert "failed:" in capsys.readouterr().out
    report = json.loads((tmp_path / "out" / "ablation.json").read_text())
    assert report["status"] == "partial"
    assert run("ablate", "--data", benchmark, "--variants", "bogus", output="all_failed") == 1
    assert run("ablate", "--data", benchmark, "--variants", " , ", output="none") == 2


def test_parse_writes_vocabulary(run, tmp_path):
    names = FIXTURES / "fgovd_class_names.txt"
    cache = tmp_path / "cache.json"
    assert run("parse", "--names", str(names), "--backend", "rules", "--cache", str(cache)) == 0
    lines = (tmp_path / "out" / "vocabulary.jsonl").read_text().splitlines()
    expected = [l for l in names.read_text().splitlines() if l.strip() and not l.startswith("#")]
    assert len(lines) == len(expected)
    report = json.loads((tmp_path / "out" / "parse_report.json").read_text())
    assert report["backend"] == "rules"
    assert cache.exists()
