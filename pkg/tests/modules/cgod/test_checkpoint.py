import numpy as np
import pytest
import torch

from app.core.errors import ArtifactIOError, ConfigError
from app.modules.cgod.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from app.modules.detection.service import GuidedPipeline


def perturbed(pipeline: GuidedPipeline) -> GuidedPipeline:
    with torch.no_grad():
        for param in pipeline.head.parameters():
            param.add_(0.25)
    return pipeline


def test_round_trip_restores_float32_values(tmp_path, tiny_config, tiny_encoder):
    path = str(tmp_path / "model.ckpt")
    source = perturbed(GuidedPipeline(tiny_config, tiny_encoder))
    save_checkpoint(path, source.modules(), {"seed": 3})

    target = GuidedPipeline(tiny_config.model_copy(update={"model": tiny_config.model.model_copy(update={"init_seed": 9})}), tiny_encoder)
    echo = load_checkpoint(path, target.modules())
    assert echo == {"seed": 3}
    for (name, a), (_, b) in zip(source.detector.named_parameters(), target.detector.named_parameters()):
        expected = a.detach().numpy().astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(b.detach().numpy(), expected, err_msg=name)
    assert target.head.distance_from_identity() > 0.0


def test_header_lists_every_array(tmp_path, tiny_config, tiny_encoder):
    path = str(tmp_path / "model.ckpt")
    pipeline = GuidedPipeline(tiny_config, tiny_encoder)
    pipeline.save(path)
    header, arrays = read_checkpoint(path)
    assert header["format"] == "guided-checkpoint"
    assert "projection.linear.weight" in arrays
    assert len(header["arrays"]) == len(list(pipeline.detector.parameters())) + 2


def test_missing_or_foreign_files_are_io_errors(tmp_path):
    with pytest.raises(ArtifactIOError):
        read_checkpoint(str(tmp_path / "missing.ckpt"))
    foreign = tmp_path / "foreign.ckpt"
    foreign.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ArtifactIOError):
        read_checkpoint(str(foreign))


def test_truncated_checkpoint_is_an_io_error(tmp_path, tiny_config, tiny_encoder):
    path = tmp_path / "model.ckpt"
    GuidedPipeline(tiny_config, tiny_encoder).save(str(path))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ArtifactIOError):
        read_checkpoint(str(path))


def test_checkpoint_of_another_architecture_is_a_config_error(tmp_path, tiny_config, tiny_encoder):
    path = str(tmp_path / "model.ckpt")
    GuidedPipeline(tiny_config, tiny_encoder).save(path)
    other = tiny_config.model_copy(update={"model": tiny_config.model.model_copy(update={"aef_mode": "concatenation"})})
    with pytest.raises(ConfigError):
        GuidedPipeline(other, tiny_encoder).load(path)
