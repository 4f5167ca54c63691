import pytest

from app.core.errors import ArtifactIOError
from app.modules.vocabulary.types import FineGrainedClass
from app.utils.file_utils import (
    atomic_write_text,
    get_file_extension,
    read_json,
    read_jsonl,
    read_lines,
    write_json,
    write_jsonl,
)
from tests.factories import FineGrainedClassFactory


def test_jsonl_round_trip(tmp_path):
    path = str(tmp_path / "nested" / "classes.jsonl")
    classes = FineGrainedClassFactory.create_batch(3)
    assert write_jsonl(path, classes) == 3
    assert read_jsonl(path, FineGrainedClass) == classes


def test_jsonl_errors(tmp_path):
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"class_id": 0}\nnot json\n')
    with pytest.raises(ArtifactIOError):
        read_jsonl(str(broken), FineGrainedClass)
    with pytest.raises(ArtifactIOError):
        read_jsonl(str(tmp_path / "missing.jsonl"), FineGrainedClass)


def test_atomic_write_leaves_no_temporary_files(tmp_path):
    path = tmp_path / "out.txt"
    atomic_write_text(str(path), "first")
    atomic_write_text(str(path), "second")
    assert path.read_text() == "second"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_json_helpers(tmp_path):
    path = str(tmp_path / "data.json")
    write_json(path, {"caption": "rote Tasse", "n": 2})
    assert read_json(path) == {"caption": "rote Tasse", "n": 2}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ArtifactIOError):
        read_json(str(tmp_path / "bad.json"))


def test_read_lines_skips_blanks_and_comments(tmp_path):
    path = tmp_path / "names.txt"
    path.write_text("# header\n red cup \n\nblue chair\n")
    assert read_lines(str(path)) == ["red cup", "blue chair"]


def test_file_extension():
    assert get_file_extension("img00001.NPY") == "npy"
    assert get_file_extension("features") == ""
