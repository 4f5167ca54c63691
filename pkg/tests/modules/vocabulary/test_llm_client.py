import httpx
import pytest

from app.core.config import LLMConfig
from app.core.errors import BackendTransportError, ConfigError, TranscriptMissError
from app.modules.vocabulary.llm_client import (
    HttpLLMClient,
    RecordingLLMClient,
    ReplayLLMClient,
    get_llm_client,
)
from app.modules.vocabulary.prompts import attribute_prompt, subject_prompt
from app.modules.vocabulary.service import LLMParser, VocabularyService, parse_structured_response
from app.modules.vocabulary.types import ParseStatus
from app.utils.transcripts import TranscriptStore


class ScriptedClient:
    def __init__(self, *responses):
        self.responses = list(responses)
        self.prompts = []

    async def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.responses.pop(0)


def chat_body(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def test_prompts_embed_the_name():
    assert subject_prompt("red cup").rstrip().endswith("Name: red cup")
    assert attribute_prompt("cup").rstrip().endswith("Category: cup")


def test_parse_structured_response():
    assert parse_structured_response("subject: lamp\nattributes: dark brown, wooden") == (
        "lamp",
        ["dark brown", "wooden"],
    )
    assert parse_structured_response("subject: cup\nattributes: none") == ("cup", [])
    assert parse_structured_response("I think it is a lamp") is None


@pytest.mark.asyncio
async def test_http_client_posts_chat_completion():
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen.append(request)
        return httpx.Response(200, json=chat_body("subject: lamp\nattributes: wooden"))

    client = HttpLLMClient("http://llm.test/v1", "test-model", api_key="k", transport=httpx.MockTransport(handler))
    text = await client.complete("prompt")
    assert text == "subject: lamp\nattributes: wooden"
    assert seen[0].url.path == "/v1/chat/completions"
    assert seen[0].headers["Authorization"] == "Bearer k"


@pytest.mark.asyncio
async def test_http_client_retries_then_raises_transport_error():
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(503)

    client = HttpLLMClient("http://llm.test/v1", "m", retries=2, transport=httpx.MockTransport(handler))
    with pytest.raises(BackendTransportError) as excinfo:
        await client.complete("prompt")
    assert excinfo.value.retriable
    assert len(calls) == 3


@pytest.mark.asyncio
async def test_llm_parser_reads_structured_answer():
    parser = LLMParser(ScriptedClient("subject: lamp\nattributes: dark brown, wooden"))
    parse = await parser.parse("dark brown wooden lamp")
    assert parse.subject == "lamp"
    assert parse.attributes == ["dark brown", "wooden"]
    assert parse.parser_id == "llm"


@pytest.mark.asyncio
async def test_llm_parser_falls_back_to_rules_after_two_malformed_answers():
    client = ScriptedClient("no idea", "still no idea")
    parse = await LLMParser(client).parse("red wooden cup")
    assert len(client.prompts) == 2
    assert parse.parser_id == "llm+rules"
    assert parse.subject == "cup"


@pytest.mark.asyncio
async def test_llm_parser_empty_answer_is_other_error():
    parse = await LLMParser(ScriptedClient("  ")).parse("red cup")
    assert parse.status == ParseStatus.OTHER_ERROR


@pytest.mark.asyncio
async def test_service_marks_llm_hallucination():
    service = VocabularyService(LLMParser(ScriptedClient("subject: furniture\nattributes: red")))
    result = await service.build_vocabulary(["red chair"])
    assert result.classes[0].status == ParseStatus.HALLUCINATION
    assert result.status == "failed"


@pytest.mark.asyncio
async def test_record_then_replay_transcript(tmp_path):
    path = str(tmp_path / "llm.jsonl")
    recording = RecordingLLMClient(ScriptedClient("subject: cup\nattributes: red"), TranscriptStore(path))
    await recording.complete(subject_prompt("red cup"))

    replay = ReplayLLMClient(TranscriptStore(path))
    assert await replay.complete(subject_prompt("red cup")) == "subject: cup\nattributes: red"
    with pytest.raises(TranscriptMissError):
        await replay.complete(subject_prompt("blue cup"))


def test_get_llm_client_selects_backend(tmp_path):
    path = str(tmp_path / "t.jsonl")
    assert isinstance(get_llm_client(LLMConfig(transcript_path=path)), ReplayLLMClient)
    assert isinstance(get_llm_client(LLMConfig()), HttpLLMClient)
    assert isinstance(get_llm_client(LLMConfig(transcript_path=path, record=True)), RecordingLLMClient)
    with pytest.raises(ConfigError):
        get_llm_client(LLMConfig(record=True))
