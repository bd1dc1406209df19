"""
Pluggable model backends: reasoners that turn a prompt into raw text and
embedders used by persona retrieval.

Backends are named by spec strings:
    scripted:<path>   canned outputs matched on frame id or sample time
    remote:<url>      OpenAI-style chat/embedding endpoint over HTTP
    gemini:<model>    Google Gemini through langchain-google-genai
    bow               bag-of-words embedder (embedders only)
"""
import json
import logging
from math import sqrt
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence

import requests
from langchain_core.messages import HumanMessage

from .config import config
from .personas import BagOfWordsEmbedder, Embedder, Embedding
from .schemas import PromptBundle

logger = logging.getLogger(__name__)


class BackendUnavailable(RuntimeError):
    """Raised when a backend cannot be reached or gives no usable response."""


class ReasonerBackend(Protocol):
    """Produces raw model text for a prompt."""

    def generate(self, prompt: PromptBundle) -> str:
        ...


class ScriptedBackend:
    """
    Offline reasoner replaying canned outputs.

    Script lines are JSON objects, first match wins:
        {"match": {"frame_id": "f00012"}, "raw": "..."}
        {"match": {"t_min": 10, "t_max": 20}, "raw": "..."}
        {"default": "..."}
    """

    def __init__(self, rules: Sequence[Dict[str, Any]], default: Optional[str] = None):
        self.rules = list(rules)
        self.default = default
        self.calls = 0

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedBackend":
        rules = []
        default = None
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                if "default" in record:
                    default = record["default"]
                elif "match" in record and "raw" in record:
                    rules.append(record)
                else:
                    raise ValueError(f"{path}:{line_no}: script line needs match+raw or default")
        logger.debug("Loaded %d scripted outputs from %s", len(rules), path)
        return cls(rules, default)

    @staticmethod
    def _matches(match: Dict[str, Any], prompt: PromptBundle) -> bool:
        if "frame_id" in match and match["frame_id"] != prompt.frame_id:
            return False
        if "t_min" in match and prompt.at_t < float(match["t_min"]):
            return False
        if "t_max" in match and prompt.at_t > float(match["t_max"]):
            return False
        return True

    def generate(self, prompt: PromptBundle) -> str:
        self.calls += 1
        for rule in self.rules:
            if self._matches(rule["match"], prompt):
                return rule["raw"]
        if self.default is None:
            raise BackendUnavailable(f"no scripted output for t={prompt.at_t:g}")
        return self.default


class RemoteChatBackend:
    """Vision-language model behind an OpenAI-compatible chat completions endpoint."""

    def __init__(self, url: str, model: Optional[str] = None, timeout_s: float = 30.0,
                 api_key: Optional[str] = None):
        self.url = url
        self.model = model or config.REMOTE_MODEL
        self.timeout_s = timeout_s
        self.session = requests.Session()
        self.session.headers.update({"Content-Type": "application/json"})
        api_key = api_key or config.REMOTE_API_KEY
        if api_key:
            self.session.headers["Authorization"] = f"Bearer {api_key}"

    def _message_content(self, prompt: PromptBundle) -> List[Dict[str, Any]]:
        content: List[Dict[str, Any]] = [{"type": "text", "text": prompt.render()}]
        if prompt.image_ref:
            content.append({"type": "image_url", "image_url": {"url": prompt.image_ref}})
        return content

    def generate(self, prompt: PromptBundle) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": self._message_content(prompt)}],
            "temperature": 0,
        }
        try:
            response = self.session.post(self.url, json=payload, timeout=self.timeout_s)
            response.raise_for_status()
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except requests.exceptions.RequestException as e:
            raise BackendUnavailable(f"remote reasoner error: {e}") from e
        except (KeyError, IndexError, ValueError) as e:
            raise BackendUnavailable(f"unexpected remote reasoner response: {e}") from e


class GeminiBackend:
    """Gemini chat model used as the reasoner."""

    def __init__(self, model: str, timeout_s: float = 30.0):
        from langchain_google_genai import ChatGoogleGenerativeAI

        self.llm = ChatGoogleGenerativeAI(
            model=model,
            api_key=config.get_gemini_api_key(),
            temperature=0,
            timeout=timeout_s,
            max_retries=0,
        )

    def generate(self, prompt: PromptBundle) -> str:
        content: List[Dict[str, Any]] = [{"type": "text", "text": prompt.render()}]
        if prompt.image_ref and prompt.image_ref.startswith(("http://", "https://", "data:")):
            content.append({"type": "image_url", "image_url": prompt.image_ref})
        try:
            response = self.llm.invoke([HumanMessage(content=content)])
        except Exception as e:
            raise BackendUnavailable(f"gemini reasoner error: {e}") from e
        return response.content if isinstance(response.content, str) else json.dumps(response.content)


def _to_embedding(vector: Sequence[float]) -> Embedding:
    norm = sqrt(sum(v * v for v in vector))
    if norm == 0:
        return {}
    return {i: v / norm for i, v in enumerate(vector)}


class RemoteEmbedder:
    """Sentence embedder behind an OpenAI-compatible embeddings endpoint."""

    def __init__(self, url: str, model: Optional[str] = None, timeout_s: float = 30.0):
        self.url = url
        self.model = model or config.EMBEDDING_MODEL
        self.timeout_s = timeout_s
        self.session = requests.Session()

    def embed(self, text: str) -> Embedding:
        if not text.strip():
            return {}
        try:
            response = self.session.post(
                self.url, json={"model": self.model, "input": text}, timeout=self.timeout_s
            )
            response.raise_for_status()
            return _to_embedding(response.json()["data"][0]["embedding"])
        except requests.exceptions.RequestException as e:
            raise BackendUnavailable(f"remote embedder error: {e}") from e
        except (KeyError, IndexError, ValueError) as e:
            raise BackendUnavailable(f"unexpected remote embedder response: {e}") from e


class GeminiEmbedder:
    """Gemini text embeddings."""

    def __init__(self, model: str):
        from langchain_google_genai import GoogleGenerativeAIEmbeddings

        self.embeddings = GoogleGenerativeAIEmbeddings(model=model, google_api_key=config.get_gemini_api_key())

    def embed(self, text: str) -> Embedding:
        if not text.strip():
            return {}
        try:
            return _to_embedding(self.embeddings.embed_query(text))
        except Exception as e:
            raise BackendUnavailable(f"gemini embedder error: {e}") from e


def make_reasoner_backend(spec: str, model: Optional[str] = None, timeout_s: float = 30.0) -> ReasonerBackend:
    """Build a reasoner backend from its spec string."""
    scheme, _, target = spec.partition(":")
    if scheme == "scripted":
        return ScriptedBackend.from_file(Path(target))
    if scheme == "remote":
        return RemoteChatBackend(target, model=model, timeout_s=timeout_s)
    if scheme == "gemini":
        return GeminiBackend(target or model or "gemini-1.5-flash", timeout_s=timeout_s)
    raise ValueError(f"unknown reasoner backend '{spec}'")


def make_embedder(spec: str) -> Embedder:
    """Build an embedder from its spec string."""
    scheme, _, target = spec.partition(":")
    if scheme == "bow":
        return BagOfWordsEmbedder()
    if scheme == "remote":
        return RemoteEmbedder(target)
    if scheme == "gemini":
        return GeminiEmbedder(target or "models/text-embedding-004")
    raise ValueError(f"unknown embedder '{spec}'")
