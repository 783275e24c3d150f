import base64
import io
import logging
import os
import re
import threading
import time
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
import requests
import yaml
from PIL import Image

from srrdoc.errors import ConfigError, RecognitionError, RetryableRecognitionError
from srrdoc.models.detection import Detection
from srrdoc.models.page import Category, Page
from srrdoc.models.recognition import ErrorModel, PromptTemplate, RecognitionRequest, RecognitionResult
from srrdoc.utils.geometry import crop_region
from srrdoc.utils.text_utils import count_tokens, stable_seed

logger = logging.getLogger(__name__)

DEFAULT_PROMPTS_PATH = os.path.join(os.path.dirname(__file__), "data", "prompts.yaml")

# Replacement characters for simulated recognition errors
ERROR_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"
_TAG = re.compile(r"(<[^>]*>)")


@lru_cache(maxsize=8)
def load_prompts(path: str = DEFAULT_PROMPTS_PATH) -> Dict[Category, PromptTemplate]:
    """
    Load the per-category prompt file.

    Raises:
        ConfigError: if the file is unreadable or a category has no prompt
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read prompts from {path}: {str(e)}") from e

    prompts = {}
    for label, text in data.items():
        category = Category.parse(label)
        prompts[category] = PromptTemplate(category=category, prompt_text=str(text).strip())

    missing = [c.value for c in Category if c not in prompts]
    if missing:
        raise ConfigError(f"{path} has no prompt for: {', '.join(missing)}")
    return prompts


def prompt_for_category(category: Category, prompts_path: str = DEFAULT_PROMPTS_PATH) -> PromptTemplate:
    """The recognition prompt for a block category"""
    return load_prompts(prompts_path)[category]


def build_request(page: Page, detection: Detection, prompts_path: str = DEFAULT_PROMPTS_PATH) -> RecognitionRequest:
    """Crop the detection's region and pair it with its category prompt"""
    return RecognitionRequest(
        page_id=page.id,
        block_id=detection.block_id,
        region=crop_region(page, detection.bbox),
        category=detection.category,
        prompt=prompt_for_category(detection.category, prompts_path),
        perturbed=detection.perturbed,
    )


def full_page_request(page: Page, prompts_path: str = DEFAULT_PROMPTS_PATH) -> RecognitionRequest:
    """One request covering the whole page as a Text block"""
    return RecognitionRequest(
        page_id=page.id,
        block_id="page",
        region=crop_region(page, page.bbox),
        category=Category.TEXT,
        prompt=prompt_for_category(Category.TEXT, prompts_path),
    )


class Recognizer(ABC):
    """Block content recognizer contract"""

    name = "recognizer"

    # The scheduler serializes calls to recognizers that set this
    is_serial = False

    @abstractmethod
    def recognize(self, request: RecognitionRequest) -> RecognitionResult:
        """
        Recognize one block.

        Raises:
            RetryableRecognitionError: transient failure (timeout, transport)
            RecognitionError: permanent failure (malformed response)
        """


class MockRecognizer(Recognizer):
    """
    Deterministic recognizer for rasterless pages: returns the ground-truth
    content of the requested region, passed through an error model, after a
    simulated latency.
    """

    name = "mock"

    def __init__(self, error_model: Optional[ErrorModel] = None, latency_per_request: float = 0.0,
                 latency_per_token: float = 0.0):
        """
        Initialize the mock.

        Args:
            error_model: Noise to apply; None for exact transcription
            latency_per_request: Simulated fixed cost per call in seconds
            latency_per_token: Simulated cost per whitespace token of output
        """
        self.error_model = error_model or ErrorModel()
        self.latency_per_request = latency_per_request
        self.latency_per_token = latency_per_token

    def _flip_characters(self, text: str, rng: np.random.Generator, keep_markup: bool) -> str:
        rate = self.error_model.char_error_rate
        if rate == 0.0 or not text:
            return text

        def flip(segment: str) -> str:
            chars = list(segment)
            for i, ch in enumerate(chars):
                if ch.isspace() or rng.random() >= rate:
                    continue
                alternatives = ERROR_ALPHABET.replace(ch.lower(), "")
                chars[i] = alternatives[int(rng.integers(0, len(alternatives)))]
            return "".join(chars)

        if not keep_markup:
            return flip(text)
        # leave table tags intact so the structure stays parseable
        return "".join(part if _TAG.fullmatch(part) else flip(part) for part in _TAG.split(text))

    def simulated_latency(self, content: str) -> float:
        return self.latency_per_request + self.latency_per_token * count_tokens(content)

    def recognize(self, request: RecognitionRequest) -> RecognitionResult:
        start = time.perf_counter()
        rng = np.random.default_rng(stable_seed(request.page_id, request.block_id, self.error_model.seed))

        truth = request.region.content
        content = self._flip_characters(truth, rng, keep_markup=request.category == Category.TABLE)
        if self.error_model.boundary_artifact and request.perturbed:
            content = f"^{{{int(rng.integers(1, 10))}}} {content}"

        delay = self.simulated_latency(truth)
        if delay > 0:
            time.sleep(delay)

        return RecognitionResult(
            block_id=request.block_id,
            content=content,
            latency=time.perf_counter() - start,
        )


class RemoteRecognizer(Recognizer):
    """
    Recognizer backed by an HTTP endpoint that speaks the chat-completions schema.
    """

    name = "remote"

    def __init__(self, api_base: Optional[str] = None, api_key: Optional[str] = None,
                 model: str = "srr-recognizer", request_timeout: float = 60.0):
        """
        Initialize the client.

        Args:
            api_base: Endpoint root; defaults to $SRRDOC_API_BASE
            api_key: Bearer token; defaults to $SRRDOC_API_KEY
            model: Model name sent with every request
            request_timeout: Timeout in seconds for HTTP requests
        """
        self.api_base = (api_base or os.environ.get("SRRDOC_API_BASE") or "").rstrip("/")
        if not self.api_base:
            raise ConfigError("remote recognizer needs an endpoint (SRRDOC_API_BASE)")
        self.api_key = api_key or os.environ.get("SRRDOC_API_KEY")
        self.model = model
        self.request_timeout = request_timeout
        self._local = threading.local()

    @property
    def session(self) -> requests.Session:
        # one session per worker thread
        if not hasattr(self._local, "session"):
            session = requests.Session()
            session.headers.update({"Content-Type": "application/json"})
            if self.api_key:
                session.headers.update({"Authorization": f"Bearer {self.api_key}"})
            self._local.session = session
        return self._local.session

    @staticmethod
    def encode_region(request: RecognitionRequest) -> str:
        """PNG data URL of the region; rasterless regions are sent as a blank canvas"""
        region = request.region
        if region.image is not None:
            image = Image.fromarray(np.asarray(region.image, dtype=np.uint8))
        else:
            image = Image.new("RGB", (max(1, int(region.width)), max(1, int(region.height))), "white")
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        return "data:image/png;base64," + base64.b64encode(buffer.getvalue()).decode("ascii")

    def build_payload(self, request: RecognitionRequest) -> dict:
        return {
            "model": self.model,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": request.prompt.prompt_text},
                        {"type": "image_url", "image_url": {"url": self.encode_region(request)}},
                    ],
                }
            ],
        }

    def recognize(self, request: RecognitionRequest) -> RecognitionResult:
        start = time.perf_counter()
        url = f"{self.api_base}/chat/completions"
        try:
            response = self.session.post(url, json=self.build_payload(request), timeout=self.request_timeout)
        except (requests.Timeout, requests.ConnectionError, requests.exceptions.ChunkedEncodingError) as e:
            raise RetryableRecognitionError(f"{request.block_id}: {str(e)}") from e
        except requests.RequestException as e:
            raise RecognitionError(f"{request.block_id}: {str(e)}") from e

        if response.status_code == 429 or response.status_code >= 500:
            raise RetryableRecognitionError(f"{request.block_id}: HTTP {response.status_code}")
        if response.status_code != 200:
            raise RecognitionError(f"{request.block_id}: HTTP {response.status_code}")

        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise RecognitionError(f"{request.block_id}: malformed response") from e
        if not isinstance(content, str):
            raise RecognitionError(f"{request.block_id}: response content is not text")

        return RecognitionResult(
            block_id=request.block_id,
            content=content,
            latency=time.perf_counter() - start,
        )


def build_recognizer(name: str, error_model: Optional[ErrorModel] = None, latency_per_request: float = 0.0,
                     latency_per_token: float = 0.0, api_base: Optional[str] = None,
                     api_key: Optional[str] = None, model: str = "srr-recognizer",
                     request_timeout: float = 60.0) -> Recognizer:
    """Construct a recognizer by name ('mock' or 'remote')"""
    if name == "mock":
        return MockRecognizer(error_model, latency_per_request, latency_per_token)
    if name == "remote":
        return RemoteRecognizer(api_base, api_key, model, request_timeout)
    raise ConfigError(f"unknown recognizer: {name}")
