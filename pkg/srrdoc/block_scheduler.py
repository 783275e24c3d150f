import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence

from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from srrdoc.errors import InvalidInputError, RecognitionError, RetryableRecognitionError
from srrdoc.models.detection import Detection
from srrdoc.models.page import Page
from srrdoc.models.recognition import RecognitionRequest, RecognitionResult
from srrdoc.recognizer import DEFAULT_PROMPTS_PATH, Recognizer, build_request

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE = 0.2  # seconds; doubles after every failed attempt


def recognize_with_retry(recognizer: Recognizer, request: RecognitionRequest,
                         max_attempts: int = MAX_ATTEMPTS, backoff_base: float = BACKOFF_BASE) -> RecognitionResult:
    """
    Recognize one block, retrying transient failures with exponential backoff.

    A block that still fails (or fails permanently) is returned as a failed
    result with empty content instead of raising.
    """
    attempts = 0
    started = time.perf_counter()
    retrying = Retrying(
        wait=wait_exponential(multiplier=backoff_base),
        stop=stop_after_attempt(max_attempts),
        retry=retry_if_exception_type(RetryableRecognitionError),
        before_sleep=lambda state: logger.warning(
            f"Attempt {state.attempt_number} failed for block {request.block_id}: {str(state.outcome.exception())}"
        ),
        reraise=True,
    )

    try:
        for attempt in retrying:
            attempts = attempt.retry_state.attempt_number
            with attempt:
                result = recognizer.recognize(request)
        return RecognitionResult(
            block_id=result.block_id,
            content=result.content,
            latency=result.latency,
            attempts=attempts,
        )
    except RetryableRecognitionError as e:
        error = str(e)
    except RecognitionError as e:
        logger.error(f"Recognition failed for block {request.block_id}: {str(e)}")
        error = str(e)
    except Exception as e:
        logger.error(f"Error recognizing block {request.block_id}: {str(e)}")
        error = str(e)

    logger.error(f"Giving up on block {request.block_id} of page {request.page_id} after {attempts} attempts")
    return RecognitionResult(
        block_id=request.block_id,
        content="",
        latency=time.perf_counter() - started,
        attempts=attempts,
        failed=True,
        error=error,
    )


def recognize_requests(requests: Sequence[RecognitionRequest], recognizer: Recognizer, parallelism: int = 1,
                       max_attempts: int = MAX_ATTEMPTS, backoff_base: float = BACKOFF_BASE) -> List[RecognitionResult]:
    """
    Run requests with at most `parallelism` in flight, dispatched in FIFO
    order. Results come back in request order.
    """
    if parallelism < 1:
        raise InvalidInputError(f"parallelism must be >= 1, got {parallelism}")
    if max_attempts < 1:
        raise InvalidInputError(f"max_attempts must be >= 1, got {max_attempts}")
    if not requests:
        return []

    workers = 1 if recognizer.is_serial else min(parallelism, len(requests))

    def run(request: RecognitionRequest) -> RecognitionResult:
        return recognize_with_retry(recognizer, request, max_attempts, backoff_base)

    if workers == 1:
        return [run(r) for r in requests]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="recognize") as pool:
        return list(pool.map(run, requests))


def recognize_page_blocks(page: Page, detections: Sequence[Detection], recognizer: Recognizer,
                          parallelism: int = 1, max_attempts: int = MAX_ATTEMPTS,
                          backoff_base: float = BACKOFF_BASE,
                          prompts_path: str = DEFAULT_PROMPTS_PATH) -> List[RecognitionResult]:
    """
    Recognize every detected block of a page.

    Args:
        page: Page the detections belong to
        detections: Blocks to recognize
        recognizer: Recognizer to call
        parallelism: Maximum concurrent recognize calls
        max_attempts: Attempts per block on transient failures
        backoff_base: First retry delay in seconds
        prompts_path: Prompt file to use

    Returns:
        One result per detection, in detection order
    """
    requests = [build_request(page, det, prompts_path) for det in detections]
    results = recognize_requests(requests, recognizer, parallelism, max_attempts, backoff_base)

    failed = sum(1 for r in results if r.failed)
    if failed:
        logger.warning(f"{failed} of {len(results)} blocks failed on page {page.id}")
    return results
