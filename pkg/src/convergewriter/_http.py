from __future__ import annotations

import logging
import time
from typing import Callable

import httpx

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


def send_with_retries(
    client: httpx.Client,
    method: str,
    url: str,
    *,
    error: type[Exception],
    attempts: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    **kwargs,
) -> httpx.Response:
    """Send a request, retrying transport errors and transient statuses.

    After ``attempts`` failures ``error`` is raised.  Non-retryable HTTP errors
    (e.g. 401, 404) fail immediately.
    """
    last: Exception | None = None
    for attempt in range(attempts):
        if attempt:
            sleep(backoff * 2 ** (attempt - 1))
        try:
            response = client.request(method, url, **kwargs)
        except httpx.HTTPError as exc:
            last = exc
            logger.warning("%s %s failed (attempt %d/%d): %s", method, url, attempt + 1, attempts, exc)
            continue
        if response.status_code in RETRYABLE_STATUS:
            last = httpx.HTTPStatusError(
                f"HTTP {response.status_code}", request=response.request, response=response
            )
            logger.warning("%s %s returned %d (attempt %d/%d)", method, url, response.status_code, attempt + 1, attempts)
            continue
        if response.is_error:
            raise error(f"{method} {url} returned HTTP {response.status_code}: {response.text[:200]}")
        return response
    raise error(f"{method} {url} failed after {attempts} attempts: {last}")
