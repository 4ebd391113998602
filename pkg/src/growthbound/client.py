"""Client for the growthbound service.

By default requests are dispatched in-process through an ASGI transport, so
the CLI needs no running server; pass ``server="http://host:port"`` to talk
to a remote deployment instead.  Error responses are turned back into the
exception types the service mapped them from, so callers see the same
exceptions either way.
"""

from __future__ import annotations

import asyncio
import json
from typing import Any

import httpx

from .errors import DataError, NumericError, UsageError

_STATUS_ERRORS = {400: DataError, 422: UsageError, 500: NumericError}


def _error_message(response: httpx.Response) -> str:
    try:
        body = response.json()
    except json.JSONDecodeError:
        return response.text.strip() or f"HTTP {response.status_code}"
    if isinstance(body, dict):
        err = body.get("error")
        if isinstance(err, dict) and "message" in err:
            return str(err["message"])
        # request-validation responses carry a list of field errors
        detail = body.get("detail")
        if isinstance(detail, list):
            parts = []
            for item in detail:
                loc = ".".join(str(x) for x in item.get("loc", ()) if x != "body")
                parts.append(f"{loc}: {item.get('msg', 'invalid')}")
            return "; ".join(parts)
        if detail is not None:
            return str(detail)
    return response.text.strip() or f"HTTP {response.status_code}"


class ServiceClient:
    """POSTs request payloads and returns response dicts."""

    def __init__(self, server: str | None = None):
        self._server = server
        self._app = None
        if server is None:
            from .service.app import create_app

            self._app = create_app()

    def _request(self, method: str, path: str, payload: dict | None) -> httpx.Response:
        if self._server is not None:
            with httpx.Client(base_url=self._server, timeout=None) as client:
                return client.request(method, path, json=payload)

        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://growthbound.local", timeout=None
            ) as client:
                return await client.request(method, path, json=payload)

        return asyncio.run(go())

    def _call(self, method: str, path: str, payload: dict | None = None) -> dict:
        response = self._request(method, path, payload)
        if response.status_code == 200:
            return response.json()
        exc_type = _STATUS_ERRORS.get(response.status_code, DataError)
        raise exc_type(_error_message(response))

    def health(self) -> dict[str, Any]:
        return self._call("GET", "/health")

    def train(self, payload: dict) -> dict[str, Any]:
        return self._call("POST", "/train", payload)

    def gbm(self, payload: dict) -> dict[str, Any]:
        return self._call("POST", "/gbm", payload)

    def certify(self, payload: dict) -> dict[str, Any]:
        return self._call("POST", "/certify", payload)

    def synonyms(self, payload: dict) -> dict[str, Any]:
        return self._call("POST", "/synonyms", payload)

    def synth(self, payload: dict) -> dict[str, Any]:
        return self._call("POST", "/synth", payload)
