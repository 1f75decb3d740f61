"""HTTP client for the model-inference sidecar protocol.

Endpoints: POST /v1/classify, /v1/detect, /v1/embed and GET /healthz.
Images travel as base64-encoded PNG/JPEG bytes inside JSON bodies.  The
client throttles concurrent callers with a semaphore (default 8 in
flight) and wraps every transport or protocol problem in
InferenceClientError.
"""

from __future__ import annotations

import base64
import threading

import numpy as np
import requests

from .errors import InferenceClientError
from .filtering import CategoryScores
from .panels import SubfigureBox

DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_INFLIGHT = 8


class InferenceClient:
    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT,
                 max_inflight: int = DEFAULT_MAX_INFLIGHT,
                 session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(max_inflight)

    def _post(self, route: str, payload: dict) -> dict:
        url = f"{self.endpoint}{route}"
        with self._slots:
            try:
                resp = self._session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                raise InferenceClientError(f"POST {url} failed: {exc}") from exc
        if resp.status_code != 200:
            detail = ""
            try:
                body = resp.json()
                detail = f": {body.get('error', '')} {body.get('detail', '')}".rstrip()
            except ValueError:
                pass
            raise InferenceClientError(f"POST {url} -> {resp.status_code}{detail}")
        try:
            return resp.json()
        except ValueError as exc:
            raise InferenceClientError(f"POST {url}: non-JSON response") from exc

    def healthz(self) -> bool:
        try:
            resp = self._session.get(f"{self.endpoint}/healthz", timeout=self.timeout)
            return resp.status_code == 200
        except requests.RequestException:
            return False

    def classify(self, image_bytes: bytes) -> CategoryScores:
        body = self._post("/v1/classify",
                          {"image": base64.b64encode(image_bytes).decode("ascii")})
        try:
            return CategoryScores(scores=tuple(float(s) for s in body["scores"]),
                                  category_names=tuple(body["categories"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InferenceClientError(f"malformed classify response: {exc}") from exc

    def detect(self, image_bytes: bytes) -> list[SubfigureBox]:
        body = self._post("/v1/detect",
                          {"image": base64.b64encode(image_bytes).decode("ascii")})
        try:
            return [SubfigureBox(x=int(b["x"]), y=int(b["y"]),
                                 w=int(b["w"]), h=int(b["h"]),
                                 confidence=float(b["score"]))
                    for b in body["boxes"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InferenceClientError(f"malformed detect response: {exc}") from exc

    def _embed(self, payload: dict) -> np.ndarray:
        body = self._post("/v1/embed", payload)
        try:
            vec = np.asarray(body["vector"], dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] != int(body["dim"]):
                raise ValueError("vector/dim mismatch")
        except (KeyError, TypeError, ValueError) as exc:
            raise InferenceClientError(f"malformed embed response: {exc}") from exc
        return vec

    def embed_image(self, image_bytes: bytes) -> np.ndarray:
        return self._embed({"image": base64.b64encode(image_bytes).decode("ascii")})

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed({"text": text})
