"""Client for a remote LM served over the bridge wire protocol.

The wire deals in whitespace-level word tokens. /score returns the top-N
tokens of the next-token distribution plus a "__rest__" aggregate and the
"__end__" entry; the client renormalizes what it received so local
TokenDistribution invariants hold at machine precision. Requests are
stateless, so concurrent in-flight calls are safe.
"""

from __future__ import annotations

import math
from typing import Sequence

import requests

from .backend import (
    END_TOKEN,
    ConditioningContext,
    LMBackend,
    MODE_INFILL,
    TokenDistribution,
    linearize_data,
)
from .errors import BackendUnavailable

REST_TOKEN = "__rest__"
DEFAULT_TOP_N = 50_000


class RemoteBackend(LMBackend):
    """LMBackend that scores through a running bridge service."""

    def __init__(self, base_url: str, timeout: float = 30.0, top_n: int = DEFAULT_TOP_N):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.top_n = top_n
        self._vocab: frozenset[str] | None = None
        self._cache: dict[tuple, TokenDistribution] = {}

    # -- wire ---------------------------------------------------------------

    def _post(self, endpoint: str, payload: dict) -> dict:
        try:
            response = requests.post(
                f"{self.base_url}{endpoint}", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"bridge unreachable: {exc}") from exc
        if response.status_code == 503:
            raise BackendUnavailable("bridge reports model not ready")
        if response.status_code != 200:
            raise BackendUnavailable(
                f"bridge returned {response.status_code}: {response.text[:200]}"
            )
        return response.json()

    def health(self) -> dict:
        try:
            response = requests.get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"bridge unreachable: {exc}") from exc
        if response.status_code != 200:
            raise BackendUnavailable(f"bridge health check returned {response.status_code}")
        return response.json()

    # -- contract -----------------------------------------------------------

    def next_token_logprobs(
        self, ctx: ConditioningContext, prefix: Sequence[str]
    ) -> TokenDistribution:
        key = (
            linearize_data(ctx.data),
            ctx.mode,
            ctx.infill_left,
            ctx.infill_right,
            tuple(prefix),
        )
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        payload = {
            "mode": ctx.mode,
            "data": {f: list(v) for f, v in ctx.data.entries.items()},
            "prefix": list(prefix),
            "top_n": self.top_n,
        }
        if ctx.mode == MODE_INFILL:
            payload["infill_left"] = list(ctx.infill_left)
            payload["infill_right"] = list(ctx.infill_right)
        body = self._post("/score", payload)
        entries = body.get("entries")
        if not entries:
            raise BackendUnavailable("bridge /score returned no entries")
        logprobs = {token: float(lp) for token, lp in entries if token != REST_TOKEN}
        if END_TOKEN not in logprobs:
            raise BackendUnavailable("bridge /score omitted the __end__ entry")
        norm = _logsumexp(list(logprobs.values()))
        dist = TokenDistribution({t: lp - norm for t, lp in logprobs.items()})
        self._cache[key] = dist
        return dist

    def generate_remote(self, d, k: int, max_len: int) -> tuple[str, ...]:
        """Server-side beam search over the same wire contract."""
        body = self._post(
            "/generate",
            {"data": {f: list(v) for f, v in d.entries.items()}, "k": k, "max_len": max_len},
        )
        return tuple(body.get("tokens", []))

    def vocabulary(self) -> frozenset[str]:
        if self._vocab is None:
            from .core import DataInput

            dist = self.next_token_logprobs(
                ConditioningContext.left_to_right(DataInput({}, id="__vocab_probe__")), ()
            )
            self._vocab = frozenset(t for t in dist.logprobs if t != END_TOKEN)
        return self._vocab


def _logsumexp(values: list[float]) -> float:
    top = max(values)
    if top == float("-inf"):
        return top
    return top + math.log(math.fsum(math.exp(v - top) for v in values))
