"""The identical contract suite runs against the n-gram backend and the
remote client (driving an in-process wire stub over the same model)."""

from __future__ import annotations

import math

import pytest

from templm.backend import END_TOKEN, ConditioningContext
from templm.core import DataInput
from templm.errors import BackendUnavailable
from templm.ngram import NGramBackend, train_ngram
from templm.remote import RemoteBackend
from templm.testing import run_contract_suite

from wire_stub import WireStub

D_TRAIN = DataInput({"name": ["Aromi"], "food": ["Chinese"]}, id="t0")
TEXTS = ["Aromi is a Chinese restaurant", "Aromi serves Chinese food"]
PROBE = ("Aromi", "is", "a")


@pytest.fixture(scope="module")
def ngram_backend():
    return NGramBackend(train_ngram([(D_TRAIN, t) for t in TEXTS], order=4))


@pytest.fixture(scope="module")
def stub(ngram_backend):
    with WireStub(ngram_backend) as server:
        yield server


@pytest.fixture(scope="module")
def remote_backend(stub):
    return RemoteBackend(stub.url)


class TestContractParity:
    def test_ngram_passes_contract(self, ngram_backend):
        run_contract_suite(ngram_backend, D_TRAIN, PROBE)

    def test_remote_passes_identical_contract(self, remote_backend):
        run_contract_suite(remote_backend, D_TRAIN, PROBE)

    def test_same_scores_through_the_wire(self, ngram_backend, remote_backend):
        ctx = ConditioningContext.left_to_right(D_TRAIN)
        local = ngram_backend.sequence_logprob(ctx, PROBE)
        wire = remote_backend.sequence_logprob(ctx, PROBE)
        assert wire == pytest.approx(local, abs=1e-5)

    def test_same_generation_through_the_wire(self, ngram_backend, remote_backend):
        ctx = ConditioningContext.left_to_right(D_TRAIN)
        assert remote_backend.beam_generate(ctx, 2, 8) == ngram_backend.beam_generate(ctx, 2, 8)

    def test_server_side_generate_matches_client_greedy(self, ngram_backend, remote_backend):
        got = remote_backend.generate_remote(D_TRAIN, k=1, max_len=8)
        ctx = ConditioningContext.left_to_right(D_TRAIN)
        greedy = []
        for _ in range(8):
            tok = remote_backend.next_token_logprobs(ctx, tuple(greedy)).argmax()
            if tok == END_TOKEN:
                break
            greedy.append(tok)
        assert got == tuple(greedy)

    def test_infill_mode_over_the_wire(self, ngram_backend, remote_backend):
        ctx = ConditioningContext.infill(D_TRAIN, ("Aromi",), ("restaurant",))
        local = ngram_backend.next_token_logprobs(ctx, ("is",))
        wire = remote_backend.next_token_logprobs(ctx, ("is",))
        for token, lp in local.items():
            assert wire.logprob(token) == pytest.approx(lp, abs=1e-6)


class TestRemoteErrors:
    def test_unreachable_raises_backend_unavailable(self):
        backend = RemoteBackend("http://127.0.0.1:9", timeout=0.2)
        with pytest.raises(BackendUnavailable):
            backend.next_token_logprobs(
                ConditioningContext.left_to_right(D_TRAIN), ()
            )

    def test_not_ready_raises_backend_unavailable(self, ngram_backend):
        with WireStub(ngram_backend, ready=lambda: False) as server:
            backend = RemoteBackend(server.url)
            with pytest.raises(BackendUnavailable):
                backend.next_token_logprobs(
                    ConditioningContext.left_to_right(D_TRAIN), ()
                )

    def test_health_endpoint(self, stub, remote_backend):
        info = remote_backend.health()
        assert info["vocab_size"] > 0
        assert info["model"]

    def test_truncated_distribution_renormalizes(self, stub):
        backend = RemoteBackend(stub.url, top_n=3)
        dist = backend.next_token_logprobs(
            ConditioningContext.left_to_right(D_TRAIN), ()
        )
        mass = math.fsum(math.exp(lp) for lp in dist.logprobs.values())
        assert mass == pytest.approx(1.0, abs=1e-9)
