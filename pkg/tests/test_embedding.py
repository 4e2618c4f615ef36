from __future__ import annotations

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonopilot.embedding import (
    DimensionMismatchError,
    EmbedderBackend,
    EmbedderConfig,
    EmbeddingResponseError,
    EmbeddingServiceError,
    EmbeddingTransportError,
    EmbeddingVector,
    embed_text,
    fnv1a_64,
)

CFG = EmbedderConfig()


def test_fnv1a_reference_vectors() -> None:
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C


def test_empty_text_is_zero_vector() -> None:
    vec = embed_text("", CFG)
    assert vec.dimension == 256
    assert vec.is_zero()


def test_punctuation_only_text_is_zero_vector() -> None:
    assert embed_text("... !!! ???", CFG).is_zero()


def test_token_order_invariance() -> None:
    assert embed_text("liver scan", CFG) == embed_text("scan liver", CFG)


def test_case_and_separator_insensitivity() -> None:
    assert embed_text("Liver-Scan", CFG) == embed_text("liver scan", CFG)


def test_golden_thyroid_vector(fixtures_dir) -> None:
    golden = json.loads((fixtures_dir / "thyroid_vector_golden.json").read_text())
    vec = embed_text(golden["text"], EmbedderConfig(dimension=golden["dimension"]))
    assert list(vec.values) == golden["values"]  # bit-exact


def test_determinism_across_calls() -> None:
    text = "please perform a liver ultrasound of the patient"
    assert embed_text(text, CFG).values == embed_text(text, CFG).values


def test_norm_is_unit_for_nonempty_text() -> None:
    vec = embed_text("thyroid", CFG)
    assert math.isclose(vec.norm(), 1.0, abs_tol=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_norm_property_random_text(text: str) -> None:
    vec = embed_text(text, CFG)
    norm = vec.norm()
    assert norm == 0.0 or abs(norm - 1.0) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet=st.characters(), min_size=1, max_size=12), min_size=1, max_size=8), st.randoms())
def test_permutation_invariance_property(tokens: list[str], rng) -> None:
    shuffled = list(tokens)
    rng.shuffle(shuffled)
    assert embed_text(" ".join(tokens), CFG) == embed_text(" ".join(shuffled), CFG)


def test_vector_invariants_enforced() -> None:
    with pytest.raises(ValueError):
        EmbeddingVector((float("nan"), 0.0))
    with pytest.raises(ValueError):
        EmbeddingVector((0.5, 0.5))  # norm neither 0 nor 1
    EmbeddingVector((0.0, 0.0))
    EmbeddingVector((1.0, 0.0))


def test_config_remote_fields_iff_remote() -> None:
    with pytest.raises(ValueError):
        EmbedderConfig(backend=EmbedderBackend.REMOTE)
    with pytest.raises(ValueError):
        EmbedderConfig(remote_endpoint="http://localhost/", remote_model_name="m")
    cfg = EmbedderConfig(backend=EmbedderBackend.REMOTE, remote_endpoint="http://localhost/", remote_model_name="m")
    assert cfg.label == "m"
    with pytest.raises(ValueError):
        EmbedderConfig(dimension=0)


def _remote_cfg(url: str, dimension: int = 4) -> EmbedderConfig:
    return EmbedderConfig(
        dimension=dimension,
        backend=EmbedderBackend.REMOTE,
        remote_endpoint=url,
        remote_model_name="stub-embedder",
    )


def test_remote_backend_normalizes_and_sends_wire_format(stub_server) -> None:
    stub_server.respond_with({"data": [{"embedding": [3.0, 4.0, 0.0, 0.0]}]})
    vec = embed_text("hello", _remote_cfg(stub_server.url))
    assert vec.values == (0.6, 0.8, 0.0, 0.0)
    request = stub_server.requests[-1]
    assert request == {"model": "stub-embedder", "input": ["hello"]}


def test_remote_backend_distinct_errors(stub_server) -> None:
    stub_server.respond_with({"oops": True}, status=500)
    with pytest.raises(EmbeddingServiceError) as service_err:
        embed_text("x", _remote_cfg(stub_server.url))
    assert service_err.value.status_code == 500

    stub_server.respond_with({"data": []})
    with pytest.raises(EmbeddingResponseError):
        embed_text("x", _remote_cfg(stub_server.url))

    stub_server.respond_with({"data": [{"embedding": [1.0, 0.0]}]})
    with pytest.raises(DimensionMismatchError):
        embed_text("x", _remote_cfg(stub_server.url, dimension=4))

    with pytest.raises(EmbeddingTransportError):
        embed_text("x", _remote_cfg("http://127.0.0.1:9/"), timeout=0.2)


def test_thousand_case_permutation_and_norm_property() -> None:
    # seeded volume run kept out of hypothesis so it stays fast and exact
    rng = random.Random(20240811)
    words = ["scan", "liver", "probe", "gel", "force", "neck", "kidney", "heart", "tilt", "échographie"]
    for _ in range(1000):
        tokens = [rng.choice(words) for _ in range(rng.randint(0, 6))]
        text = " ".join(tokens)
        shuffled = list(tokens)
        rng.shuffle(shuffled)
        vec = embed_text(text, CFG)
        assert vec == embed_text(" ".join(shuffled), CFG)
        norm = vec.norm()
        assert norm == 0.0 or abs(norm - 1.0) <= 1e-6
