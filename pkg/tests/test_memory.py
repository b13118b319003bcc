import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistent_agent import _kernels_py, memory
from persistent_agent.kernel import Goal, Origin
from persistent_agent.memory import (
    DIM,
    Episode,
    EpisodicRecord,
    MemoryStore,
    TaskCache,
    embed,
    signature_for,
    trace_signature,
)
from persistent_agent.sandbox import Activity, Emotion, UserFeedEntry

try:
    from persistent_agent import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")

WORDS = "stress breathing page weather report scan ocr user docs notes tidy memory summary calm focus".split()


# -- oracle --------------------------------------------------------------------


def fnv1a(token: bytes) -> int:
    h = 0xCBF29CE484222325
    for c in token:
        h ^= c
        h = (h * 0x100000001B3) % 2**64
    return h


def oracle_embed(text: str) -> np.ndarray:
    buckets = [fnv1a(t.lower()) % DIM for t in re.findall(rb"[A-Za-z0-9]+", text.encode())]
    v = np.bincount(buckets, minlength=DIM).astype(float) if buckets else np.zeros(DIM)
    n = np.linalg.norm(v)
    return v / n if n else v


def oracle_top_k(texts, query, k):
    q = oracle_embed(query)
    scored = [(float(oracle_embed(t) @ q), i + 1) for i, t in enumerate(texts)]
    # equal-in-exact-arithmetic scores may differ in the last ulp; rank them as ties
    scored.sort(key=lambda s: (-round(s[0], 12), s[1]))
    return scored[:k]


@pytest.mark.parametrize("token,expected", [
    (b"", 0xCBF29CE484222325),
    (b"a", 0xAF63DC4C8601EC8C),
    (b"foobar", 0x85944171F73967E8),
])
def test_fnv1a_reference_vectors(token, expected):
    assert _kernels_py._fnv1a(token) == expected == fnv1a(token)


def test_embedding_frozen_values():
    v = embed("Hello, hello WORLD 42")
    nz = np.nonzero(v)[0].tolist()
    assert nz == [11, 35, 243]
    assert v[11] == pytest.approx(2 / math.sqrt(6), abs=1e-12)
    assert v[35] == v[243] == pytest.approx(1 / math.sqrt(6), abs=1e-12)


def test_empty_text_embeds_to_zero():
    assert not embed("  ...  ").any()


@given(st.text(max_size=200))
@settings(max_examples=300)
def test_embedding_matches_oracle(text):
    np.testing.assert_allclose(embed(text, impl=_kernels_py), oracle_embed_safe(text), atol=1e-12)


def oracle_embed_safe(text):
    return oracle_embed(text.encode("utf-8", "surrogatepass").decode("latin-1"))


@needs_compiled
@given(st.text(max_size=200))
@settings(max_examples=300)
def test_compiled_embedding_is_bitwise_equal(text):
    data = text.encode("utf-8", "surrogatepass")
    assert np.array_equal(_kernels.embed_bytes(data, DIM), _kernels_py.embed_bytes(data, DIM))


@needs_compiled
@given(st.integers(0, 2**32))
@settings(max_examples=100)
def test_compiled_scores_and_top_k_equal(seed):
    rng = np.random.default_rng(seed)
    m = rng.random((int(rng.integers(1, 60)), DIM))
    m[rng.random(m.shape) < 0.9] = 0.0
    q = rng.random(DIM)
    q[rng.random(DIM) < 0.5] = 0.0
    a, b = _kernels.cosine_scores(m, q), _kernels_py.cosine_scores(m, q)
    assert np.array_equal(a, b)
    ids = np.arange(1, len(a) + 1, dtype=np.int64)
    k = int(rng.integers(1, 8))
    assert list(_kernels.top_k(a, ids, k)) == list(_kernels_py.top_k(b, ids, k))


def store_with(texts, impl=None):
    store = MemoryStore(impl=impl)
    goal = Goal("g", "x [creed:1]", Origin.EXTRINSIC, frozenset({1}), "t")
    for i, text in enumerate(texts):
        rec = EpisodicRecord(i + 1, f"e{i}", i, frozenset(), text, embed(text, impl=impl),
                             _loader=lambda i=i: {"n": i})
        store.add_record(rec)
    return store


@pytest.mark.parametrize("impl", [_kernels_py, _kernels] if _kernels else [_kernels_py])
def test_retrieval_matches_brute_force_cosine(impl):
    rng = np.random.default_rng(2024)
    for _ in range(100):
        texts = [" ".join(rng.choice(WORDS, size=int(rng.integers(1, 8)))) for _ in range(200)]
        query = " ".join(rng.choice(WORDS, size=int(rng.integers(1, 6))))
        store = store_with(texts, impl)
        got = store.retrieve(query, k=5)
        want = oracle_top_k(texts, query, 5)
        assert [h.record.id for h in got] == [i for _, i in want]
        for hit, (score, _) in zip(got, want):
            assert hit.score == pytest.approx(score, abs=1e-9)


def test_lazy_load_law():
    store = store_with(["stress breathing page", "weather report", "stress breathing page calm"])
    res = store.retrieve("stress breathing page", k=3, threshold=0.75)
    for hit in res:
        assert hit.raw_loaded == (hit.score >= 0.75)
        assert (hit.raw is not None) == hit.raw_loaded
    assert res[0].score == pytest.approx(1.0)
    assert not any(r.raw_loaded for r in store.records)
    assert all(loaded == (score >= 0.75) for _, score, loaded in store.retrieval_log)


def test_retrieve_empty_store_and_bad_k():
    store = MemoryStore()
    assert len(store.retrieve("anything")) == 0
    with pytest.raises(ValueError):
        store.retrieve("x", k=0)


def test_trace_signature_buckets_idle_minutes():
    assert trace_signature("t", "stressed", "gaming", 0) == trace_signature("t", "stressed", "gaming", 14)
    assert trace_signature("t", "stressed", "gaming", 14) != trace_signature("t", "stressed", "gaming", 15)


def test_signature_for_feed_entry():
    goal = Goal("g", "x", Origin.INTRINSIC, frozenset({1}), "stress-care")
    entry = UserFeedEntry(10, Emotion.STRESSED, Activity.TYPING, 20)
    assert signature_for(goal, entry) == ("stress-care", "stressed", "typing", 1)
    assert signature_for(goal, None) == ("stress-care", "none", "none", 0)


def make_episode(eid="e1", success=True):
    goal = Goal("g", "open the breathing page [creed:1]", Origin.INTRINSIC, frozenset({1}), "stress-care")
    return Episode(eid, 100, goal, commands=["open(breathing)"], success=success,
                   signature=("stress-care", "stressed", "gaming", 0), trace={"commands": ["open(breathing)"]})


def test_commit_is_idempotent_and_indexes_trace():
    store = MemoryStore()
    rec = store.commit(make_episode())
    assert rec is not None and not rec.raw_loaded
    assert store.commit(make_episode()) is None
    assert len(store) == 1
    assert store.lookup_trace(("stress-care", "stressed", "gaming", 0)) == {"commands": ["open(breathing)"]}
    assert rec.load_raw()["episode"] == "e1"


def test_failed_episode_stores_no_trace():
    store = MemoryStore()
    store.commit(make_episode(success=False))
    assert store.traces == {}


def test_persist_hook_supplies_loader():
    seen = []

    def persist(record, raw):
        seen.append(record.id)
        return lambda: {"from": "disk"}

    store = MemoryStore(persist=persist)
    rec = store.commit(make_episode())
    assert seen == [1] and rec.load_raw() == {"from": "disk"}


def test_task_cache_eviction():
    cache = TaskCache(capacity=2)
    cache.put("a", 1)
    cache.put("a", 2)
    cache.put("b", 3)
    cache.put("c", 4)
    assert cache.get("a") == [] and cache.get("b") == [3] and len(cache) == 2
    cache.evict("b")
    assert cache.get("b") == []


def test_kernel_choice_is_reported():
    assert memory.KERNEL in ("compiled", "python")
