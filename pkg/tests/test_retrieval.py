import random

import pytest

from conftest import make_chunk
from ragline.errors import EmptyQuery, RetrievalFailed, ValidationError
from ragline.index import build_index, normalize
from ragline.retrieval import (
    RetrievalHit,
    RetrievalMode,
    assemble_context,
    render_source_block,
    retrieve,
)


def corpus(texts_by_doc: dict[str, list[str]]):
    chunks = []
    for doc_id, texts in texts_by_doc.items():
        for i, text in enumerate(texts):
            chunks.append(
                make_chunk(f"{doc_id}#{i}", text, doc_id=doc_id, ordinal=i, title=doc_id, source_path=f"/{doc_id}.txt")
            )
    return chunks


@pytest.fixture
def two_doc_setup(local_provider):
    chunks = corpus(
        {
            "aaa": ["alpha alpha beta", "alpha gamma sigma", "alpha delta rho"],
            "bbb": ["omega psi", "omega chi", "phi tau"],
        }
    )
    index = build_index(chunks, local_provider)
    return index, {c.chunk_id: c for c in chunks}


def brute_force_table(chunks, provider, query_text):
    """Hand-computed score table over local-provider embeddings."""
    query = normalize(provider.embed_batch([query_text])[0])
    table = []
    for chunk in chunks:
        vec = normalize(provider.embed_batch([chunk.text])[0])
        score = sum(float(a) * float(b) for a, b in zip(vec, query))
        table.append((chunk.chunk_id, chunk.doc_id, score))
    table.sort(key=lambda row: (-row[2], row[0]))
    return table


def test_full_chunk_joins_text_and_metadata(two_doc_setup, local_provider):
    index, chunks = two_doc_setup
    hits = retrieve("alpha", index, chunks, local_provider, k=2)
    assert all(isinstance(h, RetrievalHit) for h in hits)
    assert hits[0].chunk_text == chunks[hits[0].chunk_id].text
    assert hits[0].metadata["title"] == "aaa"
    assert hits[0].metadata["source_path"] == "/aaa.txt"


def test_modes_against_brute_force_oracle(two_doc_setup, local_provider):
    index, chunks = two_doc_setup
    table = brute_force_table(list(chunks.values()), local_provider, "alpha")
    # Doc aaa holds the top three scores in this construction.
    assert [doc_id for _, doc_id, _ in table[:3]] == ["aaa", "aaa", "aaa"]

    full = retrieve("alpha", index, chunks, local_provider, k=3, mode=RetrievalMode.FULL_CHUNK)
    assert [h.chunk_id for h in full] == [cid for cid, _, _ in table[:3]]
    assert all(h.chunk_id.startswith("aaa#") for h in full)

    grouped = retrieve("alpha", index, chunks, local_provider, k=3, mode=RetrievalMode.FILENAME_GROUPED)
    best_a = next(cid for cid, doc, _ in table if doc == "aaa")
    best_b = next(cid for cid, doc, _ in table if doc == "bbb")
    assert [h.chunk_id for h in grouped] == [best_a, best_b]


def test_k_saturation_returns_everything_above_threshold(two_doc_setup, local_provider):
    index, chunks = two_doc_setup
    hits = retrieve("alpha omega phi", index, chunks, local_provider, k=50, threshold=-1.0)
    assert len(hits) == 6


def test_query_identical_to_chunk_ranks_first(two_doc_setup, local_provider):
    index, chunks = two_doc_setup
    hits = retrieve("omega psi", index, chunks, local_provider, k=1)
    assert hits[0].chunk_id == "bbb#0"
    assert hits[0].score == pytest.approx(1.0, abs=1e-6)


def test_blank_query_rejected(two_doc_setup, local_provider):
    index, chunks = two_doc_setup
    with pytest.raises(EmptyQuery):
        retrieve("   ", index, chunks, local_provider)


def test_provider_failure_wrapped(two_doc_setup):
    index, chunks = two_doc_setup

    class Broken:
        provider_id = "broken"
        dim = 256

        def embed_batch(self, texts):
            raise ConnectionError("no embeddings today")

    with pytest.raises(RetrievalFailed):
        retrieve("alpha", index, chunks, Broken())


def test_missing_chunk_text_is_failure(two_doc_setup, local_provider):
    index, chunks = two_doc_setup
    partial = dict(chunks)
    partial.pop("aaa#0")
    with pytest.raises(RetrievalFailed):
        retrieve("alpha alpha beta", index, partial, local_provider, k=6)


def test_grouped_mode_one_hit_per_doc_random(local_provider):
    rng = random.Random(5)
    vocabulary = ["wheat", "oats", "rye", "clover", "silage", "drain", "field", "acid", "lime"]
    for _ in range(25):
        docs = {
            f"doc{d}": [
                " ".join(rng.choice(vocabulary) for _ in range(rng.randrange(2, 8)))
                for _ in range(rng.randrange(1, 5))
            ]
            for d in range(rng.randrange(2, 5))
        }
        chunks = corpus(docs)
        index = build_index(chunks, local_provider)
        chunk_map = {c.chunk_id: c for c in chunks}
        query = " ".join(rng.choice(vocabulary) for _ in range(3))
        k = rng.randrange(1, 7)
        grouped = retrieve(query, index, chunk_map, local_provider, k=k, threshold=-1.0, mode="filename_grouped")
        full = retrieve(query, index, chunk_map, local_provider, k=k, threshold=-1.0, mode="full_chunk")

        doc_ids = [chunk_map[h.chunk_id].doc_id for h in grouped]
        assert len(doc_ids) == len(set(doc_ids))  # at most one hit per document
        assert len(grouped) <= min(k, len(docs))
        # Grouping can only discard higher-scored duplicates: full dominates rank-wise.
        for full_hit, grouped_hit in zip(full, grouped):
            assert full_hit.score >= grouped_hit.score - 1e-9
        # Scores descending within each mode.
        for hits in (full, grouped):
            scores = [h.score for h in hits]
            assert scores == sorted(scores, reverse=True)


# --- assemble_context ---------------------------------------------------------


def hit_with_rendered_size(size: int, n: int) -> RetrievalHit:
    """Craft a hit whose rendered block is exactly `size` chars for markers S1..S9."""
    overhead = len(render_source_block(1, RetrievalHit("x", 0.0, "", {"title": "T", "source_path": "p"})))
    return RetrievalHit(
        chunk_id=f"c{n}",
        score=1.0 - n / 10,
        chunk_text="x" * (size - overhead),
        metadata={"title": "T", "source_path": "p"},
    )


def greedy_oracle(sizes, budget):
    included, used = [], 0
    for i, size in enumerate(sizes):
        if used + size <= budget:
            included.append(i)
            used += size
    return included, used


def test_assemble_all_fit():
    hits = [hit_with_rendered_size(100, i) for i in range(3)]
    bundle = assemble_context(hits, char_budget=10_000)
    assert bundle.hits == tuple(hits)
    assert bundle.used_chars == len(bundle.context_text) == 300
    assert not bundle.no_context


def test_assemble_degenerate_budget_flags_no_context():
    hits = [hit_with_rendered_size(100, 0)]
    bundle = assemble_context(hits, char_budget=50)
    assert bundle.hits == ()
    assert bundle.context_text == ""
    assert bundle.used_chars == 0
    assert bundle.no_context


def test_assemble_skips_oversized_middle_hit():
    sizes = [400, 700, 300]
    hits = [hit_with_rendered_size(size, i) for i, size in enumerate(sizes)]
    included, used = greedy_oracle(sizes, 800)
    assert (included, used) == ([0, 2], 700)  # frozen from the greedy simulation
    bundle = assemble_context(hits, char_budget=800)
    assert [h.chunk_id for h in bundle.hits] == ["c0", "c2"]
    assert bundle.used_chars == 700
    assert "[S1] (T — p)" in bundle.context_text
    assert "[S2] (T — p)" in bundle.context_text
    assert "[S3]" not in bundle.context_text


def test_assemble_citations_consecutive_and_complete():
    hits = [hit_with_rendered_size(120, i) for i in range(5)]
    bundle = assemble_context(hits, char_budget=400)  # fits 3 of 5
    assert len(bundle.hits) == 3
    for i, hit in enumerate(bundle.hits, start=1):
        assert f"[S{i}] " in bundle.context_text
        assert hit.chunk_text in bundle.context_text
    assert f"[S{len(bundle.hits) + 1}]" not in bundle.context_text


def test_assemble_budget_safety_random():
    rng = random.Random(17)
    for _ in range(100):
        hits = [
            RetrievalHit(
                chunk_id=f"h{i}",
                score=1.0 - i * 0.01,
                chunk_text="w" * rng.randrange(1, 400),
                metadata={"title": "t" * rng.randrange(0, 10), "source_path": "p"},
            )
            for i in range(rng.randrange(0, 10))
        ]
        budget = rng.randrange(1, 1500)
        bundle = assemble_context(hits, budget)
        assert bundle.used_chars == len(bundle.context_text)
        assert bundle.used_chars <= budget
        assert bundle.no_context == (len(bundle.hits) == 0)


def test_assemble_requires_positive_budget():
    with pytest.raises(ValidationError):
        assemble_context([], 0)
