import json
import threading

import pytest

from ragline.errors import NotFound, StorageError, ValidationError
from ragline.feedback import FeedbackStore, InteractionRecord


@pytest.fixture
def store(tmp_path):
    return FeedbackStore(tmp_path / "history.db")


def interaction(session="s1", query="miten nurmi perustetaan?", **overrides) -> InteractionRecord:
    fields = dict(
        session_id=session,
        query_text=query,
        retrieved=[("doc#0", 0.91), ("doc#2", 0.55)],
        answer_text="Nurmi perustetaan keväällä. [S1]",
        model_id="mock-model",
        retrieval_mode="full_chunk",
        latency_ms=420,
    )
    fields.update(overrides)
    return InteractionRecord(**fields)


def test_record_and_read_back(store):
    rec = interaction()
    interaction_id = store.record_interaction(rec)
    assert interaction_id
    loaded = store.get_interaction(interaction_id)
    assert loaded.query_text == rec.query_text
    assert loaded.answer_text == rec.answer_text
    assert loaded.retrieved == [("doc#0", 0.91), ("doc#2", 0.55)]
    assert loaded.model_id == "mock-model"
    assert loaded.retrieval_mode == "full_chunk"
    assert loaded.latency_ms == 420
    assert loaded.created_at


def test_rating_absent_before_feedback(store):
    interaction_id = store.record_interaction(interaction())
    assert store.current_rating(interaction_id) is None


def test_history_ordered_by_creation(store):
    first = store.record_interaction(interaction(query="first", created_at="2025-04-01T10:00:00+00:00"))
    second = store.record_interaction(interaction(query="second", created_at="2025-04-01T11:00:00+00:00"))
    items = store.session_history("s1")
    assert [i["interaction_id"] for i in items] == [first, second]
    assert [i["query_text"] for i in items] == ["first", "second"]


def test_validation_of_required_fields(store):
    with pytest.raises(ValidationError):
        store.record_interaction(interaction(session=""))
    with pytest.raises(ValidationError):
        store.record_interaction(interaction(latency_ms=-1))
    with pytest.raises(ValidationError):
        store.record_interaction(interaction(retrieved=[("a", 0.1), ("b", 0.9)]))  # ascending scores


def test_rerate_overwrites_and_audits(store):
    interaction_id = store.record_interaction(interaction())
    store.record_feedback(interaction_id, 5, comment="great")
    store.record_feedback(interaction_id, 3, comment="actually mixed")
    current = store.current_rating(interaction_id)
    assert current.rating == 3
    assert current.comment == "actually mixed"
    audit = store.feedback_audit(interaction_id)
    assert [a.rating for a in audit] == [5]
    assert audit[0].comment == "great"


def test_rating_bounds(store):
    interaction_id = store.record_interaction(interaction())
    for bad in (0, 6, -1, 3.5, "4"):
        with pytest.raises(ValidationError):
            store.record_feedback(interaction_id, bad)


def test_rating_unknown_interaction(store):
    with pytest.raises(NotFound):
        store.record_feedback("no-such-id", 5)


def test_feedback_requires_interaction_first(store):
    # Referential integrity: no orphan feedback rows can be created.
    with pytest.raises(NotFound):
        store.record_feedback("orphan", 4)
    assert store.count_interactions() == 0


def test_export_contains_queries_verbatim(store):
    store.record_interaction(interaction(query="ensimmäinen kysymys?", created_at="2025-04-01T10:00:00+00:00"))
    store.record_interaction(interaction(query="second question?", created_at="2025-04-01T11:00:00+00:00"))
    html_doc = store.export_history("s1", "html").decode("utf-8")
    assert "ensimmäinen kysymys?" in html_doc
    assert "second question?" in html_doc
    assert "mock-model" in html_doc
    md_doc = store.export_history("s1", "md").decode("utf-8")
    assert "ensimmäinen kysymys?" in md_doc


def test_export_deterministic(store):
    interaction_id = store.record_interaction(interaction(created_at="2025-04-01T10:00:00+00:00"))
    store.record_feedback(interaction_id, 4)
    assert store.export_history("s1", "html") == store.export_history("s1", "html")
    assert store.export_history("s1", "md") == store.export_history("s1", "md")


def test_export_shows_rating_and_sources(store):
    interaction_id = store.record_interaction(interaction())
    store.record_feedback(interaction_id, 4)
    html_doc = store.export_history("s1", "html").decode("utf-8")
    assert "4/5" in html_doc
    assert "doc#0" in html_doc


def test_export_unknown_session(store):
    with pytest.raises(NotFound):
        store.export_history("ghost", "html")


def test_export_bad_format(store):
    store.record_interaction(interaction())
    with pytest.raises(ValidationError):
        store.export_history("s1", "pdf")


def test_export_escapes_html(store):
    store.record_interaction(interaction(query="<script>alert(1)</script>"))
    html_doc = store.export_history("s1", "html").decode("utf-8")
    assert "<script>alert(1)</script>" not in html_doc
    assert "&lt;script&gt;" in html_doc


def test_export_all_jsonl_shape(store):
    a = store.record_interaction(interaction(query="q1", created_at="2025-04-01T10:00:00+00:00"))
    store.record_interaction(interaction(query="q2", session="s2", created_at="2025-04-01T11:00:00+00:00"))
    store.record_feedback(a, 5)
    store.record_feedback(a, 2)
    lines = [json.loads(line) for line in store.export_all_jsonl()]
    assert len(lines) == 2
    first = lines[0]
    assert first["interaction"]["query_text"] == "q1"
    assert first["feedback"]["rating"] == 2
    assert [entry["rating"] for entry in first["audit"]] == [5]
    assert lines[1]["feedback"] is None


def test_write_then_read_across_connections(tmp_path):
    path = tmp_path / "history.db"
    writer = FeedbackStore(path)
    interaction_id = writer.record_interaction(interaction())
    reader = FeedbackStore(path)
    assert reader.get_interaction(interaction_id).query_text == interaction().query_text


def test_concurrent_writers_serialize(store):
    errors = []

    def write_some(tag):
        try:
            for i in range(10):
                store.record_interaction(interaction(session=f"s-{tag}", query=f"q{tag}-{i}"))
        except Exception as exc:  # noqa: BLE001 - collected for assertion
            errors.append(exc)

    threads = [threading.Thread(target=write_some, args=(t,)) for t in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert store.count_interactions() == 40


def test_future_schema_version_rejected(tmp_path):
    path = tmp_path / "history.db"
    FeedbackStore(path)
    import sqlite3

    with sqlite3.connect(path) as conn:
        conn.execute("PRAGMA user_version = 99")
    with pytest.raises(StorageError):
        FeedbackStore(path)


def test_store_ok_probe(store, tmp_path):
    assert store.ok()
