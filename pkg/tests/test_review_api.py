import concurrent.futures

import pytest
from fastapi.testclient import TestClient

from facefocal.errors import ConflictError
from facefocal.review import (
    APPROVED,
    EDITED,
    PENDING,
    REJECTED,
    AnnotationItem,
    AnnotationStore,
    edit_distance,
)
from facefocal.server import create_app

from conftest import write_noise_image


def make_items(n, image_path="/tmp/none.png"):
    return [
        AnnotationItem(
            region_id=f"img{i}__r0__EMO",
            image_id=f"img{i}",
            region=(10.0, 10.0, 40.0, 40.0),
            task="EMO",
            label="Anger",
            description=f"machine text {i}",
            image_path=str(image_path),
        )
        for i in range(n)
    ]


@pytest.fixture
def store(tmp_path):
    s = AnnotationStore(tmp_path / "review")
    s.add(make_items(3))
    return s


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


# --- store ----------------------------------------------------------------------


def test_state_machine_transitions(store):
    assert store.decide("img0__r0__EMO", "approve").status == APPROVED
    assert store.decide("img1__r0__EMO", "edit", "better text").status == EDITED
    assert store.decide("img2__r0__EMO", "reject").status == REJECTED
    for rid in ("img0__r0__EMO", "img1__r0__EMO", "img2__r0__EMO"):
        with pytest.raises(ConflictError):
            store.decide(rid, "approve")


def test_edit_replaces_description_and_logs_distance(store):
    store.decide("img0__r0__EMO", "edit", "machine text 0 polished")
    assert store.get("img0__r0__EMO").description == "machine text 0 polished"
    entry = store.audit_entries()[-1]
    assert entry["action"] == "edit"
    assert entry["edit_distance"] == edit_distance("machine text 0", "machine text 0 polished")


def test_usable_descriptions_exclude_rejected(store):
    store.decide("img0__r0__EMO", "reject")
    store.decide("img1__r0__EMO", "edit", "human rewrite")
    usable = store.usable_descriptions()
    assert "img0__r0__EMO" not in usable
    assert usable["img1__r0__EMO"] == "human rewrite"
    assert usable["img2__r0__EMO"] == "machine text 2"


def test_replay_from_log(tmp_path):
    root = tmp_path / "review"
    store = AnnotationStore(root)
    store.add(make_items(3))
    store.decide("img0__r0__EMO", "approve")
    store.decide("img1__r0__EMO", "edit", "rewritten")

    reloaded = AnnotationStore(root)
    assert reloaded.get("img0__r0__EMO").status == APPROVED
    assert reloaded.get("img1__r0__EMO").status == EDITED
    assert reloaded.get("img1__r0__EMO").description == "rewritten"
    assert reloaded.get("img2__r0__EMO").status == PENDING
    # sequence numbers continue after replay
    reloaded.decide("img2__r0__EMO", "approve")
    seqs = [e["seq"] for e in reloaded.audit_entries()]
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)


def test_edit_distance():
    assert edit_distance("abc", "abc") == 0
    assert edit_distance("abc", "abcd") == 1
    assert edit_distance("kitten", "sitting") == 3


# --- HTTP contract ----------------------------------------------------------------


def test_queue_empty_store(tmp_path):
    app = create_app(AnnotationStore(tmp_path / "empty"))
    client = TestClient(app)
    assert client.get("/api/queue").json() == []


def test_queue_shape_and_limit(client):
    items = client.get("/api/queue", params={"limit": 2}).json()
    assert len(items) == 2
    item = items[0]
    assert set(item) == {"id", "image_url", "region", "description", "task", "label"}
    assert item["image_url"] == f"/images/{item['id']}"
    assert item["region"] == [10.0, 10.0, 40.0, 40.0]


def test_approve_removes_from_queue_and_counts(client):
    before = client.get("/api/stats").json()
    assert before["pending"] == 3

    resp = client.post("/api/decision", json={"id": "img0__r0__EMO", "action": "approve"})
    assert resp.status_code == 200
    assert resp.json() == {"id": "img0__r0__EMO", "status": "human_approved"}

    ids = [q["id"] for q in client.get("/api/queue").json()]
    assert "img0__r0__EMO" not in ids
    after = client.get("/api/stats").json()
    assert after["pending"] == 2
    assert after["counts"]["human_approved"] == 1


def test_edit_requires_text(client):
    resp = client.post("/api/decision", json={"id": "img0__r0__EMO", "action": "edit"})
    assert resp.status_code == 422


def test_unknown_id_404(client):
    resp = client.post("/api/decision", json={"id": "nope", "action": "approve"})
    assert resp.status_code == 404


def test_invalid_action_422(client):
    resp = client.post("/api/decision", json={"id": "img0__r0__EMO", "action": "promote"})
    assert resp.status_code == 422


def test_conflicting_decisions_one_audit_entry(store, client):
    def post(action):
        return client.post(
            "/api/decision",
            json={"id": "img1__r0__EMO", "action": action, "edited_text": "mine"},
        )

    with concurrent.futures.ThreadPoolExecutor(max_workers=2) as pool:
        futures = [pool.submit(post, "approve"), pool.submit(post, "edit")]
        codes = sorted(f.result().status_code for f in futures)

    assert codes == [200, 409]
    entries = [e for e in store.audit_entries() if e["region_id"] == "img1__r0__EMO"]
    assert len(entries) == 1


def test_image_route_serves_file(tmp_path):
    img = write_noise_image(tmp_path / "face.png", 16, 16, seed=1)
    store = AnnotationStore(tmp_path / "review")
    store.add(make_items(1, image_path=img))
    client = TestClient(create_app(store))
    resp = client.get("/images/img0__r0__EMO")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"

    missing = AnnotationStore(tmp_path / "review2")
    missing.add(make_items(1, image_path=tmp_path / "gone.png"))
    client2 = TestClient(create_app(missing))
    assert client2.get("/images/img0__r0__EMO").status_code == 404
