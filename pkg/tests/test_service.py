"""Protocol walk over the experiment service, by direct HTTP calls."""

import pytest
from fastapi.testclient import TestClient

from mirc_lab.minidata import CATCH_CLIPS, PRACTICE_CLIPS, TEST_CLIPS, WRONG_LABEL
from mirc_lab.service import build_trial_order, create_app

QUOTA = 4  # small per-node quota keeps the walk fast

STUDY_CONFIG = {
    "set_size": 36,
    "response_quota": QUOTA,
    "seed": 11,
    "scoring": {
        "penalty_constant": 0.3,
        "bonus_constant": 0.3,
        "correctness_threshold": 0.5,
    },
    "reduction": {"max_level": 3},
}


@pytest.fixture()
def client(mini_dataset, tmp_path):
    app = create_app(tmp_path / "studies")
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def study(client, mini_dataset):
    resp = client.post(
        "/v1/studies", json={"manifest": str(mini_dataset), "config": STUDY_CONFIG}
    )
    assert resp.status_code == 200, resp.text
    return resp.json()["study_id"]


def new_session(client, study):
    resp = client.post(f"/v1/studies/{study}/participants", json={})
    assert resp.status_code == 200, resp.text
    return resp.json()


def run_session(client, study, answers_for):
    """Scripted participant: answers every trial; returns visited trials."""
    session = new_session(client, study)
    sid = session["session_id"]
    visited = []
    while True:
        nxt = client.get(f"/v1/sessions/{sid}/next").json()
        if nxt["status"] != "trial":
            return session, visited, nxt["status"]
        trial = nxt["trial"]
        visited.append(trial)
        resp = client.post(
            f"/v1/sessions/{sid}/responses",
            json={
                "node_id": trial["node_id"],
                "raw_text": answers_for(trial),
                "response_time_ms": 4500,
            },
        )
        assert resp.status_code == 200, resp.text


def gt_answer(mini_manifest_labels):
    def answer(trial):
        clip_id = trial["node_id"].split("/")[0]
        return mini_manifest_labels[clip_id]

    return answer


LABELS = {c[0]: c[3] for c in TEST_CLIPS + PRACTICE_CLIPS + CATCH_CLIPS}


class TestStudySetup:
    def test_trial_count_is_practice_main_catch(self, client, study):
        session = new_session(client, study)
        # 5 practice + 3 main (one per clip) + 2 catch
        assert session["trial_count"] == 10

    def test_practice_trials_come_first(self, client, study):
        _session, visited, status = run_session(client, study, gt_answer(LABELS))
        assert status == "done"
        kinds = [t["kind"] for t in visited]
        assert kinds[:5] == ["practice"] * 5
        assert kinds.count("catch") == 2
        assert kinds.count("main") == 3

    def test_one_node_per_source_clip(self, client, study):
        for _ in range(3):
            _s, visited, _ = run_session(client, study, gt_answer(LABELS))
            mains = [t["node_id"].split("/")[0] for t in visited if t["kind"] == "main"]
            assert len(mains) == len(set(mains))

    def test_trial_order_reproducible_from_seed(self, client, study):
        session = new_session(client, study)
        sid = session["session_id"]
        first = client.get(f"/v1/sessions/{sid}/next").json()["trial"]["node_id"]
        order = build_trial_order(
            session["seed"],
            [f"{c[0]}/L0/" for c in TEST_CLIPS],
            [f"{c[0]}/L0/" for c in PRACTICE_CLIPS],
            [f"{c[0]}/L0/" for c in CATCH_CLIPS],
        )
        assert order[0].node_id == first

    def test_missing_embeddings_fail_setup(self, client, tmp_path):
        import json

        bare = tmp_path / "bare.json"
        bare.write_text(json.dumps({"clips": []}))
        resp = client.post("/v1/studies", json={"manifest": str(bare), "config": {}})
        assert resp.status_code == 422


class TestSequencing:
    def test_out_of_order_rejected(self, client, study):
        session = new_session(client, study)
        sid = session["session_id"]
        trial = client.get(f"/v1/sessions/{sid}/next").json()["trial"]
        resp = client.post(
            f"/v1/sessions/{sid}/responses",
            json={"node_id": "clipA/L0/", "raw_text": "open door", "response_time_ms": 4500},
        )
        if trial["node_id"] == "clipA/L0/":
            assert resp.status_code == 200
        else:
            assert resp.status_code == 409
            assert "out of order" in resp.json()["detail"]

    def test_duplicate_submission_conflict(self, client, study):
        session = new_session(client, study)
        sid = session["session_id"]
        trial = client.get(f"/v1/sessions/{sid}/next").json()["trial"]
        body = {"node_id": trial["node_id"], "raw_text": "open door", "response_time_ms": 4500}
        assert client.post(f"/v1/sessions/{sid}/responses", json=body).status_code == 200
        resp = client.post(f"/v1/sessions/{sid}/responses", json=body)
        assert resp.status_code == 409
        assert "already recorded" in resp.json()["detail"]

    def test_next_idempotent_until_answered(self, client, study):
        session = new_session(client, study)
        sid = session["session_id"]
        a = client.get(f"/v1/sessions/{sid}/next").json()
        b = client.get(f"/v1/sessions/{sid}/next").json()
        assert a == b

    def test_done_marker_after_all_trials(self, client, study):
        _session, visited, status = run_session(client, study, gt_answer(LABELS))
        assert status == "done"
        assert len(visited) == 10


class TestCatchExclusion:
    def wrong_on_catch(self, trial):
        if trial["kind"] == "catch":
            return WRONG_LABEL
        return LABELS[trial["node_id"].split("/")[0]]

    def test_both_catches_wrong_excludes(self, client, study):
        session, visited, status = run_session(client, study, self.wrong_on_catch)
        sid = session["session_id"]
        # exclusion may land before the session finishes its trials
        assert status in ("excluded", "done")
        progress = client.get(f"/v1/studies/{study}/progress").json()
        assert progress["sessions"][sid]["excluded"] is True

    def test_excluded_session_cannot_continue(self, client, study):
        session = new_session(client, study)
        sid = session["session_id"]
        excluded = False
        while True:
            nxt = client.get(f"/v1/sessions/{sid}/next").json()
            if nxt["status"] == "excluded":
                excluded = True
                break
            if nxt["status"] == "done":
                break
            trial = nxt["trial"]
            client.post(
                f"/v1/sessions/{sid}/responses",
                json={
                    "node_id": trial["node_id"],
                    "raw_text": self.wrong_on_catch(trial),
                    "response_time_ms": 4500,
                },
            )
        progress = client.get(f"/v1/studies/{study}/progress").json()
        if progress["sessions"][sid]["excluded"]:
            resp = client.post(
                f"/v1/sessions/{sid}/responses",
                json={"node_id": "clipA/L0/", "raw_text": "x y", "response_time_ms": 4500},
            )
            assert resp.status_code == 409

    def test_excluded_responses_not_counted(self, client, study):
        # run one excluded participant, then check no node counts its answers
        run_session(client, study, self.wrong_on_catch)
        progress = client.get(f"/v1/studies/{study}/progress").json()
        for clip in progress["clips"].values():
            for count in clip["active_nodes"].values():
                assert count == 0


def advance_all(client, study, clip_id):
    resp = client.post(f"/v1/studies/{study}/advance", json={"clip_id": clip_id})
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestAdvancement:
    # per-node accuracy quantised to quarters so a quota of 4 represents it
    # exactly: the recognised chain is root -> UL -> ULUL, as in the batch
    # pipeline script
    def target_accuracy(self, node_id):
        if "scr" in node_id:
            return 0.25
        level = int(node_id.split("/")[1][1:])
        path = node_id.split("/")[2]
        if level == 0:
            return 1.0
        if level == 1:
            return 0.75 if path == "UL" else 0.25
        if level == 2:
            return 0.75 if path == "ULUL" else 0.25
        return 0.25

    def scripted_answer(self, trial):
        node_id = trial["node_id"]
        clip_id = node_id.split("/")[0]
        if trial["kind"] != "main":
            return LABELS[clip_id]
        correct_n = round(self.target_accuracy(node_id) * QUOTA)
        idx = self.session_index.setdefault(node_id, 0)
        self.session_index[node_id] += 1
        return LABELS[clip_id] if idx < correct_n else WRONG_LABEL

    def test_advance_requires_quota(self, client, study):
        resp = client.post(f"/v1/studies/{study}/advance", json={"clip_id": "clipA"})
        assert resp.status_code == 409
        assert "not_ready" in str(resp.json()["detail"])

    def test_full_protocol_reaches_mirc_and_scramble(self, client, study):
        self.session_index = {}
        saw_scramble = False
        activated = {f"{c[0]}/L0/" for c in TEST_CLIPS + PRACTICE_CLIPS + CATCH_CLIPS}
        served = set()
        for _round in range(6):
            for _ in range(QUOTA * 6):
                progress = client.get(f"/v1/studies/{study}/progress").json()
                pending = any(
                    any(c < QUOTA for c in clip["active_nodes"].values())
                    for clip in progress["clips"].values()
                )
                if not pending:
                    break
                _s, visited, _ = run_session(client, study, self.scripted_answer)
                served.update(t["node_id"] for t in visited)
            advanced = {}
            for clip_id in ("clipA", "clipB", "clipC"):
                progress = client.get(f"/v1/studies/{study}/progress").json()
                if progress["clips"][clip_id]["done"]:
                    continue
                advanced[clip_id] = advance_all(client, study, clip_id)
                activated.update(advanced[clip_id]["activated"])
                if any("scr" in n for n in advanced[clip_id]["activated"]):
                    saw_scramble = True
            if not advanced:
                break
        progress = client.get(f"/v1/studies/{study}/progress").json()
        assert saw_scramble
        for clip_id in ("clipA", "clipB", "clipC"):
            assert progress["clips"][clip_id]["mircs"] == [f"{clip_id}/L2/ULUL"]
            assert progress["clips"][clip_id]["done"]
        # nothing the expansion pruned or dropped was ever shown to anyone
        assert served <= activated

    def test_advance_unknown_clip_404(self, client, study):
        resp = client.post(f"/v1/studies/{study}/advance", json={"clip_id": "nope"})
        assert resp.status_code == 404


class TestMedia:
    def test_bundle_lists_frames(self, client, study):
        resp = client.get(f"/v1/studies/{study}/bundle", params={"node": "clipA/L0/"})
        assert resp.status_code == 200
        bundle = resp.json()
        assert len(bundle["frame_urls"]) == 10
        assert bundle["fps"] == 10.0

    def test_frame_is_cropped_png(self, client, study):
        import io

        from PIL import Image

        resp = client.get(
            f"/v1/studies/{study}/frame", params={"node": "clipA/L0/", "index": 0}
        )
        assert resp.status_code == 200
        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (64, 48)

    def test_unknown_node_404(self, client, study):
        resp = client.get(f"/v1/studies/{study}/bundle", params={"node": "clipA/L9/XX"})
        assert resp.status_code == 404
