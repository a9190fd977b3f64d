"""Blinded review service: endpoints, blinding soundness, persistence, export."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from attnbench.review import create_app

MODEL_LABELS = ["baseline", "se", "cbam", "gc"]


def make_panel_fixture(panels_dir, n_panels=6, labels=MODEL_LABELS, seed=0):
    """Panel directory with tiny PNGs and a panels.jsonl index (no training)."""
    panels_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n_panels):
        pid = f"s{i:04d}"
        original = f"{pid}__original.png"
        _png(panels_dir / original, rng)
        models = []
        for label in labels:
            fname = f"{pid}__{label}.png"
            _png(panels_dir / fname, rng)
            models.append({"model": label, "p": round(float(rng.random()), 6), "file": fname})
        lines.append(json.dumps({"sample_id": pid, "class": i % 2,
                                 "original": original, "models": models}))
    (panels_dir / "panels.jsonl").write_text("\n".join(lines) + "\n")
    return panels_dir


def _png(path, rng):
    arr = (rng.random((3, 3, 3)) * 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


@pytest.fixture
def service(tmp_path):
    panels = make_panel_fixture(tmp_path / "panels")
    store = tmp_path / "store"
    app = create_app(panels, store)
    return TestClient(app), panels, store


def collect_strings(obj, found=None):
    if found is None:
        found = []
    if isinstance(obj, str):
        found.append(obj)
    elif isinstance(obj, dict):
        for k, v in obj.items():
            collect_strings(k, found)
            collect_strings(v, found)
    elif isinstance(obj, list):
        for v in obj:
            collect_strings(v, found)
    return found


class TestPanelEndpoints:
    def test_lists_six_panels_with_four_blinded_slots(self, service):
        client, *_ = service
        payload = client.get("/v1/panels").json()
        assert len(payload["panels"]) == 6
        for panel in payload["panels"]:
            assert len(panel["slots"]) == 4
            assert [s["slot"] for s in panel["slots"]] == [1, 2, 3, 4]

    def test_payload_carries_no_model_identifiers(self, service):
        client, *_ = service
        for url in ("/v1/panels", "/v1/panels/s0000"):
            strings = collect_strings(client.get(url).json())
            for s in strings:
                assert s not in MODEL_LABELS, f"model label {s!r} leaked via {url}"

    def test_probabilities_hidden_by_default(self, service):
        client, *_ = service
        panel = client.get("/v1/panels/s0001").json()
        assert all("p" not in slot for slot in panel["slots"])

    def test_probabilities_visible_behind_flag(self, tmp_path):
        panels = make_panel_fixture(tmp_path / "p2")
        client = TestClient(create_app(panels, tmp_path / "st2", show_probabilities=True))
        panel = client.get("/v1/panels/s0000").json()
        assert all(isinstance(slot["p"], float) for slot in panel["slots"])

    def test_slot_images_served_without_filenames(self, service):
        client, panels_dir, _ = service
        r = client.get("/v1/panels/s0002/slots/3")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert "content-disposition" not in {k.lower() for k in r.headers}

    def test_unknown_panel_404(self, service):
        client, *_ = service
        assert client.get("/v1/panels/zzz").status_code == 404
        assert client.get("/v1/panels/zzz/original").status_code == 404

    def test_unknown_slot_404(self, service):
        client, *_ = service
        assert client.get("/v1/panels/s0000/slots/5").status_code == 404

    def test_blinding_is_a_permutation_per_panel(self, service):
        client, panels_dir, store = service
        client.get("/v1/panels")
        blinding = json.loads((store / "blinding.json").read_text())
        assert set(blinding) == {f"s{i:04d}" for i in range(6)}
        for pid, order in blinding.items():
            assert sorted(order) == sorted(MODEL_LABELS)
        # seeded: at least one panel is actually shuffled
        assert any(order != MODEL_LABELS for order in blinding.values())

    def test_slot_image_bytes_match_blinded_model_file(self, service):
        client, panels_dir, store = service
        blinding = json.loads((store / "blinding.json").read_text())
        label = blinding["s0000"][0]
        served = client.get("/v1/panels/s0000/slots/1").content
        assert served == (panels_dir / f"s0000__{label}.png").read_bytes()


class TestChoices:
    def test_post_then_export_resolves_model(self, service):
        client, _, store = service
        blinding = json.loads((store / "blinding.json").read_text())
        r = client.post("/v1/choices", json={"panel": "s0000", "slot": 2,
                                             "description": "crisp margin focus",
                                             "reviewer": "derm1"})
        assert r.status_code == 201
        rows = client.get("/v1/export").text.strip().splitlines()
        assert rows[0] == "Column (#),Best Model,Description,Reviewer,Panel"
        assert len(rows) == 2
        cells = rows[1].split(",")
        assert cells[0] == "1"
        assert cells[1] == blinding["s0000"][1]  # slot 2 -> second blinded label
        assert cells[1] in MODEL_LABELS

    def test_none_choice_is_legal_and_exports_none(self, service):
        client, *_ = service
        r = client.post("/v1/choices", json={"panel": "s0003", "slot": "none",
                                             "description": "no model focuses on the lesion",
                                             "reviewer": "derm1"})
        assert r.status_code == 201
        export = client.get("/v1/export").text
        assert ",None," in export

    def test_duplicate_reviewer_panel_conflict(self, service):
        client, *_ = service
        body = {"panel": "s0001", "slot": 1, "description": "d", "reviewer": "r"}
        assert client.post("/v1/choices", json=body).status_code == 201
        assert client.post("/v1/choices", json=body).status_code == 409

    def test_second_reviewer_same_panel_allowed(self, service):
        client, *_ = service
        a = {"panel": "s0001", "slot": 1, "description": "d", "reviewer": "r1"}
        b = {"panel": "s0001", "slot": 3, "description": "e", "reviewer": "r2"}
        assert client.post("/v1/choices", json=a).status_code == 201
        assert client.post("/v1/choices", json=b).status_code == 201

    def test_unknown_panel_404(self, service):
        client, *_ = service
        r = client.post("/v1/choices", json={"panel": "nope", "slot": 1,
                                             "description": "d", "reviewer": "r"})
        assert r.status_code == 404

    def test_empty_description_rejected(self, service):
        client, *_ = service
        r = client.post("/v1/choices", json={"panel": "s0000", "slot": 1,
                                             "description": "   ", "reviewer": "r"})
        assert r.status_code == 422

    def test_out_of_range_slot_rejected(self, service):
        client, *_ = service
        r = client.post("/v1/choices", json={"panel": "s0000", "slot": 9,
                                             "description": "d", "reviewer": "r"})
        assert r.status_code == 422

    def test_answered_flag_per_reviewer(self, service):
        client, *_ = service
        client.post("/v1/choices", json={"panel": "s0002", "slot": 1,
                                         "description": "d", "reviewer": "rx"})
        panels = client.get("/v1/panels", params={"reviewer": "rx"}).json()["panels"]
        answered = {p["id"]: p["answered"] for p in panels}
        assert answered["s0002"] is True
        assert sum(answered.values()) == 1


class TestUiServing:
    def test_static_client_served_next_to_api(self, tmp_path):
        panels = make_panel_fixture(tmp_path / "panels")
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><div id='app'></div>")
        client = TestClient(create_app(panels, tmp_path / "store", ui_dir=ui))
        assert client.get("/").status_code == 200
        assert "app" in client.get("/").text
        assert client.get("/v1/panels").status_code == 200  # API still wins


class TestPersistence:
    def test_restart_preserves_choices_and_blinding(self, tmp_path):
        panels = make_panel_fixture(tmp_path / "panels")
        store = tmp_path / "store"
        client1 = TestClient(create_app(panels, store))
        client1.post("/v1/choices", json={"panel": "s0004", "slot": 4,
                                          "description": "good coverage", "reviewer": "r9"})
        blinding_before = (store / "blinding.json").read_text()
        export_before = client1.get("/v1/export").text

        client2 = TestClient(create_app(panels, store))
        assert (store / "blinding.json").read_text() == blinding_before
        assert client2.get("/v1/export").text == export_before
        assert client2.post("/v1/choices", json={
            "panel": "s0004", "slot": 1, "description": "x", "reviewer": "r9"}).status_code == 409

    def test_store_file_is_append_only_jsonl(self, service):
        client, _, store = service
        for i, pid in enumerate(["s0000", "s0001"]):
            client.post("/v1/choices", json={"panel": pid, "slot": 1 + i,
                                             "description": f"d{i}", "reviewer": "r"})
        lines = (store / "choices.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        assert all(json.loads(l)["reviewer"] == "r" for l in lines)

    def test_empty_store_exports_header_only(self, service):
        client, *_ = service
        text = client.get("/v1/export").text
        assert text.strip() == "Column (#),Best Model,Description,Reviewer,Panel"

    def test_export_ordered_by_panel(self, service):
        client, *_ = service
        for pid in ("s0005", "s0000", "s0003"):
            client.post("/v1/choices", json={"panel": pid, "slot": 1,
                                             "description": "d", "reviewer": "r"})
        rows = client.get("/v1/export").text.strip().splitlines()[1:]
        panel_col = [r.split(",")[-1] for r in rows]
        assert panel_col == sorted(panel_col)
