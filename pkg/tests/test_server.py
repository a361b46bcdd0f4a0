from __future__ import annotations

import io as _io
import json
import time
import zipfile

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from patchseg.io import load_indexed_png, save_image_png
from patchseg.grid import PixelGrid
from patchseg.phantom import two_texture
from patchseg.server import create_app

CONFIG = {"patch_side": 3, "branching": 2, "layers": 2, "iterations": 3,
          "seed": 1, "n_classes": 2, "subsample": 150}


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def phantom_png():
    p = two_texture(width=28, height=24, period=4, seed=0)
    return save_image_png(p.image)


@pytest.fixture()
def session_id(client, phantom_png):
    resp = client.post("/sessions",
                       files={"image": ("tex.png", phantom_png, "image/png")},
                       data={"config": json.dumps(CONFIG)})
    assert resp.status_code == 200, resp.text
    sid = resp.json()["session_id"]
    _wait_ready(client, sid)
    yield sid
    client.delete(f"/sessions/{sid}")


def _wait_ready(client, sid, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = client.get(f"/sessions/{sid}").json()
        if status["error"]:
            raise AssertionError(status["error"])
        if status["ready"]:
            return status
        time.sleep(0.02)
    raise TimeoutError("session never became ready")


def _stroke(points, cls, radius=1.5):
    return {"points": points, "radius": radius, "cls": cls}


class TestSessionEndpoints:
    def test_create_reports_shape(self, client, phantom_png):
        resp = client.post("/sessions",
                           files={"image": ("t.png", phantom_png, "image/png")},
                           data={"config": json.dumps(CONFIG)})
        body = resp.json()
        assert body["width"] == 28 and body["height"] == 24
        client.delete(f"/sessions/{body['session_id']}")

    def test_bad_config_rejected(self, client, phantom_png):
        resp = client.post("/sessions",
                           files={"image": ("t.png", phantom_png, "image/png")},
                           data={"config": json.dumps({"patch_side": 4})})
        assert resp.status_code == 400

    def test_patch_larger_than_image_rejected(self, client, phantom_png):
        cfg = dict(CONFIG, patch_side=29)
        resp = client.post("/sessions",
                           files={"image": ("t.png", phantom_png, "image/png")},
                           data={"config": json.dumps(cfg)})
        assert resp.status_code == 400

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_image_endpoint_roundtrip(self, client, session_id, phantom_png):
        resp = client.get(f"/sessions/{session_id}/image")
        assert resp.status_code == 200
        assert resp.content == phantom_png

    def test_stroke_then_results(self, client, session_id):
        resp = client.post(f"/sessions/{session_id}/strokes", json={
            "strokes": [_stroke([[3, 12]], 1), _stroke([[24, 12]], 2)],
            "options": {"steps": 2, "binarise": True, "overwrite": True},
        })
        assert resp.status_code == 200
        rev = resp.json()["revision"]
        seg = client.get(f"/sessions/{session_id}/result",
                         params={"kind": "segmentation", "rev": rev})
        assert seg.status_code == 200
        assert int(seg.headers["X-Revision"]) >= rev
        labels = load_indexed_png(seg.content)
        assert labels.shape == (24, 28)
        assert set(np.unique(labels)).issubset({0, 1, 2})
        prob = client.get(f"/sessions/{session_id}/result",
                          params={"kind": "probability", "rev": rev, "layer": 2})
        arr = np.asarray(Image.open(_io.BytesIO(prob.content)))
        assert arr.shape == (24, 28)
        assert arr.max() > arr.min()

    def test_idempotent_reads(self, client, session_id):
        rev = client.post(f"/sessions/{session_id}/strokes", json={
            "strokes": [_stroke([[5, 5], [9, 5]], 1)]}).json()["revision"]
        a = client.get(f"/sessions/{session_id}/result",
                       params={"kind": "segmentation", "rev": rev})
        b = client.get(f"/sessions/{session_id}/result",
                       params={"kind": "segmentation", "rev": rev})
        assert a.content == b.content
        assert a.headers["X-Revision"] == b.headers["X-Revision"]

    def test_marks_export_import_byte_identical(self, client, session_id):
        client.post(f"/sessions/{session_id}/strokes", json={
            "strokes": [_stroke([[4, 4], [8, 6]], 1), _stroke([[20, 18]], 2)]})
        marks1 = client.get(f"/sessions/{session_id}/result",
                            params={"kind": "marks"}).content
        client.post(f"/sessions/{session_id}/strokes", json={
            "strokes": [_stroke([[14, 10]], 2)]})
        resp = client.post(f"/sessions/{session_id}/marks", content=marks1)
        assert resp.status_code == 200
        marks2 = client.get(f"/sessions/{session_id}/result",
                            params={"kind": "marks"}).content
        assert marks1 == marks2

    def test_undo_redo(self, client, session_id):
        client.post(f"/sessions/{session_id}/strokes",
                    json={"strokes": [_stroke([[6, 6]], 1)]})
        marks_before = client.get(f"/sessions/{session_id}/result",
                                  params={"kind": "marks"}).content
        client.post(f"/sessions/{session_id}/strokes",
                    json={"strokes": [_stroke([[20, 6]], 2)]})
        client.post(f"/sessions/{session_id}/undo")
        marks_after = client.get(f"/sessions/{session_id}/result",
                                 params={"kind": "marks"}).content
        assert marks_after == marks_before
        client.post(f"/sessions/{session_id}/redo")
        marks_redone = client.get(f"/sessions/{session_id}/result",
                                  params={"kind": "marks"}).content
        assert marks_redone != marks_before

    def test_unknown_class_400(self, client, session_id):
        resp = client.post(f"/sessions/{session_id}/strokes", json={
            "strokes": [_stroke([[4, 4]], 7)]})
        assert resp.status_code == 400

    def test_bad_kind_400(self, client, session_id):
        resp = client.get(f"/sessions/{session_id}/result",
                          params={"kind": "wat"})
        assert resp.status_code == 400

    def test_events_stream_carries_ready_and_updates(self, client, session_id):
        client.post(f"/sessions/{session_id}/strokes",
                    json={"strokes": [_stroke([[10, 10]], 1)]})
        client.get(f"/sessions/{session_id}/result",
                   params={"kind": "segmentation"})
        resp = client.get(f"/sessions/{session_id}/events",
                          params={"once": "true"})
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("text/event-stream")
        events = [json.loads(line[6:]) for line in resp.text.splitlines()
                  if line.startswith("data: ")]
        kinds = [e["type"] for e in events]
        assert kinds[0] == "ready"
        assert "update" in kinds
        for e in events:
            if e["type"] == "update":
                assert "timing_ms" in e and "revision" in e
        # incremental polling: 'after' skips already-seen events
        resp2 = client.get(f"/sessions/{session_id}/events",
                           params={"once": "true", "after": len(events),
                                   "wait": "0.1"})
        more = [line for line in resp2.text.splitlines()
                if line.startswith("data: ")]
        assert len(more) == 0


class TestExportAndBatch:
    def test_export_then_batch_roundtrip(self, client, session_id, tmp_path):
        client.post(f"/sessions/{session_id}/strokes", json={
            "strokes": [_stroke([[3, 12], [5, 12]], 1),
                        _stroke([[22, 12], [25, 12]], 2)],
            "options": {"steps": 2, "binarise": True, "overwrite": True},
        })
        client.get(f"/sessions/{session_id}/result",
                   params={"kind": "segmentation"})
        model_bytes = client.post(f"/sessions/{session_id}/export").content
        assert model_bytes[:8] == b"PSEGMODL"

        # three-slice stack of the training texture
        p = two_texture(width=28, height=24, period=4, seed=0)
        page = Image.fromarray(np.rint(p.image.data[..., 0] * 255).astype(np.uint8))
        buf = _io.BytesIO()
        page.save(buf, format="TIFF", save_all=True, append_images=[page, page])
        resp = client.post("/batch",
                           files={"model": ("m.bin", model_bytes),
                                  "stack": ("s.tif", buf.getvalue())},
                           data={"workers": "1"})
        job_id = resp.json()["job_id"]
        deadline = time.monotonic() + 60
        while time.monotonic() < deadline:
            st = client.get(f"/batch/{job_id}").json()
            if st["state"] in ("done", "error"):
                break
            time.sleep(0.05)
        assert st["state"] == "done", st
        assert st["done"] == st["total"] == 3
        payload = client.get(f"/batch/{job_id}/download")
        assert payload.status_code == 200
        zf = zipfile.ZipFile(_io.BytesIO(payload.content))
        names = set(zf.namelist())
        assert {"probability_class1.tif", "probability_class2.tif",
                "labels.tif"} <= names

    def test_batch_unknown_job(self, client):
        assert client.get("/batch/nope").status_code == 404


def test_create_rejects_non_image(client):
    resp = client.post("/sessions",
                       files={"image": ("x.txt", b"not an image", "text/plain")},
                       data={"config": "{}"})
    assert resp.status_code in (400, 422, 500)


def test_upload_size_limit():
    from patchseg.server import create_app as make

    with TestClient(make(max_upload_mb=1)) as small_client:
        blob = b"0" * (2 * 1024 * 1024)
        resp = small_client.post("/sessions",
                                 files={"image": ("big.png", blob, "image/png")},
                                 data={"config": "{}"})
        assert resp.status_code == 413
