import json
import time

import pytest
from fastapi.testclient import TestClient

from chartblender.project import load_project
from chartblender.service import create_app

from conftest import build_demo_project


@pytest.fixture
def service(tmp_path):
    data_root = tmp_path / "data"
    project, path = build_demo_project(data_root / "p1")
    app = create_app(data_root)
    client = TestClient(app)
    return client, project, data_root


def _wait_for_job(client, project_id, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/projects/{project_id}/render/{job_id}/status").json()
        if status["status"] in ("done", "failed"):
            return status
        time.sleep(0.05)
    raise TimeoutError("render job did not settle")


class TestProjectEndpoints:
    def test_create_and_get(self, service, tmp_path):
        client, project, data_root = service
        body = project.to_dict()
        body["id"] = "p2"
        # assets live inside the project dir; reuse p1's layout
        import shutil

        shutil.copytree(data_root / "p1" / "frames", data_root / "p2" / "frames")
        shutil.copytree(data_root / "p1" / "depth", data_root / "p2" / "depth")
        shutil.copy(data_root / "p1" / "data.csv", data_root / "p2" / "data.csv")
        resp = client.post("/projects", json=body)
        assert resp.status_code == 200
        assert resp.json()["id"] == "p2"
        got = client.get("/projects/p2")
        assert got.status_code == 200
        assert got.json()["video"]["frame_count"] == project.video.frame_count

    def test_get_unknown_is_404(self, service):
        client, _, _ = service
        assert client.get("/projects/nope").status_code == 404

    def test_put_project_validates(self, service):
        client, project, _ = service
        body = project.to_dict()
        body["segments"][0]["end_frame"] = 999
        resp = client.put("/projects/p1", json=body)
        assert resp.status_code == 400

    def test_create_invalid_version_400(self, service):
        client, project, _ = service
        body = project.to_dict()
        body["id"] = "p9"
        body["version"] = 99
        assert client.post("/projects", json=body).status_code == 400


class TestAnchorEndpoint:
    def test_put_anchor_in_bounds(self, service):
        client, _, _ = service
        resp = client.put(
            "/projects/p1/anchor", json={"pixel": [10.0, 12.0], "frame": 0, "mode": "camera"}
        )
        assert resp.status_code == 200
        anchor_id = resp.json()["id"]
        project = client.get("/projects/p1").json()
        assert anchor_id in project["anchors"]

    def test_put_anchor_out_of_bounds_400(self, service):
        client, _, _ = service
        resp = client.put(
            "/projects/p1/anchor", json={"pixel": [9999.0, 12.0], "frame": 0, "mode": "camera"}
        )
        assert resp.status_code == 400

    def test_object_mode_anchor_round_trips(self, service):
        client, _, _ = service
        resp = client.put(
            "/projects/p1/anchor",
            json={"id": "obj1", "pixel": [20.0, 20.0], "frame": 0, "mode": "object"},
        )
        assert resp.status_code == 200
        project = client.get("/projects/p1").json()
        assert project["anchors"]["obj1"]["mode"] == "object"


class TestChartAndSegmentEndpoints:
    def test_put_chart(self, service):
        client, project, _ = service
        spec = project.charts["c1"].spec.to_dict()
        resp = client.put(
            "/projects/p1/charts/c2", json={"spec": spec, "dataset": "data.csv"}
        )
        assert resp.status_code == 200
        assert "c2" in client.get("/projects/p1").json()["charts"]

    def test_put_segment_validated(self, service):
        client, _, _ = service
        good = {
            "chart_id": "c1", "anchor_id": "a1", "track_index": 1,
            "start_frame": 0, "end_frame": 2,
        }
        assert client.put("/projects/p1/segments/s2", json=good).status_code == 200
        bad = dict(good, end_frame=99)
        assert client.put("/projects/p1/segments/s2", json=bad).status_code == 400

    def test_segment_update_replaces(self, service):
        client, _, _ = service
        body = {
            "chart_id": "c1", "anchor_id": "a1", "track_index": 1,
            "start_frame": 0, "end_frame": 1,
        }
        client.put("/projects/p1/segments/s1", json=body)
        project = client.get("/projects/p1").json()
        segs = [s for s in project["segments"] if s["id"] == "s1"]
        assert len(segs) == 1
        assert segs[0]["track_index"] == 1


class TestTrackingAndRender:
    def test_track_then_render_and_fetch_frames(self, service):
        client, project, data_root = service
        resp = client.post("/projects/p1/track", json={"mode": "camera"})
        assert resp.status_code == 200
        assert resp.json()["cache"]["path"].startswith("cache/")

        start = client.post("/projects/p1/render")
        assert start.status_code == 200
        job_id = start.json()["job"]
        status = _wait_for_job(client, "p1", job_id)
        assert status["status"] == "done"
        assert status["progress"]["done"] == status["progress"]["total"]

        frame = client.get("/projects/p1/frames/0")
        assert frame.status_code == 200
        assert frame.headers["content-type"] == "image/png"
        assert frame.content[:8] == b"\x89PNG\r\n\x1a\n"

        export = client.post("/projects/p1/export")
        assert export.status_code == 200
        body = export.json()
        assert "ffmpeg" in body["encoder_hint"]
        assert (data_root / "p1" / "export" / "out_000000.png").exists()

    def test_render_without_trajectory_fails_job(self, service):
        client, _, _ = service
        start = client.post("/projects/p1/render")
        job_id = start.json()["job"]
        status = _wait_for_job(client, "p1", job_id)
        assert status["status"] == "failed"
        assert "MissingTrajectory" in status["error"]

    def test_frames_before_render_serve_source(self, service):
        client, _, _ = service
        resp = client.get("/projects/p1/frames/1")
        assert resp.status_code == 200
        assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_frame_out_of_range_404(self, service):
        client, _, _ = service
        assert client.get("/projects/p1/frames/99").status_code == 404

    def test_export_without_render_400(self, service):
        client, _, _ = service
        assert client.post("/projects/p1/export").status_code == 400

    def test_bad_track_mode_400(self, service):
        client, _, _ = service
        assert client.post("/projects/p1/track", json={"mode": "nope"}).status_code == 400


class TestSingleWriter:
    def test_mutations_serialize_under_lock(self, service):
        client, _, _ = service
        # sequential mutations always succeed; a held lock yields 409
        app_state = client.app.state.service
        lock = app_state.lock_for("p1")
        assert lock.acquire()
        try:
            import chartblender.service as service_mod

            original = service_mod.LOCK_TIMEOUT_S
            service_mod.LOCK_TIMEOUT_S = 0.05
            try:
                resp = client.put(
                    "/projects/p1/anchor",
                    json={"pixel": [10.0, 10.0], "frame": 0, "mode": "camera"},
                )
                assert resp.status_code == 409
            finally:
                service_mod.LOCK_TIMEOUT_S = original
        finally:
            lock.release()
        resp = client.put(
            "/projects/p1/anchor", json={"pixel": [10.0, 10.0], "frame": 0, "mode": "camera"}
        )
        assert resp.status_code == 200
