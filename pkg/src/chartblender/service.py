"""Authoring HTTP service consumed by the browser front-end.

JSON in/out except frame fetches (PNG bytes). Projects live under the data
root, one directory per project, with asset paths relative to that
directory. Mutations are serialized per project (single writer); a busy
writer yields 409. Render jobs run on a worker pool and are polled via the
status endpoint.
"""

from __future__ import annotations

import io
import json
import shutil
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import Body, FastAPI, Response
from fastapi.responses import JSONResponse
from PIL import Image

from .camera_tracking import AnchorSpec
from .compositing import TimelineSegment, render_frame, _ChartRasterCache
from .errors import ChartBlenderError, UnsupportedVersion, ValidationError
from .project import (
    ChartRef,
    Project,
    atomic_write_bytes,
    load_project,
    resolve_render_inputs,
    run_camera_tracking,
    run_object_tracking,
    save_project,
    validate_project,
)
from .charts import ChartSpec

LOCK_TIMEOUT_S = 2.0
ENCODER_HINT = (
    "ffmpeg -framerate {fps} -i {pattern} -c:v libx264 -pix_fmt yuv420p -crf 18 output.mp4"
)


class RenderJob:
    def __init__(self, job_id: str, project_id: str, total: int, out_dir: Path):
        self.job_id = job_id
        self.project_id = project_id
        self.total = total
        self.out_dir = out_dir
        self.done = 0
        self.status = "queued"  # queued | running | done | failed
        self.error: str | None = None
        self.warnings: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "job": self.job_id,
                "status": self.status,
                "progress": {"done": self.done, "total": self.total},
                "error": self.error,
                "report": {"frames": dict(self.warnings)},
            }

    def advance(self, frame_index: int, warnings) -> None:
        with self._lock:
            self.done += 1
            if warnings:
                self.warnings[str(frame_index)] = list(warnings)


class ServiceState:
    def __init__(self, data_root: Path, workers: int = 2):
        self.data_root = Path(data_root)
        self.data_root.mkdir(parents=True, exist_ok=True)
        self.locks: dict[str, threading.Lock] = {}
        self.locks_guard = threading.Lock()
        self.jobs: dict[str, RenderJob] = {}
        self.executor = ThreadPoolExecutor(max_workers=workers)

    def project_dir(self, project_id: str) -> Path:
        return self.data_root / project_id

    def project_path(self, project_id: str) -> Path:
        return self.project_dir(project_id) / "project.json"

    def lock_for(self, project_id: str) -> threading.Lock:
        with self.locks_guard:
            if project_id not in self.locks:
                self.locks[project_id] = threading.Lock()
            return self.locks[project_id]


def _error_response(status: int, exc: BaseException) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "detail": str(exc)},
    )


def create_app(data_root, workers: int = 2) -> FastAPI:
    state = ServiceState(Path(data_root), workers=workers)
    app = FastAPI(title="chartblender", version="0.1.0")
    app.state.service = state

    def _load(project_id: str) -> Project:
        path = state.project_path(project_id)
        if not path.exists():
            raise FileNotFoundError(project_id)
        return load_project(path)

    def _mutate(project_id: str, fn):
        """Apply fn(project) under the per-project writer lock."""
        lock = state.lock_for(project_id)
        if not lock.acquire(timeout=LOCK_TIMEOUT_S):
            return None, _error_response(409, RuntimeError("concurrent mutation in progress"))
        try:
            project = _load(project_id)
            result = fn(project)
            save_project(project, state.project_path(project_id))
            return result, None
        finally:
            lock.release()

    @app.post("/projects")
    def create_project(body: dict = Body(...)):
        project_id = str(body.pop("id", "") or uuid.uuid4().hex[:8])
        path = state.project_path(project_id)
        if path.exists():
            return _error_response(409, RuntimeError(f"project {project_id} already exists"))
        try:
            project = Project.from_dict(body)
            validate_project(project)
        except (ValidationError, UnsupportedVersion, KeyError, TypeError, ValueError) as exc:
            return _error_response(400, exc)
        state.project_dir(project_id).mkdir(parents=True, exist_ok=True)
        save_project(project, path)
        return {"id": project_id}

    @app.get("/projects/{project_id}")
    def get_project(project_id: str):
        try:
            return _load(project_id).to_dict()
        except FileNotFoundError as exc:
            return _error_response(404, exc)

    @app.put("/projects/{project_id}")
    def put_project(project_id: str, body: dict = Body(...)):
        if not state.project_path(project_id).exists():
            return _error_response(404, FileNotFoundError(project_id))
        try:
            replacement = Project.from_dict(body)
            validate_project(replacement)
        except (ValidationError, UnsupportedVersion, KeyError, TypeError, ValueError) as exc:
            return _error_response(400, exc)

        def apply(project: Project):
            project.__dict__.update(replacement.__dict__)
            return project.to_dict()

        result, err = _mutate(project_id, apply)
        return err or result

    @app.put("/projects/{project_id}/anchor")
    def put_anchor(project_id: str, body: dict = Body(...)):
        if not state.project_path(project_id).exists():
            return _error_response(404, FileNotFoundError(project_id))
        anchor_id = str(body.get("id") or f"anchor-{uuid.uuid4().hex[:6]}")
        try:
            anchor = AnchorSpec.from_dict(body)
        except (KeyError, TypeError, ValueError) as exc:
            return _error_response(400, exc)

        def apply(project: Project):
            project.anchors[anchor_id] = anchor
            validate_project(project)
            return {"id": anchor_id}

        try:
            result, err = _mutate(project_id, apply)
        except ValidationError as exc:
            return _error_response(400, exc)
        return err or result

    @app.put("/projects/{project_id}/charts/{chart_id}")
    def put_chart(project_id: str, chart_id: str, body: dict = Body(...)):
        if not state.project_path(project_id).exists():
            return _error_response(404, FileNotFoundError(project_id))
        try:
            ref = ChartRef(
                chart_id=chart_id,
                spec=ChartSpec.from_dict(body["spec"]),
                dataset=str(body["dataset"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            return _error_response(400, exc)

        def apply(project: Project):
            project.charts[chart_id] = ref
            validate_project(project)
            return {"id": chart_id}

        try:
            result, err = _mutate(project_id, apply)
        except ValidationError as exc:
            return _error_response(400, exc)
        return err or result

    @app.put("/projects/{project_id}/segments/{segment_id}")
    def put_segment(project_id: str, segment_id: str, body: dict = Body(...)):
        if not state.project_path(project_id).exists():
            return _error_response(404, FileNotFoundError(project_id))
        body = dict(body)
        body["id"] = segment_id
        try:
            segment = TimelineSegment.from_dict(body)
        except (KeyError, TypeError, ValueError) as exc:
            return _error_response(400, exc)

        def apply(project: Project):
            project.segments = [s for s in project.segments if s.segment_id != segment_id]
            project.segments.append(segment)
            validate_project(project)
            return {"id": segment_id}

        try:
            result, err = _mutate(project_id, apply)
        except ValidationError as exc:
            return _error_response(400, exc)
        return err or result

    @app.post("/projects/{project_id}/track")
    def track(project_id: str, body: dict = Body(...)):
        if not state.project_path(project_id).exists():
            return _error_response(404, FileNotFoundError(project_id))
        mode = body.get("mode")
        if mode not in ("camera", "object"):
            return _error_response(400, ValueError("mode must be 'camera' or 'object'"))

        def apply(project: Project):
            base = state.project_dir(project_id)
            if mode == "camera":
                run_camera_tracking(project, base)
                return {"cache": project.camera_cache.to_dict()}
            anchor_ids = (
                [body["anchor_id"]]
                if body.get("anchor_id")
                else [aid for aid, a in project.anchors.items() if a.mode == "object"]
            )
            if not anchor_ids:
                raise ValidationError("anchors", "no object-mode anchors to track")
            for aid in anchor_ids:
                run_object_tracking(project, base, aid)
            return {"caches": {aid: project.object_caches[aid].to_dict() for aid in anchor_ids}}

        try:
            result, err = _mutate(project_id, apply)
        except ValidationError as exc:
            return _error_response(400, exc)
        except ChartBlenderError as exc:
            return _error_response(500, exc)
        return err or result

    def _run_render_job(job: RenderJob, project: Project, base: Path):
        try:
            job.status = "running"
            inputs = resolve_render_inputs(project, base)
            cache = _ChartRasterCache(inputs.charts)
            job.out_dir.mkdir(parents=True, exist_ok=True)
            for n in range(inputs.frame_count):
                composed = render_frame(inputs, n, cache)
                buf = io.BytesIO()
                Image.fromarray(composed.raster).save(buf, format="PNG")
                atomic_write_bytes(job.out_dir / f"out_{n:06d}.png", buf.getvalue())
                job.advance(n, composed.warnings)
            atomic_write_bytes(
                job.out_dir / "render_report.json",
                (json.dumps({"frames": job.warnings}, sort_keys=True, indent=2) + "\n").encode(),
            )
            job.status = "done"
        except BaseException as exc:  # job surface: report, never raise
            job.status = "failed"
            job.error = f"{type(exc).__name__}: {exc}"

    @app.post("/projects/{project_id}/render")
    def start_render(project_id: str):
        try:
            project = _load(project_id)
        except FileNotFoundError as exc:
            return _error_response(404, exc)
        job_id = f"job-{uuid.uuid4().hex[:8]}"
        out_dir = state.project_dir(project_id) / "renders" / job_id
        job = RenderJob(job_id, project_id, total=project.video.frame_count, out_dir=out_dir)
        state.jobs[job_id] = job
        state.executor.submit(_run_render_job, job, project, state.project_dir(project_id))
        return {"job": job_id}

    @app.get("/projects/{project_id}/render/{job_id}/status")
    def render_status(project_id: str, job_id: str):
        job = state.jobs.get(job_id)
        if job is None or job.project_id != project_id:
            return _error_response(404, KeyError(job_id))
        return job.snapshot()

    def _latest_done_render(project_id: str) -> Path | None:
        renders = [
            job for job in state.jobs.values()
            if job.project_id == project_id and job.status == "done"
        ]
        if not renders:
            return None
        return renders[-1].out_dir

    @app.get("/projects/{project_id}/frames/{n}")
    def get_frame_png(project_id: str, n: int):
        try:
            project = _load(project_id)
        except FileNotFoundError as exc:
            return _error_response(404, exc)
        if not (0 <= n < project.video.frame_count):
            return _error_response(404, IndexError(f"frame {n} outside the video"))
        render_dir = _latest_done_render(project_id)
        if render_dir is not None and (render_dir / f"out_{n:06d}.png").exists():
            path = render_dir / f"out_{n:06d}.png"
        else:
            path = state.project_dir(project_id) / project.video.frames_dir / f"frame_{n:06d}.png"
        if not path.exists():
            return _error_response(404, FileNotFoundError(str(path)))
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/projects/{project_id}/export")
    def export(project_id: str):
        try:
            project = _load(project_id)
        except FileNotFoundError as exc:
            return _error_response(404, exc)
        render_dir = _latest_done_render(project_id)
        if render_dir is None:
            return _error_response(400, RuntimeError("no completed render to export"))
        export_dir = state.project_dir(project_id) / "export"
        if export_dir.exists():
            shutil.rmtree(export_dir)
        shutil.copytree(render_dir, export_dir)
        pattern = str(export_dir / "out_%06d.png")
        return {
            "frames_dir": str(export_dir),
            "pattern": "out_%06d.png",
            "encoder_hint": ENCODER_HINT.format(fps=project.video.fps, pattern=pattern),
        }

    return app
