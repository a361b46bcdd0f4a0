"""HTTP session service for the interactive loop.

Endpoints:

    POST   /sessions                    multipart image + config JSON -> id
    GET    /sessions/{id}               status JSON
    GET    /sessions/{id}/events        server-sent events {revision, timing, ready}
    GET    /sessions/{id}/image         raw image as PNG
    POST   /sessions/{id}/strokes       JSON stroke batch -> {revision}
    GET    /sessions/{id}/result        ?kind=segmentation|probability|marks
                                        &rev=N&layer=c -> PNG (X-Revision header)
    POST   /sessions/{id}/undo|redo     -> {revision}
    POST   /sessions/{id}/marks         indexed-PNG body -> {revision}
    POST   /sessions/{id}/export        -> model file bytes
    DELETE /sessions/{id}
    POST   /batch                       multipart model + stack -> {job_id}
    GET    /batch/{job_id}              progress JSON
    GET    /batch/{job_id}/download     zip of TIFF outputs (+ centres CSV)

Heavy computation never runs on the request path: session builds and
updates run on per-session worker threads, batch jobs on their own thread.
"""

from __future__ import annotations

import io as _io
import json
import threading
import uuid
import zipfile

from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response, StreamingResponse

from .errors import ConfigurationError, CorruptionError
from .io import (load_image, load_indexed_png, load_stack, save_gray_png,
                 save_image_png, save_indexed_png)
from .propagation import UpdateOptions, segment
from .session import RESULT_KINDS, BuildConfig, Session
from .transfer import StackOptions, TrainedModel, apply_to_stack


class BatchJob:
    def __init__(self, model_bytes: bytes, stack_bytes: bytes,
                 options: StackOptions):
        self.id = uuid.uuid4().hex[:12]
        self.state = "running"
        self.error: str | None = None
        self.done = 0
        self.total = 0
        self.payload: bytes | None = None
        self._model_bytes = model_bytes
        self._stack_bytes = stack_bytes
        self._options = options
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name=f"batch-{self.id}")
        self._thread.start()

    def _progress(self, done: int, total: int):
        self.done, self.total = done, total

    def _run(self):
        try:
            model = TrainedModel.load(self._model_bytes)
            slices = load_stack(self._stack_bytes)
            self.total = len(slices)
            probs, labels, centres = apply_to_stack(
                slices, model, self._options, progress=self._progress)
            self.payload = _pack_batch_outputs(model, slices, probs, labels,
                                               centres, self._options)
            self.state = "done"
        except Exception as exc:
            self.error = str(exc)
            self.state = "error"

    def status(self) -> dict:
        return {"job_id": self.id, "state": self.state, "done": self.done,
                "total": self.total, "error": self.error}


def _pack_batch_outputs(model, slices, probs, labels, centres,
                        options: StackOptions) -> bytes:
    from .io import save_label_tiff, save_probability_tiff

    buf = _io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        height, width = slices[0].height, slices[0].width
        for c in range(model.n_classes):
            pages = [p[:, c].reshape(height, width) for p in probs]
            page_buf = _io.BytesIO()
            save_probability_tiff(pages, page_buf)
            zf.writestr(f"probability_class{c + 1}.tif", page_buf.getvalue())
        label_buf = _io.BytesIO()
        save_label_tiff(list(labels), label_buf)
        zf.writestr("labels.tif", label_buf.getvalue())
        if centres is not None:
            import csv
            text = _io.StringIO()
            writer = csv.writer(text)
            writer.writerow(["x", "y", "slice", "score"])
            for z, dets in enumerate(centres):
                for x, y, score in dets:
                    writer.writerow([x, y, z, f"{score:.6g}"])
            zf.writestr("centres.csv", text.getvalue())
    return buf.getvalue()


def create_app(ui_dir: str | None = None, max_upload_mb: int = 256) -> FastAPI:
    app = FastAPI(title="patchseg", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"], expose_headers=["X-Revision"])
    sessions: dict[str, Session] = {}
    jobs: dict[str, BatchJob] = {}
    app.state.sessions = sessions
    app.state.jobs = jobs
    app.state.max_upload_mb = max_upload_mb

    @app.middleware("http")
    async def limit_upload_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > app.state.max_upload_mb * 1024 * 1024:
            return JSONResponse(status_code=413, content={
                "detail": f"upload exceeds {app.state.max_upload_mb} MiB"})
        return await call_next(request)

    @app.exception_handler(ConfigurationError)
    async def _config_error(request: Request, exc: ConfigurationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(CorruptionError)
    async def _corruption_error(request: Request, exc: CorruptionError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def get_session(session_id: str) -> Session:
        if session_id not in sessions:
            raise HTTPException(404, f"no session {session_id}")
        return sessions[session_id]

    @app.post("/sessions")
    async def create_session(image: UploadFile = File(...),
                             config: str = Form("{}")):
        try:
            cfg = BuildConfig(**json.loads(config))
        except TypeError as exc:
            raise HTTPException(400, f"bad config: {exc}")
        grid = load_image(await image.read())
        session = Session(grid, cfg, image_name=image.filename or "")
        sessions[session.id] = session
        return {"session_id": session.id, "width": grid.width,
                "height": grid.height, "channels": grid.channels,
                "n_classes": cfg.n_classes}

    @app.get("/sessions/{session_id}")
    def session_status(session_id: str):
        return get_session(session_id).status()

    @app.get("/sessions/{session_id}/events")
    def session_events(session_id: str, once: bool = False, after: int = 0,
                       wait: float = 10.0):
        """Event stream; ``once`` closes after draining (for polling clients)."""
        session = get_session(session_id)

        def stream():
            index = after
            while True:
                events = session.events_since(index, timeout=min(wait, 2.0)
                                              if not once else wait)
                for event in events:
                    yield f"data: {json.dumps(event)}\n\n"
                index += len(events)
                if once:
                    return
                if not events:
                    # every yield is a cancellation point, so a disconnecting
                    # client releases the worker thread promptly
                    yield ": keep-alive\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/image")
    def session_image(session_id: str):
        session = get_session(session_id)
        return Response(save_image_png(session.grid), media_type="image/png")

    @app.post("/sessions/{session_id}/strokes")
    async def submit_strokes(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json()
        options = None
        if body.get("options") is not None:
            try:
                options = UpdateOptions(**body["options"])
            except TypeError as exc:
                raise HTTPException(400, f"bad options: {exc}")
        revision = session.submit_strokes(body.get("strokes", []), options)
        return {"revision": revision}

    @app.get("/sessions/{session_id}/result")
    def get_result(session_id: str, kind: str = "segmentation", rev: int = 0,
                   layer: int = 1, timeout: float = 60.0):
        session = get_session(session_id)
        if kind not in RESULT_KINDS:
            raise HTTPException(400, f"kind must be one of {RESULT_KINDS}")
        if kind == "marks":
            label_map, revision = session.marks_map()
            payload = save_indexed_png(label_map)
        else:
            try:
                prob, revision, opts = session.wait_result(rev, timeout)
            except TimeoutError as exc:
                raise HTTPException(504, str(exc))
            height, width = session.grid.height, session.grid.width
            if kind == "segmentation":
                labels = segment(prob, opts.epsilon).reshape(height, width)
                payload = save_indexed_png(labels)
            else:
                if not 1 <= layer <= session.marking.n_classes:
                    raise HTTPException(400, f"layer {layer} out of range")
                payload = save_gray_png(prob[:, layer - 1].reshape(height, width))
        return Response(payload, media_type="image/png",
                        headers={"X-Revision": str(revision)})

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        return {"revision": get_session(session_id).undo()}

    @app.post("/sessions/{session_id}/redo")
    def redo(session_id: str):
        return {"revision": get_session(session_id).redo()}

    @app.post("/sessions/{session_id}/marks")
    async def import_marks(session_id: str, request: Request):
        session = get_session(session_id)
        label_map = load_indexed_png(await request.body())
        return {"revision": session.import_marks(label_map)}

    @app.post("/sessions/{session_id}/export")
    def export_model(session_id: str):
        session = get_session(session_id)
        model = session.export_model()
        return Response(model.save(), media_type="application/octet-stream",
                        headers={"Content-Disposition":
                                 f'attachment; filename="{session.id}.psegmodel"'})

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        session = get_session(session_id)
        session.close()
        del sessions[session_id]
        return {"deleted": session_id}

    @app.post("/batch")
    async def batch_apply(model: UploadFile = File(...),
                          stack: UploadFile = File(...),
                          epsilon: float = Form(1e-6),
                          min_component: int = Form(0),
                          centres_class: int = Form(0),
                          centre_min_distance: float = Form(5.0),
                          centre_threshold: float = Form(0.5),
                          workers: int = Form(2)):
        options = StackOptions(
            epsilon=epsilon, min_component=min_component,
            centres_class=centres_class or None,
            centre_min_distance=centre_min_distance,
            centre_threshold=centre_threshold, workers=workers)
        job = BatchJob(await model.read(), await stack.read(), options)
        jobs[job.id] = job
        return {"job_id": job.id}

    @app.get("/batch/{job_id}")
    def batch_status(job_id: str):
        if job_id not in jobs:
            raise HTTPException(404, f"no job {job_id}")
        return jobs[job_id].status()

    @app.get("/batch/{job_id}/download")
    def batch_download(job_id: str):
        if job_id not in jobs:
            raise HTTPException(404, f"no job {job_id}")
        job = jobs[job_id]
        if job.state == "error":
            raise HTTPException(400, job.error or "batch failed")
        if job.state != "done":
            raise HTTPException(409, "job still running")
        return Response(job.payload, media_type="application/zip",
                        headers={"Content-Disposition":
                                 'attachment; filename="batch_results.zip"'})

    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def run_server(host: str = "127.0.0.1", port: int = 8000,
               max_upload_mb: int = 256, ui_dir: str | None = None):
    """Start the service with uvicorn (blocking)."""
    import uvicorn

    app = create_app(ui_dir=ui_dir, max_upload_mb=max_upload_mb)
    uvicorn.run(app, host=host, port=port, log_level="info")
