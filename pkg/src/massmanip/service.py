"""HTTP API over a loaded model snapshot.

POST /synthesize {mass, action?, seed?}   full pipeline -> motion id + summary
POST /retime     {points, mass, seed?, synthesize?}   NTT (+ optional hands)
GET  /motions/{id}                         the persisted container file
GET  /health                               status + loaded models

The snapshot is immutable; concurrent requests never mutate it. Requests
with the same payload produce the same motion id and byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .errors import ConfigError, MassManipError, NumericError
from .persist import file_checksum, persist_motion
from .pipeline import ModelSnapshot, motion_id, run_retime, run_synthesis


class SynthesizeRequest(BaseModel):
    mass: float
    action: int | None = None
    seed: int = 0


class RetimeRequest(BaseModel):
    points: list
    mass: float
    seed: int = 0
    synthesize: bool = False


def create_app(snapshot: ModelSnapshot) -> FastAPI:
    app = FastAPI(title="massmanip")
    out_dir = Path(snapshot.config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def _validate_condition(mass: float, action):
        if mass <= 0:
            raise HTTPException(400, f"mass must be positive, got {mass}")
        if action is not None and not 0 <= int(action) <= 5:
            raise HTTPException(400, f"action must be in [0, 5], got {action}")

    def _store(bundle, request_payload: dict, summary: dict):
        mid = motion_id(request_payload)
        path = out_dir / f"{mid}.motion"
        persist_motion(path, bundle)
        return {"motion_id": mid, "checksum": file_checksum(path), "summary": summary}

    @app.exception_handler(MassManipError)
    async def _domain_error(request, exc):
        if isinstance(exc, ConfigError):
            code = 409 if "horizon" in str(exc) else 400
            return JSONResponse(status_code=code, content={"detail": str(exc)})
        if isinstance(exc, NumericError):
            return JSONResponse(status_code=500, content={"detail": f"numeric failure: {exc}"})
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "models": snapshot.loaded(),
                "n_frames": snapshot.config.n_frames}

    @app.post("/synthesize")
    def synthesize(req: SynthesizeRequest):
        _validate_condition(req.mass, req.action)
        bundle, summary = run_synthesis(snapshot, req.mass, req.action, seed=req.seed)
        return _store(bundle, {"kind": "synthesize", **req.model_dump()}, summary)

    @app.post("/retime")
    def retime(req: RetimeRequest):
        _validate_condition(req.mass, None)
        if len(req.points) < 2:
            raise HTTPException(400, "need at least two path points")
        bundle, summary = run_retime(snapshot, req.points, req.mass, seed=req.seed,
                                     synthesize=req.synthesize)
        payload = _store(bundle, {"kind": "retime", **req.model_dump()}, summary)
        payload["ntt"] = bundle.traj.poses[:, :3].tolist()
        payload["d_user"] = summary["d_user"]
        return payload

    @app.get("/motions/{mid}")
    def get_motion(mid: str):
        path = out_dir / f"{mid}.motion"
        if not path.exists():
            raise HTTPException(404, f"unknown motion id {mid}")
        return FileResponse(path, media_type="application/octet-stream",
                            filename=f"{mid}.motion")

    return app


def serve(snapshot: ModelSnapshot):
    import uvicorn
    uvicorn.run(create_app(snapshot), host=snapshot.config.host, port=snapshot.config.port)
