"""Local HTTP session service for interactive reenactment.

A session caches the decoded source image, its fitted identity and the
unwrapped source UV texture, so slider interaction re-runs only
refine -> render -> composite -> edit. Sessions serialize their own
requests; distinct sessions run concurrently against the immutable
checkpoint weights.
"""

import base64
import binascii
import io
import threading
import time
import uuid

import numpy as np
import torch
import torch.nn.functional as F
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image

from .audio import (MfccConfig, Waveform, extract_mfcc, interpolate_to_fps,
                    predict_motion_sequence)
from .facemodel import EXPRESSION_DIM, IdentityParams, MotionParams
from .motion import assemble_window

MAX_FIELD_BYTES = 8_000_000


class _BadField(Exception):
    def __init__(self, field, message):
        super().__init__(message)
        self.field = field


class _TooLarge(Exception):
    pass


def _b64_bytes(value, field):
    if not isinstance(value, str):
        raise _BadField(field, f"'{field}' must be a base64 string")
    if len(value) > MAX_FIELD_BYTES:
        raise _TooLarge(field)
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _BadField(field, f"'{field}' is not valid base64: {exc}")


def _vector(obj, field, length):
    value = obj.get(field)
    if value is None:
        raise _BadField(field, f"missing field '{field}'")
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape[0] != length:
        raise _BadField(
            field, f"'{field}' must have length {length}, got "
            f"{arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise _BadField(field, f"'{field}' contains non-finite values")
    return arr


def _parse_motion(obj):
    return MotionParams(_vector(obj, "exp", EXPRESSION_DIM),
                        _vector(obj, "angle", 3),
                        _vector(obj, "trans", 3))


def _decode_png(data, resolution):
    img = Image.open(io.BytesIO(data)).convert("RGB")
    arr = np.asarray(img, dtype=np.float32).transpose(2, 0, 1)
    tensor = torch.from_numpy(arr / 127.5 - 1.0)
    if tensor.shape[-1] != resolution or tensor.shape[-2] != resolution:
        tensor = F.interpolate(tensor[None], size=(resolution, resolution),
                               mode="bilinear", align_corners=False)[0]
    return tensor


def _encode_png(tensor):
    arr = tensor.detach().cpu().numpy()
    arr = np.clip((arr + 1.0) * 127.5, 0.0, 255.0)
    arr = np.rint(arr).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class Session:
    def __init__(self, source, source_motion, identity, initial_uv):
        self.source = source
        self.source_motion = source_motion
        self.identity = identity
        self.initial_uv = initial_uv
        self.lock = threading.Lock()
        self.created_at = time.time()
        self.n_requests = 0


def create_app(model, audio_regressor=None, fps=25.0):
    app = FastAPI(title="ifaceuv session service")
    sessions = {}
    registry_lock = threading.Lock()

    def get_session(session_id):
        with registry_lock:
            return sessions.get(session_id)

    @app.exception_handler(_BadField)
    async def _bad_field(request: Request, exc: _BadField):
        return JSONResponse(status_code=400,
                            content={"error": str(exc), "field": exc.field})

    @app.exception_handler(_TooLarge)
    async def _too_large(request: Request, exc: _TooLarge):
        return JSONResponse(status_code=413,
                            content={"error": "payload too large"})

    @app.post("/session")
    def create_session(body: dict):
        png = body.get("source_png_base64")
        if png is None:
            raise _BadField("source_png_base64",
                            "missing field 'source_png_base64'")
        data = _b64_bytes(png, "source_png_base64")
        try:
            source = _decode_png(data, model.config.resolution)
        except Exception as exc:  # noqa: BLE001
            raise _BadField("source_png_base64",
                            f"cannot decode PNG: {exc}")
        if "identity_coeffs" in body:
            alpha = _vector(body, "identity_coeffs",
                            model.basis.identity_dim)
        else:
            alpha = np.zeros(model.basis.identity_dim)
        identity = IdentityParams(alpha)
        motion = _parse_motion(body["source_motion"]) \
            if "source_motion" in body else MotionParams.zero()
        initial_uv = model.source_uv(source, motion, identity)
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = Session(source, motion, identity,
                                           initial_uv)
        return {"session_id": session_id}

    @app.post("/session/{session_id}/reenact")
    def reenact(session_id: str, body: dict):
        session = get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content={"error": "unknown session"})
        motion = _parse_motion(body)
        start = time.monotonic()
        with session.lock:
            window = assemble_window([motion], 0, model.config.half_width)
            with torch.no_grad():
                out = model.reenact(session.source, session.source_motion,
                                    session.identity, window,
                                    initial_uv=session.initial_uv)
            session.n_requests += 1
        latency_ms = (time.monotonic() - start) * 1000.0
        return {"frame_png_base64": _encode_png(out["final"]),
                "latency_ms": latency_ms}

    @app.post("/session/{session_id}/audio")
    def audio_to_motion(session_id: str, body: dict):
        session = get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content={"error": "unknown session"})
        wav = body.get("wav_base64")
        if wav is None:
            raise _BadField("wav_base64", "missing field 'wav_base64'")
        data = _b64_bytes(wav, "wav_base64")
        if audio_regressor is None:
            return JSONResponse(
                status_code=409,
                content={"error": "no audio regressor loaded"})
        try:
            from scipy.io import wavfile

            from .audio import pcm_to_float
            rate, samples = wavfile.read(io.BytesIO(data))
        except Exception as exc:  # noqa: BLE001
            raise _BadField("wav_base64", f"cannot decode WAV: {exc}")
        waveform = Waveform(pcm_to_float(samples), int(rate))
        feats = extract_mfcc(waveform, MfccConfig())
        aligned = interpolate_to_fps(feats, waveform, fps=fps)
        rows = predict_motion_sequence(aligned, audio_regressor)
        sequence = [{"exp": r[:64].tolist(), "angle": r[64:67].tolist(),
                     "trans": r[67:].tolist()} for r in rows]
        return {"motion_sequence": sequence}

    @app.get("/session/{session_id}")
    def session_state(session_id: str):
        session = get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content={"error": "unknown session"})
        return {"session_id": session_id,
                "resolution": model.config.resolution,
                "uv_cached": session.initial_uv is not None,
                "n_requests": session.n_requests,
                "created_at": session.created_at}

    @app.delete("/session/{session_id}")
    def delete_session(session_id: str):
        with registry_lock:
            if session_id not in sessions:
                return JSONResponse(status_code=404,
                                    content={"error": "unknown session"})
            del sessions[session_id]
        return {"deleted": session_id}

    return app
