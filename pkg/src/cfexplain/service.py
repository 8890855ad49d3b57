"""JSON HTTP service exposing the explanation engine and the teaching quiz.

All responses are pure functions of (model, dataset, request, seed) except
quiz sessions, whose mutable state is isolated per session token.
"""

from __future__ import annotations

import base64
import threading
import uuid
import zlib
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .attribution import heatmap_to_bytes
from .explainer import (
    cell_to_pixel_region,
    counterfactual_explain,
    mask_rle,
    pick_counter_image,
)
from .evalharness import random_cell_mask
from .micronet.model import ModelBundle
from .synthgen import DatasetBundle

QUIZ_PRE_ITEMS = 20
QUIZ_LEARN_ITEMS = 10
QUIZ_POST_ITEMS = 20
QUIZ_MODES = ("counterfactual", "random", "full")


class ExplainRequest(BaseModel):
    image_id: str
    counter_class: str | int
    score_kind: str = "easiness"
    area: float = Field(default=1 / 64, gt=0.0, le=1.0)


class QuizStartRequest(BaseModel):
    mode: str = "counterfactual"
    seed: int | None = None
    classes: list[str] | None = None


class QuizAnswerRequest(BaseModel):
    token: str
    answer: str


@dataclass
class QuizSession:
    token: str
    mode: str
    classes: tuple[int, int]
    items: dict[str, list[str]]          # phase -> image ids
    phase: str = "pre"
    index: int = 0
    answers: dict[str, list[bool]] = field(default_factory=lambda: {"pre": [], "learn": [], "post": []})
    seed: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def image_payload(bundle: DatasetBundle, image_id: str) -> dict:
    img = bundle.images[image_id]                       # (3, H, W) in [0, 1]
    rgb = (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    h, w = rgb.shape[1:]
    return {"id": image_id, "width": w, "height": h,
            "rgb_base64": _b64(rgb.transpose(1, 2, 0).tobytes())}


def create_app(model: ModelBundle, bundle: DatasetBundle, seed: int = 0,
               weak_model: ModelBundle | None = None,
               static_dir: str | None = None,
               quiz_classes: tuple[int, int] | None = None) -> FastAPI:
    app = FastAPI(title="cfexplain")
    classes = bundle.config.classes
    sessions: dict[str, QuizSession] = {}
    sessions_lock = threading.Lock()

    def resolve_class(value: str | int) -> int:
        if isinstance(value, int):
            if 0 <= value < len(classes):
                return value
            raise HTTPException(404, f"class index {value} out of range")
        if value in classes:
            return classes.index(value)
        raise HTTPException(404, f"unknown class {value!r}")

    def require_image(image_id: str) -> np.ndarray:
        if image_id not in bundle.images:
            raise HTTPException(404, f"unknown image id {image_id!r}")
        return bundle.images[image_id]

    def mask_payload(mask_grid: np.ndarray, threshold: float, degenerate, image_size: int) -> dict:
        pixel = cell_to_pixel_region(mask_grid, (image_size, image_size))
        return {
            "grid_shape": list(mask_grid.shape),
            "mask_rle": mask_rle(mask_grid),
            "pixel_mask_rle": mask_rle(pixel),
            "area_fraction": float(mask_grid.sum()) / mask_grid.size,
            "threshold": threshold,
            "degenerate_factors": list(degenerate),
        }

    def heatmap_payload(grid: np.ndarray) -> dict:
        h, w = grid.shape
        return {"width": w, "height": h, "gray_base64": _b64(heatmap_to_bytes(grid))}

    def explain_payload(image_id: str, counter: int, score_kind: str, area: float,
                        predicted_override: int | None = None) -> dict:
        x = require_image(image_id)
        state = model.forward(x)
        predicted = int(np.argmax(state.posteriors[0]))
        y_star = predicted if predicted_override is None else predicted_override
        if counter == y_star:
            raise HTTPException(400, "counter class equals the predicted class")
        candidates = bundle.ids_of_class("test", counter)
        if not candidates:
            raise HTTPException(404, f"no test images of class {classes[counter]!r}")
        counter_id = pick_counter_image(candidates, seed, image_id, counter)
        pair = counterfactual_explain(model, x, bundle.images[counter_id], y_star,
                                      counter, score_kind=score_kind, area=area,
                                      query_id=image_id, counter_id=counter_id)
        h = state.posteriors[0]
        size = bundle.config.image_size
        return {
            "prediction": predicted,
            "predicted_class": classes[predicted],
            "explained_class": classes[y_star],
            "counter_class": classes[counter],
            "confidence": {
                "softmax": float(h.max()),
                "certainty": float(1.0 - (-(h[h > 0] * np.log(h[h > 0])).sum()) / np.log(len(h))),
                "easiness": float(1.0 - state.hardness[0]),
            },
            "score_kind": score_kind,
            "area": area,
            "query": dict(mask_payload(pair.query.grid, pair.query.threshold,
                                       pair.query_map.degenerate_factors, size),
                          heatmap=heatmap_payload(pair.query_map.grid)),
            "counter_image_id": counter_id,
            "counter": dict(mask_payload(pair.counter.grid, pair.counter.threshold,
                                         pair.counter_map.degenerate_factors, size),
                            heatmap=heatmap_payload(pair.counter_map.grid)),
            "degenerate": pair.degenerate,
        }

    # ---- explorer endpoints -------------------------------------------

    @app.get("/api/classes")
    def api_classes():
        return {"classes": classes, "count": len(classes)}

    @app.get("/api/images")
    def api_images(class_name: str = Query(alias="class")):
        idx = resolve_class(class_name)
        return {"class": classes[idx], "images": bundle.ids_of_class("test", idx)}

    @app.get("/api/image/{image_id}")
    def api_image(image_id: str):
        require_image(image_id)
        return image_payload(bundle, image_id)

    @app.post("/api/explain")
    def api_explain(req: ExplainRequest):
        counter = resolve_class(req.counter_class)
        if req.score_kind not in ("softmax", "certainty", "easiness", "constant"):
            raise HTTPException(400, f"unknown score kind {req.score_kind!r}")
        return explain_payload(req.image_id, counter, req.score_kind, req.area)

    # ---- quiz endpoints --------------------------------------------------

    def quiz_item(session: QuizSession) -> dict:
        image_id = session.items[session.phase][session.index]
        names = [classes[c] for c in session.classes]
        choices = names + (["dont_know"] if session.phase == "pre" else [])
        return {
            "phase": session.phase,
            "index": session.index,
            "total": len(session.items[session.phase]),
            "image": image_payload(bundle, image_id),
            "choices": choices,
        }

    def learning_feedback(session: QuizSession, image_id: str, chosen: int) -> dict:
        true_class = bundle.label_of(image_id)
        counter = chosen if chosen != true_class else _other(session.classes, true_class)
        payload = explain_payload(image_id, counter, "easiness", 4 / 64,
                                  predicted_override=true_class)
        if session.mode == "counterfactual":
            return payload
        size = bundle.config.image_size
        grid_shape = tuple(payload["query"]["grid_shape"])
        if session.mode == "full":
            full = np.ones(grid_shape, dtype=bool)
            masks = (full, full)
        else:  # random highlighted regions, not revealed to the learner
            rng = np.random.default_rng([session.seed, zlib.crc32(image_id.encode()), 23])
            masks = (random_cell_mask(grid_shape, payload["area"], rng),
                     random_cell_mask(grid_shape, payload["area"], rng))
        for side, mask in zip(("query", "counter"), masks):
            payload[side]["mask_rle"] = mask_rle(mask)
            payload[side]["pixel_mask_rle"] = mask_rle(
                cell_to_pixel_region(mask, (size, size)))
            payload[side]["area_fraction"] = float(mask.sum()) / mask.size
        return payload

    @app.post("/api/quiz/start")
    def api_quiz_start(req: QuizStartRequest):
        if req.mode not in QUIZ_MODES:
            raise HTTPException(400, f"unknown quiz mode {req.mode!r}")
        if req.classes is not None:
            if len(req.classes) != 2:
                raise HTTPException(400, "quiz needs exactly 2 classes")
            pair = (resolve_class(req.classes[0]), resolve_class(req.classes[1]))
            if pair[0] == pair[1]:
                raise HTTPException(400, "quiz classes must differ")
        else:
            pair = quiz_classes or (0, 1)
        session_seed = req.seed if req.seed is not None else seed
        items = _draw_quiz_items(bundle, pair, session_seed)
        token = uuid.uuid4().hex
        session = QuizSession(token=token, mode=req.mode, classes=pair, items=items,
                              seed=session_seed)
        with sessions_lock:
            sessions[token] = session
        return {
            "token": token,
            "mode": req.mode,
            "classes": [classes[c] for c in pair],
            "counts": {"pre": QUIZ_PRE_ITEMS, "learn": QUIZ_LEARN_ITEMS,
                       "post": QUIZ_POST_ITEMS},
            "item": quiz_item(session),
        }

    def get_session(token: str) -> QuizSession:
        with sessions_lock:
            session = sessions.get(token)
        if session is None:
            raise HTTPException(404, f"unknown quiz token {token!r}")
        return session

    @app.post("/api/quiz/answer")
    def api_quiz_answer(req: QuizAnswerRequest):
        session = get_session(req.token)
        with session.lock:
            if session.phase == "done":
                raise HTTPException(409, "quiz already finished")
            names = [classes[c] for c in session.classes]
            allowed = names + (["dont_know"] if session.phase == "pre" else [])
            if req.answer not in allowed:
                raise HTTPException(400, f"answer must be one of {allowed}")
            image_id = session.items[session.phase][session.index]
            true_class = bundle.label_of(image_id)
            correct = req.answer != "dont_know" and resolve_class(req.answer) == true_class
            session.answers[session.phase].append(correct)
            response = {"phase": session.phase, "index": session.index, "recorded": True}
            if session.phase == "learn":
                response["correct"] = correct
                response["true_class"] = classes[true_class]
                chosen = session.classes[0] if req.answer == "dont_know" else resolve_class(req.answer)
                response["explanation"] = learning_feedback(session, image_id, chosen)
            session.index += 1
            if session.index >= len(session.items[session.phase]):
                session.phase = {"pre": "learn", "learn": "post", "post": "done"}[session.phase]
                session.index = 0
            response["next"] = (quiz_item(session) if session.phase != "done"
                                else {"phase": "done"})
            return response

    @app.get("/api/quiz/summary")
    def api_quiz_summary(token: str):
        session = get_session(token)
        with session.lock:
            def acc(phase: str, total: int):
                answered = session.answers[phase]
                return {
                    "answered": len(answered),
                    "correct": int(sum(answered)),
                    "accuracy": (sum(answered) / total) if len(answered) == total else None,
                }

            return {
                "token": token,
                "mode": session.mode,
                "phase": session.phase,
                "classes": [classes[c] for c in session.classes],
                "pre": acc("pre", QUIZ_PRE_ITEMS),
                "learn": acc("learn", QUIZ_LEARN_ITEMS),
                "post": acc("post", QUIZ_POST_ITEMS),
            }

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def _other(pair: tuple[int, int], cls: int) -> int:
    return pair[1] if cls == pair[0] else pair[0]


def _draw_quiz_items(bundle: DatasetBundle, pair: tuple[int, int], seed: int) -> dict:
    """Disjoint seeded draws for the three phases, balanced across the pair."""
    rng = np.random.default_rng([seed, pair[0], pair[1], 97])
    pools = {c: list(bundle.ids_of_class("test", c)) for c in pair}
    need = (QUIZ_PRE_ITEMS + QUIZ_LEARN_ITEMS + QUIZ_POST_ITEMS) // 2
    for c, pool in pools.items():
        if len(pool) < need:
            raise HTTPException(400, f"not enough test images of class {c} for a quiz "
                                     f"(need {need}, have {len(pool)})")
    picks = {c: [pools[c][i] for i in rng.permutation(len(pools[c]))[:need]] for c in pair}
    items = {}
    offset = {c: 0 for c in pair}
    for phase, count in (("pre", QUIZ_PRE_ITEMS), ("learn", QUIZ_LEARN_ITEMS),
                         ("post", QUIZ_POST_ITEMS)):
        half = count // 2
        chosen = []
        for c in pair:
            chosen.extend(picks[c][offset[c]:offset[c] + half])
            offset[c] += half
        order = rng.permutation(len(chosen))
        items[phase] = [chosen[i] for i in order]
    return items
