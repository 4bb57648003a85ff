"""Optional remote planner speaking a chat-completion wire shape.

The endpoint receives the output JSON schema in a system message and is
expected to reply with a fenced JSON block. Every reply is validated
before anything flows downstream; on failure the deterministic rule
parser / layout reasoner take over when fallback is enabled.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field

import requests

from .errors import PlannerTimeout, SchemaViolation, TransportFailure
from .graph import MotionGraph, validate_graph
from .layout import BoundingBox, SceneLayout, Track, plan_layout
from .lexicon import Lexicon, default_lexicon
from .parser import parse_prompt

logger = logging.getLogger(__name__)

GRAPH_SCHEMA_PROMPT = """\
You convert a video prompt into a motion graph. Reply with a single fenced
JSON block matching this schema:
{"nodes":[{"id":int,"noun":str,"attributes":[str],
           "category":"motionless|rigid|nonrigid",
           "hint":{"speed":"slow|medium|fast",
                   "oscillation":"none|sway|pulse|bob",
                   "direction":"left|right|up|down"}}],
 "edges":[{"src":int,"dst":int,"kind":"spatial|dynamic","phrase":str}]}
"""

LAYOUT_SCHEMA_PROMPT = """\
You plan per-frame bounding boxes for instances in a motion graph. Reply
with a single fenced JSON block matching this schema:
{"frames":int,"tracks":[{"id":int,"category":"motionless|rigid|nonrigid",
 "boxes":[[x_min,y_min,x_max,y_max], ...]}]}
All coordinates normalized to [0,1]; exactly `frames` boxes per track.
"""

MIN_EXTENT = 1e-3


@dataclass(frozen=True)
class PlannerEndpointConfig:
    base_url: str
    api_key: str = ""
    model_name: str = "default"
    timeout: float = 30.0
    max_retries: int = 2
    fallback_enabled: bool = True

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "PlannerEndpointConfig":
        return cls(
            base_url=overrides.pop("base_url", os.environ.get("PLANNER_BASE_URL", "")),
            api_key=overrides.pop("api_key", os.environ.get("PLANNER_API_KEY", "")),
            model_name=overrides.pop(
                "model_name", os.environ.get("PLANNER_MODEL", "default")),
            **overrides,
        )


def _default_transport(url: str, headers: dict, body: dict,
                       timeout: float) -> tuple[int, str]:
    try:
        resp = requests.post(url, headers=headers, json=body, timeout=timeout)
    except requests.Timeout as exc:
        raise PlannerTimeout(str(exc)) from exc
    except requests.RequestException as exc:
        raise TransportFailure(str(exc)) from exc
    return resp.status_code, resp.text


def extract_json_block(content: str) -> dict:
    """First fenced JSON block, or the whole content if it parses."""
    fenced = re.search(r"```(?:json)?\s*(.*?)```", content, re.DOTALL)
    candidate = fenced.group(1) if fenced else content
    try:
        parsed = json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"response is not valid JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise SchemaViolation("response JSON is not an object")
    return parsed


def _chat(prompt: str, system: str, config: PlannerEndpointConfig,
          transport) -> dict:
    url = config.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    body = {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": prompt},
        ],
    }
    logger.debug("planner request to %s: %s", url,
                 json.dumps(body)[:2000])
    last_error: Exception = TransportFailure("no attempt made")
    for attempt in range(config.max_retries + 1):
        try:
            status, text = transport(url, headers, body, config.timeout)
            logger.debug("planner response (attempt %d, status %d): %s",
                         attempt, status, text[:2000])
            if status != 200:
                raise TransportFailure(f"endpoint returned HTTP {status}")
            payload = json.loads(text)
            content = payload["choices"][0]["message"]["content"]
            return extract_json_block(content)
        except (PlannerTimeout, TransportFailure, SchemaViolation,
                json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            last_error = exc if isinstance(exc, Exception) else TransportFailure(str(exc))
            logger.debug("planner attempt %d failed: %s", attempt, exc)
    if isinstance(last_error, (PlannerTimeout, TransportFailure, SchemaViolation)):
        raise last_error
    raise SchemaViolation(f"malformed endpoint response: {last_error}")


@dataclass
class GraphResult:
    graph: MotionGraph
    fallback_used: bool = False


@dataclass
class LayoutResult:
    layout: SceneLayout
    fallback_used: bool = False
    repairs: list[str] = field(default_factory=list)


def request_graph(prompt: str, config: PlannerEndpointConfig,
                  lexicon: Lexicon | None = None,
                  transport=_default_transport) -> GraphResult:
    """Ask the endpoint for a motion graph; fall back to the rule parser."""
    try:
        parsed = _chat(prompt, GRAPH_SCHEMA_PROMPT, config, transport)
        try:
            graph = MotionGraph.from_json(parsed)
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"graph JSON violates schema: {exc}") from exc
        report = validate_graph(graph)
        if report:
            raise SchemaViolation("; ".join(report))
        graph.source_prompt = prompt
        return GraphResult(graph=graph, fallback_used=False)
    except (PlannerTimeout, TransportFailure, SchemaViolation) as exc:
        if not config.fallback_enabled:
            raise
        logger.warning("planner failed (%s); falling back to rule parser", exc)
        lex = lexicon if lexicon is not None else default_lexicon()
        return GraphResult(graph=parse_prompt(prompt, lex), fallback_used=True)


def _repair_box(values: list[float], repairs: list[str],
                where: str) -> BoundingBox:
    x0, y0, x1, y1 = (float(v) for v in values)
    fixed = False
    if x1 < x0:
        x0, x1 = x1, x0
        fixed = True
    if y1 < y0:
        y0, y1 = y1, y0
        fixed = True
    clamped = [min(max(v, 0.0), 1.0) for v in (x0, y0, x1, y1)]
    if clamped != [x0, y0, x1, y1]:
        fixed = True
    x0, y0, x1, y1 = clamped
    if x1 - x0 < MIN_EXTENT:
        x1 = min(1.0, x0 + MIN_EXTENT)
        x0 = x1 - MIN_EXTENT
        fixed = True
    if y1 - y0 < MIN_EXTENT:
        y1 = min(1.0, y0 + MIN_EXTENT)
        y0 = y1 - MIN_EXTENT
        fixed = True
    if fixed:
        repairs.append(f"repaired box at {where}")
        logger.warning("repaired invalid box at %s", where)
    return BoundingBox(x0, y0, x1, y1)


def request_layout(graph: MotionGraph, frames: int,
                   config: PlannerEndpointConfig,
                   transport=_default_transport) -> LayoutResult:
    """Ask the endpoint for a layout; clamp invalid boxes; fall back to
    the deterministic layout reasoner on failure."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    report = validate_graph(graph)
    if report:
        raise ValueError("invalid graph: " + "; ".join(report))
    prompt = json.dumps(
        {"graph": graph.to_json(), "frames": frames}, sort_keys=True)
    try:
        parsed = _chat(prompt, LAYOUT_SCHEMA_PROMPT, config, transport)
        repairs: list[str] = []
        try:
            if int(parsed["frames"]) != frames:
                raise SchemaViolation(
                    f"endpoint planned {parsed['frames']} frames, wanted {frames}")
            tracks = []
            for t in parsed["tracks"]:
                boxes = [
                    _repair_box(b, repairs, f"track {t['id']} frame {i}")
                    for i, b in enumerate(t["boxes"])
                ]
                tracks.append(Track(
                    instance_id=int(t["id"]),
                    category=graph.node_by_id(int(t["id"])).category,
                    boxes=boxes))
            layout = SceneLayout(frames=frames, tracks=tracks)
            layout.validate()
        except SchemaViolation:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"layout JSON violates schema: {exc}") from exc
        return LayoutResult(layout=layout, fallback_used=False, repairs=repairs)
    except (PlannerTimeout, TransportFailure, SchemaViolation) as exc:
        if not config.fallback_enabled:
            raise
        logger.warning("planner failed (%s); falling back to layout reasoner", exc)
        return LayoutResult(layout=plan_layout(graph, frames), fallback_used=True)
