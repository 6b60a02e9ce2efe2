"""Composite generation requests: compiled constraints + semantic text.

Constraints travel both structurally (consumed by the mock backend and the
validator) and as a rendered sentence (consumed by text-only remote
backends). Request ids are content-derived, so identical inputs always name
the identical request.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .compiler import ConstraintSet, RelationKind, parse_constraints, serialize_constraints
from .errors import (
    InvalidConstraintSet,
    MalformedConstraintSet,
    MalformedRequest,
    MissingSemanticPrompt,
)
from .jsoncanon import canonical_dumps, canonical_loads

MAX_PROMPT_CHARS = 2000
DEFAULT_TARGET_FACE_COUNT = 20000
REQUEST_ID_HEX_LEN = 16


@dataclass(frozen=True)
class SemanticPrompt:
    text: str
    style_tags: tuple[str, ...] = ()
    negative_text: str | None = None

    def validate(self) -> None:
        if not isinstance(self.text, str) or not self.text.strip():
            raise MissingSemanticPrompt("prompt text is empty")
        if len(self.text) > MAX_PROMPT_CHARS:
            raise MissingSemanticPrompt(f"prompt text over {MAX_PROMPT_CHARS} chars")
        if not all(isinstance(t, str) for t in self.style_tags):
            raise MalformedRequest("style_tags must be strings")
        if self.negative_text is not None and not isinstance(self.negative_text, str):
            raise MalformedRequest("negative_text must be a string")

    def to_dict(self) -> dict:
        out: dict = {"style_tags": list(self.style_tags), "text": self.text}
        if self.negative_text is not None:
            out["negative_text"] = self.negative_text
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SemanticPrompt":
        if not isinstance(data, dict):
            raise MalformedRequest("semantic_prompt must be an object")
        extra = set(data) - {"negative_text", "style_tags", "text"}
        if extra:
            raise MalformedRequest(f"unknown semantic_prompt fields: {sorted(extra)}")
        try:
            prompt = cls(
                text=data["text"],
                style_tags=tuple(data.get("style_tags", [])),
                negative_text=data.get("negative_text"),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedRequest(f"bad semantic_prompt: {exc}") from exc
        prompt.validate()
        return prompt


@dataclass(frozen=True)
class GenerationRequest:
    request_id: str
    constraint_set: ConstraintSet
    semantic_prompt: SemanticPrompt
    seed: int
    target_face_count: int = DEFAULT_TARGET_FACE_COUNT
    backend_hints: tuple[tuple[str, str], ...] = ()

    def hints_dict(self) -> dict[str, str]:
        return dict(self.backend_hints)

    def to_dict(self, *, include_request_id: bool = True) -> dict:
        out = {
            "backend_hints": {k: v for k, v in sorted(self.backend_hints)},
            "constraint_set": self.constraint_set.to_dict(),
            "seed": self.seed,
            "semantic_prompt": self.semantic_prompt.to_dict(),
            "target_face_count": self.target_face_count,
        }
        if include_request_id:
            out["request_id"] = self.request_id
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationRequest":
        if not isinstance(data, dict):
            raise MalformedRequest("request must be an object")
        expected = {"backend_hints", "constraint_set", "request_id", "seed",
                    "semantic_prompt", "target_face_count"}
        if set(data) != expected:
            raise MalformedRequest(
                f"bad request keys (missing={sorted(expected - set(data))}, "
                f"unknown={sorted(set(data) - expected)})")
        seed = data["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not (0 <= seed < 2 ** 64):
            raise MalformedRequest(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        faces = data["target_face_count"]
        if isinstance(faces, bool) or not isinstance(faces, int) or faces <= 0:
            raise MalformedRequest(f"target_face_count must be a positive integer, got {faces!r}")
        hints = data["backend_hints"]
        if not isinstance(hints, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in hints.items()):
            raise MalformedRequest("backend_hints must map strings to strings")
        try:
            cs = ConstraintSet.from_dict(data["constraint_set"])
        except MalformedConstraintSet as exc:
            raise MalformedRequest(f"bad constraint_set: {exc}") from exc
        req = cls(
            request_id=data["request_id"],
            constraint_set=cs,
            semantic_prompt=SemanticPrompt.from_dict(data["semantic_prompt"]),
            seed=seed,
            target_face_count=faces,
            backend_hints=tuple(sorted(hints.items())),
        )
        expected_id = _derive_request_id(req)
        if req.request_id != expected_id:
            raise MalformedRequest(
                f"request_id {req.request_id!r} does not match content ({expected_id!r})")
        return req


def _derive_request_id(req: GenerationRequest) -> str:
    payload = canonical_dumps(req.to_dict(include_request_id=False))
    return hashlib.sha256(payload).hexdigest()[:REQUEST_ID_HEX_LEN]


def assemble(cs: ConstraintSet, prompt: SemanticPrompt, seed: int, *,
             target_face_count: int = DEFAULT_TARGET_FACE_COUNT,
             backend_hints: dict[str, str] | None = None) -> GenerationRequest:
    """Build a reproducible generation request with a content-derived id."""
    prompt.validate()
    try:
        parse_constraints(serialize_constraints(cs))
    except MalformedConstraintSet as exc:
        raise InvalidConstraintSet(str(exc)) from exc
    if isinstance(seed, bool) or not isinstance(seed, int) or not (0 <= seed < 2 ** 64):
        raise MalformedRequest(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    req = GenerationRequest(
        request_id="",
        constraint_set=cs,
        semantic_prompt=prompt,
        seed=seed,
        target_face_count=target_face_count,
        backend_hints=tuple(sorted((backend_hints or {}).items())),
    )
    from dataclasses import replace

    return replace(req, request_id=_derive_request_id(req))


def render_constraint_text(cs: ConstraintSet) -> str:
    """Flatten the constraint set into one deterministic sentence (for
    backends that accept only language). Lengths in meters, 2 decimals."""
    ex, ey, ez = cs.global_box.extents()
    parts = [f"overall bounds {ex:.2f} x {ey:.2f} x {ez:.2f} m"]
    aspects = {p.component_id: p.aspect for p in cs.proportions}
    for comp in cs.components:
        a = aspects[comp.component_id]
        parts.append(
            f"component {comp.component_id} ({comp.hardness.value}) "
            f"aspect {a[0]:.2f}:{a[1]:.2f}:{a[2]:.2f}")
    for rel in cs.relations:
        if rel.kind == RelationKind.ABOVE:
            parts.append(f"component {rel.subject} above component {rel.object}")
        elif rel.kind == RelationKind.CONTAINS:
            parts.append(f"component {rel.subject} contains component {rel.object}")
        else:
            parts.append(f"component {rel.subject} adjacent to component {rel.object}")
    return "; ".join(parts)


def compose_backend_prompt(req: GenerationRequest) -> str:
    """Prompt string submitted to text-only backends: semantic intent plus
    the rendered spatial constraints."""
    prompt = req.semantic_prompt
    parts = [prompt.text.strip()]
    if prompt.style_tags:
        parts.append("style: " + ", ".join(prompt.style_tags))
    parts.append(render_constraint_text(req.constraint_set))
    if prompt.negative_text:
        parts.append("avoid: " + prompt.negative_text.strip())
    return "; ".join(parts)


def canonical_request_bytes(req: GenerationRequest) -> bytes:
    return canonical_dumps(req.to_dict())


def parse_request(data: bytes | str) -> GenerationRequest:
    try:
        obj = canonical_loads(data)
    except ValueError as exc:
        raise MalformedRequest(f"not valid JSON: {exc}") from exc
    return GenerationRequest.from_dict(obj)
