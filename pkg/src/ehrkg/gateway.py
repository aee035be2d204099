"""LLM gateway: executes prompts against an HTTP endpoint, a deterministic
mock oracle, or a replay cache, and validates strict-JSON responses.

Responses are cached by prompt content hash (write-then-rename, safe under
concurrent workers). Parsing never clamps: any schema or range violation is a
typed, machine-readable error so the pair can be re-queried.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .codes import CodeId
from .prompts import PromptText, extract_pair
from .relations import (TypePair, canonical_type_pair, pool_for, validate_relation,
                        RelationError)
from .synth import PlantedTruth

MODE_HTTP = "http"
MODE_MOCK = "mock"
MODE_REPLAY = "replay"


class GatewayError(RuntimeError):
    """Base class for gateway failures."""


class TransportError(GatewayError):
    """Retries exhausted, auth failure, or missing replay entry."""


class ParseError(GatewayError):
    """A response that cannot become a valid judgment. `code` identifies the
    failure class so callers can route re-queries."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class GatewayConfig:
    mode: str = MODE_MOCK
    endpoint: str = ""
    model: str = "mock"
    credentials_env: str = "EHRKG_API_KEY"
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_base: float = 0.5
    cache_dir: str = ".llm_cache"
    truth_path: str = ""               # mock mode: planted_truth.json

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.mode not in (MODE_HTTP, MODE_MOCK, MODE_REPLAY):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "GatewayConfig":
        return cls(**json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class RelationJudgment:
    code_a: CodeId
    code_b: CodeId
    relation: str
    head: CodeId
    tail: CodeId
    confidence: float
    reasoning: str
    raw_hash: str

    def to_dict(self) -> dict:
        return {
            "codeA": self.code_a.key(), "codeB": self.code_b.key(),
            "relation": self.relation,
            "triple": [self.head.key(), self.relation, self.tail.key()],
            "confidence": self.confidence, "reasoning": self.reasoning,
            "raw_hash": self.raw_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationJudgment":
        head, rel, tail = d["triple"]
        return cls(code_a=CodeId.from_key(d["codeA"]), code_b=CodeId.from_key(d["codeB"]),
                   relation=d["relation"], head=CodeId.from_key(head),
                   tail=CodeId.from_key(tail), confidence=d["confidence"],
                   reasoning=d["reasoning"], raw_hash=d.get("raw_hash", ""))


@dataclass(frozen=True)
class NodeDescription:
    code: CodeId
    text: str
    raw_hash: str

    def to_dict(self) -> dict:
        return {"code": self.code.key(), "text": self.text, "raw_hash": self.raw_hash}

    @classmethod
    def from_dict(cls, d: dict) -> "NodeDescription":
        return cls(code=CodeId.from_key(d["code"]), text=d["text"],
                   raw_hash=d.get("raw_hash", ""))


# --------------------------------------------------------------------------
# Cache
# --------------------------------------------------------------------------

def _cache_path(cache_dir: str | Path, content_hash: str) -> Path:
    return Path(cache_dir) / content_hash[:2] / f"{content_hash}.json"


def cache_get(cache_dir: str | Path, content_hash: str) -> str | None:
    path = _cache_path(cache_dir, content_hash)
    if not path.exists():
        return None
    return json.loads(path.read_text())["response"]


def cache_put(cache_dir: str | Path, content_hash: str, response: str) -> None:
    path = _cache_path(cache_dir, content_hash)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump({"hash": content_hash, "response": response}, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# Transport
# --------------------------------------------------------------------------

_TRANSIENT_STATUS = {408, 429, 500, 502, 503, 504}


def _http_request(prompt: PromptText, cfg: GatewayConfig) -> str:
    import requests

    token = os.environ.get(cfg.credentials_env)
    if not token:
        raise TransportError(
            f"credential env var {cfg.credentials_env} is not set")
    payload = {"model": cfg.model,
               "messages": [{"role": "user", "content": prompt.text}]}
    headers = {"Authorization": f"Bearer {token}"}
    last_err = None
    for attempt in range(cfg.max_attempts):
        if attempt:
            time.sleep(cfg.backoff_base * (2 ** (attempt - 1)))
        try:
            resp = requests.post(cfg.endpoint, json=payload, headers=headers, timeout=60)
        except requests.RequestException as e:
            last_err = str(e)
            continue
        if resp.status_code in (401, 403):
            raise TransportError(f"authentication failed ({resp.status_code})")
        if resp.status_code in _TRANSIENT_STATUS:
            last_err = f"HTTP {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as e:
            raise TransportError(f"unexpected completion payload: {e}")
    raise TransportError(f"retries exhausted ({cfg.max_attempts} attempts): {last_err}")


_NODE_PROMPT_RE = re.compile(r"^code: (\S+) \| name: ([^|]+?) \| category: (\S+)$",
                             re.MULTILINE)


def mock_oracle(prompt: PromptText, truth: PlantedTruth) -> str:
    """Deterministic test double: answers from the planted ground truth.

    Planted pairs get their rule's relation at confidence 0.9, oriented
    src -> tgt; everything else gets no_significant_relation at 0.8. Node
    prompts get a fixed synthetic description."""
    node_m = _NODE_PROMPT_RE.search(prompt.text)
    if node_m:
        key, name, category = node_m.groups()
        return (f"{name.strip()} ({key}) is a synthetic {category} concept used in "
                f"benchmark cohorts; it stands in for a clinically described code.")
    key_a, key_b = extract_pair(prompt.text)
    a, b = CodeId.from_key(key_a), CodeId.from_key(key_b)
    rule = truth.rule_for_pair(a, b)
    if rule is not None:
        payload = {
            "relation": rule.relation,
            "triple": [rule.src.key(), rule.relation, rule.tgt.key()],
            "confidence": 0.9,
            "reasoning": (
                f"The cohort statistics show a strong {rule.channel} association "
                f"between {rule.src.key()} and {rule.tgt.key()}, consistent with "
                f"a {rule.relation} relationship in routine care."),
        }
    else:
        payload = {
            "relation": "no_significant_relation",
            "triple": [key_a, "no_significant_relation", key_b],
            "confidence": 0.8,
            "reasoning": (
                f"No clinical prior links {key_a} and {key_b}; the observed "
                f"association is weak and best explained by chance co-occurrence."),
        }
    return json.dumps(payload)


@dataclass
class Gateway:
    cfg: GatewayConfig
    _truth: PlantedTruth | None = field(default=None, repr=False)

    def _mock_truth(self) -> PlantedTruth:
        if self._truth is None:
            if not self.cfg.truth_path:
                raise TransportError("mock mode requires truth_path")
            self._truth = PlantedTruth.load(self.cfg.truth_path)
        return self._truth

    def complete(self, prompt: PromptText) -> str:
        """Cache-first execution of one prompt."""
        cached = cache_get(self.cfg.cache_dir, prompt.content_hash)
        if cached is not None:
            return cached
        if self.cfg.mode == MODE_REPLAY:
            raise TransportError(f"no cached response for {prompt.content_hash}")
        if self.cfg.mode == MODE_MOCK:
            response = mock_oracle(prompt, self._mock_truth())
        else:
            response = _http_request(prompt, self.cfg)
        cache_put(self.cfg.cache_dir, prompt.content_hash, response)
        return response

    def complete_many(self, prompts: list[PromptText]) -> list[str]:
        """Concurrent execution bounded by max_in_flight; order preserved."""
        with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
            return list(pool.map(self.complete, prompts))


# --------------------------------------------------------------------------
# Response parsing
# --------------------------------------------------------------------------

_JSON_OBJ_RE = re.compile(r"\{.*\}", re.DOTALL)


def _first_json_object(raw: str) -> dict:
    m = _JSON_OBJ_RE.search(raw)
    if m is None:
        raise ParseError("no_json", "response contains no JSON object")
    decoder = json.JSONDecoder()
    try:
        obj, _ = decoder.raw_decode(raw, m.start())
    except json.JSONDecodeError as e:
        raise ParseError("malformed_json", f"cannot decode JSON object: {e}")
    if not isinstance(obj, dict):
        raise ParseError("not_object", "top-level JSON value is not an object")
    return obj


def parse_relation_response(raw: str, code_a: CodeId, code_b: CodeId,
                            raw_hash: str = "") -> RelationJudgment:
    """Validate a raw LLM response into a RelationJudgment.

    Every failure mode raises ParseError with a distinct code; no value is
    ever clamped into range."""
    obj = _first_json_object(raw)
    for key in ("relation", "triple", "confidence", "reasoning"):
        if key not in obj:
            raise ParseError("missing_key", f"response missing key {key!r}")

    relation = obj["relation"]
    if not isinstance(relation, str):
        raise ParseError("bad_relation_type", "relation must be a string")
    tp, _ = canonical_type_pair(code_a.type, code_b.type)
    try:
        validate_relation(tp, relation)
    except RelationError as e:
        raise ParseError("out_of_pool", str(e))

    triple = obj["triple"]
    if not isinstance(triple, (list, tuple)) or len(triple) != 3:
        raise ParseError("bad_triple", "triple must be [head, relation, tail]")
    head_s, triple_rel, tail_s = triple
    if triple_rel != relation:
        raise ParseError("triple_relation_mismatch",
                         "triple relation differs from the relation field")
    try:
        head = CodeId.from_key(str(head_s))
        tail = CodeId.from_key(str(tail_s))
    except ValueError as e:
        raise ParseError("bad_endpoint", f"unparsable triple endpoint: {e}")
    if {head, tail} != {code_a, code_b}:
        raise ParseError("endpoint_mismatch",
                         f"triple endpoints ({head.key()}, {tail.key()}) are not "
                         f"the queried pair ({code_a.key()}, {code_b.key()})")

    confidence = obj["confidence"]
    if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
        raise ParseError("bad_confidence_type", "confidence must be a number")
    if not 0.0 <= confidence <= 1.0:
        raise ParseError("confidence_range",
                         f"confidence {confidence} outside [0,1]")

    reasoning = obj["reasoning"]
    if not isinstance(reasoning, str):
        raise ParseError("bad_reasoning_type", "reasoning must be a string")

    return RelationJudgment(code_a=code_a, code_b=code_b, relation=relation,
                            head=head, tail=tail, confidence=float(confidence),
                            reasoning=reasoning, raw_hash=raw_hash)


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*?)\n?```\s*$", re.DOTALL)
_LABEL_RE = re.compile(r"^(description|answer|response)\s*:\s*", re.IGNORECASE)


def parse_description_response(raw: str) -> str:
    """Strip code fences and leading labels; reject empty results."""
    text = raw.strip()
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1).strip()
    text = _LABEL_RE.sub("", text).strip()
    if not text:
        raise ParseError("empty_description", "description is empty after trimming")
    return text


# --------------------------------------------------------------------------
# Inference pipelines (prompt files -> judgment / description files)
# --------------------------------------------------------------------------

def run_relation_inference(prompt_records: list[dict], gateway: Gateway,
                           quarantine_path: str | Path | None = None
                           ) -> tuple[list[RelationJudgment], list[dict]]:
    """Execute relation prompts and parse the responses.

    A failed parse is quarantined and re-queried once (bypassing the cache);
    a second failure yields a cannot_decide judgment at confidence 0 so the
    pipeline always terminates with a judgment per pair."""
    import hashlib

    prompts = [PromptText(text=r["text"], template_version=r.get("template_version", ""),
                          kind="relation") for r in prompt_records]
    responses = gateway.complete_many(prompts)

    judgments: list[RelationJudgment] = []
    quarantined: list[dict] = []
    for rec, prompt, raw in zip(prompt_records, prompts, responses):
        code_a = CodeId.from_key(rec["codeA"])
        code_b = CodeId.from_key(rec["codeB"])
        raw_hash = hashlib.sha256(raw.encode("utf-8")).hexdigest()
        try:
            judgments.append(parse_relation_response(raw, code_a, code_b, raw_hash))
            continue
        except ParseError as e:
            quarantined.append({"codeA": code_a.key(), "codeB": code_b.key(),
                                "error": e.code, "detail": str(e),
                                "prompt_hash": prompt.content_hash})
        # One automatic re-query with a fresh (non-cached) completion.
        try:
            if gateway.cfg.mode == MODE_MOCK:
                retry_raw = mock_oracle(prompt, gateway._mock_truth())
            elif gateway.cfg.mode == MODE_HTTP:
                retry_raw = _http_request(prompt, gateway.cfg)
            else:
                retry_raw = raw
            retry_hash = hashlib.sha256(retry_raw.encode("utf-8")).hexdigest()
            judgments.append(parse_relation_response(retry_raw, code_a, code_b, retry_hash))
            continue
        except ParseError:
            pass
        judgments.append(RelationJudgment(
            code_a=code_a, code_b=code_b, relation="cannot_decide",
            head=code_a, tail=code_b, confidence=0.0,
            reasoning="parse failure after re-query; marked as abstention",
            raw_hash=raw_hash))

    if quarantine_path is not None and quarantined:
        with Path(quarantine_path).open("w") as fh:
            for q in quarantined:
                fh.write(json.dumps(q) + "\n")
    return judgments, quarantined


def run_description_inference(prompt_records: list[dict], gateway: Gateway
                              ) -> list[NodeDescription]:
    import hashlib

    prompts = [PromptText(text=r["text"], template_version=r.get("template_version", ""),
                          kind="node") for r in prompt_records]
    responses = gateway.complete_many(prompts)
    out = []
    for rec, raw in zip(prompt_records, responses):
        text = parse_description_response(raw)
        out.append(NodeDescription(code=CodeId.from_key(rec["code"]), text=text,
                                   raw_hash=hashlib.sha256(raw.encode()).hexdigest()))
    return out
