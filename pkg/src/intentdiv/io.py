"""Line-delimited JSON readers and writers for priors, candidates and slates."""

from __future__ import annotations

import json
from pathlib import Path

from .core import (Candidate, IntentDistribution, IntentSpace, RankedSlate,
                   TraceStep)


class DataError(ValueError):
    """Malformed input data; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


CANDIDATE_KEYS = ("item_id", "quality", "base_value", "aligned", "novelty")


def candidate_record(c: Candidate) -> dict:
    return {"item_id": c.item_id, "quality": c.quality, "base_value": c.base_value,
            "aligned": sorted(c.aligned, key=str), "novelty": bool(c.novelty)}


def prior_record(d: IntentDistribution) -> dict:
    return {"intents": list(d.space.intents), "probs": d.probs.tolist()}


def _parse_candidate(rec, lineno):
    missing = [k for k in ("item_id", "quality", "base_value", "aligned") if k not in rec]
    if missing:
        raise DataError(f"candidate record missing {', '.join(missing)}", lineno)
    aligned = rec["aligned"]
    if not isinstance(aligned, list):
        raise DataError("'aligned' must be a list of intent ids", lineno)
    try:
        return Candidate(rec["item_id"], float(rec["quality"]), float(rec["base_value"]),
                         frozenset(aligned), bool(rec.get("novelty", False)))
    except (TypeError, ValueError) as exc:
        raise DataError(str(exc), lineno) from None


def read_records(path):
    """Yield ``(line_number, record)`` for every non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise DataError("record must be a JSON object", lineno)
            yield lineno, rec


def load_problem(path):
    """Read a prior record plus candidate records.

    Returns ``(prior, candidates)``. Trace fields written by
    :func:`write_slate` are ignored, so slate files load back as inputs.
    """
    prior, candidates = None, []
    for lineno, rec in read_records(path):
        if "intents" in rec:
            if prior is not None:
                raise DataError("more than one prior record", lineno)
            try:
                space = IntentSpace(rec["intents"])
                prior = IntentDistribution(space, rec.get("probs", []))
            except (TypeError, ValueError) as exc:
                raise DataError(f"bad prior: {exc}", lineno) from None
            prior_line = lineno
        else:
            candidates.append((lineno, _parse_candidate(rec, lineno)))
    if prior is None:
        raise DataError("no prior record (expected {\"intents\": [...], \"probs\": [...]})")
    if not candidates:
        raise DataError("no candidate records")
    seen = set()
    for lineno, c in candidates:
        if c.item_id in seen:
            raise DataError(f"duplicate item_id {c.item_id!r}", lineno)
        seen.add(c.item_id)
        try:
            c.check_space(prior.space)
        except ValueError as exc:
            raise DataError(f"{exc} (prior on line {prior_line})", lineno) from None
    return prior, [c for _, c in candidates]


def slate_records(prior, candidates, slate: RankedSlate):
    by_id = {c.item_id: c for c in candidates}
    yield prior_record(prior)
    for step in slate.trace:
        rec = candidate_record(by_id[step.item_id])
        rec.update(position=step.position, score=step.score,
                   expected_satisfaction=step.expected_satisfaction)
        if step.posterior is not None:
            rec["posterior"] = list(step.posterior)
        else:
            rec["delta"] = {str(k): v for k, v in step.delta.items()}
            rec["scale"] = step.scale
        yield rec


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def write_slate(path, prior, candidates, slate):
    write_jsonl(path, slate_records(prior, candidates, slate))


def read_slate(path) -> RankedSlate:
    order, trace = [], []
    for _, rec in read_records(path):
        if "position" not in rec:
            continue
        order.append(rec["item_id"])
        trace.append(TraceStep(rec["position"], rec["item_id"], rec["score"],
                               rec["expected_satisfaction"],
                               posterior=tuple(rec["posterior"]) if "posterior" in rec else None,
                               delta=rec.get("delta"), scale=rec.get("scale", 1.0)))
    return RankedSlate(order, trace)


def write_problem(path, prior, candidates):
    write_jsonl(Path(path), [prior_record(prior)] + [candidate_record(c) for c in candidates])
