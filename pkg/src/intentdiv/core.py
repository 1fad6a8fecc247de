"""Intent-aware greedy slate diversification.

Beliefs over intents are revised position by position under the assumption
that the user rejected every item placed above, and each position takes the
item maximising ``quality * expected_satisfaction ** gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Iterable, Sequence

import numpy as np

MAX_BASE_VALUE = 1.0 - 1e-9
NORM_TOL = 1e-9


class PosteriorMode(str, Enum):
    PAPER_LITERAL = "paper-literal"
    EXACT_BAYES = "exact-bayes"
    UNNORMALIZED = "unnormalized"


class TieBreak(str, Enum):
    LOWEST_ITEM_ID = "lowest-item-id"
    HIGHEST_QUALITY = "highest-quality"


class IntentSpace:
    """Ordered, duplicate-free collection of intent ids with dense indices."""

    def __init__(self, intents: Iterable[Hashable]):
        self.intents = tuple(intents)
        if not self.intents:
            raise ValueError("intent space must contain at least one intent")
        self._index = {v: i for i, v in enumerate(self.intents)}
        if len(self._index) != len(self.intents):
            raise ValueError("intent ids must be unique")

    def __len__(self):
        return len(self.intents)

    def __iter__(self):
        return iter(self.intents)

    def __contains__(self, v):
        return v in self._index

    def __eq__(self, other):
        return isinstance(other, IntentSpace) and self.intents == other.intents

    def __hash__(self):
        return hash(self.intents)

    def __repr__(self):
        if len(self) > 6:
            return f"IntentSpace(<{len(self)} intents>)"
        return f"IntentSpace({list(self.intents)!r})"

    def index(self, v) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise ValueError(f"unknown intent id {v!r}") from None

    def indices(self, vs: Iterable) -> np.ndarray:
        return np.array(sorted(self.index(v) for v in vs), dtype=np.int64)


class IntentDistribution:
    """Belief vector over an :class:`IntentSpace`.

    ``normalized`` marks distributions that sum to one; posteriors produced in
    the paper-literal and unnormalized modes are sub-normalized.
    """

    def __init__(self, space: IntentSpace, probs, normalized: bool = True):
        probs = np.array(probs, dtype=np.float64)
        if probs.shape != (len(space),):
            raise ValueError(
                f"expected {len(space)} probabilities, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        total = float(probs.sum())
        if normalized and abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"normalized distribution sums to {total!r}")
        if not normalized and total > 1.0 + NORM_TOL:
            raise ValueError(f"sub-normalized distribution sums to {total!r}")
        probs.setflags(write=False)
        self.space = space
        self.probs = probs
        self.normalized = normalized

    @classmethod
    def from_mapping(cls, mapping: dict, space: IntentSpace | None = None):
        space = space or IntentSpace(mapping)
        return cls(space, [mapping.get(v, 0.0) for v in space])

    @classmethod
    def uniform(cls, space: IntentSpace):
        return cls(space, np.full(len(space), 1.0 / len(space)))

    def __getitem__(self, v) -> float:
        return float(self.probs[self.space.index(v)])

    def __len__(self):
        return len(self.space)

    def mass(self, intents: Iterable | None = None) -> float:
        if intents is None:
            return float(self.probs.sum())
        return float(self.probs[self.space.indices(intents)].sum())

    def as_dict(self) -> dict:
        return {v: float(p) for v, p in zip(self.space, self.probs)}

    def __repr__(self):
        tag = "" if self.normalized else ", subnormalized"
        return f"IntentDistribution({self.probs.tolist()!r}{tag})"


@dataclass(frozen=True)
class Candidate:
    item_id: Hashable
    quality: float
    base_value: float
    aligned: frozenset
    novelty: bool = False

    def __post_init__(self):
        object.__setattr__(self, "aligned", frozenset(self.aligned))
        if not self.aligned:
            raise ValueError(f"candidate {self.item_id!r} has an empty aligned set")
        if not (math.isfinite(self.quality) and self.quality >= 0.0):
            raise ValueError(f"candidate {self.item_id!r}: quality must be finite and >= 0")
        if not (0.0 <= self.base_value <= MAX_BASE_VALUE):
            raise ValueError(
                f"candidate {self.item_id!r}: base_value must lie in [0, 1 - 1e-9]")

    def check_space(self, space: IntentSpace):
        for v in self.aligned:
            if v not in space:
                raise ValueError(f"candidate {self.item_id!r} aligned to unknown intent {v!r}")


@dataclass(frozen=True)
class DiversifierConfig:
    gamma: float = 1.0
    posterior_mode: PosteriorMode = PosteriorMode.PAPER_LITERAL
    tie_break: TieBreak = TieBreak.LOWEST_ITEM_ID
    epsilon: float = 1e-12
    # beliefs with more intents than this are traced as sparse deltas
    dense_trace_limit: int = 64

    def __post_init__(self):
        object.__setattr__(self, "posterior_mode", PosteriorMode(self.posterior_mode))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be a positive finite number")
        if not (0.0 < self.epsilon < 1e-6):
            raise ValueError("epsilon must lie in (0, 1e-6)")


@dataclass(frozen=True)
class TraceStep:
    position: int
    item_id: Hashable
    score: float
    expected_satisfaction: float
    # dense posterior after placing the item, or None when traced sparsely
    posterior: tuple | None = None
    # sparse form: raw values of the touched intents; belief = scale * raw
    delta: dict | None = None
    scale: float = 1.0


@dataclass
class RankedSlate:
    order: list
    trace: list = field(default_factory=list)

    def __len__(self):
        return len(self.order)


def _id_key(item_id):
    """Total order on ids of mixed type: numbers first, then everything else by type and value."""
    if isinstance(item_id, (int, float)) and not isinstance(item_id, bool):
        return (0, "", item_id)
    return (1, type(item_id).__name__, item_id)


def _tie_key(c: Candidate, tie_break: TieBreak):
    if tie_break is TieBreak.HIGHEST_QUALITY:
        return (-c.quality, _id_key(c.item_id))
    return (_id_key(c.item_id),)


def intent_conditioned_value(c: Candidate, v, space: IntentSpace | None = None) -> float:
    """Probability that ``c`` is enjoyed by a user holding intent ``v``."""
    if space is not None and v not in space:
        raise ValueError(f"unknown intent id {v!r}")
    return c.base_value if v in c.aligned else 0.0


def expected_satisfaction(d: IntentDistribution, c: Candidate) -> float:
    c.check_space(d.space)
    return c.base_value * d.mass(c.aligned)


def _score(quality: float, m: float, gamma: float) -> float:
    # zero coverage scores zero for every gamma
    if m <= 0.0:
        return 0.0
    return quality * m ** gamma


def step_score(d: IntentDistribution, c: Candidate, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return _score(c.quality, expected_satisfaction(d, c), gamma)


def select_next(d: IntentDistribution, remaining: Iterable[Candidate],
                cfg: DiversifierConfig):
    remaining = sorted(remaining, key=lambda c: _tie_key(c, cfg.tie_break))
    if not remaining:
        raise ValueError("no candidates left to select from")
    best, best_score = None, -1.0
    for c in remaining:
        s = step_score(d, c, cfg.gamma)
        if s > best_score:
            best, best_score = c, s
    return best.item_id


def posterior_update(d: IntentDistribution, c: Candidate,
                     mode: PosteriorMode = PosteriorMode.PAPER_LITERAL,
                     epsilon: float = 1e-12) -> IntentDistribution:
    """Belief after assuming the user saw and rejected ``c``."""
    mode = PosteriorMode(mode)
    m = expected_satisfaction(d, c)
    idx = d.space.indices(c.aligned)
    p = d.probs.copy()
    denom = 1.0 - m
    if denom < epsilon:
        p[idx] = 0.0
        if mode is PosteriorMode.EXACT_BAYES:
            rest = p.sum()
            if rest > 0:
                p = p / rest
    elif mode is PosteriorMode.UNNORMALIZED:
        p[idx] = p[idx] * (1.0 - c.base_value)
    elif mode is PosteriorMode.PAPER_LITERAL:
        p[idx] = p[idx] * (1.0 - c.base_value) / denom
    else:
        # dividing by the remaining mass equals dividing by 1 - m for a
        # normalized belief, but does not amplify rounding drift over steps
        p[idx] = p[idx] * (1.0 - c.base_value)
        p = p / p.sum()
    # rounding can push exact-Bayes entries a hair past 1
    np.clip(p, 0.0, 1.0, out=p)
    normalized = mode is PosteriorMode.EXACT_BAYES and p.sum() > 0
    return IntentDistribution(d.space, p, normalized=normalized)


class LazyBelief:
    """Belief stored as raw per-intent values times one global scale.

    Every update touches only the aligned entries of the placed item, which
    keeps per-position cost independent of the size of the intent space.
    ``touched`` counts entry writes, ``scale_updates`` counts scale writes.
    """

    def __init__(self, prior: IntentDistribution, epsilon: float = 1e-12):
        self.space = prior.space
        self.raw = prior.probs.copy()
        self.scale = 1.0
        # sum of raw, kept incrementally for the exact-Bayes normalizer
        self.raw_total = float(self.raw.sum())
        self.epsilon = epsilon
        self.touched = 0
        self.scale_updates = 0

    def value(self, idx) -> np.ndarray:
        return self.scale * self.raw[idx]

    def aligned_mass(self, idx) -> float:
        return self.scale * float(self.raw[idx].sum())

    def materialize(self, mode=PosteriorMode.PAPER_LITERAL) -> IntentDistribution:
        p = np.clip(self.scale * self.raw, 0.0, 1.0)
        normalized = PosteriorMode(mode) is PosteriorMode.EXACT_BAYES and p.sum() > 0
        return IntentDistribution(self.space, p, normalized=normalized)

    def update(self, idx: np.ndarray, base_value: float, mode: PosteriorMode) -> float:
        """Apply one rejection update in place; returns the marginal satisfaction."""
        m = base_value * self.aligned_mass(idx)
        denom = 1.0 - m
        if denom < self.epsilon:
            self.raw[idx] = 0.0
            self.touched += len(idx)
            if mode is PosteriorMode.EXACT_BAYES:
                self.raw_total = float(self.raw.sum())
                if self.raw_total > 0:
                    self.scale = 1.0 / self.raw_total
                    self.scale_updates += 1
            return m
        if mode is PosteriorMode.UNNORMALIZED:
            self.raw[idx] *= 1.0 - base_value
        elif mode is PosteriorMode.PAPER_LITERAL:
            self.raw[idx] = self.raw[idx] * (1.0 - base_value) / denom
        else:
            old = float(self.raw[idx].sum())
            self.raw[idx] *= 1.0 - base_value
            if old > 0.5 * self.raw_total:
                # the subtraction below would cancel most digits; recount
                self.raw_total = float(self.raw.sum())
            else:
                self.raw_total += float(self.raw[idx].sum()) - old
            self.scale = 1.0 / self.raw_total
            self.scale_updates += 1
        self.touched += len(idx)
        return m


def sparse_posterior_update(state: LazyBelief, c: Candidate,
                            mode=PosteriorMode.PAPER_LITERAL) -> LazyBelief:
    """Update ``state`` in place for a rejected ``c`` and return it."""
    state.update(state.space.indices(c.aligned), c.base_value, PosteriorMode(mode))
    return state


def diversify(prior: IntentDistribution, candidates: Sequence[Candidate],
              cfg: DiversifierConfig | None = None, k: int | None = None) -> RankedSlate:
    """Greedy intent-diversified ordering of ``candidates``.

    Runs all positions by default; ``k`` stops after the first ``k``.
    """
    cfg = cfg or DiversifierConfig()
    if not prior.normalized:
        raise ValueError("prior must be a normalized distribution")
    if not candidates:
        raise ValueError("candidate list is empty")
    ids = [c.item_id for c in candidates]
    if len(set(ids)) != len(ids):
        raise ValueError("candidate item ids must be unique")
    space = prior.space
    for c in candidates:
        c.check_space(space)
    n = len(candidates)
    k = n if k is None else k
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")

    cands = sorted(candidates, key=lambda c: _tie_key(c, cfg.tie_break))
    quality = np.array([c.quality for c in cands])
    base = np.array([c.base_value for c in cands])
    aligned = [space.indices(c.aligned) for c in cands]
    members: dict[int, list[int]] = {}
    for j, idx in enumerate(aligned):
        for v in idx.tolist():
            members.setdefault(v, []).append(j)

    state = LazyBelief(prior, cfg.epsilon)
    raw_mass = np.array([float(state.raw[idx].sum()) for idx in aligned])
    available = np.ones(n, dtype=bool)
    dense = len(space) <= cfg.dense_trace_limit
    gamma, mode = cfg.gamma, cfg.posterior_mode
    order, trace = [], []

    for pos in range(k):
        m = base * (state.scale * raw_mass)
        with np.errstate(divide="ignore"):
            scores = np.where(m > 0.0, quality * np.power(np.maximum(m, 0.0), gamma), 0.0)
        scores[~available] = -1.0
        j = int(np.argmax(scores))
        available[j] = False
        chosen = cands[j]
        idx = aligned[j]
        m_j = state.update(idx, chosen.base_value, mode)
        affected = set()
        for v in idx.tolist():
            affected.update(members[v])
        for a in affected:
            raw_mass[a] = float(state.raw[aligned[a]].sum())
        order.append(chosen.item_id)
        if dense:
            snap = tuple(np.clip(state.scale * state.raw, 0.0, 1.0).tolist())
            trace.append(TraceStep(pos + 1, chosen.item_id, float(scores[j]), m_j, posterior=snap))
        else:
            delta = {space.intents[v]: float(state.raw[v]) for v in idx.tolist()}
            trace.append(TraceStep(pos + 1, chosen.item_id, float(scores[j]), m_j,
                                   delta=delta, scale=state.scale))
    return RankedSlate(order, trace)


def quality_order(candidates: Sequence[Candidate]) -> list:
    """Control ordering: descending quality score, lowest item id on ties."""
    return [c.item_id for c in sorted(candidates, key=lambda c: (-c.quality, _id_key(c.item_id)))]
