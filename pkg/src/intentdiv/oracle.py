"""Slow reference implementations used to cross-check the fast paths.

Nothing here is optimised; everything is a direct transcription meant to be
easy to audit.
"""

import itertools

import numpy as np

from .core import (DiversifierConfig, PosteriorMode, RankedSlate, TieBreak,
                   TraceStep, _id_key)

MAX_EXHAUSTIVE = 8


def _value_matrix(space, candidates):
    """Dense ``Q(j|i,v)`` table: base value on aligned intents, zero elsewhere."""
    Q = np.zeros((len(candidates), len(space)))
    for j, c in enumerate(candidates):
        for v in c.aligned:
            Q[j, space.index(v)] = c.base_value
    return Q


def reference_diversify(prior, candidates, cfg=None, k=None):
    cfg = cfg or DiversifierConfig()
    if not candidates:
        raise ValueError("candidate list is empty")
    if not prior.normalized:
        raise ValueError("prior must be a normalized distribution")
    n = len(candidates)
    k = n if k is None else k
    space = prior.space
    aligned_idx = [np.array(sorted(space.index(v) for v in c.aligned)) for c in candidates]
    if cfg.tie_break is TieBreak.HIGHEST_QUALITY:
        keys = [(-c.quality, _id_key(c.item_id)) for c in candidates]
    else:
        keys = [(_id_key(c.item_id),) for c in candidates]

    d = prior.probs.copy()
    remaining = list(range(n))
    order, trace = [], []
    for pos in range(k):
        best, best_score, best_key = None, None, None
        # m = q * sum of the belief over the aligned intents
        sat = [c.base_value * float(d[idx].sum()) for c, idx in zip(candidates, aligned_idx)]
        for j in remaining:
            m = sat[j]
            score = candidates[j].quality * m ** cfg.gamma if m > 0 else 0.0
            if (best is None or score > best_score
                    or (score == best_score and keys[j] < best_key)):
                best, best_score, best_key = j, score, keys[j]
        remaining.remove(best)
        c = candidates[best]
        m = sat[best]
        denom = 1.0 - m
        new = d.copy()
        mode = cfg.posterior_mode
        for v in aligned_idx[best].tolist():
            if denom < cfg.epsilon:
                new[v] = 0.0
            elif mode is PosteriorMode.PAPER_LITERAL:
                new[v] = d[v] * (1.0 - c.base_value) / denom
            else:
                new[v] = d[v] * (1.0 - c.base_value)
        if mode is PosteriorMode.EXACT_BAYES and new.sum() > 0:
            # Bayes rule: likelihood-weighted belief, renormalized
            new = new / new.sum()
        d = new
        order.append(c.item_id)
        trace.append(TraceStep(pos + 1, c.item_id, best_score, m, posterior=tuple(d.tolist())))
    return RankedSlate(order, trace)


def _consume_probability(Q_slate, patience, continuation):
    """Per-intent probability that a cascade user consumes from the slate.

    ``Q_slate`` has one row per position and one column per intent.
    """
    Q_slate = Q_slate[..., :patience, :]
    n_int = Q_slate.shape[-1]
    reach = np.ones(Q_slate.shape[:-2] + (n_int,))
    total = np.zeros_like(reach)
    for m in range(Q_slate.shape[-2]):
        q = Q_slate[..., m, :]
        total = total + reach * q
        reach = reach * (1.0 - q) * continuation
    return total


def slate_satisfaction(prior, slate, patience, continuation):
    """Exact probability that a cascade user consumes some item of ``slate``.

    ``slate`` is an ordered list of candidates. The user draws an intent from
    ``prior``, scans at most ``patience`` positions, consumes an aligned item
    with its base value and otherwise moves on with probability
    ``continuation``.
    """
    if not slate:
        return 0.0
    Q = _value_matrix(prior.space, slate)
    return float(prior.probs @ _consume_probability(Q, patience, continuation))


def exhaustive_best_slate(prior, candidates, k, patience, continuation):
    """Best ordered ``k``-subset under :func:`slate_satisfaction`.

    Ties go to the lexicographically smallest tuple of candidate positions.
    """
    n = len(candidates)
    if n > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive search is capped at {MAX_EXHAUSTIVE} candidates")
    if not 1 <= k <= n:
        raise ValueError("k must lie in [1, len(candidates)]")
    Q = _value_matrix(prior.space, candidates)
    perms = np.array(list(itertools.permutations(range(n), k)))
    values = prior.probs @ _consume_probability(Q[perms], patience, continuation).T
    best = int(np.argmax(values))
    return [candidates[j] for j in perms[best]], float(values[best])
