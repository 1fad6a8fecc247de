"""Synthetic users, catalog and cascade consumption for paired A/B runs.

Two intents are modelled: exploration (item from a creator the user has not
consumed before) and familiarity (item from a seen creator). Alignment is
therefore personal and changes as users consume.

All randomness of a run comes from ``SimConfig.seed``. Draws are keyed by
(day, stream) and sized by the full population, so a control and a treatment
run with the same seed see the same activity coins, session hours, intent
draws and catalog keys (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import (MAX_BASE_VALUE, Candidate, DiversifierConfig,
                   IntentDistribution, IntentSpace, PosteriorMode, RankedSlate)
from .intent_model import (FEATURE_NAMES, Dataset, TrainConfig, predict_proba,
                           train)

EXPLORATION, FAMILIARITY = "exploration", "familiarity"
INTENTS = (EXPLORATION, FAMILIARITY)
INTENT_SPACE = IntentSpace(INTENTS)

# stream ids for per-day generators
_ACTIVITY, _HOURS, _CATALOG, _CASCADE, _FEATURES = range(5)


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    """Flat experiment configuration.

    The candidate model has four knobs beyond the catalog itself. Each pool
    slot gets a personal relevance shift ``nu ~ N(0, relevance_sd^2)`` on the
    log-odds of the item's intrinsic quality ``q``; an on-intent user consumes
    with probability ``accept = sigmoid(logit(q) + nu)``. The upstream score
    handed to both arms is::

        s = exp(score_exponent * (score_quality_weight * log q
                                  + log(accept / q)
                                  + familiarity_bias * [creator seen])
                + quality_sigma * noise)

    so it ranks by a quality-heavy estimate of value and over-rates familiar
    creators, while the diversifier only sees ``base_value = q``. Day
    satisfaction is the consumed item's ``q``.
    """

    n_users: int = 2000
    n_days: int = 30
    sessions_per_day: int = 4
    page_size: int = 10
    pool_size: int = 30
    n_intents: int = 2
    catalog_size: int = 6000
    quality_concentration: float = 15.0
    n_creators: int = 300
    n_clusters: int = 30
    seed: int = 0
    policy: str = "control"
    gamma: float = 0.02
    posterior_mode: str = "paper-literal"
    warmup_days: int = 2
    familiar_fraction: float = 0.6
    quality_sigma: float = 0.005
    score_exponent: float = 0.0025
    relevance_sd: float = 3.7
    familiarity_bias: float = 2.0
    score_quality_weight: float = 13.0
    return_rho: float = 0.8
    continuation_prob: float = 0.4
    patience_max: int = 6
    hourly_amplitude: float = 0.6
    hour_jitter: int = 1
    exploration_logit_mean: float = -0.2
    exploration_logit_sd: float = 2.6
    initial_seen_creators: int = 25
    train_epochs: int = 10
    train_learning_rate: float = 0.5
    train_batch_size: int = 256
    train_l2: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        pos = ("n_users", "n_days", "page_size", "pool_size", "catalog_size",
               "n_creators", "n_clusters", "patience_max", "train_epochs", "train_batch_size")
        for name in pos:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.sessions_per_day < 0 or self.warmup_days < 0:
            raise ConfigError("sessions_per_day and warmup_days must be non-negative")
        if self.pool_size < self.page_size:
            raise ConfigError("pool_size must be at least page_size")
        if self.n_intents != 2:
            raise ConfigError("run_experiment models exactly two intents (exploration, familiarity)")
        if self.catalog_size % self.n_creators:
            raise ConfigError("catalog_size must be a multiple of n_creators")
        if self.n_creators < self.pool_size + self.initial_seen_creators:
            raise ConfigError("n_creators must cover pool_size + initial_seen_creators")
        if self.policy not in ("control", "treatment"):
            raise ConfigError("policy must be 'control' or 'treatment'")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        try:
            PosteriorMode(self.posterior_mode)
        except ValueError:
            raise ConfigError(f"unknown posterior_mode {self.posterior_mode!r}") from None
        for name in ("familiar_fraction", "continuation_prob", "return_rho"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if min(self.quality_sigma, self.relevance_sd, self.hourly_amplitude) < 0:
            raise ConfigError("quality_sigma, relevance_sd and hourly_amplitude must be non-negative")
        if not self.score_exponent > 0:
            raise ConfigError("score_exponent must be positive")
        if not 0 <= self.hour_jitter <= 12:
            raise ConfigError("hour_jitter must lie in [0, 12]")

    @classmethod
    def from_dict(cls, d: dict):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return asdict(self)

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return SimConfig.from_dict(d)


@dataclass(frozen=True)
class CatalogItem:
    item_id: int
    creator_id: int
    cluster_id: int
    intrinsic_quality: float


class Catalog:
    """Column store of catalog items; item ``k`` belongs to creator ``k // per_creator``."""

    def __init__(self, creator, cluster, quality, creator_cluster):
        self.creator = np.asarray(creator)
        self.cluster = np.asarray(cluster)
        self.quality = np.asarray(quality, dtype=np.float64)
        self.creator_cluster = np.asarray(creator_cluster)
        self.n_creators = len(self.creator_cluster)
        self.per_creator = len(self.creator) // self.n_creators

    def __len__(self):
        return len(self.creator)

    def __getitem__(self, k) -> CatalogItem:
        return CatalogItem(int(k), int(self.creator[k]), int(self.cluster[k]), float(self.quality[k]))

    @classmethod
    def generate(cls, n_items, n_creators, n_clusters, rng, concentration=4.5):
        """Random catalog; quality is a Beta with mean 0.45 rescaled into [0.05, 0.95]."""
        per = n_items // n_creators
        creator_cluster = rng.integers(0, n_clusters, n_creators)
        creator = np.repeat(np.arange(n_creators), per)
        a = concentration * 4.0 / 9.0
        quality = rng.beta(a, concentration - a, n_items) * 0.9 + 0.05
        return cls(creator, creator_cluster[creator], quality, creator_cluster)


@dataclass
class UserProfile:
    user_id: int
    base_logits: np.ndarray
    hourly_amplitude: float = 0.0
    phase: float = 0.0
    patience: int = 10
    continuation_prob: float = 0.8
    return_propensity: float = 0.5
    seen_creators: set = field(default_factory=set)

    def __post_init__(self):
        self.base_logits = np.asarray(self.base_logits, dtype=np.float64)
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not 0.0 <= self.return_propensity <= 1.0:
            raise ValueError("return_propensity must lie in [0, 1]")
        if not 0.0 <= self.continuation_prob <= 1.0:
            raise ValueError("continuation_prob must lie in [0, 1]")
        if self.hourly_amplitude < 0:
            raise ValueError("hourly_amplitude must be non-negative")


@dataclass
class SessionLog:
    user_id: int
    day: int
    hour: int
    slate: RankedSlate
    consumed_item: object
    scanned_depth: int
    true_intent_draw: object


def _hour_wave(hour, phase):
    return np.sin(2.0 * np.pi * np.asarray(hour) / 24.0 + phase)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def sample_true_intent_dist(u: UserProfile, hour: int, space: IntentSpace = INTENT_SPACE):
    """Page-level intent distribution of ``u`` at ``hour``.

    The first intent's logit is modulated by a daily sinusoid with the user's
    own phase; the remaining logits are the user's stable baseline.
    """
    if not 0 <= hour <= 23:
        raise ValueError("hour must lie in 0..23")
    logits = u.base_logits.copy()
    logits[0] += u.hourly_amplitude * float(_hour_wave(hour, u.phase))
    z = np.exp(logits - logits.max())
    return IntentDistribution(space, z / z.sum())


# ---------------------------------------------------------------- candidates

def _sample_creators(keys, seen, pool_size, familiar_fraction):
    """Pick ``pool_size`` distinct creators per row from Gumbel-style keys.

    About ``familiar_fraction`` of the pool comes from seen creators; either
    side is topped up from the other when it runs short.
    """
    n_seen = seen.sum(axis=1)
    n_unseen = seen.shape[1] - n_seen
    target = int(round(familiar_fraction * pool_size))
    n_nov = np.minimum(pool_size - np.minimum(target, n_seen), n_unseen)
    n_fam = pool_size - n_nov
    by_seen = np.argsort(-np.where(seen, keys, -np.inf), axis=1, kind="stable")[:, :pool_size]
    by_unseen = np.argsort(-np.where(seen, -np.inf, keys), axis=1, kind="stable")[:, :pool_size]
    j = np.arange(pool_size)[None, :]
    both = np.concatenate([by_seen, by_unseen], axis=1)
    cols = np.where(j < n_fam[:, None], j, pool_size + j - n_fam[:, None])
    return np.take_along_axis(both, cols, axis=1)


def _pool_arrays(catalog, seen, pool_size, keys, offsets, noise, familiar_fraction,
                 sigma, score_exponent, relevance=None, familiarity_bias=0.0,
                 quality_weight=1.0):
    """Vectorised candidate pools, columns sorted by item id.

    ``relevance`` holds the personal log-odds shift of each slot (zero when
    omitted). Returns ``(item, quality, base, novel, accept)`` arrays of shape
    (rows, pool), where ``accept`` is the probability that a user whose intent
    the item matches actually consumes it.
    """
    if relevance is None:
        relevance = np.zeros_like(noise)
    if familiar_fraction is None:
        # uniform over items: keys are per item
        item = np.argsort(-keys, axis=1, kind="stable")[:, :pool_size]
    else:
        creators = _sample_creators(keys, seen, pool_size, familiar_fraction)
        item = creators * catalog.per_creator + offsets % catalog.per_creator
    order = np.argsort(item, axis=1, kind="stable")
    item = np.take_along_axis(item, order, axis=1)
    noise = np.take_along_axis(noise, order, axis=1)
    nu = np.take_along_axis(relevance, order, axis=1)
    q = catalog.quality[item]
    base = np.minimum(q, MAX_BASE_VALUE)
    novel = ~np.take_along_axis(seen, catalog.creator[item], axis=1)
    accept = np.where(nu == 0.0, q, np.minimum(_sigmoid(np.log(q / (1.0 - q)) + nu), MAX_BASE_VALUE))
    # upstream score: compressed log-linear mix of intrinsic quality, the
    # personal acceptance lift and an over-rating of familiar creators
    log_value = (quality_weight * np.log(q) + np.log(accept / q)
                 + familiarity_bias * ~novel)
    quality = np.exp(score_exponent * log_value + sigma * noise)
    return item, quality, base, novel, accept


def generate_candidates(catalog: Catalog, u: UserProfile, pool_size: int, rng,
                        sigma: float = 0.1, familiar_fraction: float | None = None,
                        score_exponent: float = 1.0, relevance_sd: float = 0.0,
                        familiarity_bias: float = 0.0, quality_weight: float = 1.0,
                        with_acceptance: bool = False):
    """Sample a candidate pool for ``u``.

    ``base_value`` is the item's intrinsic quality. With the default keyword
    values the quality score is ``intrinsic_quality`` times log-normal noise;
    the other keywords switch on the personal relevance model used by
    :func:`run_experiment` (see :class:`SimConfig`). Items are uniform over
    the catalog unless ``familiar_fraction`` is given, in which case that
    share of the pool comes from creators ``u`` has seen.

    With ``with_acceptance`` the return value is ``(candidates, acceptance)``
    where ``acceptance`` maps item id to the on-intent consumption
    probability, suitable for :func:`simulate_page_view`.
    """
    if pool_size > len(catalog) or (familiar_fraction is not None and pool_size > catalog.n_creators):
        raise ValueError("catalog too small for the requested pool")
    seen = np.zeros((1, catalog.n_creators), dtype=bool)
    if u.seen_creators:
        seen[0, list(u.seen_creators)] = True
    n_keys = len(catalog) if familiar_fraction is None else catalog.n_creators
    keys = rng.random((1, n_keys))
    offsets = rng.integers(0, catalog.per_creator, (1, pool_size))
    noise = rng.standard_normal((1, pool_size))
    relevance = relevance_sd * rng.standard_normal((1, pool_size))
    item, quality, base, novel, accept = _pool_arrays(
        catalog, seen, pool_size, keys, offsets, noise, familiar_fraction, sigma,
        score_exponent, relevance, familiarity_bias, quality_weight)
    cands = [Candidate(int(i), float(s), float(q), frozenset([EXPLORATION if n else FAMILIARITY]), bool(n))
             for i, s, q, n in zip(item[0], quality[0], base[0], novel[0])]
    if with_acceptance:
        return cands, {int(i): float(a) for i, a in zip(item[0], accept[0])}
    return cands


def creator_intent_candidates(catalog: Catalog, item_ids, quality=None, rng=None, sigma=0.1):
    """Candidates in the creator-as-intent instantiation.

    Every item aligns to the singleton intent ``{its creator}``; the intent
    space is ``range(catalog.n_creators)``.
    """
    out = []
    for k, i in enumerate(item_ids):
        q = float(catalog.quality[i])
        s = q if quality is None else float(quality[k])
        if rng is not None:
            s *= math.exp(sigma * rng.standard_normal())
        out.append(Candidate(int(i), s, min(q, MAX_BASE_VALUE), frozenset([int(catalog.creator[i])])))
    return out


# ---------------------------------------------------------------- page views

def _cascade(aligned, base, patience, continuation, u_consume, u_continue):
    """Vectorised cascade over rows.

    ``aligned[r, m]`` says whether the item at position ``m`` matches row
    ``r``'s drawn intent. Returns ``(consumed_position, scanned_depth)`` with
    position -1 when nothing was consumed.
    """
    n, M = aligned.shape
    consumed = np.full(n, -1)
    depth = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for m in range(M):
        alive &= patience > m
        if not alive.any():
            break
        depth[alive] = m + 1
        hit = alive & aligned[:, m] & (u_consume[:, m] < base[:, m])
        consumed[hit] = m
        alive &= ~hit
        alive &= u_continue[:, m] < continuation
    return consumed, depth


def simulate_page_view(u: UserProfile, slate, candidates, rng, hour=12, day=0,
                       intent_dist: IntentDistribution | None = None,
                       acceptance: dict | None = None) -> SessionLog:
    """One cascade page view of ``slate`` (a :class:`RankedSlate` or id list).

    An aligned item is consumed with its ``base_value`` unless ``acceptance``
    supplies a personal probability for it.
    """
    order = slate.order if isinstance(slate, RankedSlate) else list(slate)
    if not order:
        raise ValueError("slate is empty")
    by_id = {c.item_id: c for c in candidates}
    dist = intent_dist or sample_true_intent_dist(u, hour)
    space = dist.space
    cdf = np.cumsum(dist.probs)
    v = space.intents[min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(space) - 1)]
    M = len(order)
    aligned = np.array([[v in by_id[j].aligned for j in order]])
    acceptance = acceptance or {}
    base = np.array([[acceptance.get(j, by_id[j].base_value) for j in order]])
    pos, depth = _cascade(aligned, base, np.array([u.patience]), u.continuation_prob,
                          rng.random((1, M)), rng.random((1, M)))
    consumed = order[pos[0]] if pos[0] >= 0 else None
    rs = slate if isinstance(slate, RankedSlate) else RankedSlate(order)
    return SessionLog(u.user_id, day, hour, rs, consumed, int(depth[0]), v)


def label_from_log(log: SessionLog, candidates, space: IntentSpace = INTENT_SPACE):
    """Multi-hot intent label of the consumed item, or ``None``."""
    if log.consumed_item is None:
        return None
    by_id = {c.item_id: c for c in candidates}
    aligned = by_id[log.consumed_item].aligned
    return np.array([1.0 if v in aligned else 0.0 for v in space])


def update_return_propensity(u: UserProfile, day_satisfaction: float, rho: float = 0.8) -> UserProfile:
    if not 0.0 <= day_satisfaction <= 1.0:
        raise ValueError("day_satisfaction must lie in [0, 1]")
    new = min(max(rho * u.return_propensity + (1.0 - rho) * day_satisfaction, 0.0), 1.0)
    return UserProfile(u.user_id, u.base_logits, u.hourly_amplitude, u.phase, u.patience,
                       u.continuation_prob, new, set(u.seen_creators))


# ---------------------------------------------------------- batched greedy

def batch_diversify(prior, quality, base, aligned, cfg: DiversifierConfig, k):
    """Greedy diversification of many pools at once.

    ``prior`` is (rows, V); ``quality``/``base`` are (rows, pool) with columns
    already in tie-break order; ``aligned`` is a (rows, pool, V) boolean
    array. Returns the (rows, k) column indices of the chosen items.
    """
    n, P = quality.shape
    d = np.array(prior, dtype=np.float64)
    used = np.zeros((n, P), dtype=bool)
    picks = np.empty((n, k), dtype=np.int64)
    rows = np.arange(n)
    mode, gamma, eps = cfg.posterior_mode, cfg.gamma, cfg.epsilon
    for pos in range(k):
        m = np.einsum("rpv,rv->rp", np.where(aligned, 1.0, 0.0), d) * base
        with np.errstate(divide="ignore"):
            score = np.where(m > 0, quality * np.power(np.maximum(m, 0.0), gamma), 0.0)
        score[used] = -1.0
        j = np.argmax(score, axis=1)
        picks[:, pos] = j
        used[rows, j] = True
        mj = m[rows, j][:, None]
        qj = base[rows, j][:, None]
        aj = aligned[rows, j]
        denom = 1.0 - mj
        degenerate = denom < eps
        safe = np.where(degenerate, 1.0, denom)
        if mode is PosteriorMode.PAPER_LITERAL:
            upd = d * (1.0 - qj) / safe
        else:
            upd = d * (1.0 - qj)
        new = np.where(aj & degenerate, 0.0, np.where(aj, upd, d))
        if mode is PosteriorMode.EXACT_BAYES:
            tot = new.sum(axis=1, keepdims=True)
            new = np.where(tot > 0, new / np.where(tot > 0, tot, 1.0), new)
        d = np.clip(new, 0.0, 1.0)
    return picks


# ------------------------------------------------------------- population

@dataclass
class Population:
    """Column store of user state for the batched experiment loop."""

    z: np.ndarray            # exploration logit (vs familiarity at 0)
    amplitude: np.ndarray
    phase: np.ndarray
    patience: np.ndarray
    continuation: np.ndarray
    propensity: np.ndarray
    seen: np.ndarray         # (users, creators) bool
    session_hours: np.ndarray
    completion_trait: np.ndarray
    length_trait: np.ndarray
    # history
    clusters: np.ndarray     # (users, clusters) bool, ever consumed
    consumed_count: np.ndarray   # (users, creators) int
    n_consumptions: np.ndarray
    n_repeat: np.ndarray
    active_days: np.ndarray
    days_elapsed: np.ndarray
    last_active: np.ndarray

    def profile(self, i) -> UserProfile:
        return UserProfile(int(i), np.array([self.z[i], 0.0]), float(self.amplitude[i]),
                           float(self.phase[i]), int(self.patience[i]), float(self.continuation[i]),
                           float(self.propensity[i]), set(np.flatnonzero(self.seen[i]).tolist()))

    @classmethod
    def generate(cls, cfg: SimConfig, catalog: Catalog, rng):
        U = cfg.n_users
        z = rng.normal(cfg.exploration_logit_mean, cfg.exploration_logit_sd, U)
        amplitude = cfg.hourly_amplitude * rng.uniform(0.5, 1.5, U)
        phase = rng.normal(0.0, 0.5, U)
        patience = rng.integers(1, cfg.patience_max + 1, U)
        continuation = np.clip(rng.normal(cfg.continuation_prob, 0.05, U), 0.0, 1.0)
        propensity = np.clip(_sigmoid(0.6 - 0.4 * z + rng.normal(0, 0.3, U)), 0.05, 0.95)
        hours = np.sort(rng.integers(6, 24, (U, max(cfg.sessions_per_day, 1))), axis=1)
        home = rng.integers(0, cfg.n_clusters, (U, 3))
        seen = np.zeros((U, catalog.n_creators), dtype=bool)
        in_home = (catalog.creator_cluster[None, :, None] == home[:, None, :]).any(axis=2)
        keys = rng.random((U, catalog.n_creators)) + in_home
        n_seen = np.clip(np.round(cfg.initial_seen_creators * np.exp(0.2 * (z - z.mean()))),
                         cfg.pool_size // 2, catalog.n_creators - cfg.pool_size).astype(int)
        ranked = np.argsort(-keys, axis=1, kind="stable")
        for i in range(U):
            seen[i, ranked[i, :n_seen[i]]] = True
        return cls(
            z=z, amplitude=amplitude, phase=phase, patience=patience, continuation=continuation,
            propensity=propensity, seen=seen, session_hours=hours,
            completion_trait=rng.normal(0, 1, U), length_trait=rng.normal(0, 1, U),
            clusters=np.zeros((U, cfg.n_clusters), dtype=bool),
            consumed_count=np.zeros((U, catalog.n_creators), dtype=np.int32),
            n_consumptions=np.zeros(U), n_repeat=np.zeros(U), active_days=np.zeros(U),
            days_elapsed=np.zeros(U), last_active=np.full(U, -1.0),
        )


def page_features(pop: Population, users, hours, day, session_pages, session_cons, noise):
    """Feature rows (``FEATURE_NAMES`` order) for pages of ``users``.

    ``noise`` is an (n, 2) standard-normal draw for the behavioural averages.
    """
    z = pop.z[users]
    since = np.where(pop.last_active[users] < 0, 7.0,
                     np.minimum(day - pop.last_active[users], 7.0))
    activity = (pop.active_days[users] + 2.0 * pop.propensity[users]) / (pop.days_elapsed[users] + 2.0)
    nc = pop.n_consumptions[users]
    rep_ratio = np.where(nc > 0, pop.n_repeat[users] / np.maximum(nc, 1), 0.0)
    completion = _sigmoid(0.5 - 0.6 * z + 0.5 * pop.completion_trait[users] + 0.3 * noise[:, 0])
    length = np.exp(2.0 - 0.3 * z + 0.3 * pop.length_trait[users] + 0.2 * noise[:, 1])
    ang = 2.0 * np.pi * hours / 24.0
    return np.column_stack([
        session_pages, session_cons, since, completion, length, activity, rep_ratio,
        pop.clusters[users].sum(axis=1) + 0.0, pop.seen[users].sum(axis=1) + 0.0,
        np.sin(ang), np.cos(ang),
    ])


@dataclass
class PageTable:
    """One row per served page."""

    user: np.ndarray
    day: np.ndarray
    session: np.ndarray
    hour: np.ndarray
    p_true: np.ndarray       # true exploration probability
    pred: np.ndarray         # predicted exploration probability (nan if unused)
    features: np.ndarray
    true_intent: np.ndarray  # 0 exploration, 1 familiarity
    slate: np.ndarray        # (pages, page_size) item ids
    novel_mask: np.ndarray   # (pages, page_size) bool
    relevance: np.ndarray    # mean quality score over the page
    page_clusters: np.ndarray  # distinct topic clusters on the page
    consumed_item: np.ndarray
    consumed_novel: np.ndarray
    consumed_creator: np.ndarray
    consumed_cluster: np.ndarray
    scanned_depth: np.ndarray
    satisfaction: np.ndarray

    @classmethod
    def concat(cls, parts):
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in parts])
                      for f in fields(cls)})

    def __len__(self):
        return len(self.user)


class _Counter:
    def __init__(self):
        self.calls = 0


def _day_rng(seed, day, stream):
    return np.random.default_rng([seed, day + 1000, stream])


def run_experiment(cfg: SimConfig, intent_model_calls: _Counter | None = None):
    """Simulate one arm of the A/B experiment.

    Returns an :class:`~intentdiv.metrics.ExperimentReport`. ``intent_model_calls``
    (optional) counts predictions and trainings, for instrumentation.
    """
    from .metrics import build_report

    cfg.validate()
    calls = intent_model_calls or _Counter()
    root = np.random.default_rng([cfg.seed, 0])
    catalog = Catalog.generate(cfg.catalog_size, cfg.n_creators, cfg.n_clusters, root,
                               cfg.quality_concentration)
    pop = Population.generate(cfg, catalog, root)
    treatment = cfg.policy == "treatment"
    div_cfg = DiversifierConfig(gamma=cfg.gamma, posterior_mode=cfg.posterior_mode)
    train_cfg = TrainConfig(cfg.train_learning_rate, cfg.train_epochs, cfg.train_batch_size,
                            cfg.train_l2, cfg.seed)
    U, P, M = cfg.n_users, cfg.pool_size, cfg.page_size
    params, labels, tables, daily_active, param_history = None, [], [], [], []
    reported_days = np.zeros(U)

    for day in range(-cfg.warmup_days, cfg.n_days):
        reported = day >= 0
        serve_model = treatment and reported
        if serve_model and labels:
            params = train(Dataset.concat(labels), train_cfg)
            calls.calls += 1
            param_history.append(params)
        act = _day_rng(cfg.seed, day, _ACTIVITY).random(U) < pop.propensity
        hours_rng = _day_rng(cfg.seed, day, _HOURS)
        jitter = hours_rng.integers(-cfg.hour_jitter, cfg.hour_jitter + 1, pop.session_hours.shape)
        hours_all = np.clip(pop.session_hours + jitter, 0, 23)
        cat_rng = _day_rng(cfg.seed, day, _CATALOG)
        cas_rng = _day_rng(cfg.seed, day, _CASCADE)
        feat_rng = _day_rng(cfg.seed, day, _FEATURES)
        users = np.flatnonzero(act)
        if reported:
            daily_active.append(int(act.sum()))
            reported_days += act
        sat_sum = np.zeros(U)
        n_pages = np.zeros(U)
        session_cons = np.zeros(U)
        for t in range(cfg.sessions_per_day):
            keys = cat_rng.random((U, catalog.n_creators))[users]
            offsets = cat_rng.integers(0, catalog.per_creator, (U, P))[users]
            noise = cat_rng.standard_normal((U, P))[users]
            relevance = cfg.relevance_sd * cat_rng.standard_normal((U, P))[users]
            u_int = cas_rng.random(U)[users]
            u_cons = cas_rng.random((U, M))[users]
            u_cont = cas_rng.random((U, M))[users]
            feat_noise = feat_rng.standard_normal((U, 2))[users]
            if len(users) == 0:
                continue
            hours = hours_all[users, t]
            p_true = _sigmoid(pop.z[users] + pop.amplitude[users] * _hour_wave(hours, pop.phase[users]))
            item, quality, base, novel, accept = _pool_arrays(
                catalog, pop.seen[users], P, keys, offsets, noise, cfg.familiar_fraction,
                cfg.quality_sigma, cfg.score_exponent, relevance, cfg.familiarity_bias,
                cfg.score_quality_weight)
            feats = page_features(pop, users, hours, day, np.full(len(users), float(t)),
                                  session_cons[users], feat_noise)
            pred = np.full(len(users), np.nan)
            if serve_model and params is not None:
                pred = predict_proba(params, feats)[:, 0]
                calls.calls += 1
                prior = np.column_stack([pred, 1.0 - pred])
                aligned = np.stack([novel, ~novel], axis=2)
                cols = batch_diversify(prior, quality, base, aligned, div_cfg, M)
            else:
                # descending quality score, lowest item id on ties (columns sorted by id)
                cols = np.argsort(-quality, axis=1, kind="stable")[:, :M]
            s_item = np.take_along_axis(item, cols, axis=1)
            s_q = np.take_along_axis(quality, cols, axis=1)
            s_base = np.take_along_axis(base, cols, axis=1)
            s_novel = np.take_along_axis(novel, cols, axis=1)
            s_accept = np.take_along_axis(accept, cols, axis=1)
            true_int = np.where(u_int < p_true, 0, 1)
            aligned_draw = np.where(true_int[:, None] == 0, s_novel, ~s_novel)
            pos, depth = _cascade(aligned_draw, s_accept, pop.patience[users],
                                  pop.continuation[users], u_cons, u_cont)
            got = pos >= 0
            rows = np.arange(len(users))
            page_cl = np.sort(catalog.cluster[s_item], axis=1)
            n_cl = 1 + (np.diff(page_cl, axis=1) > 0).sum(axis=1)
            c_item = np.where(got, s_item[rows, np.maximum(pos, 0)], -1)
            c_novel = got & s_novel[rows, np.maximum(pos, 0)]
            c_base = np.where(got, s_base[rows, np.maximum(pos, 0)], 0.0)
            c_creator = np.where(got, catalog.creator[np.maximum(c_item, 0)], -1)
            c_cluster = np.where(got, catalog.cluster[np.maximum(c_item, 0)], -1)
            tables.append(PageTable(
                user=users.copy(), day=np.full(len(users), day), session=np.full(len(users), t),
                hour=hours, p_true=p_true, pred=pred, features=feats, true_intent=true_int,
                slate=s_item, novel_mask=s_novel, relevance=s_q.mean(axis=1), page_clusters=n_cl,
                consumed_item=c_item, consumed_novel=c_novel, consumed_creator=c_creator,
                consumed_cluster=c_cluster, scanned_depth=depth, satisfaction=c_base))
            # labels: one example per consumption
            if got.any() and treatment:
                y = np.column_stack([c_novel[got], ~c_novel[got]]).astype(float)
                labels.append(Dataset(feats[got], y, FEATURE_NAMES, INTENTS))
            # state updates
            cu, cc = users[got], c_creator[got]
            prev = pop.consumed_count[cu, cc]
            pop.n_repeat[cu] += prev > 0
            pop.consumed_count[cu, cc] += 1
            pop.n_consumptions[cu] += 1
            pop.seen[cu, cc] = True
            pop.clusters[cu, c_cluster[got]] = True
            session_cons[cu] += 1
            sat_sum[users] += c_base
            n_pages[users] += 1
        # end of day
        had = n_pages > 0
        day_sat = np.where(had, sat_sum / np.maximum(n_pages, 1), 0.0)
        rho = cfg.return_rho
        pop.propensity[had] = np.clip(rho * pop.propensity[had] + (1 - rho) * day_sat[had], 0.0, 1.0)
        pop.active_days += act
        pop.days_elapsed += 1
        pop.last_active[act] = day
        if not reported:
            tables = []

    pages = PageTable.concat(tables) if tables else None
    return build_report(cfg, pages, np.array(daily_active, dtype=np.int64), reported_days,
                        params=params, param_history=param_history)
