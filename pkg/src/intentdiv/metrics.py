"""Slate and experiment metrics, arm comparison and intent-sliced deltas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

SERIES = (
    "active_users",
    "consumption_count",
    "mean_relevance",
    "novel_impressions",
    "novel_consumptions",
    "novel_ctr",
    "repeated_exploration_count",
    "unique_clusters_per_user",
    "intent_coverage",
    "effective_intents",
    "clusters_per_page",
    "satisfaction_mean",
)

# every experiment-level metric is sum(numerator) / sum(denominator) over users
# (denominator None means a plain total, "users" divides by the population)
RATIO_METRICS = {
    "active_users": ("active_days", "days"),
    "consumption_count": ("consumptions", None),
    "mean_relevance": ("relevance_sum", "pages"),
    "novel_impressions": ("novel_impressions", None),
    "novel_consumptions": ("novel_consumptions", None),
    "novel_ctr": ("novel_consumptions", "novel_impressions"),
    "repeated_exploration_count": ("repeated_explorations", None),
    "unique_clusters_per_user": ("unique_clusters", "users"),
    "intent_coverage": ("coverage_sum", "pages"),
    "effective_intents": ("effective_intents_sum", "pages"),
    "clusters_per_page": ("page_clusters_sum", "pages"),
    "satisfaction_mean": ("satisfaction_sum", "pages"),
}


@dataclass
class ExperimentReport:
    arm: str
    config: dict
    series: dict
    aggregates: dict
    user_totals: dict
    pages: object = None
    params: object = None
    param_history: list = field(default_factory=list)

    @property
    def n_days(self):
        return len(self.series["active_users"])


# ------------------------------------------------------------- slate level

def slate_metrics(slate, candidates, K, n_intents):
    """Coverage, effective number of intents, relevance and novelty of the top ``K``.

    Each item spreads unit mass evenly over its aligned intents; the effective
    number of intents is the exponential of the entropy of that mass.
    """
    order = slate.order if hasattr(slate, "order") else list(slate)
    if not 1 <= K <= len(order):
        raise ValueError("K must lie in [1, len(slate)]")
    by_id = {c.item_id: c for c in candidates}
    top = [by_id[j] for j in order[:K]]
    covered = set().union(*(c.aligned for c in top))
    mass = {}
    for c in top:
        for v in c.aligned:
            mass[v] = mass.get(v, 0.0) + 1.0 / len(c.aligned)
    w = np.array(list(mass.values())) / K
    entropy = float(-(w * np.log(w)).sum())
    return {
        "intent_coverage": min(1.0, len(covered) / min(K, n_intents)),
        "effective_intents": math.exp(entropy),
        "mean_relevance": float(np.mean([c.quality for c in top])),
        "novel_impressions": sum(1 for c in top if c.novelty),
    }


def repeated_exploration(events):
    """Count (user, creator) pairs first consumed as novel and consumed again.

    ``events`` is an iterable of ``(user, creator, novel)`` consumption events
    in time order.
    """
    first_novel, counts = {}, {}
    for user, creator, novel in events:
        key = (user, creator)
        if key not in counts:
            first_novel[key] = bool(novel)
            counts[key] = 0
        counts[key] += 1
    return sum(1 for k, n in counts.items() if first_novel[k] and n >= 2)


# -------------------------------------------------------- experiment level

def _page_coverage(novel_mask):
    both = novel_mask.any(axis=1) & (~novel_mask).any(axis=1)
    return np.where(both, 1.0, 0.5)


def _page_effective_intents(novel_mask):
    """exp(entropy) of the exploration/familiarity split of each page."""
    w = novel_mask.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(w > 0, w * np.log(w), 0.0) + np.where(w < 1, (1 - w) * np.log(1 - w), 0.0))
    return np.exp(h)


def _repeat_days(pages):
    """Per pair that counts as a repeated exploration: (user, day it starts counting)."""
    got = pages.consumed_item >= 0
    order = np.lexsort((pages.user[got], pages.session[got], pages.day[got]))
    users = pages.user[got][order]
    creators = pages.consumed_creator[got][order]
    novel = pages.consumed_novel[got][order]
    days = pages.day[got][order]
    first_novel, counts, out = {}, {}, []
    for u, c, nv, d in zip(users.tolist(), creators.tolist(), novel.tolist(), days.tolist()):
        key = (u, c)
        if key not in counts:
            first_novel[key] = nv
            counts[key] = 0
        counts[key] += 1
        if counts[key] == 2 and first_novel[key]:
            out.append((u, d))
    return out


_USER_KEYS = ("consumptions", "relevance_sum", "pages", "novel_impressions",
              "novel_consumptions", "repeated_explorations", "unique_clusters",
              "coverage_sum", "effective_intents_sum", "page_clusters_sum", "satisfaction_sum")
_RATE_SERIES = ("mean_relevance", "novel_ctr", "intent_coverage", "effective_intents",
                "clusters_per_page", "satisfaction_mean")


def build_report(cfg, pages, daily_active, active_days, params=None, param_history=()):
    """Assemble an :class:`ExperimentReport` from the reported-days page table.

    ``daily_active`` is the per-day active-user count and ``active_days`` the
    per-user number of active reported days.
    """
    D, U = cfg.n_days, cfg.n_users
    series = {"active_users": np.asarray(daily_active, dtype=float)}
    if pages is None or len(pages) == 0:
        for name in SERIES[1:]:
            series[name] = np.full(D, np.nan) if name in _RATE_SERIES else np.zeros(D)
        user_totals = {k: np.zeros(U) for k in _USER_KEYS}
    else:
        day = pages.day
        got = pages.consumed_item >= 0
        n_novel = pages.novel_mask.sum(axis=1).astype(float)
        cover = _page_coverage(pages.novel_mask)
        eff = _page_effective_intents(pages.novel_mask)

        def per_day(w):
            return np.bincount(day, weights=w, minlength=D)[:D]

        def per_user(w):
            return np.bincount(pages.user, weights=w, minlength=U)[:U]

        n_pages = per_day(np.ones(len(pages)))
        safe = np.where(n_pages > 0, n_pages, np.nan)
        series["consumption_count"] = per_day(got * 1.0)
        series["mean_relevance"] = per_day(pages.relevance) / safe
        series["novel_impressions"] = per_day(n_novel)
        series["novel_consumptions"] = per_day(pages.consumed_novel * 1.0)
        imp = series["novel_impressions"]
        series["novel_ctr"] = series["novel_consumptions"] / np.where(imp > 0, imp, np.nan)
        repeats = _repeat_days(pages)
        rep_day = np.bincount([d for _, d in repeats], minlength=D)[:D]
        series["repeated_exploration_count"] = np.cumsum(rep_day).astype(float)
        # first day each (user, cluster) pair is consumed
        first = {}
        for u, c, d in zip(pages.user[got].tolist(), pages.consumed_cluster[got].tolist(),
                           day[got].tolist()):
            if (u, c) not in first:
                first[(u, c)] = d
        new_by_day = np.bincount(list(first.values()), minlength=D)[:D] if first else np.zeros(D)
        series["unique_clusters_per_user"] = np.cumsum(new_by_day) / U
        series["intent_coverage"] = per_day(cover) / safe
        series["effective_intents"] = per_day(eff) / safe
        series["clusters_per_page"] = per_day(pages.page_clusters * 1.0) / safe
        series["satisfaction_mean"] = per_day(pages.satisfaction) / safe
        user_totals = {
            "consumptions": per_user(got * 1.0),
            "relevance_sum": per_user(pages.relevance),
            "pages": per_user(np.ones(len(pages))),
            "novel_impressions": per_user(n_novel),
            "novel_consumptions": per_user(pages.consumed_novel * 1.0),
            "repeated_explorations": np.bincount([u for u, _ in repeats], minlength=U)[:U] * 1.0,
            "unique_clusters": np.bincount([u for u, _ in first], minlength=U)[:U] * 1.0,
            "coverage_sum": per_user(cover),
            "effective_intents_sum": per_user(eff),
            "page_clusters_sum": per_user(pages.page_clusters * 1.0),
            "satisfaction_sum": per_user(pages.satisfaction),
        }
    user_totals["active_days"] = np.asarray(active_days, dtype=float)
    user_totals["days"] = np.full(U, D / U)
    user_totals["users"] = np.ones(U)
    report = ExperimentReport(cfg.policy, cfg.to_dict(), series, {}, user_totals, pages,
                              params, list(param_history))
    report.aggregates = aggregate(user_totals)
    return report


def aggregate(user_totals, weights=None):
    """Experiment-level metrics from per-user totals (optionally reweighted)."""
    w = np.ones(len(user_totals["users"])) if weights is None else weights
    out = {}
    for name, (num, den) in RATIO_METRICS.items():
        top = float(w @ user_totals[num])
        if den is None:
            out[name] = top
        else:
            bottom = float(w @ user_totals[den])
            out[name] = top / bottom if bottom > 0 else None
    return out


def _bootstrap_weights(n, n_boot, rng):
    return rng.multinomial(n, np.full(n, 1.0 / n), size=n_boot).astype(float)


def compare_arms(report_t, report_c, n_boot=1000, seed=0, alpha=0.05):
    """Relative change of every metric, treatment over control.

    Confidence intervals come from a paired user-level bootstrap (the same
    resampled users in both arms).
    """
    ut, uc = report_t.user_totals, report_c.user_totals
    n = len(uc["users"])
    if len(ut["users"]) != n:
        raise ValueError("arms must cover the same users")
    at, ac = report_t.aggregates, report_c.aggregates
    W = _bootstrap_weights(n, n_boot, np.random.default_rng(seed))
    boot = {name: [] for name in RATIO_METRICS}
    for w in W:
        bt, bc = aggregate(ut, w), aggregate(uc, w)
        for name in RATIO_METRICS:
            if bt[name] is not None and bc[name]:
                boot[name].append(bt[name] / bc[name] - 1.0)
    rows = []
    for name in RATIO_METRICS:
        c, t = ac[name], at[name]
        delta = (t / c - 1.0) if (c and t is not None) else None
        lo = hi = None
        if delta is not None and boot[name]:
            lo, hi = np.quantile(boot[name], [alpha / 2, 1 - alpha / 2]).tolist()
        rows.append({"metric": name, "control": c, "treatment": t, "delta": delta,
                     "ci_low": lo, "ci_high": hi})
    return rows


# ------------------------------------------------------------------ slicing

def slice_input(pages, predictions):
    """Per-page arrays needed by :func:`slice_by_predicted_intent`."""
    return {"user": pages.user, "prediction": np.asarray(predictions, dtype=float),
            "novel_impressions": pages.novel_mask.sum(axis=1).astype(float),
            "novel_consumptions": pages.consumed_novel.astype(float)}


def bucket_edges(pred_t, pred_c, n_buckets):
    pooled = np.concatenate([pred_t, pred_c])
    return np.quantile(pooled, np.linspace(0, 1, n_buckets + 1)[1:-1])


def _bucket_sums(arm, edges, n_buckets, n_users):
    """(users, buckets, 3) array of pages, novel impressions, novel consumptions."""
    b = np.searchsorted(edges, arm["prediction"], side="right")
    key = np.asarray(arm["user"]) * n_buckets + b
    size = n_users * n_buckets
    out = np.stack([
        np.bincount(key, minlength=size)[:size],
        np.bincount(key, weights=arm["novel_impressions"], minlength=size)[:size],
        np.bincount(key, weights=arm["novel_consumptions"], minlength=size)[:size],
    ], axis=-1)
    return out.reshape(n_users, n_buckets, 3).astype(float)


def _rel(t, c):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where((c > 0) & np.isfinite(t), t / np.where(c > 0, c, 1.0) - 1.0, np.nan)


def _bucket_deltas(st, sc):
    """Per-bucket relative deltas from summed (buckets, 3) tables."""
    with np.errstate(invalid="ignore", divide="ignore"):
        imp_t, imp_c = st[..., 1] / st[..., 0], sc[..., 1] / sc[..., 0]
        con_t, con_c = st[..., 2] / st[..., 0], sc[..., 2] / sc[..., 0]
        ctr_t, ctr_c = st[..., 2] / st[..., 1], sc[..., 2] / sc[..., 1]
    return {"novel_impressions": _rel(imp_t, imp_c),
            "novel_consumptions": _rel(con_t, con_c),
            "novel_ctr": _rel(ctr_t, ctr_c)}


def slice_by_predicted_intent(treatment, control, n_buckets=10):
    """Treatment-vs-control deltas per bucket of predicted exploration intent.

    Buckets are pooled-percentile ranges of the prediction. Per-page rates are
    compared for impressions and consumptions; novel CTR is consumptions over
    impressions. Entries are ``None`` where a bucket is empty or the control
    rate is zero.
    """
    n_users = int(max(np.max(treatment["user"], initial=-1), np.max(control["user"], initial=-1))) + 1
    edges = bucket_edges(treatment["prediction"], control["prediction"], n_buckets)
    st = _bucket_sums(treatment, edges, n_buckets, n_users).sum(axis=0)
    sc = _bucket_sums(control, edges, n_buckets, n_users).sum(axis=0)
    deltas = _bucket_deltas(st, sc)
    rows = []
    for b in range(n_buckets):
        row = {"bucket": b, "pages_treatment": int(st[b, 0]), "pages_control": int(sc[b, 0])}
        for name, arr in deltas.items():
            row[name] = None if np.isnan(arr[b]) else float(arr[b])
        rows.append(row)
    return rows


def slice_trend_test(treatment, control, n_buckets=10, n_boot=1000, seed=0):
    """Spearman correlation of bucket deltas with bucket index.

    Returns ``{metric: (rho, p_one_sided)}`` where the p-value is the share of
    user-level bootstrap replicates with ``rho <= 0``.
    """
    n_users = int(max(treatment["user"].max(), control["user"].max())) + 1
    edges = bucket_edges(treatment["prediction"], control["prediction"], n_buckets)
    ut = _bucket_sums(treatment, edges, n_buckets, n_users)
    uc = _bucket_sums(control, edges, n_buckets, n_users)
    idx = np.arange(n_buckets)

    def rhos(st, sc):
        out = {}
        for name, arr in _bucket_deltas(st, sc).items():
            ok = np.isfinite(arr)
            out[name] = float(spearmanr(idx[ok], arr[ok])[0]) if ok.sum() >= 3 else float("nan")
        return out

    point = rhos(ut.sum(axis=0), uc.sum(axis=0))
    W = _bootstrap_weights(n_users, n_boot, np.random.default_rng(seed))
    st_b = np.einsum("bu,uks->bks", W, ut)
    sc_b = np.einsum("bu,uks->bks", W, uc)
    boot = {name: [] for name in point}
    for b in range(n_boot):
        for name, r in rhos(st_b[b], sc_b[b]).items():
            boot[name].append(r)
    return {name: (point[name], float(np.mean(np.nan_to_num(np.array(boot[name]), nan=0.0) <= 0)))
            for name in point}
