"""Ranking and graded-entailment evaluation over a frozen matrix.

Every relation (u, v) is ranked against the negatives of u: all
vocabulary ids except u itself and except the ground-truth targets of u.
Ties in score resolve to the midpoint, rounded up:

    rank = 1 + #closer + ceil(#tied / 2)

Average precision per source uses the filtered ranks of its positives in
ascending order, and the mean of those per-source values (sources in id
order) is the reported MAP.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import _edge_lines
from .geometry import POINCARE, poincare_distance, score_between

DEFAULT_PENALTY_ALPHA = 1e3


@dataclass
class RankReport:
    """Per-relation ranks plus the two aggregate ranking metrics."""

    sources: np.ndarray
    targets: np.ndarray
    ranks: np.ndarray
    mean_rank: float
    map_score: float

    @property
    def n_relations(self):
        return len(self.ranks)


@dataclass
class EntailmentPair:
    """A symbol pair with a gold is-a rating on the 0..10 scale."""

    u: str
    v: str
    gold: float

    def __post_init__(self):
        if not 0.0 <= self.gold <= 10.0:
            raise ValueError(f"gold rating {self.gold} outside [0, 10]")


def _check_ids(matrix, *ids):
    for i in ids:
        if not 0 <= i < matrix.count:
            raise ValueError(f"id {i} outside the vocabulary of {matrix.count} rows")


def _truth_neighbors(truth, n):
    return truth.neighbor_sets(n)


def _rank_from_sorted(neg_sorted, d_pos):
    closer = int(np.searchsorted(neg_sorted, d_pos, side="left"))
    ties = int(np.searchsorted(neg_sorted, d_pos, side="right")) - closer
    return 1 + closer + (ties + 1) // 2


def rank_relation(u, v, truth, matrix):
    """Rank of target v among u's negatives under the matrix's score."""
    u, v = int(u), int(v)
    _check_ids(matrix, u, v)
    neighbors = _truth_neighbors(truth, matrix.count)[u]
    dists = score_between(
        matrix.score_kind, matrix.rows[u], matrix.rows, matrix.translation
    )
    keep = np.ones(matrix.count, dtype=bool)
    keep[u] = False
    keep[sorted(neighbors)] = False
    return _rank_from_sorted(np.sort(dists[keep]), dists[v])


def evaluate_ranking(relations, truth, matrix, threads=1):
    """Rank every relation and aggregate mean rank and MAP.

    Negatives are filtered against ``truth``, so for link prediction pass
    the union of all splits. Scoring parallelizes over source nodes; the
    result does not depend on the thread count.
    """
    if len(relations) == 0:
        raise ValueError("no relations to evaluate")
    n = matrix.count
    pairs = relations.pairs
    if pairs.max() >= n or pairs.min() < 0:
        raise ValueError("relation ids outside the vocabulary")
    neighbors = _truth_neighbors(truth, n)
    ranks = np.zeros(len(pairs), dtype=np.int64)
    by_source = {}
    for idx, (u, v) in enumerate(pairs):
        by_source.setdefault(int(u), []).append((idx, int(v)))

    def score_source(u):
        dists = score_between(
            matrix.score_kind, matrix.rows[u], matrix.rows, matrix.translation
        )
        keep = np.ones(n, dtype=bool)
        keep[u] = False
        keep[sorted(neighbors[u])] = False
        neg_sorted = np.sort(dists[keep])
        for idx, v in by_source[u]:
            ranks[idx] = _rank_from_sorted(neg_sorted, dists[v])

    source_ids = sorted(by_source)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(score_source, source_ids))
    else:
        for u in source_ids:
            score_source(u)

    ap = np.zeros(len(source_ids))
    for j, u in enumerate(source_ids):
        r = np.sort(ranks[[idx for idx, _ in by_source[u]]])
        ap[j] = np.mean(np.arange(1, len(r) + 1) / r)
    return RankReport(
        sources=pairs[:, 0].copy(),
        targets=pairs[:, 1].copy(),
        ranks=ranks,
        mean_rank=float(np.mean(ranks)),
        map_score=float(np.mean(ap)),
    )


def entailment_score(u, v, matrix, penalty_alpha=DEFAULT_PENALTY_ALPHA):
    """How strongly the embedding asserts is-a(u, v):

        -(1 + penalty_alpha * (||v|| - ||u||)) * d(u, v)

    More general terms sit nearer the origin, so a target with smaller
    norm than the source is penalized less. Ball-kind matrices only.
    """
    u, v = int(u), int(v)
    _check_ids(matrix, u, v)
    if matrix.score_kind != POINCARE:
        raise ValueError("entailment scoring requires a ball-kind matrix")
    nu = float(np.linalg.norm(matrix.rows[u]))
    nv = float(np.linalg.norm(matrix.rows[v]))
    d = float(poincare_distance(matrix.rows[u], matrix.rows[v]))
    return -(1.0 + penalty_alpha * (nv - nu)) * d


def evaluate_entailment(pairs, matrix, vocab, penalty_alpha=DEFAULT_PENALTY_ALPHA):
    """Spearman correlation between model scores and gold ratings.

    Pairs with either symbol missing from the vocabulary are skipped;
    returns (rho, coverage) with coverage = scored / total. Needs at
    least two scorable pairs.
    """
    if matrix.score_kind != POINCARE:
        raise ValueError("entailment scoring requires a ball-kind matrix")
    scored_gold = []
    u_ids, v_ids = [], []
    for pair in pairs:
        iu, iv = vocab.get(pair.u), vocab.get(pair.v)
        if iu is None or iv is None:
            continue
        u_ids.append(iu)
        v_ids.append(iv)
        scored_gold.append(pair.gold)
    if len(scored_gold) < 2:
        raise ValueError("need at least two pairs with both symbols known")
    u_rows = matrix.rows[np.array(u_ids)]
    v_rows = matrix.rows[np.array(v_ids)]
    norm_u = np.linalg.norm(u_rows, axis=1)
    norm_v = np.linalg.norm(v_rows, axis=1)
    d = poincare_distance(u_rows, v_rows)
    scores = -(1.0 + penalty_alpha * (norm_v - norm_u)) * d
    rho = spearman_rho(scores, np.array(scored_gold))
    coverage = len(scored_gold) / len(pairs) if pairs else 0.0
    return rho, coverage


def average_ranks(values):
    """Ranks 1..n with tied values sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman_rho(x, y):
    """Rank correlation with average-rank tie handling.

    Pearson correlation of the two rank vectors; raises when fewer than
    two pairs are given or either list is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("expected two equal-length vectors")
    if len(x) < 2:
        raise ValueError("need at least two pairs")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        raise ValueError("rank correlation undefined for a constant list")
    return float((dx * dy).sum() / denom)


def read_entailment_pairs(path):
    """Read `u<TAB>v<TAB>gold` lines; blank lines and # comments skipped."""
    out = []
    for lineno, line in _edge_lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}: line {lineno}: expected 3 columns")
        try:
            gold = float(fields[2])
            out.append(EntailmentPair(fields[0], fields[1], gold))
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out
