"""Edge-list ingestion, transitive closure, held-out splits, negatives.

Edges are ordered id pairs (u, v) read as "u is-a v" for directed data.
Undirected pairs are canonicalized to (min, max) and expanded to both
orientations only at training time.
"""

from dataclasses import dataclass

import numpy as np

from .store import Vocabulary

TRAIN, VALID, TEST = 0, 1, 2
TAG_NAMES = ("train", "valid", "test")
TAG_IDS = {name: i for i, name in enumerate(TAG_NAMES)}

DEFAULT_NEGATIVES = 10


class EdgeFileError(ValueError):
    """Malformed edge-list line."""


class GraphCycleError(ValueError):
    """Directed input contains a cycle; the closure is undefined."""

    def __init__(self, node_symbol):
        super().__init__(f"cycle detected through node {node_symbol!r}")
        self.node_symbol = node_symbol


class SplitError(ValueError):
    """Requested held-out fractions cannot be satisfied."""


@dataclass
class EdgeSet:
    """Deduplicated ordered id pairs with optional train/valid/test tags."""

    pairs: np.ndarray
    directed: bool = True
    tags: np.ndarray | None = None

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if self.tags is not None:
            self.tags = np.asarray(self.tags, dtype=np.int64)
            if self.tags.shape != (len(self.pairs),):
                raise ValueError("tags must align with pairs")

    def __len__(self):
        return len(self.pairs)

    def subset(self, tag):
        """Edges carrying the given tag (everything is train when untagged)."""
        if self.tags is None:
            pairs = self.pairs if tag == TRAIN else np.empty((0, 2), dtype=np.int64)
            return EdgeSet(pairs, directed=self.directed)
        return EdgeSet(self.pairs[self.tags == tag], directed=self.directed)

    def pair_set(self):
        return {(int(u), int(v)) for u, v in self.pairs}

    def neighbor_sets(self, n):
        """Per-source sets of observed targets over ``n`` ids.

        Directed data indexes by the first element only; undirected data
        produces the symmetric adjacency.
        """
        adj = [set() for _ in range(n)]
        for u, v in self.pairs:
            adj[u].add(int(v))
            if not self.directed:
                adj[v].add(int(u))
        return adj

    def training_pairs(self):
        """Ordered pairs seen by the trainer: both orientations if undirected."""
        if self.directed:
            return self.pairs
        return np.vstack([self.pairs, self.pairs[:, ::-1]])


def make_edge_set(pairs, directed=True, tags=None):
    """Canonicalize, reject self-loops, and drop duplicate pairs."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("self-loops are not allowed")
    if not directed:
        pairs = np.sort(pairs, axis=1)
    uniq, idx = np.unique(pairs, axis=0, return_index=True)
    if tags is None:
        return EdgeSet(uniq, directed=directed)
    tags = np.asarray(tags, dtype=np.int64)
    return EdgeSet(uniq, directed=directed, tags=tags[idx])


def _edge_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def parse_edge_list(path, directed=True):
    """Read '<symbol>TAB<symbol>' lines into (EdgeSet, Vocabulary).

    Vocabulary ids follow first appearance. Duplicate lines collapse;
    self-loops and lines without exactly one tab are errors that name the
    line.
    """
    vocab = Vocabulary()
    pairs = []
    for lineno, line in _edge_lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise EdgeFileError(f"{path}: line {lineno}: expected exactly one tab")
        u_sym, v_sym = fields
        if u_sym == v_sym:
            raise EdgeFileError(f"{path}: line {lineno}: self-loop on {u_sym!r}")
        try:
            pairs.append((vocab.add(u_sym), vocab.add(v_sym)))
        except ValueError as exc:
            raise EdgeFileError(f"{path}: line {lineno}: {exc}") from None
    return make_edge_set(pairs, directed=directed), vocab


def read_split_file(path, directed=True):
    """Like parse_edge_list but with an optional third train/valid/test column."""
    vocab = Vocabulary()
    pairs = []
    tags = []
    for lineno, line in _edge_lines(path):
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise EdgeFileError(f"{path}: line {lineno}: expected 2 or 3 columns")
        u_sym, v_sym = fields[0], fields[1]
        if u_sym == v_sym:
            raise EdgeFileError(f"{path}: line {lineno}: self-loop on {u_sym!r}")
        tag_name = fields[2] if len(fields) == 3 else "train"
        if tag_name not in TAG_IDS:
            raise EdgeFileError(f"{path}: line {lineno}: unknown split tag {tag_name!r}")
        try:
            pairs.append((vocab.add(u_sym), vocab.add(v_sym)))
        except ValueError as exc:
            raise EdgeFileError(f"{path}: line {lineno}: {exc}") from None
        tags.append(TAG_IDS[tag_name])
    return make_edge_set(pairs, directed=directed, tags=np.array(tags)), vocab


def write_edge_file(edges, vocab, path):
    """Write edges as TSV, appending the split column when tags exist."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, (u, v) in enumerate(edges.pairs):
            line = f"{vocab.symbol_of(int(u))}\t{vocab.symbol_of(int(v))}"
            if edges.tags is not None:
                line += f"\t{TAG_NAMES[edges.tags[i]]}"
            fh.write(line + "\n")


def _find_cycle_node(remaining, out_adj):
    # Walk forward through the residual graph; the first repeat is on a cycle.
    start = min(remaining)
    seen = {}
    node = start
    step = 0
    while node not in seen:
        seen[node] = step
        step += 1
        node = min(w for w in out_adj[node] if w in remaining)
    return node


def transitive_closure(edges, vocab=None):
    """All ordered pairs (u, w) with w reachable from u along >= 1 edges.

    Input must be a DAG; a cycle raises GraphCycleError naming a node on
    the cycle (using ``vocab`` symbols when given). Output pairs are
    sorted by id.
    """
    if not edges.directed:
        raise ValueError("transitive closure requires directed edges")
    n = 1 + int(edges.pairs.max()) if len(edges) else 0
    out_adj = [set() for _ in range(n)]
    indeg = np.zeros(n, dtype=np.int64)
    for u, v in edges.pairs:
        out_adj[u].add(int(v))
        indeg[v] += 1

    order = []
    queue = [i for i in range(n) if indeg[i] == 0]
    while queue:
        node = queue.pop()
        order.append(node)
        for w in out_adj[node]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if len(order) < n:
        remaining = {i for i in range(n) if indeg[i] > 0}
        node = _find_cycle_node(remaining, out_adj)
        symbol = vocab.symbol_of(node) if vocab is not None else str(node)
        raise GraphCycleError(symbol)

    reach = [set() for _ in range(n)]
    for node in reversed(order):
        acc = set()
        for w in out_adj[node]:
            acc.add(w)
            acc |= reach[w]
        reach[node] = acc
    closure_pairs = sorted((u, w) for u in range(n) for w in reach[u])
    return EdgeSet(np.array(closure_pairs, dtype=np.int64).reshape(-1, 2), directed=True)


def split_links(closure, valid_frac, test_frac, seed):
    """Tag closure edges train/valid/test for link prediction.

    Held-out candidates exclude any edge touching a root (no outgoing
    edge) or leaf (no incoming edge) of the closure, and every node must
    keep at least one training edge. Quotas are fractions of the whole
    closure, rounded to nearest. Raises SplitError with the achievable
    count when the quotas cannot be met.
    """
    if not closure.directed:
        raise ValueError("split_links requires a directed closure")
    if not (0 <= valid_frac < 0.5 and 0 <= test_frac < 0.5 and valid_frac + test_frac < 1):
        raise ValueError("fractions must lie in [0, 0.5) and sum below 1")
    n_edges = len(closure)
    n = 1 + int(closure.pairs.max()) if n_edges else 0
    n_valid = round(valid_frac * n_edges)
    n_test = round(test_frac * n_edges)
    tags = np.full(n_edges, TRAIN, dtype=np.int64)
    if n_valid + n_test == 0:
        return EdgeSet(closure.pairs, directed=True, tags=tags)

    outdeg = np.zeros(n, dtype=np.int64)
    indeg = np.zeros(n, dtype=np.int64)
    for u, v in closure.pairs:
        outdeg[u] += 1
        indeg[v] += 1
    interior = (outdeg > 0) & (indeg > 0)
    candidates = np.nonzero(interior[closure.pairs[:, 0]] & interior[closure.pairs[:, 1]])[0]

    rng = np.random.default_rng(seed)
    rng.shuffle(candidates)
    train_deg = outdeg + indeg
    held = 0
    for edge_idx in candidates:
        if held == n_valid + n_test:
            break
        u, v = closure.pairs[edge_idx]
        if train_deg[u] < 2 or train_deg[v] < 2:
            continue
        tags[edge_idx] = VALID if held < n_valid else TEST
        train_deg[u] -= 1
        train_deg[v] -= 1
        held += 1
    if held < n_valid + n_test:
        raise SplitError(
            f"cannot hold out {n_valid + n_test} of {n_edges} edges; "
            f"at most {held} are eligible (non-root, non-leaf, degree-safe)"
        )
    return EdgeSet(closure.pairs, directed=True, tags=tags)


def edges_from_symbol_pairs(symbol_pairs, directed=True):
    """Build (EdgeSet, Vocabulary) from in-memory symbol pairs."""
    vocab = Vocabulary()
    pairs = []
    for u_sym, v_sym in symbol_pairs:
        if u_sym == v_sym:
            raise ValueError(f"self-loop on {u_sym!r}")
        pairs.append((vocab.add(u_sym), vocab.add(v_sym)))
    return make_edge_set(pairs, directed=directed), vocab


def balanced_tree_edges(branching, depth):
    """Child-to-parent symbol pairs of a complete tree, breadth-first.

    Node symbols are 'n0' (root), 'n1', ... in level order. Each edge
    reads (child, parent), matching the is-a orientation.
    """
    if branching < 1 or depth < 0:
        raise ValueError("branching must be >= 1 and depth >= 0")
    pairs = []
    level = [0]
    next_id = 1
    for _ in range(depth):
        nxt = []
        for parent in level:
            for _ in range(branching):
                pairs.append((f"n{next_id}", f"n{parent}"))
                nxt.append(next_id)
                next_id += 1
        level = nxt
    return pairs


class NegativeSampler:
    """Uniform-with-rejection sampler over the non-neighbors of a node.

    For a source u the admissible set is every id v with (u, v) not
    observed, plus u itself. Draws are uniform over the vocabulary and
    rejected until admissible. Instances hold their own generator and are
    not shared across threads.
    """

    def __init__(self, edges, n_symbols, seed, k=DEFAULT_NEGATIVES):
        if k < 0:
            raise ValueError("k must be non-negative")
        self.adjacency = edges.neighbor_sets(n_symbols)
        self.n_symbols = n_symbols
        self.k = k
        self.rng = np.random.default_rng(seed)

    def sample(self, u):
        """k admissible ids for source u, drawn with replacement."""
        u = int(u)
        blocked = self.adjacency[u]
        if self.n_symbols - len(blocked) < 2:
            # u is connected to (almost) everything; only u itself remains.
            return np.full(self.k, u, dtype=np.int64)
        out = np.empty(self.k, dtype=np.int64)
        filled = 0
        while filled < self.k:
            draws = self.rng.integers(0, self.n_symbols, size=self.k - filled)
            for cand in draws:
                if cand == u or int(cand) not in blocked:
                    out[filled] = cand
                    filled += 1
        return out

    def sample_block(self, sources):
        """Stack of per-source samples, one row per entry of ``sources``."""
        return np.stack([self.sample(u) for u in sources])
