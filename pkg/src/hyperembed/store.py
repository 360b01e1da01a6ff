"""Embedding table ownership: initialization, vocabulary, checkpoints.

The checkpoint format is line-oriented UTF-8 text so that runs stay
diffable and language-neutral. Coordinates are serialized as shortest
round-trip decimals, which makes save/load the identity on float64 bits.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import BALL_EPSILON, POINCARE, SCORE_KINDS, TRANSLATIONAL

FORMAT_MAGIC = "#hyperembed v1"
TRANSLATION_SYMBOL = "__translation__"
INIT_RANGE = 0.001


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


class Vocabulary:
    """Bijective symbol <-> contiguous-id map, ids in first-appearance order."""

    def __init__(self, symbols=()):
        self._ids = {}
        self._symbols = []
        for s in symbols:
            self.add(s)

    def add(self, symbol):
        """Return the id for ``symbol``, assigning the next one if new."""
        existing = self._ids.get(symbol)
        if existing is not None:
            return existing
        if not symbol or "\t" in symbol or "\n" in symbol:
            raise ValueError(f"invalid symbol: {symbol!r}")
        if symbol == TRANSLATION_SYMBOL:
            raise ValueError(f"symbol {TRANSLATION_SYMBOL!r} is reserved")
        idx = len(self._symbols)
        self._ids[symbol] = idx
        self._symbols.append(symbol)
        return idx

    def id_of(self, symbol):
        return self._ids[symbol]

    def get(self, symbol):
        return self._ids.get(symbol)

    def symbol_of(self, idx):
        return self._symbols[idx]

    def __contains__(self, symbol):
        return symbol in self._ids

    def __len__(self):
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._symbols == other._symbols


@dataclass
class EmbeddingMatrix:
    """n x d table of embedding rows plus the score kind they live under.

    Poincare-kind rows are kept strictly inside the unit ball with margin
    ``epsilon``; the flat kinds are unconstrained. ``translation`` holds
    the global offset vector and is present exactly for the translational
    kind.
    """

    rows: np.ndarray
    score_kind: str = POINCARE
    epsilon: float = BALL_EPSILON
    translation: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind: {self.score_kind!r}")
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if (self.translation is not None) != (self.score_kind == TRANSLATIONAL):
            raise ValueError("translation vector present iff score kind is translational")
        if self.translation is not None:
            self.translation = np.asarray(self.translation, dtype=np.float64)

    @property
    def count(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]

    def ball_violations(self):
        """Ids of rows outside the allowed ball margin (empty for flat kinds)."""
        if self.score_kind != POINCARE:
            return np.array([], dtype=np.int64)
        norms_sq = np.einsum("ij,ij->i", self.rows, self.rows)
        limit = (1.0 - self.epsilon) ** 2 * (1 + 8 * np.finfo(np.float64).eps)
        return np.nonzero(norms_sq > limit)[0]


def init_embeddings(n, d, seed, score_kind=POINCARE, epsilon=BALL_EPSILON):
    """Fresh matrix with coordinates i.i.d. uniform on (-0.001, 0.001).

    Deterministic in (n, d, seed, score_kind): the same arguments always
    reproduce the same float64 bits. The translational offset starts at
    zero.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    rows = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(n, d))
    translation = np.zeros(d) if score_kind == TRANSLATIONAL else None
    return EmbeddingMatrix(rows, score_kind=score_kind, epsilon=epsilon, translation=translation)


def _format_row(coords):
    return ",".join(repr(float(c)) for c in coords)


def save_checkpoint(matrix, vocab, path):
    """Write matrix plus vocabulary as UTF-8 text; see load_checkpoint."""
    if len(vocab) != matrix.count:
        raise ValueError("vocabulary size does not match matrix rows")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"{FORMAT_MAGIC}\tdim={matrix.dim}\tscore={matrix.score_kind}"
            f"\tepsilon={repr(float(matrix.epsilon))}\n"
        )
        for idx, symbol in enumerate(vocab):
            fh.write(f"{symbol}\t{_format_row(matrix.rows[idx])}\n")
        if matrix.translation is not None:
            fh.write(f"{TRANSLATION_SYMBOL}\t{_format_row(matrix.translation)}\n")


def _parse_header(line):
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 4 or fields[0] != FORMAT_MAGIC:
        raise CheckpointError(f"line 1: bad header {line.strip()!r}")
    try:
        dim = int(fields[1].removeprefix("dim="))
        kind = fields[2].removeprefix("score=")
        epsilon = float(fields[3].removeprefix("epsilon="))
    except ValueError as exc:
        raise CheckpointError(f"line 1: bad header field ({exc})") from None
    if fields[1] == fields[1].removeprefix("dim=") or kind not in SCORE_KINDS:
        raise CheckpointError(f"line 1: bad header {line.strip()!r}")
    return dim, kind, epsilon


def load_checkpoint(path):
    """Read a checkpoint back as (EmbeddingMatrix, Vocabulary).

    The round trip through save_checkpoint is bit-exact. Errors name the
    offending line: wrong coordinate count, duplicate symbols, a
    ball-kind row with norm >= 1, or a misplaced translation row.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise CheckpointError("line 1: empty file")
        dim, kind, epsilon = _parse_header(header)
        vocab = Vocabulary()
        rows = []
        translation = None
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if translation is not None:
                raise CheckpointError(
                    f"line {lineno}: {TRANSLATION_SYMBOL} row must be last"
                )
            symbol, sep, payload = line.partition("\t")
            if not sep:
                raise CheckpointError(f"line {lineno}: missing coordinate column")
            try:
                coords = np.array([float(c) for c in payload.split(",")], dtype=np.float64)
            except ValueError:
                raise CheckpointError(f"line {lineno}: bad coordinate value") from None
            if coords.size != dim:
                raise CheckpointError(
                    f"line {lineno}: expected {dim} coordinates, got {coords.size}"
                )
            if not np.all(np.isfinite(coords)):
                raise CheckpointError(f"line {lineno}: non-finite coordinate")
            if symbol == TRANSLATION_SYMBOL:
                if kind != TRANSLATIONAL:
                    raise CheckpointError(
                        f"line {lineno}: translation row in a {kind} checkpoint"
                    )
                translation = coords
                continue
            if symbol in vocab:
                raise CheckpointError(f"line {lineno}: duplicate symbol {symbol!r}")
            if kind == POINCARE and float(coords @ coords) >= 1.0:
                raise CheckpointError(f"line {lineno}: row norm >= 1 for symbol {symbol!r}")
            try:
                vocab.add(symbol)
            except ValueError as exc:
                raise CheckpointError(f"line {lineno}: {exc}") from None
            rows.append(coords)
    if not rows:
        raise CheckpointError("checkpoint has no embedding rows")
    if kind == TRANSLATIONAL and translation is None:
        raise CheckpointError(f"missing {TRANSLATION_SYMBOL} row")
    matrix = EmbeddingMatrix(
        np.vstack(rows), score_kind=kind, epsilon=epsilon, translation=translation
    )
    return matrix, vocab
