"""
Word embeddings: vector-file IO, normalization, subword lookup, nearest
neighbours, and a desk-scale skip-gram trainer with negative sampling.

Vectors are float64 numpy matrices, one row per vocabulary token. Words that
are not in the vocabulary are composed from character n-gram vectors when the
store carries an n-gram table, and fall back to the zero vector otherwise.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, TextIO, Tuple

import numpy as np

from utils import format_real
from xling.errors import ConfigError, CorpusFormatError, EmbeddingFormatError, ShapeError

logger = logging.getLogger('xling.embed')


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    dim: int
    vocab: Tuple[str, ...]
    vectors: np.ndarray
    ngram_table: Optional[Dict[str, np.ndarray]] = None
    ngram_min: int = 3
    ngram_max: int = 4
    ngram_brackets: bool = False
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError(f'dimension must be positive, got {self.dim}')
        vocab = tuple(self.vocab)
        vectors = np.array(self.vectors, dtype=np.float64)
        if not vocab and vectors.size == 0:
            vectors = np.zeros((0, self.dim))
        if vectors.shape != (len(vocab), self.dim):
            raise ShapeError(f'expected {len(vocab)}x{self.dim} vectors, got {vectors.shape}')

        index: Dict[str, int] = {}
        for i, token in enumerate(vocab):
            if token in index:
                raise EmbeddingFormatError(f'duplicate token {token!r}')
            index[token] = i
        vectors.setflags(write=False)

        table = None
        if self.ngram_table is not None:
            table = {}
            for gram, vec in self.ngram_table.items():
                row = np.array(vec, dtype=np.float64)
                if row.shape != (self.dim,):
                    raise ShapeError(f'n-gram {gram!r} has shape {row.shape}, expected ({self.dim},)')
                row.setflags(write=False)
                table[gram] = row

        object.__setattr__(self, 'vocab', vocab)
        object.__setattr__(self, 'vectors', vectors)
        object.__setattr__(self, 'ngram_table', table)
        object.__setattr__(self, 'index', index)

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.index


# ---------------------------------------------------------------------------
# vector file format

def _parse_header(line: str) -> Tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise EmbeddingFormatError("malformed header, expected '<count> <dim>'", line=1)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise EmbeddingFormatError(f'malformed header {line.strip()!r}', line=1)
    if count < 0 or dim < 1:
        raise EmbeddingFormatError(f'header values out of range: {count} {dim}', line=1)
    return count, dim


def _parse_row(line: str, dim: int, lineno: int) -> Tuple[str, List[float]]:
    parts = line.rstrip('\r\n').rstrip(' ').split(' ')
    token = parts[0]
    if not token:
        raise EmbeddingFormatError('empty token', line=lineno)
    if len(parts) - 1 != dim:
        raise EmbeddingFormatError(f'expected {dim} values after {token!r}, got {len(parts) - 1}',
                                   line=lineno)
    try:
        return token, [float(value) for value in parts[1:]]
    except ValueError:
        raise EmbeddingFormatError(f'non-numeric value in row for {token!r}', line=lineno)


def _read_rows(source: Iterable[str], limit: Optional[int]) -> Tuple[int, List[str], List[List[float]]]:
    lines = iter(source)
    header = next(lines, None)
    if header is None:
        raise EmbeddingFormatError("missing '<count> <dim>' header", line=1)
    count, dim = _parse_header(header)
    wanted = count if limit is None else min(count, limit)

    tokens: List[str] = []
    rows: List[List[float]] = []
    first_seen: Dict[str, int] = {}
    lineno = 1
    for lineno, line in enumerate(lines, start=2):
        if len(tokens) >= wanted:
            break
        token, values = _parse_row(line, dim, lineno)
        if token in first_seen:
            raise EmbeddingFormatError(f'duplicate token {token!r} (first seen at line {first_seen[token]})',
                                       line=lineno)
        first_seen[token] = lineno
        tokens.append(token)
        rows.append(values)

    if len(tokens) < wanted:
        raise EmbeddingFormatError(f'header declares {count} rows, file ends after {len(tokens)}',
                                   line=lineno)
    return dim, tokens, rows


def load_embeddings(source: Iterable[str], limit: Optional[int] = None,
                    ngram_source: Optional[Iterable[str]] = None) -> EmbeddingStore:
    """Read '<count> <dim>' then '<token> <v1> ... <vdim>' rows, in file order"""
    if limit is not None and limit < 1:
        raise ConfigError(f'limit must be positive, got {limit}')

    dim, tokens, rows = _read_rows(source, limit)
    table = load_ngram_table(ngram_source, dim) if ngram_source is not None else None
    vectors = np.array(rows, dtype=np.float64) if rows else np.zeros((0, dim))

    logger.debug('loaded %d vectors of dimension %d', len(tokens), dim)
    return EmbeddingStore(dim=dim, vocab=tuple(tokens), vectors=vectors, ngram_table=table)


def load_ngram_table(source: Iterable[str], dim: int) -> Dict[str, np.ndarray]:
    """Read the n-gram sidecar (same row shape as the vector file)"""
    table_dim, grams, rows = _read_rows(source, None)
    if table_dim != dim:
        raise EmbeddingFormatError(f'n-gram table dimension {table_dim} does not match {dim}', line=1)
    return {gram: np.array(row) for gram, row in zip(grams, rows)}


def save_embeddings(store: EmbeddingStore, sink: TextIO, ngram_sink: Optional[TextIO] = None) -> None:
    sink.write(f'{len(store.vocab)} {store.dim}\n')
    for token, row in zip(store.vocab, store.vectors):
        sink.write(token + ' ' + ' '.join(format_real(x) for x in row) + '\n')

    if ngram_sink is not None and store.ngram_table is not None:
        ngram_sink.write(f'{len(store.ngram_table)} {store.dim}\n')
        for gram in sorted(store.ngram_table):
            ngram_sink.write(gram + ' ' + ' '.join(format_real(x) for x in store.ngram_table[gram]) + '\n')


# ---------------------------------------------------------------------------
# queries

def normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Divide each nonzero row by its L2 norm; zero rows stay zero"""
    norms = np.linalg.norm(store.vectors, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return replace(store, vectors=store.vectors / safe[:, None])


def char_ngrams(word: str, nmin: int, nmax: int, brackets: bool = False) -> Set[str]:
    """Contiguous substrings with length in [nmin, nmax]

    With brackets the word is wrapped as '<word>' first and the wrapped word
    itself is left out, which matches common pretrained subword models.
    """
    if nmin < 1 or nmax < nmin:
        raise ConfigError(f'invalid n-gram range [{nmin}, {nmax}]')
    text = f'<{word}>' if brackets else word
    grams = set()
    for n in range(nmin, nmax + 1):
        for start in range(len(text) - n + 1):
            grams.add(text[start:start + n])
    if brackets:
        grams.discard(text)
    return grams


def lookup(store: EmbeddingStore, word: str) -> np.ndarray:
    """Stored row, else sum of known n-gram vectors, else zeros"""
    row = store.index.get(word)
    if row is not None:
        return store.vectors[row].copy()

    vector = np.zeros(store.dim)
    if store.ngram_table:
        for gram in sorted(char_ngrams(word, store.ngram_min, store.ngram_max, store.ngram_brackets)):
            hit = store.ngram_table.get(gram)
            if hit is not None:
                vector += hit
    return vector


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is zero"""
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def nearest(store: EmbeddingStore, query: np.ndarray, k: int) -> List[Tuple[str, float]]:
    """Top-k tokens by cosine, descending, ties in vocabulary order"""
    if k < 1:
        raise ConfigError(f'k must be positive, got {k}')
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (store.dim,):
        raise ShapeError(f'query has shape {query.shape}, expected ({store.dim},)')

    denom = np.linalg.norm(store.vectors, axis=1) * np.linalg.norm(query)
    cosines = np.zeros(len(store.vocab))
    nonzero = denom > 0.0
    cosines[nonzero] = (store.vectors[nonzero] @ query) / denom[nonzero]

    order = np.argsort(-cosines, kind='stable')[:k]
    return [(store.vocab[i], float(cosines[i])) for i in order]


# ---------------------------------------------------------------------------
# skip-gram with negative sampling

@dataclass
class SkipgramConfig:
    dim: int = 300
    window: int = 5
    negatives: int = 5
    noise_exponent: float = 0.75
    epochs: int = 5
    learning_rate: float = 0.025
    ngram_min: int = 3
    ngram_max: int = 4
    ngram_brackets: bool = False
    seed: int = 1

    def __post_init__(self):
        if self.dim < 1 or self.window < 1:
            raise ConfigError('dim and window must be positive')
        if self.negatives < 0 or self.epochs < 0:
            raise ConfigError('negatives and epochs must be non-negative')
        if not 0.0 <= self.noise_exponent <= 1.0:
            raise ConfigError(f'noise_exponent must lie in [0, 1], got {self.noise_exponent}')
        if self.learning_rate <= 0.0:
            raise ConfigError('learning_rate must be positive')
        if self.subwords_enabled and self.ngram_min > self.ngram_max:
            raise ConfigError(f'ngram_min {self.ngram_min} exceeds ngram_max {self.ngram_max}')
        if self.seed < 0:
            raise ConfigError('seed must be non-negative')

    @property
    def subwords_enabled(self) -> bool:
        return self.ngram_min > 0 and self.ngram_max > 0


@dataclass
class SkipgramModel:
    vocab: Tuple[str, ...]
    counts: np.ndarray
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    ngram_vectors: np.ndarray
    ngrams: Tuple[str, ...]
    word_ngrams: List[np.ndarray]
    config: SkipgramConfig
    history: List[float] = field(default_factory=list)

    def center_vector(self, index: int) -> np.ndarray:
        """Word vector plus its n-gram vectors"""
        vector = self.input_vectors[index].copy()
        rows = self.word_ngrams[index]
        if rows.size:
            vector += self.ngram_vectors[rows].sum(axis=0)
        return vector

    def to_store(self) -> EmbeddingStore:
        vectors = np.array([self.center_vector(i) for i in range(len(self.vocab))]) \
            if self.vocab else np.zeros((0, self.config.dim))
        table = None
        if self.config.subwords_enabled:
            table = {gram: self.ngram_vectors[i] for i, gram in enumerate(self.ngrams)}
        return EmbeddingStore(dim=self.config.dim, vocab=self.vocab, vectors=vectors,
                              ngram_table=table,
                              ngram_min=self.config.ngram_min or 3,
                              ngram_max=self.config.ngram_max or 4,
                              ngram_brackets=self.config.ngram_brackets)


@dataclass
class SkipgramGradients:
    # one vector serves the word row and every n-gram row of the center word
    center: np.ndarray
    output: Dict[int, np.ndarray]


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def build_vocab(corpus: Sequence[Sequence[str]]) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Tokens by descending count, ties by first occurrence"""
    counter: Counter = Counter()
    first: Dict[str, int] = {}
    for sentence in corpus:
        for token in sentence:
            counter[token] += 1
            first.setdefault(token, len(first))
    vocab = tuple(sorted(counter, key=lambda t: (-counter[t], first[t])))
    return vocab, np.array([counter[t] for t in vocab], dtype=np.float64)


def noise_distribution(counts: np.ndarray, exponent: float) -> np.ndarray:
    weights = np.power(counts, exponent)
    return weights / weights.sum()


def init_skipgram(vocab: Sequence[str], counts: np.ndarray, config: SkipgramConfig) -> SkipgramModel:
    """Inputs uniform in +-0.5/dim, outputs zero, n-grams like inputs"""
    rng = np.random.default_rng([config.seed, 0])
    bound = 0.5 / config.dim
    input_vectors = rng.uniform(-bound, bound, size=(len(vocab), config.dim))
    output_vectors = np.zeros((len(vocab), config.dim))

    ngrams: Tuple[str, ...] = ()
    word_grams: List[Set[str]] = [set() for _ in vocab]
    if config.subwords_enabled:
        word_grams = [char_ngrams(w, config.ngram_min, config.ngram_max, config.ngram_brackets)
                      for w in vocab]
        ngrams = tuple(sorted(set().union(*word_grams)))
    gram_index = {gram: i for i, gram in enumerate(ngrams)}
    ngram_vectors = rng.uniform(-bound, bound, size=(len(ngrams), config.dim))
    word_ngrams = [np.array(sorted(gram_index[g] for g in grams), dtype=np.int64)
                   for grams in word_grams]

    return SkipgramModel(vocab=tuple(vocab), counts=np.asarray(counts, dtype=np.float64),
                         input_vectors=input_vectors, output_vectors=output_vectors,
                         ngram_vectors=ngram_vectors, ngrams=ngrams,
                         word_ngrams=word_ngrams, config=config)


def _objective_and_gradients(model: SkipgramModel, center: int, context: int,
                             negatives: Sequence[int]) -> Tuple[float, SkipgramGradients]:
    v = model.center_vector(center)
    u = model.output_vectors[context]
    score = float(u @ v)
    objective = float(_log_sigmoid(score))
    weight = 1.0 - float(_sigmoid(score))
    grad_center = weight * u
    grad_output: Dict[int, np.ndarray] = {int(context): weight * v}

    for neg in negatives:
        neg = int(neg)
        un = model.output_vectors[neg]
        score = float(un @ v)
        objective += float(_log_sigmoid(-score))
        s = float(_sigmoid(score))
        grad_center = grad_center - s * un
        if neg in grad_output:
            grad_output[neg] = grad_output[neg] - s * v
        else:
            grad_output[neg] = -s * v

    return objective, SkipgramGradients(center=grad_center, output=grad_output)


def skipgram_neg_objective(model: SkipgramModel, center: int, context: int,
                           negatives: Sequence[int]) -> float:
    """log s(u_ctx.v) + sum log s(-u_neg.v), v the composed center vector"""
    objective, _ = _objective_and_gradients(model, center, context, negatives)
    return objective


def skipgram_neg_gradients(model: SkipgramModel, center: int, context: int,
                           negatives: Sequence[int]) -> SkipgramGradients:
    _, grads = _objective_and_gradients(model, center, context, negatives)
    return grads


def skipgram_softmax_log_prob(model: SkipgramModel, center: int, context: int) -> float:
    """Full-softmax log p(context | center); O(|vocab|), diagnostics only"""
    scores = model.output_vectors @ model.center_vector(center)
    peak = scores.max()
    return float(scores[context] - peak - np.log(np.exp(scores - peak).sum()))


def apply_gradients(model: SkipgramModel, center: int, grads: SkipgramGradients,
                    learning_rate: float) -> None:
    """Ascent step on the NEG objective"""
    step = learning_rate * grads.center
    model.input_vectors[center] += step
    rows = model.word_ngrams[center]
    if rows.size:
        model.ngram_vectors[rows] += step
    for index, grad in grads.output.items():
        model.output_vectors[index] += learning_rate * grad


def _encode(corpus: Sequence[Sequence[str]], vocab: Sequence[str]) -> List[np.ndarray]:
    index = {w: i for i, w in enumerate(vocab)}
    return [np.array([index[t] for t in sentence], dtype=np.int64) for sentence in corpus if len(sentence)]


def _draw_negatives(rng: np.random.Generator, cdf: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    draws = np.searchsorted(cdf, rng.random(k), side='right')
    return np.minimum(draws, len(cdf) - 1)


def build_probe_set(corpus: Sequence[Sequence[str]], model: SkipgramModel, size: int,
                    seed: int) -> List[Tuple[int, int, Tuple[int, ...]]]:
    """Fixed (center, context, negatives) triples drawn from the corpus"""
    encoded = [s for s in _encode(corpus, model.vocab) if len(s) > 1]
    if not encoded:
        raise CorpusFormatError('probe set needs a sentence with at least two tokens')
    cdf = np.cumsum(noise_distribution(model.counts, model.config.noise_exponent))
    rng = np.random.default_rng([seed, 2])
    window = model.config.window

    triples = []
    while len(triples) < size:
        sentence = encoded[rng.integers(len(encoded))]
        t = int(rng.integers(len(sentence)))
        candidates = [j for j in range(max(0, t - window), min(len(sentence), t + window + 1)) if j != t]
        j = candidates[int(rng.integers(len(candidates)))]
        negatives = tuple(int(n) for n in _draw_negatives(rng, cdf, model.config.negatives))
        triples.append((int(sentence[t]), int(sentence[j]), negatives))
    return triples


def probe_objective(model: SkipgramModel, triples: Sequence[Tuple[int, int, Sequence[int]]]) -> float:
    """Mean NEG objective over a fixed probe set"""
    return float(np.mean([skipgram_neg_objective(model, c, o, n) for c, o, n in triples]))


def train_skipgram(corpus: Sequence[Sequence[str]],
                   config: SkipgramConfig) -> Tuple[EmbeddingStore, SkipgramModel]:
    """Per-pair SGD on the NEG objective; deterministic given config.seed"""
    sentences = [list(s) for s in corpus]
    if not any(sentences):
        raise CorpusFormatError('cannot train embeddings on an empty corpus')

    vocab, counts = build_vocab(sentences)
    model = init_skipgram(vocab, counts, config)
    encoded = _encode(sentences, vocab)
    cdf = np.cumsum(noise_distribution(counts, config.noise_exponent))
    rng = np.random.default_rng([config.seed, 1])
    logger.info('skip-gram: %d words, %d n-grams, dim %d', len(vocab), len(model.ngrams), config.dim)

    for epoch in range(1, config.epochs + 1):
        total, pairs = 0.0, 0
        for sentence in encoded:
            length = len(sentence)
            for t in range(length):
                center = int(sentence[t])
                for j in range(max(0, t - config.window), min(length, t + config.window + 1)):
                    if j == t:
                        continue
                    negatives = _draw_negatives(rng, cdf, config.negatives)
                    objective, grads = _objective_and_gradients(model, center, int(sentence[j]), negatives)
                    apply_gradients(model, center, grads, config.learning_rate)
                    total += objective
                    pairs += 1
        mean = total / max(pairs, 1)
        model.history.append(mean)
        logger.info('skip-gram epoch %d/%d: mean NEG objective %.6f over %d pairs',
                    epoch, config.epochs, mean, pairs)

    return model.to_store(), model
