"""
IOB-tagged corpora in CoNLL-style column format.

Internally every sequence is IOB2 (each entity starts with B-). Corpora that
use orphan I- tags are repaired on ingestion.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from xling.errors import ConfigError, CorpusFormatError, IobError

logger = logging.getLogger('xling.corpus')

OUTSIDE = 'O'
DOCSTART = '-DOCSTART-'
DEFAULT_ENTITY_TYPES = ('PER', 'LOC', 'ORG', 'MISC')


@dataclass(frozen=True)
class LabelScheme:
    entity_types: Tuple[str, ...] = DEFAULT_ENTITY_TYPES
    tag_set: Tuple[str, ...] = field(init=False)
    index: Dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        types = tuple(self.entity_types)
        if len(set(types)) != len(types):
            raise ConfigError(f'duplicate entity types in {types}')
        for etype in types:
            if not etype or '-' in etype or etype == OUTSIDE or any(c.isspace() for c in etype):
                raise ConfigError(f'invalid entity type {etype!r}')
        tags = [OUTSIDE]
        for etype in types:
            tags += [f'B-{etype}', f'I-{etype}']
        object.__setattr__(self, 'entity_types', types)
        object.__setattr__(self, 'tag_set', tuple(tags))
        object.__setattr__(self, 'index', {tag: i for i, tag in enumerate(tags)})

    @property
    def size(self) -> int:
        return len(self.tag_set)

    @classmethod
    def from_tags(cls, tags: Iterable[str]) -> 'LabelScheme':
        """Scheme with entity types in order of first appearance"""
        types: List[str] = []
        for tag in tags:
            if tag == OUTSIDE:
                continue
            if len(tag) < 3 or tag[:2] not in ('B-', 'I-'):
                raise IobError(f'not an IOB tag: {tag!r}')
            if tag[2:] not in types:
                types.append(tag[2:])
        return cls(tuple(types))

    def encode(self, tags: Iterable[str]) -> Tuple[int, ...]:
        try:
            return tuple(self.index[tag] for tag in tags)
        except KeyError as e:
            raise IobError(f'tag {e.args[0]!r} is not in the scheme')

    def decode(self, indices: Iterable[int]) -> Tuple[str, ...]:
        return tuple(self.tag_set[int(i)] for i in indices)

    def is_begin(self, index: int) -> bool:
        return index > 0 and index % 2 == 1

    def is_inside(self, index: int) -> bool:
        return index > 0 and index % 2 == 0

    def etype(self, index: int) -> Optional[str]:
        return None if index == 0 else self.entity_types[(index - 1) // 2]

    def begin_of(self, etype: str) -> int:
        return self.index[f'B-{etype}']

    def inside_of(self, etype: str) -> int:
        return self.index[f'I-{etype}']


@dataclass(frozen=True)
class LabeledSequence:
    tokens: Tuple[str, ...]
    tags: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'tokens', tuple(self.tokens))
        object.__setattr__(self, 'tags', tuple(int(t) for t in self.tags))
        if len(self.tokens) != len(self.tags):
            raise CorpusFormatError(f'{len(self.tokens)} tokens but {len(self.tags)} tags')

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class EntitySpan:
    start: int
    end: int
    etype: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise IobError(f'empty or negative span ({self.start}, {self.end})')


class Violation(NamedTuple):
    position: int
    kind: str


ORPHAN_INSIDE = 'orphan-inside'
TYPE_SWITCH = 'type-switch'


def _check_tags(tags: Sequence[int], scheme: LabelScheme) -> None:
    for t in tags:
        if not 0 <= int(t) < scheme.size:
            raise IobError(f'tag index {t} outside scheme of size {scheme.size}')


def validate_iob(tags: Sequence[int], scheme: LabelScheme) -> List[Violation]:
    """Every I-T not preceded by B-T or I-T"""
    _check_tags(tags, scheme)
    violations = []
    prev = 0
    for position, tag in enumerate(tags):
        if scheme.is_inside(tag):
            if prev == 0:
                violations.append(Violation(position, ORPHAN_INSIDE))
            elif scheme.etype(prev) != scheme.etype(tag):
                violations.append(Violation(position, TYPE_SWITCH))
        prev = tag
    return violations


def canonicalize_iob(tags: Sequence[int], scheme: LabelScheme) -> Tuple[int, ...]:
    """Rewrite each violating I-T as B-T"""
    _check_tags(tags, scheme)
    out = []
    prev = 0
    for tag in tags:
        tag = int(tag)
        if scheme.is_inside(tag) and (prev == 0 or scheme.etype(prev) != scheme.etype(tag)):
            tag -= 1
        out.append(tag)
        prev = tag
    return tuple(out)


def entity_spans(tags: Sequence[int], scheme: LabelScheme) -> List[EntitySpan]:
    violations = validate_iob(tags, scheme)
    if violations:
        first = violations[0]
        raise IobError(f'invalid IOB at position {first.position} ({first.kind})')

    spans = []
    start = None
    for position, tag in enumerate(list(tags) + [0]):
        if start is not None and not scheme.is_inside(tag):
            spans.append(EntitySpan(start, position, scheme.etype(tags[start])))
            start = None
        if scheme.is_begin(tag):
            start = position
    return spans


def spans_to_tags(spans: Iterable[EntitySpan], length: int, scheme: LabelScheme) -> Tuple[int, ...]:
    tags = [0] * length
    for span in sorted(spans):
        if span.end > length:
            raise IobError(f'span ({span.start}, {span.end}) past sequence end {length}')
        if any(tags[span.start:span.end]):
            raise IobError(f'span ({span.start}, {span.end}) overlaps another span')
        tags[span.start] = scheme.begin_of(span.etype)
        for position in range(span.start + 1, span.end):
            tags[position] = scheme.inside_of(span.etype)
    return tuple(tags)


def _detect_separator(lines: Sequence[str]) -> str:
    for line in lines:
        text = line.rstrip('\r\n')
        if text.strip() and not text.startswith(DOCSTART):
            return '\t' if '\t' in text else ' '
    return '\t'


def parse_conll(source: Iterable[str], scheme: LabelScheme) -> List[LabeledSequence]:
    """Sentences of '<token><sep><tag>' lines (extra middle columns ignored)"""
    lines = list(source)
    separator = _detect_separator(lines)
    sequences: List[LabeledSequence] = []
    tokens: List[str] = []
    tags: List[int] = []
    repaired = 0

    def flush():
        nonlocal tokens, tags, repaired
        if tokens:
            canonical = canonicalize_iob(tags, scheme)
            repaired += sum(1 for a, b in zip(tags, canonical) if a != b)
            sequences.append(LabeledSequence(tuple(tokens), canonical))
        tokens, tags = [], []

    for lineno, line in enumerate(lines, start=1):
        text = line.rstrip('\r\n')
        if not text.strip():
            flush()
            continue
        if text.startswith(DOCSTART):
            continue
        if separator == ' ' and '\t' in text:
            raise CorpusFormatError('tab separator in a space-separated file', line=lineno)
        if separator == '\t' and '\t' not in text:
            raise CorpusFormatError('missing tab separator in a tab-separated file', line=lineno)
        columns = text.split(separator)
        if len(columns) < 2 or not columns[0] or not columns[-1]:
            raise CorpusFormatError(f'expected <token>{separator!r}<tag>, got {text!r}', line=lineno)
        tag = columns[-1].strip()
        if tag not in scheme.index:
            raise CorpusFormatError(f'unknown tag {tag!r}', line=lineno)
        tokens.append(columns[0])
        tags.append(scheme.index[tag])
    flush()

    if repaired:
        logger.warning('repaired %d IOB tags while reading the corpus', repaired)
    return sequences


def serialize_conll(sequences: Iterable[LabeledSequence], scheme: LabelScheme, separator: str = '\t') -> str:
    if separator not in ('\t', ' '):
        raise ConfigError(f'separator must be tab or space, got {separator!r}')
    out = []
    for sequence in sequences:
        for token, tag in zip(sequence.tokens, scheme.decode(sequence.tags)):
            if separator in token or '\n' in token:
                raise CorpusFormatError(f'token {token!r} contains the column separator')
            out.append(f'{token}{separator}{tag}\n')
        out.append('\n')
    return ''.join(out)


def split_dataset(data: Sequence, fractions: Tuple[float, float, float],
                  seed: int) -> Tuple[List, List, List]:
    """Seeded shuffle, then contiguous train/dev/test partition (floor sizes, remainder to train)"""
    if len(fractions) != 3 or any(f <= 0.0 for f in fractions):
        raise ConfigError(f'split fractions must be three positive numbers, got {fractions}')
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f'split fractions must sum to 1, got {sum(fractions)}')

    n = len(data)
    n_dev = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    n_train = n - n_dev - n_test

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [data[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_dev], shuffled[n_train + n_dev:]
