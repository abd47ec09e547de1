"""
Seeded synthetic languages for the zero-shot transfer experiment.

Outside tokens are unit vectors spread uniformly over the sphere; the tokens
of each entity type cluster around a type centre. A target language is the
source language with every token renamed and every vector rotated by R.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from xling.corpus import LabeledSequence, LabelScheme
from xling.embed import EmbeddingStore
from xling.errors import ConfigError

logger = logging.getLogger('xling.synthetic')


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    store: EmbeddingStore
    scheme: LabelScheme
    outside_tokens: Tuple[str, ...]
    entity_tokens: Dict[str, Tuple[str, ...]]


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, signs fixed)"""
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(d, d)))
    return q * np.where(np.diag(r) < 0.0, -1.0, 1.0)


def make_source_world(seed: int, vocab_size: int = 300, dim: int = 32,
                      entity_types: Sequence[str] = ('PER', 'LOC', 'ORG'),
                      entity_fraction: float = 0.3, spread: float = 0.15) -> SyntheticWorld:
    scheme = LabelScheme(tuple(entity_types))
    n_entity = int(vocab_size * entity_fraction)
    if n_entity < len(scheme.entity_types) or n_entity >= vocab_size:
        raise ConfigError(f'vocabulary of {vocab_size} cannot hold {len(scheme.entity_types)} entity types '
                          f'and outside tokens')

    rng = np.random.default_rng([seed, 11])
    vocab = [f'w{i:04d}' for i in range(vocab_size)]
    centres = _unit_rows(rng.normal(size=(len(scheme.entity_types), dim)))
    vectors = _unit_rows(rng.normal(size=(vocab_size, dim)))

    entity_tokens: Dict[str, List[str]] = {etype: [] for etype in scheme.entity_types}
    for i in range(n_entity):
        k = i % len(scheme.entity_types)
        vectors[i] = centres[k] + spread * rng.normal(size=dim) / np.sqrt(dim)
        entity_tokens[scheme.entity_types[k]].append(vocab[i])
    vectors = _unit_rows(vectors)

    store = EmbeddingStore(dim=dim, vocab=tuple(vocab), vectors=vectors)
    return SyntheticWorld(store=store, scheme=scheme, outside_tokens=tuple(vocab[n_entity:]),
                          entity_tokens={k: tuple(v) for k, v in entity_tokens.items()})


def make_sentences(world: SyntheticWorld, count: int, seed: int, min_length: int = 5,
                   max_length: int = 10, max_entities: int = 2) -> List[LabeledSequence]:
    """Outside-token sentences with up to max_entities one- or two-token entities"""
    rng = np.random.default_rng([seed, 12])
    scheme = world.scheme
    sentences = []
    for _ in range(count):
        length = int(rng.integers(min_length, max_length + 1))
        tokens = [world.outside_tokens[j] for j in rng.integers(0, len(world.outside_tokens), size=length)]
        tags = [0] * length
        for _ in range(int(rng.integers(1, max_entities + 1))):
            etype = scheme.entity_types[int(rng.integers(len(scheme.entity_types)))]
            size = int(rng.integers(1, 3))
            start = int(rng.integers(0, length - size + 1))
            # keep one outside token between entities
            if any(tags[max(start - 1, 0):min(start + size + 1, length)]):
                continue
            members = world.entity_tokens[etype]
            for offset in range(size):
                tokens[start + offset] = members[int(rng.integers(len(members)))]
                tags[start + offset] = scheme.begin_of(etype) if offset == 0 else scheme.inside_of(etype)
        sentences.append(LabeledSequence(tuple(tokens), tuple(tags)))
    return sentences


def make_target_world(source: SyntheticWorld, rotation: np.ndarray, prefix: str = 't_') -> SyntheticWorld:
    """Rename every token with prefix and rotate every vector: x = R y"""
    rotation = np.asarray(rotation, dtype=np.float64)
    store = EmbeddingStore(dim=source.store.dim, vocab=tuple(prefix + t for t in source.store.vocab),
                           vectors=source.store.vectors @ rotation.T)
    return SyntheticWorld(store=store, scheme=source.scheme,
                          outside_tokens=tuple(prefix + t for t in source.outside_tokens),
                          entity_tokens={k: tuple(prefix + t for t in v) for k, v in source.entity_tokens.items()})


def translate(sentences: Sequence[LabeledSequence], prefix: str = 't_') -> List[LabeledSequence]:
    return [LabeledSequence(tuple(prefix + t for t in s.tokens), s.tags) for s in sentences]


def dictionary_pairs(source: SyntheticWorld, prefix: str = 't_') -> List[Tuple[str, str]]:
    """(target, source) translation pair for every source token"""
    return [(prefix + token, token) for token in source.store.vocab]
