"""
BiLSTM-CRF tagger: embed (and optionally align) tokens, encode with the
BiLSTM stack, score with the CRF, decode with Viterbi.

Embeddings stay frozen during training so a model trained on the source
space tags any target space that has been mapped into it.
"""

import copy
import json
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from xling.align import AlignmentMap
from xling.corpus import LabeledSequence, LabelScheme
from xling.crf import (CrfParams, crf_gradients, emission_gradients, emission_scores, init_crf,
                       iob_transition_mask, log_likelihood, marginals, viterbi)
from xling.embed import EmbeddingStore, lookup
from xling.errors import ConfigError, ModelFormatError, ModelVersionError, ShapeError, TrainingError
from xling.net import BilstmParams, LstmParams, encode, encode_backward, init_bilstm

logger = logging.getLogger('xling.tagger')

MODEL_MAGIC = b'xling-tagger'
MODEL_VERSION = 'v1'


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    grad_clip: float = 5.0
    hidden_units: int = 256
    num_layers: int = 1
    seed: int = 0
    shuffle: bool = True
    constrained: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f'epochs must be >= 0, got {self.epochs}')
        if self.learning_rate <= 0.0 or self.grad_clip <= 0.0:
            raise ConfigError('learning_rate and grad_clip must be positive')
        if self.hidden_units < 1 or self.num_layers < 1:
            raise ConfigError('hidden_units and num_layers must be positive')


@dataclass(eq=False)
class TaggerModel:
    bilstm: List[BilstmParams]
    crf: CrfParams
    scheme: LabelScheme
    embed_dim: int
    version: str = MODEL_VERSION

    def __post_init__(self):
        if not self.bilstm or self.bilstm[0].d != self.embed_dim:
            raise ShapeError(f'first bilstm layer does not read {self.embed_dim}-dim inputs')
        if self.crf.feature_dim != self.bilstm[-1].output_dim:
            raise ShapeError(f'crf reads {self.crf.feature_dim} features, bilstm emits {self.bilstm[-1].output_dim}')
        if self.crf.labels != self.scheme.tag_set:
            raise ShapeError(f'crf has {self.crf.num_labels} labels, scheme has {self.scheme.size}')

    @property
    def hidden_units(self) -> int:
        return self.bilstm[0].h

    def arrays(self) -> Tuple[np.ndarray, ...]:
        """Every parameter array, in serialization order"""
        out: Tuple[np.ndarray, ...] = ()
        for layer in self.bilstm:
            out += layer.arrays()
        return out + self.crf.arrays()


def init_model(scheme: LabelScheme, embed_dim: int, config: TrainConfig) -> TaggerModel:
    layers = init_bilstm(embed_dim, config.hidden_units, config.seed, config.num_layers)
    crf = init_crf(scheme.tag_set, layers[-1].output_dim, config.seed, config.constrained)
    return TaggerModel(bilstm=layers, crf=crf, scheme=scheme, embed_dim=embed_dim)


def embed_sequence(store: EmbeddingStore, alignment: Optional[AlignmentMap], tokens: Sequence[str]) -> np.ndarray:
    """N x d unit-normalized lookups, mapped by W when an alignment is given"""
    if alignment is not None and alignment.dim != store.dim:
        raise ShapeError(f'alignment is {alignment.dim}-dim, store is {store.dim}-dim')
    xs = np.array([lookup(store, token) for token in tokens], dtype=np.float64).reshape(len(tokens), store.dim)
    norms = np.linalg.norm(xs, axis=1)
    xs = xs / np.where(norms > 0.0, norms, 1.0)[:, None]
    if alignment is not None:
        xs = xs @ alignment.W.T
    return xs


def _check_input(model: TaggerModel, xs: np.ndarray) -> None:
    if xs.ndim != 2 or xs.shape[1] != model.embed_dim:
        raise ShapeError(f'inputs have shape {xs.shape}, model expects (N, {model.embed_dim})')


def sentence_loss(model: TaggerModel, xs: np.ndarray, tags: Sequence[int]) -> float:
    """Negative log-likelihood of the gold tags"""
    _check_input(model, xs)
    lattice = emission_scores(model.crf, encode(model.bilstm, xs))
    return -log_likelihood(model.crf, lattice, tags)


def corpus_loss(model: TaggerModel, corpus: Sequence[LabeledSequence], store: EmbeddingStore,
                alignment: Optional[AlignmentMap] = None) -> float:
    if not corpus:
        raise ShapeError('corpus loss needs at least one sentence')
    losses = [sentence_loss(model, embed_sequence(store, alignment, s.tokens), s.tags) for s in corpus]
    return float(np.mean(losses))


def _sentence_gradients(model: TaggerModel, xs: np.ndarray, tags: Sequence[int]):
    """(loss, gradients of log-likelihood in model.arrays() order)"""
    features = encode(model.bilstm, xs)
    lattice = emission_scores(model.crf, features)
    loss = -log_likelihood(model.crf, lattice, tags)

    crf_grads, lattice_grad = crf_gradients(model.crf, lattice, tags)
    crf_grads.emission_proj, feature_grads = emission_gradients(model.crf, features, lattice_grad)
    layer_grads, _ = encode_backward(model.bilstm, xs, feature_grads)

    grads: Tuple[np.ndarray, ...] = ()
    for layer in layer_grads:
        grads += layer.arrays()
    return loss, grads + crf_grads.arrays()


def _clip(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Global L2 clipping in place; returns the pre-clip norm"""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def train(corpus: Sequence[LabeledSequence], store: EmbeddingStore, scheme: LabelScheme,
          config: TrainConfig, model: Optional[TaggerModel] = None,
          alignment: Optional[AlignmentMap] = None) -> Tuple[TaggerModel, List[float]]:
    """Per-sentence SGD on the CRF negative log-likelihood

    Returns the trained model and the loss trace: the mean corpus loss before
    training followed by the mean after every epoch. An existing model is
    copied and trained further.
    """
    if not corpus:
        raise ShapeError('cannot train on an empty corpus')

    if model is None:
        model = init_model(scheme, store.dim, config)
    else:
        if model.scheme != scheme:
            raise ShapeError('model scheme differs from the corpus scheme')
        model = copy.deepcopy(model)

    inputs = [embed_sequence(store, alignment, sentence.tokens) for sentence in corpus]
    targets = [sentence.tags for sentence in corpus]
    for xs in inputs:
        _check_input(model, xs)

    def mean_loss() -> float:
        return float(np.mean([sentence_loss(model, xs, tags) for xs, tags in zip(inputs, targets)]))

    trace = [mean_loss()]
    logger.info('tagger training: %d sentences, initial loss %.6f', len(corpus), trace[0])
    params = model.arrays()
    rng = np.random.default_rng([config.seed, 7])

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(corpus)) if config.shuffle else np.arange(len(corpus))
        for index in order:
            loss, grads = _sentence_gradients(model, inputs[index], targets[index])
            if not np.isfinite(loss):
                raise TrainingError('loss is not finite', epoch, int(index))
            _clip(grads, config.grad_clip)
            for param, grad in zip(params, grads):
                param += config.learning_rate * grad

        trace.append(mean_loss())
        if not np.isfinite(trace[-1]):
            raise TrainingError('mean loss is not finite', epoch, len(corpus) - 1)
        logger.info('tagger epoch %d/%d: mean loss %.6f', epoch, config.epochs, trace[-1])

    return model, trace


def tag_vectors(model: TaggerModel, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    _check_input(model, xs)
    if len(xs) == 0:
        raise ShapeError('cannot tag an empty sentence')
    lattice = emission_scores(model.crf, encode(model.bilstm, xs))
    labels, _ = viterbi(model.crf, lattice)
    return labels, marginals(model.crf, lattice)


def tag(model: TaggerModel, store: EmbeddingStore, alignment: Optional[AlignmentMap],
        tokens: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """(Viterbi tag indices, N x K marginals)"""
    if not tokens:
        raise ShapeError('cannot tag an empty sentence')
    if store.dim != model.embed_dim:
        raise ShapeError(f'store is {store.dim}-dim, model expects {model.embed_dim}')
    return tag_vectors(model, embed_sequence(store, alignment, tokens))


def tag_corpus(model: TaggerModel, store: EmbeddingStore, alignment: Optional[AlignmentMap],
               sentences: Sequence[Sequence[str]]) -> List[Tuple[np.ndarray, np.ndarray]]:
    return [tag(model, store, alignment, tokens) for tokens in sentences]


# ---------------------------------------------------------------------------
# model file

def _block_names(model: TaggerModel) -> List[str]:
    names = []
    for layer in range(len(model.bilstm)):
        for direction in ('forward', 'backward'):
            names += [f'bilstm.{layer}.{direction}.{p}'
                      for p in ('W_f', 'W_i', 'W_c', 'W_o', 'b_f', 'b_i', 'b_c', 'b_o')]
    return names + ['crf.emission_proj', 'crf.transitions', 'crf.start', 'crf.stop']


def save_model(model: TaggerModel) -> bytes:
    """Header line, JSON manifest line, then little-endian float64 blocks"""
    arrays = model.arrays()
    manifest = {
        'entity_types': list(model.scheme.entity_types),
        'embed_dim': model.embed_dim,
        'hidden_units': model.hidden_units,
        'num_layers': len(model.bilstm),
        'constrained': model.crf.constrained,
        'blocks': [[name, list(a.shape)] for name, a in zip(_block_names(model), arrays)],
    }
    parts = [MODEL_MAGIC + b' ' + MODEL_VERSION.encode('ascii') + b'\n',
             json.dumps(manifest, sort_keys=True).encode('utf-8') + b'\n']
    parts += [np.ascontiguousarray(a, dtype='<f8').tobytes() for a in arrays]
    return b''.join(parts)


def load_model(data: bytes, scheme: Optional[LabelScheme] = None) -> TaggerModel:
    header, sep, rest = data.partition(b'\n')
    if not sep or header != MODEL_MAGIC + b' ' + MODEL_VERSION.encode('ascii'):
        raise ModelVersionError(f'unsupported model header {header[:40]!r}', line=1)

    manifest_line, sep, body = rest.partition(b'\n')
    try:
        if not sep:
            raise ValueError('missing manifest')
        manifest = json.loads(manifest_line.decode('utf-8'))
        entity_types = tuple(manifest['entity_types'])
        embed_dim = int(manifest['embed_dim'])
        hidden = int(manifest['hidden_units'])
        num_layers = int(manifest['num_layers'])
        constrained = bool(manifest['constrained'])
        shapes = [tuple(shape) for _, shape in manifest['blocks']]
    except (KeyError, ValueError, TypeError) as e:
        raise ModelFormatError(f'bad model manifest: {e}', line=2)

    file_scheme = LabelScheme(entity_types)
    if scheme is not None and scheme.size != file_scheme.size:
        raise ShapeError(f'model has {file_scheme.size} labels, scheme has {scheme.size}')
    if scheme is not None and scheme != file_scheme:
        raise ShapeError(f'model entity types {file_scheme.entity_types} differ from {scheme.entity_types}')

    expected = 16 * num_layers + 4
    if len(shapes) != expected:
        raise ModelFormatError(f'manifest lists {len(shapes)} blocks, expected {expected}')

    needed = sum(int(np.prod(shape)) for shape in shapes) * 8
    if len(body) < needed:
        raise ModelFormatError(f'truncated model file: {len(body)} of {needed} parameter bytes')
    if len(body) > needed:
        raise ModelFormatError(f'{len(body) - needed} trailing bytes after the parameter blocks')

    arrays = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(body, dtype='<f8', count=count, offset=offset).astype(np.float64).reshape(shape))
        offset += count * 8

    layers = []
    for layer in range(num_layers):
        block = arrays[16 * layer:16 * (layer + 1)]
        layers.append(BilstmParams(forward=LstmParams(*block[:8]), backward=LstmParams(*block[8:])))
        if layers[-1].h != hidden:
            raise ShapeError(f'layer {layer} has hidden size {layers[-1].h}, manifest says {hidden}')

    allowed, start_allowed = iob_transition_mask(file_scheme.tag_set) if constrained else (None, None)
    emission_proj, transitions, start, stop = arrays[-4:]
    crf = CrfParams(emission_proj=emission_proj, transitions=transitions, start=start, stop=stop,
                    labels=file_scheme.tag_set, allowed=allowed, start_allowed=start_allowed)
    return TaggerModel(bilstm=layers, crf=crf, scheme=file_scheme, embed_dim=embed_dim)
