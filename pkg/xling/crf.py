"""
Linear-chain CRF over per-position label scores.

A labeling z_1..z_N scores start[z_1] + sum_t unary[t, z_t]
+ sum_t transitions[z_{t-1}, z_t] + stop[z_N]. Everything is computed in
log space. The optional hard mask forbids IOB-invalid transitions by
treating them as -inf without touching the stored (finite) parameters.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from xling.errors import ShapeError

logger = logging.getLogger('xling.crf')


@dataclass(eq=False)
class CrfParams:
    emission_proj: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    labels: Tuple[str, ...]
    allowed: Optional[np.ndarray] = None
    start_allowed: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = tuple(self.labels)
        k = len(self.labels)
        if len(set(self.labels)) != k:
            raise ShapeError('crf labels must be unique')
        if self.emission_proj.ndim != 2 or self.emission_proj.shape[0] != k:
            raise ShapeError(f'emission_proj has shape {self.emission_proj.shape}, expected ({k}, F)')
        if self.transitions.shape != (k, k) or self.start.shape != (k,) or self.stop.shape != (k,):
            raise ShapeError(f'transition/start/stop shapes disagree with {k} labels')
        if self.allowed is not None and self.allowed.shape != (k, k):
            raise ShapeError('transition mask shape disagrees with labels')

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.emission_proj.shape[1]

    @property
    def constrained(self) -> bool:
        return self.allowed is not None

    def arrays(self) -> Tuple[np.ndarray, ...]:
        return (self.emission_proj, self.transitions, self.start, self.stop)


@dataclass(frozen=True, eq=False)
class Lattice:
    unary: np.ndarray

    def __post_init__(self):
        if self.unary.ndim != 2 or self.unary.shape[0] < 1:
            raise ShapeError(f'lattice needs shape (N >= 1, K), got {self.unary.shape}')

    @property
    def N(self) -> int:
        return self.unary.shape[0]


@dataclass(eq=False)
class CrfGradients:
    emission_proj: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    def arrays(self) -> Tuple[np.ndarray, ...]:
        return (self.emission_proj, self.transitions, self.start, self.stop)


@dataclass(frozen=True, eq=False)
class ForwardBackward:
    alpha: np.ndarray
    beta: np.ndarray
    log_z: float


def iob_transition_mask(labels: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """(allowed K x K, start_allowed K): I-X may only follow B-X or I-X"""
    k = len(labels)
    allowed = np.ones((k, k), dtype=bool)
    start_allowed = np.ones(k, dtype=bool)
    for b, label in enumerate(labels):
        if not label.startswith('I-'):
            continue
        etype = label[2:]
        start_allowed[b] = False
        for a, prev in enumerate(labels):
            allowed[a, b] = prev in (f'B-{etype}', f'I-{etype}')
    return allowed, start_allowed


def init_crf(labels: Sequence[str], feature_dim: int, seed: int, constrained: bool = False) -> CrfParams:
    """Glorot-uniform emission projection; transitions, start and stop at zero"""
    k = len(labels)
    rng = np.random.default_rng([seed, 1000])
    limit = np.sqrt(6.0 / (feature_dim + k))
    allowed, start_allowed = iob_transition_mask(labels) if constrained else (None, None)
    return CrfParams(emission_proj=rng.uniform(-limit, limit, size=(k, feature_dim)),
                     transitions=np.zeros((k, k)), start=np.zeros(k), stop=np.zeros(k),
                     labels=tuple(labels), allowed=allowed, start_allowed=start_allowed)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide='ignore'):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _effective(params: CrfParams) -> Tuple[np.ndarray, np.ndarray]:
    if params.allowed is None:
        return params.transitions, params.start
    return (np.where(params.allowed, params.transitions, -np.inf),
            np.where(params.start_allowed, params.start, -np.inf))


def _check(params: CrfParams, lattice: Lattice) -> None:
    if lattice.unary.shape[1] != params.num_labels:
        raise ShapeError(f'lattice has {lattice.unary.shape[1]} labels, crf has {params.num_labels}')


def _check_labels(params: CrfParams, lattice: Lattice, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (lattice.N,):
        raise ShapeError(f'{len(labels)} labels for a lattice of length {lattice.N}')
    if np.any(labels < 0) or np.any(labels >= params.num_labels):
        raise ShapeError(f'label index out of range [0, {params.num_labels})')
    return labels


def sequence_score(params: CrfParams, lattice: Lattice, labels) -> float:
    _check(params, lattice)
    z = _check_labels(params, lattice, labels)
    transitions, start = _effective(params)
    score = start[z[0]] + lattice.unary[np.arange(lattice.N), z].sum() + params.stop[z[-1]]
    if lattice.N > 1:
        score += transitions[z[:-1], z[1:]].sum()
    return float(score)


def forward_backward(params: CrfParams, lattice: Lattice) -> ForwardBackward:
    """Log-space alpha/beta tables and the log partition"""
    _check(params, lattice)
    transitions, start = _effective(params)
    unary = lattice.unary
    n, k = unary.shape

    alpha = np.empty((n, k))
    alpha[0] = start + unary[0]
    for t in range(1, n):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + transitions, axis=0) + unary[t]

    beta = np.empty((n, k))
    beta[n - 1] = params.stop
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(transitions + (unary[t + 1] + beta[t + 1])[None, :], axis=1)

    log_z = float(_logsumexp(alpha[n - 1] + params.stop, axis=0))
    return ForwardBackward(alpha=alpha, beta=beta, log_z=log_z)


def log_partition(params: CrfParams, lattice: Lattice) -> float:
    return forward_backward(params, lattice).log_z


def log_likelihood(params: CrfParams, lattice: Lattice, labels) -> float:
    value = sequence_score(params, lattice, labels) - log_partition(params, lattice)
    return min(value, 0.0)


def _marginals_from(tables: ForwardBackward) -> np.ndarray:
    return np.exp(tables.alpha + tables.beta - tables.log_z)


def marginals(params: CrfParams, lattice: Lattice) -> np.ndarray:
    """N x K posterior label probabilities"""
    return _marginals_from(forward_backward(params, lattice))


def viterbi(params: CrfParams, lattice: Lattice) -> Tuple[np.ndarray, float]:
    """Best labeling; ties go to the lowest label index"""
    _check(params, lattice)
    transitions, start = _effective(params)
    n, k = lattice.unary.shape

    delta = start + lattice.unary[0]
    backpointers = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        scores = delta[:, None] + transitions
        backpointers[t] = np.argmax(scores, axis=0)
        delta = scores[backpointers[t], np.arange(k)] + lattice.unary[t]

    labels = np.empty(n, dtype=np.int64)
    labels[-1] = int(np.argmax(delta + params.stop))
    for t in range(n - 1, 0, -1):
        labels[t - 1] = backpointers[t, labels[t]]
    return labels, sequence_score(params, lattice, labels)


def crf_gradients(params: CrfParams, lattice: Lattice, labels) -> Tuple[CrfGradients, np.ndarray]:
    """Gradient of log_likelihood: empirical minus expected counts

    The emission_proj entry is zero here; emission_gradients() fills it from
    the returned lattice gradient.
    """
    z = _check_labels(params, lattice, labels)
    tables = forward_backward(params, lattice)
    transitions, _ = _effective(params)
    n, k = lattice.unary.shape
    marg = _marginals_from(tables)

    d_unary = -marg
    d_unary[np.arange(n), z] += 1.0

    d_start = -marg[0]
    d_start[z[0]] += 1.0
    d_stop = -marg[n - 1]
    d_stop[z[-1]] += 1.0

    d_transitions = np.zeros((k, k))
    for t in range(1, n):
        xi = tables.alpha[t - 1][:, None] + transitions + (lattice.unary[t] + tables.beta[t])[None, :]
        d_transitions -= np.exp(xi - tables.log_z)
        d_transitions[z[t - 1], z[t]] += 1.0

    grads = CrfGradients(emission_proj=np.zeros_like(params.emission_proj),
                         transitions=d_transitions, start=d_start, stop=d_stop)
    return grads, d_unary


def emission_scores(params: CrfParams, features) -> Lattice:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.feature_dim:
        raise ShapeError(f'features have shape {features.shape}, crf expects (N, {params.feature_dim})')
    return Lattice(unary=features @ params.emission_proj.T)


def emission_gradients(params: CrfParams, features, lattice_grad) -> Tuple[np.ndarray, np.ndarray]:
    """Chain rule through unary = features @ emission_proj^T: (d emission_proj, d features)"""
    features = np.asarray(features, dtype=np.float64)
    lattice_grad = np.asarray(lattice_grad, dtype=np.float64)
    return lattice_grad.T @ features, lattice_grad @ params.emission_proj
