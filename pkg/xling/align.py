"""
Alignment of a target-language embedding space onto the source space.

The map W is fitted on a bilingual dictionary of unit-normalized vector pairs
(x from the target space, y from the source space) so that y ~ W x. The
orthogonal fit factors M = Y^T X with a one-sided Jacobi SVD and returns
W = U V^T; the SGD fit minimizes the plain least-squares loss and is kept as a
baseline.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from utils import format_real
from xling.embed import EmbeddingStore, lookup, nearest
from xling.errors import (AlignmentDivergedError, AlignmentError, ConfigError, EmptyDictionaryError,
                          EvaluationError, ShapeError)

logger = logging.getLogger('xling.align')

FORMAT_TAG = 'xling-align'
FORMAT_VERSION = 'v1'
ROTATION_TOL = 1e-12
RANK_TOL = 1e-10
LOAD_ORTHOGONALITY_TOL = 1e-6
MAX_SWEEPS = 100


@dataclass(frozen=True, eq=False)
class SvdResult:
    U: np.ndarray
    S: np.ndarray
    Vt: np.ndarray


@dataclass(frozen=True, eq=False)
class DictionaryPairs:
    X: np.ndarray
    Y: np.ndarray
    pairs: Tuple[Tuple[str, str], ...] = ()
    dropped: int = 0

    def __post_init__(self):
        if self.X.shape != self.Y.shape or self.X.ndim != 2:
            raise ShapeError(f'dictionary sides differ: {self.X.shape} vs {self.Y.shape}')
        if self.X.shape[0] < 1:
            raise EmptyDictionaryError('dictionary has no pairs')

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_vectors(cls, X, Y, pairs: Sequence[Tuple[str, str]] = (), dropped: int = 0) -> 'DictionaryPairs':
        """Build from raw rows, unit-normalizing each (zero rows stay zero)"""
        return cls(X=_unit_rows(np.asarray(X, dtype=np.float64)),
                   Y=_unit_rows(np.asarray(Y, dtype=np.float64)),
                   pairs=tuple(pairs), dropped=dropped)


@dataclass(frozen=True, eq=False)
class AlignmentMap:
    W: np.ndarray
    U: Optional[np.ndarray] = None
    Vt: Optional[np.ndarray] = None
    singular_values: Optional[np.ndarray] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.W.shape[0]


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    return matrix / np.where(norms > 0.0, norms, 1.0)[:, None]


# ---------------------------------------------------------------------------
# SVD

def _complete_basis(U: np.ndarray, filled: np.ndarray) -> None:
    """Replace the unfilled columns of U with an orthonormal completion"""
    d = U.shape[0]
    basis = [U[:, j] for j in range(d) if filled[j]]
    for j in range(d):
        if filled[j]:
            continue
        best, best_norm = None, -1.0
        for e in range(d):
            v = np.zeros(d)
            v[e] = 1.0
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            n = np.linalg.norm(v)
            if n > best_norm:
                best, best_norm = v, n
        U[:, j] = best / best_norm
        basis.append(U[:, j])


def svd(M) -> SvdResult:
    """One-sided Jacobi SVD of a square matrix: M = U diag(S) Vt

    Singular values are sorted descending and the largest-magnitude entry of
    every column of U is made positive.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ShapeError(f'svd expects a non-empty square matrix, got shape {M.shape}')
    if not np.all(np.isfinite(M)):
        raise AlignmentError('svd input has non-finite entries')

    d = M.shape[0]
    A = M.copy()
    V = np.eye(d)
    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                alpha = A[:, p] @ A[:, p]
                beta = A[:, q] @ A[:, q]
                gamma = A[:, p] @ A[:, q]
                if gamma == 0.0 or abs(gamma) <= ROTATION_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = (1.0 if zeta >= 0.0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                a_p = A[:, p].copy()
                A[:, p] = c * a_p - s * A[:, q]
                A[:, q] = s * a_p + c * A[:, q]
                v_p = V[:, p].copy()
                V[:, p] = c * v_p - s * V[:, q]
                V[:, q] = s * v_p + c * V[:, q]
        if not rotated:
            break
    else:
        logger.warning('jacobi svd stopped after %d sweeps without converging', MAX_SWEEPS)

    sigma = np.linalg.norm(A, axis=0)
    order = np.argsort(-sigma, kind='stable')
    sigma, A, V = sigma[order], A[:, order], V[:, order]

    U = np.zeros((d, d))
    filled = sigma > sigma[0] * 1e-14 if sigma[0] > 0.0 else np.zeros(d, dtype=bool)
    U[:, filled] = A[:, filled] / sigma[filled]
    if not filled.all():
        _complete_basis(U, filled)

    for j in range(d):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0.0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]

    return SvdResult(U=U, S=sigma, Vt=V.T.copy())


# ---------------------------------------------------------------------------
# dictionaries

def read_dictionary(lines: Iterable[str]) -> List[Tuple[str, str]]:
    """'target<TAB>source' per line; '#' comments and blank lines skipped"""
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        text = line.rstrip('\r\n')
        if not text.strip() or text.lstrip().startswith('#'):
            continue
        parts = text.split('\t') if '\t' in text else text.split()
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise AlignmentError(f'expected target<TAB>source, got {text!r}', line=lineno)
        pairs.append((parts[0].strip(), parts[1].strip()))
    return pairs


def build_dictionary(pairs: Sequence[Tuple[str, str]], target_store: EmbeddingStore,
                     source_store: EmbeddingStore) -> DictionaryPairs:
    """Keep pairs found in both stores (duplicates kept), rows unit-normalized"""
    if target_store.dim != source_store.dim:
        raise ShapeError(f'target dim {target_store.dim} != source dim {source_store.dim}')

    kept, xs, ys = [], [], []
    for target, source in pairs:
        if target in target_store and source in source_store:
            kept.append((target, source))
            xs.append(target_store.vectors[target_store.index[target]])
            ys.append(source_store.vectors[source_store.index[source]])

    dropped = len(pairs) - len(kept)
    if dropped:
        logger.warning('dropped %d of %d dictionary pairs with out-of-vocabulary tokens', dropped, len(pairs))
    if not kept:
        raise EmptyDictionaryError('no dictionary pairs left after out-of-vocabulary filtering')

    return DictionaryPairs.from_vectors(np.array(xs), np.array(ys), kept, dropped)


# ---------------------------------------------------------------------------
# fitting

def procrustes_objective(W: np.ndarray, pairs: DictionaryPairs) -> float:
    """sum_i y_i^T W x_i"""
    return float(np.sum(pairs.Y * (pairs.X @ W.T)))


def least_squares_loss(W: np.ndarray, pairs: DictionaryPairs) -> float:
    """sum_i ||W x_i - y_i||^2"""
    return float(np.sum((pairs.X @ W.T - pairs.Y) ** 2))


def nearest_orthogonal(W: np.ndarray) -> np.ndarray:
    factors = svd(W)
    return factors.U @ factors.Vt


def orthogonality_error(alignment: Union[AlignmentMap, np.ndarray]) -> float:
    """max |W^T W - I|"""
    W = alignment.W if isinstance(alignment, AlignmentMap) else np.asarray(alignment, dtype=np.float64)
    return float(np.max(np.abs(W.T @ W - np.eye(W.shape[1]))))


def fit_orthogonal(pairs: DictionaryPairs) -> AlignmentMap:
    """Exact maximizer of sum y_i^T W x_i over orthogonal W"""
    factors = svd(pairs.Y.T @ pairs.X)
    W = factors.U @ factors.Vt

    rank_deficient = int(np.sum(factors.S < RANK_TOL))
    if rank_deficient:
        logger.warning('dictionary is rank deficient: %d of %d singular values below %g',
                       rank_deficient, pairs.dim, RANK_TOL)

    diagnostics = {
        'method': 'svd',
        'pairs': pairs.size,
        'dropped': pairs.dropped,
        'rank_deficient': rank_deficient,
        'orthogonality_error': orthogonality_error(W),
        'objective': procrustes_objective(W, pairs),
        'loss': least_squares_loss(W, pairs),
    }
    logger.info('svd alignment on %d pairs: objective %.6f, orthogonality error %.3g',
                pairs.size, diagnostics['objective'], diagnostics['orthogonality_error'])
    return AlignmentMap(W=W, U=factors.U, Vt=factors.Vt, singular_values=factors.S, diagnostics=diagnostics)


def initial_sgd_map(dim: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, 0.1, size=(dim, dim))


def fit_sgd(pairs: DictionaryPairs, lr: float, epochs: int, seed: int) -> AlignmentMap:
    """Per-pair gradient steps on sum ||W x_i - y_i||^2; W is not kept orthogonal"""
    if lr <= 0.0 or epochs < 0:
        raise ConfigError(f'fit_sgd needs lr > 0 and epochs >= 0, got {lr}, {epochs}')

    W = initial_sgd_map(pairs.dim, seed)
    rng = np.random.default_rng([seed, 1])
    loss = least_squares_loss(W, pairs)

    with np.errstate(over='ignore', invalid='ignore'):
        for epoch in range(1, epochs + 1):
            for i in rng.permutation(pairs.size):
                x = pairs.X[i]
                residual = W @ x - pairs.Y[i]
                W -= lr * 2.0 * np.outer(residual, x)
            loss = least_squares_loss(W, pairs)
            if not np.isfinite(loss):
                raise AlignmentDivergedError('least-squares loss became non-finite', epoch)
            logger.debug('sgd alignment epoch %d/%d: loss %.6f', epoch, epochs, loss)

    diagnostics = {
        'method': 'sgd',
        'pairs': pairs.size,
        'dropped': pairs.dropped,
        'epochs': epochs,
        'loss': loss,
        'objective': procrustes_objective(W, pairs),
        'orthogonality_error': orthogonality_error(W),
    }
    logger.info('sgd alignment on %d pairs: final loss %.6f', pairs.size, loss)
    return AlignmentMap(W=W, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# applying

def _check_vector(alignment: AlignmentMap, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (alignment.dim,):
        raise ShapeError(f'vector has shape {v.shape}, map expects ({alignment.dim},)')
    return v


def apply(alignment: AlignmentMap, v) -> np.ndarray:
    """W v"""
    return alignment.W @ _check_vector(alignment, v)


def apply_inverse(alignment: AlignmentMap, v) -> np.ndarray:
    """W^T v (maps source-space vectors back into the target space)"""
    return alignment.W.T @ _check_vector(alignment, v)


def apply_rows(alignment: AlignmentMap, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != alignment.dim:
        raise ShapeError(f'rows have shape {rows.shape}, map expects (*, {alignment.dim})')
    return rows @ alignment.W.T


def map_store(alignment: AlignmentMap, store: EmbeddingStore) -> EmbeddingStore:
    """Target store with every row and n-gram row moved into source space"""
    if store.dim != alignment.dim:
        raise ShapeError(f'store dim {store.dim} != map dim {alignment.dim}')
    table = None
    if store.ngram_table is not None:
        table = {gram: alignment.W @ vec for gram, vec in store.ngram_table.items()}
    return replace(store, vectors=apply_rows(alignment, store.vectors) if len(store) else store.vectors,
                   ngram_table=table)


def to_shared_space(alignment: AlignmentMap, source_vectors=None,
                    target_vectors=None) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """Split mapping: source rows y -> U^T y, target rows x -> V^T x"""
    if alignment.U is None or alignment.Vt is None:
        raise AlignmentError('shared-space mapping needs an svd-fitted map')
    shared_source = None if source_vectors is None else np.atleast_2d(source_vectors) @ alignment.U
    shared_target = None if target_vectors is None else np.atleast_2d(target_vectors) @ alignment.Vt.T
    return shared_source, shared_target


def translation_precision(alignment: AlignmentMap, test_pairs: Sequence[Tuple[str, str]],
                          target_store: EmbeddingStore, source_store: EmbeddingStore, k: int) -> float:
    """Fraction of pairs whose source word is among the k nearest mapped neighbours"""
    usable = [(t, s) for t, s in test_pairs if t in target_store and s in source_store]
    if not usable:
        raise EvaluationError('translation precision needs at least one in-vocabulary test pair')

    hits = 0
    for target, source in usable:
        mapped = apply(alignment, lookup(target_store, target))
        if any(token == source for token, _ in nearest(source_store, mapped, k)):
            hits += 1
    return hits / len(usable)


# ---------------------------------------------------------------------------
# file format

def save_alignment(alignment: AlignmentMap, sink: TextIO) -> None:
    sink.write(f'{FORMAT_TAG} {FORMAT_VERSION} {alignment.dim}\n')
    for row in alignment.W:
        sink.write(' '.join(format_real(x) for x in row) + '\n')


def load_alignment(lines: Iterable[str], transpose: bool = False) -> AlignmentMap:
    """Read an 'xling-align v1 <d>' file, or a bare d x d whitespace matrix

    Bare matrices are published for the row-vector convention x W; pass
    transpose=True to use them as y ~ W x.
    """
    lines = list(lines)
    if not lines:
        raise AlignmentError('empty alignment file', line=1)

    dim: Optional[int] = None
    first = lines[0].strip()
    start = 1
    if first.startswith(FORMAT_TAG):
        parts = first.split()
        if len(parts) != 3 or parts[1] != FORMAT_VERSION:
            raise AlignmentError(f'unsupported alignment header {first!r}', line=1)
        try:
            dim = int(parts[2])
        except ValueError:
            raise AlignmentError(f'bad dimension in header {first!r}', line=1)
        body = lines[1:]
        start = 2
    else:
        body = lines

    rows = []
    for lineno, line in enumerate(body, start=start):
        if not line.strip():
            continue
        try:
            values = [float(v) for v in line.split()]
        except ValueError:
            raise AlignmentError('non-numeric matrix entry', line=lineno)
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise AlignmentError(f'expected {dim} values, got {len(values)}', line=lineno)
        rows.append(values)

    if dim is None or len(rows) != dim:
        raise AlignmentError(f'expected {dim} matrix rows, got {len(rows)}')

    W = np.array(rows, dtype=np.float64)
    if transpose:
        W = W.T.copy()
    error = orthogonality_error(W)
    if error > LOAD_ORTHOGONALITY_TOL:
        logger.warning('loaded alignment map is not orthogonal: max |W^T W - I| = %.3g', error)
    return AlignmentMap(W=W, diagnostics={'method': 'file', 'orthogonality_error': error})
