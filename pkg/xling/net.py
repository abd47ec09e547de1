"""
Bidirectional LSTM feature extractor with hand-written forward and backward passes.

Each gate matrix is h x (h + d) and is applied to the concatenation
[h_{t-1}, x_t]. The output at position t is the forward hidden state over
x_1..x_t concatenated with the backward hidden state over x_N..x_t.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from xling.errors import ShapeError

logger = logging.getLogger('xling.net')

GATES = ('f', 'i', 'c', 'o')
FORGET_BIAS = 1.0


@dataclass(eq=False)
class LstmParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        h = self.b_f.shape[0]
        width = self.W_f.shape[1] if self.W_f.ndim == 2 else -1
        for name in ('W_f', 'W_i', 'W_c', 'W_o'):
            if getattr(self, name).shape != (h, width) or width <= h:
                raise ShapeError(f'{name} has shape {getattr(self, name).shape}, expected ({h}, h+d)')
        for name in ('b_f', 'b_i', 'b_c', 'b_o'):
            if getattr(self, name).shape != (h,):
                raise ShapeError(f'{name} has shape {getattr(self, name).shape}, expected ({h},)')

    @property
    def h(self) -> int:
        return self.b_f.shape[0]

    @property
    def d(self) -> int:
        return self.W_f.shape[1] - self.h

    def arrays(self) -> Tuple[np.ndarray, ...]:
        """Parameter arrays in declared order (weights, then biases)"""
        return (self.W_f, self.W_i, self.W_c, self.W_o, self.b_f, self.b_i, self.b_c, self.b_o)

    @classmethod
    def zeros(cls, h: int, d: int) -> 'LstmParams':
        return cls(*(np.zeros((h, h + d)) for _ in GATES), *(np.zeros(h) for _ in GATES))


@dataclass(frozen=True, eq=False)
class LstmState:
    h: np.ndarray
    C: np.ndarray


@dataclass(eq=False)
class BilstmParams:
    forward: LstmParams
    backward: LstmParams

    def __post_init__(self):
        if self.forward.h != self.backward.h or self.forward.d != self.backward.d:
            raise ShapeError('forward and backward cells differ in shape')

    @property
    def h(self) -> int:
        return self.forward.h

    @property
    def d(self) -> int:
        return self.forward.d

    @property
    def output_dim(self) -> int:
        return 2 * self.forward.h

    def arrays(self) -> Tuple[np.ndarray, ...]:
        return self.forward.arrays() + self.backward.arrays()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_lstm(d: int, h: int, rng: np.random.Generator) -> LstmParams:
    weights = [_glorot(rng, h, h + d) for _ in GATES]
    return LstmParams(*weights, np.full(h, FORGET_BIAS), np.zeros(h), np.zeros(h), np.zeros(h))


def init_bilstm(d: int, h: int, seed: int, num_layers: int = 1) -> List[BilstmParams]:
    """Seeded stack of BiLSTM layers; layer 0 reads d inputs, the rest read 2h"""
    if d < 1 or h < 1 or num_layers < 1:
        raise ShapeError(f'bilstm needs d, h, num_layers >= 1, got {d}, {h}, {num_layers}')
    layers = []
    for layer in range(num_layers):
        rng = np.random.default_rng([seed, layer])
        width = d if layer == 0 else 2 * h
        layers.append(BilstmParams(forward=init_lstm(width, h, rng), backward=init_lstm(width, h, rng)))
    return layers


def lstm_cell(params: LstmParams, x_t, prev: LstmState) -> LstmState:
    state, _ = _cell_step(params, np.asarray(x_t, dtype=np.float64), prev.h, prev.C)
    return state


def _cell_step(params: LstmParams, x_t: np.ndarray, h_prev: np.ndarray, C_prev: np.ndarray):
    if x_t.shape != (params.d,) or h_prev.shape != (params.h,) or C_prev.shape != (params.h,):
        raise ShapeError(f'lstm cell expects x ({params.d},) and state ({params.h},), '
                         f'got {x_t.shape}, {h_prev.shape}, {C_prev.shape}')
    z = np.concatenate([h_prev, x_t])
    f = _sigmoid(params.W_f @ z + params.b_f)
    i = _sigmoid(params.W_i @ z + params.b_i)
    g = np.tanh(params.W_c @ z + params.b_c)
    o = _sigmoid(params.W_o @ z + params.b_o)
    C = f * C_prev + i * g
    tanh_C = np.tanh(C)
    h = o * tanh_C
    return LstmState(h=h, C=C), (z, f, i, g, o, C_prev, tanh_C)


def _run_direction(params: LstmParams, xs: np.ndarray):
    """Hidden states (N x h) and per-step caches over xs in the given order"""
    h = np.zeros(params.h)
    C = np.zeros(params.h)
    hs = np.empty((len(xs), params.h))
    caches = []
    for t, x_t in enumerate(xs):
        state, cache = _cell_step(params, x_t, h, C)
        h, C = state.h, state.C
        hs[t] = h
        caches.append(cache)
    return hs, caches


def _backprop_direction(params: LstmParams, caches, dhs: np.ndarray):
    """Reverse-mode pass for one direction; returns (LstmParams of grads, dxs)"""
    grads = LstmParams.zeros(params.h, params.d)
    dxs = np.empty((len(caches), params.d))
    dh_next = np.zeros(params.h)
    dC_next = np.zeros(params.h)
    hdim = params.h

    for t in range(len(caches) - 1, -1, -1):
        z, f, i, g, o, C_prev, tanh_C = caches[t]
        dh = dhs[t] + dh_next
        do = dh * tanh_C
        dC = dh * o * (1.0 - tanh_C * tanh_C) + dC_next
        df = dC * C_prev
        di = dC * g
        dg = dC * i
        dC_next = dC * f

        a_f = df * f * (1.0 - f)
        a_i = di * i * (1.0 - i)
        a_g = dg * (1.0 - g * g)
        a_o = do * o * (1.0 - o)

        grads.W_f += np.outer(a_f, z)
        grads.W_i += np.outer(a_i, z)
        grads.W_c += np.outer(a_g, z)
        grads.W_o += np.outer(a_o, z)
        grads.b_f += a_f
        grads.b_i += a_i
        grads.b_c += a_g
        grads.b_o += a_o

        dz = params.W_f.T @ a_f + params.W_i.T @ a_i + params.W_c.T @ a_g + params.W_o.T @ a_o
        dh_next = dz[:hdim]
        dxs[t] = dz[hdim:]

    return grads, dxs


def _as_sequence(params: BilstmParams, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or len(xs) == 0:
        raise ShapeError('bilstm needs a non-empty sequence of vectors')
    if xs.shape[1] != params.d:
        raise ShapeError(f'input vectors have dim {xs.shape[1]}, layer expects {params.d}')
    return xs


def bilstm_forward(params: BilstmParams, xs) -> np.ndarray:
    """N x 2h outputs: [forward h_t, backward h_t]"""
    xs = _as_sequence(params, xs)
    forward_hs, _ = _run_direction(params.forward, xs)
    backward_hs, _ = _run_direction(params.backward, xs[::-1])
    return np.hstack([forward_hs, backward_hs[::-1]])


def bilstm_backward(params: BilstmParams, xs, upstream) -> Tuple[BilstmParams, np.ndarray]:
    """Exact gradients of sum(upstream * bilstm_forward(params, xs))"""
    xs = _as_sequence(params, xs)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (len(xs), params.output_dim):
        raise ShapeError(f'upstream grads have shape {upstream.shape}, '
                         f'expected ({len(xs)}, {params.output_dim})')

    h = params.h
    _, forward_caches = _run_direction(params.forward, xs)
    _, backward_caches = _run_direction(params.backward, xs[::-1])

    forward_grads, forward_dxs = _backprop_direction(params.forward, forward_caches, upstream[:, :h])
    backward_grads, backward_dxs = _backprop_direction(params.backward, backward_caches, upstream[::-1, h:])

    grads = BilstmParams(forward=forward_grads, backward=backward_grads)
    return grads, forward_dxs + backward_dxs[::-1]


def encode(layers: Sequence[BilstmParams], xs) -> np.ndarray:
    """Run the stacked layers; returns the top layer's N x 2h features"""
    out = np.asarray(xs, dtype=np.float64)
    for layer in layers:
        out = bilstm_forward(layer, out)
    return out


def encode_backward(layers: Sequence[BilstmParams], xs, upstream) -> Tuple[List[BilstmParams], np.ndarray]:
    """Gradients for every layer of encode(), plus the input gradients"""
    inputs = [np.asarray(xs, dtype=np.float64)]
    for layer in layers[:-1]:
        inputs.append(bilstm_forward(layer, inputs[-1]))

    grads: List[BilstmParams] = [None] * len(layers)
    delta = np.asarray(upstream, dtype=np.float64)
    for index in range(len(layers) - 1, -1, -1):
        grads[index], delta = bilstm_backward(layers[index], inputs[index], delta)
    return grads, delta
