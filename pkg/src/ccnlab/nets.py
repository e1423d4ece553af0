"""Small dense networks with explicit parameter buffers and hand-written backprop.

Everything runs in float64 numpy over flat parameter vectors: training is
bit-reproducible for a fixed seed, weight clipping is a single clip over the
vector, and a network serializes as one header line plus one raw array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

HIDDEN_ACTIVATIONS = ("relu", "tanh", "sigmoid")
OUTPUT_ACTIVATIONS = ("sigmoid", "identity")

# Sigmoid outputs are nudged off the exact endpoints so log terms stay finite.
_UNIT_EPS = 1e-15

# Slope pre-activations are clamped before exp; +/-30 already spans far more
# dynamic range than any fitted curve needs.
_EXP_CLIP = 30.0


def _activate(name, pre):
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "tanh":
        return np.tanh(pre)
    if name == "sigmoid":
        return expit(pre)
    return pre


def _activation_slope(name, pre, post):
    # Derivative in terms of cached pre/post activations.
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - post * post
    if name == "sigmoid":
        return post * (1.0 - post)
    return 1.0


class DenseNet:
    """Fully connected net whose parameters live in one flat float64 vector.

    Per-layer weight and bias arrays are reshaped views into ``params`` (and
    ``grads``), in layer order with each layer's weight matrix followed by
    its bias. Weights start Glorot-uniform, biases at zero. ``backward``
    accumulates into ``grads`` without zeroing, so several loss terms can
    contribute to one optimizer step.
    """

    def __init__(self, layer_widths, hidden_activation="relu",
                 output_activation="sigmoid", rng=None, buffers=None):
        widths = tuple(int(w) for w in layer_widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"layer_widths needs at least two positive entries, got {layer_widths!r}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}, got {hidden_activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}, got {output_activation!r}")
        self.layer_widths = widths
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        n = self.n_params_for(widths)
        if buffers is None:
            self.params = np.zeros(n, dtype=np.float64)
            self.grads = np.zeros(n, dtype=np.float64)
        else:
            self.params, self.grads = buffers
            if self.params.size != n or self.grads.size != n:
                raise ValueError(f"buffers of size {self.params.size} do not match layout size {n}")
        self._W, self._b, self._Wg, self._bg = [], [], [], []
        offset = 0
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            self._W.append(self.params[offset:offset + n_in * n_out].reshape(n_in, n_out))
            self._Wg.append(self.grads[offset:offset + n_in * n_out].reshape(n_in, n_out))
            offset += n_in * n_out
            self._b.append(self.params[offset:offset + n_out])
            self._bg.append(self.grads[offset:offset + n_out])
            offset += n_out
        self._cache = None
        self._init_params(np.random.default_rng(rng))

    @staticmethod
    def n_params_for(layer_widths):
        return sum(a * b + b for a, b in zip(layer_widths[:-1], layer_widths[1:]))

    @property
    def n_params(self):
        return self.params.size

    @property
    def input_width(self):
        return self.layer_widths[0]

    @property
    def output_width(self):
        return self.layer_widths[-1]

    def _init_params(self, rng):
        for W in self._W:
            limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[:] = rng.uniform(-limit, limit, size=W.shape)
        for b in self._b:
            b[:] = 0.0

    def forward(self, x, remember=False):
        """Run the net over rows of ``x``; 1-D input gives 1-D output.

        ``remember=True`` caches activations for one subsequent ``backward``.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.input_width:
            raise ValueError(f"expected input width {self.input_width}, got array of shape {np.shape(x)}")
        acts = [a]
        pres = []
        last = len(self._W) - 1
        for i, (W, b) in enumerate(zip(self._W, self._b)):
            pre = a @ W + b
            name = self.output_activation if i == last else self.hidden_activation
            a = _activate(name, pre)
            if i == last and name == "sigmoid":
                a = np.clip(a, _UNIT_EPS, 1.0 - _UNIT_EPS)
            pres.append(pre)
            acts.append(a)
        self._cache = (acts, pres, single) if remember else None
        return a[0] if single else a

    def backward(self, upstream):
        """Backprop ``upstream`` (dLoss/dOutput) through the cached forward.

        Accumulates parameter gradients into ``grads`` and returns the
        gradient with respect to the input, matching the input's shape.
        The cache is consumed; call forward(remember=True) again first.
        """
        if self._cache is None:
            raise RuntimeError("backward() requires a preceding forward(..., remember=True)")
        acts, pres, single = self._cache
        self._cache = None
        up = np.asarray(upstream, dtype=np.float64)
        if single:
            up = up[None, :]
        if up.shape != acts[-1].shape:
            raise ValueError(f"upstream shape {up.shape} does not match output shape {acts[-1].shape}")
        last = len(self._W) - 1
        delta = up * _activation_slope(self.output_activation, pres[last], acts[last + 1])
        for i in range(last, -1, -1):
            self._Wg[i] += acts[i].T @ delta
            self._bg[i] += delta.sum(axis=0)
            down = delta @ self._W[i].T
            if i > 0:
                delta = down * _activation_slope(self.hidden_activation, pres[i - 1], acts[i])
        return down[0] if single else down

    def zero_grads(self):
        self.grads[:] = 0.0


class MonotoneNet:
    """Mixture-of-sigmoids net, non-decreasing in its final input coordinate.

    Three covariate subnets produce mixture logits w(x), offsets b(x) and
    log-slopes a(x); the output is sum_j softmax(w)_j * sigmoid(b_j + exp(a_j) z).
    Positive slopes and convex mixture weights make monotonicity in z
    structural, and the output lands strictly inside (0, 1).
    """

    def __init__(self, covariate_dim, components, hidden=(100,),
                 hidden_activation="relu", rng=None):
        p = int(covariate_dim)
        J = int(components)
        if p < 1 or J < 1:
            raise ValueError(f"covariate_dim and components must be positive, got {covariate_dim}, {components}")
        self.covariate_dim = p
        self.components = J
        self.hidden = tuple(int(h) for h in hidden)
        self.hidden_activation = hidden_activation
        widths = (p, *self.hidden, J)
        per = DenseNet.n_params_for(widths)
        self.params = np.zeros(3 * per, dtype=np.float64)
        self.grads = np.zeros(3 * per, dtype=np.float64)
        gen = np.random.default_rng(rng)
        subnets = []
        for k in range(3):
            block = slice(k * per, (k + 1) * per)
            subnets.append(DenseNet(widths, hidden_activation, "identity", rng=gen,
                                    buffers=(self.params[block], self.grads[block])))
        self.net_w, self.net_b, self.net_a = subnets
        self._cache = None

    @property
    def n_params(self):
        return self.params.size

    @property
    def input_width(self):
        return self.covariate_dim + 1

    @property
    def output_width(self):
        return 1

    def forward(self, x, remember=False):
        """Evaluate on rows [covariates..., z]; 1-D input gives 1-D output."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.ndim != 2 or xb.shape[1] != self.input_width:
            raise ValueError(f"expected input width {self.input_width} (covariates then z), got shape {np.shape(x)}")
        cov, z = xb[:, :-1], xb[:, -1:]
        w_raw = self.net_w.forward(cov, remember=remember)
        b_raw = self.net_b.forward(cov, remember=remember)
        a_raw = self.net_a.forward(cov, remember=remember)
        shifted = w_raw - w_raw.max(axis=1, keepdims=True)
        expw = np.exp(shifted)
        mix = expw / expw.sum(axis=1, keepdims=True)
        a_clip = np.clip(a_raw, -_EXP_CLIP, _EXP_CLIP)
        slope = np.exp(a_clip)
        s = expit(b_raw + slope * z)
        out = np.clip((mix * s).sum(axis=1, keepdims=True), _UNIT_EPS, 1.0 - _UNIT_EPS)
        self._cache = (z, mix, slope, s, a_raw, single) if remember else None
        return out[0] if single else out

    def backward(self, upstream):
        """Backprop through the mixture and all three subnets.

        Returns the input gradient with the z column last, matching forward.
        """
        if self._cache is None:
            raise RuntimeError("backward() requires a preceding forward(..., remember=True)")
        z, mix, slope, s, a_raw, single = self._cache
        self._cache = None
        up = np.asarray(upstream, dtype=np.float64)
        if single:
            up = up[None, :]
        if up.shape != (mix.shape[0], 1):
            raise ValueError(f"upstream shape {up.shape} does not match output shape {(mix.shape[0], 1)}")
        d_mix = up * s
        d_s = up * mix
        d_pre = d_s * s * (1.0 - s)
        d_slope = d_pre * z
        d_a = d_slope * slope
        d_a *= (np.abs(a_raw) < _EXP_CLIP)  # clamped slopes are locally flat
        d_w = mix * (d_mix - (d_mix * mix).sum(axis=1, keepdims=True))
        d_z = (d_pre * slope).sum(axis=1, keepdims=True)
        d_cov = self.net_w.backward(d_w)
        d_cov = d_cov + self.net_b.backward(d_pre)
        d_cov = d_cov + self.net_a.backward(d_a)
        out = np.hstack([d_cov, d_z])
        return out[0] if single else out

    def zero_grads(self):
        self.grads[:] = 0.0


@dataclass
class AdamState:
    """First/second moment buffers plus hyperparameters for one network."""

    m: np.ndarray
    v: np.ndarray
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_net(cls, net, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        n = net.params.size
        return cls(np.zeros(n), np.zeros(n), learning_rate, beta1, beta2, eps)


def forward(net, x, remember=False):
    return net.forward(x, remember=remember)


def backward(net, upstream):
    return net.backward(upstream)


def adam_step(net, state):
    """Apply one bias-corrected Adam update from ``net.grads``, then zero them."""
    g = net.grads
    if state.m.size != g.size:
        raise ValueError(f"optimizer state of size {state.m.size} does not match net with {g.size} params")
    if not np.isfinite(g).all():
        raise FloatingPointError(f"non-finite gradient at adam step {state.step_count + 1}; training diverged")
    state.step_count += 1
    t = state.step_count
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    net.params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    net.zero_grads()


def clip_weights(net, bound):
    """Clamp every parameter to [-bound, bound] in place."""
    if not bound > 0:
        raise ValueError(f"clip bound must be positive, got {bound}")
    np.clip(net.params, -bound, bound, out=net.params)


def save_net(net, path):
    """Write a net as one JSON header line plus little-endian float64 params."""
    if isinstance(net, DenseNet):
        header = {"kind": "dense", "layer_widths": list(net.layer_widths),
                  "hidden_activation": net.hidden_activation,
                  "output_activation": net.output_activation}
    elif isinstance(net, MonotoneNet):
        header = {"kind": "monotone", "covariate_dim": net.covariate_dim,
                  "components": net.components, "hidden": list(net.hidden),
                  "hidden_activation": net.hidden_activation}
    else:
        raise TypeError(f"cannot serialize object of type {type(net).__name__}")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(net.params, dtype="<f8").tobytes())


def load_net(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        payload = fh.read()
    if header["kind"] == "dense":
        net = DenseNet(header["layer_widths"], header["hidden_activation"],
                       header["output_activation"])
    elif header["kind"] == "monotone":
        net = MonotoneNet(header["covariate_dim"], header["components"],
                          hidden=tuple(header["hidden"]),
                          hidden_activation=header["hidden_activation"])
    else:
        raise ValueError(f"unknown net kind {header.get('kind')!r}")
    values = np.frombuffer(payload, dtype="<f8")
    if values.size != net.params.size:
        raise ValueError(f"payload holds {values.size} params, layout needs {net.params.size}")
    net.params[:] = values
    return net
