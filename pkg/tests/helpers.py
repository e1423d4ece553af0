"""Reference implementations the tests check the package against.

Everything here is deliberately slow and obvious: central finite
differences for gradients, brute-force loops for metrics.
"""

import math

import numpy as np

from ccnlab.nets import DenseNet, MonotoneNet


def loss_value(net, x, coeffs):
    return float(np.sum(coeffs * net.forward(x)))


def backprop_grads(net, x, coeffs):
    net.forward(x, remember=True)
    net.zero_grads()
    input_grad = net.backward(coeffs)
    param_grad = net.grads.copy()
    net.zero_grads()
    return param_grad, np.asarray(input_grad, dtype=np.float64)


def finite_diff_param_grads(net, x, coeffs, h=1e-5):
    fd = np.empty(net.params.size)
    for i in range(net.params.size):
        orig = net.params[i]
        net.params[i] = orig + h
        up = loss_value(net, x, coeffs)
        net.params[i] = orig - h
        down = loss_value(net, x, coeffs)
        net.params[i] = orig
        fd[i] = (up - down) / (2.0 * h)
    return fd


def finite_diff_input_grads(net, x, coeffs, h=1e-5):
    x = np.array(x, dtype=np.float64)
    fd = np.empty_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_value(net, x, coeffs)
        flat[i] = orig - h
        down = loss_value(net, x, coeffs)
        flat[i] = orig
        fd.ravel()[i] = (up - down) / (2.0 * h)
    return fd


def max_rel_err(a, b, floor=1e-3):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def fd_check(net, x, rng, h=1e-5):
    """Max relative disagreement between backprop and central differences."""
    coeffs = rng.uniform(0.5, 1.5, size=(x.shape[0], net.output_width))
    coeffs *= rng.choice([-1.0, 1.0], size=coeffs.shape)
    param_grad, input_grad = backprop_grads(net, x, coeffs)
    fd_p = finite_diff_param_grads(net, x, coeffs, h=h)
    fd_x = finite_diff_input_grads(net, x, coeffs, h=h)
    return max(max_rel_err(param_grad, fd_p), max_rel_err(input_grad, fd_x))


def _relu_margin(net, x):
    # Smallest |pre-activation| over relu layers; finite differences are
    # only trustworthy away from the kink.
    net.forward(x, remember=True)
    _, pres, _ = net._cache
    net._cache = None
    hidden = pres[:-1]
    if not hidden:
        return np.inf
    return min(float(np.min(np.abs(p))) for p in hidden)


def random_fd_case(rng):
    """A small random net plus inputs, safe for finite differencing."""
    if rng.random() < 0.7:
        n_layers = int(rng.integers(1, 4))
        widths = ([int(rng.integers(1, 6))]
                  + [int(rng.integers(2, 7)) for _ in range(n_layers - 1)]
                  + [int(rng.integers(1, 4))])
        hidden_act = str(rng.choice(["relu", "tanh", "sigmoid"]))
        output_act = str(rng.choice(["sigmoid", "identity"]))
        for _ in range(200):
            net = DenseNet(widths, hidden_act, output_act, rng=int(rng.integers(2 ** 31)))
            x = rng.normal(size=(int(rng.integers(1, 5)), widths[0]))
            if hidden_act != "relu" or _relu_margin(net, x) > 1e-3:
                return net, x
        raise AssertionError("no kink-free relu case found")
    p = int(rng.integers(1, 4))
    comps = int(rng.integers(1, 5))
    net = MonotoneNet(p, comps, hidden=(int(rng.integers(2, 7)),),
                      hidden_activation="tanh", rng=int(rng.integers(2 ** 31)))
    x = rng.normal(size=(int(rng.integers(1, 5)), p + 1))
    return net, x


def pav_isotonic(values):
    """Pool-adjacent-violators, the O(n^2) textbook version."""
    blocks = [[float(v), 1] for v in np.asarray(values, dtype=np.float64)]
    i = 0
    while i < len(blocks) - 1:
        if blocks[i][0] > blocks[i + 1][0] + 0.0:
            total = blocks[i][0] * blocks[i][1] + blocks[i + 1][0] * blocks[i + 1][1]
            count = blocks[i][1] + blocks[i + 1][1]
            blocks[i] = [total / count, count]
            del blocks[i + 1]
            i = max(i - 1, 0)
        else:
            i += 1
    out = []
    for mean, count in blocks:
        out.extend([mean] * count)
    return np.array(out)


def brute_force_auc(scores, labels):
    """Pairwise Mann-Whitney AUC with half credit for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need both classes")
    total = 0.0
    for s_pos in pos:
        for s_neg in neg:
            if s_pos > s_neg:
                total += 1.0
            elif s_pos == s_neg:
                total += 0.5
    return total / (pos.size * neg.size)


def brute_force_pehe(tau_hat, tau_true):
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    tau_true = np.asarray(tau_true, dtype=np.float64)
    # fsum keeps the reference exact, so == comparisons are meaningful
    total = math.fsum((a - b) ** 2 for a, b in zip(tau_hat, tau_true))
    return float(np.sqrt(total / tau_hat.size))
