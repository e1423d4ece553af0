"""Fully adjusted training: learned representations feed the arm CDFs.

The covariates are split into a domain-invariant part phi_w (pushed toward
equal distributions across arms by an adversarial critic), a domain-specific
part phi_a, and a propensity estimate e(phi_a). The g networks consume the
concatenation [phi_w, phi_a, e] and the joint objective adds
alpha * balance term + beta * assignment cross-entropy to the outcome loss.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ccn import PROB_CLAMP, TrainConfig, _fit, g_loss_batch
from .nets import AdamState, DenseNet, adam_step, clip_weights, load_net, save_net


@dataclass
class FccnConfig:
    """Weights and shapes for the adjustment stack.

    alpha scales the adversarial balance term, beta the assignment loss;
    zero disables the corresponding term. ``propensity_coord`` appends e to
    the representation. ``raw_features`` skips the stack entirely (then all
    three adjustments must be off), which reproduces the plain trainer
    bit for bit.
    """

    alpha: float = 1e-5
    beta: float = 5e-3
    critic_steps: int = 5
    clip_bound: float = 0.01
    q_w: int = 25
    q_a: int = 25
    propensity_coord: bool = True
    phi_hidden: tuple = (100,)
    critic_hidden: tuple = (100, 60)
    raw_features: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.critic_steps < 1:
            raise ValueError(f"critic_steps must be at least 1, got {self.critic_steps}")
        if not self.clip_bound > 0:
            raise ValueError(f"clip_bound must be positive, got {self.clip_bound}")
        if self.q_w < 1 or self.q_a < 1:
            raise ValueError("q_w and q_a must be positive")
        self.phi_hidden = tuple(int(h) for h in self.phi_hidden)
        self.critic_hidden = tuple(int(h) for h in self.critic_hidden)


class FccnHeads:
    """The representation networks: phi_w, phi_a, the propensity head, the critic."""

    def __init__(self, covariate_dim, config, rng=None):
        self.covariate_dim = int(covariate_dim)
        self.config = config
        root = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(rng)
        s_w, s_a, s_e, s_d = root.spawn(4)
        self.phi_w = DenseNet((covariate_dim, *config.phi_hidden, config.q_w),
                              "relu", "identity", rng=s_w)
        self.phi_a = DenseNet((covariate_dim, *config.phi_hidden, config.q_a),
                              "relu", "identity", rng=s_a)
        self.e_head = DenseNet((config.q_a, 1), "relu", "sigmoid", rng=s_e)
        self.critic = DenseNet((config.q_w, *config.critic_hidden, 1),
                               "relu", "identity", rng=s_d)

    @property
    def feature_dim(self):
        return self.config.q_w + self.config.q_a + (1 if self.config.propensity_coord else 0)

    def represent(self, x):
        """S(x) = [phi_w(x), phi_a(x)] plus the propensity coordinate if enabled."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        parts = [self.phi_w.forward(x), self.phi_a.forward(x)]
        if self.config.propensity_coord:
            parts.append(self.e_head.forward(parts[1]))
        return np.hstack(parts)

    def nets(self):
        return {"phi_w": self.phi_w, "phi_a": self.phi_a,
                "e_head": self.e_head, "critic": self.critic}

    def manifest(self):
        c = self.config
        return {"covariate_dim": self.covariate_dim, "alpha": c.alpha, "beta": c.beta,
                "critic_steps": c.critic_steps, "clip_bound": c.clip_bound,
                "q_w": c.q_w, "q_a": c.q_a, "propensity_coord": c.propensity_coord,
                "phi_hidden": list(c.phi_hidden), "critic_hidden": list(c.critic_hidden)}

    def save(self, directory):
        for name, net in self.nets().items():
            save_net(net, directory / f"{name}.net")

    @classmethod
    def load(cls, directory, manifest):
        config = FccnConfig(alpha=manifest["alpha"], beta=manifest["beta"],
                            critic_steps=manifest["critic_steps"],
                            clip_bound=manifest["clip_bound"],
                            q_w=manifest["q_w"], q_a=manifest["q_a"],
                            propensity_coord=manifest["propensity_coord"],
                            phi_hidden=tuple(manifest["phi_hidden"]),
                            critic_hidden=tuple(manifest["critic_hidden"]))
        heads = cls(manifest["covariate_dim"], config)
        for name, net in heads.nets().items():
            loaded = load_net(directory / f"{name}.net")
            net.params[:] = loaded.params
        return heads


def build_representation(heads, x):
    return heads.represent(x)


def wass_loss(critic, rep_treated, rep_control, optimizer=None, critic_steps=0,
              clip_bound=0.01):
    """Critic estimate of the representation shift between arms.

    Returns mean D(rep_treated) - mean D(rep_control). When an optimizer is
    given, first runs ``critic_steps`` maximization updates on the critic,
    clipping its weights after each. Either batch empty gives 0 with a warning.
    """
    rep_treated = np.atleast_2d(np.asarray(rep_treated, dtype=np.float64))
    rep_control = np.atleast_2d(np.asarray(rep_control, dtype=np.float64))
    if rep_treated.shape[0] == 0 or rep_control.shape[0] == 0:
        warnings.warn("empty arm batch; balance term is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    for _ in range(critic_steps if optimizer is not None else 0):
        out_t = critic.forward(rep_treated, remember=True)
        critic.backward(np.full_like(out_t, -1.0 / out_t.shape[0]))
        out_c = critic.forward(rep_control, remember=True)
        critic.backward(np.full_like(out_c, 1.0 / out_c.shape[0]))
        adam_step(critic, optimizer)
        clip_weights(critic, clip_bound)
    return float(critic.forward(rep_treated).mean() - critic.forward(rep_control).mean())


def assign_loss(e_head, rep_specific, t):
    """Cross-entropy of the propensity head against the observed assignment."""
    rep_specific = np.atleast_2d(np.asarray(rep_specific, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64)
    probs = np.clip(e_head.forward(rep_specific).ravel(), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(t * np.log(probs) + (1.0 - t) * np.log1p(-probs)))


class _HeadTrainer:
    """Joint per-batch update of the representation stack and the g networks."""

    def __init__(self, heads, train_config, fccn_config):
        self.heads = heads
        self.fccn = fccn_config
        kw = dict(learning_rate=train_config.learning_rate, beta1=train_config.beta1,
                  beta2=train_config.beta2, eps=train_config.adam_eps)
        self.opt_w = AdamState.for_net(heads.phi_w, **kw)
        self.opt_a = AdamState.for_net(heads.phi_a, **kw)
        self.opt_e = AdamState.for_net(heads.e_head, **kw)
        self.opt_critic = AdamState.for_net(heads.critic, **kw)
        self._warned_empty_arm = False

    @property
    def feature_dim(self):
        return self.heads.feature_dim

    def represent(self, x):
        return self.heads.represent(x)

    def snapshot(self):
        return [net.params.copy() for net in self.heads.nets().values()]

    def restore(self, saved):
        for net, params in zip(self.heads.nets().values(), saved):
            net.params[:] = params

    def step(self, g0, g1, opt0, opt1, xb, tb, yb, zs):
        heads, fc = self.heads, self.fccn
        phw = heads.phi_w.forward(xb, remember=True)
        pha = heads.phi_a.forward(xb, remember=True)
        train_e = fc.propensity_coord or fc.beta > 0
        e_out = heads.e_head.forward(pha, remember=True) if train_e else None
        parts = [phw, pha] + ([e_out] if fc.propensity_coord else [])
        feats = np.hstack(parts)
        idx0 = np.flatnonzero(tb == 0)
        idx1 = np.flatnonzero(tb == 1)

        # Balance term: maximize the clipped critic, then push phi_w against it.
        d_phw_balance = 0.0
        if fc.alpha > 0:
            if idx0.size and idx1.size:
                wass_loss(heads.critic, phw[idx1], phw[idx0],
                          optimizer=self.opt_critic, critic_steps=fc.critic_steps,
                          clip_bound=fc.clip_bound)
                d_out = heads.critic.forward(phw, remember=True)
                up = np.zeros_like(d_out)
                up[idx1] = fc.alpha / idx1.size
                up[idx0] = -fc.alpha / idx0.size
                d_phw_balance = heads.critic.backward(up)
                heads.critic.zero_grads()  # penalty pass must not move the critic
            elif not self._warned_empty_arm:
                warnings.warn("minibatch without both arms; balance term skipped",
                              RuntimeWarning, stacklevel=2)
                self._warned_empty_arm = True

        d_feats = np.zeros_like(feats)
        for arm, g, opt in ((0, g0, opt0), (1, g1, opt1)):
            mask = tb == arm
            if mask.any():
                _, d_arm = g_loss_batch(g, feats[mask], yb[mask], zs[mask])
                d_feats[mask] += d_arm
                adam_step(g, opt)

        d_phw = d_feats[:, :fc.q_w] + d_phw_balance
        # The propensity coordinate is stop-gradient for the outcome loss:
        # e is shaped by the assignment term alone.
        d_pha = d_feats[:, fc.q_w:fc.q_w + fc.q_a].copy()
        if train_e:
            weight = fc.beta if fc.beta > 0 else 1.0
            clamped = np.clip(e_out, PROB_CLAMP, 1.0 - PROB_CLAMP)
            t_col = tb[:, None].astype(np.float64)
            up_e = weight * (clamped - t_col) / (clamped * (1.0 - clamped)) / tb.size
            d_pha_from_e = heads.e_head.backward(up_e)
            if fc.beta > 0:
                d_pha += d_pha_from_e
            adam_step(heads.e_head, self.opt_e)
        heads.phi_a.backward(d_pha)
        heads.phi_w.backward(d_phw)
        adam_step(heads.phi_w, self.opt_w)
        adam_step(heads.phi_a, self.opt_a)


def train_fccn(data, train_config=None, fccn_config=None):
    """Fit arm CDFs on the learned representation.

    With ``raw_features`` (which requires alpha = beta = 0 and no propensity
    coordinate) this takes exactly the plain trainer's code path, so the
    result matches ``train_ccn`` bit for bit at equal seeds.
    """
    tc = train_config if train_config is not None else TrainConfig()
    fc = fccn_config if fccn_config is not None else FccnConfig()
    if fc.raw_features:
        if fc.alpha != 0 or fc.beta != 0 or fc.propensity_coord:
            raise ValueError("raw_features requires alpha=0, beta=0 and propensity_coord=False")
        return _fit(data, tc)

    def make(covariate_dim, seed_seq):
        return _HeadTrainer(FccnHeads(covariate_dim, fc, rng=seed_seq), tc, fc)

    model = _fit(data, tc, make)
    model.train_info["adjustment"] = {"alpha": fc.alpha, "beta": fc.beta,
                                      "propensity_coord": fc.propensity_coord}
    return model


def estimate_w1(a, b, critic_steps=1500, hidden=(100, 60), clip_bound=0.01,
                learning_rate=1e-3, seed=0, slope_points=2000):
    """Calibrated Wasserstein-1 estimate between two samples.

    Trains a weight-clipped critic to maximize mean D(a) - mean D(b), then
    divides that gap by the critic's mean gradient magnitude at random
    interpolates between cross-sample pairs (the region the transport plan
    crosses). The clip bound caps the critic's Lipschitz constant far below
    1, so the raw gap is meaningless as a distance until rescaled this way.
    The maximization makes the result nonnegative up to training noise
    regardless of argument order.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"samples disagree on dimension: {a.shape[1]} vs {b.shape[1]}")
    root = np.random.SeedSequence(seed)
    s_net, s_pick = root.spawn(2)
    critic = DenseNet((a.shape[1], *hidden, 1), "relu", "identity", rng=s_net)
    optimizer = AdamState.for_net(critic, learning_rate=learning_rate)
    gap = wass_loss(critic, a, b, optimizer=optimizer, critic_steps=critic_steps,
                    clip_bound=clip_bound)
    rng = np.random.default_rng(s_pick)
    ia = rng.integers(0, a.shape[0], slope_points)
    ib = rng.integers(0, b.shape[0], slope_points)
    w = rng.uniform(size=(slope_points, 1))
    mids = w * a[ia] + (1.0 - w) * b[ib]
    pool = np.vstack([a, b])
    grads = np.zeros_like(mids)
    for j in range(mids.shape[1]):
        h = 1e-4 * (pool[:, j].max() - pool[:, j].min())
        if h <= 0.0:
            continue
        shift = np.zeros(mids.shape[1])
        shift[j] = h
        grads[:, j] = ((critic.forward(mids + shift) - critic.forward(mids - shift))
                       / (2.0 * h)).ravel()
    mean_slope = float(np.sqrt((grads ** 2).sum(axis=1)).mean())
    if mean_slope < 1e-12:
        return 0.0
    return float(gap / mean_slope)
