"""Policy and value architectures for talent-infused task allocation.

The actor is a graph encoder -> context -> attention pointer:

* encoder: two propagation layers over the row-normalized edge-weight matrix;
  each layer concatenates the node state with first- and second-moment
  neighborhood aggregates before a learned linear map and tanh,
* context: one linear layer over the flat mission features (time, own state,
  mean-pooled peer block, unit talent values) -- peer pooling keeps the policy
  usable for any fleet size,
* decoder: one 4-head attention block (context as query, node embeddings as
  keys/values) followed by a tanh-clipped pointer layer and masked
  log-softmax over {depot, tasks}.

A second, input-free "talent" head carries the capability choice: a trainable
hidden bias vector feeds, through a linear activation, an output layer of
sigmoid units (one per decoded talent input) plus a learnable log-std for the
sampling Gaussian.  Its output is independent of the observation by
construction.

The critic is a separate network valuing (state, talent) pairs: its own graph
encoder, mean-pooled, concatenated with the context features and the
normalized decoded talents, through a two-layer MLP.

All forwards take a leading batch dimension.  Parameters are immutable during
rollouts (inference snapshots under ``no_grad``); gradient accumulation is
single-threaded.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from codesign import autodiff as ad
from codesign.fileio import fmt
from codesign.morphology import TalentVector

CTX_DIM = 12  # time (1) + own (4) + pooled peers (5) + unit talents (2)


def normalize_adjacency(adjacency) -> np.ndarray:
    A = np.asarray(adjacency, dtype=np.float64)
    return A / A.sum(axis=-1, keepdims=True)


def featurize(obs):
    """Observation -> (node features, context vector) for the networks."""
    pool = obs.peers.mean(axis=0) if len(obs.peers) else np.zeros(5)
    ctx = np.concatenate([[obs.time], obs.own, pool, obs.unit_talents])
    return obs.node_features, ctx


@dataclass(frozen=True)
class TalentScales:
    """Normalization spans for feeding decoded talents to the critic."""

    range_low: float
    range_high: float
    speed_low: float
    speed_high: float
    capacity_high: float

    @classmethod
    def from_boundary(cls, model, probes=64) -> "TalentScales":
        r = np.linspace(model.range_min, model.range_max, probes)
        lo, hi = model.speed_bounds(r)
        grid_r, grid_u = np.meshgrid(r, np.linspace(0.0, 1.0, probes))
        lo_g, hi_g = model.speed_bounds(grid_r.ravel())
        speeds = (1.0 - grid_u.ravel()) * lo_g + grid_u.ravel() * hi_g
        caps = model.surface_value(grid_r.ravel(), speeds)
        return cls(
            range_low=model.range_min,
            range_high=model.range_max,
            speed_low=float(lo.min()),
            speed_high=float(hi.max()),
            capacity_high=max(float(caps.max()), 1.0),
        )

    def normalize(self, talents: TalentVector) -> np.ndarray:
        span_r = max(self.range_high - self.range_low, 1e-12)
        span_s = max(self.speed_high - self.speed_low, 1e-12)
        vec = np.array(
            [
                (talents.flight_range - self.range_low) / span_r,
                (talents.nominal_speed - self.speed_low) / span_s,
                talents.package_capacity / self.capacity_high,
            ]
        )
        return np.clip(vec, 0.0, 1.0)


def _uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def _encoder_params(params, prefix, rng, in_dim, hidden, layers):
    d = in_dim
    for layer in range(layers):
        params[f"{prefix}.W{layer}"] = ad.parameter(_uniform_init(rng, 3 * d, (3 * d, hidden)))
        params[f"{prefix}.b{layer}"] = ad.parameter(np.zeros(hidden))
        d = hidden


def _encoder_forward(params, prefix, node_feats, adj_norm, layers):
    H = ad.Tensor(node_feats)
    A = ad.Tensor(adj_norm)
    for layer in range(layers):
        moment1 = A @ H
        moment2 = A @ (H * H)
        stacked = ad.concatenate([H, moment1, moment2], axis=-1)
        H = ad.tanh(stacked @ params[f"{prefix}.W{layer}"] + params[f"{prefix}.b{layer}"])
    return H


@dataclass(frozen=True)
class ActorConfig:
    node_feat_dim: int = 4
    ctx_dim: int = CTX_DIM
    hidden: int = 64
    encoder_layers: int = 2
    heads: int = 4
    talent_hidden: int = 16
    n_unit_talents: int = 2
    logit_clip: float = 10.0
    init_std: float = 0.3
    std_floor: float = 0.02


class Actor:
    def __init__(self, config: ActorConfig, seed=0):
        if config.hidden % config.heads:
            raise ValueError("hidden width must be divisible by the head count")
        self.config = config
        rng = np.random.default_rng(seed)
        p = {}
        _encoder_params(p, "enc", rng, config.node_feat_dim, config.hidden, config.encoder_layers)
        h = config.hidden
        p["ctx.W"] = ad.parameter(_uniform_init(rng, config.ctx_dim, (config.ctx_dim, h)))
        p["ctx.b"] = ad.parameter(np.zeros(h))
        for name in ("Wq", "Wk", "Wv", "Wo", "Wq2", "Wk2"):
            p[f"dec.{name}"] = ad.parameter(_uniform_init(rng, h, (h, h)))
        p["talent.b1"] = ad.parameter(rng.uniform(-0.5, 0.5, size=config.talent_hidden))
        p["talent.W2"] = ad.parameter(
            _uniform_init(rng, config.talent_hidden, (config.talent_hidden, config.n_unit_talents))
        )
        p["talent.b2"] = ad.parameter(np.zeros(config.n_unit_talents))
        p["talent.log_std"] = ad.parameter(
            np.full(config.n_unit_talents, np.log(config.init_std))
        )
        self.params = p

    def behavior_param_names(self):
        return [k for k in self.params if not k.startswith("talent.")]

    def talent_param_names(self):
        return [k for k in self.params if k.startswith("talent.")]

    def log_probs(self, node_feats, adj_norm, ctx, mask) -> ad.Tensor:
        """Masked log-probabilities over {depot, tasks}, shape (B, N+1)."""
        cfg = self.config
        p = self.params
        H = _encoder_forward(p, "enc", node_feats, adj_norm, cfg.encoder_layers)
        ctx_emb = ad.Tensor(ctx) @ p["ctx.W"] + p["ctx.b"]

        B, n_nodes = H.shape[0], H.shape[1]
        heads, dh = cfg.heads, cfg.hidden // cfg.heads
        q = ad.swapaxes(ad.reshape(ctx_emb @ p["dec.Wq"], (B, 1, heads, dh)), 1, 2)
        K = ad.swapaxes(ad.reshape(H @ p["dec.Wk"], (B, n_nodes, heads, dh)), 1, 2)
        V = ad.swapaxes(ad.reshape(H @ p["dec.Wv"], (B, n_nodes, heads, dh)), 1, 2)
        att_logits = (q @ ad.swapaxes(K, 2, 3)) * (1.0 / np.sqrt(dh))
        att = ad.exp(ad.masked_log_softmax(att_logits, mask[:, None, None, :], axis=-1))
        glimpse = ad.reshape(ad.swapaxes(att @ V, 1, 2), (B, cfg.hidden)) @ p["dec.Wo"]

        q2 = ad.reshape(glimpse @ p["dec.Wq2"], (B, cfg.hidden, 1))
        k2 = H @ p["dec.Wk2"]
        pointer = ad.reshape(k2 @ q2, (B, n_nodes)) * (1.0 / np.sqrt(cfg.hidden))
        pointer = ad.tanh(pointer) * cfg.logit_clip
        return ad.masked_log_softmax(pointer, mask, axis=-1)

    def talent(self):
        """(mean, std) tensors of the input-free talent head."""
        p = self.params
        mean = ad.sigmoid(p["talent.b1"] @ p["talent.W2"] + p["talent.b2"])
        std = ad.clamp_min(ad.exp(p["talent.log_std"]), self.config.std_floor)
        return mean, std

    def talent_numpy(self):
        with ad.no_grad():
            mean, std = self.talent()
        return mean.data.copy(), std.data.copy()

    def log_probs_numpy(self, node_feats, adj_norm, ctx, mask) -> np.ndarray:
        with ad.no_grad():
            return self.log_probs(node_feats, adj_norm, ctx, mask).data


@dataclass(frozen=True)
class CriticConfig:
    node_feat_dim: int = 4
    ctx_dim: int = CTX_DIM
    hidden: int = 64
    encoder_layers: int = 2
    value_hidden: int = 64
    talent_dim: int = 3


class Critic:
    def __init__(self, config: CriticConfig, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        p = {}
        _encoder_params(p, "enc", rng, config.node_feat_dim, config.hidden, config.encoder_layers)
        in_dim = config.hidden + config.ctx_dim + config.talent_dim
        p["val.W1"] = ad.parameter(_uniform_init(rng, in_dim, (in_dim, config.value_hidden)))
        p["val.b1"] = ad.parameter(np.zeros(config.value_hidden))
        p["val.W2"] = ad.parameter(_uniform_init(rng, config.value_hidden, (config.value_hidden, 1)))
        p["val.b2"] = ad.parameter(np.zeros(1))
        self.params = p

    def value(self, node_feats, adj_norm, ctx, talents_norm) -> ad.Tensor:
        """State-talent values, shape (B,)."""
        cfg = self.config
        p = self.params
        H = _encoder_forward(p, "enc", node_feats, adj_norm, cfg.encoder_layers)
        pooled = ad.tmean(H, axis=1)
        stacked = ad.concatenate([pooled, ad.Tensor(ctx), ad.Tensor(talents_norm)], axis=-1)
        hidden = ad.tanh(stacked @ p["val.W1"] + p["val.b1"])
        return ad.reshape(hidden @ p["val.W2"] + p["val.b2"], (-1,))

    def value_numpy(self, node_feats, adj_norm, ctx, talents_norm) -> np.ndarray:
        with ad.no_grad():
            return self.value(node_feats, adj_norm, ctx, talents_norm).data


# -- talent sampling ---------------------------------------------------------

def sample_unit_talents(mean, std, rng):
    """Gaussian sample (pre-clamp log-prob) clamped into [0, 1].

    Returns (raw sample, clamped sample, log-probability of the raw sample).
    """
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std < 0):
        raise ValueError("std must be nonnegative")
    raw = mean + std * rng.standard_normal(mean.shape)
    logp = gaussian_log_prob_numpy(raw, mean, std)
    return raw, np.clip(raw, 0.0, 1.0), float(logp)


def gaussian_log_prob_numpy(raw, mean, std) -> float:
    std = np.maximum(np.asarray(std, dtype=np.float64), 1e-12)
    z = (np.asarray(raw) - np.asarray(mean)) / std
    return float(np.sum(-0.5 * z * z - np.log(std) - 0.5 * np.log(2.0 * np.pi)))


def gaussian_log_prob(raw, mean: ad.Tensor, std: ad.Tensor) -> ad.Tensor:
    """Differentiable per-episode log-prob of raw samples, shape (E,)."""
    raw = ad.as_tensor(raw)
    z = (raw - mean) / std
    terms = z * z * (-0.5) - ad.log(std) - 0.5 * np.log(2.0 * np.pi)
    return ad.tsum(terms, axis=-1)


# -- checkpoints --------------------------------------------------------------

CHECKPOINT_MAGIC = "codesign-checkpoint v1"


def save_checkpoint(path, actor: Actor, critic: Critic, meta=None, optimizers=None):
    """Write every parameter tensor plus architecture hyperparameters as text."""
    lines = [CHECKPOINT_MAGIC]
    header = {
        "actor_config": asdict(actor.config),
        "critic_config": asdict(critic.config),
        "meta": meta or {},
    }
    lines.append(json.dumps(header, sort_keys=True))

    def emit(tag, arrays):
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            dims = " ".join(str(d) for d in arr.shape)
            lines.append(f"{tag} {name} {arr.ndim} {dims}".rstrip())
            lines.append(" ".join(fmt(v) for v in arr.ravel()))

    emit("actor", {k: p.data for k, p in actor.params.items()})
    emit("critic", {k: p.data for k, p in critic.params.items()})
    for tag, opt in (optimizers or {}).items():
        emit(f"opt.{tag}", opt.state_arrays())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Rebuild actor/critic (and optimizer states) from a checkpoint file.

    Returns (actor, critic, meta, optimizer_states) where optimizer_states is
    a dict tag -> dict of arrays.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    header = json.loads(lines[1])
    actor = Actor(ActorConfig(**header["actor_config"]))
    critic = Critic(CriticConfig(**header["critic_config"]))
    arrays = {}
    i = 2
    while i < len(lines):
        parts = lines[i].split()
        tag, name, ndim = parts[0], parts[1], int(parts[2])
        shape = tuple(int(d) for d in parts[3 : 3 + ndim])
        values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        arrays[(tag, name)] = values.reshape(shape)
        i += 2
    for (tag, name), arr in arrays.items():
        if tag == "actor":
            actor.params[name].data = arr
        elif tag == "critic":
            critic.params[name].data = arr
    opt_states = {}
    for (tag, name), arr in arrays.items():
        if tag.startswith("opt."):
            opt_states.setdefault(tag[4:], {})[name] = arr
    return actor, critic, header["meta"], opt_states
