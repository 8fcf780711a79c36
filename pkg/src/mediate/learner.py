"""Independent actor-critic learner: fully connected ELU networks with a
softmax actor head and a scalar critic head."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import act_kernel
from .errors import ConfigurationError, TrainingError


@dataclass
class LearnerConfig:
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    gamma: float = 0.95
    history_length: int = 1
    # preprocessing layer followed by two hidden layers
    hidden: tuple[int, ...] = (64, 64, 64)
    entropy_coef: float = 0.0
    # one trunk feeding both heads, or the same architecture twice
    shared_trunk: bool = False
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.history_length != 1:
            raise ConfigurationError("only history length 1 is supported")
        if not self.hidden:
            raise ConfigurationError("need at least one trunk layer")


def elu(x: np.ndarray) -> np.ndarray:
    out = np.expm1(np.minimum(x, 0.0))
    out += np.maximum(x, 0.0)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def td_advantage(rewards, values, gamma: float) -> np.ndarray:
    """TD(0) errors ``r_t + gamma * V(z_{t+1}) - V(z_t)``.

    ``values`` has one more entry than ``rewards``: the last is the bootstrap
    value of the final observation (episodes end by truncation).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(rewards) == 0:
        raise ValueError("empty rollout")
    if len(values) != len(rewards) + 1:
        raise ValueError("values must include the bootstrap value of the final observation")
    return rewards + gamma * values[1:] - values[:-1]


class Adam:
    def __init__(self, size: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class UpdateInfo:
    loss: float
    actor_loss: float
    critic_loss: float
    grad_norm: float
    clipped_norm: float
    advantages: np.ndarray = field(repr=False)


class ActorCritic:
    """Policy and value approximation for one agent.

    All parameters live in one flat vector ``theta``. ``layers`` holds the
    ``(W, b)`` views of the actor trunk and ``value_layers`` those of the
    critic trunk (the same views when the trunk is shared);
    ``actor``/``critic`` are the head views.
    """

    def __init__(self, obs_dim: int, n_actions: int, config: LearnerConfig | None = None, rng=None):
        self.config = config or LearnerConfig()
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.sizes = np.array((self.obs_dim, *self.config.hidden), dtype=np.int64)
        self._shapes = self._param_shapes()
        self.theta = np.zeros(sum(int(np.prod(s)) for _, s in self._shapes))
        self._bind_views()
        self.optimizer = Adam(self.theta.size, self.config.learning_rate, self.config.adam_betas, self.config.adam_eps)
        self.initialize(rng if rng is not None else np.random.default_rng())

    def _trunk_shapes(self, prefix: str) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        for k in range(len(self.sizes) - 1):
            shapes.append((f"{prefix}{k}.W", (int(self.sizes[k]), int(self.sizes[k + 1]))))
            shapes.append((f"{prefix}{k}.b", (int(self.sizes[k + 1]),)))
        return shapes

    def _param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        h = int(self.sizes[-1])
        shapes = self._trunk_shapes("trunk")
        shapes += [("actor.W", (h, self.n_actions)), ("actor.b", (self.n_actions,))]
        if not self.config.shared_trunk:
            shapes += self._trunk_shapes("vtrunk")
        shapes += [("critic.W", (h, 1)), ("critic.b", (1,))]
        return shapes

    def _bind_views(self) -> None:
        views = {}
        offset = 0
        for name, shape in self._shapes:
            size = int(np.prod(shape))
            views[name] = self.theta[offset : offset + size].reshape(shape)
            offset += size
        self.params = views
        self._actor_size = sum(int(np.prod(shape)) for name, shape in self._shapes if not name.startswith(("vtrunk", "critic")))
        n = len(self.sizes) - 1
        self.layers = [(views[f"trunk{k}.W"], views[f"trunk{k}.b"]) for k in range(n)]
        if self.config.shared_trunk:
            self.value_layers = self.layers
        else:
            self.value_layers = [(views[f"vtrunk{k}.W"], views[f"vtrunk{k}.b"]) for k in range(n)]
        self.actor = (views["actor.W"], views["actor.b"])
        self.critic = (views["critic.W"], views["critic.b"])

    def initialize(self, rng: np.random.Generator) -> None:
        """Uniform fan-in init; the actor head starts at zero (uniform policy)."""
        value_trunk = [] if self.config.shared_trunk else self.value_layers
        for W, b in [*self.layers, *value_trunk, self.critic]:
            bound = 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        self.actor[0][...] = 0.0
        self.actor[1][...] = 0.0

    def _check(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has dimension {obs.shape[-1]}, expected {self.obs_dim}")
        return obs

    @staticmethod
    def _trunk(obs: np.ndarray, layers) -> list[np.ndarray]:
        acts = [obs]
        h = obs
        for W, b in layers:
            h = elu(h @ W + b)
            acts.append(h)
        return acts

    def _value_acts(self, obs, actor_acts) -> list[np.ndarray]:
        if self.config.shared_trunk:
            return actor_acts
        return self._trunk(obs, self.value_layers)

    def forward(self, obs) -> tuple[np.ndarray, np.ndarray]:
        """Action probabilities and state values for one or many observations."""
        obs = self._check(obs)
        acts = self._trunk(obs, self.layers)
        probs = softmax(acts[-1] @ self.actor[0] + self.actor[1])
        hv = self._value_acts(obs, acts)[-1]
        value = (hv @ self.critic[0] + self.critic[1])[..., 0]
        return probs, value

    def policy(self, obs) -> np.ndarray:
        return self.forward(obs)[0]

    def value(self, obs):
        return self.forward(obs)[1]

    def act(self, obs: np.ndarray, u: float) -> tuple[int, float]:
        """Sample an action with uniform draw ``u``; also returns ``V(obs)``."""
        return act_kernel(self.theta, self.sizes, self.n_actions, obs, u, self.config.shared_trunk)

    def loss_and_grad(self, observations, actions, rewards):
        """Combined actor-critic loss over one trajectory and its gradient.

        ``observations`` holds T+1 rows (the last is the bootstrap observation).
        The TD error is held constant in the actor term; the critic regresses
        onto the detached target ``r + gamma * V(next)``.
        """
        cfg = self.config
        obs = self._check(observations)
        actions = np.asarray(actions, dtype=np.int64)
        rewards = np.asarray(rewards, dtype=float)
        T = len(actions)
        if T == 0 or len(obs) != T + 1 or len(rewards) != T:
            raise ValueError("need T actions, T rewards and T+1 observations")

        acts = self._trunk(obs, self.layers)
        vacts = self._value_acts(obs, acts)
        values = (vacts[-1] @ self.critic[0] + self.critic[1])[:, 0]
        delta = td_advantage(rewards, values, cfg.gamma)

        h = acts[-1][:T]
        hv = vacts[-1][:T]
        logits = h @ self.actor[0] + self.actor[1]
        probs = softmax(logits)
        idx = np.arange(T)
        logp = np.log(probs[idx, actions])
        actor_loss = -float(np.sum(delta * logp))
        critic_loss = float(np.sum(delta * delta))
        loss = actor_loss + critic_loss

        d_logits = probs * delta[:, None]
        d_logits[idx, actions] -= delta
        if cfg.entropy_coef:
            logp_all = np.log(probs)
            entropy = -np.sum(probs * logp_all, axis=1)
            loss -= cfg.entropy_coef * float(entropy.sum())
            d_logits += cfg.entropy_coef * probs * (logp_all + entropy[:, None])
        d_value = -2.0 * delta

        grads = {}
        grads["actor.W"] = h.T @ d_logits
        grads["actor.b"] = d_logits.sum(axis=0)
        grads["critic.W"] = hv.T @ d_value[:, None]
        grads["critic.b"] = np.array([d_value.sum()])
        dh = d_logits @ self.actor[0].T
        dv = np.outer(d_value, self.critic[0][:, 0])
        if cfg.shared_trunk:
            self._backprop(dh + dv, acts, self.layers, "trunk", T, grads)
        else:
            self._backprop(dh, acts, self.layers, "trunk", T, grads)
            self._backprop(dv, vacts, self.value_layers, "vtrunk", T, grads)
        flat = np.concatenate([grads[name].ravel() for name, _ in self._shapes])
        return loss, flat, {"actor_loss": actor_loss, "critic_loss": critic_loss, "advantages": delta}

    @staticmethod
    def _backprop(dh, acts, layers, prefix, T, grads) -> None:
        for k in range(len(layers) - 1, -1, -1):
            # elu'(z) = 1 + min(elu(z), 0)
            slope = np.minimum(acts[k + 1][:T], 0.0)
            slope += 1.0
            dz = dh * slope
            grads[f"{prefix}{k}.W"] = acts[k][:T].T @ dz
            grads[f"{prefix}{k}.b"] = dz.sum(axis=0)
            if k > 0:
                dh = dz @ layers[k][0].T

    def update(self, observations, actions, rewards) -> UpdateInfo:
        """One clipped Adam step on the trajectory loss."""
        loss, grad, parts = self.loss_and_grad(observations, actions, rewards)
        norm = float(np.linalg.norm(grad))
        if not np.isfinite(loss) or not np.isfinite(norm):
            raise TrainingError(
                f"non-finite loss {loss} (actor {parts['actor_loss']}, critic {parts['critic_loss']}), "
                f"gradient norm {norm}"
            )
        if self.config.shared_trunk:
            grad = clip_by_global_norm(grad, self.config.clip_norm)
        else:
            # each network is clipped on its own
            k = self._actor_size
            grad = np.concatenate([
                clip_by_global_norm(grad[:k], self.config.clip_norm),
                clip_by_global_norm(grad[k:], self.config.clip_norm),
            ])
        self.optimizer.step(self.theta, grad)
        return UpdateInfo(
            loss=loss,
            actor_loss=parts["actor_loss"],
            critic_loss=parts["critic_loss"],
            grad_norm=norm,
            clipped_norm=float(np.linalg.norm(grad)),
            advantages=parts["advantages"],
        )


def clip_by_global_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


CHECKPOINT_MAGIC = b"MDCK"
CHECKPOINT_VERSION = 1


def config_hash(config: LearnerConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: str | Path, learner: ActorCritic) -> None:
    """Write parameters and optimizer moments.

    Layout: magic, u32 version, u32 header length, JSON header, then the
    float64 little-endian vectors ``theta``, ``adam_m``, ``adam_v``.
    """
    header = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": learner.obs_dim,
        "n_actions": learner.n_actions,
        "config": asdict(learner.config),
        "config_hash": config_hash(learner.config),
        "shapes": [[name, list(shape)] for name, shape in learner._shapes],
        "vectors": ["theta", "adam_m", "adam_v"],
        "size": int(learner.theta.size),
        "adam_t": learner.optimizer.t,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(raw)))
        fh.write(raw)
        for vec in (learner.theta, learner.optimizer.m, learner.optimizer.v):
            fh.write(vec.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> ActorCritic:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a learner checkpoint")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12 : 12 + hlen])
    config = LearnerConfig(**header["config"])
    if config_hash(config) != header["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    learner = ActorCritic(header["obs_dim"], header["n_actions"], config, rng=np.random.default_rng(0))
    size = header["size"]
    body = np.frombuffer(data[12 + hlen :], dtype="<f8")
    if body.size != 3 * size:
        raise ValueError("truncated checkpoint")
    learner.theta[...] = body[:size]
    learner.optimizer.m[...] = body[size : 2 * size]
    learner.optimizer.v[...] = body[2 * size :]
    learner.optimizer.t = header["adam_t"]
    return learner
