"""Small dense actor-critic network with hand-written backprop and Adam.

All weights live in one flat float64 vector; layers are views into it, so
optimizers and checkpoints only ever deal with a single array.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint

LOG_PROB_FLOOR = -40.0


@dataclass(frozen=True)
class Architecture:
    n_in: int
    hidden: Tuple[int, ...]
    n_actions: int
    shared_trunk: bool = True

    def _chain(self, n_out: int):
        dims = (self.n_in,) + tuple(self.hidden) + (n_out,)
        return list(zip(dims[:-1], dims[1:]))

    def layer_shapes(self):
        """(name, fan_in, fan_out) for every dense layer in storage order."""
        out = []
        if self.shared_trunk:
            dims = (self.n_in,) + tuple(self.hidden)
            for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
                out.append(("trunk%d" % i, a, b))
            h = dims[-1]
            out.append(("policy", h, self.n_actions))
            out.append(("value", h, 1))
        else:
            for i, (a, b) in enumerate(self._chain(self.n_actions)):
                out.append(("actor%d" % i, a, b))
            for i, (a, b) in enumerate(self._chain(1)):
                out.append(("critic%d" % i, a, b))
        return out

    @property
    def n_params(self) -> int:
        return sum(a * b + b for _, a, b in self.layer_shapes())

    def describe(self) -> dict:
        return {
            "n_in": str(self.n_in),
            "hidden": "x".join(str(h) for h in self.hidden) or "-",
            "n_actions": str(self.n_actions),
            "shared": "1" if self.shared_trunk else "0",
            "act": "tanh",
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "Architecture":
        try:
            hidden = tuple(int(h) for h in meta["hidden"].split("x")) if meta["hidden"] != "-" else ()
            return cls(int(meta["n_in"]), hidden, int(meta["n_actions"]), meta["shared"] == "1")
        except (KeyError, ValueError) as exc:
            raise CheckpointError("bad network descriptor %r" % meta) from exc


def _views(arch: Architecture, flat: np.ndarray) -> dict:
    """Per-layer (W, b) views into a flat parameter-shaped array."""
    out = {}
    i = 0
    for name, a, b in arch.layer_shapes():
        W = flat[i:i + a * b].reshape(a, b)
        i += a * b
        out[name] = (W, flat[i:i + b])
        i += b
    return out


class Mlp:
    """Tanh MLP producing (logits, value).

    With a shared trunk both heads read the last hidden layer. Otherwise the
    actor and critic are two independent stacks fed the same input.
    """

    def __init__(self, arch: Architecture, params: Optional[np.ndarray] = None, rng=None):
        self.arch = arch
        self.params = np.zeros(arch.n_params) if params is None else np.array(params, dtype=float)
        if self.params.shape != (arch.n_params,):
            raise ValueError("parameter vector has %d entries, architecture needs %d"
                             % (self.params.size, arch.n_params))
        self._bind()
        if params is None and rng is not None:
            self.init(rng)

    def _bind(self):
        self.layers = _views(self.arch, self.params)

    def init(self, rng: np.random.Generator) -> None:
        """Uniform fan-in init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases too."""
        for name, a, b in self.arch.layer_shapes():
            W, bias = self.layers[name]
            lim = 1.0 / math.sqrt(a)
            W[...] = rng.uniform(-lim, lim, size=W.shape)
            bias[...] = rng.uniform(-lim, lim, size=bias.shape)

    def copy(self) -> "Mlp":
        return Mlp(self.arch, self.params.copy())

    # -- forward / backward ---------------------------------------------
    def _stack(self, prefix: str, n: int):
        return [self.layers["%s%d" % (prefix, i)] for i in range(n)]

    def forward(self, x: np.ndarray):
        """Returns logits (B, A), values (B,) and a cache for :meth:`backward`."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite network input")
        nh = len(self.arch.hidden)
        if self.arch.shared_trunk:
            acts = [x]
            h = x
            for W, b in self._stack("trunk", nh):
                h = np.tanh(h @ W + b)
                acts.append(h)
            Wp, bp = self.layers["policy"]
            Wv, bv = self.layers["value"]
            logits = h @ Wp + bp
            value = (h @ Wv + bv)[:, 0]
            cache = (acts,)
        else:
            acts_a, acts_c = [x], [x]
            ha = hc = x
            layers_a = self._stack("actor", nh + 1)
            layers_c = self._stack("critic", nh + 1)
            for W, b in layers_a[:-1]:
                ha = np.tanh(ha @ W + b)
                acts_a.append(ha)
            for W, b in layers_c[:-1]:
                hc = np.tanh(hc @ W + b)
                acts_c.append(hc)
            logits = ha @ layers_a[-1][0] + layers_a[-1][1]
            value = (hc @ layers_c[-1][0] + layers_c[-1][1])[:, 0]
            cache = (acts_a, acts_c)
        if single:
            return logits[0], value[0], cache
        return logits, value, cache

    def backward(self, cache, d_logits: np.ndarray, d_value: np.ndarray) -> np.ndarray:
        """Gradient of a loss w.r.t. the flat parameters given dL/dlogits and dL/dvalue."""
        d_logits = np.atleast_2d(np.asarray(d_logits, dtype=float))
        d_value = np.asarray(d_value, dtype=float).reshape(-1, 1)
        grad = np.zeros_like(self.params)
        gviews = _views(self.arch, grad)
        nh = len(self.arch.hidden)

        def chain(names, acts, d):
            # acts[i] is the input of layer i; the last layer is linear
            for li in range(len(names) - 1, -1, -1):
                W, _ = self.layers[names[li]]
                gW, gb = gviews[names[li]]
                gW += acts[li].T @ d
                gb += d.sum(axis=0)
                if li > 0:
                    d = (d @ W.T) * (1.0 - acts[li] ** 2)

        if self.arch.shared_trunk:
            (acts,) = cache
            h = acts[-1]
            Wp, _ = self.layers["policy"]
            Wv, _ = self.layers["value"]
            gWp, gbp = gviews["policy"]
            gWv, gbv = gviews["value"]
            gWp += h.T @ d_logits
            gbp += d_logits.sum(axis=0)
            gWv += h.T @ d_value
            gbv += d_value.sum(axis=0)
            if nh:
                d = (d_logits @ Wp.T + d_value @ Wv.T) * (1.0 - h ** 2)
            for li in range(nh - 1, -1, -1):
                name = "trunk%d" % li
                W, _ = self.layers[name]
                gW, gb = gviews[name]
                gW += acts[li].T @ d
                gb += d.sum(axis=0)
                if li > 0:
                    d = (d @ W.T) * (1.0 - acts[li] ** 2)
        else:
            acts_a, acts_c = cache
            chain(["actor%d" % i for i in range(nh + 1)], acts_a, d_logits)
            chain(["critic%d" % i for i in range(nh + 1)], acts_c, d_value)
        return grad

    # -- persistence -----------------------------------------------------
    def save(self, path, extra: Optional[dict] = None) -> None:
        meta = dict(self.arch.describe())
        if extra:
            meta.update({k: str(v) for k, v in extra.items()})
        write_checkpoint(path, "mlp", meta, self.params)

    @classmethod
    def load(cls, path) -> Tuple["Mlp", dict]:
        kind, meta, values = read_checkpoint(path)
        if kind != "mlp":
            raise CheckpointError("%s holds a %s checkpoint, not a network" % (path, kind))
        arch = Architecture.from_meta(meta)
        if values.size != arch.n_params:
            raise CheckpointError("%s: %d values for an architecture with %d parameters"
                                  % (path, values.size, arch.n_params))
        return cls(arch, values), meta


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the entries where ``mask`` is true; masked entries are exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("mask excludes every action")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities on the mask, ``-inf`` elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("mask excludes every action")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Adam:
    """Adam with bias correction and a step decay of the learning rate."""

    def __init__(self, n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, decay: float = 0.9, decay_every: int = 20):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.decay, self.decay_every = decay, decay_every
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self._buf = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        """In-place update of ``params``."""
        if grad.shape != params.shape:
            raise ValueError("gradient shape %s does not match parameters %s" % (grad.shape, params.shape))
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        buf = self._buf
        # in place: m and v moments, then params -= lr * m_hat / (sqrt(v_hat) + eps)
        self.m *= b1
        np.multiply(grad, 1.0 - b1, out=buf)
        self.m += buf
        self.v *= b2
        np.multiply(grad, grad, out=buf)
        buf *= 1.0 - b2
        self.v += buf
        np.sqrt(self.v, out=buf)
        buf /= math.sqrt(1.0 - b2 ** self.t)
        buf += self.eps
        np.divide(self.m, buf, out=buf)
        buf *= self.lr / (1.0 - b1 ** self.t)
        params -= buf
        if self.decay_every and self.t % self.decay_every == 0:
            self.lr *= self.decay

    def state_vector(self) -> np.ndarray:
        return np.concatenate([self.m, self.v, [float(self.t), self.lr]])

    def load_state_vector(self, v: np.ndarray) -> None:
        n = self.m.size
        if v.size != 2 * n + 2:
            raise CheckpointError("optimizer state has %d values, expected %d" % (v.size, 2 * n + 2))
        self.m, self.v = v[:n].copy(), v[n:2 * n].copy()
        self.t, self.lr = int(v[2 * n]), float(v[2 * n + 1])
