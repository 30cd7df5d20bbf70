"""The trainable core: a single-layer LSTM over per-turn dialog features with
a masked softmax output over action templates.

Recurrence (gate order input/forget/cell/output throughout):

    i = sigmoid(W_i x + U_i h + b_i)
    f = sigmoid(W_f x + U_f h + b_f)
    g = tanh   (W_g x + U_g h + b_g)
    o = sigmoid(W_o x + U_o h + b_o)
    c' = f * c + i * g
    h' = o * tanh(c')

The per-turn input ``x`` is the observation vector concatenated with a one-hot
of the previous system action and the current action mask, so
``input_dim = obs_size + 2 * action_count``.  The output layer is a dense
softmax over action templates; the action mask is applied by excluding masked
logits, which renormalizes the remaining probabilities and pins masked entries
at exactly zero.

Training is per-dialog, full-rollout backpropagation through time (no
truncation), with gradients summed over turns, clipped to a global L2 norm,
and applied with AdaDelta.  The same backward pass serves the cross-entropy
and policy-gradient objectives; they differ only in the per-turn logit
gradients fed into it.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

GATE_ORDER = ("input", "forget", "cell", "output")


class MaskError(ValueError):
    """An action mask is inconsistent with its use (all-zero, or masks a label)."""


@dataclass
class LstmParameters:
    """All trainable weights.

    ``input_weights`` and ``recurrent_weights`` hold the four gate matrices
    stacked along axis 0 in :data:`GATE_ORDER`; ``gate_biases`` likewise.
    """

    input_weights: np.ndarray      # (4, hidden, input_dim)
    recurrent_weights: np.ndarray  # (4, hidden, hidden)
    gate_biases: np.ndarray        # (4, hidden)
    output_weights: np.ndarray     # (action_count, hidden)
    output_bias: np.ndarray        # (action_count,)
    obs_size: int

    @property
    def hidden(self) -> int:
        return self.input_weights.shape[1]

    @property
    def action_count(self) -> int:
        return self.output_bias.shape[0]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[2]

    def tensors(self) -> tuple[np.ndarray, ...]:
        return (
            self.input_weights,
            self.recurrent_weights,
            self.gate_biases,
            self.output_weights,
            self.output_bias,
        )

    def validate(self) -> None:
        h, a, d = self.hidden, self.action_count, self.input_dim
        expect = [(4, h, d), (4, h, h), (4, h), (a, h), (a,)]
        for tensor, shape in zip(self.tensors(), expect):
            if tensor.shape != shape:
                raise ValueError(f"parameter tensor shape {tensor.shape} != {shape}")
            if not np.all(np.isfinite(tensor)):
                raise ValueError("non-finite parameter tensor")
        if d != self.obs_size + 2 * a:
            raise ValueError(
                f"input_dim {d} != obs_size {self.obs_size} + 2*action_count {a}"
            )

    def copy(self) -> "LstmParameters":
        return LstmParameters(*(t.copy() for t in self.tensors()), obs_size=self.obs_size)


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(np.zeros(hidden), np.zeros(hidden))


@dataclass
class Gradients:
    """Shape-congruent with :class:`LstmParameters`, one slot per tensor."""

    input_weights: np.ndarray
    recurrent_weights: np.ndarray
    gate_biases: np.ndarray
    output_weights: np.ndarray
    output_bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: LstmParameters) -> "Gradients":
        return cls(*(np.zeros_like(t) for t in params.tensors()))

    def tensors(self) -> tuple[np.ndarray, ...]:
        return (
            self.input_weights,
            self.recurrent_weights,
            self.gate_biases,
            self.output_weights,
            self.output_bias,
        )

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(t * t)) for t in self.tensors())))

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(*(t * factor for t in self.tensors()))


@dataclass
class AdaDeltaState:
    """Per-parameter accumulators of squared gradients and squared updates."""

    grad_sq_avg: tuple[np.ndarray, ...]
    update_sq_avg: tuple[np.ndarray, ...]
    rho: float = 0.95
    epsilon: float = 1e-6

    @classmethod
    def zeros_like(cls, params: LstmParameters, rho: float = 0.95, epsilon: float = 1e-6) -> "AdaDeltaState":
        return cls(
            tuple(np.zeros_like(t) for t in params.tensors()),
            tuple(np.zeros_like(t) for t in params.tensors()),
            rho,
            epsilon,
        )


@dataclass
class ActionDistribution:
    """Probabilities over action templates; masked entries are exactly zero."""

    probs: np.ndarray

    def __post_init__(self):
        if np.any(self.probs < 0) or abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("invalid action distribution")

    def argmax(self) -> int:
        # ties resolve to the lowest action id
        return int(np.argmax(self.probs))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_parameters(obs_size: int, action_count: int, hidden: int, seed: int) -> LstmParameters:
    """Glorot-uniform weights, zero biases except forget-gate bias = 1.

    Deterministic for a fixed seed; tensors are drawn in declaration order.
    """
    if obs_size < 1 or action_count < 1 or hidden < 1:
        raise ValueError("obs_size, action_count and hidden must all be >= 1")
    input_dim = obs_size + 2 * action_count
    rng = np.random.default_rng(seed)

    def glorot(shape, fan_in, fan_out):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=shape)

    w = glorot((4, hidden, input_dim), input_dim, hidden)
    u = glorot((4, hidden, hidden), hidden, hidden)
    b = np.zeros((4, hidden))
    b[GATE_ORDER.index("forget")] = 1.0
    v = glorot((action_count, hidden), hidden, action_count)
    c = np.zeros(action_count)
    params = LstmParameters(w, u, b, v, c, obs_size=obs_size)
    params.validate()
    return params


def _cell_step(params: LstmParameters, state_h, state_c, x):
    """Shared cell computation; every forward path funnels through here so
    full-dialog rollouts and engine stepping agree bitwise."""
    h = params.hidden
    z = (
        params.input_weights.reshape(4 * h, -1) @ x
        + params.recurrent_weights.reshape(4 * h, h) @ state_h
        + params.gate_biases.reshape(-1)
    ).reshape(4, h)
    i, f, o = _sigmoid(z[0]), _sigmoid(z[1]), _sigmoid(z[3])
    g = np.tanh(z[2])
    cell = f * state_c + i * g
    hidden = o * np.tanh(cell)
    return i, f, g, o, cell, hidden


def lstm_step(params: LstmParameters, state: LstmState, x: np.ndarray) -> LstmState:
    """One step of the recurrence for input ``x`` of length ``input_dim``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_dim,):
        raise ValueError(f"input length {x.shape} != ({params.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input vector")
    *_, cell, hidden = _cell_step(params, state.hidden, state.cell, x)
    return LstmState(hidden, cell)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax restricted to unmasked entries; masked entries are exactly 0.

    Equivalent to multiplying the full softmax elementwise by the mask and
    renormalizing, but computed in logit space for stability.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise MaskError("all-zero action mask")
    shifted = logits - np.max(logits[mask])
    exp = np.where(mask, np.exp(np.where(mask, shifted, 0.0)), 0.0)
    return exp / exp.sum()


def output_distribution(
    params: LstmParameters, hidden: np.ndarray, mask: np.ndarray
) -> ActionDistribution:
    """Masked softmax over the dense output layer applied to ``hidden``."""
    logits = params.output_weights @ hidden + params.output_bias
    return ActionDistribution(masked_softmax(logits, mask))


def _input_matrix(
    params: LstmParameters,
    observations: list[np.ndarray] | np.ndarray,
    masks: list[np.ndarray] | np.ndarray,
    action_history: list[int],
) -> np.ndarray:
    T = len(observations)
    if not (T >= 1 and len(masks) == T and len(action_history) == T):
        raise ValueError("observations, masks and action_history must have equal length >= 1")
    a = params.action_count
    xs = np.zeros((T, params.input_dim))
    for t in range(T):
        obs = np.asarray(observations[t], dtype=float)
        if obs.shape != (params.obs_size,):
            raise ValueError(f"observation {t} has length {obs.shape}, expected {params.obs_size}")
        xs[t, : params.obs_size] = obs
        if t > 0:
            prev = action_history[t - 1]
            if not 0 <= prev < a:
                raise ValueError(f"action id {prev} out of range")
            xs[t, params.obs_size + prev] = 1.0
        xs[t, params.obs_size + a :] = np.asarray(masks[t], dtype=float)
    return xs


def _forward_cached(params: LstmParameters, xs: np.ndarray, masks) -> dict:
    """Run the rollout keeping every intermediate needed for the backward pass."""
    T = xs.shape[0]
    h = params.hidden
    cache = {
        "xs": xs,
        "i": np.zeros((T, h)), "f": np.zeros((T, h)),
        "g": np.zeros((T, h)), "o": np.zeros((T, h)),
        "cell": np.zeros((T, h)), "tanh_cell": np.zeros((T, h)),
        "hidden": np.zeros((T, h)),
        "q": np.zeros((T, params.action_count)),
    }
    state_h = np.zeros(h)
    state_c = np.zeros(h)
    for t in range(T):
        i, f, g, o, cell, hidden = _cell_step(params, state_h, state_c, xs[t])
        logits = params.output_weights @ hidden + params.output_bias
        cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t] = i, f, g, o
        cache["cell"][t], cache["hidden"][t] = cell, hidden
        cache["tanh_cell"][t] = np.tanh(cell)
        cache["q"][t] = masked_softmax(logits, masks[t])
        state_h, state_c = hidden, cell
    return cache


def _backward(params: LstmParameters, cache: dict, dlogits: np.ndarray) -> Gradients:
    """Full backpropagation through time given per-turn logit gradients."""
    T = dlogits.shape[0]
    h = params.hidden
    grads = Gradients.zeros_like(params)
    u_flat = params.recurrent_weights.reshape(4 * h, h)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in reversed(range(T)):
        hid = cache["hidden"][t]
        grads.output_weights += np.outer(dlogits[t], hid)
        grads.output_bias += dlogits[t]
        dh = params.output_weights.T @ dlogits[t] + dh_next
        i, f, g, o = cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t]
        tanh_cell = cache["tanh_cell"][t]
        c_prev = cache["cell"][t - 1] if t > 0 else np.zeros(h)
        h_prev = cache["hidden"][t - 1] if t > 0 else np.zeros(h)
        do = dh * tanh_cell
        dct = dh * o * (1.0 - tanh_cell**2) + dc_next
        dz = np.empty((4, h))
        dz[0] = dct * g * i * (1.0 - i)
        dz[1] = dct * c_prev * f * (1.0 - f)
        dz[2] = dct * i * (1.0 - g**2)
        dz[3] = do * o * (1.0 - o)
        grads.input_weights += dz[:, :, None] * cache["xs"][t][None, None, :]
        grads.recurrent_weights += dz[:, :, None] * h_prev[None, None, :]
        grads.gate_biases += dz
        dh_next = u_flat.T @ dz.reshape(-1)
        dc_next = dct * f
    return grads


def forward_dialog(
    params: LstmParameters,
    observations,
    masks,
    action_history: list[int],
) -> list[ActionDistribution]:
    """Action distributions for a whole dialog, states zero-initialized.

    ``action_history[t]`` is the action selected (or labeled) at turn ``t``;
    it feeds the previous-action one-hot at turn ``t + 1``.  Turn 0 sees an
    all-zero previous-action vector.
    """
    xs = _input_matrix(params, observations, masks, action_history)
    cache = _forward_cached(params, xs, masks)
    return [ActionDistribution(cache["q"][t].copy()) for t in range(xs.shape[0])]


def supervised_gradients(
    params: LstmParameters,
    observations,
    masks,
    label_actions: list[int],
) -> tuple[Gradients, float]:
    """Cross-entropy loss and gradients for one dialog (one minibatch).

    Loss is ``-sum_t log pi(label_t)`` under the masked distribution, summed
    (not averaged) over turns; gradients come from a full, untruncated
    backward pass.  A label whose mask bit is zero is a data inconsistency.
    """
    xs = _input_matrix(params, observations, masks, label_actions)
    T = xs.shape[0]
    for t, label in enumerate(label_actions):
        if not 0 <= label < params.action_count:
            raise ValueError(f"label {label} out of range at turn {t}")
        if not np.asarray(masks[t], dtype=bool)[label]:
            raise MaskError(f"label action {label} is masked at turn {t}")
    cache = _forward_cached(params, xs, masks)
    q = cache["q"]
    loss = 0.0
    dlogits = q.copy()
    for t, label in enumerate(label_actions):
        loss -= float(np.log(q[t, label]))
        dlogits[t, label] -= 1.0
    return _backward(params, cache, dlogits), loss


def reinforce_gradients(params: LstmParameters, trajectory, G: float, b: float) -> Gradients:
    """Gradient of ``sum_t log pi(a_t | h_t)`` scaled by ``(G - b)``.

    This is the ascent direction for the return; callers negate it before
    handing it to the (descending) optimizer step.  ``trajectory`` supplies
    ``observations``, ``masks``, ``actions`` and the behavior probabilities
    recorded at sampling time, which must all be nonzero.
    """
    actions = list(trajectory.actions)
    for t, p in enumerate(trajectory.behavior_probs):
        if p <= 0.0:
            raise ValueError(f"recorded action at turn {t} had zero sampling probability")
    xs = _input_matrix(params, trajectory.observations, trajectory.masks, actions)
    cache = _forward_cached(params, xs, trajectory.masks)
    q = cache["q"]
    dlogits = -q * (G - b)
    for t, action in enumerate(actions):
        if q[t, action] <= 0.0:
            raise ValueError(f"current policy assigns zero probability to recorded action at turn {t}")
        dlogits[t, action] += G - b
    return _backward(params, cache, dlogits)


def clip_global_norm(grads: Gradients, max_norm: float) -> Gradients:
    """Scale all tensors by ``max_norm / norm`` when the global L2 norm exceeds it."""
    norm = grads.global_norm()
    if norm > max_norm:
        return grads.scaled(max_norm / norm)
    return grads


def adadelta_step(
    params: LstmParameters, grads: Gradients, opt: AdaDeltaState
) -> tuple[LstmParameters, AdaDeltaState]:
    """One AdaDelta descent update; returns fresh parameter and optimizer values.

    Per element: E[g2] <- rho E[g2] + (1-rho) g2, then
    delta = -sqrt(E[d2] + eps) / sqrt(E[g2] + eps) * g, then
    E[d2] <- rho E[d2] + (1-rho) delta2, then param += delta.
    """
    rho, eps = opt.rho, opt.epsilon
    new_tensors = []
    new_gsq = []
    new_usq = []
    for p, g, gsq, usq in zip(params.tensors(), grads.tensors(), opt.grad_sq_avg, opt.update_sq_avg):
        gsq = rho * gsq + (1.0 - rho) * g * g
        delta = -np.sqrt(usq + eps) / np.sqrt(gsq + eps) * g
        usq = rho * usq + (1.0 - rho) * delta * delta
        new_tensors.append(p + delta)
        new_gsq.append(gsq)
        new_usq.append(usq)
    new_params = LstmParameters(*new_tensors, obs_size=params.obs_size)
    return new_params, AdaDeltaState(tuple(new_gsq), tuple(new_usq), rho, eps)


# --- checkpoint file format -------------------------------------------------
#
# magic "HCN1"; obs_size, action_count, hidden as little-endian uint32; the
# five parameter tensors in declaration order as little-endian float64 in C
# order; one flag byte; when the flag is 1, rho and epsilon (two float64)
# followed by the AdaDelta accumulators (grad_sq_avg then update_sq_avg, same
# tensor order).

_MAGIC = b"HCN1"


def save_checkpoint(path, params: LstmParameters, opt: AdaDeltaState | None = None) -> None:
    params.validate()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", params.obs_size, params.action_count, params.hidden))
        for tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
        if opt is None:
            fh.write(b"\x00")
        else:
            fh.write(b"\x01")
            fh.write(struct.pack("<dd", opt.rho, opt.epsilon))
            for group in (opt.grad_sq_avg, opt.update_sq_avg):
                for tensor in group:
                    fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[LstmParameters, AdaDeltaState | None]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        obs_size, action_count, hidden = struct.unpack("<III", fh.read(12))
        input_dim = obs_size + 2 * action_count
        shapes = [
            (4, hidden, input_dim),
            (4, hidden, hidden),
            (4, hidden),
            (action_count, hidden),
            (action_count,),
        ]

        def read_tensors():
            out = []
            for shape in shapes:
                n = int(np.prod(shape))
                buf = fh.read(8 * n)
                if len(buf) != 8 * n:
                    raise ValueError(f"{path}: truncated checkpoint")
                out.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
            return out

        params = LstmParameters(*read_tensors(), obs_size=obs_size)
        params.validate()
        flag = fh.read(1)
        if flag == b"\x00" or flag == b"":
            return params, None
        if flag != b"\x01":
            raise ValueError(f"{path}: bad accumulator flag byte {flag!r}")
        rho, epsilon = struct.unpack("<dd", fh.read(16))
        opt = AdaDeltaState(tuple(read_tensors()), tuple(read_tensors()), rho, epsilon)
        return params, opt
