"""Recurrent policy networks implemented directly on numpy arrays.

Two cell kinds share one parameter container and one output head:

* ``lstm`` — standard LSTM, gates computed jointly from [features ⊕ hidden],
  gate order (input, forget, output, candidate);
* ``elman`` — single-tanh recurrence, the RL-RNN baseline.

The network runs over layers in index order (layer index plays the role of
time). Each step's hidden state maps through the output head to one logit
per resource type; a softmax turns the logits into the distribution the
scheduling action for that layer is drawn from.

Backpropagation through time is hand-written here and checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import SchedulingPlan
from ..errors import InvariantError, NumericError

CELL_LSTM = "lstm"
CELL_ELMAN = "elman"


@dataclass
class PolicyParams:
    """All learnable weights of the scheduling policy.

    ``w_cell``/``b_cell`` hold the recurrent cell (shape depends on the cell
    kind); ``w_out``/``b_out`` are the hidden-to-logits head.
    """

    cell: str
    w_cell: np.ndarray
    b_cell: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    hidden_size: int

    def __post_init__(self):
        if self.cell not in (CELL_LSTM, CELL_ELMAN):
            raise InvariantError(f"unknown cell kind '{self.cell}'")
        gates = 4 if self.cell == CELL_LSTM else 1
        h = self.hidden_size
        if self.w_cell.shape[1] != gates * h or self.b_cell.shape != (gates * h,):
            raise InvariantError("cell weight shapes inconsistent with hidden size")
        if self.w_out.shape[0] != h or self.b_out.shape != (self.w_out.shape[1],):
            raise InvariantError("output head shapes inconsistent")

    @property
    def feature_dim(self) -> int:
        return self.w_cell.shape[0] - self.hidden_size

    @property
    def num_types(self) -> int:
        return self.w_out.shape[1]

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            cell=self.cell,
            w_cell=self.w_cell.copy(),
            b_cell=self.b_cell.copy(),
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
            hidden_size=self.hidden_size,
        )

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(
            cell=self.cell,
            w_cell=np.zeros_like(self.w_cell),
            b_cell=np.zeros_like(self.b_cell),
            w_out=np.zeros_like(self.w_out),
            b_out=np.zeros_like(self.b_out),
            hidden_size=self.hidden_size,
        )

    def add_scaled(self, other: "PolicyParams", scale: float) -> None:
        self.w_cell += scale * other.w_cell
        self.b_cell += scale * other.b_cell
        self.w_out += scale * other.w_out
        self.b_out += scale * other.b_out

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(a))
            for a in (self.w_cell, self.b_cell, self.w_out, self.b_out)
        )

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.w_cell.ravel(), self.b_cell.ravel(), self.w_out.ravel(), self.b_out.ravel()]
        )

    def with_flat(self, values: np.ndarray) -> "PolicyParams":
        out = self.copy()
        offset = 0
        for array in (out.w_cell, out.b_cell, out.w_out, out.b_out):
            n = array.size
            array[...] = values[offset : offset + n].reshape(array.shape)
            offset += n
        return out


def init_params(
    cell: str,
    feature_dim: int,
    num_types: int,
    hidden_size: int,
    init_scale: float,
    rng: np.random.Generator,
) -> PolicyParams:
    """Uniform(-init_scale, init_scale) initialization of every weight."""
    gates = 4 if cell == CELL_LSTM else 1
    u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
    return PolicyParams(
        cell=cell,
        w_cell=u(feature_dim + hidden_size, gates * hidden_size),
        b_cell=u(gates * hidden_size),
        w_out=u(hidden_size, num_types),
        b_out=u(num_types),
        hidden_size=hidden_size,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


def policy_forward(
    params: PolicyParams, features: np.ndarray, temperature: float = 1.0
):
    """Run the recurrence over all layers.

    Returns ``(probs, cache)`` where ``probs`` is (L, T) with each row a
    softmax over resource types (temperature-scaled), and ``cache`` holds
    the intermediate activations needed for backpropagation.
    """
    num_layers, feature_dim = features.shape
    if feature_dim != params.feature_dim:
        raise InvariantError(
            f"features have dimension {feature_dim}, parameters expect "
            f"{params.feature_dim}"
        )
    if temperature <= 0:
        raise InvariantError("temperature must be > 0 for a forward pass")
    h = np.zeros(params.hidden_size)
    c = np.zeros(params.hidden_size)
    hs = params.hidden_size
    cache = {"xh": [], "h": [], "probs": [], "temperature": temperature}
    if params.cell == CELL_LSTM:
        cache.update({"i": [], "f": [], "o": [], "g": [], "c": [], "c_prev": [], "tc": []})
    probs = np.empty((num_layers, params.num_types))
    for t in range(num_layers):
        xh = np.concatenate([features[t], h])
        z = xh @ params.w_cell + params.b_cell
        if params.cell == CELL_LSTM:
            gi = _sigmoid(z[:hs])
            gf = _sigmoid(z[hs : 2 * hs])
            go = _sigmoid(z[2 * hs : 3 * hs])
            gg = np.tanh(z[3 * hs :])
            c_prev = c
            c = gf * c_prev + gi * gg
            tc = np.tanh(c)
            h = go * tc
            cache["i"].append(gi)
            cache["f"].append(gf)
            cache["o"].append(go)
            cache["g"].append(gg)
            cache["c"].append(c)
            cache["c_prev"].append(c_prev)
            cache["tc"].append(tc)
        else:
            h = np.tanh(z)
        logits = h @ params.w_out + params.b_out
        if not np.all(np.isfinite(logits)):
            raise NumericError(f"non-finite activation at layer {t}")
        p = _softmax(logits / temperature)
        probs[t] = p
        cache["xh"].append(xh)
        cache["h"].append(h)
        cache["probs"].append(p)
    return probs, cache


def policy_backward(
    params: PolicyParams, cache: dict, dlogits: np.ndarray
) -> PolicyParams:
    """Backpropagate a per-step logit gradient through the recurrence.

    ``dlogits`` is (L, T): the gradient of the scalar objective with respect
    to each step's raw logits. Returns parameter gradients in a container of
    the same shape as ``params``.
    """
    grads = params.zeros_like()
    hs = params.hidden_size
    feature_dim = params.feature_dim
    num_layers = dlogits.shape[0]
    dh_next = np.zeros(hs)
    dc_next = np.zeros(hs)
    for t in reversed(range(num_layers)):
        h = cache["h"][t]
        xh = cache["xh"][t]
        dl = dlogits[t]
        grads.w_out += np.outer(h, dl)
        grads.b_out += dl
        dh = params.w_out @ dl + dh_next
        if params.cell == CELL_LSTM:
            gi, gf, go, gg = (cache[k][t] for k in ("i", "f", "o", "g"))
            tc = cache["tc"][t]
            c_prev = cache["c_prev"][t]
            do = dh * tc
            dc = dh * go * (1.0 - tc * tc) + dc_next
            di = dc * gg
            dg = dc * gi
            df = dc * c_prev
            dc_next = dc * gf
            dz = np.concatenate(
                [
                    di * gi * (1.0 - gi),
                    df * gf * (1.0 - gf),
                    do * go * (1.0 - go),
                    dg * (1.0 - gg * gg),
                ]
            )
        else:
            dz = dh * (1.0 - h * h)
        grads.w_cell += np.outer(xh, dz)
        grads.b_cell += dz
        dh_next = (params.w_cell @ dz)[feature_dim:]
    return grads


def sample_actions(
    probs: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one action per row of ``probs``; returns (actions, log_probs)."""
    num_layers, num_types = probs.shape
    actions = np.empty(num_layers, dtype=int)
    log_probs = np.empty(num_layers)
    for t in range(num_layers):
        a = int(rng.choice(num_types, p=probs[t]))
        actions[t] = a
        log_probs[t] = np.log(max(probs[t][a], 1e-300))
    return actions, log_probs


def entropy_of(probs: np.ndarray) -> float:
    """Mean per-step entropy of the action distributions (diagnostic)."""
    safe = np.clip(probs, 1e-300, 1.0)
    return float(-(safe * np.log(safe)).sum(axis=1).mean())


def sample_plan(
    params: PolicyParams,
    features: np.ndarray,
    rng: np.random.Generator,
    temperature: float = 1.0,
):
    """Sample one plan from the policy; temperature 0 degenerates to greedy.

    Returns ``(plan, log_probs, entropy)``.
    """
    if temperature <= 0:
        plan = greedy_plan(params, features)
        return plan, np.zeros(len(plan)), 0.0
    probs, _ = policy_forward(params, features, temperature)
    actions, log_probs = sample_actions(probs, rng)
    return SchedulingPlan(tuple(actions)), log_probs, entropy_of(probs)


def greedy_plan(params: PolicyParams, features: np.ndarray) -> SchedulingPlan:
    """Per-layer argmax plan (ties go to the lowest type id)."""
    probs, _ = policy_forward(params, features, temperature=1.0)
    return SchedulingPlan(tuple(int(np.argmax(row)) for row in probs))
