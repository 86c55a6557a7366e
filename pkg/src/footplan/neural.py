"""Minimal feed-forward network machinery for the planner's actor and critics.

Two-hidden-layer perceptrons with LeakyReLU hidden units and a Tanh or identity
head, exact reverse-mode gradients, and Adam. Weight matrices are stored
(out, in); forward/backward accept a single vector or a (batch, dim) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CallCounter:
    """Cheap counter used to assert how many network evaluations an operation
    performs (inference-cost properties in the tests)."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def bump(self):
        self.count += 1

    def reset(self):
        self.count = 0


forward_calls = CallCounter()


@dataclass
class MlpParams:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i]: (layer_dims[i+1], layer_dims[i])
    biases: list[np.ndarray]
    hidden_slope: float = 0.01
    output_activation: str = "tanh"  # "tanh" or "identity"


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class MlpCache:
    acts: list[np.ndarray]  # activations a_0 (input) .. a_L (output), 2-D
    pres: list[np.ndarray]  # pre-activations z_1 .. z_L, 2-D
    single: bool


def mlp_init(
    layer_dims: tuple[int, ...] | list[int],
    seed: int,
    *,
    hidden_slope: float = 0.01,
    output_activation: str = "tanh",
    dtype=np.float64,
) -> MlpParams:
    """Fan-in uniform weights in [-1/sqrt(n_in), 1/sqrt(n_in)], zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"need >= 2 positive layer dims, got {dims}")
    if output_activation not in ("tanh", "identity"):
        raise ValueError(f"unknown output activation {output_activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, (n_out, n_in)).astype(dtype))
        biases.append(np.zeros(n_out, dtype=dtype))
    return MlpParams(dims, weights, biases, hidden_slope, output_activation)


def mlp_forward(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Affine + activation chain; the cache feeds mlp_backward."""
    forward_calls.bump()
    x = np.asarray(x)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != p.layer_dims[0]:
        raise ValueError(f"input dim {a.shape[1]} != expected {p.layer_dims[0]}")
    acts = [a]
    pres = []
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w.T + b
        pres.append(z)
        if i < last:
            a = np.where(z > 0, z, p.hidden_slope * z)
        elif p.output_activation == "tanh":
            a = np.tanh(z)
        else:
            a = z
        acts.append(a)
    out = acts[-1][0] if single else acts[-1]
    return out, MlpCache(acts, pres, single)


def mlp_backward(
    p: MlpParams,
    cache: MlpCache,
    grad_output: np.ndarray,
    *,
    need_param_grads: bool = True,
) -> tuple[MlpGrads, np.ndarray]:
    """Gradients of sum(output * grad_output) w.r.t. parameters and input.

    grad_output must match the forward output shape. The input gradient is what
    lets the policy update chain through the critic.
    """
    g = np.asarray(grad_output)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.acts[-1].shape:
        raise ValueError(f"grad_output shape {g.shape} != output shape {cache.acts[-1].shape}")
    n_layers = len(p.weights)
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers

    if p.output_activation == "tanh":
        out = cache.acts[-1]
        dz = g * (1.0 - out * out)
    else:
        dz = g
    for i in range(n_layers - 1, -1, -1):
        if need_param_grads:
            d_weights[i] = dz.T @ cache.acts[i]
            d_biases[i] = dz.sum(axis=0)
        da = dz @ p.weights[i]
        if i > 0:
            z_prev = cache.pres[i - 1]
            dz = np.where(z_prev > 0, da, p.hidden_slope * da)
    grad_input = da[0] if cache.single else da
    grads = MlpGrads(d_weights, d_biases) if need_param_grads else MlpGrads([], [])
    return grads, grad_input


@dataclass
class OptimizerState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(p: MlpParams) -> OptimizerState:
    return OptimizerState(
        m_w=[np.zeros_like(w) for w in p.weights],
        v_w=[np.zeros_like(w) for w in p.weights],
        m_b=[np.zeros_like(b) for b in p.biases],
        v_b=[np.zeros_like(b) for b in p.biases],
    )


def adam_step(opt: OptimizerState, p: MlpParams, grads: MlpGrads, lr: float) -> None:
    """One bias-corrected Adam descent step, updating p and opt in place."""
    opt.step += 1
    b1, b2, eps = opt.beta1, opt.beta2, opt.epsilon
    c1 = 1.0 - b1**opt.step
    c2 = 1.0 - b2**opt.step
    pairs = [
        (p.weights, grads.weights, opt.m_w, opt.v_w),
        (p.biases, grads.biases, opt.m_b, opt.v_b),
    ]
    for params, gs, ms, vs in pairs:
        for arr, g, m, v in zip(params, gs, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            arr -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clone_params(p: MlpParams) -> MlpParams:
    return MlpParams(
        p.layer_dims,
        [w.copy() for w in p.weights],
        [b.copy() for b in p.biases],
        p.hidden_slope,
        p.output_activation,
    )


def grad_check(
    p: MlpParams,
    x: np.ndarray,
    seed: int,
    *,
    n_samples: int = 200,
    h: float = 1e-5,
    backward=mlp_backward,
) -> float:
    """Worst relative disagreement between analytic and central-difference
    gradients over a random parameter subsample.

    The relative error floor is scaled to the largest analytic gradient so that
    near-zero coordinates (where the finite difference is pure roundoff) do not
    dominate; a genuinely wrong backward still scores near 1.
    """
    rng = np.random.default_rng(seed)
    out, cache = mlp_forward(p, x)
    g = rng.standard_normal(out.shape)
    grads, _ = backward(p, cache, g)

    coords = []
    for i in range(len(p.weights)):
        for flat in range(p.weights[i].size):
            coords.append(("w", i, flat))
        for flat in range(p.biases[i].size):
            coords.append(("b", i, flat))
    n = min(max(n_samples, 200), len(coords))
    picked = rng.choice(len(coords), size=n, replace=False)

    g_scale = max(
        max((float(np.abs(gw).max()) for gw in grads.weights), default=0.0),
        max((float(np.abs(gb).max()) for gb in grads.biases), default=0.0),
    )
    floor = max(1e-8, 1e-4 * g_scale)

    def loss() -> float:
        y, _ = mlp_forward(p, x)
        return float(np.sum(y * g))

    worst = 0.0
    for idx in picked:
        kind, layer, flat = coords[idx]
        arr = p.weights[layer] if kind == "w" else p.biases[layer]
        ana_arr = grads.weights[layer] if kind == "w" else grads.biases[layer]
        orig = arr.flat[flat]
        arr.flat[flat] = orig + h
        lp = loss()
        arr.flat[flat] = orig - h
        lm = loss()
        arr.flat[flat] = orig
        num = (lp - lm) / (2.0 * h)
        ana = float(ana_arr.flat[flat])
        rel = abs(num - ana) / max(abs(num), abs(ana), floor)
        worst = max(worst, rel)
    return worst


# --- FSN1 text model format ----------------------------------------------
#
# One or more network sections, then trailing metadata:
#   FSN1 <role> <n_layers>
#   dims <in> <out>
#   <out rows of `in` weight values, row-major>
#   <one row of `out` bias values>
#   ... (per layer)
#   gamma <v>
#   fdist <v>
#   bounds <dx_fwd> <dx_bwd> <dy> <dtheta>
#
# Full-precision decimal text: values round-trip exactly. The role determines
# the output head (actor -> tanh, critics -> identity); hidden units are
# LeakyReLU with the default slope.

_METADATA_ARITY = {"gamma": 1, "fdist": 1, "bounds": 4}


class ModelFormatError(ValueError):
    pass


def format_fsn1(networks: dict[str, MlpParams], metadata: dict[str, tuple[float, ...]]) -> str:
    lines: list[str] = []
    for role, p in networks.items():
        lines.append(f"FSN1 {role} {len(p.weights)}")
        for w, b in zip(p.weights, p.biases):
            n_out, n_in = w.shape
            lines.append(f"dims {n_in} {n_out}")
            for row in w:
                lines.append(" ".join(repr(float(v)) for v in row))
            lines.append(" ".join(repr(float(v)) for v in b))
    for key, arity in _METADATA_ARITY.items():
        if key not in metadata:
            raise ValueError(f"missing metadata field {key!r}")
        values = metadata[key]
        if len(values) != arity:
            raise ValueError(f"metadata {key!r} needs {arity} values, got {len(values)}")
        lines.append(f"{key} " + " ".join(repr(float(v)) for v in values))
    lines.append("")
    return "\n".join(lines)


class _Tokens:
    """Whitespace token stream that remembers line numbers for diagnostics."""

    def __init__(self, text: str):
        self.items = [
            (tok, lineno)
            for lineno, line in enumerate(text.splitlines(), start=1)
            for tok in line.split()
        ]
        self.pos = 0

    def peek(self) -> tuple[str, int] | None:
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self, what: str) -> tuple[str, int]:
        if self.pos >= len(self.items):
            last = self.items[-1][1] if self.items else 0
            raise ModelFormatError(f"line {last}: unexpected end of file, expected {what}")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def next_float(self, what: str) -> float:
        tok, lineno = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise ModelFormatError(f"line {lineno}: expected {what}, got {tok!r}") from None

    def next_int(self, what: str) -> int:
        tok, lineno = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise ModelFormatError(f"line {lineno}: expected {what}, got {tok!r}") from None


def parse_fsn1(text: str) -> tuple[dict[str, MlpParams], dict[str, tuple[float, ...]]]:
    toks = _Tokens(text)
    networks: dict[str, MlpParams] = {}
    metadata: dict[str, tuple[float, ...]] = {}
    while True:
        head = toks.peek()
        if head is None:
            break
        tok, lineno = head
        if tok == "FSN1":
            toks.next("FSN1")
            role, _ = toks.next("role name")
            n_layers = toks.next_int("layer count")
            if n_layers < 1:
                raise ModelFormatError(f"line {lineno}: layer count must be >= 1")
            if role in networks:
                raise ModelFormatError(f"line {lineno}: duplicate section {role!r}")
            weights, biases, dims = [], [], []
            for _ in range(n_layers):
                kw, kw_line = toks.next("dims keyword")
                if kw != "dims":
                    raise ModelFormatError(f"line {kw_line}: expected 'dims', got {kw!r}")
                n_in = toks.next_int("input dim")
                n_out = toks.next_int("output dim")
                if n_in <= 0 or n_out <= 0:
                    raise ModelFormatError(f"line {kw_line}: dims must be positive")
                if dims and dims[-1] != n_in:
                    raise ModelFormatError(
                        f"line {kw_line}: layer input {n_in} does not chain from {dims[-1]}"
                    )
                if not dims:
                    dims.append(n_in)
                dims.append(n_out)
                w = np.empty((n_out, n_in))
                for r in range(n_out):
                    for c in range(n_in):
                        w[r, c] = toks.next_float("weight value")
                b = np.array([toks.next_float("bias value") for _ in range(n_out)])
                weights.append(w)
                biases.append(b)
            networks[role] = MlpParams(
                tuple(dims),
                weights,
                biases,
                output_activation="tanh" if role == "actor" else "identity",
            )
        elif tok in _METADATA_ARITY:
            toks.next(tok)
            arity = _METADATA_ARITY[tok]
            metadata[tok] = tuple(toks.next_float(f"{tok} value") for _ in range(arity))
        else:
            raise ModelFormatError(f"line {lineno}: unexpected token {tok!r}")
    for key in _METADATA_ARITY:
        if key not in metadata:
            raise ModelFormatError(f"missing metadata line {key!r}")
    return networks, metadata
