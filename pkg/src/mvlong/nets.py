"""GRU and dense networks with hand-written backpropagation.

Parameters live in an ordered ``name -> array`` mapping so that optimizers and
checkpoints can treat every network the same way.  Samples are columns of the
network output (``o x N``), matching the layout the discriminant step expects.

GRU recursion per layer (sigmoid gates, tanh candidate)::

    u = sigmoid(W_ux x + W_uh h_prev + b_u)
    r = sigmoid(W_rx x + W_rh h_prev + b_r)
    hh = tanh(W_h x + W_u (r * h_prev) + b_h)
    h = (1 - u) * h_prev + u * hh
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

GRU_KEYS = ("W_ux", "W_uh", "W_rx", "W_rh", "W_h", "W_u", "b_u", "b_r", "b_h")


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class GruSpec:
    hidden_dim: int = 16
    n_layers: int = 1

    @property
    def output_dim(self) -> int:
        return self.hidden_dim


@dataclass(frozen=True)
class DenseSpec:
    layer_sizes: tuple[int, ...] = (200, 100, 20)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if not self.layer_sizes or min(self.layer_sizes) < 1:
            raise ValueError("layer_sizes must be non-empty positive ints")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


NetSpec = Union[GruSpec, DenseSpec]


@dataclass
class _Params:
    tensors: dict[str, np.ndarray]
    version: int = field(default=0)

    def arrays(self) -> dict[str, np.ndarray]:
        return self.tensors

    def zeros_like(self):
        return type(self)(**{**self._meta(), "tensors": {k: np.zeros_like(v) for k, v in self.tensors.items()}})

    def copy(self):
        return type(self)(**{**self._meta(), "tensors": {k: v.copy() for k, v in self.tensors.items()}})

    def step(self, grads: "_Params", lr: float) -> None:
        """In-place ``theta += lr * grad`` (gradient ascent when ``lr > 0``)."""
        for k, v in self.tensors.items():
            v += lr * grads.tensors[k]
        self.version += 1

    def _meta(self) -> dict:
        raise NotImplementedError


@dataclass
class GruParams(_Params):
    input_dim: int = 0
    hidden_dim: int = 0
    n_layers: int = 1

    def _meta(self):
        return {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim, "n_layers": self.n_layers}

    def layer(self, k: int) -> dict[str, np.ndarray]:
        return {key: self.tensors[f"l{k}.{key}"] for key in GRU_KEYS}

    @property
    def output_dim(self) -> int:
        return self.hidden_dim


@dataclass
class DenseParams(_Params):
    input_dim: int = 0
    layer_sizes: tuple[int, ...] = ()
    activation: str = "relu"

    def _meta(self):
        return {"input_dim": self.input_dim, "layer_sizes": tuple(self.layer_sizes), "activation": self.activation}

    def weight(self, k: int) -> np.ndarray:
        return self.tensors[f"W{k}"]

    def bias(self, k: int) -> np.ndarray:
        return self.tensors[f"b{k}"]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class NetOutput:
    values: np.ndarray  # (o, N)
    cache: dict


def _uniform(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


def init_params(spec: NetSpec, input_dim: int, rng) -> GruParams | DenseParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    tensors = {}
    if isinstance(spec, GruSpec):
        h = spec.hidden_dim
        for k in range(spec.n_layers):
            i = input_dim if k == 0 else h
            for name in ("W_ux", "W_uh", "W_rx", "W_rh", "W_h", "W_u"):
                fan = i if name.endswith("x") or name == "W_h" else h
                tensors[f"l{k}.{name}"] = _uniform(rng, (h, fan), fan)
            for name in ("b_u", "b_r", "b_h"):
                tensors[f"l{k}.{name}"] = np.zeros(h)
        return GruParams(tensors, input_dim=input_dim, hidden_dim=h, n_layers=spec.n_layers)
    if isinstance(spec, DenseSpec):
        sizes = (input_dim,) + spec.layer_sizes
        for k in range(len(spec.layer_sizes)):
            tensors[f"W{k}"] = _uniform(rng, (sizes[k + 1], sizes[k]), sizes[k])
            tensors[f"b{k}"] = np.zeros(sizes[k + 1])
        return DenseParams(tensors, input_dim=input_dim, layer_sizes=spec.layer_sizes, activation=spec.activation)
    raise TypeError(f"unknown network spec {spec!r}")


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# GRU


def gru_forward(params: GruParams, sequence: np.ndarray):
    """Run the stacked GRU from ``h(0) = 0``.

    ``sequence`` is ``input_dim x T`` for one subject or ``N x input_dim x T``
    for a batch.  Returns the top layer's final hidden state (``hidden`` or
    ``hidden x N``) and the cache for :func:`backward`.
    """
    x = np.asarray(sequence, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    n, i, t = x.shape
    if i != params.input_dim:
        raise ValueError(f"GRU expects input_dim {params.input_dim}, got {i}")
    if t < 1:
        raise ValueError("sequence needs at least one time step")
    seq = np.ascontiguousarray(x.transpose(2, 0, 1))  # (T, N, I)
    hdim = params.hidden_dim
    layers = []
    for k in range(params.n_layers):
        w = params.layer(k)
        hs = np.zeros((t + 1, n, hdim))
        us = np.empty((t, n, hdim))
        rs = np.empty((t, n, hdim))
        hhs = np.empty((t, n, hdim))
        # input contributions for all steps at once
        xu = seq @ w["W_ux"].T + w["b_u"]
        xr = seq @ w["W_rx"].T + w["b_r"]
        xh = seq @ w["W_h"].T + w["b_h"]
        for s in range(t):
            hp = hs[s]
            u = _sigmoid(xu[s] + hp @ w["W_uh"].T)
            r = _sigmoid(xr[s] + hp @ w["W_rh"].T)
            hh = np.tanh(xh[s] + (r * hp) @ w["W_u"].T)
            hs[s + 1] = (1.0 - u) * hp + u * hh
            us[s], rs[s], hhs[s] = u, r, hh
        _check_finite(hs, f"GRU layer {k} hidden states")
        layers.append({"x": seq, "h": hs, "u": us, "r": rs, "hh": hhs})
        seq = hs[1:]
    final = seq[-1].T  # (H, N)
    cache = {"kind": "gru", "layers": layers, "single": single, "params_id": id(params),
             "version": params.version}
    return (final[:, 0] if single else final), cache


def _gru_backward(params: GruParams, cache, grad_output):
    g = np.asarray(grad_output, dtype=float)
    if cache["single"] and g.ndim == 1:
        g = g[:, None]
    layers = cache["layers"]
    t, n, hdim = layers[-1]["u"].shape
    grads = params.zeros_like()
    dseq = np.zeros((t, n, hdim))
    dseq[-1] = g.T
    for k in reversed(range(params.n_layers)):
        w = params.layer(k)
        c = layers[k]
        x, hs, us, rs, hhs = c["x"], c["h"], c["u"], c["r"], c["hh"]
        da_u_all = np.empty((t, n, hdim))
        da_r_all = np.empty((t, n, hdim))
        da_h_all = np.empty((t, n, hdim))
        rh_all = rs * hs[:-1]
        dh_next = np.zeros((n, hdim))
        for s in reversed(range(t)):
            dh = dseq[s] + dh_next
            hp, u, r, hh = hs[s], us[s], rs[s], hhs[s]
            da_h = dh * u * (1.0 - hh * hh)
            da_u = dh * (hh - hp) * u * (1.0 - u)
            drh = da_h @ w["W_u"]
            da_r = drh * hp * r * (1.0 - r)
            dh_next = dh * (1.0 - u) + drh * r + da_u @ w["W_uh"] + da_r @ w["W_rh"]
            da_u_all[s], da_r_all[s], da_h_all[s] = da_u, da_r, da_h
        hprev = hs[:-1].reshape(t * n, hdim)
        xf = x.reshape(t * n, -1)
        fu = da_u_all.reshape(t * n, hdim)
        fr = da_r_all.reshape(t * n, hdim)
        fh = da_h_all.reshape(t * n, hdim)
        gk = {
            "W_ux": fu.T @ xf, "W_uh": fu.T @ hprev, "b_u": fu.sum(0),
            "W_rx": fr.T @ xf, "W_rh": fr.T @ hprev, "b_r": fr.sum(0),
            "W_h": fh.T @ xf, "W_u": fh.T @ rh_all.reshape(t * n, hdim), "b_h": fh.sum(0),
        }
        for key, val in gk.items():
            grads.tensors[f"l{k}.{key}"][...] = val
        dx = da_u_all @ w["W_ux"] + da_r_all @ w["W_rx"] + da_h_all @ w["W_h"]
        dseq = dx
    dinput = dseq.transpose(1, 2, 0)  # (N, I, T)
    return grads, (dinput[0] if cache["single"] else dinput)


# ---------------------------------------------------------------------------
# dense


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return (z > 0).astype(float) if name == "relu" else 1.0 - a * a


def dense_forward(params: DenseParams, inputs: np.ndarray) -> NetOutput:
    """Affine + activation per hidden layer, linear output; ``inputs`` is ``p x N``."""
    a = np.asarray(inputs, dtype=float)
    if a.ndim != 2 or a.shape[0] != params.input_dim:
        raise ValueError(f"dense net expects {params.input_dim} x N input, got {a.shape}")
    acts, pre = [a], []
    n_layers = len(params.layer_sizes)
    for k in range(n_layers):
        z = params.weight(k) @ a + params.bias(k)[:, None]
        a = z if k == n_layers - 1 else _act(params.activation, z)
        pre.append(z)
        acts.append(a)
    _check_finite(a, "dense output")
    cache = {"kind": "dense", "acts": acts, "pre": pre, "params_id": id(params), "version": params.version}
    return NetOutput(a, cache)


def _dense_backward(params: DenseParams, cache, grad_output):
    g = np.asarray(grad_output, dtype=float)
    acts, pre = cache["acts"], cache["pre"]
    grads = params.zeros_like()
    n_layers = len(params.layer_sizes)
    dz = g
    for k in reversed(range(n_layers)):
        if k != n_layers - 1:
            dz = dz * _act_grad(params.activation, pre[k], acts[k + 1])
        grads.tensors[f"W{k}"][...] = dz @ acts[k].T
        grads.tensors[f"b{k}"][...] = dz.sum(axis=1)
        dz = params.weight(k).T @ dz
    return grads, dz


def forward(params, inputs) -> NetOutput:
    """Uniform entry point: GRUs take ``N x I x T``, dense nets ``p x N``."""
    if isinstance(params, GruParams):
        final, cache = gru_forward(params, inputs)
        return NetOutput(final if final.ndim == 2 else final[:, None], cache)
    return dense_forward(params, inputs)


def backward(params, cache, grad_output):
    """Exact gradients of ``<grad_output, H>`` w.r.t. parameters and inputs."""
    if cache.get("params_id") != id(params) or cache.get("version") != params.version:
        raise ValueError("stale cache: parameters changed since the forward pass")
    if cache["kind"] == "gru":
        return _gru_backward(params, cache, grad_output)
    return _dense_backward(params, cache, grad_output)


# ---------------------------------------------------------------------------
# checkpoints: little-endian float64 blob + JSON manifest


def save_arrays(arrays: dict[str, np.ndarray], path, meta: dict | None = None) -> tuple[Path, Path]:
    path = Path(path)
    blob, manifest = path.with_suffix(".bin"), path.with_suffix(".json")
    entries, offset = [], 0
    with open(blob, "wb") as fh:
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype="<f8")
            fh.write(np.ascontiguousarray(arr).tobytes())
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest.write_text(json.dumps({"meta": meta or {}, "tensors": entries}, indent=2))
    return blob, manifest


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    info = json.loads(path.with_suffix(".json").read_text())
    flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    arrays = {}
    for e in info["tensors"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        arrays[e["name"]] = flat[e["offset"]:e["offset"] + size].reshape(e["shape"]).astype(float)
    return arrays, info["meta"]


def save_params(params, path):
    kind = "gru" if isinstance(params, GruParams) else "dense"
    meta = {"kind": kind, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in params._meta().items()}}
    return save_arrays(params.tensors, path, meta)


def load_params(path):
    arrays, meta = load_arrays(path)
    kind = meta.pop("kind")
    if kind == "gru":
        return GruParams(arrays, **meta)
    meta["layer_sizes"] = tuple(meta["layer_sizes"])
    return DenseParams(arrays, **meta)


def spec_from_dict(d: dict) -> NetSpec:
    d = dict(d)
    kind = d.pop("type", "dense")
    if kind == "gru":
        return GruSpec(**d)
    return DenseSpec(**d)

