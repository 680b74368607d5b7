"""DRGCN forward pass and the residual baselines it is measured against.

The model family shares one scaffold: an input MLP produces the initial
representation, L propagation layers mix neighborhood information with it,
then a linear map plus an output MLP yield class scores. The variants differ
only in the per-layer mixing rule:

  drgcn                   per-node residual weights from the dynamic block,
                          evolved across layers by a recurrent cell
  dense_residual          fixed scalar blend with the previous layer
  fixed_initial_residual  fixed scalar blend with the initial representation
  vanilla_deep            plain per-layer graph convolutions, no residual

Dynamic-block and cell weights are shared across layers by default, so the
parameter count does not grow with depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .graph import SparseAdj, spmm

__all__ = ["ModelConfig", "ModelParams", "ConfigError", "init_params",
           "initial_transform", "dynamic_block", "evolving_step", "sgu",
           "forward", "forward_baseline", "ForwardResult", "logit",
           "COMBINE_KINDS", "VARIANTS", "CELLS", "GROUPS"]

COMBINE_KINDS = ("hadamard", "sub", "concat")
VARIANTS = ("drgcn", "vanilla_deep", "dense_residual", "fixed_initial_residual")
CELLS = ("vanilla_recurrent", "gated_recurrent")
GROUPS = ("conv", "fc", "evolving")


class ConfigError(ValueError):
    pass


def logit(a: float) -> float:
    if not 0.0 < a < 1.0:
        raise ValueError(f"logit needs a value in (0,1), got {a}")
    return math.log(a / (1.0 - a))


@dataclass
class ModelConfig:
    classes: int
    layers: int = 2
    hidden: int = 64
    combine: str = "hadamard"
    cell: str = "vanilla_recurrent"
    variant: str = "drgcn"
    fixed_alpha: float = 0.1          # baselines only
    input_dropout: float = 0.0
    dynamic_shared: bool = True       # per-layer dynamic MLPs when False
    bypass_evolving: bool = False     # alpha = sigmoid(z), no cell
    constant_alpha: float | None = None  # inject alpha_raw = logit(value)

    def validate(self) -> None:
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")
        if self.combine not in COMBINE_KINDS:
            raise ConfigError(f"unknown combine {self.combine!r}")
        if self.cell not in CELLS:
            raise ConfigError(f"unknown cell {self.cell!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.fixed_alpha <= 1.0:
            raise ConfigError("fixed_alpha must be in [0,1]")
        if not 0.0 <= self.input_dropout < 1.0:
            raise ConfigError("input_dropout must be in [0,1)")
        if self.constant_alpha is not None and not 0.0 < self.constant_alpha < 1.0:
            raise ConfigError("constant_alpha must be in (0,1)")


class ModelParams:
    """Named trainable tensors, each in exactly one regularization group."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, tensor: Tensor, group: str) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter {name!r}")
        if group not in GROUPS:
            raise ConfigError(f"unknown group {group!r}")
        tensor.requires_grad = True
        self._tensors[name] = tensor
        self._groups[name] = group
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def group_of(self, name: str) -> str:
        return self._groups[name]

    def num_values(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for name, t in self._tensors.items():
            out.add(name, Tensor(t.data.copy(), requires_grad=True),
                    self._groups[name])
        out.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return out

    def load(self, other: "ModelParams") -> None:
        """Copy values from a params object with the same structure."""
        if other.names() != self.names():
            raise ConfigError("parameter structure mismatch")
        for name, t in self._tensors.items():
            np.copyto(t.data, other[name].data)
        for k in self.buffers:
            np.copyto(self.buffers[k], other.buffers[k])


def _dynamic_input_width(cfg: ModelConfig) -> int:
    return 2 * cfg.hidden if cfg.combine == "concat" else cfg.hidden


def _dynamic_prefixes(cfg: ModelConfig) -> list[str]:
    if cfg.dynamic_shared:
        return ["dynamic"]
    return [f"dynamic.{layer}" for layer in range(cfg.layers)]


def init_params(cfg: ModelConfig, in_dim: int, n_nodes: int, rng: Rng) -> ModelParams:
    """Build all weights for a variant; every tensor gets its own rng stream
    keyed by name, so variants sharing a name share its initial values."""
    cfg.validate()
    d_h, c = cfg.hidden, cfg.classes
    params = ModelParams()

    def glorot(name, rows, cols, group):
        params.add(name, ad.glorot_uniform(rows, cols, rng.split(f"param/{name}")),
                   group)

    def zeros(name, rows, cols, group):
        params.add(name, ad.zeros(rows, cols), group)

    if cfg.variant == "vanilla_deep":
        dims = [in_dim] + [d_h] * (cfg.layers - 1) + [c]
        for layer in range(cfg.layers):
            glorot(f"conv.{layer}.w", dims[layer], dims[layer + 1], "conv")
        return params

    glorot("transform.w1", in_dim, d_h, "fc")
    zeros("transform.b1", 1, d_h, "fc")
    glorot("transform.w2", d_h, d_h, "fc")
    zeros("transform.b2", 1, d_h, "fc")

    if cfg.variant == "drgcn":
        width = _dynamic_input_width(cfg)
        for prefix in _dynamic_prefixes(cfg):
            glorot(f"{prefix}.w1", width, d_h, "fc")
            zeros(f"{prefix}.b1", 1, d_h, "fc")
            glorot(f"{prefix}.w2", d_h, 1, "fc")
            zeros(f"{prefix}.b2", 1, 1, "fc")
        k = 1.0 / d_h
        if not cfg.bypass_evolving:
            names = (["wz", "wh"] if cfg.cell == "vanilla_recurrent"
                     else ["wz_r", "wh_r", "wz_u", "wh_u", "wz_c", "wh_c"])
            for name in names:
                params.add(f"evolving.{name}",
                           ad.uniform_pm_sqrt_k(k, 1, 1,
                                                rng.split(f"param/evolving.{name}")),
                           "evolving")
            bias_names = (["b"] if cfg.cell == "vanilla_recurrent"
                          else ["b_r", "b_u", "b_c"])
            for name in bias_names:
                zeros(f"evolving.{name}", 1, 1, "evolving")
            params.buffers["evolving.h0"] = Rng(
                rng.split("buffer/evolving.h0").seed).uniform(
                    -math.sqrt(k), math.sqrt(k), (n_nodes, 1))

    glorot("conv.w", d_h, d_h, "conv")
    glorot("head.w1", d_h, d_h, "fc")
    zeros("head.b1", 1, d_h, "fc")
    glorot("head.w2", d_h, c, "fc")
    zeros("head.b2", 1, c, "fc")
    return params


# ---------------------------------------------------------------------------
# building blocks

def _mlp(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    h = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.w1"]),
                       params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(h, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def initial_transform(x: Tensor, params: ModelParams) -> Tensor:
    """Input features to the initial hidden representation."""
    return _mlp(x, params, "transform")


def dynamic_block(h0n: Tensor, hln: Tensor, combine: str, params: ModelParams,
                  prefix: str = "dynamic") -> Tensor:
    """Per-node residual score from the combined normalized representations.

    Callers pass representations that are already L2-row-normalized.
    """
    if combine == "hadamard":
        phi = ad.hadamard(h0n, hln)
    elif combine == "sub":
        phi = ad.sub(h0n, hln)
    elif combine == "concat":
        phi = ad.concat_cols(h0n, hln)
    else:
        raise ConfigError(f"unknown combine {combine!r}")
    return _mlp(phi, params, prefix)


def evolving_step(z: Tensor, h_prev: Tensor, params: ModelParams,
                  cell: str = "vanilla_recurrent") -> tuple[Tensor, Tensor]:
    """One recurrent step across depth; returns (alpha_raw, new state).

    The cell output is its hidden state; scalar weights broadcast per node.
    """
    if z.cols != 1 or h_prev.cols != 1 or z.rows != h_prev.rows:
        raise ad.ShapeError("evolving_step expects matching Nx1 inputs")
    if cell == "vanilla_recurrent":
        pre = ad.add(ad.add(ad.matmul(z, params["evolving.wz"]),
                            ad.matmul(h_prev, params["evolving.wh"])),
                     params["evolving.b"])
        h = ad.tanh(pre)
        return h, h
    if cell == "gated_recurrent":
        def gate(tag, activate):
            pre = ad.add(ad.add(ad.matmul(z, params[f"evolving.wz_{tag}"]),
                                ad.matmul(h_prev, params[f"evolving.wh_{tag}"])),
                         params[f"evolving.b_{tag}"])
            return activate(pre)
        r = gate("r", ad.sigmoid)
        u = gate("u", ad.sigmoid)
        cand = ad.tanh(ad.add(ad.add(ad.matmul(z, params["evolving.wz_c"]),
                                     ad.hadamard(r, ad.matmul(h_prev,
                                                              params["evolving.wh_c"]))),
                              params["evolving.b_c"]))
        ones = Tensor(np.ones((z.rows, 1)))
        h = ad.add(ad.hadamard(ad.sub(ones, u), cand), ad.hadamard(u, h_prev))
        return h, h
    raise ConfigError(f"unknown cell {cell!r}")


def _sgu_parts(h0: Tensor, ph: Tensor, alpha_raw: Tensor):
    if alpha_raw.cols != 1 or alpha_raw.rows != h0.rows or h0.shape != ph.shape:
        raise ad.ShapeError("sgu shapes are inconsistent")
    alpha = ad.sigmoid(alpha_raw)
    ones = Tensor(np.ones((alpha.rows, 1)))
    pre = ad.add(ad.hadamard(ad.sub(ones, alpha), ph), ad.hadamard(alpha, h0))
    return ad.relu(pre), alpha, pre


def sgu(h0: Tensor, ph: Tensor, alpha_raw: Tensor) -> Tensor:
    """Soft gate: ReLU((1 - sigmoid(a)) * propagated + sigmoid(a) * initial)."""
    out, _, _ = _sgu_parts(h0, ph, alpha_raw)
    return out


class ForwardResult(NamedTuple):
    logits: Tensor
    yhat: Tensor
    alphas: list  # one Nx1 post-sigmoid Tensor per layer (drgcn only)


def _head(h: Tensor, params: ModelParams) -> Tensor:
    return _mlp(ad.matmul(h, params["conv.w"]), params, "head")


def forward(adj: SparseAdj, x, cfg: ModelConfig, params: ModelParams,
            mode: str = "train", rng: Rng | None = None,
            capture: dict | None = None) -> ForwardResult:
    """Full forward pass for any variant; ``capture`` (a dict) collects the
    per-layer internals 'hidden', 'ph', 'pre' for diagnostics."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be train or eval, got {mode!r}")
    if cfg.variant != "drgcn":
        return forward_baseline(adj, x, cfg, params, mode=mode, rng=rng,
                                capture=capture)

    x = ad.as_tensor(x)
    if cfg.input_dropout > 0.0 and mode == "train":
        if rng is None:
            raise ConfigError("training with dropout needs an rng")
        x = ad.dropout(x, cfg.input_dropout, rng.split("input_dropout"))

    h0 = initial_transform(x, params)
    h0n = ad.l2_normalize_rows(h0)
    state = Tensor(params.buffers["evolving.h0"]) if "evolving.h0" in params.buffers else None
    const_raw = None
    if cfg.constant_alpha is not None:
        const_raw = Tensor(np.full((x.rows, 1), logit(cfg.constant_alpha)))

    if capture is not None:
        capture.update({"hidden": [h0.data], "ph": [], "pre": []})

    h = h0
    alphas = []
    for layer in range(cfg.layers):
        ph = spmm(adj, h)
        if const_raw is not None:
            alpha_raw = const_raw
        else:
            prefix = "dynamic" if cfg.dynamic_shared else f"dynamic.{layer}"
            z = dynamic_block(h0n, ad.l2_normalize_rows(h), cfg.combine,
                              params, prefix)
            if cfg.bypass_evolving:
                alpha_raw = z
            else:
                alpha_raw, state = evolving_step(z, state, params, cfg.cell)
        h, alpha, pre = _sgu_parts(h0, ph, alpha_raw)
        alphas.append(alpha)
        if capture is not None:
            capture["hidden"].append(h.data)
            capture["ph"].append(ph.data)
            capture["pre"].append(pre.data)

    logits = _head(h, params)
    return ForwardResult(logits, ad.rows_softmax(logits), alphas)


def forward_baseline(adj: SparseAdj, x, cfg: ModelConfig, params: ModelParams,
                     mode: str = "train", rng: Rng | None = None,
                     capture: dict | None = None) -> ForwardResult:
    """The three reference layer rules behind the same scaffold as drgcn."""
    if cfg.variant == "drgcn":
        raise ConfigError("forward_baseline expects a baseline variant")
    x = ad.as_tensor(x)
    if cfg.input_dropout > 0.0 and mode == "train":
        if rng is None:
            raise ConfigError("training with dropout needs an rng")
        x = ad.dropout(x, cfg.input_dropout, rng.split("input_dropout"))

    if cfg.variant == "vanilla_deep":
        h = x
        if capture is not None:
            capture.update({"hidden": [h.data], "ph": [], "pre": []})
        for layer in range(cfg.layers):
            ph = spmm(adj, h)
            pre = ad.matmul(ph, params[f"conv.{layer}.w"])
            h = ad.relu(pre) if layer < cfg.layers - 1 else pre
            if capture is not None:
                capture["hidden"].append(h.data)
                capture["ph"].append(ph.data)
                capture["pre"].append(pre.data)
        return ForwardResult(h, ad.rows_softmax(h), [])

    a = cfg.fixed_alpha
    h0 = initial_transform(x, params)
    if capture is not None:
        capture.update({"hidden": [h0.data], "ph": [], "pre": []})
    h = h0
    for _ in range(cfg.layers):
        ph = spmm(adj, h)
        anchor = h if cfg.variant == "dense_residual" else h0
        pre = ad.add(ad.scale(ph, 1.0 - a), ad.scale(anchor, a))
        h = ad.relu(pre)
        if capture is not None:
            capture["hidden"].append(h.data)
            capture["ph"].append(ph.data)
            capture["pre"].append(pre.data)
    logits = _head(h, params)
    return ForwardResult(logits, ad.rows_softmax(logits), [])
