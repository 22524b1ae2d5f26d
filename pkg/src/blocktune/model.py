"""Block-structured residual classifier with named parameter groups.

The network is a stem affine (input -> hidden), a chain of residual
blocks (each ``layers_per_block`` affine+ReLU layers wrapped in an
identity skip, so a block computes ``h + g(h)``), and a final affine
classifier:

    logits = fc(blockN(... block1(stem(x))))

Every parameter belongs to exactly one named block ("stem", "block1",
..., "fc").  Training touches exactly the blocks named in a selection,
and the backward pass propagates activation gradients only as far down
as the front-most selected block.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError, UsageError
from .nn import (linear_backward, linear_backward_input, linear_forward,
                 relu, relu_backward, softmax_xent)

CHECKPOINT_FORMAT = "blocktune-checkpoint/1"

BlockSelection = frozenset  # of block id strings


@dataclass(frozen=True)
class ArchSpec:
    """Shape of the classifier; all counts >= 1, n_classes >= 2."""

    input_dim: int
    n_classes: int
    hidden_dim: int = 64
    n_res_blocks: int = 3
    layers_per_block: int = 2

    def __post_init__(self):
        for name in ("input_dim", "n_classes", "hidden_dim", "n_res_blocks",
                     "layers_per_block"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_classes < 2:
            raise InputError(f"n_classes must be >= 2, got {self.n_classes}")


@dataclass
class Affine:
    W: np.ndarray  # (m, n)
    b: np.ndarray  # (n,)


@dataclass
class BlockNet:
    spec: ArchSpec
    seed: int
    stem: Affine
    blocks: list[list[Affine]] = field(default_factory=list)
    fc: Affine = None

    @property
    def block_ids(self) -> list[str]:
        """Front-to-rear block names: stem, block1..blockN, fc."""
        return (["stem"]
                + [f"block{i + 1}" for i in range(self.spec.n_res_blocks)]
                + ["fc"])

    def params(self, block_id: str) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays of one block, in a stable order."""
        if block_id == "stem":
            return [("W", self.stem.W), ("b", self.stem.b)]
        if block_id == "fc":
            return [("W", self.fc.W), ("b", self.fc.b)]
        idx = self._block_index(block_id)
        out = []
        for l, layer in enumerate(self.blocks[idx]):
            out.append((f"{l}.W", layer.W))
            out.append((f"{l}.b", layer.b))
        return out

    def _block_index(self, block_id: str) -> int:
        if block_id not in self.block_ids:
            raise InputError(f"unknown block id {block_id!r}; "
                             f"valid ids are {self.block_ids}")
        return int(block_id[len("block"):]) - 1

    def copy(self) -> "BlockNet":
        return copy.deepcopy(self)


def build(spec: ArchSpec, seed: int) -> BlockNet:
    """Deterministically initialize a net: He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)

    def he_affine(m: int, n: int) -> Affine:
        W = rng.normal(0.0, np.sqrt(2.0 / m), size=(m, n))
        return Affine(W=W, b=np.zeros(n))

    stem = he_affine(spec.input_dim, spec.hidden_dim)
    blocks = [[he_affine(spec.hidden_dim, spec.hidden_dim)
               for _ in range(spec.layers_per_block)]
              for _ in range(spec.n_res_blocks)]
    fc = he_affine(spec.hidden_dim, spec.n_classes)
    return BlockNet(spec=spec, seed=seed, stem=stem, blocks=blocks, fc=fc)


def check_selection(net: BlockNet, selection, allow_empty: bool = False) -> frozenset:
    sel = frozenset(selection)
    unknown = sel - set(net.block_ids)
    if unknown:
        raise InputError(f"unknown block ids {sorted(unknown)}; "
                         f"valid ids are {net.block_ids}")
    if not sel and not allow_empty:
        raise UsageError("selection must name at least one block")
    return sel


def full_selection(net: BlockNet) -> frozenset:
    return frozenset(net.block_ids)


def selection_for(net: BlockNet, name: str, stem_with_block1: bool = True) -> frozenset:
    """Map a selection name ("block2", "fc", "full") to a block id set.

    By default the stem is grouped with block1: it is the front-most
    trainable unit touching the input, so tuning "block1" tunes both.
    """
    if name == "full":
        return full_selection(net)
    if name == "block1" and stem_with_block1:
        return frozenset({"stem", "block1"})
    return check_selection(net, {name})


def _block_depth(net: BlockNet, block_id: str) -> int:
    return net.block_ids.index(block_id)


def forward(net: BlockNet, X: np.ndarray) -> np.ndarray:
    """Compose stem -> block1 -> ... -> fc; residual blocks compute h + g(h)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.spec.input_dim:
        raise ShapeError(f"X has shape {X.shape}, expected "
                         f"(B, {net.spec.input_dim})")
    h = linear_forward(X, net.stem.W, net.stem.b)
    for block in net.blocks:
        g = h
        for layer in block:
            g = relu(linear_forward(g, layer.W, layer.b))
        h = h + g
    return linear_forward(h, net.fc.W, net.fc.b)


def _forward_cached(net: BlockNet, X: np.ndarray):
    """Forward pass retaining the per-layer inputs and preactivations."""
    h = linear_forward(X, net.stem.W, net.stem.b)
    block_caches = []
    for block in net.blocks:
        g = h
        layer_caches = []
        for layer in block:
            z = linear_forward(g, layer.W, layer.b)
            layer_caches.append((g, z))
            g = relu(z)
        block_caches.append(layer_caches)
        h = h + g
    logits = linear_forward(h, net.fc.W, net.fc.b)
    return logits, h, block_caches, X


def backward_selected(net: BlockNet, selection, X: np.ndarray,
                      y: np.ndarray) -> tuple[float, dict]:
    """Loss and parameter gradients for exactly the selected blocks.

    Activation gradients are chained from the loss down to the
    front-most selected block and no further; parameter gradients are
    produced only for blocks in the selection, keyed by block id then
    parameter name.
    """
    sel = check_selection(net, selection)
    X = np.asarray(X, dtype=np.float64)
    logits, h_final, block_caches, x0 = _forward_cached(net, X)
    loss, d = softmax_xent(logits, y)

    front = min(_block_depth(net, b) for b in sel)
    grads: dict[str, dict[str, np.ndarray]] = {}

    if "fc" in sel:
        g = linear_backward(h_final, net.fc.W, d)
        grads["fc"] = {"W": g.dW, "b": g.db}
        d = g.dX
    elif front < _block_depth(net, "fc"):
        d = linear_backward_input(net.fc.W, d)
    else:
        return loss, grads

    for k in range(net.spec.n_res_blocks - 1, -1, -1):
        block_id = f"block{k + 1}"
        depth = k + 1
        if depth < front:
            break
        selected = block_id in sel
        dg = d
        block_grads: dict[str, np.ndarray] = {}
        for l in range(net.spec.layers_per_block - 1, -1, -1):
            x_in, z = block_caches[k][l]
            dz = relu_backward(z, dg)
            layer = net.blocks[k][l]
            if selected:
                g = linear_backward(x_in, layer.W, dz)
                block_grads[f"{l}.W"] = g.dW
                block_grads[f"{l}.b"] = g.db
                dg = g.dX
            else:
                dg = linear_backward_input(layer.W, dz)
        if selected:
            grads[block_id] = block_grads
        if depth == front:
            return loss, grads
        d = d + dg  # skip join: gradient flows through both branches

    if "stem" in sel:
        g = linear_backward(x0, net.stem.W, d)
        grads["stem"] = {"W": g.dW, "b": g.db}
    return loss, grads


def inject_noise(net: BlockNet, block_id: str, sigma: float, seed: int) -> BlockNet:
    """Add i.i.d. N(0, sigma^2) to every parameter of one block.

    Returns a new net; all other blocks are bitwise copies of the input.
    """
    if sigma < 0:
        raise InputError(f"sigma must be >= 0, got {sigma}")
    if block_id not in net.block_ids:
        raise InputError(f"unknown block id {block_id!r}; "
                         f"valid ids are {net.block_ids}")
    out = net.copy()
    if sigma == 0:
        return out
    rng = np.random.default_rng(seed)
    for _, arr in out.params(block_id):
        arr += rng.normal(0.0, sigma, size=arr.shape)
    return out


def selected_params(net: BlockNet, selection) -> list[tuple[str, str, np.ndarray]]:
    """(block_id, param_name, array) triples for the selection, front to rear."""
    sel = check_selection(net, selection, allow_empty=True)
    out = []
    for block_id in net.block_ids:
        if block_id in sel:
            for pname, arr in net.params(block_id):
                out.append((block_id, pname, arr))
    return out


def trainable_param_count(net: BlockNet, selection) -> int:
    """Exact number of scalars in the selected blocks (empty selection -> 0)."""
    return sum(arr.size for _, _, arr in selected_params(net, selection))


def param_hash(net: BlockNet) -> str:
    """SHA-256 over the canonical parameter byte stream (checkpoint identity)."""
    h = hashlib.sha256()
    for block_id in net.block_ids:
        for pname, arr in net.params(block_id):
            h.update(f"{block_id}:{pname}:{arr.shape}".encode())
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def save_checkpoint(net: BlockNet, path) -> None:
    """Write a versioned .npz holding the arch, build seed, and parameters."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "seed": net.seed,
        "arch": {
            "input_dim": net.spec.input_dim,
            "n_classes": net.spec.n_classes,
            "hidden_dim": net.spec.hidden_dim,
            "n_res_blocks": net.spec.n_res_blocks,
            "layers_per_block": net.spec.layers_per_block,
        },
    }
    arrays = {"__meta__": np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for block_id in net.block_ids:
        for pname, arr in net.params(block_id):
            arrays[f"{block_id}:{pname}"] = arr
    np.savez(path, **arrays)


def load_checkpoint(path) -> BlockNet:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise InputError(f"not a recognized checkpoint: "
                             f"format={meta.get('format')!r}")
        spec = ArchSpec(**meta["arch"])
        net = build(spec, seed=meta["seed"])
        for block_id in net.block_ids:
            for pname, arr in net.params(block_id):
                arr[...] = data[f"{block_id}:{pname}"]
    return net
