"""Convolutional surrogate for the one-step solution operator.

Architecture (fixed wiring, pinned by tests):

    h = tanh(conv_in(u))                      # 1 -> C channels
    for each residual block:
        h = h + conv2(tanh(conv1(h)))         # C -> C, C -> C
        h = tanh(h)        # skipped after the last block
    y = conv_out(h)                           # C -> 1
    y = y + (sum(u) - sum(y)) / N^dim         # mass-conservative kind only
    y = clamp(y, lo, hi)                      # solution bounds

Every convolution is a 'same'-size circular cross-correlation, so the whole
map is translation equivariant on the periodic grid and fully convolutional:
a parameter set trained at one resolution evaluates at any other.

The training loss is the squared residual of the Crank-Nicolson scheme
evaluated at the network's prediction, averaged over batch and grid; its
gradient is computed by an analytic reverse-mode pass through this module
(clamp subgradient: 1 inside and on the boundary, 0 outside; the mass shift
backpropagates as mean subtraction).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .convkernels import conv_backward_input, conv_backward_params, conv_forward, conv_forward_padded, pad_wrap
from .errors import DivergenceError, FormatError, StructuralError
from .fine import StepperConfig, scheme_residual_array, scheme_residual_vjp_next
from .grid import Field, GridSpec
from .physics import ModelKind, bounds_for

CHECKPOINT_MAGIC = b"ACNN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchSpec:
    """Hyperparameters that fully determine every tensor shape."""

    dim: int
    kind: ModelKind
    channels: int = 4
    res_blocks: int = 2
    kernel: int = 3

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise StructuralError(f"architecture dim must be 2 or 3, got {self.dim}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise StructuralError(f"kernel extent must be odd, got {self.kernel}")
        if self.channels < 1 or self.res_blocks < 0:
            raise StructuralError("channels must be >= 1 and res_blocks >= 0")

    @property
    def bounds(self) -> tuple[float, float]:
        return bounds_for(self.kind)

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        """Canonical tensor names and shapes, in checkpoint order."""
        k = (self.kernel,) * self.dim
        c = self.channels
        shapes: dict[str, tuple[int, ...]] = {"in.w": (c, 1) + k, "in.b": (c,)}
        for i in range(self.res_blocks):
            shapes[f"block{i}.conv0.w"] = (c, c) + k
            shapes[f"block{i}.conv0.b"] = (c,)
            shapes[f"block{i}.conv1.w"] = (c, c) + k
            shapes[f"block{i}.conv1.b"] = (c,)
        shapes["out.w"] = (1, c) + k
        shapes["out.b"] = (1,)
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.tensor_shapes().values())


@dataclass
class ModelParams:
    """Architecture plus one array per named tensor."""

    arch: ArchSpec
    tensors: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        expected = self.arch.tensor_shapes()
        if list(self.tensors.keys()) != list(expected.keys()):
            raise StructuralError(
                f"tensor names {list(self.tensors)} do not match architecture {list(expected)}"
            )
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise StructuralError(
                    f"tensor {name} has shape {self.tensors[name].shape}, expected {shape}"
                )

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors.values())


def init_params(arch: ArchSpec, seed: int) -> ModelParams:
    """Centered uniform init with per-layer scale 1/sqrt(fan_in)."""
    tensors: dict[str, np.ndarray] = {}
    for idx, (name, shape) in enumerate(arch.tensor_shapes().items()):
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
        else:
            w_shape = arch.tensor_shapes()[name[:-2] + ".w"]
            fan_in = int(np.prod(w_shape[1:]))
        scale = 1.0 / np.sqrt(fan_in)
        values = rng.symmetric_uniform(rng.derive_seed(seed, idx), int(np.prod(shape)), scale)
        tensors[name] = values.reshape(shape)
    return ModelParams(arch, tensors)


def init_params_identity(
    arch: ArchSpec, seed: int, embed: float = 0.05, noise: float = 0.004
) -> ModelParams:
    """Near-identity initialization for self-supervised rollout training.

    The input conv embeds the field into every channel at amplitude
    ``embed`` (small enough that tanh stays in its linear regime), the conv
    feeding each residual sum starts near zero, and the output conv inverts
    the embedding, so the untrained network maps u -> u up to O(1e-3) plus
    ``noise``-scale symmetry breaking. A generic small-weight start instead
    maps everything toward a constant: the training schedule would then
    feed itself collapsed states and never see realistic fields.
    """
    params = init_params(arch, seed)
    t = params.tensors
    delta = np.zeros((arch.kernel,) * arch.dim)
    delta[(arch.kernel // 2,) * arch.dim] = 1.0
    c = arch.channels
    k_vol = arch.kernel**arch.dim

    t["in.w"] *= noise * np.sqrt(k_vol)
    for ch in range(c):
        t["in.w"][ch, 0] += embed * delta
    t["in.b"][:] = 0.0
    for i in range(arch.res_blocks):
        t[f"block{i}.conv1.w"] *= 0.02
        t[f"block{i}.conv1.b"][:] = 0.0
    t["out.w"] *= noise * np.sqrt(c * k_vol)
    for ch in range(c):
        t["out.w"][0, ch] += delta / (c * embed)
    t["out.b"][:] = 0.0
    return params


def conv_circular(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Public circular convolution on a channel stack (C_in, *sp) or batch
    (B, C_in, *sp); output keeps the spatial size."""
    single = x.ndim == weights.ndim - 1
    xb = x[None] if single else x
    y = conv_forward(xb, weights, bias)
    return y[0] if single else y


def mass_correction(u: Field, target_grid_sum: float) -> Field:
    """Shift the field uniformly so its grid sum equals the target."""
    shift = (target_grid_sum - float(u.data.sum())) / u.grid.size
    return Field(u.grid, u.data + shift)


def bound_limiter(u: Field, bounds: tuple[float, float]) -> Field:
    """Clamp every value into [lo, hi]."""
    lo, hi = bounds
    if not lo < hi:
        raise StructuralError(f"limiter bounds must satisfy lo < hi, got {bounds}")
    return Field(u.grid, np.clip(u.data, lo, hi))


def _forward_batch(params: ModelParams, x: np.ndarray, want_cache: bool):
    """Run the network on (B, *spatial); optionally keep backward caches."""
    arch = params.arch
    t = params.tensors
    sd = arch.dim
    pad = arch.kernel // 2
    cache: dict | None = {} if want_cache else None

    xb = x[:, None]  # (B, 1, *sp)
    xp = pad_wrap(xb, sd, pad)
    h = np.tanh(conv_forward_padded(xp, t["in.w"], t["in.b"]))
    if want_cache:
        cache["in.xp"] = xp
        cache["in.h"] = h

    for i in range(arch.res_blocks):
        hp = pad_wrap(h, sd, pad)
        t1 = np.tanh(conv_forward_padded(hp, t[f"block{i}.conv0.w"], t[f"block{i}.conv0.b"]))
        t1p = pad_wrap(t1, sd, pad)
        s = h + conv_forward_padded(t1p, t[f"block{i}.conv1.w"], t[f"block{i}.conv1.b"])
        last = i == arch.res_blocks - 1
        h_next = s if last else np.tanh(s)
        if want_cache:
            cache[f"block{i}.hp"] = hp
            cache[f"block{i}.t1"] = t1
            cache[f"block{i}.t1p"] = t1p
            cache[f"block{i}.h"] = h_next
        h = h_next

    hp_out = pad_wrap(h, sd, pad)
    y = conv_forward_padded(hp_out, t["out.w"], t["out.b"])[:, 0]
    if want_cache:
        cache["out.xp"] = hp_out

    if arch.kind is ModelKind.MASS_CONSERVATIVE:
        axes = tuple(range(1, 1 + sd))
        shift = (x.sum(axis=axes, keepdims=True) - y.sum(axis=axes, keepdims=True)) / x[0].size
        y = y + shift
    lo, hi = arch.bounds
    if want_cache:
        cache["clamp_mask"] = (y >= lo) & (y <= hi)
    return np.clip(y, lo, hi), cache


def _backward_batch(params: ModelParams, dy: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
    """Reverse-mode pass; dy is the loss gradient w.r.t. the clamped output."""
    arch = params.arch
    t = params.tensors
    sd = arch.dim
    pad = arch.kernel // 2
    grads: dict[str, np.ndarray] = {}

    d = dy * cache["clamp_mask"]
    if arch.kind is ModelKind.MASS_CONSERVATIVE:
        axes = tuple(range(1, 1 + sd))
        d = d - d.mean(axis=axes, keepdims=True)

    dch = d[:, None]  # (B, 1, *sp)
    grads["out.w"], grads["out.b"] = conv_backward_params(
        cache["out.xp"], dch, t["out.w"].shape[2:]
    )
    dh = conv_backward_input(dch, t["out.w"])

    for i in reversed(range(arch.res_blocks)):
        last = i == arch.res_blocks - 1
        if not last:
            h_out = cache[f"block{i}.h"]
            dh = dh * (1.0 - h_out * h_out)
        # through s = h_in + conv1(tanh(conv0(h_in)))
        grads[f"block{i}.conv1.w"], grads[f"block{i}.conv1.b"] = conv_backward_params(
            cache[f"block{i}.t1p"], dh, t[f"block{i}.conv1.w"].shape[2:]
        )
        dt1 = conv_backward_input(dh, t[f"block{i}.conv1.w"])
        t1 = cache[f"block{i}.t1"]
        dc0 = dt1 * (1.0 - t1 * t1)
        grads[f"block{i}.conv0.w"], grads[f"block{i}.conv0.b"] = conv_backward_params(
            cache[f"block{i}.hp"], dc0, t[f"block{i}.conv0.w"].shape[2:]
        )
        dh = dh + conv_backward_input(dc0, t[f"block{i}.conv0.w"])

    h0 = cache["in.h"]
    da = dh * (1.0 - h0 * h0)
    grads["in.w"], grads["in.b"] = conv_backward_params(cache["in.xp"], da, t["in.w"].shape[2:])
    return {name: grads[name] for name in arch.tensor_shapes()}


def forward_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Network prediction for a stacked batch (B, *spatial) of states."""
    y, _ = _forward_batch(params, x, want_cache=False)
    return y


def forward(params: ModelParams, u: Field) -> Field:
    """Predict the next state from the current one (single field)."""
    if not params.all_finite():
        raise StructuralError("model parameters contain non-finite values")
    y = forward_batch(params, u.data[None])[0]
    return Field(u.grid, y)


def loss_and_grad(
    params: ModelParams, batch: list[Field], cfg: StepperConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Scheme-residual loss and its exact gradient for every tensor.

    loss = mean over batch and grid of residual(prediction, state)^2 with the
    residual of the fully discrete step; predictions come from this network.
    """
    if not batch:
        raise StructuralError("loss needs a non-empty batch")
    grid = batch[0].grid
    for u in batch:
        if u.grid.shape != grid.shape:
            raise StructuralError("all batch fields must share one grid")
    x = np.stack([u.data for u in batch])
    y, cache = _forward_batch(params, x, want_cache=True)
    r = scheme_residual_array(y, x, grid, cfg)
    denom = r.size
    loss = float(np.sum(r * r) / denom)
    if not np.isfinite(loss):
        raise DivergenceError(f"scheme loss is non-finite ({loss})")
    dy = scheme_residual_vjp_next(y, (2.0 / denom) * r, grid, cfg)
    grads = _backward_batch(params, dy, cache)
    return loss, grads


def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: header with the architecture, then named tensors."""
    arch = params.arch
    kind_byte = 0 if arch.kind is ModelKind.CLASSIC else 1
    lo, hi = arch.bounds
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack(
        "<IIIIIBdd",
        CHECKPOINT_VERSION,
        arch.dim,
        arch.channels,
        arch.res_blocks,
        arch.kernel,
        kind_byte,
        lo,
        hi,
    )
    for name, tensor in params.tensors.items():
        encoded = name.encode("ascii")
        blob += struct.pack("<I", len(encoded)) + encoded
        blob += struct.pack("<I", tensor.ndim)
        blob += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        blob += np.ascontiguousarray(tensor, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path, expected_arch: ArchSpec | None = None) -> ModelParams:
    """Read a checkpoint; optionally insist it matches a given architecture."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a model checkpoint (bad magic)")
    header = struct.Struct("<IIIIIBdd")
    version, dim, channels, res_blocks, kernel, kind_byte, lo, hi = header.unpack_from(raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    kind = ModelKind.CLASSIC if kind_byte == 0 else ModelKind.MASS_CONSERVATIVE
    arch = ArchSpec(dim=dim, kind=kind, channels=channels, res_blocks=res_blocks, kernel=kernel)
    if (lo, hi) != arch.bounds:
        raise FormatError(
            f"{path}: stored bounds ({lo}, {hi}) do not match kind {kind.value}"
        )
    if expected_arch is not None and arch != expected_arch:
        raise StructuralError(f"checkpoint architecture {arch} does not match {expected_arch}")

    offset = 4 + header.size
    tensors: dict[str, np.ndarray] = {}
    for name, shape in arch.tensor_shapes().items():
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        stored = raw[offset : offset + name_len].decode("ascii")
        offset += name_len
        if stored != name:
            raise FormatError(f"{path}: expected tensor {name!r}, found {stored!r}")
        (ndim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        if dims != shape:
            raise FormatError(f"{path}: tensor {name} has dims {dims}, expected {shape}")
        count = int(np.prod(shape))
        tensor = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        tensors[name] = tensor.astype(np.float64).reshape(shape)
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after tensors")
    return ModelParams(arch, tensors)


@dataclass(frozen=True)
class SurrogatePropagator:
    """Coarse propagator: the network composed over its training resolution.

    ``composition`` evaluations advance one coarse interval; a model trained
    directly at the coarse step uses composition 1.
    """

    params: ModelParams
    composition: int = 1

    def __post_init__(self) -> None:
        if self.composition < 1:
            raise StructuralError("composition count must be at least 1")
        if not self.params.all_finite():
            raise StructuralError("model parameters contain non-finite values")

    def __call__(self, u: Field) -> Field:
        data = u.data
        for _ in range(self.composition):
            data = forward_batch(self.params, data[None])[0]
        return Field(u.grid, data)
