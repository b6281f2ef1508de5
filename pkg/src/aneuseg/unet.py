"""A configurable 3D U-Net with deterministic init and a testable forward.

Architecture (channels C(r) = min(base_channels * 2^r, channel_cap)):

* encoder level r: two 3x3x3 convs (stride 1, zero padding 1) at C(r),
  each followed by instance norm (optional) and a leaky rectifier;
* between levels: a 3x3x3 stride-2 conv C(r) -> C(r+1) with the same
  norm/activation, so spatial extent halves exactly;
* decoder level r: a kernel-2 stride-2 transposed conv C(r+1) -> C(r)
  (no norm/activation), channel concatenation with the encoder skip,
  then two 3x3x3 convs (2*C(r) -> C(r), C(r) -> C(r));
* head: a 1x1x1 conv C(0) -> num_classes producing logits.

Parameters live in an ordered dict (declaration order below) with a
parallel velocity dict of identical shapes for the optimizer.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn_ops
from .errors import CheckpointError, ConfigError, PatchError
from .nn_ops import softmax_channels  # re-exported; part of this module's surface

CHECKPOINT_MAGIC = b"AUNET3D\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class UNetConfig:
    num_resolutions: int = 6
    in_channels: int = 1
    num_classes: int = 2
    base_channels: int = 4
    channel_cap: int = 320
    kernel_size: int = 3
    norm: str = "instance"  # "instance" | "none"
    norm_eps: float = 1e-5
    leaky_slope: float = 0.01
    convs_per_block: int = 2

    def __post_init__(self):
        if self.num_resolutions < 2:
            raise ConfigError(f"num_resolutions must be >= 2, got {self.num_resolutions}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.norm not in ("instance", "none"):
            raise ConfigError(f"norm must be 'instance' or 'none', got {self.norm!r}")
        if self.kernel_size != 3 or self.convs_per_block != 2:
            raise ConfigError("only kernel_size=3 with convs_per_block=2 is implemented")

    def channels(self, r: int) -> int:
        return min(self.base_channels * 2 ** r, self.channel_cap)


@dataclass
class NetParams:
    """All trainable tensors plus the matching optimizer velocity state."""

    config: UNetConfig
    tensors: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def zero_velocity(self) -> None:
        self.velocity = {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def astype(self, dtype) -> "NetParams":
        p = NetParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})
        p.velocity = {k: v.astype(dtype) for k, v in self.velocity.items()}
        return p


def _conv_unit_names(cfg: UNetConfig, unit: str):
    names = [f"{unit}.w", f"{unit}.b"]
    if cfg.norm == "instance":
        names += [f"{unit}.gamma", f"{unit}.beta"]
    return names


def tensor_layout(cfg: UNetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Declaration-ordered (name, shape) pairs for every trainable tensor."""
    k = cfg.kernel_size
    R = cfg.num_resolutions
    layout: list[tuple[str, tuple[int, ...]]] = []

    def conv_unit(unit: str, cin: int, cout: int, kernel: int):
        layout.append((f"{unit}.w", (cout, cin, kernel, kernel, kernel)))
        layout.append((f"{unit}.b", (cout,)))
        if cfg.norm == "instance":
            layout.append((f"{unit}.gamma", (cout,)))
            layout.append((f"{unit}.beta", (cout,)))

    for r in range(R):
        c = cfg.channels(r)
        if r == 0:
            conv_unit("enc0.conv0", cfg.in_channels, c, k)
        else:
            conv_unit(f"down{r - 1}", cfg.channels(r - 1), c, k)
            conv_unit(f"enc{r}.conv0", c, c, k)
        conv_unit(f"enc{r}.conv1", c, c, k)
    for r in range(R - 2, -1, -1):
        c = cfg.channels(r)
        layout.append((f"up{r}.w", (cfg.channels(r + 1), c, 2, 2, 2)))
        layout.append((f"up{r}.b", (c,)))
        conv_unit(f"dec{r}.conv0", 2 * c, c, k)
        conv_unit(f"dec{r}.conv1", c, c, k)
    layout.append(("head.w", (cfg.num_classes, cfg.channels(0), 1, 1, 1)))
    layout.append(("head.b", (cfg.num_classes,)))
    return layout


def parameter_count(cfg: UNetConfig) -> int:
    """Closed-form trainable scalar count for a config.

    Sums, over the layout above, Co*Ci*k^3 + Co per conv (plus 2*Co affine
    scalars per instance norm), Ci*Co*8 + Co per transposed conv, and the
    1x1x1 head.
    """
    return sum(int(np.prod(shape)) for _, shape in tensor_layout(cfg))


def init_params(cfg: UNetConfig, seed: int) -> NetParams:
    """He-style fan-in init: w ~ N(0, 2/fan_in), zero biases and velocity.

    fan_in is Ci*k^3 for convs and Ci*8 for the kernel-2 transposed convs.
    Bit-deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_layout(cfg):
        if name.endswith(".w"):
            if name.startswith("up"):
                fan_in = shape[0] * int(np.prod(shape[2:]))
            else:
                fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            tensors[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
        elif name.endswith(".gamma"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:  # biases and norm shifts
            tensors[name] = np.zeros(shape, dtype=np.float32)
    params = NetParams(cfg, tensors)
    params.zero_velocity()
    return params


def level_shapes(cfg: UNetConfig, spatial) -> list[tuple[int, int, int]]:
    """Spatial shape at each resolution level, input/2^r."""
    return [tuple(int(s) >> r for s in spatial) for r in range(cfg.num_resolutions)]


def check_input_shape(cfg: UNetConfig, spatial) -> None:
    d = 2 ** (cfg.num_resolutions - 1)
    for s in spatial:
        if s % d != 0 or s // d < 1:
            raise PatchError(
                f"input spatial shape {tuple(spatial)} not divisible by 2^(R-1)={d} "
                f"for {cfg.num_resolutions} resolutions"
            )


def _run_conv_unit(params: NetParams, unit: str, h, stride, padding, tape, norm_stats):
    cfg = params.config
    t = params.tensors
    h, conv_cache = nn_ops.conv3d_forward(h, t[f"{unit}.w"], t[f"{unit}.b"],
                                          stride=stride, padding=padding)
    norm_cache = None
    if cfg.norm == "instance":
        h, norm_cache = nn_ops.instance_norm_forward(
            h, t[f"{unit}.gamma"], t[f"{unit}.beta"], eps=cfg.norm_eps
        )
        if norm_stats is not None:
            xhat = norm_cache[0]
            norm_stats.append((unit, xhat.mean(axis=(2, 3, 4)), xhat.var(axis=(2, 3, 4))))
    h, act_cache = nn_ops.leaky_relu_forward(h, cfg.leaky_slope)
    if tape is not None:
        tape[unit] = (conv_cache, norm_cache, act_cache)
    return h


def _backprop_conv_unit(params: NetParams, unit: str, dh, tape, grads):
    cfg = params.config
    conv_cache, norm_cache, act_cache = tape[unit]
    dh = nn_ops.leaky_relu_backward(dh, act_cache)
    if norm_cache is not None:
        dh, dgamma, dbeta = nn_ops.instance_norm_backward(dh, norm_cache)
        grads[f"{unit}.gamma"] = dgamma
        grads[f"{unit}.beta"] = dbeta
    dh, dw, db = nn_ops.conv3d_backward(dh, conv_cache)
    grads[f"{unit}.w"] = dw
    grads[f"{unit}.b"] = db
    return dh


def forward(params: NetParams, x: np.ndarray, *, with_tape: bool = False,
            norm_stats: list | None = None):
    """Run the network on a (B, in_channels, X, Y, Z) batch.

    Returns logits (B, num_classes, X, Y, Z), or (logits, tape) when
    ``with_tape`` is set; the tape feeds :func:`backward`. ``norm_stats``
    collects (unit, per-sample-channel mean, variance) of the normalized
    activations before the affine, for diagnostics.
    """
    cfg = params.config
    if x.ndim != 5 or x.shape[1] != cfg.in_channels:
        raise PatchError(f"expected input (B, {cfg.in_channels}, X, Y, Z), got {x.shape}")
    check_input_shape(cfg, x.shape[2:])
    R = cfg.num_resolutions
    tape: dict | None = {} if with_tape else None

    h = x
    skips = []
    for r in range(R):
        if r > 0:
            h = _run_conv_unit(params, f"down{r - 1}", h, 2, 1, tape, norm_stats)
        h = _run_conv_unit(params, f"enc{r}.conv0", h, 1, 1, tape, norm_stats)
        h = _run_conv_unit(params, f"enc{r}.conv1", h, 1, 1, tape, norm_stats)
        if r < R - 1:
            skips.append(h)
    for r in range(R - 2, -1, -1):
        t = params.tensors
        h, up_cache = nn_ops.transpconv3d_forward(h, t[f"up{r}.w"], t[f"up{r}.b"])
        h, skip_channels = nn_ops.concat_channels(skips[r], h)
        if tape is not None:
            tape[f"up{r}"] = (up_cache, skip_channels)
        h = _run_conv_unit(params, f"dec{r}.conv0", h, 1, 1, tape, norm_stats)
        h = _run_conv_unit(params, f"dec{r}.conv1", h, 1, 1, tape, norm_stats)
    logits, head_cache = nn_ops.conv3d_forward(
        h, params.tensors["head.w"], params.tensors["head.b"], stride=1, padding=0
    )
    if tape is not None:
        tape["head"] = head_cache
        return logits, tape
    return logits


def backward(params: NetParams, tape: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-accumulate gradients for every tensor given d(loss)/d(logits)."""
    cfg = params.config
    R = cfg.num_resolutions
    grads: dict[str, np.ndarray] = {}

    dh, dw, db = nn_ops.conv3d_backward(dlogits, tape["head"])
    grads["head.w"] = dw
    grads["head.b"] = db

    dskips: dict[int, np.ndarray] = {}
    for r in range(R - 1):
        dh = _backprop_conv_unit(params, f"dec{r}.conv1", dh, tape, grads)
        dh = _backprop_conv_unit(params, f"dec{r}.conv0", dh, tape, grads)
        up_cache, skip_channels = tape[f"up{r}"]
        dskip, dup = nn_ops.split_channels(dh, skip_channels)
        dskips[r] = dskip
        dh, dw, db = nn_ops.transpconv3d_backward(np.ascontiguousarray(dup), up_cache)
        grads[f"up{r}.w"] = dw
        grads[f"up{r}.b"] = db

    for r in range(R - 1, -1, -1):
        dh = _backprop_conv_unit(params, f"enc{r}.conv1", dh, tape, grads)
        dh = _backprop_conv_unit(params, f"enc{r}.conv0", dh, tape, grads)
        if r > 0:
            dh = _backprop_conv_unit(params, f"down{r - 1}", dh, tape, grads)
            dh = dh + dskips[r - 1]
    return grads


def save_checkpoint(params: NetParams, path, seed: int | None = None,
                    epoch: int | None = None, extra: dict | None = None) -> None:
    """Write a versioned checkpoint: magic, version, JSON header, then raw
    little-endian float32 tensors (params, then velocities) in declaration
    order. A ``.gz`` suffix selects gzip compression.
    """
    path = Path(path)
    names = [n for n, _ in tensor_layout(params.config)]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "seed": seed,
        "epoch": epoch,
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
        "includes_velocity": bool(params.velocity),
    }
    if extra:
        header["extra"] = extra
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(hjson)), hjson]
    for n in names:
        parts.append(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes())
    if params.velocity:
        for n in names:
            parts.append(np.ascontiguousarray(params.velocity[n], dtype="<f4").tobytes())
    blob = b"".join(parts)
    if path.suffix == ".gz":
        # no filename or mtime in the gzip header: identical params always
        # produce identical bytes, wherever the file lives
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)


def load_checkpoint(path) -> tuple[NetParams, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns (params, header).
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    version, hlen = struct.unpack_from("<II", raw, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = len(CHECKPOINT_MAGIC) + 8
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    cfg = UNetConfig(**header["config"])
    expected = dict(tensor_layout(cfg))
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected or expected[name] != shape:
            raise CheckpointError(f"tensor {name} with shape {shape} does not match config")
        n = int(np.prod(shape))
        tensors[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape).copy()
        off += 4 * n
    params = NetParams(cfg, tensors)
    if header.get("includes_velocity"):
        vel = {}
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            n = int(np.prod(shape))
            vel[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape).copy()
            off += 4 * n
        params.velocity = vel
    else:
        params.zero_velocity()
    return params, header
