"""Dilated residual convolutional refinement network (inference only).

The network maps a pilot-grid channel estimate (T_P, N, M) to a full-frame
estimate (T, N, M).  It has two stages:

* A denoising stack of seven 3D convolution + PReLU layers over the
  (pilot-symbol, subcarrier, antenna) volume, dilation (1, 4, 4), with one
  global residual connection: ``denoised = input + stack(input)``.  With
  all-zero weights the stage is the identity.
* A time-interpolation head: the T_P pilot symbols are treated as input
  channels over the (N, M) plane and a single 2D convolution (kernel
  (5, 3), dilation (4, 4)) emits T output channels, one per OFDM symbol.

All convolutions use cross-correlation semantics, stride 1 and zero
padding of ``dilation * (kernel - 1) / 2`` per axis (kernels are odd), so
spatial shapes are preserved.  Complex tensors are processed as two
independent real passes (real and imaginary parts) sharing one set of real
weights.

Weight bundles serialise to a little-endian binary format (magic
``DRCNW1``): a u32 tensor count, then per tensor a u32 name length, UTF-8
name, u32 rank, u32 dims and raw float32 row-major data with no padding.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, WeightMismatch
from .frame import FrameConfig

__all__ = [
    "ConvLayerSpec",
    "NetworkSpec",
    "WeightBundle",
    "network_spec",
    "conv_nd",
    "prelu",
    "forward",
    "forward_real",
    "param_count",
    "zero_bundle",
    "random_bundle",
    "save_weights",
    "load_weights",
]

MAGIC_WEIGHTS = b"DRCNW1"
META_NAME = "meta.frame_dims"


@dataclass(frozen=True)
class ConvLayerSpec:
    """One convolution layer: shapes, dilation and derived padding."""

    name: str
    rank: int
    in_channels: int
    out_channels: int
    kernel: tuple[int, ...]
    dilation: tuple[int, ...]
    prelu: bool

    def __post_init__(self):
        if len(self.kernel) != self.rank or len(self.dilation) != self.rank:
            raise ShapeMismatch(
                f"layer {self.name}: kernel/dilation rank != {self.rank}"
            )
        if any(k % 2 == 0 for k in self.kernel):
            raise ShapeMismatch(f"layer {self.name}: kernels must be odd")

    @property
    def padding(self) -> tuple[int, ...]:
        return tuple(d * (k - 1) // 2 for k, d in zip(self.kernel, self.dilation))

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels) + self.kernel

    @property
    def n_params(self) -> int:
        w = int(np.prod(self.weight_shape))
        return w + self.out_channels + (1 if self.prelu else 0)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer list for a given frame geometry."""

    layers: tuple[ConvLayerSpec, ...]
    T: int
    T_P: int

    @property
    def denoise_layers(self) -> tuple[ConvLayerSpec, ...]:
        return self.layers[:-1]

    @property
    def head(self) -> ConvLayerSpec:
        return self.layers[-1]


def network_spec(cfg_or_T: FrameConfig | int, T_P: int | None = None) -> NetworkSpec:
    """Build the architecture for a frame geometry.

    Seven 3D layers with kernels (7,7,5) for layers 1-4 and (5,5,3) for
    layers 5-7, dilation (1,4,4), output channels 1,1,1,5,5,5,1, each
    followed by PReLU; then the (T_P -> T)-channel 2D head.
    """
    if isinstance(cfg_or_T, FrameConfig):
        T, T_P = cfg_or_T.T, cfg_or_T.T_P
    else:
        T = cfg_or_T
        if T_P is None:
            raise ValueError("T_P required when passing T directly")
    out_ch = (1, 1, 1, 5, 5, 5, 1)
    layers = []
    in_ch = 1
    for i, oc in enumerate(out_ch, start=1):
        kernel = (7, 7, 5) if i <= 4 else (5, 5, 3)
        layers.append(
            ConvLayerSpec(
                name=f"denoise.conv{i}",
                rank=3,
                in_channels=in_ch,
                out_channels=oc,
                kernel=kernel,
                dilation=(1, 4, 4),
                prelu=True,
            )
        )
        in_ch = oc
    layers.append(
        ConvLayerSpec(
            name="interp.conv",
            rank=2,
            in_channels=T_P,
            out_channels=T,
            kernel=(5, 3),
            dilation=(4, 4),
            prelu=False,
        )
    )
    return NetworkSpec(layers=tuple(layers), T=T, T_P=T_P)


def param_count(spec: NetworkSpec) -> int:
    """Total learnable scalars (weights, biases, PReLU slopes)."""
    return sum(layer.n_params for layer in spec.layers)


def prelu(x: np.ndarray, slope: float) -> np.ndarray:
    """max(0, x) + slope * min(0, x), elementwise."""
    return np.where(x >= 0.0, x, slope * x)


def conv_nd(
    x: np.ndarray, layer: ConvLayerSpec, weight: np.ndarray, bias: np.ndarray
) -> np.ndarray:
    """Dilated cross-correlation with shape-preserving zero padding.

    ``x`` is (in_channels, *spatial) with ``rank`` spatial axes; returns
    (out_channels, *spatial).  Implemented as a shift-and-accumulate over
    kernel taps, vectorised over the spatial volume.
    """
    if x.ndim != layer.rank + 1 or x.shape[0] != layer.in_channels:
        raise ShapeMismatch(
            f"layer {layer.name}: input {x.shape}, expected "
            f"({layer.in_channels}, *{layer.rank} spatial axes)"
        )
    if weight.shape != layer.weight_shape:
        raise ShapeMismatch(
            f"layer {layer.name}: weight {weight.shape} != {layer.weight_shape}"
        )
    if bias.shape != (layer.out_channels,):
        raise ShapeMismatch(
            f"layer {layer.name}: bias {bias.shape} != ({layer.out_channels},)"
        )
    spatial = x.shape[1:]
    pad = layer.padding
    padded = np.pad(x, [(0, 0)] + [(p, p) for p in pad])
    out = np.empty((layer.out_channels,) + spatial, dtype=np.result_type(x, weight))
    taps = list(np.ndindex(*layer.kernel))
    for co in range(layer.out_channels):
        acc = np.full(spatial, bias[co], dtype=out.dtype)
        for ci in range(layer.in_channels):
            xc = padded[ci]
            for tap in taps:
                w = weight[(co, ci) + tap]
                if w == 0.0:
                    continue
                sl = tuple(
                    slice(t * d, t * d + s)
                    for t, d, s in zip(tap, layer.dilation, spatial)
                )
                acc += w * xc[sl]
        out[co] = acc
    return out


@dataclass
class WeightBundle:
    """Named weight tensors (float32) plus frame-dimension metadata.

    Canonical names per 3D layer i: ``denoise.conv<i>.weight``, ``.bias``,
    ``.prelu``; head: ``interp.conv.weight`` / ``.bias``; metadata tensor
    ``meta.frame_dims`` = [T, T_P, N, M] (N, M zero when not tied to a
    grid).
    """

    tensors: dict[str, np.ndarray]

    def meta_dims(self) -> tuple[int, int, int, int]:
        meta = self.tensors.get(META_NAME)
        if meta is None or meta.size != 4:
            raise WeightMismatch(f"bundle missing {META_NAME}")
        return tuple(int(v) for v in meta)  # type: ignore[return-value]


def _expected_names(spec: NetworkSpec) -> list[str]:
    names = []
    for layer in spec.denoise_layers:
        names += [f"{layer.name}.weight", f"{layer.name}.bias",
                  f"{layer.name}.prelu"]
    names += [f"{spec.head.name}.weight", f"{spec.head.name}.bias", META_NAME]
    return names


def validate_bundle(bundle: WeightBundle, spec: NetworkSpec) -> None:
    """Check tensor presence and shapes against a NetworkSpec.

    Raises WeightMismatch for missing/unexpected tensors and ShapeMismatch
    (naming the offending layer) for wrong shapes.
    """
    expected = set(_expected_names(spec))
    have = set(bundle.tensors)
    if expected - have:
        raise WeightMismatch(
            f"bundle missing tensors: {sorted(expected - have)}"
        )
    if have - expected:
        raise WeightMismatch(
            f"bundle carries unexpected tensors: {sorted(have - expected)}"
        )
    for layer in spec.layers:
        w = bundle.tensors[f"{layer.name}.weight"]
        if w.shape != layer.weight_shape:
            raise ShapeMismatch(
                f"layer {layer.name}: weight {w.shape} != {layer.weight_shape}"
            )
        b = bundle.tensors[f"{layer.name}.bias"]
        if b.shape != (layer.out_channels,):
            raise ShapeMismatch(
                f"layer {layer.name}: bias {b.shape} != "
                f"({layer.out_channels},)"
            )
        if layer.prelu:
            s = bundle.tensors[f"{layer.name}.prelu"]
            if s.size != 1:
                raise ShapeMismatch(f"layer {layer.name}: prelu must be scalar")


def forward_real(
    x: np.ndarray, bundle: WeightBundle, spec: NetworkSpec
) -> np.ndarray:
    """One real-valued pass: (T_P, N, M) -> (T, N, M)."""
    if x.ndim != 3:
        raise ShapeMismatch(f"input must be (T_P, N, M), got {x.shape}")
    if x.shape[0] != spec.T_P:
        raise ShapeMismatch(
            f"layer {spec.head.name}: input has {x.shape[0]} pilot symbols, "
            f"weights expect {spec.T_P}"
        )
    y = x[None].astype(np.float64)
    for layer in spec.denoise_layers:
        w = bundle.tensors[f"{layer.name}.weight"].astype(np.float64)
        b = bundle.tensors[f"{layer.name}.bias"].astype(np.float64)
        slope = float(bundle.tensors[f"{layer.name}.prelu"].ravel()[0])
        y = prelu(conv_nd(y, layer, w, b), slope)
    denoised = x.astype(np.float64) + y[0]  # global residual
    head = spec.head
    w = bundle.tensors[f"{head.name}.weight"].astype(np.float64)
    b = bundle.tensors[f"{head.name}.bias"].astype(np.float64)
    return conv_nd(denoised, head, w, b)


def forward(
    x: np.ndarray, bundle: WeightBundle, spec: NetworkSpec
) -> np.ndarray:
    """Complex forward pass: (T_P, N, M) complex -> (T, N, M) complex.

    Real and imaginary parts run independently through the real-weight
    network.  Deterministic: identical inputs and weights give bit-identical
    outputs.
    """
    validate_bundle(bundle, spec)
    x = np.asarray(x)
    re = forward_real(np.real(x), bundle, spec)
    im = forward_real(np.imag(x), bundle, spec)
    return re + 1j * im


def zero_bundle(spec: NetworkSpec, N: int = 0, M: int = 0) -> WeightBundle:
    """All-zero weights: the denoising stage is the identity and the head
    emits zeros."""
    tensors: dict[str, np.ndarray] = {}
    for layer in spec.denoise_layers:
        tensors[f"{layer.name}.weight"] = np.zeros(layer.weight_shape, np.float32)
        tensors[f"{layer.name}.bias"] = np.zeros(layer.out_channels, np.float32)
        tensors[f"{layer.name}.prelu"] = np.zeros(1, np.float32)
    head = spec.head
    tensors[f"{head.name}.weight"] = np.zeros(head.weight_shape, np.float32)
    tensors[f"{head.name}.bias"] = np.zeros(head.out_channels, np.float32)
    tensors[META_NAME] = np.array([spec.T, spec.T_P, N, M], np.float32)
    return WeightBundle(tensors=tensors)


def random_bundle(
    spec: NetworkSpec, seed: int, scale: float = 0.05, N: int = 0, M: int = 0
) -> WeightBundle:
    """Gaussian random weights (for exercising inference without training)."""
    rng = np.random.default_rng(seed)
    bundle = zero_bundle(spec, N=N, M=M)
    for name, t in bundle.tensors.items():
        if name == META_NAME:
            continue
        if name.endswith(".prelu"):
            bundle.tensors[name] = np.full(1, 0.25, np.float32)
        else:
            bundle.tensors[name] = (
                scale * rng.standard_normal(t.shape)
            ).astype(np.float32)
    return bundle


# -- binary weight files ---------------------------------------------------

def save_weights(bundle: WeightBundle, path: str | Path) -> None:
    """Serialise a bundle; tensor order is preserved, so round trips are
    bit-identical."""
    from .datafiles import write_named_tensors

    write_named_tensors(bundle.tensors, path, MAGIC_WEIGHTS)


def load_weights(path: str | Path) -> WeightBundle:
    """Read a weight file, checking magic, completeness and layer shapes."""
    from .datafiles import read_named_tensors

    bundle = WeightBundle(tensors=read_named_tensors(path, MAGIC_WEIGHTS))
    T, T_P, _, _ = bundle.meta_dims()
    validate_bundle(bundle, network_spec(T, T_P))
    return bundle
