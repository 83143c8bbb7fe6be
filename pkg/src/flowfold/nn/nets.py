"""Network architectures: FlowNet-lite, PickNet/PlaceNet heads, checkpoints.

PickNet encoder follows the fixed recipe (4 conv layers, 32 filters of
size 5, strides 2,2,2,1); its decoder interleaves bilinear upsampling with
2 conv layers down to the 1x20x20 sigmoid heatmap. FlowNet-lite is a
6-level stride-2 encoder (16..256 channels) with a skip-connected decoder
predicting the 2-channel field at half resolution, bilinearly upsampled to
200x200.
"""

import json
from pathlib import Path

import numpy as np

from . import ops
from .tensor import Tensor

FLOW_ARCH = "flownet_lite"
PICK_ARCH = "picknet"


def kaiming_uniform(shape, fan_in, rng, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class _ConvNet:
    """Shared plumbing: named parameter store and conv layer creation."""

    def __init__(self, seed, dtype):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.params = {}
        self._rng = np.random.default_rng(seed)

    def _add_conv(self, name, cin, cout, k):
        w = kaiming_uniform((cout, cin, k, k), cin * k * k, self._rng, self.dtype)
        self.params[f"{name}.w"] = Tensor(w, requires_grad=True)
        self.params[f"{name}.b"] = Tensor(np.zeros(cout, dtype=self.dtype), requires_grad=True)

    def conv(self, name, x, stride, pad):
        return ops.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], stride, pad)

    def parameters(self):
        return self.params

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def load_arrays(self, arrays):
        for name, arr in arrays.items():
            if name not in self.params:
                raise KeyError(f"unknown parameter {name!r}")
            if self.params[name].data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            self.params[name].data = arr.astype(self.dtype)

    def export_arrays(self):
        return {name: p.data.copy() for name, p in self.params.items()}


class FlowNetLite(_ConvNet):
    """Two stacked depth images in, dense 2-channel flow out."""

    ENC_CHANNELS = (16, 32, 64, 128, 256, 256)

    def __init__(self, in_channels=2, seed=0, dtype=np.float32):
        super().__init__(seed, dtype)
        self.in_channels = in_channels
        cin = in_channels
        for i, cout in enumerate(self.ENC_CHANNELS):
            self._add_conv(f"enc{i}", cin, cout, 3)
            cin = cout
        # decoder: upsample to the skip's size, concat, conv
        dec_channels = (128, 64, 32, 16, 16)
        skips = self.ENC_CHANNELS[-2::-1]  # 256, 128, 64, 32, 16
        cin = self.ENC_CHANNELS[-1]
        for i, (cskip, cout) in enumerate(zip(skips, dec_channels)):
            self._add_conv(f"dec{i}", cin + cskip, cout, 3)
            cin = cout
        self._add_conv("head", cin, 2, 3)

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        feats = []
        h = x
        for i in range(len(self.ENC_CHANNELS)):
            h = ops.relu(self.conv(f"enc{i}", h, stride=2, pad=1))
            feats.append(h)
        skips = feats[-2::-1]
        for i, skip in enumerate(skips):
            h = ops.bilinear_resize(h, skip.data.shape[2:])
            h = ops.relu(self.conv(f"dec{i}", ops.concat([h, skip]), stride=1, pad=1))
        flow_half = self.conv("head", h, stride=1, pad=1)
        out_hw = (x.data.shape[2], x.data.shape[3])
        return ops.bilinear_resize(flow_half, out_hw)

    def manifest_kwargs(self):
        return {"in_channels": self.in_channels}


class PickNet(_ConvNet):
    """Fully convolutional heatmap net with a 20x20 sigmoid output grid.

    Also serves as PlaceNet (identical architecture) and as the joint
    two-heatmap variant via out_channels=2.
    """

    def __init__(self, in_channels=2, out_channels=1, seed=0, dtype=np.float32):
        super().__init__(seed, dtype)
        self.in_channels = in_channels
        self.out_channels = out_channels
        cin = in_channels
        for i in range(4):
            self._add_conv(f"enc{i}", cin, 32, 5)
            cin = 32
        self._add_conv("dec0", 32, 16, 5)
        self._add_conv("dec1", 16, out_channels, 3)

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        h = x
        strides = (2, 2, 2, 1)
        for i in range(4):
            h = ops.relu(self.conv(f"enc{i}", h, stride=strides[i], pad=2))
        # 25x25 -> upsample 40x40 -> conv s2 -> 20x20 -> upsample (same) -> conv
        h = ops.bilinear_resize(h, (40, 40))
        h = ops.relu(self.conv("dec0", h, stride=2, pad=2))
        h = ops.bilinear_resize(h, (20, 20))
        h = self.conv("dec1", h, stride=1, pad=1)
        return ops.sigmoid(h)

    def manifest_kwargs(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels}


_ARCHS = {FLOW_ARCH: FlowNetLite, PICK_ARCH: PickNet}
_ARCH_IDS = {FlowNetLite: FLOW_ARCH, PickNet: PICK_ARCH}


def build_network(arch, seed=0, dtype=np.float32, **kwargs):
    if arch not in _ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")
    return _ARCHS[arch](seed=seed, dtype=dtype, **kwargs)


def save_checkpoint(net, path, step=0):
    """Manifest JSON + little-endian float32 blob, parameter order per manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(net.params.keys())
    manifest = {
        "architecture": _ARCH_IDS[type(net)],
        "seed": net.seed,
        "step": int(step),
        "kwargs": net.manifest_kwargs(),
        "params": [{"name": n, "shape": list(net.params[n].data.shape)} for n in names],
    }
    blob = b"".join(np.ascontiguousarray(net.params[n].data, dtype="<f4").tobytes() for n in names)
    with open(str(path) + ".json", "w") as f:
        json.dump(manifest, f, indent=1)
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path, dtype=np.float32):
    path = Path(path)
    with open(str(path) + ".json") as f:
        manifest = json.load(f)
    net = build_network(
        manifest["architecture"], seed=manifest["seed"], dtype=dtype, **manifest["kwargs"]
    )
    raw = open(path, "rb").read()
    offset = 0
    arrays = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        )
        offset += count * 4
    net.load_arrays(arrays)
    return net, manifest
