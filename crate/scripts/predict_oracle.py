#!/usr/bin/env python3
"""Reference `leafnet predict` output computed with PyTorch.

Reads a LEAFCKPT checkpoint of a compact network (3x3 stride-1 stem, no max
pool, one basic block per stage), rebuilds it with torch.nn layers, loads the
image with PIL, resizes with half-pixel bilinear sampling, normalizes with the
ImageNet channel statistics and prints `path,class,p0,p1,p2,p3` per image.

    predict_oracle.py CKPT RESOLUTION IMAGE [IMAGE ...] > golden.txt
"""
import hashlib
import struct
import sys

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image

CLASSES = ["healthy", "multiple_diseases", "rust", "scab"]
MEAN = [0.485, 0.456, 0.406]
STD = [0.229, 0.224, 0.225]


def read_ckpt(path):
    raw = open(path, "rb").read()
    body, tail = raw[:-8], raw[-8:]
    assert hashlib.sha256(body).digest()[:8] == tail, "checksum mismatch"
    assert body[:8] == b"LEAFCKPT"
    version, count = struct.unpack_from("<II", body, 8)
    assert version == 1
    off, out = 16, {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", body, off)
        off += 4
        name = body[off : off + n].decode()
        off += n
        dtype, rank = struct.unpack_from("<BI", body, off)
        assert dtype == 0
        off += 5
        shape = struct.unpack_from(f"<{rank}Q", body, off)
        off += 8 * rank
        size = int(np.prod(shape)) if rank else 1
        out[name] = torch.from_numpy(np.frombuffer(body, "<f4", size, off).copy().reshape(shape))
        off += 4 * size
    return out


class Block(nn.Module):
    def __init__(self, cin, cout, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.downsample = None
        if stride != 1 or cin != cout:
            self.downsample = nn.Sequential()
            self.downsample.add_module("conv", nn.Conv2d(cin, cout, 1, stride, bias=False))
            self.downsample.add_module("bn", nn.BatchNorm2d(cout))

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        s = x if self.downsample is None else self.downsample(x)
        return F.relu(h + s)


class Compact(nn.Module):
    def __init__(self, widths, classes):
        super().__init__()
        self.conv1 = nn.Conv2d(3, widths[0], 3, 1, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(widths[0])
        cin = widths[0]
        for s, w in enumerate(widths):
            stage = Block(cin, w, 2 if s > 0 else 1)
            self.add_module(f"stage{s + 1}", nn.ModuleDict({"block0": stage}))
            cin = w
        self.nstages = len(widths)
        self.head = nn.Linear(cin, classes)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        for s in range(self.nstages):
            x = getattr(self, f"stage{s + 1}")["block0"](x)
        return self.head(x.mean(dim=(2, 3)))


def load(path, res):
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    t = torch.from_numpy(img).permute(2, 0, 1)[None]
    if t.shape[-2:] != (res, res):
        t = F.interpolate(t, size=(res, res), mode="bilinear", align_corners=False)
    return (t - torch.tensor(MEAN)[:, None, None]) / torch.tensor(STD)[:, None, None]


def main():
    ckpt, res, images = sys.argv[1], int(sys.argv[2]), sys.argv[3:]
    state = read_ckpt(ckpt)
    widths = [state[f"stage{s}.block0.conv2.weight"].shape[0] for s in (1, 2, 3)]
    model = Compact(widths, state["head.weight"].shape[0])
    missing = model.load_state_dict(state, strict=False)
    assert not missing.unexpected_keys, missing.unexpected_keys
    assert all(k.endswith("num_batches_tracked") for k in missing.missing_keys), missing.missing_keys
    model.eval()
    with torch.no_grad():
        for path in images:
            p = F.softmax(model(load(path, res)).double(), dim=1)[0].tolist()
            k = max(range(len(p)), key=lambda i: (p[i], -i))
            print(",".join([path, CLASSES[k]] + [f"{v:.6f}" for v in p]))


if __name__ == "__main__":
    main()
