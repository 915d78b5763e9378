#!/usr/bin/env python3
"""Convert a torchvision ResNet-34 state dict into the LEAFCKPT container.

Names are kept in torchvision form; pair the dump with the name map written
by --map-out (or NameMap::torchvision_resnet in the library) when importing.
`num_batches_tracked` counters are dropped.

    convert_torchvision.py --weights resnet34.pth --out resnet34.leafckpt
    convert_torchvision.py --random-seed 0 --out random.leafckpt \
        --parity-out parity/        # also writes an input batch and eval logits

Requires torch (and torchvision for --random-seed or --parity-out).
"""

import argparse
import hashlib
import struct
import sys
from pathlib import Path

MAGIC = b"LEAFCKPT"
VERSION = 1
DTYPE_F32 = 0
BLOCKS = [3, 4, 6, 3]


def encode(entries):
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(entries))
    for name, shape, values in entries:
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<BI", DTYPE_F32, len(shape))
        out += b"".join(struct.pack("<Q", d) for d in shape)
        out += values.astype("<f4").tobytes()
    out += hashlib.sha256(out).digest()[:8]
    return bytes(out)


def name_map():
    lines = ["conv1.weight conv1.weight"]

    def bn(ext, internal):
        for leaf in ("weight", "bias", "running_mean", "running_var"):
            lines.append(f"{ext}.{leaf} {internal}.{leaf}")

    bn("bn1", "bn1")
    for s, count in enumerate(BLOCKS, start=1):
        for b in range(count):
            ext, internal = f"layer{s}.{b}", f"stage{s}.block{b}"
            for k in (1, 2):
                lines.append(f"{ext}.conv{k}.weight {internal}.conv{k}.weight")
                bn(f"{ext}.bn{k}", f"{internal}.bn{k}")
            if s > 1 and b == 0:
                lines.append(f"{ext}.downsample.0.weight {internal}.downsample.conv.weight")
                bn(f"{ext}.downsample.1", f"{internal}.downsample.bn")
    lines += ["fc.weight head.weight", "fc.bias head.bias"]
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights", type=Path, help="torch.save'd state dict")
    src.add_argument("--random-seed", type=int, help="randomly initialised torchvision model")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--map-out", type=Path)
    ap.add_argument("--parity-out", type=Path, help="directory for input.f32, logits.f32 and shape.txt")
    args = ap.parse_args()

    import torch

    model = None
    if args.weights:
        state = torch.load(args.weights, map_location="cpu")
        if "state_dict" in state:
            state = state["state_dict"]
    else:
        import torchvision

        torch.manual_seed(args.random_seed)
        model = torchvision.models.resnet34()
        # non-trivial running statistics so eval-mode parity means something
        with torch.no_grad():
            for m in model.modules():
                if isinstance(m, torch.nn.BatchNorm2d):
                    m.running_mean.uniform_(-0.1, 0.1)
                    m.running_var.uniform_(0.5, 1.5)
                    m.weight.uniform_(0.5, 1.5)
                    m.bias.uniform_(-0.1, 0.1)
        state = model.state_dict()

    entries = [
        (k, tuple(v.shape), v.detach().cpu().float().numpy().ravel())
        for k, v in state.items()
        if not k.endswith("num_batches_tracked")
    ]
    args.out.write_bytes(encode(entries))
    print(f"wrote {len(entries)} tensors to {args.out}", file=sys.stderr)
    if args.map_out:
        args.map_out.write_text(name_map())

    if args.parity_out:
        import torchvision

        if model is None:
            model = torchvision.models.resnet34(num_classes=state["fc.weight"].shape[0])
            model.load_state_dict(state)
        model.eval()
        torch.manual_seed(1)
        x = torch.rand(2, 3, 224, 224)
        with torch.no_grad():
            logits = model(x)
        args.parity_out.mkdir(parents=True, exist_ok=True)
        (args.parity_out / "input.f32").write_bytes(x.numpy().astype("<f4").tobytes())
        (args.parity_out / "logits.f32").write_bytes(logits.numpy().astype("<f4").tobytes())
        (args.parity_out / "shape.txt").write_text(f"{x.shape[0]} {logits.shape[1]}\n")


if __name__ == "__main__":
    main()
