#!/usr/bin/env python3
"""Count ResNet parameters by walking the declared layer shapes.

Independent of the Rust implementation: it re-derives every weight shape from
the architecture definition (stem, [3,4,6,3] basic blocks at widths
[64,128,256,512], 1x1 projection shortcuts, linear head) and sums them.
When torchvision is importable the result is cross-checked against it.

Usage: shape_walk.py NUM_CLASSES [NUM_CLASSES ...]
"""
import sys


def conv(cin, cout, k):
    return cin * cout * k * k


def bn(c):
    return 2 * c  # gamma, beta (running stats are buffers, not parameters)


def resnet34_params(num_classes, blocks=(3, 4, 6, 3), widths=(64, 128, 256, 512)):
    total = conv(3, widths[0], 7) + bn(widths[0])
    cin = widths[0]
    for stage, (count, width) in enumerate(zip(blocks, widths)):
        for b in range(count):
            stride = 2 if stage > 0 and b == 0 else 1
            total += conv(cin, width, 3) + bn(width)
            total += conv(width, width, 3) + bn(width)
            if stride != 1 or cin != width:
                total += conv(cin, width, 1) + bn(width)
            cin = width
    total += cin * num_classes + num_classes
    return total


def main():
    for arg in sys.argv[1:] or ["4"]:
        n = int(arg)
        count = resnet34_params(n)
        try:
            import torchvision

            ref = sum(p.numel() for p in torchvision.models.resnet34(num_classes=n).parameters())
            assert ref == count, (ref, count)
        except ImportError:
            pass
        print(f"resnet34 num_classes={n} parameters={count}")


if __name__ == "__main__":
    main()
