#!/usr/bin/env python3
"""Convert torch models to the .ftc container, and train the LeNet-style test fixture.

Container layout (little-endian):
    b"FTCLIP01" | u32 manifest length | JSON manifest | u32 words per tensor ... | u32 CRC32(payload)

Two entry points:

    # train the fixture on synthetic blobs written by `ftclip synth`, then export it
    export_fixture.py fixture --ftclip build/tools/ftclip --out tests/fixtures/lenet-fixture.ftc

    # convert a saved nn.Sequential (torch.save(model)) built from Conv2d / ReLU / MaxPool2d /
    # Flatten / Linear layers
    export_fixture.py convert --checkpoint model.pt --input-shape 3,32,32 --classes 10 --out model.ftc \
        [--mean 0.49,0.48,0.45 --std 0.25,0.24,0.26]
"""

import argparse
import json
import os
import struct
import subprocess
import sys
import tempfile
import zlib

import numpy as np
import torch
import torch.nn as nn

MAGIC = b"FTCLIP01"


def _pair(v):
    return [int(v[0]), int(v[1])] if isinstance(v, (tuple, list)) else [int(v), int(v)]


def sequential_to_ftc(model, input_shape, classes, name, normalization=None):
    """Returns .ftc bytes for an nn.Sequential. Weights are stored as float32 words."""
    layers, payload = [], []
    counts = {}

    def layer_name(kind):
        counts[kind] = counts.get(kind, 0) + 1
        return f"{kind}{counts[kind]}"

    def add_tensor(t):
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        payload.append(arr.tobytes(order="C"))
        return {"shape": list(arr.shape), "words": int(arr.size)}

    for m in model:
        if isinstance(m, nn.Conv2d):
            if m.groups != 1 or _pair(m.dilation) != [1, 1]:
                raise ValueError("grouped or dilated convolutions are not supported")
            entry = {
                "name": layer_name("conv"),
                "kind": "conv2d",
                "in_channels": m.in_channels,
                "out_channels": m.out_channels,
                "kernel": _pair(m.kernel_size),
                "stride": _pair(m.stride),
                "padding": _pair(m.padding),
            }
            entry["weights"] = add_tensor(m.weight)
            entry["bias"] = add_tensor(m.bias if m.bias is not None else torch.zeros(m.out_channels))
            layers.append(entry)
        elif isinstance(m, nn.Linear):
            entry = {
                "name": layer_name("fc"),
                "kind": "fully_connected",
                "in_features": m.in_features,
                "out_features": m.out_features,
            }
            entry["weights"] = add_tensor(m.weight)
            entry["bias"] = add_tensor(m.bias if m.bias is not None else torch.zeros(m.out_features))
            layers.append(entry)
        elif isinstance(m, nn.ReLU):
            layers.append({"name": layer_name("relu"), "kind": "relu"})
        elif isinstance(m, nn.MaxPool2d):
            stride = m.stride if m.stride is not None else m.kernel_size
            if _pair(m.padding) != [0, 0]:
                raise ValueError("padded max-pooling is not supported")
            layers.append({"name": layer_name("pool"), "kind": "maxpool2d", "pool": _pair(m.kernel_size),
                           "stride": _pair(stride)})
        elif isinstance(m, nn.Flatten):
            layers.append({"name": layer_name("flatten"), "kind": "flatten"})
        elif isinstance(m, (nn.Dropout, nn.Identity)):
            continue
        else:
            raise ValueError(f"unsupported layer {type(m).__name__}")
    layers.append({"name": "output", "kind": "softmax_argmax"})

    manifest = {
        "format_version": 1,
        "name": name,
        "input_shape": list(input_shape),
        "classes": int(classes),
        "numeric_format": {"kind": "float32", "word_bits": 32},
        "layers": layers,
    }
    if normalization is not None:
        manifest["normalization"] = {"mean": list(normalization[0]), "std": list(normalization[1])}
    text = json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8")
    body = b"".join(payload)
    return MAGIC + struct.pack("<I", len(text)) + text + body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def read_records(path, shape):
    record = 1 + int(np.prod(shape))
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % record:
        raise ValueError(f"{path}: length is not a multiple of {record}")
    raw = raw.reshape(-1, record)
    labels = torch.from_numpy(raw[:, 0].astype(np.int64))
    images = torch.from_numpy(raw[:, 1:].astype(np.float32) / np.float32(255.0)).reshape(-1, *shape)
    return images, labels


def lenet(in_channels=1, classes=10):
    return nn.Sequential(
        nn.Conv2d(in_channels, 6, 5), nn.ReLU(), nn.MaxPool2d(2),
        nn.Conv2d(6, 16, 5), nn.ReLU(), nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(16 * 4 * 4, 120), nn.ReLU(),
        nn.Linear(120, classes),
    )


def train_fixture(args):
    torch.manual_seed(args.torch_seed)
    shape = (1, 28, 28)
    with tempfile.TemporaryDirectory() as tmp:
        train_path = os.path.join(tmp, "train.bin")
        subprocess.run([args.ftclip, "synth", "--seed", str(args.data_seed), "--count", str(args.count),
                        "--shape", "1,28,28", "--classes", "10", "--out", train_path], check=True)
        images, labels = read_records(train_path, shape)

    model = lenet()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    loss_fn = nn.CrossEntropyLoss()
    for epoch in range(args.epochs):
        perm = torch.randperm(images.shape[0])
        total = 0.0
        for i in range(0, images.shape[0], 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = loss_fn(model(images[idx]), labels[idx])
            loss.backward()
            opt.step()
            total += loss.item() * idx.numel()
        with torch.no_grad():
            acc = (model(images).argmax(1) == labels).float().mean().item()
        print(f"epoch {epoch}: loss {total / images.shape[0]:.4f} train acc {acc:.4f}")

    blob = sequential_to_ftc(model.eval(), shape, 10, "lenet-fixture")
    with open(args.out, "wb") as f:
        f.write(blob)
    print(f"wrote {args.out} ({len(blob)} bytes)")


def convert(args):
    model = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    if not isinstance(model, nn.Sequential):
        sys.exit("checkpoint must hold a torch.nn.Sequential")
    shape = tuple(int(v) for v in args.input_shape.split(","))
    norm = None
    if args.mean and args.std:
        norm = ([float(v) for v in args.mean.split(",")], [float(v) for v in args.std.split(",")])
    blob = sequential_to_ftc(model.eval(), shape, args.classes, args.name or os.path.basename(args.checkpoint), norm)
    with open(args.out, "wb") as f:
        f.write(blob)
    print(f"wrote {args.out} ({len(blob)} bytes)")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    fx = sub.add_parser("fixture", help="train and export the LeNet-style test fixture")
    fx.add_argument("--ftclip", required=True, help="path to the ftclip binary (used for `ftclip synth`)")
    fx.add_argument("--out", required=True)
    fx.add_argument("--data-seed", type=int, default=11)
    fx.add_argument("--count", type=int, default=4000)
    fx.add_argument("--epochs", type=int, default=6)
    fx.add_argument("--torch-seed", type=int, default=0)
    fx.set_defaults(fn=train_fixture)

    cv = sub.add_parser("convert", help="convert a saved nn.Sequential checkpoint")
    cv.add_argument("--checkpoint", required=True)
    cv.add_argument("--input-shape", required=True, help="C,H,W")
    cv.add_argument("--classes", type=int, required=True)
    cv.add_argument("--out", required=True)
    cv.add_argument("--name")
    cv.add_argument("--mean")
    cv.add_argument("--std")
    cv.set_defaults(fn=convert)

    args = ap.parse_args()
    args.fn(args)


if __name__ == "__main__":
    main()
