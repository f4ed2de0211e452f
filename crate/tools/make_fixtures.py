#!/usr/bin/env python3
"""Build the committed MNIST fixtures used by the simulator's test suites.

Inputs: the per-digit JSON files shipped in the `mnist` npm package
(10,000 MNIST digits, pixels in [0, 1] rounded to three decimals).

Outputs (under --out, default fixtures/):
  mnist/test-images-idx3-ubyte   2,000 held-out images (IDX, raw)
  mnist/test-labels-idx1-ubyte
  mnist/train-images-idx3-ubyte.gz   remaining 8,000 images (IDX, gzip)
  mnist/train-labels-idx1-ubyte.gz
  original.slwa                  baseline CNN weights + JSON manifest

Usage:
  npm pack mnist && tar xzf mnist-*.tgz
  python3 tools/make_fixtures.py --digits package/src/digits
"""

import argparse
import gzip
import json
import os
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

TEST_COUNT = 2000
SPLIT_SEED = 20240607

LAYERS = [
    {"type": "conv2d", "name": "conv1", "in_ch": 1, "out_ch": 6, "kernel": 5,
     "stride": 1, "padding": 0, "bias": True},
    {"type": "relu"},
    {"type": "maxpool2d", "kernel": 2, "stride": 2},
    {"type": "conv2d", "name": "conv2", "in_ch": 6, "out_ch": 16, "kernel": 5,
     "stride": 1, "padding": 0, "bias": True},
    {"type": "relu"},
    {"type": "maxpool2d", "kernel": 2, "stride": 2},
    {"type": "flatten"},
    {"type": "fc", "name": "fc1", "in": 256, "out": 120, "bias": True},
    {"type": "relu"},
    {"type": "fc", "name": "fc2", "in": 120, "out": 82, "bias": True},
    {"type": "relu"},
    {"type": "fc", "name": "fc3", "in": 82, "out": 10, "bias": True},
]


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 6, 5)
        self.conv2 = nn.Conv2d(6, 16, 5)
        self.fc1 = nn.Linear(256, 120)
        self.fc2 = nn.Linear(120, 82)
        self.fc3 = nn.Linear(82, 10)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = x.flatten(1)
        x = F.relu(self.fc1(x))
        x = F.relu(self.fc2(x))
        return self.fc3(x)


def load_digits(path):
    images, labels = [], []
    for d in range(10):
        with open(os.path.join(path, f"{d}.json")) as f:
            data = np.asarray(json.load(f)["data"], dtype=np.float64)
        px = np.rint(data * 255.0).clip(0, 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(px)
        labels.append(np.full(len(px), d, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_idx_images(path, images, compress):
    header = struct.pack(">IIII", 0x00000803, len(images), 28, 28)
    blob = header + images.tobytes()
    opener = gzip.open if compress else open
    with opener(path, "wb") as f:
        f.write(blob)


def write_idx_labels(path, labels, compress):
    header = struct.pack(">II", 0x00000801, len(labels))
    blob = header + labels.tobytes()
    opener = gzip.open if compress else open
    with opener(path, "wb") as f:
        f.write(blob)


def write_slwa(path, manifest, tensors):
    text = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
    out = bytearray(b"SLWA")
    out += struct.pack("<H", 1)
    out += struct.pack("<I", len(text)) + text
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


def evaluate(net, x, y):
    net.eval()
    with torch.no_grad():
        pred = net(x).argmax(1)
    return (pred == y).float().mean().item()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", required=True)
    ap.add_argument("--out", default="fixtures")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=0.02)
    ap.add_argument("--momentum", type=float, default=0.9)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    images, labels = load_digits(args.digits)
    order = np.random.default_rng(SPLIT_SEED).permutation(len(images))
    images, labels = images[order], labels[order]
    test_x, test_y = images[:TEST_COUNT], labels[:TEST_COUNT]
    train_x, train_y = images[TEST_COUNT:], labels[TEST_COUNT:]

    mnist_dir = os.path.join(args.out, "mnist")
    os.makedirs(mnist_dir, exist_ok=True)
    write_idx_images(os.path.join(mnist_dir, "test-images-idx3-ubyte"), test_x, False)
    write_idx_labels(os.path.join(mnist_dir, "test-labels-idx1-ubyte"), test_y, False)
    write_idx_images(os.path.join(mnist_dir, "train-images-idx3-ubyte.gz"), train_x, True)
    write_idx_labels(os.path.join(mnist_dir, "train-labels-idx1-ubyte.gz"), train_y, True)

    torch.manual_seed(args.seed)
    torch.use_deterministic_algorithms(True)
    to_t = lambda a: torch.from_numpy(a.astype(np.float32) / 255.0).unsqueeze(1)
    xtr, ytr = to_t(train_x), torch.from_numpy(train_y.astype(np.int64))
    xte, yte = to_t(test_x), torch.from_numpy(test_y.astype(np.int64))

    net = Net()
    opt = torch.optim.SGD(net.parameters(), lr=args.lr, momentum=args.momentum)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=args.epochs)
    gen = torch.Generator().manual_seed(args.seed)
    for epoch in range(args.epochs):
        net.train()
        perm = torch.randperm(len(xtr), generator=gen)
        for i in range(0, len(xtr), args.batch):
            idx = perm[i:i + args.batch]
            opt.zero_grad()
            loss = F.cross_entropy(net(xtr[idx]), ytr[idx])
            loss.backward()
            opt.step()
        sched.step()
        print(f"epoch {epoch + 1}: loss {loss.item():.4f} test acc {evaluate(net, xte, yte):.4f}")

    acc = evaluate(net, xte, yte)
    tensors = [(k, v.detach().numpy()) for k, v in net.state_dict().items()]
    total = int(sum(v.size for _, v in tensors))
    manifest = {
        "name": "mnist-cnn",
        "dataset": "mnist",
        "variant": "original",
        "input_shape": [1, 28, 28],
        "num_classes": 10,
        "layers": LAYERS,
        "total_parameters": total,
        "test_accuracy": acc,
        "test_set": {"images": "mnist/test-images-idx3-ubyte",
                     "labels": "mnist/test-labels-idx1-ubyte",
                     "count": TEST_COUNT},
        "training": {"optimizer": "sgd", "lr": args.lr, "momentum": args.momentum,
                     "schedule": "cosine", "epochs": args.epochs, "batch": args.batch,
                     "seed": args.seed, "reg_lambda": 0.0, "noise_sigma": 0.0,
                     "train_count": int(len(train_x))},
    }
    write_slwa(os.path.join(args.out, "original.slwa"), manifest, tensors)
    print(f"wrote original.slwa: {total} parameters, test accuracy {acc:.4f}")


if __name__ == "__main__":
    main()
