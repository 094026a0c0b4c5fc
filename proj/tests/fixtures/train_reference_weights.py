"""Trains the canonical U-Net on a `vseg make-dataset` directory and exports
VSEGW1 weights.

This is how tests/fixtures/reference_weights.vsegw1 was produced. It needs
torch, numpy and tifffile, none of which the C++ build depends on.

    echo '{"motion_rate": 80}' > scene.json
    vseg make-dataset --out data --scene scene.json --videos 100 --patches 10 --seed 1000 --no-videos
    python3 train_reference_weights.py --dataset data --out reference_weights.vsegw1
"""

import argparse
import json
import struct
import time
from pathlib import Path

import numpy as np
import tifffile
import torch
from torch import nn

FINGERPRINT = (
    "vseg-unet/1;input=2x64x64;widths=16,32,64;block=conv3x3+relu*2;down=maxpool2;"
    "up=nearest2;skip=concat(up,skip);head=conv1x1+sigmoid;layout=oihw"
)
WIDTHS = (16, 32, 64)
PATCH = 64


class Block(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)

    def forward(self, x):
        return torch.relu(self.conv2(torch.relu(self.conv1(x))))


class UNet(nn.Module):
    def __init__(self):
        super().__init__()
        w1, w2, w3 = WIDTHS
        self.enc1 = Block(2, w1)
        self.enc2 = Block(w1, w2)
        self.enc3 = Block(w2, w3)
        self.dec2 = Block(w3 + w2, w2)
        self.dec1 = Block(w2 + w1, w1)
        self.out = nn.Module()
        self.out.conv = nn.Conv2d(w1, 1, 1)

    def logits(self, x):
        e1 = self.enc1(x)
        e2 = self.enc2(nn.functional.max_pool2d(e1, 2))
        e3 = self.enc3(nn.functional.max_pool2d(e2, 2))
        up = nn.functional.interpolate(e3, scale_factor=2, mode="nearest")
        d2 = self.dec2(torch.cat([up, e2], 1))
        up = nn.functional.interpolate(d2, scale_factor=2, mode="nearest")
        d1 = self.dec1(torch.cat([up, e1], 1))
        return self.out.conv(d1)

    def forward(self, x):
        return torch.sigmoid(self.logits(x)).clamp(1e-7, 1 - 1e-7)


def export_vsegw1(model, path):
    names = []
    for prefix in ["enc1", "enc2", "enc3", "dec2", "dec1"]:
        for conv in ["conv1", "conv2"]:
            names.append(f"{prefix}.{conv}")
    names.append("out.conv")
    state = model.state_dict()
    blob = bytearray(b"VSEGW1\0\0")
    blob += struct.pack("<I", 2 * len(names))
    fp = FINGERPRINT.encode()
    blob += struct.pack("<I", len(fp)) + fp
    for name in names:
        for suffix, key in (("kernel", "weight"), ("bias", "bias")):
            t = state[f"{name}.{key}"].detach().cpu().numpy().astype("<f4")
            label = f"{name}.{suffix}".encode()
            blob += struct.pack("<I", len(label)) + label
            blob += struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
            blob += t.tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_dataset(root):
    manifest = json.loads((root / "manifest.json").read_text())
    cache = {}
    xs, ys, splits = [], [], []
    for e in manifest["entries"]:
        if e["video"] not in cache:
            d = root / e["video"]
            inputs = tifffile.imread(d / "inputs.tif").astype(np.float32)
            targets = tifffile.imread(d / "segmask.tif") > 0
            if targets.ndim == 2:
                targets = targets[None]
            cache[e["video"]] = (inputs.reshape(-1, 2, *inputs.shape[-2:]), targets)
        inputs, targets = cache[e["video"]]
        k, x, y = e["pair"], e["x"], e["y"]
        xs.append(inputs[k, :, y : y + PATCH, x : x + PATCH])
        ys.append(targets[k, y : y + PATCH, x : x + PATCH])
        splits.append(e["split"])
    if not xs:
        raise SystemExit("empty manifest")
    x = torch.from_numpy(np.stack(xs))
    y = torch.from_numpy(np.stack(ys)[:, None].astype(np.float32))
    val = torch.tensor([s == "val" for s in splits])
    return x, y, val


def evaluate(model, x, y, batch):
    model.eval()
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(x), batch):
            p = model(x[i : i + batch])
            total += nn.functional.binary_cross_entropy(p, y[i : i + batch], reduction="sum").item()
    return total / y.numel()


def write_parity(model, x, path, count=4):
    """Inputs and outputs of a few patches so the C++ engine can check parity."""
    model.eval()
    with torch.no_grad():
        out = model(x[:count])
    blob = struct.pack("<I", count)
    for i in range(count):
        blob += x[i].numpy().astype("<f4").tobytes() + out[i, 0].numpy().astype("<f4").tobytes()
    Path(path).write_bytes(blob)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", type=Path, default=None)
    ap.add_argument("--parity", type=Path, default=None)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    x, y, val = load_dataset(args.dataset)
    xt, yt, xv, yv = x[~val], y[~val], x[val], y[val]
    print(f"{len(xt)} train / {len(xv)} val patches, positive fraction {yt.mean().item():.4f}")

    model = UNet()
    print("parameters:", sum(p.numel() for p in model.parameters()))
    opt = torch.optim.RMSprop(model.parameters(), lr=args.lr)
    best = float("inf")
    log = ["epoch,train_bce,val_bce"]
    for epoch in range(1, args.epochs + 1):
        model.train()
        order = torch.randperm(len(xt))
        total, start = 0.0, time.time()
        for i in range(0, len(order), args.batch):
            idx = order[i : i + args.batch]
            xb = xt[idx]
            # Flips and transposes keep the summaries' statistics intact.
            if torch.rand(1).item() < 0.5:
                xb, yb = xb.flip(-1), yt[idx].flip(-1)
            else:
                yb = yt[idx]
            if torch.rand(1).item() < 0.5:
                xb, yb = xb.transpose(-1, -2), yb.transpose(-1, -2)
            loss = nn.functional.binary_cross_entropy(model(xb), yb)
            if not torch.isfinite(loss):
                raise SystemExit("non-finite loss")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        train = total / len(xt)
        v = evaluate(model, xv, yv, 64)
        log.append(f"{epoch},{train:.6f},{v:.6f}")
        print(f"epoch {epoch}: train {train:.4f} val {v:.4f} ({time.time() - start:.0f}s)", flush=True)
        if v < best:
            best = v
            export_vsegw1(model, args.out)
            if args.parity:
                write_parity(model, xv, args.parity)
    if args.log:
        args.log.write_text("\n".join(log) + "\n")


if __name__ == "__main__":
    main()
