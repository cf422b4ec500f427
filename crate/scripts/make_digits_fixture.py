"""Builds the digits MLP fixture used by the acceptance suite.

Writes MNIST-style IDX files for an augmented 8x8 digits dataset plus a
64-128-128-10 ReLU MLP trained with PyTorch, exported in the .snm model
format (manifest.json + little-endian f32 tensors.bin).

Usage: python3 scripts/make_digits_fixture.py crates/core/tests/fixtures/digits
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

SEED = 0


def augment(img, rng):
    out = ndimage.rotate(img, rng.uniform(-8.0, 8.0), reshape=False, order=1, mode="constant")
    out = ndimage.shift(out, rng.uniform(-0.6, 0.6, size=2), order=1, mode="constant")
    out = out + rng.normal(0.0, 0.5, size=out.shape)
    return np.clip(out, 0.0, 16.0)


def to_u8(imgs):
    return np.round(np.asarray(imgs) * (255.0 / 16.0)).astype(np.uint8)


def expand(images, labels, copies, rng):
    xs, ys = [], []
    for img, lab in zip(images, labels):
        xs.append(img)
        ys.append(lab)
        for _ in range(copies):
            xs.append(augment(img, rng))
            ys.append(lab)
    return to_u8(xs), np.asarray(ys, dtype=np.uint8)


def write_idx_images(path, imgs):
    n, h, w = imgs.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(imgs.tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())


def export_model(model, input_dim, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    layers, payload = [], bytearray()

    def push(t):
        arr = t.detach().cpu().numpy().astype("<f4")
        entry = {"byte_offset": len(payload), "shape": list(arr.shape)}
        payload.extend(arr.tobytes())
        return entry

    for m in model:
        if isinstance(m, torch.nn.Linear):
            layers.append({
                "kind": "dense",
                "in_features": m.in_features,
                "out_features": m.out_features,
                "weight": push(m.weight),
                "bias": push(m.bias),
            })
        elif isinstance(m, torch.nn.ReLU):
            layers.append({"kind": "relu"})
        else:
            raise ValueError(f"unsupported module {m}")
    manifest = {"format_version": 1, "dtype": "f32", "input_shape": [input_dim], "layers": layers}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out_dir / "tensors.bin").write_bytes(bytes(payload))


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/digits")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    torch.manual_seed(SEED)

    digits = load_digits()
    x_tr, x_te, y_tr, y_te = train_test_split(
        digits.images, digits.target, test_size=450, random_state=SEED, stratify=digits.target
    )
    train_x, train_y = expand(x_tr, y_tr, 4, rng)
    test_x, test_y = expand(x_te, y_te, 3, rng)

    write_idx_images(out / "train-images-idx3-ubyte", train_x)
    write_idx_labels(out / "train-labels-idx1-ubyte", train_y)
    write_idx_images(out / "test-images-idx3-ubyte", test_x)
    write_idx_labels(out / "test-labels-idx1-ubyte", test_y)

    scaled = train_x.astype(np.float64) / 255.0
    mean, std = float(scaled.mean()), float(scaled.std())
    (out / "dataset.json").write_text(json.dumps({"mean": mean, "std": std, "num_classes": 10}, indent=2) + "\n")

    def prep(x):
        return torch.tensor(((x.reshape(len(x), -1) / 255.0) - mean) / std, dtype=torch.float32)

    xt, yt = prep(train_x), torch.tensor(train_y, dtype=torch.long)
    xv, yv = prep(test_x), torch.tensor(test_y, dtype=torch.long)

    model = torch.nn.Sequential(
        torch.nn.Linear(64, 128), torch.nn.ReLU(),
        torch.nn.Linear(128, 128), torch.nn.ReLU(),
        torch.nn.Linear(128, 10),
    )
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    loss_fn = torch.nn.CrossEntropyLoss()
    for epoch in range(40):
        order = torch.randperm(len(xt))
        for i in range(0, len(xt), 64):
            idx = order[i:i + 64]
            opt.zero_grad()
            loss = loss_fn(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    with torch.no_grad():
        train_acc = (model(xt).argmax(1) == yt).float().mean().item()
        test_acc = (model(xv).argmax(1) == yv).float().mean().item()
    print(f"train={len(xt)} test={len(xv)} train_acc={train_acc:.4f} test_acc={test_acc:.4f}")
    export_model(model, 64, out / "mlp.snm")


if __name__ == "__main__":
    main()
