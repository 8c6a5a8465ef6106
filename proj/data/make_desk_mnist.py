#!/usr/bin/env python3
"""Produce a desk-scale handwritten-digit dataset in MNIST IDX layout.

Real MNIST is not bundled; this renders the scikit-learn digits data
(1797 real 8x8 handwritten digits) up to 28x28, augments the training
split with small shifts, and writes the four standard IDX files. If the
environment variable REIDKIT_MNIST_DIR names a directory that already
holds the real MNIST files, they are copied through unchanged instead.
"""
import os
import shutil
import struct
import sys

import numpy as np

IDX_NAMES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, images.shape[0], images.shape[1], images.shape[2]))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def upscale_28(img8):
    # 8x8 -> 24x24 by pixel tripling, then pad to 28x28
    big = np.kron(img8, np.ones((3, 3)))
    out = np.zeros((28, 28))
    out[2:26, 2:26] = big
    return out


def shifted(img, dy, dx):
    out = np.zeros_like(img)
    h, w = img.shape
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    yd = slice(max(0, -dy), min(h, h - dy))
    xd = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = img[yd, xd]
    return out


def jittered(img, rng):
    # per-image photometric variation, the desk-scale stand-in for
    # cross-camera gain/exposure differences
    gain = rng.uniform(0.6, 1.3)
    offset = rng.uniform(-0.1, 0.2)
    return np.clip(gain * img + offset, 0, 1)


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "desk_mnist"
    test_per_class = int(sys.argv[2]) if len(sys.argv) > 2 else 30
    augment = int(sys.argv[3]) if len(sys.argv) > 3 else 1
    os.makedirs(out_dir, exist_ok=True)

    real = os.environ.get("REIDKIT_MNIST_DIR", "")
    if real and all(os.path.exists(os.path.join(real, n)) for n in IDX_NAMES):
        for n in IDX_NAMES:
            shutil.copyfile(os.path.join(real, n), os.path.join(out_dir, n))
        print(f"copied real MNIST from {real}")
        return

    from sklearn.datasets import load_digits

    digits = load_digits()
    images = digits.images / 16.0  # 0..16 -> 0..1
    labels = digits.target
    rng = np.random.default_rng(20240901)

    train_imgs, train_labels, test_imgs, test_labels = [], [], [], []
    for cls in range(10):
        idx = np.where(labels == cls)[0]
        rng.shuffle(idx)
        test_idx, train_idx = idx[:test_per_class], idx[test_per_class:]
        for i in test_idx:
            test_imgs.append(jittered(upscale_28(images[i]), rng))
            test_labels.append(cls)
        for i in train_idx:
            base = upscale_28(images[i])
            train_imgs.append(jittered(base, rng))
            train_labels.append(cls)
            for _ in range(augment):
                dy, dx = rng.integers(-3, 4, size=2)
                noisy = shifted(base, int(dy), int(dx)) + rng.normal(0, 0.02, base.shape)
                train_imgs.append(jittered(np.clip(noisy, 0, 1), rng))
                train_labels.append(cls)

    order = rng.permutation(len(train_imgs))
    train = np.stack(train_imgs)[order] * 255.0
    train_y = np.asarray(train_labels)[order]
    test = np.stack(test_imgs) * 255.0
    test_y = np.asarray(test_labels)

    write_idx_images(os.path.join(out_dir, IDX_NAMES[0]), np.round(train))
    write_idx_labels(os.path.join(out_dir, IDX_NAMES[1]), train_y)
    write_idx_images(os.path.join(out_dir, IDX_NAMES[2]), np.round(test))
    write_idx_labels(os.path.join(out_dir, IDX_NAMES[3]), test_y)
    print(f"wrote {train.shape[0]} train / {test.shape[0]} test digit images to {out_dir}")


if __name__ == "__main__":
    main()
