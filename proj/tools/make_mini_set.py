#!/usr/bin/env python3
"""Writes the bundled procedural image set (no external sources).

data/mini/HR/*.png     six 48x48 / 60x60 / 72x72 images for evaluation
data/overfit/HR/*.png  one 32x32 image for the single-image overfit run
plus manifest JSON files next to each HR directory.
"""
import json
import os
import sys

import numpy as np
from PIL import Image


def grid(h, w):
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    return y / (h - 1), x / (w - 1)


def gradient_disc(h, w, rng):
    y, x = grid(h, w)
    img = np.stack([x, y, 1 - 0.5 * (x + y)], -1)
    for _ in range(3):
        cy, cx, r = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.25)
        mask = ((y - cy) ** 2 + (x - cx) ** 2) < r * r
        img[mask] = rng.uniform(0, 1, 3)
    return img


def waves(h, w, rng):
    y, x = grid(h, w)
    f = rng.uniform(3, 7, 3)
    return np.stack([0.5 + 0.5 * np.sin(2 * np.pi * (f[0] * x + 0.3 * y)),
                     0.5 + 0.5 * np.sin(2 * np.pi * f[1] * y),
                     0.5 + 0.5 * np.cos(2 * np.pi * f[2] * (x - y))], -1)


def checker(h, w, rng):
    y, x = grid(h, w)
    n = rng.integers(4, 8)
    c = ((np.floor(x * n) + np.floor(y * n)) % 2)[..., None]
    a, b = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    return c * a + (1 - c) * b


def blobs(h, w, rng):
    y, x = grid(h, w)
    img = np.zeros((h, w, 3))
    for _ in range(8):
        cy, cx, s = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.2)
        g = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * s * s))
        img += g[..., None] * rng.uniform(0, 1, 3)
    return img / img.max()


def rings(h, w, rng):
    y, x = grid(h, w)
    r = np.sqrt((y - 0.5) ** 2 + (x - 0.5) ** 2)
    f = rng.uniform(6, 10)
    base = 0.5 + 0.5 * np.cos(2 * np.pi * f * r)
    return np.stack([base, base * x, 1 - base * y], -1)


def shapes(h, w, rng):
    y, x = grid(h, w)
    img = np.ones((h, w, 3)) * rng.uniform(0.1, 0.3, 3)
    img[(x > 0.15) & (x < 0.55) & (y > 0.2) & (y < 0.7)] = rng.uniform(0.5, 1, 3)
    img[(y > 0.3) & (x - 0.45 > 0.8 * (1 - y)) & (x < 0.9)] = rng.uniform(0.3, 0.9, 3)
    return img


def overfit_image(h, w):
    y, x = grid(h, w)
    r = 0.55 + 0.35 * np.sin(2 * np.pi * (1.2 * x + 0.4 * y))
    g = 0.5 + 0.3 * np.cos(2 * np.pi * 1.5 * y) * np.sin(np.pi * x)
    b = 0.35 + 0.4 * np.exp(-((x - 0.6) ** 2 + (y - 0.4) ** 2) / 0.08)
    return np.stack([r, g, b], -1)


def save(path, img):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    q = np.floor(np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8)
    Image.fromarray(q, "RGB").save(path)


def write_manifest(root, names, scales):
    for s in scales:
        entries = [{"hr": f"HR/{n}"} for n in names]
        with open(os.path.join(root, f"manifest_x{s}.json"), "w") as f:
            json.dump({"scale": s, "entries": entries}, f, indent=2)
            f.write("\n")


def main(out_dir):
    rng = np.random.default_rng(20240611)
    makers = [(gradient_disc, 48), (waves, 60), (checker, 48), (blobs, 72), (rings, 60), (shapes, 48)]
    names = []
    for i, (fn, size) in enumerate(makers):
        name = f"{i + 1:02d}_{fn.__name__}.png"
        save(os.path.join(out_dir, "mini", "HR", name), fn(size, size, rng))
        names.append(name)
    write_manifest(os.path.join(out_dir, "mini"), names, [2, 3, 4])
    save(os.path.join(out_dir, "overfit", "HR", "smooth32.png"), overfit_image(32, 32))
    write_manifest(os.path.join(out_dir, "overfit"), ["smooth32.png"], [2])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data"))
