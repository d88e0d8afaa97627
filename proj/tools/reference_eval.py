#!/usr/bin/env python3
"""Reference bicubic-baseline evaluation, written independently of the C++ code.

For every HR image in a manifest: modcrop to the scale, downscale with a
MATLAB-style antialiased bicubic (built as a dense matrix), round to 8 bits,
upscale back the same way, then Y-channel PSNR/SSIM with crop = scale.

usage: reference_eval.py MANIFEST [OUT_JSON]
"""
import json
import math
import os
import sys

import numpy as np
from PIL import Image
from scipy.signal import convolve2d


def cubic(x):
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    return ((1.5 * ax3 - 2.5 * ax2 + 1) * (ax <= 1) +
            (-0.5 * ax3 + 2.5 * ax2 - 4 * ax + 2) * ((ax > 1) & (ax <= 2)))


def resize_matrix(n_in, n_out, scale):
    width = 4.0 / scale if scale < 1 else 4.0
    u = np.arange(1, n_out + 1) / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    wts = scale * cubic(scale * dist) if scale < 1 else cubic(dist)
    wts = wts / wts.sum(axis=1, keepdims=True)
    # symmetric padding of 1-based indices back into range
    period = np.concatenate([np.arange(n_in), np.arange(n_in)[::-1]])
    cols = period[np.mod(idx.astype(int) - 1, 2 * n_in)]
    m = np.zeros((n_out, n_in))
    for r in range(n_out):
        np.add.at(m[r], cols[r], wts[r])
    return m


def imresize(img, scale):
    h, w, _ = img.shape
    oh, ow = int(round(h * scale)), int(round(w * scale))
    mh, mw = resize_matrix(h, oh, scale), resize_matrix(w, ow, scale)
    out = np.einsum("ij,jkc->ikc", mh, img)
    out = np.einsum("kj,ijc->ikc", mw, out)
    return np.clip(out, 0, 1)


def to_y(img):
    return 65.481 * img[..., 0] + 128.553 * img[..., 1] + 24.966 * img[..., 2] + 16.0


def psnr(a, b):
    mse = np.mean((a - b) ** 2)
    return float("inf") if mse == 0 else 10 * math.log10(255.0 ** 2 / mse)


def ssim(a, b):
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    r = np.arange(11) - 5
    g = np.exp(-(r ** 2) / (2 * 1.5 ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    f = lambda z: convolve2d(z, win, mode="valid")
    mu1, mu2 = f(a), f(b)
    s1, s2, s12 = f(a * a) - mu1 ** 2, f(b * b) - mu2 ** 2, f(a * b) - mu1 * mu2
    m = ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / ((mu1 ** 2 + mu2 ** 2 + c1) * (s1 + s2 + c2))
    return float(m.mean())


def load(path):
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return arr / 255.0


def main(manifest_path, out_path=None):
    with open(manifest_path) as f:
        man = json.load(f)
    s = man["scale"]
    root = os.path.dirname(os.path.abspath(manifest_path))
    rows = []
    for e in man["entries"]:
        hr = load(os.path.join(root, e["hr"]))
        hr = hr[: hr.shape[0] - hr.shape[0] % s, : hr.shape[1] - hr.shape[1] % s]
        lr = np.floor(imresize(hr, 1.0 / s) * 255 + 0.5) / 255
        sr = imresize(lr, float(s))
        ya, yb = to_y(sr)[s:-s, s:-s], to_y(hr)[s:-s, s:-s]
        rows.append({"name": os.path.splitext(os.path.basename(e["hr"]))[0], "psnr_db": psnr(ya, yb), "ssim": ssim(ya, yb)})
    out = {"scale": s, "crop": s, "images": rows,
           "mean": {"psnr_db": float(np.mean([r["psnr_db"] for r in rows])),
                    "ssim": float(np.mean([r["ssim"] for r in rows]))}}
    text = json.dumps(out, indent=2) + "\n"
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main(*sys.argv[1:])
