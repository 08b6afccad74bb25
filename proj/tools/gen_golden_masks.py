#!/usr/bin/env python3
"""Golden region masks for a label raster, computed from first principles.

Usage: gen_golden_masks.py LABELS.png OUT_DIR

Writes one little-endian float64 file per region (<region>.f64, row-major)
plus index.txt with the image size. The C++ test compares its masks to
these bitwise.
"""
import math
import os
import sys
from collections import deque

import numpy as np
from PIL import Image

MAPPING = {
    0: "background", 1: "skin", 2: "brows", 3: "brows", 4: "eyes", 5: "eyes",
    6: "eyeglasses", 7: "ears", 8: "ears", 9: "earrings", 10: "nose",
    11: "mouth", 12: "lips", 13: "lips", 14: "neck", 15: "necklace",
    16: "cloth", 17: "hair", 18: "hat",
}
KERNEL_H, KERNEL_W = 12, 7
ITERATIONS = 2
EYESHADOW_DECAY = 0.35
LIP_DECAY = 2.0


def cross_offsets(kh, kw):
    ay, ax = kh // 2, kw // 2
    offs = {(0, x - ax) for x in range(kw)}
    offs |= {(y - ay, 0) for y in range(kh)}
    return sorted(offs)


def dilate(pixels, offsets, h, w):
    out = set()
    for y, x in pixels:
        for dy, dx in offsets:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                out.add((yy, xx))
    return out


def bfs_distance(support, h, w):
    dist = [[-1] * w for _ in range(h)]
    q = deque()
    for y in range(h):
        for x in range(w):
            if (y, x) not in support:
                dist[y][x] = 0
                q.append((y, x))
    while q:
        y, x = q.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and dist[yy][xx] < 0:
                dist[yy][xx] = dist[y][x] + 1
                q.append((yy, xx))
    return dist


def smooth(support, rate, h, w):
    dist = bfs_distance(support, h, w)
    out = np.zeros((h, w), dtype="<f8")
    for y, x in support:
        d = dist[y][x]
        falloff = 0.0 if d < 0 else math.exp(-rate * d)
        out[y, x] = 1.0 * (1.0 - falloff)
    return out


def main():
    labels = np.array(Image.open(sys.argv[1]))
    out_dir = sys.argv[2]
    os.makedirs(out_dir, exist_ok=True)
    h, w = labels.shape
    region_of = np.vectorize(lambda v: MAPPING.get(int(v), "other"))(labels)
    names = sorted(set(MAPPING.values()) | {"other"})
    masks = {n: (region_of == n).astype("<f8") for n in names}

    eyes = {(int(y), int(x)) for y, x in zip(*np.nonzero(masks["eyes"]))}
    skin = masks["skin"]
    dy = -(KERNEL_H // 2)
    grown = eyes
    for _ in range(ITERATIONS):
        grown = dilate(grown, cross_offsets(KERNEL_H, KERNEL_W), h, w)
    shifted = {(y + dy, x) for y, x in grown if 0 <= y + dy < h}
    shadow = {p for p in shifted if p not in eyes and skin[p] != 0.0}
    masks["eyeshadow"] = smooth(shadow, EYESHADOW_DECAY, h, w)

    lips = {(int(y), int(x)) for y, x in zip(*np.nonzero(masks["lips"]))}
    masks["lips"] = smooth(lips, LIP_DECAY, h, w)

    with open(os.path.join(out_dir, "index.txt"), "w") as f:
        f.write(f"{h} {w}\n")
        for name in sorted(masks):
            f.write(name + "\n")
            masks[name].astype("<f8").tofile(os.path.join(out_dir, name + ".f64"))


if __name__ == "__main__":
    main()
