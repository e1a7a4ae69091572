#!/usr/bin/env python3
"""Convert Berkeley segmentation data to the layout ``tpseg eval`` reads.

Output::

    OUT/images/<id>.ppm
    OUT/truths/<id>_<k>.labels

BSDS300: pass the dataset root; images come from ``images/<split>/*.jpg``
and truths from ``human/color/*/<id>.seg``.  BSDS500: pass
``BSR/BSDS500/data``; truths come from ``groundTruth/<split>/<id>.mat``.

Needs Pillow for JPEG decoding and scipy for ``.mat`` files; neither is
a runtime dependency of the package.

Example::

    python scripts/convert_bsds.py BSDS300 bsds300 --split test
    TPSEG_BSDS300=bsds300 pytest tests/test_acceptance.py -k bsds
"""
from __future__ import annotations

import argparse
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
from PIL import Image

from tpseg.image import ImageBuffer, LabelMap, save_labels, save_ppm
from tpseg.metrics import read_bsds_seg


def _dense(labels: np.ndarray) -> LabelMap:
    _, inv = np.unique(labels, return_inverse=True)
    inv = inv.reshape(labels.shape) + 1
    return LabelMap(inv, int(inv.max()))


def mat_truths(path: Path) -> list[LabelMap]:
    from scipy.io import loadmat

    gt = loadmat(path)["groundTruth"]
    return [_dense(np.asarray(gt[0, k]["Segmentation"][0, 0])) for k in range(gt.shape[1])]


def convert(root: Path, out: Path, split: str) -> int:
    img_dir = root / "images" / split
    if not img_dir.is_dir():
        raise SystemExit(f"no image directory {img_dir}")
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "truths").mkdir(parents=True, exist_ok=True)

    seg_files = defaultdict(list)
    for p in sorted((root / "human").glob("color/*/*.seg")):
        seg_files[p.stem].append(p)

    written = 0
    for jpg in sorted(img_dir.glob("*.jpg")):
        image_id = jpg.stem
        rgb = np.asarray(Image.open(jpg).convert("RGB"))
        mat = root / "groundTruth" / split / f"{image_id}.mat"
        if mat.exists():
            truths = mat_truths(mat)
        else:
            truths = [read_bsds_seg(p) for p in seg_files.get(image_id, [])]
        if not truths:
            print(f"warning: no ground truth for {image_id}", file=sys.stderr)
            continue
        save_ppm(ImageBuffer(rgb), out / "images" / f"{image_id}.ppm")
        for k, t in enumerate(truths, 1):
            if t.shape != rgb.shape[:2]:
                raise SystemExit(f"{image_id}: truth {k} is {t.shape}, image {rgb.shape[:2]}")
            save_labels(t, out / "truths" / f"{image_id}_{k}.labels")
        written += 1
    print(f"converted {written} images into {out}")
    return 0 if written else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("root", type=Path, help="BSDS300 root or BSDS500 data directory")
    ap.add_argument("out", type=Path)
    ap.add_argument("--split", default="test")
    args = ap.parse_args(argv)
    return convert(args.root, args.out, args.split)


if __name__ == "__main__":
    sys.exit(main())
