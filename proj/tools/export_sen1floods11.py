#!/usr/bin/env python3
"""Convert the Sen1Floods11 hand-labelled GeoTIFF chips to .npy arrays.

The output directory is what `floodpix import --source` reads:

    <out>/S1/<id>_S1Hand.npy        float32 (2, H, W)  VV, VH in dB
    <out>/S2/<id>_S2Hand.npy        float32 (13, H, W) reflectance x 10000
    <out>/Label/<id>_LabelHand.npy  int8    (H, W)     -1 / 0 / 1
    <out>/flood_*_data.csv          split lists, copied unchanged

Reading GeoTIFFs needs rasterio or tifffile (pip install rasterio).
"""

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

SPLIT_FILES = (
    "flood_train_data.csv",
    "flood_valid_data.csv",
    "flood_test_data.csv",
    "flood_bolivia_data.csv",
)
KINDS = (("S1Hand", "S1", np.float32), ("S2Hand", "S2", np.float32), ("LabelHand", "Label", np.int8))


def read_tif(path):
    try:
        import rasterio

        with rasterio.open(path) as src:
            return src.read()
    except ImportError:
        pass
    try:
        import tifffile
    except ImportError:
        sys.exit("need rasterio or tifffile to read GeoTIFFs")
    arr = tifffile.imread(path)
    if arr.ndim == 3 and arr.shape[-1] < arr.shape[0]:
        arr = np.moveaxis(arr, -1, 0)  # tifffile yields (H, W, bands)
    return arr


def chip_ids(csv_path):
    ids = []
    for line in csv_path.read_text().splitlines():
        cell = line.split(",")[0].strip()
        if cell:
            ids.append(cell.replace(".tif", "").replace("_S1Hand", ""))
    return ids


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--hand-labeled", required=True, type=Path,
                    help="directory with S1Hand/, S2Hand/ and LabelHand/")
    ap.add_argument("--splits", required=True, type=Path, help="directory with flood_*_data.csv")
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--overwrite", action="store_true")
    args = ap.parse_args()

    ids = set()
    for name in SPLIT_FILES:
        csv = args.splits / name
        if not csv.exists():
            print(f"warning: {csv} not found, split skipped", file=sys.stderr)
            continue
        args.out.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(csv, args.out / name)
        ids.update(chip_ids(csv))
    if not ids:
        sys.exit("no chips listed")

    for kind, sub, dtype in KINDS:
        (args.out / sub).mkdir(parents=True, exist_ok=True)

    for n, chip in enumerate(sorted(ids), 1):
        for kind, sub, dtype in KINDS:
            dst = args.out / sub / f"{chip}_{kind}.npy"
            if dst.exists() and not args.overwrite:
                continue
            arr = read_tif(args.hand_labeled / kind / f"{chip}_{kind}.tif")
            if kind == "LabelHand":
                arr = arr.reshape(arr.shape[-2:])
            np.save(dst, arr.astype(dtype))
        if n % 50 == 0:
            print(f"{n}/{len(ids)} chips")
    print(f"exported {len(ids)} chips to {args.out}")


if __name__ == "__main__":
    main()
