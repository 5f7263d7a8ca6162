"""Convert an external image collection into PGMs the harness can read.

Usage::

    python demos/fetch_external_corpus.py SRC_DIR_OR_URL OUT_DIR [--size 256]

SRC may be a local directory of images or a URL to a single image.  Images
are converted to 8-bit grayscale, center-cropped to a square and resized, then
written as binary PGM next to a ready-to-run ``static.ini``.  Reading JPEG/PNG
needs Pillow, which is not a package dependency.  Datasets are not
redistributed; point this at your own copy (for example an extracted
BSDS500 test split).
"""
import argparse
import os
import sys
import urllib.request

import numpy as np

from photoninhibit import io

EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def to_gray_square(path, size):
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("L")
        s = min(im.size)
        left, top = (im.width - s) // 2, (im.height - s) // 2
        im = im.crop((left, top, left + s, top + s)).resize((size, size), Image.LANCZOS)
        return np.asarray(im)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("out")
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args(argv)
    try:
        import PIL  # noqa: F401
    except ImportError:
        sys.exit("Pillow is required for this script: pip install Pillow")
    os.makedirs(args.out, exist_ok=True)
    if args.src.startswith(("http://", "https://")):
        local = os.path.join(args.out, os.path.basename(args.src.split("?")[0]) or "image")
        urllib.request.urlretrieve(args.src, local)
        sources = [local]
    else:
        sources = sorted(os.path.join(args.src, f) for f in os.listdir(args.src) if f.lower().endswith(EXTS))
    written = []
    for src in sources:
        name = os.path.splitext(os.path.basename(src))[0] + ".pgm"
        io.write_pgm(os.path.join(args.out, name), to_gray_square(src, args.size), 255)
        written.append(name)
    with open(os.path.join(args.out, "static.ini"), "w") as fh:
        fh.write("[run]\nexperiment = static\n")
        fh.write(f"images = {', '.join(written)}\n")
        fh.write("gamma_decompress = yes\nlevels = 0.1, 1, 10\nframes = 1000\narms = none, P_cr, P_cr'\n")
    print(f"wrote {len(written)} images and static.ini to {args.out}")
    print(f"run: photoninhibit static --config {os.path.join(args.out, 'static.ini')} --out results/")


if __name__ == "__main__":
    main()
