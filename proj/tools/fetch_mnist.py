#!/usr/bin/env python3
"""Fetch MNIST into a local directory as IDX files.

Two sources:

  standard  the four official gzip files from a public mirror, checked
            against their known sizes.
  npm       the 10,000 digits bundled with the `mnist` npm package
            (cazala/mnist), re-encoded as
            train-images-idx3-ubyte.gz / train-labels-idx1-ubyte.gz.
            Useful where only a package registry is reachable.

The default tries `standard` and falls back to `npm`.
"""

import argparse
import gzip
import json
import shutil
import struct
import subprocess
import sys
import tarfile
import tempfile
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]

FILES = {
    "train-images-idx3-ubyte.gz": 9912422,
    "train-labels-idx1-ubyte.gz": 28881,
    "t10k-images-idx3-ubyte.gz": 1648877,
    "t10k-labels-idx1-ubyte.gz": 4542,
}

NPM_PACKAGE = "mnist@1.1.0"


def fetch_standard(out: Path) -> None:
    for name, size in FILES.items():
        target = out / name
        if target.exists() and target.stat().st_size == size:
            continue
        last_error = None
        for mirror in MIRRORS:
            try:
                with urllib.request.urlopen(mirror + name, timeout=30) as resp:
                    payload = resp.read()
            except OSError as exc:
                last_error = exc
                continue
            if len(payload) != size:
                last_error = RuntimeError(f"{name}: got {len(payload)} bytes, expected {size}")
                continue
            target.write_bytes(payload)
            break
        else:
            raise RuntimeError(f"could not download {name}: {last_error}")


def idx_images(pixels: bytes, count: int) -> bytes:
    return struct.pack(">IIII", 0x00000803, count, 28, 28) + pixels


def idx_labels(labels: bytes) -> bytes:
    return struct.pack(">II", 0x00000801, len(labels)) + labels


def fetch_npm(out: Path) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", NPM_PACKAGE, "--silent"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        archive = next(Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(archive) as tar:
            tar.extractall(tmp)
        digits = []
        for d in range(10):
            raw = json.loads((Path(tmp) / "package/src/digits" / f"{d}.json").read_text())["data"]
            n = len(raw) // 784
            digits.append([raw[i * 784:(i + 1) * 784] for i in range(n)])

    # Round-robin over classes so the file is not sorted by label.
    pixels = bytearray()
    labels = bytearray()
    cursor = [0] * 10
    remaining = sum(len(d) for d in digits)
    while remaining:
        for d in range(10):
            if cursor[d] < len(digits[d]):
                img = digits[d][cursor[d]]
                pixels.extend(max(0, min(255, round(v * 255))) for v in img)
                labels.append(d)
                cursor[d] += 1
                remaining -= 1
    count = len(labels)
    # mtime=0 keeps the archives byte-identical across runs.
    with gzip.GzipFile(out / "train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(idx_images(bytes(pixels), count))
    with gzip.GzipFile(out / "train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(idx_labels(bytes(labels)))
    print(f"wrote {count} samples from npm package {NPM_PACKAGE}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="data/mnist", help="target directory (default: data/mnist)")
    ap.add_argument("--source", choices=["auto", "standard", "npm"], default="auto")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.source in ("auto", "standard"):
        try:
            fetch_standard(out)
            print(f"MNIST ready in {out}")
            return 0
        except RuntimeError as exc:
            if args.source == "standard":
                print(f"error: {exc}", file=sys.stderr)
                return 3
            print(f"standard mirrors unavailable ({exc}); falling back to npm", file=sys.stderr)
            for name in FILES:
                (out / name).unlink(missing_ok=True)
    if shutil.which("npm") is None:
        print("error: npm not found; cannot use the npm source", file=sys.stderr)
        return 3
    fetch_npm(out)
    print(f"MNIST subset ready in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
