"""Download MNIST into ``<data_dir>/mnist`` and verify the checksums.

The raw IDX files are taken from a wheel on PyPI that bundles them, since
PyPI is often the only host reachable from restricted build machines. Any
directory holding the four standard files (plain or gzipped) works equally
well; nothing else in the package touches the network.
"""
import argparse
import hashlib
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

from stiefel_relu.data import default_data_dir

WHEEL_URL = ("https://pypi.org/packages/1f/a8/181fb894115c8efdb4f9412b301c6048bb105d55d68eeab5f"
             "680a53def5c/MNIST_dir-0.2-py3-none-any.whl")

MD5 = {
    "train-images.idx3-ubyte": "6bbc9ace898e44ae57da46a324031adb",
    "train-labels.idx1-ubyte": "a25bea736e30d166cdddb491f175f624",
    "t10k-images.idx3-ubyte": "2646ac647ad5339dbf082846283269ea",
    "t10k-labels.idx1-ubyte": "27ae3e4e09519cfbb04c329615203637",
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", type=Path, default=None)
    p.add_argument("--url", default=WHEEL_URL)
    args = p.parse_args(argv)
    out = (args.data_dir or default_data_dir()) / "mnist"
    out.mkdir(parents=True, exist_ok=True)

    with urllib.request.urlopen(args.url, timeout=120) as r:
        wheel = zipfile.ZipFile(io.BytesIO(r.read()))
    members = {Path(n).name: n for n in wheel.namelist()}
    for name, digest in MD5.items():
        if name not in members:
            sys.exit(f"{name} not found in {args.url}")
        raw = wheel.read(members[name])
        if hashlib.md5(raw).hexdigest() != digest:
            sys.exit(f"{name}: checksum mismatch")
        (out / name).write_bytes(raw)
        print(f"{out / name}  ok")


if __name__ == "__main__":
    main()
