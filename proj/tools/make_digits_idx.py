# Copyright 2026 The lossypir Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the scikit-learn 8x8 digits as IDX image files.

Stand-in for MNIST in the tests: same container, grayscale 0..255, with a
fixed train/test split.
"""

import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, images):
    count, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="tests/data")
    parser.add_argument("--test-count", type=int, default=297)
    args = parser.parse_args()
    images = load_digits().images  # values 0..16
    scaled = np.rint(images * 255.0 / 16.0)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split = len(scaled) - args.test_count
    write_idx(out / "digits-train-images.idx3-ubyte", scaled[:split])
    write_idx(out / "digits-test-images.idx3-ubyte", scaled[split:])


if __name__ == "__main__":
    main()
