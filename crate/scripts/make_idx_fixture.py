"""Writes the 4-sample, 2x3-pixel IDX fixture used by the dataset loader tests.

Pixel value of sample k at (r, c) is 10*k + 3*r + c, labels are 3, 1, 4, 1.
Usage: python3 scripts/make_idx_fixture.py crates/core/tests/fixtures/idx
"""

import struct
import sys
from pathlib import Path

out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/idx")
out.mkdir(parents=True, exist_ok=True)
pixels = bytes(10 * k + 3 * r + c for k in range(4) for r in range(2) for c in range(3))
(out / "tiny-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, 4, 2, 3) + pixels)
(out / "tiny-labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, 4) + bytes([3, 1, 4, 1]))
