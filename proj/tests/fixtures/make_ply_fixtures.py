#!/usr/bin/env python3
# Copyright 2026 The splatloc Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes PLY fixtures byte by byte, independently of the C++ writer."""

import random
import struct
import sys
from pathlib import Path

NAMES = (["x", "y", "z", "nx", "ny", "nz"]
         + [f"f_dc_{i}" for i in range(3)]
         + [f"f_rest_{i}" for i in range(45)]
         + ["opacity"]
         + [f"scale_{i}" for i in range(3)]
         + [f"rot_{i}" for i in range(4)])


def header(count, names, fmt="binary_little_endian"):
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {count}"]
    lines += [f"property float {n}" for n in names]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def row(values, names, endian="<"):
    return struct.pack(endian + "f" * len(names), *[values[n] for n in names])


def vertex(pos, opacity_logit, rng=None):
    v = {n: 0.0 for n in NAMES}
    v["x"], v["y"], v["z"] = pos
    v["opacity"] = opacity_logit
    v["rot_0"] = 1.0
    if rng is not None:
        for n in NAMES:
            if n not in ("x", "y", "z", "opacity"):
                v[n] = rng.uniform(-1.0, 1.0)
    return v


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    one = vertex((1.0, 2.0, 3.0), 2.1972)
    (out / "one_vertex.ply").write_bytes(header(1, NAMES) + row(one, NAMES))

    (out / "empty.ply").write_bytes(header(0, NAMES))

    names = [n for n in NAMES if n != "opacity"]
    (out / "missing_opacity.ply").write_bytes(header(1, names) + row(one, names))

    ascii_body = " ".join("0" for _ in NAMES) + "\n"
    (out / "ascii.ply").write_bytes(header(1, NAMES, "ascii") + ascii_body.encode())

    (out / "big_endian.ply").write_bytes(
        header(1, NAMES, "binary_big_endian") + row(one, NAMES, ">"))

    rng = random.Random(1234)
    many = [vertex((rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
                   rng.uniform(-4, 4), rng) for _ in range(37)]
    body = b"".join(row(v, NAMES) for v in many)
    (out / "random37.ply").write_bytes(header(37, NAMES) + body)
    (out / "random37.vertex.bin").write_bytes(body)

    (out / "truncated.ply").write_bytes(header(37, NAMES) + body[:-5])


if __name__ == "__main__":
    main(sys.argv[1])
