"""Versioned binary checkpoint container.

Layout:
    b"MTLAB1\\n"
    one "key=value\\n" line per header entry (UTF-8)
    b"end\\n"
    per array: "array <name> <ndim> <d0> <d1> ...\\n" + raw little-endian f64

Round-trips byte-exactly: values are stored as raw f64 and header values
as verbatim strings.
"""

import numpy as np

MAGIC = b"MTLAB1\n"


def save_checkpoint(path, header, arrays):
    with open(path, "wb") as f:
        f.write(MAGIC)
        for k, v in header.items():
            k, v = str(k), str(v)
            if "=" in k or "\n" in k or "\n" in v:
                raise ValueError(f"illegal header entry: {k!r}")
            f.write(f"{k}={v}\n".encode("utf-8"))
        f.write(b"end\n")
        for name, a in arrays.items():
            a = np.ascontiguousarray(a, dtype="<f8")
            dims = " ".join(str(d) for d in a.shape)
            f.write(f"array {name} {a.ndim} {dims}".rstrip().encode("utf-8") + b"\n")
            f.write(a.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a MTLAB1 checkpoint")
        header = {}
        while True:
            line = _read_line(f)
            if line == "end":
                break
            k, _, v = line.partition("=")
            header[k] = v
        arrays = {}
        while True:
            try:
                line = _read_line(f)
            except EOFError:
                break
            parts = line.split(" ")
            if parts[0] != "array":
                raise ValueError(f"corrupt checkpoint near {line!r}")
            name, ndim = parts[1], int(parts[2])
            shape = tuple(int(d) for d in parts[3:3 + ndim])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"truncated array {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header, arrays


def _read_line(f):
    chars = bytearray()
    while True:
        c = f.read(1)
        if not c:
            if chars:
                raise ValueError("truncated checkpoint line")
            raise EOFError
        if c == b"\n":
            return chars.decode("utf-8")
        chars.extend(c)
