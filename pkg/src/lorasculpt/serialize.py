"""Plain-text containers for base weights and trained adapters.

Both files are line oriented. Floats are written with ``repr`` so a load
reproduces every bit; masks are written as rows of ``0``/``1`` characters.

Adapter container (``adapters.txt``)::

    lorasculpt-adapters 1
    layers <n>
    layer <idx>
    shape <p> <q> <r>
    scaling <gamma>
    density <s_A> <s_B>          # "none none" when unmasked
    B                            # p rows of r floats
    A                            # r rows of q floats
    mask_B | mask_B none         # p rows of r bits when present
    mask_A | mask_A none         # r rows of q bits when present
    delta | delta none           # p rows of q floats (post-processed delta)
    end

Base container (``base.txt``)::

    lorasculpt-base 1
    layers <n>
    layer <idx> <role> <activation 0|1>
    shape <p> <q>
    <p rows of q floats>
"""

from __future__ import annotations

import numpy as np

from .adapter import LoraAdapter
from .errors import ConfigError
from .model import Layer, ToyModel

ADAPTER_MAGIC = "lorasculpt-adapters 1"
BASE_MAGIC = "lorasculpt-base 1"


def _float_rows(m: np.ndarray) -> list[str]:
    return [" ".join(repr(float(v)) for v in row) for row in m]


def _bit_rows(m: np.ndarray) -> list[str]:
    return ["".join("1" if v else "0" for v in row) for row in m]


def _opt(x) -> str:
    return "none" if x is None else repr(float(x))


def dump_adapters(model: ToyModel) -> str:
    out = [ADAPTER_MAGIC, f"layers {len(model.layers)}"]
    for i, layer in enumerate(model.layers):
        ad = layer.adapter
        p, q = ad.shape
        out += [f"layer {i}", f"shape {p} {q} {ad.rank}", f"scaling {ad.scaling!r}",
                f"density {_opt(ad.density_A)} {_opt(ad.density_B)}"]
        out += ["B", *_float_rows(ad.B), "A", *_float_rows(ad.A)]
        for name, mask in (("mask_B", ad.mask_B), ("mask_A", ad.mask_A)):
            out += [f"{name} none"] if mask is None else [name, *_bit_rows(mask)]
        if layer.delta_override is None:
            out.append("delta none")
        else:
            out += ["delta", *_float_rows(layer.delta_override)]
        out.append("end")
    return "\n".join(out) + "\n"


def dump_base(model: ToyModel) -> str:
    out = [BASE_MAGIC, f"layers {len(model.layers)}"]
    for i, layer in enumerate(model.layers):
        p, q = layer.w0.shape
        out += [f"layer {i} {layer.role} {int(layer.activation)}", f"shape {p} {q}"]
        out += _float_rows(layer.w0)
    return "\n".join(out) + "\n"


class _Reader:
    def __init__(self, text: str, what: str):
        self.lines = text.splitlines()
        self.pos = 0
        self.what = what

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise ConfigError(f"truncated {self.what} file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def fields(self, key: str, n: int) -> list[str]:
        parts = self.next().split()
        if len(parts) != n + 1 or parts[0] != key:
            raise ConfigError(f"malformed {self.what} file near line {self.pos}: expected {key!r}")
        return parts[1:]

    def floats(self, rows: int, cols: int) -> np.ndarray:
        m = np.array([[float(v) for v in self.next().split()] for _ in range(rows)])
        if m.shape != (rows, cols):
            raise ConfigError(f"bad matrix block in {self.what} file near line {self.pos}")
        return m.reshape(rows, cols)

    def bits(self, rows: int, cols: int) -> np.ndarray:
        m = np.array([[1.0 if c == "1" else 0.0 for c in self.next()] for _ in range(rows)])
        if m.shape != (rows, cols):
            raise ConfigError(f"bad mask block in {self.what} file near line {self.pos}")
        return m.reshape(rows, cols)

    def optional(self, key: str) -> bool:
        line = self.next().split()
        if line == [key]:
            return True
        if line == [key, "none"]:
            return False
        raise ConfigError(f"malformed {self.what} file near line {self.pos}: expected {key!r}")


def _num(v: str) -> float | None:
    return None if v == "none" else float(v)


def load_base(text: str) -> ToyModel:
    """Base weights with fresh zero adapters of rank 1 (replace via ``load_adapters``)."""
    rd = _Reader(text, "base")
    if rd.next() != BASE_MAGIC:
        raise ConfigError("not a lorasculpt base file")
    n = int(rd.fields("layers", 1)[0])
    layers = []
    for i in range(n):
        idx, role, act = rd.fields("layer", 3)
        p, q = (int(v) for v in rd.fields("shape", 2))
        w0 = rd.floats(p, q)
        ad = LoraAdapter(np.zeros((p, 1)), np.zeros((1, q)))
        layers.append(Layer(w0, ad, role, act == "1"))
    return ToyModel(layers)


def load_adapters(text: str, model: ToyModel) -> ToyModel:
    """Attach the adapters stored in ``text`` to (a copy of) ``model``."""
    rd = _Reader(text, "adapter")
    if rd.next() != ADAPTER_MAGIC:
        raise ConfigError("not a lorasculpt adapter file")
    n = int(rd.fields("layers", 1)[0])
    if n != len(model.layers):
        raise ConfigError(f"adapter file has {n} layers, model has {len(model.layers)}")
    model = model.copy()
    for i, layer in enumerate(model.layers):
        rd.fields("layer", 1)
        p, q, r = (int(v) for v in rd.fields("shape", 3))
        scaling = float(rd.fields("scaling", 1)[0])
        s_a, s_b = (_num(v) for v in rd.fields("density", 2))
        rd.fields("B", 0)
        b = rd.floats(p, r)
        rd.fields("A", 0)
        a = rd.floats(r, q)
        mask_b = rd.bits(p, r) if rd.optional("mask_B") else None
        mask_a = rd.bits(r, q) if rd.optional("mask_A") else None
        delta = rd.floats(p, q) if rd.optional("delta") else None
        rd.fields("end", 0)
        layer.adapter = LoraAdapter(b, a, scaling, mask_b, mask_a, s_b, s_a)
        if layer.adapter.shape != layer.w0.shape:
            raise ConfigError(f"layer {i}: adapter shape {layer.adapter.shape} != base {layer.w0.shape}")
        layer.delta_override = delta
    return model
