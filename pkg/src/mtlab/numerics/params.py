"""Parameter storage with explicit gradient accumulators."""

import numpy as np


class Parameter:
    """A named f64 array plus a gradient buffer of identical shape."""

    def __init__(self, name, value):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


class ParamSet:
    """Ordered collection of Parameters, addressable by name."""

    def __init__(self):
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def zero_grad(self):
        for p in self:
            p.zero_grad()

    def n_values(self):
        return sum(p.value.size for p in self)

    def state_arrays(self):
        """Name -> value array, in insertion order (checkpointing)."""
        return {p.name: p.value for p in self}

    def load_state_arrays(self, arrays):
        for p in self:
            if p.name not in arrays:
                raise KeyError(f"checkpoint missing parameter {p.name}")
            a = arrays[p.name]
            if a.shape != p.value.shape:
                raise ValueError(
                    f"shape mismatch for {p.name}: {a.shape} vs {p.value.shape}"
                )
            p.value[...] = a
