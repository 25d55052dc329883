"""Named parameters, gradient extraction, and initialization."""

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


class Parameter:
    """A named, trainable tensor with a same-shape gradient slot."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, array: np.ndarray):
        self.name = name
        self.value = Tensor(array, requires_grad=True)
        self.zero_grad()

    @property
    def grad(self) -> np.ndarray:
        return self.value.grad

    def zero_grad(self) -> None:
        self.value.grad = np.zeros_like(self.value.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class ParameterSet:
    """Insertion-ordered collection of uniquely named parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, array: np.ndarray) -> Parameter:
        if name in self._params:
            raise ContractError(f"duplicate parameter name: {name}")
        p = Parameter(name, array)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def as_arrays(self) -> dict[str, np.ndarray]:
        """Copies of all parameter values, keyed by name."""
        return {name: p.value.data.copy() for name, p in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        for name, arr in arrays.items():
            if name not in self._params:
                if strict:
                    raise ContractError(f"unknown parameter in load: {name}")
                continue
            p = self._params[name]
            if p.value.shape != arr.shape:
                raise ContractError(
                    f"shape mismatch loading {name}: have {p.value.shape}, got {arr.shape}")
            p.value.data = arr.astype(p.value.dtype).copy()


def gradient_of(loss: Tensor, params) -> dict[str, np.ndarray]:
    """Populate and return gradients of a scalar loss for the given parameters.

    Parameters not on the path to the loss keep exactly-zero gradients.
    """
    if loss.size != 1:
        raise ContractError(f"gradient_of: loss must be scalar, got shape {loss.shape}")
    plist = list(params)
    for p in plist:
        p.zero_grad()
    if loss.requires_grad:
        loss.backward()
    grads = {}
    for p in plist:
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise ContractError(f"gradient_of: non-finite gradient for {p.name}")
        grads[p.name] = g
    return grads


def init_linear(rng: np.random.Generator, fan_in: int, shape, dtype=np.float32) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), the conventional baseline."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
