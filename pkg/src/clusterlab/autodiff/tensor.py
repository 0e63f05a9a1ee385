"""Reverse-mode autodiff over dense numpy arrays.

Tensors form a DAG through their parents; calling backward() on a scalar
walks the graph in reverse topological order, calling each node's stored
gradient closure. Dtype doubles as the mode switch: float64 tensors run
the slow reference kernels, float32 tensors the vectorized fast path.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "parents", "grad_fn", "name")

    def __init__(self, values, requires_grad: bool = False, parents=(), grad_fn=None, name: str = ""):
        if isinstance(values, np.ndarray):
            self.values = values
        elif isinstance(values, np.generic):
            # 0-d arithmetic yields numpy scalars; keep their dtype.
            self.values = np.asarray(values)
        else:
            self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self.grad_fn = grad_fn
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.values.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed=None) -> None:
        """Backpropagate from this node. Scalar outputs seed with 1."""
        if seed is None:
            if self.values.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.values)
        self.grad = np.asarray(seed, dtype=self.values.dtype).reshape(self.values.shape).copy()

        # Iterative DFS: batch-summed losses chain hundreds of nodes, too
        # deep for comfortable recursion.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        for node in reversed(topo):
            if node.grad_fn is not None and node.grad is not None:
                node.grad_fn(node.grad)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype}{tag})"


def tensor(values, requires_grad: bool = False, dtype=None, name: str = "") -> Tensor:
    arr = np.asarray(values, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr, requires_grad=requires_grad, name=name)


def parameter(values, name: str = "") -> Tensor:
    return Tensor(np.asarray(values), requires_grad=True, name=name)
