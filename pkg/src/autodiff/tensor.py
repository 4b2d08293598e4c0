"""
Dense float64 tensors and the reverse-mode computation graph (tape)

A Graph records every primitive applied to tensors that require gradients
while its ``recording()`` context is active. Nodes are appended in execution
order, so the node list is topologically sorted by construction and the
backward pass is a single reverse sweep.
"""

import inspect
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import GraphError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


def _graph_stack() -> List["Graph"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def current_graph() -> Optional["Graph"]:
    """Return the graph recording on this thread, if any"""
    stack = _graph_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense row-major float64 array with an optional gradient slot"""

    __slots__ = ("data", "grad", "requires_grad", "name", "_node")

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._node: Optional["Node"] = None

    @property
    def shape(self) -> List[int]:
        return list(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view of the values"""
        return self.data.reshape(-1)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(tuple(shape)), requires_grad=requires_grad)

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap a float64 array without copying it"""
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.grad = None
        tensor.requires_grad = requires_grad
        tensor.name = None
        tensor._node = None
        return tensor

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; the primitives live in ops.py
    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.add(self, _as_tensor(other))

    def __radd__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.add(_as_tensor(other), self)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.sub(self, _as_tensor(other))

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)


def _as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Node:
    """One recorded primitive application"""
    index: int
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Graph:
    """Reverse-mode tape.

    Either record ad hoc::

        graph = Graph()
        with graph.recording():
            loss = model_loss(...)
        graph.backward(loss)

    or wrap a definition callable whose keyword parameters are the graph's
    named inputs and evaluate it with ``forward_graph_eval``.
    """

    def __init__(self, definition: Optional[Callable[..., Any]] = None, name: str = "graph"):
        self.definition = definition
        self.name = name
        self.nodes: List[Node] = []
        self.inputs: Dict[str, Tensor] = {}
        self.outputs: Dict[str, Tensor] = {}
        self._recorded = False

    @contextmanager
    def recording(self) -> Iterator["Graph"]:
        stack = _graph_stack()
        stack.append(self)
        self._recorded = True
        try:
            yield self
        finally:
            stack.pop()

    def next_index(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> Node:
        node = Node(index=len(self.nodes), op=op, inputs=inputs, output=output, backward=backward)
        self.nodes.append(node)
        output._node = node
        return node

    def evaluate(self, inputs: Dict[str, Tensor]) -> Dict[str, Tensor]:
        if self.definition is None:
            raise GraphError(f"{self.name}: no definition to evaluate")
        params = inspect.signature(self.definition).parameters
        required = [
            name for name, p in params.items()
            if p.default is inspect.Parameter.empty
            and p.kind in (inspect.Parameter.POSITIONAL_OR_KEYWORD, inspect.Parameter.KEYWORD_ONLY)
        ]
        for name in required:
            if name not in inputs:
                raise GraphError(f"{self.name}: unbound input '{name}'")
        for name in inputs:
            if name not in params:
                raise GraphError(f"{self.name}: unknown input '{name}'")

        self.nodes = []
        self.inputs = dict(inputs)
        with self.recording():
            result = self.definition(**inputs)
        if isinstance(result, Tensor):
            result = {"output": result}
        self.outputs = dict(result)
        return self.outputs

    def backward(self, output: Union[str, Tensor], seed: Optional[Tensor] = None) -> Dict[str, Tensor]:
        """Accumulate d(output)/d(leaf) into every differentiable leaf's grad slot.

        Returns the gradients of the named graph inputs that require grad.
        """
        if not self._recorded:
            raise GraphError(f"{self.name}: backward called before forward")
        if isinstance(output, str):
            if output not in self.outputs:
                raise GraphError(f"{self.name}: unknown output '{output}'")
            target = self.outputs[output]
        else:
            target = output

        if seed is None:
            seed_data = np.ones_like(target.data)
        else:
            if seed.shape != target.shape:
                raise ShapeError(f"{self.name}: seed shape {seed.shape} vs output shape {target.shape}")
            seed_data = seed.data

        if target.is_leaf:
            if target.requires_grad:
                _accumulate_leaf(target, seed_data)
            return self._named_input_grads()

        pending: Dict[int, np.ndarray] = {id(target): seed_data}
        for node in reversed(self.nodes):
            upstream = pending.pop(id(node.output), None)
            if upstream is None:
                continue
            input_grads = node.backward(upstream)
            for inp, grad in zip(node.inputs, input_grads):
                if grad is None or not inp.requires_grad:
                    continue
                if inp.is_leaf:
                    _accumulate_leaf(inp, grad)
                else:
                    key = id(inp)
                    pending[key] = grad if key not in pending else pending[key] + grad
        return self._named_input_grads()

    def _named_input_grads(self) -> Dict[str, Tensor]:
        return {
            name: Tensor(t.grad)
            for name, t in self.inputs.items()
            if t.requires_grad and t.grad is not None
        }


def _accumulate_leaf(tensor: Tensor, grad: np.ndarray) -> None:
    grad = np.reshape(grad, tensor.data.shape)
    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def forward_graph_eval(graph: Graph, inputs: Dict[str, Tensor]) -> Dict[str, Tensor]:
    """Evaluate a graph definition on bound inputs, retaining the tape for backward"""
    return graph.evaluate(inputs)


def backward_accumulate(graph: Graph, output: Union[str, Tensor], seed: Optional[Tensor] = None) -> Dict[str, Tensor]:
    """Reverse sweep from ``output`` seeded with ``seed`` (ones if omitted)"""
    return graph.backward(output, seed)
