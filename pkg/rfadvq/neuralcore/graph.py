"""
A computation graph of layers with reverse-mode differentiation.
"""
import copy
from dataclasses import dataclass

import numpy as np

from .layers import GraphStateError
from .layers import Layer
from .layers import layers

Tensor = np.ndarray
"""A batch of values. The first axis is the batch axis."""

INPUT = 'input'


@dataclass
class Node:
    """A node of a :class:`Graph`.

    Args:
        name: A unique name.
        layer: The operation.
        inputs: The names of the nodes (or ``'input'``) that feed the layer.
    """
    name: str
    layer: Layer
    inputs: tuple[str, ...]


class Graph:

    def __init__(self, input_shape: tuple[int, ...], *, dtype: type = np.float32) -> None:
        """A directed acyclic graph of layers.

        Nodes are evaluated in the order that they are added, which must
        therefore be a topological order. The last node is the output.

        Args:
            input_shape: The shape of one sample (without the batch axis).
            dtype: The floating-point type, float32 for training and
                float64 for the gradient-verification mode.
        """
        self.input_shape = tuple(int(i) for i in input_shape)
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []
        self._activations: dict[str, np.ndarray] | None = None
        self._gradients: dict[str, np.ndarray] = {}

    def __repr__(self) -> str:
        return f'<Graph input_shape={self.input_shape} nodes={len(self.nodes)} dtype={self.dtype}>'

    def add(self, name: str, layer: Layer, inputs: str | tuple[str, ...] = None) -> 'Graph':
        """Append a node.

        Args:
            name: A unique name of the node.
            layer: The layer.
            inputs: The name(s) of the node(s) that are the inputs to `layer`.
                Default is the previously-added node (or the graph input).

        Returns:
            The graph instance (so calls can be chained).
        """
        if name == INPUT or any(n.name == name for n in self.nodes):
            raise ValueError(f'A node with the name {name!r} already exists')
        if inputs is None:
            inputs = (self.nodes[-1].name if self.nodes else INPUT,)
        elif isinstance(inputs, str):
            inputs = (inputs,)
        known = {INPUT} | {n.name for n in self.nodes}
        for i in inputs:
            if i not in known:
                raise ValueError(f'Node {name!r} refers to {i!r}, which has not been added yet')
        if len(inputs) != layer.num_inputs:
            raise ValueError(f'{layer!r} requires {layer.num_inputs} input(s), got {len(inputs)}')
        if layer.dtype != self.dtype:
            layer.astype(self.dtype)
        self.nodes.append(Node(name=name, layer=layer, inputs=tuple(inputs)))
        return self

    def activation(self, name: str) -> Tensor:
        """Return the cached output of a node (or of ``'input'``) from the latest :meth:`forward` call."""
        if self._activations is None:
            raise GraphStateError('forward has not been called')
        return self._activations[name]

    def astype(self, dtype: type) -> 'Graph':
        """Return a copy of the graph with a different floating-point type."""
        g = self.copy()
        g.dtype = np.dtype(dtype)
        for node in g.nodes:
            node.layer.astype(dtype)
        return g

    def backward(self, output_grad: Tensor) -> tuple[dict[str, np.ndarray], Tensor]:
        """Propagate the gradient of a scalar loss from the output to every parameter and the input.

        Args:
            output_grad: The gradient of the loss w.r.t. the output of :meth:`forward`.

        Returns:
            The parameter gradients (keyed by ``'<node>.<param>'``) and the
            gradient w.r.t. the input.
        """
        if self._activations is None:
            raise GraphStateError('backward was called before forward')
        output = self._activations[self.output_name]
        if output_grad.shape != output.shape:
            raise ValueError(f'The output gradient has shape {output_grad.shape}, '
                             f'expected {output.shape}')

        pending: dict[str, np.ndarray] = {self.output_name: np.asarray(output_grad, dtype=self.dtype)}
        param_grads: dict[str, np.ndarray] = {}
        for node in reversed(self.nodes):
            grad = pending.pop(node.name, None)
            if grad is None:
                # does not contribute to the output
                grad = np.zeros_like(self._activations[node.name])
            input_grads = node.layer.backward(grad)
            for name, value in node.layer.grads.items():
                param_grads[f'{node.name}.{name}'] = value
            for src, g in zip(node.inputs, input_grads):
                pending[src] = pending[src] + g if src in pending else g

        self._gradients = param_grads
        input_grad = pending.get(INPUT)
        if input_grad is None:
            input_grad = np.zeros_like(self._activations[INPUT])
        return param_grads, input_grad

    def copy(self) -> 'Graph':
        """Return a deep copy without cached activations."""
        activations, self._activations = self._activations, None
        gradients, self._gradients = self._gradients, {}
        try:
            return copy.deepcopy(self)
        finally:
            self._activations = activations
            self._gradients = gradients

    def descriptors(self) -> list[dict]:
        """Describe every node so that the graph can be recreated by :meth:`from_descriptors`."""
        return [{'name': n.name, 'kind': n.layer.kind, 'inputs': list(n.inputs), 'config': n.layer.config()}
                for n in self.nodes]

    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the graph and cache every activation.

        Args:
            x: A batch, shape ``(B,) + input_shape``.

        Returns:
            The output of the last node.
        """
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f'Expected input of shape (B, {", ".join(map(str, self.input_shape))}), '
                             f'got {x.shape}')
        activations = {INPUT: x.astype(self.dtype, copy=False)}
        for node in self.nodes:
            activations[node.name] = node.layer.forward(*(activations[i] for i in node.inputs))
        self._activations = activations
        return activations[self.output_name]

    @classmethod
    def from_descriptors(cls,
                         input_shape: tuple[int, ...],
                         descriptors: list[dict],
                         *,
                         dtype: type = np.float32) -> 'Graph':
        """Create a graph from the output of :meth:`descriptors`.

        The parameters have their initial values, see :meth:`load_parameters`.
        """
        g = cls(input_shape, dtype=dtype)
        for d in descriptors:
            try:
                layer_cls = layers[d['kind']]
            except KeyError:
                raise ValueError(f'Unknown layer kind {d["kind"]!r}') from None
            g.add(d['name'], layer_cls(**d['config'], dtype=dtype), tuple(d['inputs']))
        return g

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        """Replace parameter values, keyed by ``'<node>.<param>'``."""
        current = self.parameters()
        for key, value in params.items():
            if key not in current:
                raise KeyError(f'The graph does not have a parameter named {key!r}')
            if value.shape != current[key].shape:
                raise ValueError(f'Parameter {key!r} has shape {current[key].shape}, got {value.shape}')
            node, name = key.rsplit('.', 1)
            self.node(node).layer.params[name] = np.array(value, dtype=self.dtype)

    def gradients(self) -> dict[str, np.ndarray]:
        """The parameter gradients of the latest :meth:`backward` call, keyed by ``'<node>.<param>'``."""
        return dict(self._gradients)

    def node(self, name: str) -> Node:
        """Return a node by name."""
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(f'No node named {name!r}')

    @property
    def output_name(self) -> str:
        """The name of the output node."""
        return self.nodes[-1].name if self.nodes else INPUT

    def parameters(self) -> dict[str, np.ndarray]:
        """The parameters, keyed by ``'<node>.<param>'``."""
        return {f'{n.name}.{k}': v for n in self.nodes for k, v in n.layer.params.items()}
