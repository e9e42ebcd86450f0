"""Parameter containers and the feed-forward building block."""

import numpy as np

from . import autodiff as ad


def glorot_uniform(rng, fan_in, fan_out, shape=None, dtype=np.float64):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Collects parameters from attributes, recursing into child modules.

    Parameter names are dotted attribute paths; attribute insertion order
    fixes the iteration order.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, ad.Tensor):
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        """Trainable tensors only; frozen tables are still named for checkpoints."""
        return [p for _, p in self.named_parameters() if p.requires_grad]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        for name, p in self.named_parameters():
            p.data[...] = state[name]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, dtype=np.float64):
        self.weight = ad.parameter(glorot_uniform(rng, in_dim, out_dim, dtype=dtype))
        self.bias = ad.parameter(np.zeros(out_dim, dtype=dtype))

    def __call__(self, x):
        return ad.affine(x, self.weight, self.bias)


class FFNN(Module):
    """``layers`` hidden ReLU layers of width ``hidden`` then a linear output.

    Dropout (rate ``dropout``) follows each hidden layer in training mode.
    """

    def __init__(self, in_dim, hidden, layers, out_dim, rng, dropout=0.0, dtype=np.float64):
        dims = [in_dim] + [hidden] * layers
        self.hidden = [Linear(a, b, rng, dtype) for a, b in zip(dims[:-1], dims[1:])]
        self.output = Linear(dims[-1], out_dim, rng, dtype)
        self.dropout = dropout
        self.out_dim = out_dim

    def __call__(self, x, training=False, rng=None):
        for layer in self.hidden:
            x = ad.relu(layer(x))
            x = ad.dropout(x, 1.0 - self.dropout, training, rng)
        return self.output(x)
