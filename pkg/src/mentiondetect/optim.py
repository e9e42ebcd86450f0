import numpy as np

from .exceptions import ContractError


class Adam:
    """Bias-corrected Adam.  ``step`` consumes and then zeroes the gradients."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {p.name or p!r} has no gradient")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        root_c2 = np.sqrt(1.0 - self.beta2 ** t)
        # lr * (m / c1) / (sqrt(v / c2) + eps), rearranged to avoid temporaries
        step_size = self.learning_rate * root_c2 / c1
        eps = self.epsilon * root_c2
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            np.multiply(g, g, out=g)
            g *= 1.0 - self.beta2
            v += g
            np.sqrt(v, out=g)
            g += eps
            np.divide(m, g, out=g)
            g *= step_size
            p.data -= g
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0


def adam_step(state, params=None):
    """Functional form: apply one update held by ``state`` (an :class:`Adam`)."""
    if params is not None and [id(p) for p in params] != [id(p) for p in state.params]:
        raise ContractError("params differ from those the optimizer state tracks")
    state.step()
