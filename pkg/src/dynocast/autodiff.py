"""Reverse-mode automatic differentiation on an append-only operation tape.

Nodes hold float64 numpy arrays, so a whole minibatch flows through each
primitive at once. The tape records (op, parent indices, payload) in
execution order; the backward pass walks it exactly once in reverse,
accumulating vector-Jacobian products. Everything is plain sequential numpy,
which makes gradients bit-reproducible for identical tapes.

A tape is single-writer: build the forward graph, call ``grad``, discard.
Distinct tapes are independent and safe to use concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, SteeringSingularityError

_COS_GUARD = 1e-6


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Append-only record of primitive array operations.

    Methods return integer node ids; ``value(i)`` reads the forward value.
    Supported primitives: leaf, add, mul, neg, scale, matmul, tanh, sigmoid,
    cos, sin, reciprocal, absolute, select, sum_all, slice_cols. ``tan`` is a
    composite (sin * reciprocal(cos)) guarded against the cos ~ 0 singularity.
    """

    def __init__(self, check_finite: bool = True):
        self._values: list[np.ndarray] = []
        self._ops: list[tuple] = []
        self.check_finite = check_finite

    def __len__(self) -> int:
        return len(self._values)

    def value(self, i: int) -> np.ndarray:
        return self._values[i]

    def _push(self, value, op: str, parents: tuple, payload=None) -> int:
        self._values.append(value)
        self._ops.append((op, parents, payload))
        return len(self._values) - 1

    # -- primitives ---------------------------------------------------------

    def leaf(self, value) -> int:
        return self._push(np.asarray(value, dtype=np.float64), "leaf", ())

    def add(self, a: int, b: int) -> int:
        return self._push(self._values[a] + self._values[b], "add", (a, b))

    def mul(self, a: int, b: int) -> int:
        return self._push(self._values[a] * self._values[b], "mul", (a, b))

    def neg(self, a: int) -> int:
        return self._push(-self._values[a], "neg", (a,))

    def scale(self, a: int, c: float) -> int:
        return self._push(self._values[a] * c, "scale", (a,), c)

    def matmul(self, a: int, b: int) -> int:
        va, vb = self._values[a], self._values[b]
        if va.ndim != 2 or vb.ndim != 2:
            raise ValueError(f"matmul needs 2-D operands, got {va.shape} @ {vb.shape}")
        return self._push(va @ vb, "matmul", (a, b))

    def tanh(self, a: int) -> int:
        return self._push(np.tanh(self._values[a]), "tanh", (a,))

    def sigmoid(self, a: int) -> int:
        v = self._values[a]
        return self._push(1.0 / (1.0 + np.exp(-v)), "sigmoid", (a,))

    def cos(self, a: int) -> int:
        return self._push(np.cos(self._values[a]), "cos", (a,))

    def sin(self, a: int) -> int:
        return self._push(np.sin(self._values[a]), "sin", (a,))

    def reciprocal(self, a: int) -> int:
        return self._push(1.0 / self._values[a], "reciprocal", (a,))

    def absolute(self, a: int) -> int:
        return self._push(np.abs(self._values[a]), "absolute", (a,))

    def select(self, cond: np.ndarray, a: int, b: int) -> int:
        """Elementwise ``where(cond, a, b)``; cond is data, not a node."""
        cond = np.asarray(cond, dtype=bool)
        return self._push(np.where(cond, self._values[a], self._values[b]), "select", (a, b), cond)

    def sum_all(self, a: int) -> int:
        return self._push(np.asarray(self._values[a].sum()), "sum_all", (a,))

    def slice_cols(self, a: int, j0: int, j1: int) -> int:
        va = self._values[a]
        if va.ndim != 2:
            raise ValueError("slice_cols needs a 2-D operand")
        return self._push(va[:, j0:j1], "slice_cols", (a,), (j0, j1))

    # -- composites ---------------------------------------------------------

    def sub(self, a: int, b: int) -> int:
        return self.add(a, self.neg(b))

    def tan(self, a: int) -> int:
        c = self.cos(a)
        if np.abs(self._values[c]).min() < _COS_GUARD:
            raise SteeringSingularityError(
                "tan argument too close to +-pi/2 (|cos| < 1e-6)"
            )
        return self.mul(self.sin(a), self.reciprocal(c))

    def mean_all(self, a: int) -> int:
        return self.scale(self.sum_all(a), 1.0 / self._values[a].size)

    # -- backward -----------------------------------------------------------

    def backward(self, loss: int) -> list:
        """Gradients of scalar node ``loss`` w.r.t. every node (None if unused)."""
        if self._values[loss].size != 1:
            raise ValueError("loss node must be scalar")
        grads: list = [None] * len(self._values)
        grads[loss] = np.ones_like(self._values[loss])

        def acc(idx: int, contribution: np.ndarray) -> None:
            contribution = _unbroadcast(contribution, self._values[idx].shape)
            # Accumulation is out-of-place, so aliased contributions are safe.
            if grads[idx] is None:
                grads[idx] = contribution
            else:
                grads[idx] = grads[idx] + contribution

        for idx in range(loss, -1, -1):
            g = grads[idx]
            if g is None:
                continue
            op, parents, payload = self._ops[idx]
            if self.check_finite and not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient at node {idx} (op={op})")
            if op == "leaf":
                continue
            elif op == "add":
                acc(parents[0], g)
                acc(parents[1], g)
            elif op == "mul":
                a, b = parents
                acc(a, g * self._values[b])
                acc(b, g * self._values[a])
            elif op == "neg":
                acc(parents[0], -g)
            elif op == "scale":
                acc(parents[0], g * payload)
            elif op == "matmul":
                a, b = parents
                acc(a, g @ self._values[b].T)
                acc(b, self._values[a].T @ g)
            elif op == "tanh":
                y = self._values[idx]
                acc(parents[0], g * (1.0 - y * y))
            elif op == "sigmoid":
                y = self._values[idx]
                acc(parents[0], g * y * (1.0 - y))
            elif op == "cos":
                acc(parents[0], -g * np.sin(self._values[parents[0]]))
            elif op == "sin":
                acc(parents[0], g * np.cos(self._values[parents[0]]))
            elif op == "reciprocal":
                y = self._values[idx]
                acc(parents[0], -g * y * y)
            elif op == "absolute":
                # Subgradient 0 at exactly 0 (np.sign(0) == 0).
                acc(parents[0], g * np.sign(self._values[parents[0]]))
            elif op == "select":
                acc(parents[0], np.where(payload, g, 0.0))
                acc(parents[1], np.where(payload, 0.0, g))
            elif op == "sum_all":
                acc(parents[0], np.broadcast_to(g, self._values[parents[0]].shape))
            elif op == "slice_cols":
                j0, j1 = payload
                z = np.zeros_like(self._values[parents[0]])
                z[:, j0:j1] = g
                acc(parents[0], z)
            else:  # pragma: no cover - guarded by the op writers above
                raise AssertionError(f"unknown op {op}")
        return grads

    def grad(self, loss: int, wrt: list) -> list:
        """Gradients for the requested node ids; unused nodes give exact zeros."""
        grads = self.backward(loss)
        out = []
        for i in wrt:
            g = grads[i]
            out.append(np.zeros_like(self._values[i]) if g is None else g)
        return out


def tanh_bound(tape: Tape, raw: int, omega: np.ndarray) -> int:
    """Squash ``raw`` into (-omega, omega) elementwise: omega * tanh(raw)."""
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(omega <= 0.0) or not np.isfinite(omega).all():
        raise ValueError("omega must be positive and finite")
    return tape.mul(tape.leaf(omega), tape.tanh(raw))


def finite_difference_gradient(fn, arrays: list, h: float = 1e-5) -> list:
    """Central finite differences of scalar fn(arrays) w.r.t. each array element.

    Independent oracle used by tests and the acceptance suite; it never touches
    the tape machinery.
    """
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = fn(arrays)
            flat[j] = orig - h
            fm = fn(arrays)
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    """|a-b| scaled by max magnitude, floored to absorb FD roundoff.

    Central differences on an O(1) function cannot resolve below about
    eps/h ~ 1e-11 absolute, so gradients smaller than the floor are compared
    absolutely at that scale.
    """
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(fn, arrays: list, tape_grads: list, n_probes: int = 20,
                    rng=None, h: float = 1e-5, rtol: float = 1e-4) -> float:
    """Spot-check tape gradients against central differences on random probes.

    Returns the worst relative error; raises AssertionError beyond ``rtol``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for arr, g_ad in zip(arrays, tape_grads):
        flat = arr.reshape(-1)
        g_flat = g_ad.reshape(-1)
        n = min(n_probes, flat.size)
        idxs = rng.choice(flat.size, size=n, replace=False)
        for j in idxs:
            orig = flat[j]
            flat[j] = orig + h
            fp = fn(arrays)
            flat[j] = orig - h
            fm = fn(arrays)
            flat[j] = orig
            g_fd = (fp - fm) / (2.0 * h)
            err = relative_error(float(g_ad.reshape(-1)[j]), g_fd)
            worst = max(worst, err)
            if err > rtol:
                raise AssertionError(
                    f"gradient mismatch: ad={g_flat[j]:.10g} fd={g_fd:.10g} rel={err:.3g}"
                )
    return worst


