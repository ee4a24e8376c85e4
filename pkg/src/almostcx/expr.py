"""A small closed-form expression grammar over complex coordinates.

Expressions use Python syntax restricted to the variables ``z1 .. zn``, the
constants ``i``/``I``/``pi``/``e``, numeric literals, ``+ - * /``, integer
powers and the functions ``conj, re, im, abs, log, exp, sqrt``.  Anything
else is rejected at parse time.

>>> import numpy as np
>>> f = parse("z1*conj(z2) + 2")
>>> complex(f.evaluate(np.array([1j, 2.0])))
(2+2j)
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

import numpy as np

from .jet import Jet

_FUNCS = ("conj", "re", "im", "abs", "log", "exp", "sqrt")
_CONSTS = {"i": 1j, "I": 1j, "pi": math.pi, "e": math.e}


class ExpressionError(ValueError):
    pass


def _array_func(name, x):
    if name == "conj":
        return np.conj(x)
    if name == "re":
        return np.real(x)
    if name == "im":
        return np.imag(x)
    if name == "abs":
        return np.abs(x)
    if name == "log":
        return np.log(x + 0j)
    if name == "exp":
        return np.exp(x)
    return np.sqrt(x + 0j)


def _jet_func(name, x: Jet) -> Jet:
    return {
        "conj": x.conj, "re": x.real, "im": x.imag, "abs": x.abs,
        "log": x.log, "exp": x.exp, "sqrt": x.sqrt,
    }[name]()


@dataclass(frozen=True)
class Expression:
    source: str
    n_vars: int
    tree: ast.AST = field(repr=False, compare=False)

    def _eval(self, node, env, func):
        if isinstance(node, ast.Expression):
            return self._eval(node.body, env, func)
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            return _CONSTS[node.id]
        if isinstance(node, ast.UnaryOp):
            x = self._eval(node.operand, env, func)
            return -x if isinstance(node.op, ast.USub) else x
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                k = node.right._power
                left = node.left
                if (isinstance(left, ast.Call) and left.func.id == "abs"
                        and k > 0 and k % 2 == 0):
                    # |x|^(2m) = (x conj x)^m stays smooth at x = 0
                    x = self._eval(left.args[0], env, func)
                    sq = func("re", x * func("conj", x))
                    return sq ** (k // 2)
                return self._eval(left, env, func) ** k
            a = self._eval(node.left, env, func)
            b = self._eval(node.right, env, func)
            op = node.op
            if isinstance(op, ast.Add):
                return a + b
            if isinstance(op, ast.Sub):
                return a - b
            if isinstance(op, ast.Mult):
                return a * b
            return a / b
        if isinstance(node, ast.Call):
            return func(node.func.id, self._eval(node.args[0], env, func))
        raise ExpressionError(f"unsupported node {type(node).__name__}")

    def evaluate(self, points):
        """Value at ``points`` of shape (..., n)."""
        points = np.asarray(points, dtype=complex)
        env = {f"z{j + 1}": points[..., j] for j in range(points.shape[-1])}
        out = self._eval(self.tree, env, _array_func)
        return np.broadcast_to(np.asarray(out, dtype=complex), points.shape[:-1]).copy()

    def jet(self, points, order=2) -> Jet:
        points = np.asarray(points, dtype=complex)
        zs = Jet.variables(points, order=order)
        env = {f"z{j + 1}": zj for j, zj in enumerate(zs)}
        out = self._eval(self.tree, env, _jet_func)
        if not isinstance(out, Jet):
            out = Jet.constant(out, points.shape[:-1], 2 * points.shape[-1], order)
        return out


def _check(node, n_vars):
    if isinstance(node, ast.Expression):
        _check(node.body, n_vars)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float, complex)) or isinstance(node.value, bool):
            raise ExpressionError(f"bad literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id in _CONSTS:
            return
        if node.id.startswith("z") and node.id[1:].isdigit():
            k = int(node.id[1:])
            if 1 <= k <= n_vars:
                return
        raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("only unary +/- allowed")
        _check(node.operand, n_vars)
    elif isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            r = node.right
            neg = isinstance(r, ast.UnaryOp) and isinstance(r.op, ast.USub)
            lit = r.operand if neg else r
            if not (isinstance(lit, ast.Constant) and isinstance(lit.value, int)):
                raise ExpressionError("exponents must be integer literals")
            node.right._power = -lit.value if neg else lit.value
            _check(node.left, n_vars)
            return
        if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, n_vars)
        _check(node.right, n_vars)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ExpressionError("unknown function")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], n_vars)
    else:
        raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def parse(source: str, n_vars: int = 2) -> Expression:
    try:
        tree = ast.parse(str(source).strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    _check(tree, n_vars)
    return Expression(str(source), n_vars, tree)
