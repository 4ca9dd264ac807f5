"""Closed-form field expressions evaluated at grid nodes.

Grammar: numbers, ``+ - * / ^`` (``**`` accepted too), parentheses, unary
minus, the coordinates ``x1 x2 x3``, the constants ``pi`` and ``e``, and the
functions ``sin cos exp log sqrt abs min max``.
"""

from __future__ import annotations

import ast
import math

import numpy as np

__all__ = ["ExpressionError", "parse_expression", "evaluate"]

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    """Raised for expressions outside the supported grammar."""


def _check(node: ast.AST, text: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, text)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator not allowed in {text!r}")
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError(f"unary operator not allowed in {text!r}")
        _check(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
            raise ExpressionError(f"unknown function in {text!r}")
        arity = 2 if node.func.id in ("min", "max") else 1
        if len(node.args) != arity:
            raise ExpressionError(f"{node.func.id} takes {arity} argument(s) in {text!r}")
        for arg in node.args:
            _check(arg, text)
    elif isinstance(node, ast.Name):
        if node.id not in _CONSTS and node.id not in ("x1", "x2", "x3"):
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"bad literal in {text!r}")
    else:
        raise ExpressionError(f"unsupported syntax in {text!r}")


def parse_expression(text: str) -> ast.Expression:
    src = str(text).strip().replace("^", "**")
    if not src:
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree, text)
    return tree


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*(_eval(a, env) for a in node.args))
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        if node.id not in env:
            raise ExpressionError(f"coordinate {node.id} not available in this dimension")
        return env[node.id]
    return float(node.value)


def evaluate(text: str | float, coordinates: np.ndarray) -> np.ndarray:
    """Evaluate an expression (or a plain number) at each row of ``coordinates``."""
    coords = np.atleast_2d(np.asarray(coordinates, dtype=float))
    n = coords.shape[0]
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return np.full(n, float(text))
    tree = parse_expression(text)
    env = {f"x{k + 1}": coords[:, k] for k in range(coords.shape[1])}
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(_eval(tree, env), dtype=float), (n,)).copy()
    if not np.all(np.isfinite(out)):
        raise ExpressionError(f"expression {text!r} is not finite on the grid")
    return out
