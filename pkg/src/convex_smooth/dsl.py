"""JSON expression language for convex functions, domains and tolerance functions.

A function expression is a JSON object with an ``op`` key:

``{"op": "var", "index": i}``
    The coordinate ``x_{i+1}``.
``{"op": "affine", "slope": [...], "offset": b}``
    ``<slope, x> + b``.
``{"op": "const", "value": c}``
    A constant.
``{"op": "poly", "terms": [[coef, power], ...], "of": expr}``
    A polynomial of an affine expression. Powers are nonnegative integers;
    odd powers above one and negative even-power coefficients are rejected.
``{"op": "abs", "of": expr}``
    Absolute value of an affine expression.
``{"op": "exp", "of": expr}``
    Exponential of an affine expression.
``{"op": "max", "of": [expr, ...]}`` and ``{"op": "sum", "of": [...], "weights": [...]}``
    Pointwise maximum, and a sum with nonnegative weights.
``{"op": "linear", "A": [[...]], "b": [...], "of": expr}``
    ``expr(A x + b)`` where ``expr`` lives in dimension ``len(A)``.

Tolerance functions add ``{"op": "reciprocal", "scale": s, "of": expr}`` for
``s / (1 + expr)`` and ``{"op": "exp_neg", "scale": s, "of": expr}`` for
``s * exp(-expr)``, with ``expr`` a nonnegative function expression; a bare
positive number is a constant tolerance.

Errors raise :class:`SpecParse` carrying a JSON path such as
``$.function.of[1].slope``.
"""

from __future__ import annotations

import json

import numpy as np

from .core import ConvexFn, Domain
from .errors import ConvexSmoothError, SpecParse

SMOOTH_ORDER = ["nonsmooth", "C1", "C2", "Cinf"]


class _Node:
    """Compiled expression: batch values, gradients, smoothness and affinity."""

    def __init__(self, dim, values, grads, smoothness="Cinf", affine=False):
        self.dim = dim
        self.values = values
        self.grads = grads
        self.smoothness = smoothness
        self.affine = affine


def _fail(msg, loc):
    raise SpecParse(msg, loc)


def _get(obj, key, loc, kind=None):
    if not isinstance(obj, dict):
        _fail("expected an object", loc)
    if key not in obj:
        _fail(f"missing key {key!r}", loc)
    val = obj[key]
    if kind is not None and not _is(val, kind):
        _fail(f"{key!r} must be {kind}", f"{loc}.{key}")
    return val


def _is(val, kind):
    if kind == "number":
        return isinstance(val, (int, float)) and not isinstance(val, bool) and np.isfinite(val)
    if kind == "int":
        return isinstance(val, int) and not isinstance(val, bool)
    if kind == "list":
        return isinstance(val, list)
    if kind == "object":
        return isinstance(val, dict)
    if kind == "string":
        return isinstance(val, str)
    return True


def _vector(val, loc, length=None):
    if not isinstance(val, list) or not all(_is(v, "number") for v in val):
        _fail("expected a list of finite numbers", loc)
    if length is not None and len(val) != length:
        _fail(f"expected {length} entries, got {len(val)}", loc)
    return np.asarray(val, dtype=float)


def _matrix(val, loc, cols=None):
    if not isinstance(val, list) or not val:
        _fail("expected a nonempty list of rows", loc)
    rows = [_vector(r, f"{loc}[{i}]", cols) for i, r in enumerate(val)]
    if len({r.shape[0] for r in rows}) != 1:
        _fail("rows have different lengths", loc)
    return np.vstack(rows)


def _min_smooth(*tags):
    return SMOOTH_ORDER[min(SMOOTH_ORDER.index(t) for t in tags)]


def _compile(expr, dim, loc):
    op = _get(expr, "op", loc, "string")
    if op == "var":
        i = _get(expr, "index", loc, "int")
        if not 0 <= i < dim:
            _fail(f"index {i} out of range for dimension {dim}", f"{loc}.index")
        e = np.zeros(dim)
        e[i] = 1.0
        return _Node(dim, lambda X: X[:, i].copy(), lambda X: np.broadcast_to(e, X.shape).copy(),
                     affine=True)
    if op == "const":
        c = float(_get(expr, "value", loc, "number"))
        return _Node(dim, lambda X: np.full(X.shape[0], c), lambda X: np.zeros_like(X), affine=True)
    if op == "affine":
        slope = _vector(_get(expr, "slope", loc), f"{loc}.slope", dim)
        off = expr.get("offset", 0.0)
        if not _is(off, "number"):
            _fail("'offset' must be a number", f"{loc}.offset")
        return _Node(dim, lambda X: X @ slope + float(off),
                     lambda X: np.broadcast_to(slope, X.shape).copy(), affine=True)
    if op in ("poly", "abs", "exp"):
        inner = _compile(_get(expr, "of", loc, "object"), dim, f"{loc}.of")
        if not inner.affine:
            _fail(f"{op!r} needs an affine argument", f"{loc}.of")
        if op == "abs":
            return _Node(dim, lambda X: np.abs(inner.values(X)),
                         lambda X: np.sign(inner.values(X))[:, None] * inner.grads(X), "nonsmooth")
        if op == "exp":
            return _Node(dim, lambda X: np.exp(inner.values(X)),
                         lambda X: np.exp(inner.values(X))[:, None] * inner.grads(X))
        terms = _get(expr, "terms", loc, "list")
        if not terms:
            _fail("'terms' must be nonempty", f"{loc}.terms")
        coefs, powers = [], []
        for k, t in enumerate(terms):
            tl = f"{loc}.terms[{k}]"
            if not (isinstance(t, list) and len(t) == 2 and _is(t[0], "number") and _is(t[1], "int")):
                _fail("each term is [coefficient, integer power]", tl)
            c, p = float(t[0]), int(t[1])
            if p < 0 or (p > 1 and p % 2 == 1 and c != 0):
                _fail(f"power {p} is not convex", tl)
            if p >= 2 and c < 0:
                _fail("even powers need nonnegative coefficients", tl)
            coefs.append(c)
            powers.append(p)
        coefs, powers = np.array(coefs), np.array(powers)

        def pv(X):
            u = inner.values(X)
            return np.sum(coefs[None, :] * u[:, None] ** powers[None, :], axis=1)

        def pg(X):
            u = inner.values(X)
            der = np.sum(np.where(powers > 0, coefs * powers, 0.0)[None, :]
                         * u[:, None] ** np.maximum(powers - 1, 0)[None, :], axis=1)
            return der[:, None] * inner.grads(X)

        return _Node(dim, pv, pg, affine=bool(np.all(powers <= 1)))
    if op in ("max", "sum"):
        items = _get(expr, "of", loc, "list")
        if not items:
            _fail(f"{op!r} needs at least one argument", f"{loc}.of")
        nodes = [_compile(e, dim, f"{loc}.of[{k}]") for k, e in enumerate(items)]
        if op == "max":
            def mv(X):
                return np.max(np.stack([n.values(X) for n in nodes], axis=1), axis=1)

            def mg(X):
                V = np.stack([n.values(X) for n in nodes], axis=1)
                j = np.argmax(V, axis=1)
                G = np.stack([n.grads(X) for n in nodes], axis=1)
                return G[np.arange(X.shape[0]), j]

            smooth = nodes[0].smoothness if len(nodes) == 1 else "nonsmooth"
            return _Node(dim, mv, mg, smooth)
        w = expr.get("weights", [1.0] * len(nodes))
        w = _vector(w, f"{loc}.weights", len(nodes))
        if np.any(w < 0):
            _fail("weights must be nonnegative", f"{loc}.weights")
        return _Node(dim, lambda X: sum(wk * n.values(X) for wk, n in zip(w, nodes)),
                     lambda X: sum(wk * n.grads(X) for wk, n in zip(w, nodes)),
                     _min_smooth(*[n.smoothness for n in nodes]),
                     affine=all(n.affine for n in nodes))
    if op == "linear":
        A = _matrix(_get(expr, "A", loc), f"{loc}.A", dim)
        b = _vector(expr.get("b", [0.0] * A.shape[0]), f"{loc}.b", A.shape[0])
        inner = _compile(_get(expr, "of", loc, "object"), A.shape[0], f"{loc}.of")
        return _Node(dim, lambda X: inner.values(X @ A.T + b),
                     lambda X: inner.grads(X @ A.T + b) @ A, inner.smoothness, inner.affine)
    _fail(f"unknown op {op!r}", f"{loc}.op")


def parse_function(expr, dim, loc="$", domain=None, name=None):
    """Compile a function expression into a :class:`ConvexFn` of dimension ``dim``."""
    node = _compile(expr, dim, loc)
    return ConvexFn(node.values, dim, grad=node.grads, domain=domain,
                    smoothness=node.smoothness, name=name or expr.get("op", "f"))


def parse_domain(desc, dim, loc="$"):
    """Build a :class:`Domain` from a tagged object (``kind`` key)."""
    if desc is None:
        return Domain.whole(dim)
    kind = _get(desc, "kind", loc, "string")
    try:
        if kind == "all_of_Rd":
            return Domain.whole(dim)
        if kind == "box":
            return Domain.box(_vector(_get(desc, "lo", loc), f"{loc}.lo", dim),
                              _vector(_get(desc, "hi", loc), f"{loc}.hi", dim))
        if kind == "ball":
            return Domain.ball(_vector(_get(desc, "center", loc), f"{loc}.center", dim),
                               float(_get(desc, "radius", loc, "number")))
        if kind == "polytope":
            A = _matrix(_get(desc, "A", loc), f"{loc}.A", dim)
            return Domain.polytope(A, _vector(_get(desc, "b", loc), f"{loc}.b", A.shape[0]))
        if kind == "sublevel":
            fn = parse_function(_get(desc, "function", loc, "object"), dim, f"{loc}.function")
            return Domain.sublevel(fn, float(_get(desc, "level", loc, "number")))
    except SpecParse:
        raise
    except ConvexSmoothError as exc:
        _fail(str(exc), loc)
    _fail(f"unknown domain kind {kind!r}", f"{loc}.kind")


def parse_tolerance(expr, dim, loc="$"):
    """Compile a tolerance function (strictly positive) into a :class:`ConvexFn`-like evaluator."""
    if _is(expr, "number"):
        c = float(expr)
        if c <= 0:
            _fail("tolerance must be positive", loc)
        return ConvexFn(lambda X: np.full(X.shape[0], c), dim, smoothness="Cinf", name=f"{c:g}")
    op = _get(expr, "op", loc, "string")
    if op in ("reciprocal", "exp_neg"):
        s = float(_get(expr, "scale", loc, "number"))
        if s <= 0:
            _fail("'scale' must be positive", f"{loc}.scale")
        inner = _compile(_get(expr, "of", loc, "object"), dim, f"{loc}.of")
        if op == "reciprocal":
            fun = lambda X: s / (1.0 + np.maximum(inner.values(X), 0.0))  # noqa: E731
        else:
            fun = lambda X: s * np.exp(-np.maximum(inner.values(X), 0.0))  # noqa: E731
        return ConvexFn(fun, dim, smoothness="nonsmooth", name=op)
    if op == "const":
        return parse_tolerance(_get(expr, "value", loc, "number"), dim, f"{loc}.value")
    _fail(f"unknown tolerance op {op!r}", f"{loc}.op")


def load_json(text, loc="$"):
    """Parse JSON text, mapping syntax errors to :class:`SpecParse` with line and column."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParse(exc.msg, f"{loc} (line {exc.lineno}, column {exc.colno})") from None
