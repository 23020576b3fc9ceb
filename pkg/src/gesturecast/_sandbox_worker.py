"""Isolated worker process that evaluates user-supplied feature functions.

Speaks JSON-lines over stdio: a `load` message with the script source, then
`eval` messages with a function name and the strokes payload. Runs with a
whitelisted namespace and a memory ceiling; the parent enforces wall-clock
budgets by killing the process. Keep this module stdlib-only so worker
startup stays cheap.
"""

from __future__ import annotations

import json
import math
import sys


def _flatten(values):
    for v in values:
        if isinstance(v, (list, tuple)):
            yield from _flatten(v)
        else:
            yield float(v)


class _Numeric:
    """Pure aggregation helpers exposed to scripts as the `numpy` name."""

    pi = math.pi
    e = math.e

    @staticmethod
    def mean(values):
        data = list(_flatten(values))
        if not data:
            raise ValueError("mean of empty sequence")
        return sum(data) / len(data)

    @staticmethod
    def sum(values):
        return sum(_flatten(values))

    @staticmethod
    def min(values):
        return min(_flatten(values))

    @staticmethod
    def max(values):
        return max(_flatten(values))

    @staticmethod
    def median(values):
        data = sorted(_flatten(values))
        if not data:
            raise ValueError("median of empty sequence")
        n = len(data)
        mid = n // 2
        return data[mid] if n % 2 else 0.5 * (data[mid - 1] + data[mid])

    @staticmethod
    def std(values):
        data = list(_flatten(values))
        if not data:
            raise ValueError("std of empty sequence")
        m = sum(data) / len(data)
        return math.sqrt(sum((v - m) ** 2 for v in data) / len(data))

    @staticmethod
    def var(values):
        s = _Numeric.std(values)
        return s * s

    @staticmethod
    def sqrt(value):
        return math.sqrt(value)

    @staticmethod
    def hypot(a, b):
        return math.hypot(a, b)

    @staticmethod
    def abs(value):
        return abs(value)


class _MathProxy:
    _ALLOWED = ("sqrt", "hypot", "sin", "cos", "tan", "asin", "acos", "atan",
                "atan2", "exp", "log", "log2", "log10", "floor", "ceil", "fabs",
                "pow", "isnan", "isfinite", "degrees", "radians",
                "pi", "e", "tau", "inf")

    def __getattr__(self, name):
        if name in self._ALLOWED:
            return getattr(math, name)
        raise AttributeError(f"math helper {name!r} is not whitelisted")


_SAFE_BUILTINS = {
    "abs": abs, "min": min, "max": max, "sum": sum, "len": len, "range": range,
    "enumerate": enumerate, "zip": zip, "round": round, "float": float,
    "int": int, "bool": bool, "sorted": sorted, "reversed": reversed,
    "map": map, "filter": filter, "all": all, "any": any, "pow": pow,
    "divmod": divmod, "list": list, "tuple": tuple, "True": True,
    "False": False, "None": None,
}


def _build_namespace() -> dict:
    return {
        "__builtins__": dict(_SAFE_BUILTINS),
        "math": _MathProxy(),
        "numpy": _Numeric(),
    }


def _apply_limits(max_memory_bytes: int) -> None:
    try:
        import resource

        resource.setrlimit(resource.RLIMIT_AS, (max_memory_bytes, max_memory_bytes))
    except (ImportError, ValueError, OSError):
        pass  # best effort; the parent's kill switch still applies
    sys.setrecursionlimit(500)


def _reply(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def serve_stdio() -> None:
    """Run the load/eval loop until stdin closes."""
    namespace = _build_namespace()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            _reply({"status": "error", "detail": "malformed message"})
            continue
        op = message.get("op")
        if op == "exit":
            break
        if op == "load":
            _apply_limits(int(message.get("maxMemoryMb", 256)) * 1024 * 1024)
            try:
                exec(compile(message["source"], "<feature spec>", "exec"),  # noqa: S102
                     namespace)
            except BaseException as exc:
                _reply({"status": "fatal", "detail": f"{type(exc).__name__}: {exc}"})
                return
            _reply({"status": "ready"})
            continue
        if op == "eval":
            fn = namespace.get(message.get("name", ""))
            if not callable(fn):
                _reply({"status": "error",
                        "detail": f"function {message.get('name')!r} is not defined"})
                continue
            try:
                value = fn(message["strokes"])
                value = float(value)
            except BaseException as exc:
                _reply({"status": "error", "detail": f"{type(exc).__name__}: {exc}"})
                continue
            if math.isfinite(value):
                _reply({"status": "ok", "value": value})
            else:
                _reply({"status": "error", "detail": f"non-finite result {value!r}",
                        "nonFinite": True})
            continue
        _reply({"status": "error", "detail": f"unknown op {op!r}"})


if __name__ == "__main__":
    serve_stdio()
