"""Compile and evaluate user-supplied feature definitions, safely.

A feature spec is a small script defining pure, arity-1 functions over the
positional strokes structure ([[x, y, t, touchId], ...] per stroke). Scripts
are statically validated against a node and name whitelist, then executed in
a dedicated OS process with a memory ceiling; the host kills the process if
a call exceeds its time budget. Scripts cannot import modules, touch files
or sockets, or reach host state; only whitelisted math and aggregation
helpers are available (a `numpy` name maps to the aggregation helpers).
"""

from __future__ import annotations

import ast
import json
import math
import os
import selectors
import subprocess
import sys
import time
from dataclasses import dataclass

from .errors import (FeatureCollisionError, NonFiniteResultError,
                     PolicyViolationError, SandboxRuntimeError,
                     SandboxTimeoutError, SpecCompileError)
from .features import FeatureDefinition, is_builtin
from .gestures import Gesture, strokes_to_obj

MAX_SOURCE_BYTES = 64 * 1024
_STARTUP_TIMEOUT_S = 10.0

_ALLOWED_NODES = (
    ast.Module, ast.FunctionDef, ast.arguments, ast.arg, ast.Return, ast.Expr,
    ast.Assign, ast.AugAssign, ast.AnnAssign, ast.Name, ast.Load, ast.Store,
    ast.Constant, ast.Tuple, ast.List, ast.Dict, ast.Set, ast.Subscript,
    ast.Slice, ast.Attribute, ast.Call, ast.keyword, ast.Starred, ast.IfExp,
    ast.If, ast.For, ast.While, ast.Break, ast.Continue, ast.Pass, ast.BoolOp,
    ast.BinOp, ast.UnaryOp, ast.Compare, ast.Lambda, ast.ListComp, ast.SetComp,
    ast.DictComp, ast.GeneratorExp, ast.comprehension, ast.FormattedValue,
    ast.JoinedStr, ast.NamedExpr,
    # operators
    ast.And, ast.Or, ast.Not, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv,
    ast.Mod, ast.Pow, ast.USub, ast.UAdd, ast.Eq, ast.NotEq, ast.Lt, ast.LtE,
    ast.Gt, ast.GtE, ast.Is, ast.IsNot, ast.In, ast.NotIn, ast.BitAnd,
    ast.BitOr, ast.BitXor, ast.LShift, ast.RShift, ast.Invert,
)


@dataclass(frozen=True)
class SandboxPolicy:
    max_eval_millis: int = 100
    max_memory_mb: int = 256
    max_source_bytes: int = MAX_SOURCE_BYTES

    def __post_init__(self):
        if self.max_eval_millis <= 0 or self.max_memory_mb <= 0:
            raise ValueError("sandbox budgets must be positive")


@dataclass(frozen=True)
class FeatureSpecSource:
    source_text: str


def _validate_tree(tree: ast.Module) -> list[str]:
    """Return top-level function names; raise on forbidden constructs."""
    names: list[str] = []
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise PolicyViolationError(
                f"construct {type(node).__name__} is not allowed "
                f"(line {getattr(node, 'lineno', '?')})")
        if isinstance(node, (ast.Name, ast.arg)):
            ident = node.id if isinstance(node, ast.Name) else node.arg
            if ident.startswith("_"):
                raise PolicyViolationError(
                    f"underscore-prefixed name {ident!r} is not allowed")
        if isinstance(node, ast.Attribute) and node.attr.startswith("_"):
            raise PolicyViolationError(
                f"underscore-prefixed attribute {node.attr!r} is not allowed")
    for node in tree.body:
        if isinstance(node, ast.FunctionDef):
            args = node.args
            if (len(args.args) != 1 or args.vararg or args.kwarg
                    or args.kwonlyargs or args.defaults or args.posonlyargs):
                raise PolicyViolationError(
                    f"function {node.name!r} must take exactly one argument")
            names.append(node.name)
    return names


class _Worker:
    """One sandboxed interpreter process speaking JSON lines over stdio."""

    def __init__(self, source: str, policy: SandboxPolicy):
        self._proc = subprocess.Popen(
            [sys.executable, "-u", "-c",
             "from gesturecast._sandbox_worker import serve_stdio; serve_stdio()"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True)
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)
        self._buffer = ""
        self._send({"op": "load", "source": source,
                    "maxMemoryMb": policy.max_memory_mb})
        reply = self._recv(_STARTUP_TIMEOUT_S)
        if reply.get("status") != "ready":
            detail = reply.get("detail", "no response")
            self.kill()
            raise SandboxRuntimeError(f"feature spec failed to load: {detail}")

    def _send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise SandboxRuntimeError("sandbox worker is gone") from None

    def _recv(self, timeout_s: float) -> dict:
        deadline = time.monotonic() + timeout_s
        while "\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not self._selector.select(remaining):
                raise SandboxTimeoutError("sandbox evaluation timed out")
            chunk = os.read(self._proc.stdout.fileno(), 65536).decode()
            if not chunk:
                raise SandboxRuntimeError("sandbox worker exited unexpectedly")
            self._buffer += chunk
        line, self._buffer = self._buffer.split("\n", 1)
        return json.loads(line)

    def eval(self, name: str, strokes: list, timeout_s: float) -> dict:
        self._send({"op": "eval", "name": name, "strokes": strokes})
        return self._recv(timeout_s)

    def alive(self) -> bool:
        return self._proc.poll() is None

    def kill(self) -> None:
        try:
            self._proc.kill()
        except OSError:
            pass
        self._proc.wait(timeout=2.0)
        self._selector.close()


class CompiledFeatureSpec:
    """A validated spec bound to one lazy evaluation process.

    The worker starts on first use and is killed on timeout or close().
    One instance must not be shared between concurrent requests.
    """

    def __init__(self, source: str, names: list[str], policy: SandboxPolicy):
        self._source = source
        self._names = tuple(names)
        self._policy = policy
        self._worker: _Worker | None = None

    @property
    def function_names(self) -> tuple[str, ...]:
        return self._names

    @property
    def policy(self) -> SandboxPolicy:
        return self._policy

    def _ensure_worker(self) -> _Worker:
        if self._worker is None or not self._worker.alive():
            self.close()
            self._worker = _Worker(self._source, self._policy)
        return self._worker

    def close(self) -> None:
        if self._worker is not None:
            self._worker.kill()
            self._worker = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def evaluate(self, name: str, gesture: Gesture) -> float:
        if name not in self._names:
            raise SandboxRuntimeError(f"spec defines no function named {name!r}")
        worker = self._ensure_worker()
        budget_s = self._policy.max_eval_millis / 1000.0
        slack_s = min(0.025, 0.25 * budget_s)  # IPC headroom, kill stays < 2x budget
        try:
            reply = worker.eval(name, strokes_to_obj(gesture), budget_s + slack_s)
        except SandboxTimeoutError:
            self.close()
            raise SandboxTimeoutError(
                f"custom feature {name!r} exceeded "
                f"{self._policy.max_eval_millis} ms") from None
        status = reply.get("status")
        if status == "ok":
            value = float(reply["value"])
            if not math.isfinite(value):
                raise NonFiniteResultError(
                    f"custom feature {name!r} returned non-finite {value!r}")
            return value
        if reply.get("nonFinite"):
            raise NonFiniteResultError(
                f"custom feature {name!r}: {reply.get('detail')}")
        raise SandboxRuntimeError(
            f"custom feature {name!r} failed: {reply.get('detail')}")

    def evaluators(self) -> dict[str, "CustomFeature"]:
        return {name: CustomFeature(self, name) for name in self._names}


@dataclass(frozen=True)
class CustomFeature:
    spec: CompiledFeatureSpec
    name: str

    def __call__(self, gesture: Gesture) -> float:
        return self.spec.evaluate(self.name, gesture)


def compile_spec(src: FeatureSpecSource | str,
                 policy: SandboxPolicy | None = None) -> tuple[CompiledFeatureSpec,
                                                               list[FeatureDefinition]]:
    """Validate a spec and return it with one FeatureDefinition per function."""
    policy = policy or SandboxPolicy()
    source = src.source_text if isinstance(src, FeatureSpecSource) else src
    if len(source.encode()) > policy.max_source_bytes:
        raise PolicyViolationError(
            f"spec exceeds the {policy.max_source_bytes} byte limit")
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise SpecCompileError(exc.msg or "syntax error", line=exc.lineno) from None
    names = _validate_tree(tree)
    for name in names:
        if is_builtin(name):
            raise FeatureCollisionError(
                f"custom feature {name!r} collides with a built-in feature")
    if len(set(names)) != len(names):
        raise FeatureCollisionError("duplicate function names in spec")

    compiled = CompiledFeatureSpec(source, names, policy)
    definitions = [
        FeatureDefinition(id=name, unit="custom", category="custom",
                          description="user-defined feature",
                          compute=CustomFeature(compiled, name))
        for name in names
    ]
    return compiled, definitions
