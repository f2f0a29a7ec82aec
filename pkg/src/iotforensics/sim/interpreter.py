"""Tree-walking interpreter for smart-app handlers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from ..frontend import ast as A
from ..frontend.classify import HTTP_CALLS, MESSAGE_CALLS
from ..frontend.errors import Span

MAX_DEPTH = 64


class InterpreterError(Exception):
    def __init__(self, message: str, origin: str = "<app>", span: Span | None = None) -> None:
        where = f"{origin}@{span.start}" if span is not None else origin
        super().__init__(f"{where}: {message}")
        self.message = message
        self.origin = origin
        self.span = span


@dataclass(frozen=True)
class DeviceRef:
    id: str

    def __str__(self) -> str:
        return self.id


class DeviceGroup(tuple):
    """Multiple-device input; renders as comma-separated ids."""

    def __str__(self) -> str:
        return ",".join(d.id for d in self)


@dataclass(frozen=True)
class MethodRef:
    name: str


@dataclass(frozen=True)
class Provenance:
    controller_id: str | None = None
    location: str | None = None     # controller location, Office or Other
    physical: bool = False


@dataclass(frozen=True)
class Event:
    device_id: str
    name: str
    value: object
    provenance: Provenance = Provenance()

    def get(self, prop: str):
        if prop == "value" or prop == "stringValue":
            return to_text(self.value)
        if prop == "name":
            return self.name
        if prop == "deviceId":
            return self.device_id
        if prop == "device":
            return DeviceRef(self.device_id)
        if prop == "displayName":
            return self.device_id
        if prop in ("doubleValue", "floatValue", "numberValue"):
            return _number(self.value, float)
        if prop == "integerValue":
            return int(_number(self.value, float))
        if prop == "isPhysical":
            return self.provenance.physical
        raise KeyError(prop)


def _number(value, kind):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ValueError(f"{value!r} is not numeric") from None


@dataclass(frozen=True)
class Effect:
    ts: int
    app_id: str
    kind: str        # command | message | http
    target: str      # device id, recipient, or url
    name: str        # command name, message api, or http verb
    args: tuple = ()


class Host(Protocol):
    """Services the runtime provides to running apps."""

    def now(self) -> int: ...
    def location_mode(self) -> str: ...
    def set_mode(self, app: AppInstance, mode: str) -> None: ...
    def current_value(self, device_id: str, attribute: str): ...
    def device_commands(self, device_id: str) -> dict: ...
    def command(self, app: AppInstance, device_id: str, command: str, args: tuple) -> None: ...
    def message(self, app: AppInstance, api: str, recipient: str, text: str) -> None: ...
    def http(self, app: AppInstance, api: str, url: str, body) -> None: ...
    def schedule_in(self, app: AppInstance, seconds: float, method: str) -> None: ...
    def schedule_cron(self, app: AppInstance, cron: str, method: str) -> None: ...
    def unschedule(self, app: AppInstance, method: str | None) -> None: ...
    def subscribe(self, app: AppInstance, target, attribute: str, method: str) -> None: ...
    def unsubscribe(self, app: AppInstance) -> None: ...
    def log_iotdots(self, app: AppInstance, message: str) -> None: ...


@dataclass
class AppInstance:
    app_id: str
    ast: A.SmartAppAst
    settings: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)

    @property
    def origin(self) -> str:
        return self.ast.origin


def to_text(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, (list, tuple)) and not isinstance(value, DeviceGroup):
        return "[" + ", ".join(to_text(v) for v in value) + "]"
    return str(value)


def truthy(value) -> bool:
    if isinstance(value, (DeviceRef, MethodRef)):
        return True
    return bool(value)


class _Return(Exception):
    def __init__(self, value) -> None:
        self.value = value


_LOG_LEVELS = {"debug", "info", "trace", "warn", "error"}


class Interpreter:
    def __init__(self, host: Host) -> None:
        self.host = host
        self.effects: list[Effect] = []
        self._depth = 0

    # -- entry points ---------------------------------------------------------

    def eval_handler(self, app: AppInstance, method: str, event: Event | None = None) -> list[Effect]:
        """Run one handler invocation; returns the side effects it produced."""
        start = len(self.effects)
        args = [event] if event is not None else []
        self.call_method(app, method, args, None)
        return self.effects[start:]

    def run_preferences(self, app: AppInstance) -> None:
        """Execute statements placed in preference sections (install time)."""
        for section in app.ast.sections:
            for item in section.body:
                if not isinstance(item, A.InputDecl):
                    self.exec_stmt(app, item, {})

    def call_method(self, app: AppInstance, name: str, args: list, span: Span | None):
        decl = app.ast.method(name)
        if decl is None:
            raise InterpreterError(f"unknown method '{name}'", app.origin, span)
        if self._depth >= MAX_DEPTH:
            raise InterpreterError(f"call depth exceeded in '{name}'", app.origin, span)
        frame = {p: (args[i] if i < len(args) else None) for i, p in enumerate(decl.params)}
        self._depth += 1
        try:
            self.exec_block(app, decl.body, frame)
        except _Return as ret:
            return ret.value
        finally:
            self._depth -= 1
        return None

    # -- statements -----------------------------------------------------------

    def exec_block(self, app: AppInstance, body, frame: dict) -> None:
        for stmt in body:
            self.exec_stmt(app, stmt, frame)

    def exec_stmt(self, app: AppInstance, stmt, frame: dict) -> None:
        if isinstance(stmt, A.ExprStmt):
            self.eval(app, stmt.expr, frame)
        elif isinstance(stmt, A.Assign):
            value = self.eval(app, stmt.value, frame)
            self.assign(app, stmt.target, value, frame, stmt.declare)
        elif isinstance(stmt, A.If):
            if truthy(self.eval(app, stmt.cond, frame)):
                self.exec_block(app, stmt.then, frame)
            elif stmt.orelse is not None:
                self.exec_block(app, stmt.orelse, frame)
        elif isinstance(stmt, A.Return):
            raise _Return(None if stmt.value is None else self.eval(app, stmt.value, frame))
        elif isinstance(stmt, A.Comment):
            pass
        else:
            raise InterpreterError(f"cannot execute {type(stmt).__name__}", app.origin, stmt.span)

    def assign(self, app: AppInstance, target, value, frame: dict, declare: bool) -> None:
        if isinstance(target, A.Name):
            frame[target.id] = value
            return
        if isinstance(target, A.Member) and isinstance(target.obj, A.Name) and target.obj.id == "state":
            if "state" not in frame:
                app.state[target.name] = value
                return
        raise InterpreterError("unsupported assignment target", app.origin, target.span)

    # -- expressions ----------------------------------------------------------

    def eval(self, app: AppInstance, expr, frame: dict):
        if isinstance(expr, A.Literal):
            return expr.value
        if isinstance(expr, A.Name):
            return self.lookup(app, expr, frame)
        if isinstance(expr, A.GString):
            return "".join(p if isinstance(p, str) else to_text(self.eval(app, p, frame))
                           for p in expr.parts)
        if isinstance(expr, A.Member):
            obj = self.eval(app, expr.obj, frame)
            return self.get_member(app, obj, expr.name, expr)
        if isinstance(expr, A.Call):
            return self.eval_call(app, expr, frame)
        if isinstance(expr, A.BinOp):
            return self.binop(app, expr, frame)
        if isinstance(expr, A.Compare):
            left = self.eval(app, expr.left, frame)
            right = self.eval(app, expr.right, frame)
            return self.compare(app, expr, left, right)
        if isinstance(expr, A.Unary):
            value = self.eval(app, expr.operand, frame)
            if expr.op == "!":
                return not truthy(value)
            if expr.op == "-" and isinstance(value, (int, float)) and not isinstance(value, bool):
                return -value
            raise InterpreterError(f"bad operand for unary {expr.op}", app.origin, expr.span)
        if isinstance(expr, A.ListLit):
            return [self.eval(app, e, frame) for e in expr.items]
        raise InterpreterError(f"cannot evaluate {type(expr).__name__}", app.origin, getattr(expr, "span", None))

    def lookup(self, app: AppInstance, name: A.Name, frame: dict):
        key = name.id
        if key in frame:
            return frame[key]
        if key in app.settings:
            return app.settings[key]
        if key in ("location", "state", "settings", "log"):
            return _Global(key)
        if app.ast.method(key) is not None:
            return MethodRef(key)
        if app.ast.input(key) is not None:
            return None  # declared but unset optional input
        raise InterpreterError(f"unbound identifier '{key}'", app.origin, name.span)

    def get_member(self, app: AppInstance, obj, name: str, node):
        if isinstance(obj, _Global):
            if obj.name == "location":
                if name in ("mode", "currentMode"):
                    return self.host.location_mode()
                if name == "name":
                    return "office"
            elif obj.name == "state":
                return app.state.get(name)
            elif obj.name == "settings":
                return app.settings.get(name)
        elif isinstance(obj, Event):
            try:
                return obj.get(name)
            except KeyError:
                pass
            except ValueError as exc:
                raise InterpreterError(str(exc), app.origin, node.span) from None
        elif isinstance(obj, DeviceRef):
            if name == "id" or name == "displayName" or name == "label":
                return obj.id
            if name.startswith("current") and len(name) > 7:
                attr = name[7].lower() + name[8:]
                return self.host.current_value(obj.id, attr)
        elif isinstance(obj, DeviceGroup):
            if name.startswith("current") and len(name) > 7:
                attr = name[7].lower() + name[8:]
                return [self.host.current_value(d.id, attr) for d in obj]
        raise InterpreterError(f"unknown property '{name}'", app.origin, node.span)

    def binop(self, app: AppInstance, expr: A.BinOp, frame: dict):
        if expr.op == "&&":
            return truthy(self.eval(app, expr.left, frame)) and truthy(self.eval(app, expr.right, frame))
        if expr.op == "||":
            return truthy(self.eval(app, expr.left, frame)) or truthy(self.eval(app, expr.right, frame))
        left = self.eval(app, expr.left, frame)
        right = self.eval(app, expr.right, frame)
        if expr.op == "+" and (isinstance(left, str) or isinstance(right, str)):
            return to_text(left) + to_text(right)
        if not (_is_num(left) and _is_num(right)):
            raise InterpreterError(f"bad operands for {expr.op}", app.origin, expr.span)
        try:
            if expr.op == "+":
                return left + right
            if expr.op == "-":
                return left - right
            if expr.op == "*":
                return left * right
            if expr.op == "/":
                return left / right
            if expr.op == "%":
                return left % right
        except ZeroDivisionError:
            raise InterpreterError("division by zero", app.origin, expr.span) from None
        raise InterpreterError(f"unknown operator {expr.op}", app.origin, expr.span)

    def compare(self, app: AppInstance, expr: A.Compare, left, right):
        if isinstance(left, DeviceRef):
            left = left.id
        if isinstance(right, DeviceRef):
            right = right.id
        if expr.op == "==":
            return left == right
        if expr.op == "!=":
            return left != right
        if not ((_is_num(left) and _is_num(right)) or (isinstance(left, str) and isinstance(right, str))):
            raise InterpreterError(f"cannot order {to_text(left)} and {to_text(right)}", app.origin, expr.span)
        return {"<": left < right, ">": left > right, "<=": left <= right, ">=": left >= right}[expr.op]

    # -- calls ----------------------------------------------------------------

    def eval_call(self, app: AppInstance, call: A.Call, frame: dict):
        func = call.func
        if isinstance(func, A.Member):
            obj = self.eval(app, func.obj, frame)
            args = [self.eval(app, a.value, frame) for a in call.args if a.name is None]
            named = {a.name: self.eval(app, a.value, frame) for a in call.args if a.name is not None}
            return self.call_member(app, obj, func.name, args, named, call)
        if not isinstance(func, A.Name):
            raise InterpreterError("call target is not callable", app.origin, call.span)
        name = func.id
        args = [self.eval(app, a.value, frame) for a in call.args if a.name is None]
        named = {a.name: self.eval(app, a.value, frame) for a in call.args if a.name is not None}
        if name in frame:
            raise InterpreterError(f"'{name}' is not callable", app.origin, call.span)
        if app.ast.method(name) is not None:
            return self.call_method(app, name, args, call.span)
        return self.builtin(app, name, args, named, call)

    def _method_name(self, app: AppInstance, value, call: A.Call) -> str:
        name = value.name if isinstance(value, MethodRef) else value
        if not isinstance(name, str) or app.ast.method(name) is None:
            raise InterpreterError(f"unknown method '{to_text(name)}'", app.origin, call.span)
        return name

    def _record(self, app: AppInstance, kind: str, target: str, name: str, args: tuple) -> None:
        self.effects.append(Effect(self.host.now(), app.app_id, kind, target, name, args))

    def builtin(self, app: AppInstance, name: str, args: list, named: dict, call: A.Call):
        host = self.host
        if name == "now":
            return host.now()
        if name == "subscribe":
            if len(args) < 2:
                raise InterpreterError("subscribe needs a target and an attribute", app.origin, call.span)
            target, attribute = args[0], args[1]
            handler = self._method_name(app, args[2], call) if len(args) > 2 else None
            if handler is None:
                raise InterpreterError("subscribe needs a handler", app.origin, call.span)
            targets = target if isinstance(target, DeviceGroup) else (target,)
            for t in targets:
                if t is None:
                    continue
                host.subscribe(app, t.id if isinstance(t, DeviceRef) else "location", str(attribute), handler)
            return None
        if name == "unsubscribe":
            host.unsubscribe(app)
            return None
        if name == "runIn":
            if len(args) < 2 or not _is_num(args[0]):
                raise InterpreterError("runIn needs seconds and a handler", app.origin, call.span)
            host.schedule_in(app, float(args[0]), self._method_name(app, args[1], call))
            return None
        if name == "schedule":
            if len(args) < 2:
                raise InterpreterError("schedule needs a cron expression and a handler", app.origin, call.span)
            host.schedule_cron(app, str(args[0]), self._method_name(app, args[1], call))
            return None
        if name.startswith("runEvery"):
            minutes = {"runEvery1Minute": 1, "runEvery5Minutes": 5, "runEvery15Minutes": 15,
                       "runEvery1Hour": 60}.get(name)
            if minutes is None or not args:
                raise InterpreterError(f"unknown builtin '{name}'", app.origin, call.span)
            host.schedule_cron(app, f"@every {minutes * 60}", self._method_name(app, args[0], call))
            return None
        if name == "unschedule":
            host.unschedule(app, self._method_name(app, args[0], call) if args else None)
            return None
        if name in MESSAGE_CALLS:
            if name in ("sendSms", "sendSmsMessage"):
                if len(args) < 2:
                    raise InterpreterError(f"{name} needs a recipient and text", app.origin, call.span)
                recipient, text = to_text(args[0]), to_text(args[1])
            elif name == "sendNotificationToContacts":
                text = to_text(args[0]) if args else ""
                recipient = to_text(args[1]) if len(args) > 1 else "contacts"
            else:
                text, recipient = (to_text(args[0]) if args else ""), "push"
            host.message(app, name, recipient, text)
            self._record(app, "message", recipient, name, (text,))
            return None
        if name in HTTP_CALLS:
            url = args[0] if args else named.get("uri")
            body = args[1] if len(args) > 1 else named.get("body")
            host.http(app, name, to_text(url), body)
            self._record(app, "http", to_text(url), name, (to_text(body),))
            return None
        raise InterpreterError(f"unknown method '{name}'", app.origin, call.span)

    def call_member(self, app: AppInstance, obj, name: str, args: list, named: dict, call: A.Call):
        if isinstance(obj, _Global):
            if obj.name == "log":
                if name == "iotdots":
                    self.host.log_iotdots(app, to_text(args[0]) if args else "")
                    return None
                if name in _LOG_LEVELS:
                    return None
            elif obj.name == "location" and name == "setMode" and args:
                self.host.set_mode(app, to_text(args[0]))
                return None
            raise InterpreterError(f"unknown method '{obj.name}.{name}'", app.origin, call.span)
        if isinstance(obj, (DeviceRef, DeviceGroup)):
            devices = obj if isinstance(obj, DeviceGroup) else (obj,)
            if name in ("currentValue", "latestValue"):
                values = [self.host.current_value(d.id, to_text(args[0]) if args else "") for d in devices]
                return values[0] if isinstance(obj, DeviceRef) else values
            if name == "hasCommand":
                return all(to_text(args[0]) in self.host.device_commands(d.id) for d in devices)
            if name == "size" and isinstance(obj, DeviceGroup):
                return len(obj)
            for d in devices:
                if name not in self.host.device_commands(d.id):
                    raise InterpreterError(f"unknown command '{name}' for device {d.id}", app.origin, call.span)
            for d in devices:
                self.host.command(app, d.id, name, tuple(args))
                self._record(app, "command", d.id, name, tuple(to_text(a) for a in args))
            return None
        if obj is None:
            raise InterpreterError(f"cannot call '{name}' on null", app.origin, call.span)
        if isinstance(obj, str):
            if name == "toInteger":
                return int(_str_number(app, obj, call))
            if name in ("toDouble", "toFloat", "toBigDecimal"):
                return _str_number(app, obj, call)
            if name == "toString":
                return obj
            if name in ("contains", "startsWith", "endsWith") and args:
                return getattr(obj, {"contains": "__contains__", "startsWith": "startswith",
                                     "endsWith": "endswith"}[name])(to_text(args[0]))
        if _is_num(obj):
            if name == "toInteger":
                return int(obj)
            if name == "toDouble":
                return float(obj)
            if name == "toString":
                return to_text(obj)
        if isinstance(obj, list):
            if name == "size":
                return len(obj)
            if name == "contains" and args:
                return args[0] in obj
        raise InterpreterError(f"unknown method '{name}'", app.origin, call.span)


@dataclass(frozen=True)
class _Global:
    name: str


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _str_number(app: AppInstance, text: str, call: A.Call) -> float:
    try:
        return float(text)
    except ValueError:
        raise InterpreterError(f"'{text}' is not numeric", app.origin, call.span) from None
