"""Statement-shape classification shared by the instrumenter and interpreter."""
from __future__ import annotations

import enum

from .ast import Call, Member, Name, SmartAppAst

SCHEDULE_CALLS = frozenset({
    "runIn", "runOnce", "schedule", "unschedule",
    "runEvery1Minute", "runEvery5Minutes", "runEvery15Minutes", "runEvery1Hour",
})
MESSAGE_CALLS = frozenset({
    "sendPush", "sendSms", "sendSmsMessage", "sendPushMessage",
    "sendNotification", "sendNotificationToContacts", "sendNotificationEvent",
})
HTTP_CALLS = frozenset({
    "httpPost", "httpGet", "httpPut", "httpDelete", "httpPostJson", "httpPutJson",
    "asynchttp_v1.post", "asynchttp_v1.get", "asynchttp_v1.put",
})
# device methods that read state rather than actuate
DEVICE_QUERIES = frozenset({
    "currentValue", "latestValue", "currentState", "latestState", "hasCommand",
    "hasCapability", "hasAttribute", "size",
})
LOG_PREFIX = "log."
IOTDOTS_LOG = "log.iotdots"


class CallKind(enum.Enum):
    SUBSCRIPTION = "subscription"
    DEVICE_COMMAND = "device-command"
    METHOD = "method-call"
    SCHEDULE = "schedule"
    MESSAGE = "send-message"
    HTTP = "http"
    LOG = "log"
    LOCATION = "location"
    BUILTIN = "builtin"


def classify_call(call: Call, app: SmartAppAst) -> CallKind:
    callee = call.callee
    if callee == "subscribe":
        return CallKind.SUBSCRIPTION
    if callee in SCHEDULE_CALLS:
        return CallKind.SCHEDULE
    if callee in MESSAGE_CALLS:
        return CallKind.MESSAGE
    if callee in HTTP_CALLS:
        return CallKind.HTTP
    if callee.startswith(LOG_PREFIX):
        return CallKind.LOG
    if isinstance(call.func, Member) and isinstance(call.func.obj, Name):
        owner = call.func.obj.id
        if owner == "location":
            return CallKind.LOCATION
        decl = app.input(owner)
        if decl is not None and decl.is_device:
            if call.func.name in DEVICE_QUERIES:
                return CallKind.BUILTIN
            return CallKind.DEVICE_COMMAND
    if isinstance(call.func, Name) and app.method(call.func.id) is not None:
        return CallKind.METHOD
    return CallKind.BUILTIN


def is_iotdots_log(call: Call) -> bool:
    return call.callee == IOTDOTS_LOG
