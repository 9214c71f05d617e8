from typing import Any

import requests
from loguru import logger as LOGGER

from configuration.types import Notification

from .message import Message

TIMEOUT = 10
JSON_HEADERS = {"Content-Type": "application/json"}

type Payload = dict[str, Any]


def post_json(url: str, payload: Payload) -> requests.Response | None:
    try:
        return requests.request(
            method="POST",
            url=url,
            headers=JSON_HEADERS,
            json=payload,
            timeout=TIMEOUT,
        )
    except requests.RequestException as e:
        # a lost notification never fails a run
        LOGGER.debug(f"notification to {url} failed: {e}")
        return None


def targets(notification: Notification, message: Message) -> list[tuple[str, Payload]]:
    text = f"{message.level.name} {message.message}"
    out: list[tuple[str, Payload]] = []

    if (discord := notification.discord) is not None:
        out.append((discord.webhook_url, {"content": text}))

    if (slack := notification.slack) is not None:
        out.append((slack.webhook_url, {"text": text}))

    if (telegram := notification.telegram) is not None:
        url = f"https://api.telegram.org/bot{telegram.bot_token}/sendMessage"
        out.append((url, {"chat_id": telegram.chat_id, "text": text}))

    if (generic := notification.generic) is not None:
        out.append((generic.webhook_url, {"level": message.level.value, "message": message.message}))

    return out


def push_message(notification: Notification, message: Message) -> list[requests.Response | None]:
    return [post_json(url, payload) for url, payload in targets(notification, message)]


def log_message(notification: Notification, message: Message, push: bool = True) -> None:
    LOGGER.log(message.level.name, message.message)
    if push:
        push_message(notification, message)
