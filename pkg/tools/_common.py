from __future__ import annotations

import logging
import sys
from typing import Any

from qsmp.core.outputs import dump_json
from qsmp.core.settings import logging_level


def configure_logging(settings: dict[str, Any], override: str | None = None) -> None:
    level = (override or logging_level(settings)).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def print_json(data: Any) -> None:
    sys.stdout.write(dump_json(data).decode("utf-8"))


def report_errors(outcome) -> None:
    for error in outcome.errors:
        print(f"{error['code']}: {error['message']}", file=sys.stderr)
