"""Per-invocation run log: Begin/End markers, resolved settings and emitted artifacts.

Log lines carry wall-clock stamps; file names carry only the command and the
process id, so the set of emitted files is the same on every rerun.
"""

from __future__ import annotations

import os
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping, Optional, Union

LOG_PREFIX = "df_eval"

PathLike = Union[str, Path]


def ensure_parent_dir(path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def append_log(log_file: Optional[PathLike], line: str) -> None:
    if not log_file:
        return
    ensure_parent_dir(log_file)
    ts = datetime.now().isoformat(timespec="seconds")
    with open(log_file, "a", encoding="utf-8") as f:
        f.write(f"[{ts}] {line.rstrip()}\n")


def _command_slug(command: str) -> str:
    return "_".join(command.split()) or "run"


def create_instance_log_file(output_directory: PathLike, command: str) -> str:
    """Create ``<output>/logs/df_eval_<command>_<pid>.log``; a numeric suffix keeps repeated runs apart."""
    logs = Path(output_directory) / "logs"
    stem = f"{LOG_PREFIX}_{_command_slug(command)}_{os.getpid()}"
    log_file = logs / f"{stem}.log"
    n = 1
    while log_file.exists():
        n += 1
        log_file = logs / f"{stem}_{n}.log"
    ensure_parent_dir(log_file)
    log_file.touch()
    return str(log_file)


def log_begin(log_file: Optional[PathLike], command: str) -> None:
    append_log(log_file, f"=== Begin {command} ===")


def log_end(log_file: Optional[PathLike], command: str, exit_code: int = 0) -> None:
    status = "" if exit_code == 0 else f" (failed, exit {exit_code})"
    append_log(log_file, f"=== End {command}{status} ===")


def log_settings(log_file: Optional[PathLike], settings: Mapping[str, Any], workers: Optional[int] = None) -> None:
    """One ``setting key = value`` line per resolved configuration key, in key order."""
    for key in sorted(settings):
        append_log(log_file, f"setting {key} = {settings[key]!r}")
    if workers is not None:
        append_log(log_file, f"workers = {workers}")


def log_artifact(log_file: Optional[PathLike], kind: str, path: PathLike) -> str:
    """Record an emitted file in the run log and return its path as a string."""
    append_log(log_file, f"wrote {kind}: {path}")
    return str(path)
