from __future__ import annotations

import os
import re
from typing import Iterable

from .errors import ConfigError


def parse_reference_arg(reference_arg: str | Iterable[str] | Iterable[float] | None) -> list[tuple[float, float]] | None:
    """Normalize reference-DoA input into a list of ``(theta_deg, phi_deg)`` pairs.

    Accepts:
    - ``None`` -> ``None`` (caller falls back to the configured references)
    - a flat list of numbers/tokens read pairwise, e.g. ``["80", "90", "45", "0"]``
    - a string of ``theta,phi`` pairs separated by ``;`` or newlines
    - a path to a file with one ``theta,phi`` pair per line
    """
    if reference_arg is None:
        return None

    if isinstance(reference_arg, str):
        tokens = [reference_arg]
    else:
        tokens = [str(s).strip() for s in reference_arg if str(s).strip()]
    if not tokens:
        return None

    if len(tokens) == 1 and os.path.isfile(tokens[0]):
        with open(tokens[0], "r", encoding="utf-8") as f:
            raw = f.read().strip()
        return _parse_pair_text(raw, source=tokens[0]) or None

    if len(tokens) == 1 and re.search(r"[;\n]|,", tokens[0]):
        return _parse_pair_text(tokens[0], source="--ref") or None

    numbers = [_to_float(t, "--ref") for t in tokens]
    if len(numbers) % 2:
        raise ConfigError(f"Reference DoAs need theta/phi pairs; got {len(numbers)} values")
    return [(numbers[i], numbers[i + 1]) for i in range(0, len(numbers), 2)]


def _parse_pair_text(raw: str, *, source: str) -> list[tuple[float, float]]:
    pairs = []
    for chunk in re.split(r"[;\n]+", raw):
        chunk = chunk.strip()
        if not chunk or chunk.startswith("#"):
            continue
        parts = [p for p in re.split(r"[,\s]+", chunk) if p]
        if len(parts) != 2:
            raise ConfigError(f"{source}: expected 'theta,phi', got {chunk!r}")
        pairs.append((_to_float(parts[0], source), _to_float(parts[1], source)))
    return pairs


def _to_float(token: str, source: str) -> float:
    try:
        return float(token)
    except ValueError as e:
        raise ConfigError(f"{source}: invalid angle {token!r}") from e
