"""Markdown summaries rendered from report_templates/."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Optional, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from .command import ensure_parent_dir

EVALUATE_TEMPLATE = "evaluate_summary.md.j2"
MODESELECT_TEMPLATE = "modeselect_table.md.j2"


def default_template_dir() -> str:
    script_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(script_dir, "..", "report_templates")


def render_report(
    template_name: str,
    output_path: Union[str, Path],
    context: dict[str, Any],
    template_dir: Optional[str] = None,
) -> str:
    env = Environment(
        loader=FileSystemLoader(template_dir or default_template_dir()),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
    )
    rendered = env.get_template(template_name).render(**context)
    ensure_parent_dir(output_path)
    with open(output_path, "w", encoding="utf-8") as f:
        f.write(rendered)
    return str(output_path)
