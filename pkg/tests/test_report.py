import pytest
from jinja2 import UndefinedError

from utils.report import MODESELECT_TEMPLATE, render_report


@pytest.fixture
def table_context():
    return {
        "set_name": "canonical",
        "subset_count": 11,
        "failure_count": 1,
        "kind": "directivity",
        "polarization": "theta",
        "best": [{"size": 2, "label": "VED, [MDX, MDY]", "kpi_db": 3.25}],
        "degeneracy_tolerance_db": 0.05,
        "degenerate": ["VED, [MDX, MDY]"],
    }


def test_render_modeselect_table(tmp_path, table_context):
    path = render_report(MODESELECT_TEMPLATE, tmp_path / "table.md", table_context)

    text = open(path).read()
    assert "| 2 | VED, [MDX, MDY] | 3.250 |" in text
    assert "1 skipped for zero-norm DoAs" in text
    assert "- VED, [MDX, MDY]" in text


def test_render_with_custom_template_dir(tmp_path):
    templates = tmp_path / "templates"
    templates.mkdir()
    (templates / "note.md.j2").write_text("KPI {{ kpi_db }} dB\n")

    path = render_report("note.md.j2", tmp_path / "out" / "note.md", {"kpi_db": 4.5}, template_dir=str(templates))

    assert open(path).read() == "KPI 4.5 dB\n"


def test_render_rejects_missing_values(tmp_path, table_context):
    del table_context["best"]
    with pytest.raises(UndefinedError):
        render_report(MODESELECT_TEMPLATE, tmp_path / "table.md", table_context)
