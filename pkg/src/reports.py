"""Plain-text report rendering from Jinja2 templates."""
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined

TEMPLATE_DIR = Path(__file__).parent / "templates"


def _sci(value: float) -> str:
    return f"{value:.3e}"


_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)
_env.filters["sci"] = _sci


def render(template: str, **context) -> str:
    return _env.get_template(template).render(**context)
