"""Prompt templates shipped as data assets.

Templates use single-brace ``{slot}`` placeholders. Interpolation replaces only
the slots the caller provides, so literal braces in embedded JSON examples
survive untouched (plain ``str.format`` would choke on them).
"""

from __future__ import annotations

import re
from importlib import resources

_SLOT = re.compile(r"\{([a-z][a-z0-9_]*)\}")


def load_template(name: str) -> str:
    """Return the raw template text for ``prompts/<name>.md``."""
    return resources.files(__package__).joinpath(f"{name}.md").read_text(encoding="utf-8")


def render(name: str, **slots) -> str:
    """Interpolate ``slots`` into the named template.

    Raises KeyError if a provided slot does not occur in the template; unknown
    ``{tokens}`` in the template that were not provided are left as-is.
    """
    text = load_template(name)
    for key, value in slots.items():
        token = "{" + key + "}"
        if token not in text:
            raise KeyError(f"template {name!r} has no slot {token}")
        text = text.replace(token, str(value))
    return text


def unfilled_slots(text: str) -> list[str]:
    """Names of ``{slot}`` tokens still present in interpolated text."""
    return sorted(set(_SLOT.findall(text)))
