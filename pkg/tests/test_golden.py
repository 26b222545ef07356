"""Bit-exact rendering anchors.

The golden files under tests/golden/ were fixed at repo creation; any
rendering change that alters them is an intentional, reviewed break.
"""

from pathlib import Path

import pytest

from trajkit.actions import Action, ActionKind, Point
from trajkit.dialects import ArtifactEntry, ReferenceEntry, get_dialect

GOLDEN_DIR = Path(__file__).parent / "golden"

ACTIONS = [
    Action(ActionKind.CLICK, point=Point(616, 211)),
    Action(ActionKind.LONG_PRESS, point=Point(500, 500)),
    Action(ActionKind.SCROLL, point=Point(616, 685), direction="up"),
    Action(ActionKind.TYPE, text="coffee shops", submit=True),
    Action(ActionKind.OPEN, app="maps"),
    Action(ActionKind.PRESS, button="ENTER"),
    Action(ActionKind.WAIT, duration=2.0),
    Action(ActionKind.STOP),
]


def render_fixture(dialect_id: str) -> str:
    d = get_dialect(dialect_id)
    chunks = []
    for a in ACTIONS:
        if a.kind not in d.action_support:
            continue
        chunks.append(f"=== response {a.encode()}")
        if d.supports_thought:
            chunks.append(d.render_response(a, thought="inspect the screen",
                                            conclusion="done"))
        else:
            chunks.append(d.render_response(a))
        chunks.append(f"=== reference-entry {a.encode()}")
        chunks.append(d.render_history_entry(ReferenceEntry(index=0, action=a)))
        chunks.append(f"=== artifact-entry {a.encode()}")
        chunks.append(d.render_history_entry(ArtifactEntry(
            index=1, action=a, thought="prior reasoning", conclusion="press enter")))
    if d.supports_thought:
        chunks.append("=== fixed-thought")
        chunks.append(d.render_fixed_thought("the pinned trace"))
    return "\n".join(chunks) + "\n"


@pytest.mark.parametrize("dialect_id", ["xml-toolcall", "thought-action", "plain-json"])
def test_rendering_matches_golden_file(dialect_id):
    golden = (GOLDEN_DIR / f"{dialect_id}.txt").read_text(encoding="utf-8")
    assert render_fixture(dialect_id) == golden


@pytest.mark.parametrize("dialect_id", ["xml-toolcall", "thought-action", "plain-json"])
def test_golden_responses_parse_back(dialect_id):
    """Every response block in the golden file decodes to the header action."""
    d = get_dialect(dialect_id)
    golden = (GOLDEN_DIR / f"{dialect_id}.txt").read_text(encoding="utf-8")
    blocks = golden.split("=== ")
    for block in blocks:
        if not block.startswith("response "):
            continue
        header, _, body = block.partition("\n")
        expected = header[len("response "):]
        parsed = d.parse_response(body)
        assert parsed.ok, (dialect_id, expected, parsed.warnings)
        assert parsed.action.encode() == expected
