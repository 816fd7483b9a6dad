"""Shipped example configs.

The driving-scene template and its dependency graph are a reconstruction of
a typical structured scene-description workflow: independent environment
observations, enumeration fields that release fixed elaboration slots (3
lane time ranges, 4 critical objects with position/type/justification), and
summary fields gated on their inputs.
"""

from pathlib import Path

_HERE = Path(__file__).parent


def av_template_path() -> Path:
    return _HERE / "av_template.json"


def av_graph_path() -> Path:
    return _HERE / "av_graph.json"
