import sys
from typing import Dict, Optional, TextIO

import pandas as pd


def styled_title(text: str, level: int = 1, stream: Optional[TextIO] = None):
    """Print a title underlined according to its level

    Args:
        text: The title text
        level: Heading level (1 uses '=', 2 uses '-', 3 is plain)
    """
    stream = stream or sys.stdout
    rule = {1: "=", 2: "-"}.get(level)
    stream.write(f"{text}\n")
    if rule:
        stream.write(rule * len(text) + "\n")


def render_table(frame: pd.DataFrame, stream: Optional[TextIO] = None) -> None:
    """Print a DataFrame without its index"""
    stream = stream or sys.stdout
    if frame.empty:
        stream.write("(no rows)\n")
        return
    stream.write(frame.to_string(index=False) + "\n")


def render_key_values(values: Dict[str, str], stream: Optional[TextIO] = None) -> None:
    stream = stream or sys.stdout
    width = max((len(k) for k in values), default=0)
    for key, value in values.items():
        stream.write(f"{key.ljust(width)}  {value}\n")
