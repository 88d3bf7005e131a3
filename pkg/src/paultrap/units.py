"""Parsing of numbers with unit suffixes (``10um``, ``22pF``, ``4.0MHz``)."""

import re

_PREFIX = {
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "µ": 1e-6,
    "μ": 1e-6,
    "m": 1e-3,
    "": 1.0,
    "k": 1e3,
    "M": 1e6,
    "G": 1e9,
}
_BASE = ("V", "F", "m", "Hz", "s", "K")

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PATTERN = re.compile(rf"^\s*({_NUMBER})\s*([a-zA-Zµμ]*)\s*$")


class UnitError(ValueError):
    pass


def _split_suffix(suffix):
    for base in sorted(_BASE, key=len, reverse=True):
        if suffix.endswith(base):
            prefix = suffix[: -len(base)]
            if prefix in _PREFIX:
                return _PREFIX[prefix], base
    # bare "m" is metres, "mm" millimetres; anything else is malformed
    raise UnitError(f"unrecognised unit suffix {suffix!r}")


def parse_quantity(text, unit=None):
    """Return the SI value of ``text``.

    ``unit`` is the expected base unit ("V", "F", "m", "Hz", "s", "K").
    A bare number is taken to be already in SI units of ``unit``.

    >>> parse_quantity("22pF", "F")
    2.2e-11
    >>> parse_quantity("10um", "m")
    1e-05
    """
    if isinstance(text, (int, float)):
        return float(text)
    match = _PATTERN.match(str(text))
    if match is None:
        raise UnitError(f"cannot parse quantity {text!r}")
    value = float(match.group(1))
    suffix = match.group(2)
    if not suffix:
        return value
    scale, base = _split_suffix(suffix)
    if unit is not None and base != unit:
        raise UnitError(f"{text!r} has unit {base}, expected {unit}")
    return value * scale


def format_quantity(value, unit):
    """Format an SI value with the largest prefix that keeps the mantissa >= 1."""
    if value == 0:
        return f"0{unit}"
    for prefix in ("G", "M", "k", "", "m", "u", "n", "p"):
        scale = _PREFIX[prefix]
        if abs(value) >= scale:
            return f"{value / scale:.12g}{prefix}{unit}"
    return f"{value / 1e-12:.12g}p{unit}"
