import math

from photocov.printing import format_value, table


def test_format_value():
    assert format_value(True) == "yes"
    assert format_value(12) == "12"
    assert format_value(1 / 3) == "0.333333"
    assert format_value(36.00000000000001) == "36"
    assert format_value(math.nan) == ""
    assert format_value("grid") == "grid"


def test_table():
    text = table([["grid", 1.25, 2], ["coverage", 0.5, 0]], ["configuration", "H_h", "empty"])
    lines = text.splitlines()
    assert lines[0].split() == ["configuration", "H_h", "empty"]
    assert lines[2].split() == ["grid", "1.25", "2"]
    piped = table([[1.0]], ["H_g"], tablefmt="pipe")
    assert piped.splitlines()[0].startswith("|")
    assert table([[1 / 3]], ["x"], digits=2).splitlines()[-1].strip() == "0.33"
