"""CSV / JSON artifact writers shared by the solvers and the CLI modes."""
import csv
import json
import math
from pathlib import Path


def format_value(value):
    """Stable text form: repr for floats, 1/0 for flags"""
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, float):
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    """Write a header row plus one line per row, '.' decimals, newline-terminated"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, indent=4, sort_keys=True)
        f.write('\n')
    return path
