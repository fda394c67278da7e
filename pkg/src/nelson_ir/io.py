"""CSV tables with a commented header block, and the run manifest."""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, header=None):
    """Write ``rows`` under a ``# key: value`` header block.

    Floats are written with ``repr`` so the body round-trips exactly and is
    byte-identical across reruns. Timestamps never go into the header.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """Return ``(header, columns, rows)``; numeric fields come back as floats."""
    header, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                header[key.strip()] = value.strip()
            elif line:
                lines.append(line.split(","))
    columns, body = lines[0], lines[1:]

    def conv(x):
        try:
            return float(x)
        except ValueError:
            return x

    return header, columns, [[conv(x) for x in row] for row in body]


@dataclass
class RunManifest:
    config: dict
    config_ini: str
    config_hash: str
    seed: int
    version: str
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add(self, subcommand, path, seconds=None):
        self.outputs.setdefault(subcommand, []).append(os.path.basename(path))
        if seconds is not None:
            self.timings[subcommand] = round(float(seconds), 3)

    def check(self, out_dir):
        """Every listed file exists and carries the config hash."""
        for files in self.outputs.values():
            for name in files:
                p = os.path.join(out_dir, name)
                if not os.path.exists(p):
                    raise FileNotFoundError(p)
                if name.endswith(".csv"):
                    header, _, _ = read_csv(p)
                    if header.get("config_hash") != self.config_hash:
                        raise ValueError(f"{name} lacks the config hash")
        return True

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
        return path

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


__all__ = ["RunManifest", "read_csv", "write_csv"]
