"""Flat text bundles for fitted artifacts (gain matrices, reduced models).

One file per artifact: `key=value` header lines, then one `[name]` block per
matrix with comma-separated rows.  Floats are printed with 17 significant
digits so save/load round-trips are exact and files are byte-reproducible.
"""

from __future__ import annotations

import numpy as np

from .dmdc import ReducedModel
from .enkf import GainApprox

FORMAT_TAG = "enkfcontrol-bundle-v1"


class BundleError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _render(kind: str, header: dict, matrices: dict) -> str:
    lines = [f"format={FORMAT_TAG}", f"kind={kind}"]
    for key, val in header.items():
        lines.append(f"{key}={_fmt(val) if isinstance(val, float) else val}")
    for name, M in matrices.items():
        lines.append(f"[{name}]")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        for row in M:
            lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _parse(text: str) -> tuple[dict, dict]:
    header: dict[str, str] = {}
    matrices: dict[str, np.ndarray] = {}
    current: list[list[float]] | None = None
    name = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            if name is not None:
                matrices[name] = np.array(current)
            name = line[1:-1]
            current = []
        elif current is not None:
            try:
                current.append([float(v) for v in line.split(",")])
            except ValueError:
                raise BundleError(f"line {lineno}: bad matrix row {line!r}") from None
        else:
            if "=" not in line:
                raise BundleError(f"line {lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
    if name is not None:
        matrices[name] = np.array(current)
    if header.get("format") != FORMAT_TAG:
        raise BundleError(f"unrecognized bundle format {header.get('format')!r}")
    return header, matrices


def save_gain(gain: GainApprox, path) -> None:
    text = _render("gain", {"mode": gain.mode, "n": str(gain.n)}, {"S0": gain.S0, "P": gain.P})
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def load_gain(path) -> GainApprox:
    with open(path) as fh:
        header, matrices = _parse(fh.read())
    if header.get("kind") != "gain":
        raise BundleError(f"expected a gain bundle, got kind={header.get('kind')!r}")
    return GainApprox(S0=matrices["S0"], P=matrices["P"], mode=header["mode"])


def save_reduced_model(model: ReducedModel, path) -> None:
    header = {
        "n": str(model.n),
        "m": str(model.m),
        "p": str(model.p),
        "dt": float(model.dt),
        "discrete": str(int(model.discrete)),
    }
    text = _render("reduced_model", header, {"A": model.A, "B": model.B, "Phi": model.Phi})
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def load_reduced_model(path) -> ReducedModel:
    with open(path) as fh:
        header, matrices = _parse(fh.read())
    if header.get("kind") != "reduced_model":
        raise BundleError(
            f"expected a reduced_model bundle, got kind={header.get('kind')!r}"
        )
    return ReducedModel(
        A=matrices["A"],
        B=matrices["B"],
        Phi=matrices["Phi"],
        dt=float(header["dt"]),
        discrete=bool(int(header["discrete"])),
    )
