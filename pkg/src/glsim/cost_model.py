"""Analytical FLOPs for token-selection mechanisms next to a ViT backbone.

Two counting conventions coexist on purpose. Selection mechanisms count
every multiply and every add (an n x n by n x n product costs
n*n*(2n - 1)); the backbone is counted in multiply-accumulates. Reported
values are in MFLOPs (1e6).

Token counts per mechanism:

* PSM and SACM run on an overlapping patch grid with stride P - 4, plus CLS.
* Rollout and MAWS use the plain grid plus CLS.
* GLS touches only the N patch tokens.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

from glsim.config import PRESETS, ArchConfig
from glsim.errors import InvalidConfigError

METHODS = ("PSM", "Rollout", "MAWS", "SACM", "GLS")
PAPER_ARCHS = ("B-16", "B-14", "T-16")
PAPER_SIZES = (224, 448, 768, 1024)

OVERLAP_SHRINK = 4
MAWS_COEF = 4.5
MFLOP = 1e6


@dataclass(frozen=True)
class Arch:
    name: str
    patch: int
    depth: int
    heads: int
    width: int

    @classmethod
    def from_config(cls, name: str, config: ArchConfig) -> "Arch":
        return cls(name, config.patch_size, config.depth, config.heads, config.width)


def get_arch(arch) -> Arch:
    if isinstance(arch, Arch):
        return arch
    if isinstance(arch, ArchConfig):
        return Arch.from_config("custom", arch)
    if arch in PAPER_ARCHS:
        return Arch.from_config(arch, PRESETS[arch])
    raise InvalidConfigError(f"unknown architecture {arch!r}; choose from {PAPER_ARCHS} or pass a custom Arch")


def matmul_flops(n: int) -> int:
    """Multiplies plus adds for an n x n by n x n product."""
    if n < 1:
        raise InvalidConfigError(f"matrix dimension must be >= 1, got {n}")
    return n * n * (2 * n - 1)


def _grid_side(size: int, patch: int, stride: int) -> int:
    if size < patch:
        raise InvalidConfigError(f"image size {size} smaller than patch {patch}")
    return (size - patch) // stride + 1


def overlap_stride(patch: int) -> int:
    return max(1, patch - OVERLAP_SHRINK)


def effective_tokens(method: str, arch, image_size: int) -> int:
    a = get_arch(arch)
    if method in ("PSM", "SACM"):
        return _grid_side(image_size, a.patch, overlap_stride(a.patch)) ** 2 + 1
    side = _grid_side(image_size, a.patch, a.patch)
    if method in ("Rollout", "MAWS"):
        return side * side + 1
    if method == "GLS":
        return side * side
    raise InvalidConfigError(f"unknown method {method!r}; choose from {METHODS}")


def dfsm_flops_exact(method: str, arch, image_size: int) -> int | float:
    """Raw FLOPs (not scaled)."""
    a = get_arch(arch)
    n = effective_tokens(method, a, image_size)
    L, H, D = a.depth, a.heads, a.width
    if method == "PSM":
        if L < 2:
            raise InvalidConfigError("PSM needs depth >= 2")
        return max(L - 2, 0) * H * matmul_flops(n)
    if method == "Rollout":
        # L-1 chained products plus averaging H heads in every layer
        return (L - 1) * matmul_flops(n) + L * H * n * n
    if method == "MAWS":
        return MAWS_COEF * L * H * n
    if method == "SACM":
        # element-wise products across heads in every layer plus one final pass
        return (L * (H - 1) + 1) * n * n
    if method == "GLS":
        return 3 * n * D
    raise InvalidConfigError(f"unknown method {method!r}; choose from {METHODS}")


def dfsm_flops(method: str, arch, image_size: int) -> float:
    """MFLOPs."""
    return dfsm_flops_exact(method, arch, image_size) / MFLOP


def backbone_flops(arch, image_size: int) -> float:
    """MAC count of a plain (non-overlapping) ViT forward pass, in MFLOPs."""
    a = get_arch(arch)
    side = _grid_side(image_size, a.patch, a.patch)
    n = side * side
    seq = n + 1
    D = a.width
    blocks = a.depth * (12 * seq * D * D + 2 * seq * seq * D)
    embed = n * D * 3 * a.patch * a.patch
    return (blocks + embed) / MFLOP


@dataclass(frozen=True)
class CostEntry:
    method: str
    arch: str
    image_size: int
    flops: float  # MFLOPs
    pct_backbone: float

    @property
    def flops_display(self) -> str:
        return sci2(self.flops)


@dataclass
class CostReport:
    entries: list[CostEntry]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def get(self, method: str, arch: str, image_size: int) -> CostEntry:
        for e in self.entries:
            if (e.method, e.arch, e.image_size) == (method, arch, image_size):
                return e
        raise KeyError((method, arch, image_size))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "arch", "image_size", "flops_mflops", "pct_backbone"])
        for e in self.entries:
            w.writerow([e.method, e.arch, e.image_size, f"{e.flops:.6g}", f"{e.pct_backbone:.6g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([asdict(e) for e in self.entries], indent=2)

    def to_text(self) -> str:
        """One block per architecture: a FLOPs row then a % of Backbone row per size."""
        lines = []
        archs = list(dict.fromkeys(e.arch for e in self.entries))
        for arch in archs:
            rows = [e for e in self.entries if e.arch == arch]
            methods = list(dict.fromkeys(e.method for e in rows))
            sizes = list(dict.fromkeys(e.image_size for e in rows))
            lines.append(f"ViT {arch}")
            lines.append(_row("DFSM", methods))
            for size in sizes:
                cells = {e.method: e for e in rows if e.image_size == size}
                lines.append(_row(f"FLOPs (IS={size})", [cells[m].flops_display for m in methods]))
                lines.append(_row("% of Backbone", [f"{cells[m].pct_backbone:.5g}" for m in methods]))
            lines.append("")
        return "\n".join(lines)


def _row(label, cells):
    return f"{label:<18}" + "".join(f"{c:>12}" for c in cells)


def sci2(x: float) -> str:
    """Two significant figures in scientific notation, e.g. 8.2e+03."""
    return f"{x:.1e}"


def round_sig(x: float, sig: int = 2) -> float:
    """Round to ``sig`` significant figures (decimal rounding of the printed form)."""
    return float(f"{x:.{sig - 1}e}")


def cost_table(archs=PAPER_ARCHS, image_sizes=PAPER_SIZES, methods=METHODS) -> CostReport:
    entries = []
    for arch in archs:
        a = get_arch(arch)
        for size in image_sizes:
            bb = backbone_flops(a, size)
            for m in methods:
                f = dfsm_flops(m, a, size)
                entries.append(CostEntry(m, a.name, size, f, 100.0 * f / bb))
    return CostReport(entries)


def relative_error(acc: float, acc_ref: float) -> float:
    """Relative change in classification error (percent); negative means fewer errors."""
    if acc_ref >= 100:
        raise InvalidConfigError("reference accuracy of 100% leaves no error to compare against")
    if acc > 100:
        raise InvalidConfigError(f"accuracy {acc} exceeds 100%")
    return 100.0 * ((100.0 - acc) - (100.0 - acc_ref)) / (100.0 - acc_ref)
