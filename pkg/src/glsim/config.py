"""Architecture hyperparameters and patch-grid geometry."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from glsim.errors import InvalidConfigError


@dataclass(frozen=True)
class ArchConfig:
    patch_size: int
    depth: int
    heads: int
    width: int
    image_w: int
    image_h: int
    num_classes: int
    top_o: int = 8
    stride: int | None = None
    mlp_ratio: int = 4
    cls_variants: int = 2

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.patch_size)
        self.validate()

    def validate(self):
        p, s = self.patch_size, self.stride
        if p < 1:
            raise InvalidConfigError(f"patch_size must be >= 1, got {p}")
        if not 1 <= s <= p:
            raise InvalidConfigError(f"stride must lie in [1, {p}], got {s}")
        for name in ("depth", "heads", "width", "num_classes", "top_o", "mlp_ratio", "cls_variants"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.width % self.heads:
            raise InvalidConfigError(f"width {self.width} not divisible by heads {self.heads}")
        if self.image_w < p or self.image_h < p:
            raise InvalidConfigError(
                f"image {self.image_w}x{self.image_h} smaller than patch {p}"
            )
        if self.top_o > self.num_patches:
            raise InvalidConfigError(f"top_o {self.top_o} exceeds patch count {self.num_patches}")

    @property
    def grid(self) -> tuple[int, int]:
        return grid_dims(self)

    @property
    def num_patches(self) -> int:
        rows, cols = grid_dims(self)
        return rows * cols

    @property
    def seq_len(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.width // self.heads

    def replace(self, **changes) -> "ArchConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from None


def grid_dims(config: ArchConfig) -> tuple[int, int]:
    """(rows, cols) of the patch grid; windows may overlap when stride < patch."""
    p, s = config.patch_size, config.stride
    if config.image_w < p or config.image_h < p:
        raise InvalidConfigError(f"image {config.image_w}x{config.image_h} smaller than patch {p}")
    rows = (config.image_h - p) // s + 1
    cols = (config.image_w - p) // s + 1
    return rows, cols


def _preset(patch, depth, heads, width, size=224, num_classes=1000, top_o=8):
    return ArchConfig(
        patch_size=patch, depth=depth, heads=heads, width=width,
        image_w=size, image_h=size, num_classes=num_classes, top_o=top_o,
    )


PRESETS: dict[str, ArchConfig] = {
    "B-16": _preset(16, 12, 12, 768),
    "B-14": _preset(14, 12, 12, 768),
    "T-16": _preset(16, 12, 3, 192),
    "toy": _preset(4, 2, 2, 16, size=32, num_classes=5, top_o=4),
}


def preset(name: str, image_size: int | None = None, scale_top_o: bool = True) -> ArchConfig:
    """Look up a preset, optionally at a different square image size.

    With ``scale_top_o`` the preset's O grows in proportion to the image side
    (O=8 at 224 becomes 16 at 448).
    """
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidConfigError(
            f"unknown architecture preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None
    if image_size is None or image_size == base.image_w:
        return base
    top_o = base.top_o
    if scale_top_o:
        top_o = max(1, round(base.top_o * image_size / base.image_w))
    return base.replace(image_w=image_size, image_h=image_size, top_o=top_o)
