"""Adapter configuration and the detector prompt vocabulary."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

# Per-class text prompts for the open-vocabulary detector.  Each class is
# queried individually, paired with the generic background token, so the
# detector always has a high-confidence alternative when the queried object
# is absent.  Must stay in sync with the label pipeline's class table.
PROMPTS: dict[str, tuple[str, ...]] = {
    "barrier": ("barricade", "barrier"),
    "bicycle": ("bicycle",),
    "bus": ("bus",),
    "car": ("car", "sedan", "van"),
    "construction_vehicle": ("excavator", "crane"),
    "motorcycle": ("motorcycle", "scooter"),
    "pedestrian": ("person", "pedestrian"),
    "traffic_cone": ("traffic-cone",),
    "trailer": ("trailer",),
    "truck": ("lorry", "truck"),
    "driveable_surface": ("highway", "street", "roadmarking"),
    "sidewalk": ("sidewalk", "walkway"),
    "terrain": ("turf", "grass", "sand"),
    "manmade": ("building", "wall", "fence", "pole", "sign", "light", "bridge", "billboard"),
    "vegetation": ("bush", "plants", "tree"),
}

# Class ids in the pipeline's default table (prompted classes only; the
# reserved unlabeled/empty ids follow these).
CLASS_IDS: dict[str, int] = {name: i for i, name in enumerate(PROMPTS)}

BACKGROUND_TOKEN = "sky"
BACKGROUND_CLASS = -1


@dataclass
class AdapterConfig:
    dataset_root: Path
    sequence: str
    output_dir: Path
    prompts: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(PROMPTS))
    background_token: str = BACKGROUND_TOKEN
    logit_threshold: float = 0.2       # forwarded to the fusion step
    fuse_command: tuple[str, ...] = ("voxlab",)
    backend_options: dict = field(default_factory=dict)

    def queries(self) -> list[tuple[int, str]]:
        """(class_id, 'PROMPT . <background>') detector queries, one per prompt."""
        out = []
        for name, prompts in self.prompts.items():
            for p in prompts:
                out.append((CLASS_IDS[name], f"{p} . {self.background_token}"))
        return out
