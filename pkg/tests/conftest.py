import numpy as np
import pytest

from voxlab.scene import ClassDef, ClassTable, GridSpec


@pytest.fixture
def unit_grid():
    """8x8x8 grid of 1 m cells with its min corner at the origin."""
    return GridSpec(np.zeros(3), 1.0, (8, 8, 8))


@pytest.fixture
def tiny_classes():
    """Minimal vocabulary: ground / wall / cone (tier 0) / actor (dynamic)."""
    return ClassTable([
        ClassDef(id=0, name="ground", priority_tier=1),
        ClassDef(id=1, name="wall", priority_tier=1),
        ClassDef(id=2, name="cone", priority_tier=0),
        ClassDef(id=3, name="actor", dynamic=True, priority_tier=1),
        ClassDef(id=4, name="unlabeled", priority_tier=9),
        ClassDef(id=5, name="empty", priority_tier=9),
    ])
