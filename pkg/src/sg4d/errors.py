"""Exception types shared across the toolkit."""

from __future__ import annotations


class Sg4dError(Exception):
    """Base class for all toolkit errors."""


class MalformedRle(Sg4dError):
    """Run-length data does not describe a mask of the stated size."""


class ShapeMismatch(Sg4dError):
    """Two masks or tubes have incompatible pixel dimensions."""


class KindMismatch(Sg4dError):
    """Mask-mode and point-mode tubes were mixed in one operation."""


class DimensionMismatch(Sg4dError):
    """Depth / RGB / intrinsics dimensions disagree."""


class InvalidThreshold(Sg4dError):
    """A threshold parameter is outside its legal range."""


class InvalidVoxelSize(Sg4dError):
    """Voxel edge length must be strictly positive."""


class EmptyMatrix(Sg4dError):
    """Assignment requested on a cost matrix with no rows or no columns."""


class MissingTrajectory(Sg4dError):
    """Geometric data required by a relation rule is absent for an entity."""


class VocabularyMismatch(Sg4dError):
    """Two graphs were written against different vocabularies."""


class NoGroundTruth(Sg4dError):
    """A mean over ground-truth predicates was requested but none exist."""


class DuplicateVideoId(Sg4dError):
    """The same video id appears twice in one evaluation batch."""


class FrustumViolation(Sg4dError):
    """A scripted object leaves the camera frustum or is never visible."""


class MissingFile(Sg4dError):
    """A file required by the dataset layout does not exist."""


class ChecksumMismatch(Sg4dError):
    """A graph references a vocabulary other than the manifest's."""


class SchemaViolation(Sg4dError):
    """A document violates the on-disk schema.

    Carries the offending file path and a human-readable reason.
    """

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason
