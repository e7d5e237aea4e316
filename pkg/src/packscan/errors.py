"""Exception hierarchy for the packscan pipeline."""


class PackscanError(Exception):
    """Base class for all pipeline errors."""


# --- scan layout CSV ---

class LayoutError(PackscanError):
    pass


class EmptyLayout(LayoutError):
    pass


class DuplicateIdentifier(LayoutError):
    def __init__(self, identifier):
        super().__init__(f"identifier {identifier!r} appears more than once")
        self.identifier = identifier


class RaggedTier(LayoutError):
    def __init__(self, tier):
        super().__init__(f"tier {tier} has rows of unequal length")
        self.tier = tier


class NonConsecutiveTiers(LayoutError):
    def __init__(self, tiers):
        super().__init__(f"tier indices {sorted(tiers)} are not consecutive from 1")
        self.tiers = tiers


class OutOfBounds(LayoutError):
    pass


# --- slice stacks and stores ---

class VolumeError(PackscanError):
    pass


class NoSlices(VolumeError):
    pass


class InconsistentDimensions(VolumeError):
    def __init__(self, file, got, expected):
        super().__init__(f"{file}: slice is {got}, expected {expected}")
        self.file = file


class UnsupportedSampleType(VolumeError):
    def __init__(self, file, dtype):
        super().__init__(f"{file}: sample type {dtype} is not 16-bit unsigned grayscale")
        self.file = file


class OutOfRange(VolumeError):
    pass


class DecodeError(VolumeError):
    def __init__(self, file, cause):
        super().__init__(f"failed to decode {file}: {cause}")
        self.file = file


class RangeOutOfBounds(VolumeError):
    pass


class DimsMismatch(VolumeError):
    pass


class NotRegistered(VolumeError):
    def __init__(self, identifier):
        super().__init__(f"object {identifier!r} is not registered in the store")
        self.identifier = identifier


class NonContiguousAppend(VolumeError):
    pass


class NotFinalized(VolumeError):
    def __init__(self, identifier):
        super().__init__(f"subvolume {identifier!r} has not been finalized")
        self.identifier = identifier


class ExceedsMemoryBudget(VolumeError):
    def __init__(self, needed, budget):
        super().__init__(f"load needs {needed} bytes but budget is {budget}")
        self.needed = needed
        self.budget = budget


# --- bounding-box segmentation ---

class SegmentationError(PackscanError):
    pass


class InsufficientPeaks(SegmentationError):
    def __init__(self, found, needed):
        super().__init__(
            f"found {found} tier-boundary peaks, need {needed}; manual cuts required"
        )
        self.found = found
        self.needed = needed


class DegenerateMask(SegmentationError):
    pass


class FlatObjective(SegmentationError):
    pass


class PeakCountMismatch(SegmentationError):
    def __init__(self, axis, found, expected):
        super().__init__(
            f"{axis} projection has {found} grid peaks, expected {expected}; "
            "manual cuts required"
        )
        self.axis = axis
        self.found = found
        self.expected = expected


class OutOfBoundsAfterClamp(SegmentationError):
    def __init__(self, identifier):
        super().__init__(f"box for {identifier!r} is empty after clamping to scan bounds")
        self.identifier = identifier


# --- surfacing ---

class SurfaceError(PackscanError):
    pass


class EmptyMesh(SurfaceError):
    pass


class EmptyAfterClean(SurfaceError):
    pass


class WriteError(SurfaceError):
    pass


# --- synthetic scenes ---

class SpecInvalid(PackscanError):
    def __init__(self, reason):
        super().__init__(f"invalid scene spec: {reason}")
        self.reason = reason


class UnknownIdentifier(PackscanError):
    pass


# --- pipeline orchestration ---

class SessionError(PackscanError):
    pass


class MissingDecision(SessionError):
    def __init__(self, step, what=""):
        detail = f" ({what})" if what else ""
        super().__init__(f"step {step!r} needs a human decision{detail} and none was provided")
        self.step = step


class StepFailed(SessionError):
    def __init__(self, step, cause):
        super().__init__(f"step {step!r} failed: {cause}")
        self.step = step
        self.cause = cause
