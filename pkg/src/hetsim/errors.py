"""Exception and warning types shared across the simulator.

Fatal conditions are exceptions. Conditions real hardware would silently
tolerate (writes to read-only bits, a start pulse on a busy core) are
warnings so host programs keep running.
"""


class SimError(Exception):
    """Base class for every fatal simulator error."""


# fabric
class BusError(SimError):
    """Access to an unmapped, misaligned or out-of-range address."""


class BadSlot(SimError):
    pass


class SlotOccupied(SimError):
    pass


class OutOfFabricMemory(SimError):
    pass


class BadFree(SimError):
    pass


# surf datapath
class BadImage(SimError):
    pass


class BadPyramid(SimError):
    pass


class LayerSkipped(SimError):
    """Filter does not fit inside the image; the layer carries no responses."""


class OrientationUndefined(SimError):
    pass


class DescriptorUndefined(SimError):
    pass


# runtime
class ConfigFileNotFound(SimError):
    pass


class BadManifest(SimError):
    pass


class UnknownParameter(SimError):
    pass


class Busy(SimError):
    """Host API call needs an idle core."""


class NotRunning(SimError):
    """wait_done on a core that has no run in flight."""


class SimWarning(UserWarning):
    pass


class WriteIgnored(SimWarning):
    pass


class StartIgnored(SimWarning):
    pass
