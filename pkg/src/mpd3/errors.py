"""Exception types raised across the package."""


class MPD3Error(Exception):
    """Base class for all package errors."""


class EmptySubdomain(MPD3Error):
    pass


class CoincidentCenters(MPD3Error):
    pass


class NoConvergence(MPD3Error):
    def __init__(self, message, decomposition=None, iterations=0):
        super().__init__(message)
        self.decomposition = decomposition
        self.iterations = iterations


class DegenerateTiming(MPD3Error):
    pass


class SingularPair(MPD3Error):
    pass


class MigrationAcrossNonNeighbors(MPD3Error):
    pass


class ParseError(MPD3Error):
    pass


class ScenarioError(MPD3Error):
    pass
