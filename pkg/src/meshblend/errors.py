"""Exception types shared across the library."""


class MeshError(Exception):
    """Invalid mesh topology or geometry (non-triangle faces, degenerate faces)."""


class SolverError(Exception):
    """Poisson solve failed (singular/disconnected system or residual too large)."""


class BankError(Exception):
    """Exemplar bank construction or token resolution failed."""


class LocalizationError(Exception):
    """Localized-deformation state is unusable (e.g. empty vertex mask)."""


class ConfigError(Exception):
    """Run configuration failed schema validation."""
