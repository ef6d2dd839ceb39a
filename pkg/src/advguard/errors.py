"""Exception types shared across the package."""


class AdvGuardError(Exception):
    """Base class for all library errors."""


class DimensionError(AdvGuardError, ValueError):
    """Raster or matrix dimensions are empty, mismatched, or unusable."""


class BoundsError(AdvGuardError, ValueError):
    """A crop box or index range does not fit inside its target."""


class ConfigurationError(AdvGuardError, ValueError):
    """Invalid configuration value, unknown key, or inconsistent setup."""


class ManifestError(AdvGuardError, ValueError):
    """Corpus manifest file is malformed or references missing images."""


class IngestionError(AdvGuardError, ValueError):
    """External feature file does not line up with the manifest."""


class TrainingError(AdvGuardError, ValueError):
    """Model fitting received unusable inputs, e.g. a single class."""


class DomainError(AdvGuardError, ValueError):
    """Numeric argument outside the mathematical domain of the operation."""


class UnsupportedDetectorError(AdvGuardError, TypeError):
    """Detector cannot serve in this role, e.g. transductive models at the gate."""


class ExperimentError(AdvGuardError, RuntimeError):
    """Failure inside an experiment cell, annotated with the cell coordinates."""


class PipelineError(AdvGuardError, RuntimeError):
    """A pipeline stage is missing inputs or failed an artifact consistency check."""
