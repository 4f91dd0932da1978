"""Exporter error taxonomy."""


class ExporterError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExporterError):
    """Encoder checkpoint could not be loaded (bad id, or offline)."""


class DecodeError(ExporterError):
    """An image file could not be decoded."""


class EmptyPromptFile(ExporterError):
    """Prompt file contains no prompts."""


class LabelFileError(ExporterError):
    """Label CSV is malformed or does not cover every image id."""
