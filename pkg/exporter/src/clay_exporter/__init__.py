"""Bridge from real datasets to the retrieval engine's file formats."""

from .encoders import DevHashEncoder, HubVLMEncoder, load_encoder
from .errors import (
    DecodeError,
    EmptyPromptFile,
    ExporterError,
    LabelFileError,
    ModelLoadError,
)
from .jobs import ExportJob, export_images, export_prompts

__version__ = "0.1.0"

__all__ = [
    "DevHashEncoder",
    "DecodeError",
    "EmptyPromptFile",
    "ExportJob",
    "ExporterError",
    "HubVLMEncoder",
    "LabelFileError",
    "ModelLoadError",
    "export_images",
    "export_prompts",
    "load_encoder",
]
