"""Frame-embedding exporter for base-size SSL speech models."""

from .export import AudioFormatError, ExportJob, ModelLoadError, export

__all__ = ["AudioFormatError", "ExportJob", "ModelLoadError", "export"]

__version__ = "0.1.0"
