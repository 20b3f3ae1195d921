from .mpii import RecordError, convert_mpii, load_release, record_to_image, validate_annotations

__version__ = "0.1.0"

__all__ = [
    "RecordError",
    "convert_mpii",
    "load_release",
    "record_to_image",
    "validate_annotations",
]
