"""embed_extract: batch VLM embedding extraction into WISEMAT1 files."""

from .extract import ExtractionJob, run_extraction
from .wisemat import write_f32

__version__ = "0.1.0"
