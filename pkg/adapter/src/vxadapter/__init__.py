"""Foundation-model adapter: raw driving captures in, pipeline interchange
files (depth maps, detection sets, manifest) out."""

__version__ = "0.1.0"

from vxadapter.config import AdapterConfig, PROMPTS  # noqa: F401
from vxadapter.export import ExportResult, export_sequence  # noqa: F401
