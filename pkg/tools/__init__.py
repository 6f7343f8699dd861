# tools package
from . import example_instances, io_formats, verify_suites

__all__ = ["example_instances", "io_formats", "verify_suites"]
