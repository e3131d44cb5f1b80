"""Cross-domain object detection with pixel- and feature-level adaptation."""

__version__ = "0.1.0"
