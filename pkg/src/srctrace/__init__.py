"""Source speaker tracing against voice conversion with speaker contrastive learning."""

__version__ = "0.1.0"
